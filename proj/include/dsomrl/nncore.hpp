#pragma once

// One-hidden-layer ReLU network with a linear output layer, an optional
// element-wise mask on the hidden activations, and hand-written backprop.
//
//   q = w2 * (mask .* relu(w1 * x + b1)) + b2
//
// The mask is treated as a constant with respect to the weights.

#include "dsomrl/common.hpp"

#include <cstddef>
#include <string>

namespace dsomrl {

struct NetworkParams {
    Matrix w1;  // [H x D]
    Vector b1;  // [H]
    Matrix w2;  // [A x H]
    Vector b2;  // [A]

    // Bumped by every in-place modification (optimizers, target syncs) so
    // a ForwardTrace can tell whether it still describes these weights.
    std::uint64_t revision = 0;

    std::size_t input_dim() const { return static_cast<std::size_t>(w1.cols()); }
    std::size_t hidden_dim() const { return static_cast<std::size_t>(w1.rows()); }
    std::size_t action_count() const { return static_cast<std::size_t>(w2.rows()); }

    std::size_t parameter_count() const {
        return static_cast<std::size_t>(w1.size() + b1.size() + w2.size() + b2.size());
    }

    bool finite() const {
        return w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite();
    }

    void check_shapes() const {
        if (w1.rows() == 0 || w1.cols() == 0 || w2.rows() == 0)
            throw ConfigError("network has a zero dimension");
        if (b1.size() != w1.rows() || w2.cols() != w1.rows() || b2.size() != w2.rows())
            throw ConfigError("inconsistent network parameter shapes");
    }
};

/// Intermediates of one forward pass, kept for backward().
struct ForwardTrace {
    Vector input;
    Vector pre_act;
    Vector hidden;
    Vector mask;
    Vector masked_hidden;
    Vector q;
    std::uint64_t revision = 0;
};

/// Gradient with the same layout as NetworkParams.
struct ParamGrads {
    Matrix w1;
    Vector b1;
    Matrix w2;
    Vector b2;

    static ParamGrads zeros_like(const NetworkParams& p) {
        return {Matrix::Zero(p.w1.rows(), p.w1.cols()), Vector::Zero(p.b1.size()),
                Matrix::Zero(p.w2.rows(), p.w2.cols()), Vector::Zero(p.b2.size())};
    }

    bool matches(const NetworkParams& p) const {
        return w1.rows() == p.w1.rows() && w1.cols() == p.w1.cols() &&
               b1.size() == p.b1.size() && w2.rows() == p.w2.rows() &&
               w2.cols() == p.w2.cols() && b2.size() == p.b2.size();
    }

    bool finite() const {
        return w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite();
    }

    ParamGrads& operator+=(const ParamGrads& o) {
        w1 += o.w1;
        b1 += o.b1;
        w2 += o.w2;
        b2 += o.b2;
        return *this;
    }

    ParamGrads& operator*=(double c) {
        w1 *= c;
        b1 *= c;
        w2 *= c;
        b2 *= c;
        return *this;
    }

    double dot(const ParamGrads& o) const {
        return w1.cwiseProduct(o.w1).sum() + b1.dot(o.b1) + w2.cwiseProduct(o.w2).sum() +
               b2.dot(o.b2);
    }

    double squared_norm() const {
        return w1.squaredNorm() + b1.squaredNorm() + w2.squaredNorm() + b2.squaredNorm();
    }
};

namespace detail {

inline void check_input(const NetworkParams& params, const Vector& input) {
    if (static_cast<std::size_t>(input.size()) != params.input_dim())
        throw ConfigError("input has " + std::to_string(input.size()) +
                          " features, network expects " + std::to_string(params.input_dim()));
    if (!input.allFinite()) throw InputError("non-finite network input");
}

inline ForwardTrace forward_impl(const NetworkParams& params, const Vector& input,
                                 const Vector* mask) {
    params.check_shapes();
    check_input(params, input);
    ForwardTrace t;
    t.revision = params.revision;
    t.input = input;
    t.pre_act = params.w1 * input + params.b1;
    t.hidden = t.pre_act.cwiseMax(0.0);
    if (mask) {
        t.mask = *mask;
        t.masked_hidden = t.hidden.cwiseProduct(*mask);
    } else {
        t.mask = Vector::Ones(t.hidden.size());
        t.masked_hidden = t.hidden;
    }
    t.q = params.w2 * t.masked_hidden + params.b2;
    return t;
}

}  // namespace detail

/// Masked forward pass. Mask entries must lie in [0, 1].
inline ForwardTrace forward(const NetworkParams& params, const Vector& input, const Vector& mask) {
    params.check_shapes();
    if (static_cast<std::size_t>(mask.size()) != params.hidden_dim())
        throw ConfigError("mask has " + std::to_string(mask.size()) + " entries, network has " +
                          std::to_string(params.hidden_dim()) + " hidden units");
    if (!mask.allFinite() || mask.minCoeff() < 0.0 || mask.maxCoeff() > 1.0)
        throw InputError("mask entries must lie in [0, 1]");
    return detail::forward_impl(params, input, &mask);
}

/// Unmasked forward pass.
inline ForwardTrace forward(const NetworkParams& params, const Vector& input) {
    return detail::forward_impl(params, input, nullptr);
}

namespace detail {

inline void check_trace(const NetworkParams& params, const ForwardTrace& trace,
                        std::size_t action) {
    if (trace.revision != params.revision)
        throw ContractError("forward trace is stale: parameters changed since it was recorded");
    if (static_cast<std::size_t>(trace.input.size()) != params.input_dim() ||
        static_cast<std::size_t>(trace.hidden.size()) != params.hidden_dim() ||
        static_cast<std::size_t>(trace.q.size()) != params.action_count())
        throw ContractError("forward trace does not match network shape");
    if (action >= params.action_count())
        throw ContractError("action " + std::to_string(action) + " out of range");
}

}  // namespace detail

/// Adds the gradient of out_grad * q[action] into `acc`.
inline void backward_accumulate(const NetworkParams& params, const ForwardTrace& trace,
                                std::size_t action, double out_grad, ParamGrads& acc) {
    detail::check_trace(params, trace, action);
    if (!acc.matches(params)) throw ContractError("gradient accumulator shape mismatch");

    const auto a = static_cast<Eigen::Index>(action);
    acc.b2(a) += out_grad;
    acc.w2.row(a) += out_grad * trace.masked_hidden.transpose();

    // d/d(pre_act) = out_grad * w2[a,:] * mask * relu'(pre_act), relu'(0) = 0
    Vector delta = out_grad * params.w2.row(a).transpose();
    delta = delta.cwiseProduct(trace.mask);
    for (Eigen::Index i = 0; i < delta.size(); ++i)
        if (trace.pre_act(i) <= 0.0) delta(i) = 0.0;
    acc.b1 += delta;
    acc.w1.noalias() += delta * trace.input.transpose();
}

/// Gradient of out_grad * q[action] with respect to every parameter.
inline ParamGrads backward(const NetworkParams& params, const ForwardTrace& trace,
                           std::size_t action, double out_grad) {
    ParamGrads g = ParamGrads::zeros_like(params);
    backward_accumulate(params, trace, action, out_grad, g);
    return g;
}

/// He-uniform hidden layer, Xavier-uniform output layer, zero biases.
inline NetworkParams init_network(std::size_t input_dim, std::size_t hidden, std::size_t actions,
                                  Rng& rng) {
    if (input_dim == 0 || hidden == 0 || actions == 0)
        throw ConfigError("network dimensions must be >= 1");
    const auto D = static_cast<Eigen::Index>(input_dim);
    const auto H = static_cast<Eigen::Index>(hidden);
    const auto A = static_cast<Eigen::Index>(actions);
    NetworkParams p;
    p.w1.resize(H, D);
    p.w2.resize(A, H);
    const double he = std::sqrt(6.0 / static_cast<double>(input_dim));
    const double xavier = std::sqrt(6.0 / static_cast<double>(hidden + actions));
    for (Eigen::Index i = 0; i < H; ++i)
        for (Eigen::Index j = 0; j < D; ++j) p.w1(i, j) = uniform(rng, -he, he);
    for (Eigen::Index i = 0; i < A; ++i)
        for (Eigen::Index j = 0; j < H; ++j) p.w2(i, j) = uniform(rng, -xavier, xavier);
    p.b1 = Vector::Zero(H);
    p.b2 = Vector::Zero(A);
    return p;
}

}  // namespace dsomrl
