#pragma once

// Representation diagnostics over a fixed 11 x 11 lattice of Mountain Car
// states: per-unit activation heatmaps and the pairwise gradient dot
// product interference measure.

#include "dsomrl/agents.hpp"
#include "dsomrl/envs.hpp"
#include "dsomrl/nncore.hpp"

#include <cstddef>
#include <vector>

namespace dsomrl {

/// Probe state k = 11 * x + y is (-1.2 + 0.17 x, -0.07 + 0.014 y), x, y in 0..10.
struct ProbeGrid {
    static constexpr std::size_t kSide = 11;
    static constexpr std::size_t kSize = kSide * kSide;
    std::vector<Vector> states;  // raw units

    static ProbeGrid mountain_car() {
        ProbeGrid g;
        g.states.reserve(kSize);
        for (std::size_t x = 0; x < kSide; ++x)
            for (std::size_t y = 0; y < kSide; ++y) {
                Vector s(2);
                s << -1.2 + 0.17 * static_cast<double>(x), -0.07 + 0.014 * static_cast<double>(y);
                g.states.push_back(s);
            }
        return g;
    }

    std::size_t size() const { return states.size(); }
};

inline ProbeGrid probe_grid() { return ProbeGrid::mountain_car(); }

/// values(u, k): activation of hidden unit u at probe state k, scaled so each
/// unit's maximum is 1. All-zero rows stay zero.
struct HeatmapMatrix {
    Matrix values;  // [H x probes]
};

/// Scales every row by its own maximum; rows whose max is <= 0 are left alone.
inline Matrix normalize_rows_by_max(Matrix m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        const double mx = m.row(r).maxCoeff();
        if (mx > 0.0) m.row(r) /= mx;
    }
    return m;
}

/// Masked hidden activations (plain ReLU output for agents without a map).
inline HeatmapMatrix activation_heatmap(const Agent& agent, const ProbeGrid& grid) {
    const auto H = static_cast<Eigen::Index>(agent.network().hidden_dim());
    Matrix raw(H, static_cast<Eigen::Index>(grid.size()));
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const Vector s = MountainCar::normalize_features(grid.states[k]);
        raw.col(static_cast<Eigen::Index>(k)) = agent.evaluate(s).masked_hidden;
    }
    return {normalize_rows_by_max(std::move(raw))};
}

/// Mean over units with any activation of the share of probe states whose
/// normalized activation exceeds `threshold`. Lower means more local units.
inline double activation_support(const HeatmapMatrix& hm, double threshold = 0.1) {
    double total = 0.0;
    std::size_t live = 0;
    for (Eigen::Index r = 0; r < hm.values.rows(); ++r) {
        if (hm.values.row(r).maxCoeff() <= 0.0) continue;
        total += static_cast<double>((hm.values.row(r).array() > threshold).count()) /
                 static_cast<double>(hm.values.cols());
        ++live;
    }
    return live == 0 ? 0.0 : total / static_cast<double>(live);
}

enum class GradientTarget {
    GreedyAction,  // d q(s, argmax_a q(s, a)) / d theta
    SumActions,    // d sum_a q(s, a) / d theta
};

struct PairValue {
    std::size_t i = 0;
    std::size_t j = 0;
    double dot = 0.0;
};

struct InterferenceReport {
    double mean_pairwise = 0.0;
    std::vector<PairValue> pairs;  // i < j, lexicographic
    bool normalized = true;
    std::vector<std::size_t> zero_gradient_states;  // only filled in normalized mode
};

/// Flattened per-state gradient of the chosen value w.r.t. every parameter.
inline Vector state_value_gradient(const Agent& agent, const Vector& normalized_state,
                                   GradientTarget target) {
    const NetworkParams& net = agent.network();
    const ForwardTrace tr = agent.evaluate(normalized_state);
    ParamGrads g = ParamGrads::zeros_like(net);
    if (target == GradientTarget::GreedyAction) {
        backward_accumulate(net, tr, argmax(tr.q), 1.0, g);
    } else {
        for (std::size_t a = 0; a < net.action_count(); ++a) backward_accumulate(net, tr, a, 1.0, g);
    }
    Vector flat(static_cast<Eigen::Index>(net.parameter_count()));
    Eigen::Index o = 0;
    auto put = [&](const auto& m) {
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) flat(o++) = m(r, c);
    };
    put(g.w1);
    put(g.b1);
    put(g.w2);
    put(g.b2);
    return flat;
}

/// Gram matrix of per-state gradients, averaged over all unique pairs.
/// In normalized mode each gradient is scaled to unit length first; states
/// with an all-zero gradient contribute 0 to every pair and are reported.
inline InterferenceReport interference(const Agent& agent, const ProbeGrid& grid,
                                       bool normalize = true,
                                       GradientTarget target = GradientTarget::GreedyAction) {
    const auto n = static_cast<Eigen::Index>(grid.size());
    const auto P = static_cast<Eigen::Index>(agent.network().parameter_count());
    Matrix G(n, P);
    InterferenceReport rep;
    rep.normalized = normalize;
    for (Eigen::Index k = 0; k < n; ++k) {
        Vector g = state_value_gradient(
            agent, MountainCar::normalize_features(grid.states[static_cast<std::size_t>(k)]), target);
        if (normalize) {
            const double len = g.norm();
            if (len > 0.0) {
                g /= len;
            } else {
                rep.zero_gradient_states.push_back(static_cast<std::size_t>(k));
            }
        }
        G.row(k) = g.transpose();
    }
    const Matrix gram = G * G.transpose();
    rep.pairs.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
    double sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j) {
            rep.pairs.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(j), gram(i, j)});
            sum += gram(i, j);
        }
    rep.mean_pairwise = rep.pairs.empty() ? 0.0 : sum / static_cast<double>(rep.pairs.size());
    return rep;
}

}  // namespace dsomrl
