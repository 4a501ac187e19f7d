#pragma once

// Dynamic self-organizing map. Unlike a classic SOM there is no step counter:
// the learning rate and the neighbourhood width depend only on how far the
// input is from its best matching unit, so the map keeps tracking a
// non-stationary input stream.
//
// Inputs are expected to be pre-normalized to [0, 1] per dimension.
// ||.||_omega is the Euclidean distance divided by sqrt(d), so it lies in
// [0, 1] on that cube. The output mask uses the plain Euclidean distance,
// measured in feature units: a map with feature_span s treats the cube as
// [0, s]^d, which only rescales the mask (the update is scale-free).

#include "dsomrl/common.hpp"

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace dsomrl {

struct DsomParams {
    double epsilon = 0.25;  // learning rate
    double eta = 1.0;       // elasticity
    double kappa = 0.5;     // mask temperature
    double feature_span = 1.0;
};

class DsomMap {
public:
    /// Distances below this (in the omega norm) count as an exact hit on
    /// the BMU and the update is skipped.
    static constexpr double kSingularTol = 1e-9;

    DsomMap(Matrix vectors, Matrix positions, double epsilon, double eta, double kappa,
            double feature_span = 1.0)
        : vectors_(std::move(vectors)), positions_(std::move(positions)), epsilon_(epsilon),
          eta_(eta), kappa_(kappa), span_(feature_span) {
        if (vectors_.rows() < 1 || vectors_.cols() < 1)
            throw ConfigError("DSOM needs at least one node of dimension >= 1");
        if (positions_.rows() != vectors_.rows() || positions_.cols() != 2)
            throw ConfigError("DSOM positions must be an [N x 2] matrix");
        if (!(epsilon_ > 0.0) || !(eta_ > 0.0) || !(kappa_ > 0.0) || !std::isfinite(epsilon_) ||
            !std::isfinite(eta_) || !std::isfinite(kappa_))
            throw ConfigError("DSOM epsilon, eta and kappa must be finite and > 0");
        if (!(span_ > 0.0) || !std::isfinite(span_))
            throw ConfigError("DSOM feature span must be finite and > 0");
        if (!vectors_.allFinite() || !positions_.allFinite())
            throw ConfigError("DSOM vectors and positions must be finite");
    }

    std::size_t size() const { return static_cast<std::size_t>(vectors_.rows()); }
    std::size_t dim() const { return static_cast<std::size_t>(vectors_.cols()); }
    double epsilon() const { return epsilon_; }
    double eta() const { return eta_; }
    double kappa() const { return kappa_; }
    double feature_span() const { return span_; }
    const Matrix& vectors() const { return vectors_; }
    const Matrix& positions() const { return positions_; }

    /// Index of the node closest to v. Ties go to the lowest index.
    std::size_t bmu(const Vector& v) const {
        check_dim(v);
        std::size_t best = 0;
        double best_d2 = (vectors_.row(0).transpose() - v).squaredNorm();
        for (Eigen::Index i = 1; i < vectors_.rows(); ++i) {
            const double d2 = (vectors_.row(i).transpose() - v).squaredNorm();
            if (d2 < best_d2) {
                best_d2 = d2;
                best = static_cast<std::size_t>(i);
            }
        }
        return best;
    }

    double omega_distance(const Vector& v, std::size_t i) const {
        return (v - vectors_.row(static_cast<Eigen::Index>(i)).transpose()).norm() /
               std::sqrt(static_cast<double>(dim()));
    }

    /// h(i, b, v) = exp(-|p_i - p_b|^2 / (eta^2 |v - w_b|_omega^2))
    double neighborhood(std::size_t i, std::size_t b, const Vector& v) const {
        check_index(i);
        check_index(b);
        check_dim(v);
        const double dist_b = omega_distance(v, b);
        if (dist_b < kSingularTol) return i == b ? 1.0 : 0.0;
        const double grid2 = (positions_.row(static_cast<Eigen::Index>(i)) -
                              positions_.row(static_cast<Eigen::Index>(b)))
                                 .squaredNorm();
        return std::exp(-grid2 / (eta_ * eta_ * dist_b * dist_b));
    }

    /// w_i += epsilon * |v - w_i|_omega * h(i, b, v) * (v - w_i), for every node.
    void update(const Vector& v) {
        check_dim(v);
        if (!v.allFinite()) throw InputError("non-finite DSOM input");
        const std::size_t b = bmu(v);
        const double dist_b = omega_distance(v, b);
        if (dist_b < kSingularTol) return;

        const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(dim()));
        const double denom = eta_ * eta_ * dist_b * dist_b;
        const Eigen::RowVectorXd pb = positions_.row(static_cast<Eigen::Index>(b));
        const Eigen::RowVectorXd vt = v.transpose();
        for (Eigen::Index i = 0; i < vectors_.rows(); ++i) {
            auto w = vectors_.row(i);
            const double dist = (vt - w).norm();
            const double grid2 = (positions_.row(i) - pb).squaredNorm();
            const double h = std::exp(-grid2 / denom);
            const double scale = epsilon_ * dist * inv_sqrt_d * h;
            w += scale * (vt - w);
        }
    }

    /// Gamma_i = exp(-span * |v - w_i| / kappa), each in (0, 1].
    Vector mask(const Vector& v) const {
        check_dim(v);
        const double rate = span_ / kappa_;
        Vector out(vectors_.rows());
        for (Eigen::Index i = 0; i < vectors_.rows(); ++i)
            out(i) = std::exp(-rate * (v - vectors_.row(i).transpose()).norm());
        return out;
    }

    /// Mean distance from each sample to its BMU.
    double quantization_error(std::span<const Vector> batch) const {
        if (batch.empty()) throw InputError("quantization error of an empty batch");
        double total = 0.0;
        for (const auto& v : batch) {
            const auto b = static_cast<Eigen::Index>(bmu(v));
            total += (v - vectors_.row(b).transpose()).norm();
        }
        return total / static_cast<double>(batch.size());
    }

    /// Raw access for checkpoint loading.
    Matrix& mutable_vectors() { return vectors_; }

private:
    void check_dim(const Vector& v) const {
        if (static_cast<std::size_t>(v.size()) != dim())
            throw ConfigError("DSOM input has " + std::to_string(v.size()) +
                              " features, map expects " + std::to_string(dim()));
    }
    void check_index(std::size_t i) const {
        if (i >= size()) throw ContractError("DSOM node index out of range");
    }

    Matrix vectors_;    // [N x d]
    Matrix positions_;  // [N x 2], fixed
    double epsilon_;
    double eta_;
    double kappa_;
    double span_;
};

/// Side length of the square lattice for n nodes, or 0 if n is not a square.
inline std::size_t lattice_side(std::size_t n) {
    auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
    return side * side == n ? side : 0;
}

/// rows x cols lattice scaled into [0,1]^2, row-major over (x, y).
inline Matrix lattice_positions(std::size_t rows, std::size_t cols) {
    if (rows == 0 || cols == 0) throw ConfigError("DSOM lattice needs at least one node");
    Matrix pos(static_cast<Eigen::Index>(rows * cols), 2);
    const double sx = rows > 1 ? 1.0 / static_cast<double>(rows - 1) : 0.0;
    const double sy = cols > 1 ? 1.0 / static_cast<double>(cols - 1) : 0.0;
    for (std::size_t x = 0; x < rows; ++x)
        for (std::size_t y = 0; y < cols; ++y) {
            const auto k = static_cast<Eigen::Index>(x * cols + y);
            pos(k, 0) = static_cast<double>(x) * sx;
            pos(k, 1) = static_cast<double>(y) * sy;
        }
    return pos;
}

/// Square lattice positions for n = m^2 nodes.
inline Matrix lattice_positions(std::size_t n) {
    const std::size_t side = lattice_side(n);
    if (n == 0 || side == 0)
        throw ConfigError("DSOM node count " + std::to_string(n) +
                          " is not a perfect square; 2-D lattices need N = m^2");
    return lattice_positions(side, side);
}

/// Most nearly square factorization rows * cols = n with rows <= cols.
inline std::pair<std::size_t, std::size_t> grid_shape(std::size_t n) {
    if (n == 0) throw ConfigError("DSOM lattice needs at least one node");
    auto rows = static_cast<std::size_t>(std::sqrt(static_cast<double>(n)));
    while (rows > 1 && n % rows != 0) --rows;
    return {rows, n / rows};
}

namespace detail {

inline DsomMap random_map(Matrix pos, std::size_t dim, const DsomParams& hp, Rng& rng) {
    if (dim == 0) throw ConfigError("DSOM input dimension must be >= 1");
    Matrix vec(pos.rows(), static_cast<Eigen::Index>(dim));
    for (Eigen::Index i = 0; i < vec.rows(); ++i)
        for (Eigen::Index j = 0; j < vec.cols(); ++j) vec(i, j) = uniform(rng, 0.0, 1.0);
    return DsomMap(std::move(vec), std::move(pos), hp.epsilon, hp.eta, hp.kappa, hp.feature_span);
}

}  // namespace detail

/// Vectors uniform in [0,1]^d on a sqrt(N) x sqrt(N) lattice.
inline DsomMap init_map(std::size_t nodes, std::size_t dim, const DsomParams& hp, Rng& rng) {
    return detail::random_map(lattice_positions(nodes), dim, hp, rng);
}

/// Like init_map, but any N is accepted: non-square counts get the
/// near-square rows x cols lattice from grid_shape().
inline DsomMap init_map_any(std::size_t nodes, std::size_t dim, const DsomParams& hp, Rng& rng) {
    const auto [rows, cols] = grid_shape(nodes);
    return detail::random_map(lattice_positions(rows, cols), dim, hp, rng);
}

}  // namespace dsomrl
