#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace dsomrl {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Rng = std::mt19937_64;

/// Invalid dimensions, out-of-range hyperparameters, malformed config files.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Caller handed in data the operation cannot accept (non-finite, empty).
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An API was used out of sequence (stale trace, step after done, ...).
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Parameters or TD errors stopped being finite.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Missing, truncated or corrupt checkpoint.
class LoadError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& x) {
    return x.allFinite();
}

/// Named random substreams. Every source of randomness in a run derives
/// from one seed plus one of these tags.
enum class Stream : std::uint64_t {
    Init = 1,
    Env = 2,
    Policy = 3,
    Replay = 4,
    Map = 5,
};

inline Rng make_rng(std::uint64_t seed, Stream stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                      static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream)};
    return Rng(seq);
}

/// Uniform draw in [lo, hi). Written out instead of using
/// std::uniform_real_distribution so streams are identical across
/// standard library implementations.
inline double uniform(Rng& rng, double lo, double hi) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
}

/// Uniform integer in [0, n).
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
    // rejection keeps the draw unbiased
    const std::uint64_t range = n;
    const std::uint64_t limit = (~std::uint64_t{0}) - (~std::uint64_t{0}) % range;
    std::uint64_t x = rng();
    while (x >= limit) x = rng();
    return static_cast<std::size_t>(x % range);
}

}  // namespace dsomrl
