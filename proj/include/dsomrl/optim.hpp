#pragma once

// First-order optimizers. Gradients arrive in ascent form (delta * grad q),
// so every rule ADDS its step to the parameters.

#include "dsomrl/nncore.hpp"

#include <cmath>
#include <string>
#include <string_view>

namespace dsomrl {

enum class OptimizerKind { Sgd, RmsProp, Adam };

inline std::string_view to_string(OptimizerKind k) {
    switch (k) {
        case OptimizerKind::Sgd: return "sgd";
        case OptimizerKind::RmsProp: return "rmsprop";
        case OptimizerKind::Adam: return "adam";
    }
    return "?";
}

inline OptimizerKind parse_optimizer(std::string_view s) {
    if (s == "sgd") return OptimizerKind::Sgd;
    if (s == "rmsprop") return OptimizerKind::RmsProp;
    if (s == "adam") return OptimizerKind::Adam;
    throw ConfigError("unknown optimizer '" + std::string(s) + "' (sgd|rmsprop|adam)");
}

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::Sgd;
    double alpha = 0.005;
    double rho = 0.9;       // rmsprop decay
    double beta1 = 0.9;     // adam
    double beta2 = 0.999;   // adam
    double stabilizer = 1e-8;
};

class Optimizer {
public:
    Optimizer() = default;
    Optimizer(const OptimizerConfig& cfg, const NetworkParams& params) : cfg_(cfg) {
        if (!(cfg.alpha > 0.0) || !std::isfinite(cfg.alpha))
            throw ConfigError("learning rate must be finite and > 0");
        if (cfg.rho < 0.0 || cfg.rho >= 1.0 || cfg.beta1 < 0.0 || cfg.beta1 >= 1.0 ||
            cfg.beta2 < 0.0 || cfg.beta2 >= 1.0 || !(cfg.stabilizer > 0.0))
            throw ConfigError("optimizer decay rates must lie in [0, 1) and stabilizer > 0");
        if (cfg.kind != OptimizerKind::Sgd) second_ = ParamGrads::zeros_like(params);
        if (cfg.kind == OptimizerKind::Adam) first_ = ParamGrads::zeros_like(params);
    }

    const OptimizerConfig& config() const { return cfg_; }
    std::uint64_t steps() const { return steps_; }
    const ParamGrads& first_moment() const { return first_; }
    const ParamGrads& second_moment() const { return second_; }

    /// Restores accumulator state from a checkpoint.
    void restore(ParamGrads first, ParamGrads second, std::uint64_t steps) {
        first_ = std::move(first);
        second_ = std::move(second);
        steps_ = steps;
    }

    void apply(NetworkParams& params, const ParamGrads& grads) {
        if (!grads.matches(params)) throw ConfigError("gradient shape does not match network");
        if (!grads.finite()) throw NumericalError("non-finite gradient");
        ++steps_;
        switch (cfg_.kind) {
            case OptimizerKind::Sgd:
                sgd(params.w1, grads.w1);
                sgd(params.b1, grads.b1);
                sgd(params.w2, grads.w2);
                sgd(params.b2, grads.b2);
                break;
            case OptimizerKind::RmsProp:
                rmsprop(params.w1, grads.w1, second_.w1);
                rmsprop(params.b1, grads.b1, second_.b1);
                rmsprop(params.w2, grads.w2, second_.w2);
                rmsprop(params.b2, grads.b2, second_.b2);
                break;
            case OptimizerKind::Adam: {
                const double t = static_cast<double>(steps_);
                const double c1 = 1.0 - std::pow(cfg_.beta1, t);
                const double c2 = 1.0 - std::pow(cfg_.beta2, t);
                adam(params.w1, grads.w1, first_.w1, second_.w1, c1, c2);
                adam(params.b1, grads.b1, first_.b1, second_.b1, c1, c2);
                adam(params.w2, grads.w2, first_.w2, second_.w2, c1, c2);
                adam(params.b2, grads.b2, first_.b2, second_.b2, c1, c2);
                break;
            }
        }
        ++params.revision;
        if (!params.finite()) throw NumericalError("network parameters became non-finite");
    }

private:
    template <typename P, typename G>
    void sgd(P& p, const G& g) const {
        p += cfg_.alpha * g;
    }

    template <typename P, typename G, typename S>
    void rmsprop(P& p, const G& g, S& sq) const {
        sq = cfg_.rho * sq + (1.0 - cfg_.rho) * g.cwiseAbs2();
        p.array() += cfg_.alpha * g.array() / (sq.array().sqrt() + cfg_.stabilizer);
    }

    template <typename P, typename G, typename S>
    void adam(P& p, const G& g, S& m, S& v, double c1, double c2) const {
        m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
        v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.cwiseAbs2();
        p.array() += cfg_.alpha * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg_.stabilizer);
    }

    OptimizerConfig cfg_;
    ParamGrads first_;
    ParamGrads second_;
    std::uint64_t steps_ = 0;
};

}  // namespace dsomrl
