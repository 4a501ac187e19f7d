#pragma once

#include "dsomrl/common.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <string>

namespace dsomrl {

struct EnvState {
    Vector features;        // raw environment units
    bool terminal = false;  // reached an absorbing goal state
};

struct StepResult {
    EnvState state;
    double reward = 0.0;
    bool done = false;       // episode over: terminal or truncated by the step cap
};

/// What agents need from an episodic, discrete-action environment.
template <typename E>
concept Environment = requires(E env, const E cenv, Rng& rng, std::size_t action,
                               const EnvState& s) {
    { cenv.state_dim() } -> std::convertible_to<std::size_t>;
    { cenv.action_count() } -> std::convertible_to<std::size_t>;
    { env.reset(rng) } -> std::same_as<EnvState>;
    { env.step(action) } -> std::same_as<StepResult>;
    { cenv.normalize(s) } -> std::same_as<Vector>;
};

/// Classic-control Mountain Car: reward -1 per step, goal at position > 0.5,
/// episodes capped at 1000 steps.
class MountainCar {
public:
    static constexpr double kMinPosition = -1.2;
    static constexpr double kMaxPosition = 0.6;
    static constexpr double kMaxSpeed = 0.07;
    static constexpr double kGoalPosition = 0.5;
    static constexpr double kForce = 0.001;
    static constexpr double kGravity = 0.0025;
    static constexpr std::size_t kStepCap = 1000;

    enum Action : std::size_t { Back = 0, None = 1, Forward = 2 };

    std::size_t state_dim() const { return 2; }
    std::size_t action_count() const { return 3; }

    EnvState reset(Rng& rng) {
        position_ = uniform(rng, -0.6, -0.4);
        velocity_ = 0.0;
        steps_ = 0;
        done_ = false;
        return current(false);
    }

    /// Places the car at an arbitrary in-bounds state (tests, probes).
    EnvState set_state(double position, double velocity) {
        position_ = std::clamp(position, kMinPosition, kMaxPosition);
        velocity_ = std::clamp(velocity, -kMaxSpeed, kMaxSpeed);
        steps_ = 0;
        done_ = false;
        return current(false);
    }

    StepResult step(std::size_t action) {
        if (done_) throw ContractError("step() called on a finished Mountain Car episode");
        if (action > 2) throw ContractError("Mountain Car action must be 0, 1 or 2");
        const double throttle = static_cast<double>(action) - 1.0;
        velocity_ += kForce * throttle - kGravity * std::cos(3.0 * position_);
        velocity_ = std::clamp(velocity_, -kMaxSpeed, kMaxSpeed);
        position_ += velocity_;
        position_ = std::clamp(position_, kMinPosition, kMaxPosition);
        if (position_ == kMinPosition && velocity_ < 0.0) velocity_ = 0.0;
        ++steps_;
        const bool goal = position_ > kGoalPosition;
        done_ = goal || steps_ >= kStepCap;
        return {current(goal), -1.0, done_};
    }

    /// Affine map of (position, velocity) onto [0,1]^2.
    Vector normalize(const EnvState& s) const { return normalize_features(s.features); }

    static Vector normalize_features(const Vector& f) {
        Vector out(2);
        out(0) = (f(0) - kMinPosition) / (kMaxPosition - kMinPosition);
        out(1) = (f(1) + kMaxSpeed) / (2.0 * kMaxSpeed);
        return out;
    }

    double position() const { return position_; }
    double velocity() const { return velocity_; }
    std::size_t steps() const { return steps_; }
    bool done() const { return done_; }

private:
    EnvState current(bool terminal) const {
        Vector f(2);
        f << position_, velocity_;
        return {f, terminal};
    }

    double position_ = -0.5;
    double velocity_ = 0.0;
    std::size_t steps_ = 0;
    bool done_ = false;
};

static_assert(Environment<MountainCar>);

}  // namespace dsomrl
