#pragma once

// Sarsa / Q-learning control agents over the one-hidden-layer value network.
//
// Three variants share one class:
//   online  - semi-gradient TD on every transition, nothing stored
//   dsom    - online, with hidden activations masked by a DSOM trained in
//             parallel on the visited (normalized) states
//   replay  - experience replay buffer plus a target network

#include "dsomrl/dsom.hpp"
#include "dsomrl/envs.hpp"
#include "dsomrl/nncore.hpp"
#include "dsomrl/optim.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dsomrl {

enum class Algorithm { Sarsa, QLearning };
enum class Variant { Online, Dsom, Replay };
enum class TargetMode { Hard, Soft };
enum class SyncUnit { Steps, Episodes };

inline std::string_view to_string(Algorithm a) {
    return a == Algorithm::Sarsa ? "sarsa" : "qlearning";
}
inline std::string_view to_string(Variant v) {
    switch (v) {
        case Variant::Online: return "online";
        case Variant::Dsom: return "dsom";
        case Variant::Replay: return "replay";
    }
    return "?";
}
inline std::string_view to_string(TargetMode m) { return m == TargetMode::Hard ? "hard" : "soft"; }
inline std::string_view to_string(SyncUnit u) { return u == SyncUnit::Steps ? "steps" : "episodes"; }

inline Algorithm parse_algorithm(std::string_view s) {
    if (s == "sarsa") return Algorithm::Sarsa;
    if (s == "qlearning") return Algorithm::QLearning;
    throw ConfigError("unknown algorithm '" + std::string(s) + "' (sarsa|qlearning)");
}
inline Variant parse_variant(std::string_view s) {
    if (s == "online") return Variant::Online;
    if (s == "dsom") return Variant::Dsom;
    if (s == "replay") return Variant::Replay;
    throw ConfigError("unknown variant '" + std::string(s) + "' (online|dsom|replay)");
}
inline SyncUnit parse_sync_unit(std::string_view s) {
    if (s == "steps") return SyncUnit::Steps;
    if (s == "episodes") return SyncUnit::Episodes;
    throw ConfigError("unknown target sync unit '" + std::string(s) + "' (steps|episodes)");
}
inline TargetMode parse_target_mode(std::string_view s) {
    if (s == "hard") return TargetMode::Hard;
    if (s == "soft") return TargetMode::Soft;
    throw ConfigError("unknown target mode '" + std::string(s) + "' (hard|soft)");
}

struct Transition {
    Vector s;                // normalized state
    std::size_t a = 0;
    double r = 0.0;
    Vector s_next;           // normalized successor
    std::size_t a_next = 0;  // action taken at s_next (Sarsa bootstrap)
    bool done = false;       // s_next is absorbing: no bootstrap
};

// ---------------------------------------------------------------------------
// Exploration

struct PolicyConfig {
    enum class Kind { Fixed, Decaying };
    Kind kind = Kind::Fixed;
    double eps = 0.1;
    double eps_start = 1.0;
    double eps_end = 0.1;
    double eps_decay = 0.995;

    void validate() const {
        auto in01 = [](double x) { return x >= 0.0 && x <= 1.0; };
        if (!in01(eps) || !in01(eps_start) || !in01(eps_end) || !in01(eps_decay))
            throw ConfigError("exploration rates must lie in [0, 1]");
        if (kind == Kind::Decaying && eps_end > eps_start)
            throw ConfigError("eps_end must not exceed eps_start");
    }
};

/// Index of the largest entry, lowest index on ties.
inline std::size_t argmax(const Vector& q) {
    std::size_t best = 0;
    for (Eigen::Index i = 1; i < q.size(); ++i)
        if (q(i) > q(static_cast<Eigen::Index>(best))) best = static_cast<std::size_t>(i);
    return best;
}

/// Epsilon-greedy draw over q.
inline std::size_t select_action(const Vector& q, double eps, Rng& rng) {
    if (q.size() == 0) throw ContractError("select_action on an empty value vector");
    if (!q.allFinite()) throw NumericalError("non-finite action values");
    if (eps > 0.0 && uniform(rng, 0.0, 1.0) < eps)
        return uniform_index(rng, static_cast<std::size_t>(q.size()));
    return argmax(q);
}

class EpsilonGreedy {
public:
    EpsilonGreedy() = default;
    explicit EpsilonGreedy(const PolicyConfig& cfg)
        : cfg_(cfg), eps_(cfg.kind == PolicyConfig::Kind::Fixed ? cfg.eps : cfg.eps_start) {
        cfg.validate();
    }

    double epsilon() const { return eps_; }
    const PolicyConfig& config() const { return cfg_; }

    std::size_t select(const Vector& q, Rng& rng) const { return select_action(q, eps_, rng); }

    void set_epsilon(double eps) {
        if (!(eps >= 0.0 && eps <= 1.0)) throw ConfigError("epsilon must lie in [0, 1]");
        eps_ = eps;
    }

    /// eps <- max(eps_end, eps * eps_decay). Called once per finished episode.
    void decay() {
        if (cfg_.kind != PolicyConfig::Kind::Decaying)
            throw ContractError("decay() called on a fixed-epsilon policy");
        eps_ = std::max(cfg_.eps_end, eps_ * cfg_.eps_decay);
    }

private:
    PolicyConfig cfg_;
    double eps_ = 0.1;
};

// ---------------------------------------------------------------------------
// Replay storage

class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity = 0) : capacity_(capacity) {
        data_.reserve(std::min<std::size_t>(capacity, 1u << 16));
    }

    std::size_t size() const { return data_.size(); }
    std::size_t capacity() const { return capacity_; }

    void push(Transition t) {
        if (capacity_ == 0) return;
        if (data_.size() < capacity_) {
            data_.push_back(std::move(t));
        } else {
            data_[cursor_] = std::move(t);
        }
        cursor_ = (cursor_ + 1) % capacity_;
    }

    /// Uniform index with replacement.
    const Transition& sample(Rng& rng) const { return data_[uniform_index(rng, data_.size())]; }

    /// i-th oldest stored transition.
    const Transition& oldest(std::size_t i) const {
        const std::size_t start = data_.size() < capacity_ ? 0 : cursor_;
        return data_[(start + i) % data_.size()];
    }

private:
    std::size_t capacity_;
    std::vector<Transition> data_;
    std::size_t cursor_ = 0;
};

struct ReplayConfig {
    std::size_t capacity = 20000;
    std::size_t batch_size = 32;
    TargetMode target_mode = TargetMode::Hard;
    std::size_t period = 10;
    SyncUnit period_unit = SyncUnit::Steps;
    double tau = 0.01;  // soft mode only
};

struct AgentConfig {
    Algorithm algorithm = Algorithm::Sarsa;
    Variant variant = Variant::Online;
    double gamma = 1.0;
    std::size_t hidden = 800;  // H; for dsom also the node count N
    PolicyConfig policy;
    OptimizerConfig optimizer;
    ReplayConfig replay;  // used when variant == Replay
    DsomParams dsom;      // used when variant == Dsom

    void validate() const {
        if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
        if (hidden == 0) throw ConfigError("hidden unit count must be >= 1");
        policy.validate();
        if (variant == Variant::Replay) {
            if (replay.capacity == 0 || replay.batch_size == 0)
                throw ConfigError("replay capacity and batch size must be >= 1");
            if (replay.period == 0) throw ConfigError("target update period must be >= 1");
            if (!(replay.tau >= 0.0 && replay.tau <= 1.0))
                throw ConfigError("target soft-update ratio tau must lie in [0, 1]");
        }
        if (variant == Variant::Dsom &&
            (!(dsom.epsilon > 0.0) || !(dsom.eta > 0.0) || !(dsom.kappa > 0.0)))
            throw ConfigError("dsom epsilon, eta and kappa must be > 0");
    }
};

/// TD target: r if done, else r + gamma * (q_next[a_next] for Sarsa, max q_next for Q-learning).
inline double td_target(Algorithm algorithm, double gamma, const Transition& t,
                        const Vector& q_next) {
    if (t.done) return t.r;
    const double boot = algorithm == Algorithm::Sarsa
                            ? q_next(static_cast<Eigen::Index>(t.a_next))
                            : q_next.maxCoeff();
    return t.r + gamma * boot;
}

/// Splits a unit budget evenly between hidden units and DSOM nodes.
inline std::pair<std::size_t, std::size_t> budget_split(std::size_t total_units) {
    if (total_units < 2 || total_units % 2 != 0)
        throw ConfigError("unit budget must be even and >= 2, got " + std::to_string(total_units));
    return {total_units / 2, total_units / 2};
}

struct EpisodeResult {
    std::size_t steps = 0;
    double ret = 0.0;
    double epsilon = 0.0;  // exploration rate in force during the episode
};

class Agent {
public:
    /// Builds network, optimizer and variant state. `init_rng` seeds the
    /// weights and the DSOM vectors.
    Agent(const AgentConfig& cfg, std::size_t state_dim, std::size_t actions, Rng& init_rng,
          Rng policy_rng, Rng replay_rng)
        : cfg_(cfg), policy_(cfg.policy), policy_rng_(std::move(policy_rng)),
          replay_rng_(std::move(replay_rng)) {
        cfg_.validate();
        net_ = init_network(state_dim, cfg.hidden, actions, init_rng);
        opt_ = Optimizer(cfg.optimizer, net_);
        if (cfg.variant == Variant::Dsom) map_.emplace(init_map_any(cfg.hidden, state_dim, cfg.dsom, init_rng));
        if (cfg.variant == Variant::Replay) {
            target_ = net_;
            buffer_ = ReplayBuffer(cfg.replay.capacity);
        }
    }

    const AgentConfig& config() const { return cfg_; }
    const NetworkParams& network() const { return net_; }
    NetworkParams& network() { return net_; }
    const std::optional<NetworkParams>& target_network() const { return target_; }
    const std::optional<DsomMap>& map() const { return map_; }
    std::optional<DsomMap>& map() { return map_; }
    const Optimizer& optimizer() const { return opt_; }
    Optimizer& optimizer() { return opt_; }
    const EpsilonGreedy& policy() const { return policy_; }
    EpsilonGreedy& policy() { return policy_; }
    const ReplayBuffer& buffer() const { return buffer_; }
    std::size_t total_steps() const { return total_steps_; }
    std::size_t episodes() const { return episodes_; }

    /// Mask the network sees at s: the DSOM output for dsom agents, ones otherwise.
    Vector mask_for(const Vector& s) const {
        if (map_) return map_->mask(s);
        return Vector::Ones(static_cast<Eigen::Index>(net_.hidden_dim()));
    }

    ForwardTrace evaluate(const Vector& s) const {
        if (map_) return forward(net_, s, map_->mask(s));
        return forward(net_, s);
    }

    std::size_t act(const Vector& q) { return policy_.select(q, policy_rng_); }

    /// One semi-gradient TD step on a single transition; returns delta.
    /// Both masks come from the map as it is before this call; the map then
    /// learns from t.s.
    double online_update(const Transition& t) {
        if (cfg_.variant == Variant::Replay)
            throw ContractError("online_update on a replay agent");
        const ForwardTrace cur = evaluate(t.s);
        Vector q_next;
        if (!t.done) q_next = evaluate(t.s_next).q;
        return online_update(t, cur, q_next);
    }

    /// Same, with the forward passes already done by the caller.
    double online_update(const Transition& t, const ForwardTrace& cur, const Vector& q_next) {
        if (cfg_.variant == Variant::Replay)
            throw ContractError("online_update on a replay agent");
        const double target = td_target(cfg_.algorithm, cfg_.gamma, t, q_next);
        const double delta = target - cur.q(static_cast<Eigen::Index>(t.a));
        if (!std::isfinite(delta)) throw NumericalError("non-finite TD error");
        opt_.apply(net_, backward(net_, cur, t.a, delta));
        if (map_) map_->update(t.s);
        return delta;
    }

    /// One minibatch step against the target network. Returns the mean TD
    /// error, or nothing when the buffer holds fewer than batch_size items.
    std::optional<double> replay_update() {
        if (cfg_.variant != Variant::Replay)
            throw ContractError("replay_update on a non-replay agent");
        const std::size_t batch = cfg_.replay.batch_size;
        if (buffer_.size() < batch) return std::nullopt;

        ParamGrads acc = ParamGrads::zeros_like(net_);
        double sum_delta = 0.0;
        for (std::size_t k = 0; k < batch; ++k) {
            const Transition& t = buffer_.sample(replay_rng_);
            const ForwardTrace cur = forward(net_, t.s);
            Vector q_next;
            if (!t.done) q_next = forward(*target_, t.s_next).q;
            const double delta =
                td_target(cfg_.algorithm, cfg_.gamma, t, q_next) - cur.q(static_cast<Eigen::Index>(t.a));
            if (!std::isfinite(delta)) throw NumericalError("non-finite TD error");
            backward_accumulate(net_, cur, t.a, delta, acc);
            sum_delta += delta;
        }
        acc *= 1.0 / static_cast<double>(batch);
        opt_.apply(net_, acc);
        return sum_delta / static_cast<double>(batch);
    }

    /// target <- tau * online + (1 - tau) * target. tau = 1 is a hard copy.
    void sync_target(double tau) {
        if (!target_) throw ContractError("sync_target on an agent without a target network");
        if (tau >= 1.0) {
            const auto rev = target_->revision;
            *target_ = net_;
            target_->revision = rev + 1;
            return;
        }
        target_->w1 = tau * net_.w1 + (1.0 - tau) * target_->w1;
        target_->b1 = tau * net_.b1 + (1.0 - tau) * target_->b1;
        target_->w2 = tau * net_.w2 + (1.0 - tau) * target_->w2;
        target_->b2 = tau * net_.b2 + (1.0 - tau) * target_->b2;
        ++target_->revision;
    }

    void push(Transition t) { buffer_.push(std::move(t)); }

    /// Swaps in learned state (checkpoint loading). Shapes must match the config.
    void restore(NetworkParams net, std::optional<NetworkParams> target,
                 std::optional<DsomMap> map, Optimizer opt, double epsilon) {
        net.check_shapes();
        if (net.hidden_dim() != net_.hidden_dim() || net.input_dim() != net_.input_dim() ||
            net.action_count() != net_.action_count())
            throw ConfigError("restored network shape does not match agent config");
        if (map.has_value() != map_.has_value() || target.has_value() != target_.has_value())
            throw ConfigError("restored state does not match agent variant");
        if (map && map->size() != net.hidden_dim())
            throw ConfigError("restored map size does not match hidden layer");
        net_ = std::move(net);
        target_ = std::move(target);
        map_ = std::move(map);
        opt_ = std::move(opt);
        policy_.set_epsilon(epsilon);
    }

    /// Runs one full episode with learning.
    template <Environment Env>
    EpisodeResult run_episode(Env& env, Rng& env_rng) {
        EpisodeResult res;
        res.epsilon = policy_.epsilon();
        Vector s = env.normalize(env.reset(env_rng));
        ForwardTrace cur = evaluate(s);
        std::size_t a = act(cur.q);

        for (;;) {
            StepResult sr = env.step(a);
            ++res.steps;
            ++total_steps_;
            res.ret += sr.reward;

            Transition t;
            t.s = s;
            t.a = a;
            t.r = sr.reward;
            t.s_next = env.normalize(sr.state);
            t.done = sr.state.terminal;

            // Next action comes from the pre-update values. Truncated
            // episodes still bootstrap from s_next.
            ForwardTrace next;
            if (!t.done) {
                next = evaluate(t.s_next);
                t.a_next = act(next.q);
            }

            if (cfg_.variant == Variant::Replay) {
                buffer_.push(t);
                replay_update();
                if (cfg_.replay.period_unit == SyncUnit::Steps &&
                    total_steps_ % cfg_.replay.period == 0)
                    sync_target(target_ratio());
            } else {
                online_update(t, cur, next.q);
            }

            if (sr.done) break;
            s = std::move(t.s_next);
            a = t.a_next;
            // Parameters (and the map) changed, so re-evaluate at the new state.
            cur = evaluate(s);
        }

        ++episodes_;
        if (cfg_.variant == Variant::Replay && cfg_.replay.period_unit == SyncUnit::Episodes &&
            episodes_ % cfg_.replay.period == 0)
            sync_target(target_ratio());
        if (policy_.config().kind == PolicyConfig::Kind::Decaying) policy_.decay();
        return res;
    }

private:
    double target_ratio() const {
        return cfg_.replay.target_mode == TargetMode::Hard ? 1.0 : cfg_.replay.tau;
    }

    AgentConfig cfg_;
    NetworkParams net_;
    Optimizer opt_;
    std::optional<NetworkParams> target_;
    std::optional<DsomMap> map_;
    ReplayBuffer buffer_;
    EpsilonGreedy policy_;
    Rng policy_rng_;
    Rng replay_rng_;
    std::size_t total_steps_ = 0;
    std::size_t episodes_ = 0;
};

}  // namespace dsomrl
