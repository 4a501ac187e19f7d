#include "dsomrl/agents.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

using namespace dsomrl;

namespace {

Vector vec2(double a, double b) {
    Vector v(2);
    v << a, b;
    return v;
}

Vector vec3(double a, double b, double c) {
    Vector v(3);
    v << a, b, c;
    return v;
}

AgentConfig small_config(Variant v, std::size_t hidden = 16) {
    AgentConfig c;
    c.variant = v;
    c.hidden = hidden;
    c.optimizer.kind = OptimizerKind::Sgd;
    c.optimizer.alpha = 0.01;
    c.replay.capacity = 1000;
    c.replay.batch_size = 8;
    return c;
}

Agent make_agent(const AgentConfig& c, std::uint64_t seed = 0) {
    Rng init = make_rng(seed, Stream::Init);
    return Agent(c, 2, 3, init, make_rng(seed, Stream::Policy), make_rng(seed, Stream::Replay));
}

Transition transition(Vector s, std::size_t a, double r, Vector s_next, std::size_t a_next,
                      bool done) {
    Transition t;
    t.s = std::move(s);
    t.a = a;
    t.r = r;
    t.s_next = std::move(s_next);
    t.a_next = a_next;
    t.done = done;
    return t;
}

}  // namespace

TEST(SelectAction, GreedyWhenEpsilonZero) {
    Rng rng = make_rng(1, Stream::Policy);
    EXPECT_EQ(select_action(vec3(-5, -3, -7), 0.0, rng), 1u);
    EXPECT_EQ(select_action(vec3(2, 2, 1), 0.0, rng), 0u);  // tie -> lowest
}

TEST(SelectAction, UniformWhenEpsilonOne) {
    Rng rng = make_rng(2, Stream::Policy);
    std::vector<int> counts(3, 0);
    const int n = 100000;
    for (int k = 0; k < n; ++k) ++counts[select_action(vec3(0, 9, 0), 1.0, rng)];
    for (int c : counts) EXPECT_NEAR(static_cast<double>(c) / n, 1.0 / 3.0, 0.02 / 3.0);
}

TEST(SelectAction, NonFiniteValues) {
    Rng rng = make_rng(3, Stream::Policy);
    EXPECT_THROW(select_action(vec3(0, std::nan(""), 0), 0.1, rng), NumericalError);
}

TEST(Policy, DecaySchedule) {
    PolicyConfig pc;
    pc.kind = PolicyConfig::Kind::Decaying;
    EpsilonGreedy p(pc);
    EXPECT_EQ(p.epsilon(), 1.0);
    p.decay();
    EXPECT_DOUBLE_EQ(p.epsilon(), 0.995);
    for (int k = 1; k < 459; ++k) p.decay();
    EXPECT_NEAR(p.epsilon(), std::pow(0.995, 459), 1e-12);
    EXPECT_GT(p.epsilon(), 0.1);
    p.decay();  // 0.995^460 < 0.1
    EXPECT_EQ(p.epsilon(), 0.1);
    p.decay();
    EXPECT_EQ(p.epsilon(), 0.1);
}

TEST(Policy, FixedCannotDecay) {
    EpsilonGreedy p(PolicyConfig{});
    EXPECT_EQ(p.epsilon(), 0.1);
    EXPECT_THROW(p.decay(), ContractError);
}

TEST(Policy, InvalidConfig) {
    PolicyConfig pc;
    pc.eps = 1.5;
    EXPECT_THROW(pc.validate(), ConfigError);
    pc = PolicyConfig{};
    pc.kind = PolicyConfig::Kind::Decaying;
    pc.eps_start = 0.05;
    EXPECT_THROW(pc.validate(), ConfigError);
}

TEST(TdTarget, Examples) {
    const Vector qn = vec3(-5, -3, -7);
    EXPECT_EQ(td_target(Algorithm::Sarsa, 1.0, transition(vec2(0, 0), 0, -1, vec2(0, 0), 2, true), qn), -1.0);
    Transition t = transition(vec2(0, 0), 0, -1, vec2(0, 0), 1, false);
    EXPECT_EQ(td_target(Algorithm::Sarsa, 1.0, t, vec3(0, -10, 0)), -11.0);
    EXPECT_EQ(td_target(Algorithm::QLearning, 1.0, t, qn), -4.0);
}

TEST(TdTarget, QLearningDominatesSarsa) {
    Rng rng = make_rng(4, Stream::Policy);
    for (int k = 0; k < 500; ++k) {
        const Vector qn = vec3(uniform(rng, -9, 9), uniform(rng, -9, 9), uniform(rng, -9, 9));
        const Transition t = transition(vec2(0, 0), 0, uniform(rng, -2, 0), vec2(0, 0),
                                        uniform_index(rng, 3), false);
        const double g = uniform(rng, 0, 1);
        ASSERT_GE(td_target(Algorithm::QLearning, g, t, qn), td_target(Algorithm::Sarsa, g, t, qn));
    }
}

TEST(BudgetSplit, Examples) {
    EXPECT_EQ(budget_split(800), std::make_pair(std::size_t{400}, std::size_t{400}));
    EXPECT_EQ(budget_split(36), std::make_pair(std::size_t{18}, std::size_t{18}));
    EXPECT_EQ(budget_split(2), std::make_pair(std::size_t{1}, std::size_t{1}));
    EXPECT_THROW(budget_split(35), ConfigError);
    EXPECT_THROW(budget_split(0), ConfigError);
}

TEST(ReplayBuffer, FifoOverwrite) {
    ReplayBuffer buf(5);
    for (int k = 0; k < 8; ++k) buf.push(transition(vec2(k, 0), 0, k, vec2(0, 0), 0, false));
    EXPECT_EQ(buf.size(), 5u);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(buf.oldest(i).r, static_cast<double>(i + 3));
    Rng rng = make_rng(5, Stream::Replay);
    for (int k = 0; k < 100; ++k) EXPECT_GE(buf.sample(rng).r, 3.0);
}

TEST(OnlineUpdate, ZeroTdErrorChangesNothing) {
    Agent ag = make_agent(small_config(Variant::Online));
    const Vector s = vec2(0.3, 0.6);
    const double q = ag.evaluate(s).q(1);
    const NetworkParams before = ag.network();
    const double d = ag.online_update(transition(s, 1, q, s, 0, true));
    EXPECT_EQ(d, 0.0);
    EXPECT_EQ(ag.network().w1, before.w1);
    EXPECT_EQ(ag.network().w2, before.w2);
}

TEST(OnlineUpdate, StepReducesTdError) {
    AgentConfig c = small_config(Variant::Online);
    c.optimizer.alpha = 0.001;
    Agent ag = make_agent(c, 3);
    const Transition t = transition(vec2(0.4, 0.5), 2, -1.0, vec2(0.9, 0.1), 0, true);
    const double d0 = ag.online_update(t);
    const double d1 = t.r - ag.evaluate(t.s).q(2);
    EXPECT_LT(std::abs(d1), std::abs(d0));
}

TEST(OnlineUpdate, SemiGradientTouchesOnlyTakenAction) {
    Agent ag = make_agent(small_config(Variant::Online), 4);
    const NetworkParams before = ag.network();
    ag.online_update(transition(vec2(0.2, 0.7), 1, -1.0, vec2(0.3, 0.7), 2, false));
    for (Eigen::Index a : {0, 2}) {
        EXPECT_EQ(ag.network().w2.row(a), before.w2.row(a));
        EXPECT_EQ(ag.network().b2(a), before.b2(a));
    }
    EXPECT_NE(ag.network().b2(1), before.b2(1));
}

TEST(OnlineUpdate, DsomMapLearnsAfterNetworkStep) {
    Agent ag = make_agent(small_config(Variant::Dsom), 5);
    const Matrix before = ag.map()->vectors();
    ag.online_update(transition(vec2(0.3, 0.3), 0, -1, vec2(0.31, 0.3), 0, false));
    EXPECT_NE(ag.map()->vectors(), before);
}

TEST(OnlineUpdate, ReplayAgentRejects) {
    Agent ag = make_agent(small_config(Variant::Replay));
    EXPECT_THROW(ag.online_update(transition(vec2(0, 0), 0, -1, vec2(0, 0), 0, true)), ContractError);
}

TEST(OnlineUpdate, DsomWithHugeKappaTracksOnline) {
    AgentConfig on = small_config(Variant::Online, 25);
    AgentConfig ds = on;
    ds.variant = Variant::Dsom;
    ds.dsom.kappa = 1e12;
    Agent a = make_agent(on, 6);
    Agent b = make_agent(ds, 6);
    ASSERT_EQ(a.network().w1, b.network().w1);
    Rng rng = make_rng(6, Stream::Env);
    for (int k = 0; k < 200; ++k) {
        const Vector s0 = vec2(uniform(rng, 0, 1), uniform(rng, 0, 1));
        const Vector s1 = vec2(uniform(rng, 0, 1), uniform(rng, 0, 1));
        const Transition t = transition(s0, uniform_index(rng, 3), -1, s1, uniform_index(rng, 3), false);
        a.online_update(t);
        b.online_update(t);
    }
    EXPECT_LT((a.network().w1 - b.network().w1).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(ReplayUpdate, SkipsWhenBufferTooSmall) {
    Agent ag = make_agent(small_config(Variant::Replay));
    ag.push(transition(vec2(0, 0), 0, -1, vec2(0, 0), 0, true));
    const NetworkParams before = ag.network();
    EXPECT_FALSE(ag.replay_update().has_value());
    EXPECT_EQ(ag.network().w1, before.w1);
}

TEST(ReplayUpdate, IdenticalBatchEqualsSingleSample) {
    AgentConfig c = small_config(Variant::Replay);
    AgentConfig c1 = c;
    c1.replay.batch_size = 1;
    Agent a = make_agent(c, 7);
    Agent b = make_agent(c1, 7);
    const Transition t = transition(vec2(0.5, 0.2), 1, -1, vec2(0.6, 0.3), 2, false);
    for (int k = 0; k < 8; ++k) a.push(t);
    b.push(t);
    const double da = *a.replay_update();
    const double db = *b.replay_update();
    EXPECT_NEAR(da, db, 1e-12);
    EXPECT_LT((a.network().w1 - b.network().w1).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_LT((a.network().w2 - b.network().w2).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(ReplayUpdate, FrozenTargetRegressionConverges) {
    AgentConfig c = small_config(Variant::Replay, 32);
    c.optimizer.alpha = 0.02;
    Agent ag = make_agent(c, 8);
    Rng rng = make_rng(8, Stream::Env);
    for (int k = 0; k < 20; ++k) {
        const Vector s = vec2(uniform(rng, 0, 1), uniform(rng, 0, 1));
        ag.push(transition(s, uniform_index(rng, 3), -1.0, s, uniform_index(rng, 3), k % 2 == 0));
    }
    double early = 0.0, late = 0.0;
    for (int k = 0; k < 200; ++k) {
        const double d = std::abs(*ag.replay_update());
        if (k < 20) early += d;
        if (k >= 180) late += d;
    }
    EXPECT_LT(late, early);
}

TEST(SyncTarget, SoftUpdateArithmetic) {
    Agent ag = make_agent(small_config(Variant::Replay), 9);
    NetworkParams online = ag.network();
    online.w1.setConstant(1.0);
    online.b1.setConstant(1.0);
    online.w2.setConstant(1.0);
    online.b2.setConstant(1.0);
    NetworkParams target = online;
    target.w1.setZero();
    target.b1.setZero();
    target.w2.setZero();
    target.b2.setZero();
    ag.restore(online, target, std::nullopt, ag.optimizer(), 0.1);

    Agent zero = ag;
    zero.sync_target(0.0);
    EXPECT_TRUE(zero.target_network()->w1.isZero(0.0));

    ag.sync_target(0.01);
    EXPECT_NEAR(ag.target_network()->w1(0, 0), 0.01, 1e-15);
    EXPECT_NEAR(ag.target_network()->b2(0), 0.01, 1e-15);

    Agent hard = ag;
    hard.sync_target(1.0);
    EXPECT_EQ(hard.target_network()->w1, hard.network().w1);
}

TEST(SyncTarget, NeedsTarget) {
    Agent ag = make_agent(small_config(Variant::Online));
    EXPECT_THROW(ag.sync_target(1.0), ContractError);
}

TEST(RunEpisode, StepsEqualNegativeReturnAndCapped) {
    for (Variant v : {Variant::Online, Variant::Dsom, Variant::Replay}) {
        Agent ag = make_agent(small_config(v), 10);
        MountainCar env;
        Rng er = make_rng(10, Stream::Env);
        for (int e = 0; e < 3; ++e) {
            const EpisodeResult r = ag.run_episode(env, er);
            EXPECT_EQ(static_cast<double>(r.steps), -r.ret) << to_string(v);
            EXPECT_LE(r.steps, MountainCar::kStepCap);
        }
    }
}

TEST(RunEpisode, Deterministic) {
    for (Variant v : {Variant::Online, Variant::Dsom, Variant::Replay}) {
        std::vector<std::size_t> runs[2];
        for (auto& out : runs) {
            Agent ag = make_agent(small_config(v), 11);
            MountainCar env;
            Rng er = make_rng(11, Stream::Env);
            for (int e = 0; e < 3; ++e) out.push_back(ag.run_episode(env, er).steps);
        }
        EXPECT_EQ(runs[0], runs[1]) << to_string(v);
    }
}

TEST(RunEpisode, DecayingPolicyDecaysPerEpisode) {
    AgentConfig c = small_config(Variant::Online);
    c.policy.kind = PolicyConfig::Kind::Decaying;
    Agent ag = make_agent(c, 12);
    MountainCar env;
    Rng er = make_rng(12, Stream::Env);
    const EpisodeResult r = ag.run_episode(env, er);
    EXPECT_EQ(r.epsilon, 1.0);
    EXPECT_DOUBLE_EQ(ag.policy().epsilon(), 0.995);
}

TEST(RunEpisode, HardSyncEveryPeriodSteps) {
    AgentConfig c = small_config(Variant::Replay);
    c.replay.period = 1000000;  // never within the test
    Agent ag = make_agent(c, 13);
    MountainCar env;
    Rng er = make_rng(13, Stream::Env);
    const NetworkParams t0 = *ag.target_network();
    ag.run_episode(env, er);
    EXPECT_EQ(ag.target_network()->w1, t0.w1);
    EXPECT_NE(ag.network().w1, t0.w1);

    c.replay.period = 1;
    Agent every = make_agent(c, 13);
    MountainCar env2;
    Rng er2 = make_rng(13, Stream::Env);
    every.run_episode(env2, er2);
    EXPECT_EQ(every.target_network()->w1, every.network().w1);
}

TEST(Config, Validation) {
    AgentConfig c;
    c.gamma = 1.5;
    EXPECT_THROW(c.validate(), ConfigError);
    c = AgentConfig{};
    c.variant = Variant::Replay;
    c.replay.batch_size = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = AgentConfig{};
    c.hidden = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    EXPECT_THROW(parse_variant("dqn"), ConfigError);
    EXPECT_EQ(parse_algorithm("qlearning"), Algorithm::QLearning);
}

// Properties

TEST(Property, MaskedUpdateIsMoreLocal) {
    // Two well-separated map clusters give masks with ~zero overlap between
    // s1 and s2; a masked update at s1 should barely move q(s2).
    const Vector s1 = vec2(0.1, 0.1), s2 = vec2(0.9, 0.9);
    Rng rng = make_rng(14, Stream::Init);
    std::vector<double> masked, plain;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t H = 20;
        Matrix w(static_cast<Eigen::Index>(H), 2);
        for (Eigen::Index i = 0; i < w.rows(); ++i) {
            const Vector& c = i % 2 == 0 ? s1 : s2;
            w(i, 0) = c(0) + uniform(rng, -0.02, 0.02);
            w(i, 1) = c(1) + uniform(rng, -0.02, 0.02);
        }
        const DsomMap map(w, lattice_positions(4, 5), 0.1, 1.0, 0.05);
        const Vector m1 = map.mask(s1), m2 = map.mask(s2);
        ASSERT_LT(m1.dot(m2), 1e-6);

        const NetworkParams net = init_network(2, H, 3, rng);
        OptimizerConfig oc;
        oc.alpha = 0.1;
        auto shift = [&](bool use_mask) {
            NetworkParams p = net;
            Optimizer opt(oc, p);
            const ForwardTrace t = use_mask ? forward(p, s1, m1) : forward(p, s1);
            const double before = (use_mask ? forward(p, s2, m2) : forward(p, s2)).q(0);
            opt.apply(p, backward(p, t, 0, 1.0));
            const double after = (use_mask ? forward(p, s2, m2) : forward(p, s2)).q(0);
            return std::abs(after - before);
        };
        masked.push_back(shift(true));
        plain.push_back(shift(false));
    }
    std::nth_element(masked.begin(), masked.begin() + 50, masked.end());
    std::nth_element(plain.begin(), plain.begin() + 50, plain.end());
    EXPECT_LT(masked[50], plain[50]);
}
