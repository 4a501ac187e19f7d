#include "dsomrl/optim.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace dsomrl;

namespace {

// 1x1x1 network: every field is a single scalar.
NetworkParams scalar_net(double w) {
    NetworkParams p;
    p.w1 = Matrix::Constant(1, 1, w);
    p.b1 = Vector::Constant(1, w);
    p.w2 = Matrix::Constant(1, 1, w);
    p.b2 = Vector::Constant(1, w);
    return p;
}

ParamGrads scalar_grads(double g) {
    ParamGrads gr;
    gr.w1 = Matrix::Constant(1, 1, g);
    gr.b1 = Vector::Constant(1, g);
    gr.w2 = Matrix::Constant(1, 1, g);
    gr.b2 = Vector::Constant(1, g);
    return gr;
}

OptimizerConfig make(OptimizerKind k, double alpha) {
    OptimizerConfig c;
    c.kind = k;
    c.alpha = alpha;
    return c;
}

NetworkParams random_net(Rng& rng) {
    NetworkParams p;
    p.w1 = Matrix(4, 2);
    p.b1 = Vector(4);
    p.w2 = Matrix(3, 4);
    p.b2 = Vector(3);
    for (Eigen::Index i = 0; i < p.w1.size(); ++i) p.w1.data()[i] = uniform(rng, -1, 1);
    for (Eigen::Index i = 0; i < p.b1.size(); ++i) p.b1(i) = uniform(rng, -1, 1);
    for (Eigen::Index i = 0; i < p.w2.size(); ++i) p.w2.data()[i] = uniform(rng, -1, 1);
    for (Eigen::Index i = 0; i < p.b2.size(); ++i) p.b2(i) = uniform(rng, -1, 1);
    return p;
}

}  // namespace

TEST(Sgd, OneStepAscent) {
    NetworkParams p = scalar_net(1.0);
    Optimizer opt(make(OptimizerKind::Sgd, 0.1), p);
    opt.apply(p, scalar_grads(2.0));
    EXPECT_DOUBLE_EQ(p.w1(0, 0), 1.2);
    EXPECT_DOUBLE_EQ(p.b2(0), 1.2);
}

TEST(Sgd, MatchesPlainLoopBitExactly) {
    Rng rng = make_rng(1, Stream::Init);
    NetworkParams p = random_net(rng);
    NetworkParams ref = p;
    Optimizer opt(make(OptimizerKind::Sgd, 0.03), p);
    for (int k = 0; k < 10; ++k) {
        ParamGrads g = ParamGrads::zeros_like(p);
        for (Eigen::Index i = 0; i < g.w1.size(); ++i) g.w1.data()[i] = uniform(rng, -1, 1);
        for (Eigen::Index i = 0; i < g.w2.size(); ++i) g.w2.data()[i] = uniform(rng, -1, 1);
        opt.apply(p, g);
        for (Eigen::Index i = 0; i < g.w1.size(); ++i) ref.w1.data()[i] += 0.03 * g.w1.data()[i];
        for (Eigen::Index i = 0; i < g.w2.size(); ++i) ref.w2.data()[i] += 0.03 * g.w2.data()[i];
    }
    EXPECT_EQ(p.w1, ref.w1);
    EXPECT_EQ(p.w2, ref.w2);
    EXPECT_EQ(opt.first_moment().w1.size(), 0);
    EXPECT_EQ(opt.second_moment().w1.size(), 0);
}

TEST(Adam, FirstStepMagnitudeIsAlpha) {
    NetworkParams p = scalar_net(0.0);
    Optimizer opt(make(OptimizerKind::Adam, 0.1), p);
    opt.apply(p, scalar_grads(1.0));
    EXPECT_NEAR(p.w1(0, 0), 0.1, 1e-8);
    EXPECT_EQ(opt.steps(), 1u);
}

TEST(RmsProp, MatchesScalarReference) {
    const double alpha = 0.01, rho = 0.9, eps = 1e-8;
    NetworkParams p = scalar_net(0.0);
    Optimizer opt(make(OptimizerKind::RmsProp, alpha), p);
    double w = 0.0, sq = 0.0;
    for (int t = 0; t < 100; ++t) {
        const double g = 0.5 + 0.01 * t;
        opt.apply(p, scalar_grads(g));
        sq = rho * sq + (1.0 - rho) * g * g;
        w += alpha * g / (std::sqrt(sq) + eps);
        ASSERT_NEAR(p.w1(0, 0), w, 1e-12);
    }
    // constant gradient: step size tends to alpha
    for (int t = 0; t < 200; ++t) opt.apply(p, scalar_grads(3.0));
    const double before = p.w1(0, 0);
    opt.apply(p, scalar_grads(3.0));
    EXPECT_NEAR(p.w1(0, 0) - before, alpha, 1e-6);
}

TEST(Adaptive, ScaleInvariantUnderConstantGradient) {
    for (OptimizerKind k : {OptimizerKind::RmsProp, OptimizerKind::Adam}) {
        NetworkParams a = scalar_net(0.0), b = scalar_net(0.0);
        Optimizer oa(make(k, 0.001), a), ob(make(k, 0.001), b);
        for (int t = 0; t < 1000; ++t) {
            oa.apply(a, scalar_grads(0.2));
            ob.apply(b, scalar_grads(20.0));
        }
        EXPECT_NEAR(a.w1(0, 0) / b.w1(0, 0), 1.0, 0.01) << to_string(k);
    }
}

TEST(AllOptimizers, ZeroGradientLeavesParamsUnchanged) {
    for (OptimizerKind k : {OptimizerKind::Sgd, OptimizerKind::RmsProp, OptimizerKind::Adam}) {
        Rng rng = make_rng(2, Stream::Init);
        NetworkParams p = random_net(rng);
        const NetworkParams before = p;
        Optimizer opt(make(k, 0.1), p);
        for (int t = 0; t < 5; ++t) opt.apply(p, ParamGrads::zeros_like(p));
        EXPECT_EQ(p.w1, before.w1) << to_string(k);
        EXPECT_EQ(p.b2, before.b2) << to_string(k);
    }
}

TEST(AllOptimizers, RevisionBumps) {
    NetworkParams p = scalar_net(0.0);
    Optimizer opt(make(OptimizerKind::Adam, 0.1), p);
    const auto r = p.revision;
    opt.apply(p, scalar_grads(1.0));
    EXPECT_EQ(p.revision, r + 1);
}

TEST(Errors, ShapeMismatchAndNonFinite) {
    NetworkParams p = scalar_net(0.0);
    Optimizer opt(make(OptimizerKind::Sgd, 0.1), p);
    ParamGrads g = scalar_grads(1.0);
    g.w1 = Matrix::Zero(2, 1);
    EXPECT_THROW(opt.apply(p, g), ConfigError);
    EXPECT_THROW(opt.apply(p, scalar_grads(std::nan(""))), NumericalError);
    Optimizer big(make(OptimizerKind::Sgd, 10.0), p);
    EXPECT_THROW(big.apply(p, scalar_grads(1e308)), NumericalError);
}

TEST(Errors, InvalidConfig) {
    const NetworkParams p = scalar_net(0.0);
    EXPECT_THROW(Optimizer(make(OptimizerKind::Sgd, 0.0), p), ConfigError);
    OptimizerConfig c = make(OptimizerKind::RmsProp, 0.1);
    c.rho = 1.0;
    EXPECT_THROW(Optimizer(c, p), ConfigError);
    c = make(OptimizerKind::Adam, 0.1);
    c.stabilizer = 0.0;
    EXPECT_THROW(Optimizer(c, p), ConfigError);
}

TEST(Parse, KindNames) {
    EXPECT_EQ(parse_optimizer("sgd"), OptimizerKind::Sgd);
    EXPECT_EQ(parse_optimizer("rmsprop"), OptimizerKind::RmsProp);
    EXPECT_EQ(parse_optimizer("adam"), OptimizerKind::Adam);
    EXPECT_THROW(parse_optimizer("adagrad"), ConfigError);
}
