#include "support.hpp"

#include "vrkg/refactor.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace vrkg;
using vrkg::testing::check_gradients;
using vrkg::testing::worst;

namespace {

Matrix dist_rows(std::initializer_list<double> p_connect) {
    Matrix m(static_cast<Eigen::Index>(p_connect.size()), 2);
    Eigen::Index r = 0;
    for (double p : p_connect) {
        m(r, 0) = p;
        m(r, 1) = 1.0 - p;
        ++r;
    }
    return m;
}

struct Nets {
    Config cfg = vrkg::testing::tiny_config();
    ParameterStore store;
    RefactorNet prior, posterior;
    Nets() {
        cfg.ent_dim = 3;
        cfg.ctx_dim = 4;
        cfg.mlp_hidden = 5;
        std::mt19937_64 rng(8);
        prior = RefactorNet(store, "prior", cfg, rng);
        posterior = RefactorNet(store, "posterior", cfg, rng);
    }
};

Var random_rows(Eigen::Index r, Eigen::Index c, uint64_t seed) {
    std::mt19937_64 rng(seed);
    return Var(uniform_init(r, c, 1.0, rng));
}

}  // namespace

TEST(Fuse, ZeroInputsGiveZero) {
    std::mt19937_64 rng(1);
    Var w(xavier_init(14, 14, rng));
    Var z(Matrix::Zero(1, 2));
    EXPECT_EQ(fuse(z, z, z, w).value(), Matrix::Zero(1, 14));
}

TEST(Fuse, IdentityWeightsExposeFeatureLayout) {
    RowVector h(2), t(2), d(2);
    h << 2, 3;
    t << 5, 7;
    d << 11, 13;
    RowVector expected(14);
    expected << h, t, d, h.cwiseProduct(t), t.cwiseProduct(d), h.cwiseProduct(d), h.cwiseProduct(t).cwiseProduct(d);
    const Matrix m = fuse(Var(Matrix(h)), Var(Matrix(t)), Var(Matrix(d)), Var(Matrix::Identity(14, 14))).value();
    EXPECT_EQ(m, Matrix(expected));
}

TEST(Fuse, BroadcastsOneContextRow) {
    std::mt19937_64 rng(2);
    Var w(xavier_init(7, 7, rng));
    Matrix h(2, 1), t(2, 1), d(1, 1);
    h << 1, 2;
    t << 3, 4;
    d << 5;
    const Matrix both = fuse(Var(h), Var(t), Var(d), w).value();
    const Matrix first = fuse(Var(Matrix(h.row(0))), Var(Matrix(t.row(0))), Var(d), w).value();
    EXPECT_TRUE(both.row(0).isApprox(first.row(0), 1e-15));
}

TEST(RefactorNet, DistributionIsClosedFormSoftmax) {
    Nets n;
    Var fused = random_rows(3, 21, 4);
    const Matrix dist = n.prior.distribution(fused).value();
    const Matrix w1 = n.prior.hidden().weight().value(), b1 = n.prior.hidden().bias()->value();
    const Matrix w2 = n.prior.output().weight().value(), b2 = n.prior.output().bias()->value();
    for (Eigen::Index r = 0; r < 3; ++r) {
        const RowVector h = ((fused.value().row(r) * w1) + b1.row(0)).array().tanh().matrix();
        const RowVector l = h * w2 + b2.row(0);
        const double p = 1.0 / (1.0 + std::exp(l(1) - l(0)));
        EXPECT_NEAR(dist(r, 0), p, 1e-6);
        EXPECT_NEAR(dist(r, 0) + dist(r, 1), 1.0, 1e-12);
    }
}

TEST(RefactorNet, TiedPosteriorEqualsPrior) {
    Nets n;
    n.store.copy_prefix("prior.", "posterior.");
    Var h = random_rows(4, 3, 1), t = random_rows(4, 3, 2), c = random_rows(1, 4, 3);
    const Var p = n.prior.forward(h, t, c);
    const Var q = n.posterior.forward(h, t, c);
    EXPECT_EQ(p.value(), q.value());
    EXPECT_EQ(kl_term(q, p).item(), 0.0);
}

TEST(RefactorNet, ShiftInvariance) {
    Matrix logits(2, 2);
    logits << 0.3, 1.1, 100.3, 101.1;
    const Matrix d = softmax_rows(Var(logits)).value();
    EXPECT_NEAR(d(0, 0), 1.0 / (1.0 + std::exp(0.8)), 1e-12);
    EXPECT_NEAR(d(1, 0), d(0, 0), 1e-12);
    EXPECT_DOUBLE_EQ(softmax_rows(Var(Matrix::Constant(1, 2, 4.0))).value()(0, 0), 0.5);
}

TEST(Gumbel, DegenerateDistributionAlwaysConnects) {
    std::mt19937_64 rng(5);
    Var d(dist_rows({1.0}));
    for (int i = 0; i < 1000; ++i) EXPECT_EQ(sample_gumbel(d, 0.5, true, rng).value()(0, 0), 1.0);
}

TEST(Gumbel, LowTemperatureFrequency) {
    std::mt19937_64 rng(6);
    Var d(dist_rows({0.7}));
    int on = 0;
    for (int i = 0; i < 10000; ++i) on += sample_gumbel(d, 0.01, true, rng).value()(0, 0) == 1.0 ? 1 : 0;
    EXPECT_GE(on / 10000.0, 0.68);
    EXPECT_LE(on / 10000.0, 0.72);
}

TEST(Gumbel, SeededAndBounded) {
    Var d(dist_rows({0.2, 0.5, 0.9}));
    std::mt19937_64 a(7), b(7), c(8);
    for (int i = 0; i < 20; ++i) {
        const Matrix sa = sample_gumbel(d, 0.5, false, a).value();
        const Matrix sb = sample_gumbel(d, 0.5, false, b).value();
        EXPECT_EQ(sa, sb);
        EXPECT_GE(sa.minCoeff(), 0.0);
        EXPECT_LE(sa.maxCoeff(), 1.0);
        const Matrix hard = sample_gumbel(d, 0.5, true, c).value();
        for (Eigen::Index k = 0; k < hard.size(); ++k)
            EXPECT_TRUE(hard.data()[k] == 0.0 || hard.data()[k] == 1.0);
    }
    EXPECT_THROW(sample_gumbel(d, 0.0, true, a), std::invalid_argument);
}

TEST(Gumbel, SubgraphBitsFollowSample) {
    std::mt19937_64 rng(3);
    Var d(dist_rows({0.99999, 0.00001}));
    const auto s = sample_subgraph({{0, 1}, {0, 2}}, d, SampleMode::GumbelHard, 0.5, rng);
    EXPECT_EQ(s.bits, (std::vector<int>{1, 0}));
    EXPECT_EQ(s.connect_weights().rows(), 2);
    const auto argmax = sample_subgraph({{0, 1}, {0, 2}}, Var(dist_rows({0.5, 0.4})), SampleMode::Argmax, 0.5, rng);
    EXPECT_EQ(argmax.bits, (std::vector<int>{1, 0}));
}

TEST(Argmax, TieConnects) {
    EXPECT_EQ(argmax_sample({0.9, 0.1}), 1);
    EXPECT_EQ(argmax_sample({0.1, 0.9}), 0);
    EXPECT_EQ(argmax_sample({0.5, 0.5}), 1);
}

TEST(RegLoss, Examples) {
    EXPECT_EQ(reg_loss(Var(dist_rows({1.0, 0.0})), Var(dist_rows({1.0, 0.0})), {1, 0}).item(), 0.0);
    EXPECT_NEAR(reg_loss(Var(dist_rows({0.5})), Var(dist_rows({1.0})), {1}).item(), std::log(2.0), 1e-12);
    const double expected = -std::log(0.7) - std::log(0.6) - std::log(1 - 0.2) - std::log(1 - 0.1) -
                            std::log(0.9) - std::log(0.5);
    EXPECT_NEAR(reg_loss(Var(dist_rows({0.7, 0.2, 0.9})), Var(dist_rows({0.6, 0.1, 0.5})), {1, 0, 1}).item(),
                expected, 1e-6);
}

TEST(KlTerm, Examples) {
    const Matrix p = dist_rows({0.3, 0.8});
    EXPECT_EQ(kl_term(Var(p), Var(p)).item(), 0.0);
    EXPECT_NEAR(kl_term(Var(dist_rows({1.0})), Var(dist_rows({0.5}))).item(), std::log(2.0), 1e-12);
    EXPECT_NEAR(kl_term(Var(dist_rows({0.8})), Var(dist_rows({0.6}))).item(),
                0.8 * std::log(0.8 / 0.6) + 0.2 * std::log(0.2 / 0.4), 1e-12);
}

TEST(KlTerm, NonNegativeOnRandomPairs) {
    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 1000; ++i) EXPECT_GE(kl_term(Var(dist_rows({u(rng)})), Var(dist_rows({u(rng)}))).item(), 0.0);
}

TEST(SubgraphLogProb, ProductOfChosenClasses) {
    EXPECT_NEAR(subgraph_log_prob(dist_rows({0.7, 0.2}), {1, 0}), std::log(0.7 * 0.8), 1e-12);
}

TEST(OriginalLabels, FollowGraph) {
    KnowledgeGraph kg;
    for (const char* k : {"a", "b", "c"}) kg.add_entity(k, k, false);
    kg.add_relation("r");
    kg.add_triple("b", "r", "a");
    EXPECT_EQ(original_labels(kg, {{0, 1}, {0, 2}}), (std::vector<int>{1, 0}));
}

TEST(RefactorNet, KlAndRegGradients) {
    Nets n;
    Var h = random_rows(3, 3, 1), t = random_rows(3, 3, 2), c = random_rows(1, 4, 3), cs = random_rows(1, 4, 4);
    auto loss = [&] {
        Var p = n.prior.forward(h, t, c);
        Var q = n.posterior.forward(h, t, cs);
        return kl_term(q, p) + scale(reg_loss(p, q, {1, 0, 1}), 0.25);
    };
    std::vector<std::pair<std::string, Var>> params;
    for (auto& [name, p] : n.store.all()) params.emplace_back(name, p.var);
    EXPECT_LT(worst(check_gradients(loss, params)), 1e-4);
}

TEST(RefactorNet, RelaxedSampleGradient) {
    Nets n;
    Var h = random_rows(3, 3, 1), t = random_rows(3, 3, 2), c = random_rows(1, 4, 3);
    std::mt19937_64 rng(2);
    const Matrix noise = gumbel_noise(3, 2, rng);
    auto loss = [&] {
        Var y = sample_gumbel_with_noise(n.prior.forward(h, t, c), noise, 0.5, false);
        return sum(mul(y, y));
    };
    std::vector<std::pair<std::string, Var>> params;
    for (auto& [name, p] : n.store.all())
        if (name.rfind("prior", 0) == 0) params.emplace_back(name, p.var);
    EXPECT_LT(worst(check_gradients(loss, params)), 1e-4);
}
