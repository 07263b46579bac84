#include "support.hpp"

#include "vrkg/pipeline.hpp"
#include "vrkg/recommender.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace vrkg;
using vrkg::testing::check_gradients;
using vrkg::testing::worst;

namespace {

Var column(std::initializer_list<double> v) {
    Matrix m(static_cast<Eigen::Index>(v.size()), 1);
    Eigen::Index i = 0;
    for (double x : v) m(i++, 0) = x;
    return Var(m);
}

Var row(std::initializer_list<double> v) {
    Matrix m(1, static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) m(0, i++) = x;
    return Var(m);
}

}  // namespace

TEST(UserRepresentation, Examples) {
    Matrix tails(3, 2);
    tails << 1, 2, 3, 4, 5, 6;
    EXPECT_EQ(user_representation(column({0, 0, 0}), Var(tails), 2).value(), Matrix::Zero(1, 2));
    EXPECT_EQ(user_representation(column({1}), Var(Matrix(tails.row(1))), 2).value(), Matrix(tails.row(1)));
    Matrix expected(1, 2);
    expected << 0.5 * 1 + 0.25 * 3 + 0.1 * 5, 0.5 * 2 + 0.25 * 4 + 0.1 * 6;
    EXPECT_TRUE(user_representation(column({0.5, 0.25, 0.1}), Var(tails), 2).value().isApprox(expected, 1e-15));
    EXPECT_EQ(user_representation(Var(Matrix(0, 1)), Var(Matrix(0, 2)), 2).value(), Matrix::Zero(1, 2));
}

TEST(RecommendScores, AlphaOneIsSoftmax) {
    Matrix items(3, 2);
    items << 1, 0, 0, 1, 1, 1;
    Var u = row({0.4, -0.2});
    const Matrix s = recommend_scores(u, Var(items), column({0.9}), {11}, {10, 11, 12}, 1.0).value();
    const Matrix soft = softmax_rows(Var(Matrix(u.value() * items.transpose()))).value();
    EXPECT_TRUE(s.isApprox(soft, 1e-15));
}

TEST(RecommendScores, AlphaZeroMassOnOneItem) {
    Matrix items = Matrix::Random(3, 2);
    const Matrix s = recommend_scores(row({0.3, 0.1}), Var(items), column({0.4, 0.6}), {11, 11}, {10, 11, 12}, 0.0).value();
    EXPECT_DOUBLE_EQ(s(0, 1), 1.0);
    EXPECT_DOUBLE_EQ(s(0, 0), 0.0);
}

TEST(RecommendScores, AlphaMixture) {
    Matrix items(3, 2);
    items << 1, 0, 0, 1, -1, 1;
    Var u = row({0.5, 0.2});
    // Pairs: two into item 10, one into item 12, one into a non-item tail.
    const Matrix s =
        recommend_scores(u, Var(items), column({0.2, 0.3, 0.5, 0.9}), {10, 10, 12, 99}, {10, 11, 12}, 0.1).value();
    const double l0 = std::exp(0.5), l1 = std::exp(0.2), l2 = std::exp(-0.3), z = l0 + l1 + l2;
    const double m0 = 0.5, m2 = 0.5, zm = 1.0;
    EXPECT_NEAR(s(0, 0), 0.1 * l0 / z + 0.9 * m0 / zm, 1e-12);
    EXPECT_NEAR(s(0, 1), 0.1 * l1 / z, 1e-12);
    EXPECT_NEAR(s(0, 2), 0.1 * l2 / z + 0.9 * m2 / zm, 1e-12);
    EXPECT_NEAR(s.sum(), 1.0, 1e-6);
}

TEST(RecommendScores, NoMassFallsBackToSoftmax) {
    Matrix items(2, 2);
    items << 1, 0, 0, 1;
    Var u = row({1.0, 0.0});
    const Matrix s = recommend_scores(u, Var(items), column({0.0, 0.7}), {10, 99}, {10, 11}, 0.1).value();
    EXPECT_NEAR(s(0, 0), std::exp(1.0) / (std::exp(1.0) + 1.0), 1e-12);
    EXPECT_NEAR(s.sum(), 1.0, 1e-12);
}

TEST(RecLoss, Examples) {
    Config c;
    Var zero = Var::scalar(0.0);
    EXPECT_DOUBLE_EQ(rec_loss(row({1.0, 0.0}), {0}, zero, zero, c).item(), 0.0);
    EXPECT_NEAR(rec_loss(row({0.5, 0.5}), {1}, Var::scalar(0.1), Var::scalar(2.0), c).item(),
                std::log(2.0) + 1.0 + 0.005, 1e-12);
    c.gamma = 0.0;
    c.lambda = 0.0;
    EXPECT_NEAR(rec_loss(row({0.25, 0.75}), {0}, Var::scalar(3.0), Var::scalar(4.0), c).item(), std::log(4.0), 1e-12);
    EXPECT_NEAR(target_log_likelihood(row({0.5, 0.25}), {0, 1}).item(), -(std::log(2.0) + std::log(4.0)) / 2, 1e-12);
}

TEST(Elbo, EqualDistributionsAndConstantLikelihood) {
    Matrix p(2, 2);
    p << 0.3, 0.7, 0.6, 0.4;
    auto lik = [](const std::vector<int>&) { return -1.25; };
    EXPECT_NEAR(elbo_exact(p, p, lik), -1.25, 1e-12);
    std::mt19937_64 rng(1);
    EXPECT_NEAR(elbo_monte_carlo(p, p, lik, 50, rng), -1.25, 1e-12);
}

TEST(Elbo, MonteCarloApproachesExact) {
    Matrix q(2, 2), p(2, 2);
    q << 0.8, 0.2, 0.3, 0.7;
    p << 0.5, 0.5, 0.4, 0.6;
    auto lik = [](const std::vector<int>& b) { return -0.5 - 1.5 * b[0] + 0.7 * b[1]; };
    std::mt19937_64 rng(3);
    EXPECT_NEAR(elbo_monte_carlo(q, p, lik, 20000, rng), elbo_exact(q, p, lik), 0.03);
}

TEST(RankItems, Examples) {
    const std::vector<EntityId> items{5, 3, 9};
    RowVector s(3);
    s << 0.1, 0.7, 0.2;
    EXPECT_EQ(rank_items(s, items, 1), std::vector<EntityId>{3});
    RowVector tie(3);
    tie << 0.4, 0.2, 0.4;
    EXPECT_EQ(rank_items(tie, items, 1), std::vector<EntityId>{5});
    EXPECT_EQ(rank_items(s, items, 10), (std::vector<EntityId>{3, 9, 5}));
}

TEST(RankItems, InvariantUnderMonotoneTransform) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<EntityId> items(20);
    std::iota(items.begin(), items.end(), 0);
    RowVector s(20);
    for (auto& x : s) x = u(rng);
    const RowVector t = (s.array() * 3.0).exp().matrix();
    EXPECT_EQ(rank_items(s, items, 20), rank_items(t, items, 20));
}

TEST(ItemColumns, DropsUnknownTargets) {
    EXPECT_EQ(item_columns({4, 7, 9}, {9, 5, 4}), (std::vector<int>{2, 0}));
}

TEST(Recommender, FullRecLossGradient) {
    Config cfg = vrkg::testing::tiny_config();
    cfg.gumbel_hard = false;
    auto f = vrkg::testing::make_fixture(cfg);
    Model& model = *f.model;
    const auto examples = rec_examples(f.workspace.examples);
    const TurnExample& ex = examples.at(0);
    const auto heads = ex.context_entities();
    const auto cols = item_columns(model.kg.items(), ex.target_items);
    auto loss = [&] {
        std::mt19937_64 rng(5);
        Var ent = model.graph.encode(model.kg);
        RecPass pass = run_recommender(model, ent, ex.context, heads, ex.target_items, RecMode::Train, rng);
        EXPECT_FALSE(pass.candidates.empty());
        Var kl = kl_term(pass.posterior, pass.prior);
        Var reg = reg_loss(pass.prior, pass.posterior, original_labels(model.kg, pass.candidates.pairs));
        return rec_loss(pass.scores, cols, kl, reg, model.config);
    };
    std::vector<std::pair<std::string, Var>> params;
    for (auto& [name, p] : model.store.all())
        if (p.group != ParamGroup::Generator) params.emplace_back(name, p.var);
    const auto checks = check_gradients(loss, params, 1e-6, 12);
    for (const auto& c : checks) EXPECT_LT(c.rel_error, 1e-4) << c.name;
}
