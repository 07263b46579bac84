#include "support.hpp"

#include "vrkg/nn.hpp"
#include "vrkg/optim.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace vrkg;
using vrkg::testing::check_gradients;
using vrkg::testing::worst;

namespace {

Var leaf(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    return Var(m, true);
}

}  // namespace

TEST(Tensor, BroadcastArithmeticGradients) {
    std::mt19937_64 rng(1);
    Var a = leaf(3, 4, rng), row = leaf(1, 4, rng), col = leaf(3, 1, rng), s = leaf(1, 1, rng);
    auto f = [&] { return sum(tanh(mul(add(a, row), sub(a, col)) + div(a, add_scalar(exp(s), 1.0)))); };
    EXPECT_LT(worst(check_gradients(f, {{"a", a}, {"row", row}, {"col", col}, {"s", s}})), 1e-6);
}

TEST(Tensor, MatmulAndReductionGradients) {
    std::mt19937_64 rng(2);
    Var a = leaf(3, 5, rng), b = leaf(5, 2, rng);
    auto f = [&] { return mean(sigmoid(matmul(a, b))) + sum(sum_rows(transpose(b))) * sum(sum_cols(a)); };
    EXPECT_LT(worst(check_gradients(f, {{"a", a}, {"b", b}})), 1e-6);
}

TEST(Tensor, SoftmaxAndLayerNormGradients) {
    std::mt19937_64 rng(3);
    Var a = leaf(4, 5, rng), g = leaf(1, 5, rng), bias = leaf(1, 5, rng), w = leaf(4, 5, rng);
    Matrix mask = Matrix::Zero(4, 5);
    mask(1, 2) = -std::numeric_limits<double>::infinity();
    auto f = [&] {
        return sum(mul(softmax_rows(a, mask), w)) + sum(mul(log_softmax_rows(a), w)) +
               sum(mul(layer_norm_rows(a, g, bias), w));
    };
    EXPECT_LT(worst(check_gradients(f, {{"a", a}, {"g", g}, {"b", bias}})), 1e-6);
}

TEST(Tensor, ShapeOpGradients) {
    std::mt19937_64 rng(4);
    Var a = leaf(4, 3, rng), b = leaf(2, 3, rng), r = leaf(1, 3, rng);
    const std::vector<int> idx{3, 0, 3, 1};
    const std::vector<int> cols{2, 0, 2, 3, 0};
    auto f = [&] {
        Var stacked = concat_rows({a, b, repeat_rows(r, 2)});
        Var picked = gather_rows(stacked, idx);
        Var wide = concat_cols({picked, slice_cols(picked, 1, 2)});
        Var spread = scatter_add_cols(slice_rows(wide, 1, 3), cols, 4);
        return sum(mul(spread, spread)) + element(a, 2, 1) * element(b, 0, 0);
    };
    EXPECT_LT(worst(check_gradients(f, {{"a", a}, {"b", b}, {"r", r}})), 1e-6);
}

TEST(Tensor, SparseMatmulGradient) {
    std::mt19937_64 rng(5);
    SparseMatrix s(3, 4);
    s.insert(0, 1) = 0.5;
    s.insert(2, 3) = -1.5;
    s.insert(1, 0) = 2.0;
    s.makeCompressed();
    Var b = leaf(4, 2, rng);
    auto f = [&] { return sum(tanh(sparse_matmul(s, b))); };
    EXPECT_LT(worst(check_gradients(f, {{"b", b}})), 1e-6);
}

TEST(Tensor, LogFloorBlocksGradient) {
    Var a(Matrix::Constant(1, 1, 1e-20), true);
    Var l = log(a, 1e-10);
    EXPECT_DOUBLE_EQ(l.item(), std::log(1e-10));
    backward(l);
    EXPECT_EQ(a.grad()(0, 0), 0.0);
}

TEST(Tensor, FullyMaskedSoftmaxRowIsZero) {
    Var a(Matrix::Random(2, 3));
    Matrix mask = Matrix::Zero(2, 3);
    mask.row(0).setConstant(-std::numeric_limits<double>::infinity());
    const Matrix out = softmax_rows(a, mask).value();
    EXPECT_EQ(out.row(0).cwiseAbs().sum(), 0.0);
    EXPECT_NEAR(out.row(1).sum(), 1.0, 1e-12);
}

TEST(Tensor, StraightThroughTakesHardValueRelaxedGradient) {
    Var relaxed(Matrix::Constant(1, 2, 0.3), true);
    Matrix hard(1, 2);
    hard << 1.0, 0.0;
    Var st = straight_through(relaxed, hard);
    EXPECT_EQ(st.value(), hard);
    backward(sum(scale(st, 3.0)));
    EXPECT_EQ(relaxed.grad(), Matrix::Constant(1, 2, 3.0));
}

TEST(Tensor, DetachStopsGradient) {
    Var a(Matrix::Constant(1, 1, 2.0), true);
    Var out = mul(detach(a), a);
    backward(out);
    EXPECT_DOUBLE_EQ(a.grad()(0, 0), 2.0);
}

TEST(Schedule, WarmupPeaksAtStep2000) {
    WarmupSchedule s{0.5, 2000, 768};
    const double peak = s.rate(2000);
    EXPECT_DOUBLE_EQ(peak, 0.5 / std::sqrt(768.0) / std::sqrt(2000.0));
    for (long long step : {1LL, 10LL, 1000LL, 1999LL, 2001LL, 4000LL, 100000LL}) EXPECT_LT(s.rate(step), peak);
    EXPECT_LT(s.rate(1999), s.rate(2000));
    EXPECT_GT(s.rate(2000), s.rate(2001));
}

TEST(Adam, FrozenGroupIsUntouched) {
    ParameterStore store;
    Var enc = store.create("enc", Matrix::Constant(2, 2, 1.0), ParamGroup::Encoder);
    Var gen = store.create("gen", Matrix::Constant(2, 2, 1.0), ParamGroup::Generator);
    const uint64_t before = store.fingerprint({ParamGroup::Encoder});
    Adam adam;
    for (int i = 0; i < 5; ++i) {
        store.zero_grad();
        backward(sum(mul(enc, enc)) + sum(mul(gen, gen)));
        adam.step(store, {{ParamGroup::Generator, 0.1}});
    }
    EXPECT_EQ(store.fingerprint({ParamGroup::Encoder}), before);
    EXPECT_LT(gen.value()(0, 0), 1.0);
    EXPECT_EQ(adam.steps(), 5);
}

TEST(Adam, StateRoundTrips) {
    ParameterStore a_store, b_store;
    Var a = a_store.create("w", Matrix::Constant(1, 3, 0.5), ParamGroup::Other);
    Var b = b_store.create("w", Matrix::Constant(1, 3, 0.5), ParamGroup::Other);
    Adam a_opt, b_opt;
    auto step = [](ParameterStore& s, Var& v, Adam& opt) {
        s.zero_grad();
        backward(sum(mul(v, v)));
        opt.step(s, {{ParamGroup::Other, 0.01}});
    };
    step(a_store, a, a_opt);
    step(b_store, b, b_opt);
    Adam restored;
    restored.load_state(b_opt.state());
    step(a_store, a, a_opt);
    step(b_store, b, restored);
    EXPECT_EQ(a.value(), b.value());
}

TEST(ParameterStore, CopyPrefixAndFingerprint) {
    ParameterStore store;
    std::mt19937_64 rng(9);
    store.create("prior.w", xavier_init(3, 3, rng), ParamGroup::Other);
    store.create("posterior.w", xavier_init(3, 3, rng), ParamGroup::Other);
    EXPECT_NE(store.get("prior.w").value(), store.get("posterior.w").value());
    store.copy_prefix("prior.", "posterior.");
    EXPECT_EQ(store.get("prior.w").value(), store.get("posterior.w").value());
    const uint64_t f = store.fingerprint({ParamGroup::Other});
    EXPECT_EQ(f, store.fingerprint({ParamGroup::Other}));
    Var w = store.get("prior.w");
    w.mutable_value()(0, 0) += 1.0;
    EXPECT_NE(f, store.fingerprint({ParamGroup::Other}));
}

TEST(Attention, CausalMaskHidesFuture) {
    const Matrix m = attention_mask(3, 3, true, {});
    EXPECT_EQ(m(0, 0), 0.0);
    EXPECT_TRUE(std::isinf(m(0, 1)));
    EXPECT_EQ(m(2, 1), 0.0);
    const Matrix k = attention_mask(2, 3, false, {true, false, true});
    EXPECT_TRUE(std::isinf(k(1, 1)));
    EXPECT_EQ(k(1, 2), 0.0);
}
