#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "rrseg/autodiff.hpp"
#include "rrseg/errors.hpp"

using namespace rrseg;
using namespace rrseg::ad;
using rrseg::testutil::gradient_check;

namespace {

constexpr double kTol = 1e-6;

// Projects an arbitrary tensor to a scalar with fixed random weights so that
// gradient structure is probed elementwise, not just through a plain sum.
Var<double> probe(const Var<double>& x, uint64_t seed = 99) {
    Rng rng(seed);
    auto c = constant(TensorD::randn(x->val.shape, rng));
    return sum(mul(x, c));
}

TensorD rnd(std::vector<int64_t> shape, uint64_t seed, double stddev = 1.0) {
    Rng rng(seed);
    return TensorD::randn(std::move(shape), rng, stddev);
}

}  // namespace

TEST_CASE("autodiff: arithmetic op gradients") {
    auto a = leaf(rnd({3, 4}, 1), true);
    auto b = leaf(rnd({3, 4}, 2), true);
    CHECK(gradient_check([&] { return probe(add(a, b)); }, {a, b}) < kTol);
    CHECK(gradient_check([&] { return probe(sub(a, b)); }, {a, b}) < kTol);
    CHECK(gradient_check([&] { return probe(mul(a, b)); }, {a, b}) < kTol);
    CHECK(gradient_check([&] { return probe(scale(a, -1.7)); }, {a}) < kTol);
    CHECK(gradient_check([&] { return probe(add_scalar(a, 2.5)); }, {a}) < kTol);
    CHECK(gradient_check([&] { return probe(mul(a, a)); }, {a}) < kTol);  // shared parent
}

TEST_CASE("autodiff: matmul / transpose / rowvec gradients") {
    auto a = leaf(rnd({3, 5}, 3), true);
    auto b = leaf(rnd({5, 2}, 4), true);
    auto bias = leaf(rnd({1, 5}, 5), true);
    auto s = leaf(rnd({1}, 6), true);
    CHECK(gradient_check([&] { return probe(matmul(a, b)); }, {a, b}) < kTol);
    CHECK(gradient_check([&] { return probe(transpose(a)); }, {a}) < kTol);
    CHECK(gradient_check([&] { return probe(add_rowvec(a, bias)); }, {a, bias}) < kTol);
    CHECK(gradient_check([&] { return probe(mul_scalar_var(a, s)); }, {a, s}) < kTol);
}

TEST_CASE("autodiff: shape op gradients") {
    auto a = leaf(rnd({4, 3}, 7), true);
    auto b = leaf(rnd({2, 3}, 8), true);
    auto c = leaf(rnd({4, 2}, 9), true);
    CHECK(gradient_check([&] { return probe(reshape(a, {2, 6})); }, {a}) < kTol);
    CHECK(gradient_check([&] { return probe(concat_rows<double>({a, b})); }, {a, b}) < kTol);
    CHECK(gradient_check([&] { return probe(concat_cols<double>({a, c})); }, {a, c}) < kTol);
    CHECK(gradient_check([&] { return probe(slice_rows(a, 1, 3)); }, {a}) < kTol);
    CHECK(gradient_check([&] { return probe(slice_cols(a, 0, 2)); }, {a}) < kTol);
    CHECK_THROWS_AS(slice_rows(a, 2, 2), ShapeError);
    CHECK_THROWS_AS(matmul(a, b), ShapeError);
}

TEST_CASE("autodiff: reduction gradients") {
    auto a = leaf(rnd({4, 3}, 10), true);
    CHECK(gradient_check([&] { return sum(a); }, {a}) < kTol);
    CHECK(gradient_check([&] { return mean(a); }, {a}) < kTol);
    CHECK(gradient_check([&] { return probe(mean_rows(a)); }, {a}) < kTol);
    std::vector<int64_t> rows = {0, 2, 3};
    CHECK(gradient_check([&] { return probe(masked_mean_rows(a, rows)); }, {a}) < kTol);
    std::vector<int64_t> idx = {1, 4, 7, 10};
    CHECK(gradient_check([&] { return masked_max(a, idx); }, {a}) < kTol);
    auto sq = leaf(rnd({4, 4}, 11), true);
    CHECK(gradient_check([&] { return probe(take_diag(sq)); }, {sq}) < kTol);
    CHECK(gradient_check([&] { return probe(logsumexp_rows(a)); }, {a}) < kTol);
}

TEST_CASE("autodiff: elementwise nonlinearity gradients") {
    // keep relu inputs away from the kink
    TensorD init = rnd({3, 4}, 12);
    for (auto& x : init.v)
        if (std::abs(x) < 0.1) x += 0.3;
    auto a = leaf(init, true);
    CHECK(gradient_check([&] { return probe(relu(a)); }, {a}) < kTol);
    CHECK(gradient_check([&] { return probe(gelu(a)); }, {a}) < kTol);
    CHECK(gradient_check([&] { return probe(sigmoid(a)); }, {a}) < kTol);
    CHECK(gradient_check([&] { return probe(ad::exp(a)); }, {a}) < kTol);
    auto pos = leaf(TensorD::full({3, 3}, 0.8), true);
    CHECK(gradient_check([&] { return probe(ad::log(pos)); }, {pos}) < kTol);
    CHECK(gradient_check([&] { return probe(softmax_rows(a)); }, {a}) < kTol);
}

TEST_CASE("autodiff: normalization gradients") {
    auto a = leaf(rnd({5, 6}, 13), true);
    auto gamma = leaf(rnd({1, 6}, 14, 0.3), true);
    auto beta = leaf(rnd({1, 6}, 15, 0.3), true);
    CHECK(gradient_check([&] { return probe(layernorm_rows(a, gamma, beta)); },
                         {a, gamma, beta}) < kTol);
    CHECK(gradient_check([&] { return probe(l2norm_rows(a)); }, {a}) < kTol);

    SUBCASE("batchnorm training mode") {
        TensorD rm = TensorD::zeros({6});
        TensorD rv = TensorD::full({6}, 1.0);
        // stats mutate every forward; run the check with fresh copies per call
        auto fwd = [&] {
            TensorD rm_c = rm, rv_c = rv;
            return probe(batchnorm_rows(a, gamma, beta, &rm_c, &rv_c, true));
        };
        CHECK(gradient_check(fwd, {a, gamma, beta}) < kTol);
    }
    SUBCASE("batchnorm eval mode") {
        TensorD rm = rnd({6}, 16, 0.2);
        TensorD rv = TensorD::full({6}, 0.9);
        auto fwd = [&] { return probe(batchnorm_rows(a, gamma, beta, &rm, &rv, false)); };
        CHECK(gradient_check(fwd, {a, gamma, beta}) < kTol);
    }
    SUBCASE("batchnorm updates running stats only in training") {
        TensorD rm = TensorD::zeros({6});
        TensorD rv = TensorD::full({6}, 1.0);
        batchnorm_rows(a, gamma, beta, &rm, &rv, true);
        bool moved = false;
        for (auto x : rm.v) moved |= (x != 0.0);
        CHECK(moved);
        TensorD rm2 = rm, rv2 = rv;
        batchnorm_rows(a, gamma, beta, &rm2, &rv2, false);
        CHECK(rm2.v == rm.v);
        CHECK(rv2.v == rv.v);
    }
}

TEST_CASE("autodiff: conv2d gradients") {
    auto x = leaf(rnd({5, 6, 3}, 17), true);
    SUBCASE("3x3 stride 1 pad 1") {
        auto w = leaf(rnd({9 * 3, 4}, 18, 0.4), true);
        auto b = leaf(rnd({1, 4}, 19, 0.2), true);
        auto out = conv2d(x, w, b, 3, 1, 1);
        CHECK(out->val.shape == std::vector<int64_t>({5, 6, 4}));
        CHECK(gradient_check([&] { return probe(conv2d(x, w, b, 3, 1, 1)); }, {x, w, b}) < kTol);
    }
    SUBCASE("3x3 stride 2 pad 1") {
        auto x2 = leaf(rnd({6, 8, 2}, 20), true);
        auto w = leaf(rnd({9 * 2, 3}, 21, 0.4), true);
        auto b = leaf(rnd({1, 3}, 22, 0.2), true);
        auto out = conv2d(x2, w, b, 3, 2, 1);
        CHECK(out->val.shape == std::vector<int64_t>({3, 4, 3}));
        CHECK(gradient_check([&] { return probe(conv2d(x2, w, b, 3, 2, 1)); }, {x2, w, b}) < kTol);
    }
}

TEST_CASE("autodiff: transposed conv and bilinear resize gradients") {
    auto x = leaf(rnd({3, 4, 4}, 23), true);
    auto w = leaf(rnd({4, 4 * 2}, 24, 0.4), true);
    auto b = leaf(rnd({1, 2}, 25, 0.2), true);
    auto up = conv_transpose2x2(x, w, b);
    CHECK(up->val.shape == std::vector<int64_t>({6, 8, 2}));
    CHECK(gradient_check([&] { return probe(conv_transpose2x2(x, w, b)); }, {x, w, b}) < kTol);

    CHECK(gradient_check([&] { return probe(bilinear_resize(x, 7, 9)); }, {x}) < kTol);
    CHECK(gradient_check([&] { return probe(bilinear_resize(x, 2, 2)); }, {x}) < kTol);
}

TEST_CASE("autodiff: gather, bce, weighted sum gradients") {
    auto table = leaf(rnd({7, 3}, 26), true);
    std::vector<int64_t> ids = {2, 2, 5, 0};
    CHECK(gradient_check([&] { return probe(gather_rows(table, ids)); }, {table}) < kTol);

    auto logits = leaf(rnd({4, 4}, 27), true);
    TensorD target = TensorD::zeros({4, 4});
    for (int i = 0; i < 8; ++i) target[i * 2] = 1.0;
    CHECK(gradient_check([&] { return bce_with_logits_mean(logits, target); }, {logits}) < kTol);

    auto t1 = leaf(rnd({1}, 28), true);
    auto t2 = leaf(rnd({1}, 29), true);
    CHECK(gradient_check([&] { return weighted_sum<double>({t1, t2}, {0.3, 1.7}); }, {t1, t2}) <
          kTol);
}

TEST_CASE("autodiff: grad bookkeeping") {
    SUBCASE("no-grad mode builds detached nodes") {
        auto a = leaf(rnd({2, 2}, 30), true);
        NoGradGuard guard;
        auto y = mul(a, a);
        CHECK_FALSE(y->needs);
        CHECK(y->parents.empty());
    }
    SUBCASE("ops on constants do not track") {
        auto c = constant(rnd({2, 2}, 31));
        auto y = mul(c, c);
        CHECK_FALSE(y->needs);
    }
    SUBCASE("grads accumulate across backward calls until zeroed") {
        auto a = leaf(rnd({2, 2}, 32), true);
        auto l1 = sum(mul(a, a));
        ad::backward(l1);
        TensorD g1 = a->grad;
        auto l2 = sum(mul(a, a));
        ad::backward(l2);
        for (int64_t i = 0; i < g1.numel(); ++i)
            CHECK(a->grad[i] == doctest::Approx(2 * g1[i]));
        a->zero_grad();
        CHECK(a->grad.numel() == 0);
    }
    SUBCASE("diamond-shaped graph accumulates both paths") {
        auto a = leaf(TensorD::full({1}, 3.0), true);
        auto b = scale(a, 2.0);
        auto c = scale(a, 5.0);
        auto y = sum(add(b, c));
        ad::backward(y);
        CHECK(a->grad[0] == doctest::Approx(7.0));
    }
}
