#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "rrseg/errors.hpp"
#include "rrseg/losses.hpp"

using namespace rrseg;
using rrseg::testutil::gradient_check;

namespace {

template <typename T>
TensorT<T> binary_mask(int64_t h, int64_t w, uint64_t seed, double p = 0.5) {
    Rng rng(seed);
    TensorT<T> m({h, w});
    for (auto& x : m.v) x = rng.uniform() < p ? T(1) : T(0);
    return m;
}

}  // namespace

TEST_CASE("seg_loss: perfect prediction is numerically zero") {
    Tensor gt = binary_mask<float>(16, 16, 1);
    Tensor logits({16, 16});
    for (int64_t i = 0; i < gt.numel(); ++i) logits[i] = gt[i] > 0 ? 30.0f : -30.0f;
    auto loss = seg_loss(ad::constant(logits), gt, 1.0);
    CHECK(loss->val[0] < 1e-6);
}

TEST_CASE("seg_loss: closed-form value at p = 0.5 with half-ones ground truth") {
    // n = 10000 pixels, logits = 0 so p = 0.5 everywhere, half the gt is 1:
    // BCE = ln 2; dice = 1 - (2*0.5*5000 + 1)/(0.5*10000 + 5000 + 1)
    const int64_t n = 10000;
    Tensor gt({100, 100});
    for (int64_t i = 0; i < n / 2; ++i) gt[i] = 1.0f;
    Tensor logits = Tensor::zeros({100, 100});
    double ce = 0, dice = 0;
    auto loss = seg_loss(ad::constant(logits), gt, 1.0, &ce, &dice);
    double expected_ce = std::log(2.0);
    double expected_dice = 1.0 - (2.0 * 0.5 * 5000.0 + 1.0) / (0.5 * 10000.0 + 5000.0 + 1.0);
    CHECK(ce == doctest::Approx(expected_ce).epsilon(1e-5));
    CHECK(dice == doctest::Approx(expected_dice).epsilon(1e-5));
    CHECK(loss->val[0] == doctest::Approx(expected_ce + expected_dice).epsilon(1e-5));
    CHECK(loss->val[0] == doctest::Approx(1.1931).epsilon(1e-3));
}

TEST_CASE("seg_loss: all-zero gt with confident-zero prediction vanishes") {
    Tensor gt = Tensor::zeros({8, 8});
    Tensor logits = Tensor::full({8, 8}, -30.0f);
    auto loss = seg_loss(ad::constant(logits), gt, 1.0);
    CHECK(loss->val[0] < 1e-6);  // the eps smoothing avoids 0/0
}

TEST_CASE("seg_loss: rejects non-binary gt and shape mismatch") {
    Tensor bad = Tensor::full({4, 4}, 0.5f);
    CHECK_THROWS_AS(seg_loss(ad::constant(Tensor::zeros({4, 4})), bad, 1.0), ShapeError);
    Tensor gt = Tensor::zeros({4, 4});
    CHECK_THROWS_AS(seg_loss(ad::constant(Tensor::zeros({4, 5})), gt, 1.0), ShapeError);
}

TEST_CASE("ortho_loss: worked values") {
    SUBCASE("parallel pooled inputs hit the alpha bound") {
        Rng rng(2);
        TensorD t1 = TensorD::randn({3, 8}, rng);
        auto l = ortho_loss(ad::constant(t1), ad::constant(t1), 0.5);
        CHECK(l->val[0] == doctest::Approx(0.5).epsilon(1e-7));
    }
    SUBCASE("orthogonal pooled inputs give zero") {
        TensorD t1 = TensorD::zeros({2, 4});
        TensorD t2 = TensorD::zeros({2, 4});
        t1.at(0, 0) = t1.at(1, 0) = 1.0;
        t2.at(0, 1) = t2.at(1, 1) = 1.0;
        auto l = ortho_loss(ad::constant(t1), ad::constant(t2), 0.5);
        CHECK(std::abs(l->val[0]) < 1e-12);
    }
    SUBCASE("hand cosine: [1,0] vs [1,1]/sqrt(2) gives alpha/2") {
        TensorD t1 = TensorD::from({1, 2}, {1.0, 0.0});
        TensorD t2 = TensorD::from({1, 2}, {1.0, 1.0});
        auto l = ortho_loss(ad::constant(t1), ad::constant(t2), 0.5);
        CHECK(l->val[0] == doctest::Approx(0.25).epsilon(1e-9));
    }
    SUBCASE("degenerate pooled vector") {
        TensorD z = TensorD::zeros({3, 4});
        TensorD ok = TensorD::full({3, 4}, 1.0);
        CHECK_THROWS_AS(ortho_loss(ad::constant(z), ad::constant(ok), 0.5), DegenerateError);
    }
    SUBCASE("bound property over random pairs") {
        Rng rng(3);
        for (int it = 0; it < 200; ++it) {
            TensorD t1 = TensorD::randn({3, 16}, rng);
            TensorD t2 = TensorD::randn({3, 16}, rng);
            double v = ortho_loss(ad::constant(t1), ad::constant(t2), 0.5)->val[0];
            CHECK(v >= 0.0);
            CHECK(v <= 0.5 + 1e-7);
        }
    }
}

TEST_CASE("downsample rules: majority vs any-foreground") {
    SUBCASE("block-aligned checkerboard survives majority downsampling exactly") {
        // blocks the size of the downsample factor map 1:1 onto output cells
        Tensor gt({32, 32});
        for (int64_t y = 0; y < 32; ++y)
            for (int64_t x = 0; x < 32; ++x) gt.at(y, x) = ((y / 4 + x / 4) % 2) ? 1.0f : 0.0f;
        Tensor down = downsample_majority(gt, 8, 8);
        for (int64_t y = 0; y < 8; ++y)
            for (int64_t x = 0; x < 8; ++x) CHECK(down.at(y, x) == ((y + x) % 2 ? 1.0f : 0.0f));
        // double-size blocks stay exact as well
        Tensor gt2({32, 32});
        for (int64_t y = 0; y < 32; ++y)
            for (int64_t x = 0; x < 32; ++x) gt2.at(y, x) = ((y / 8 + x / 8) % 2) ? 1.0f : 0.0f;
        Tensor down2 = downsample_majority(gt2, 8, 8);
        for (int64_t y = 0; y < 8; ++y)
            for (int64_t x = 0; x < 8; ++x)
                CHECK(down2.at(y, x) == ((y / 2 + x / 2) % 2 ? 1.0f : 0.0f));
    }
    SUBCASE("a single pixel survives any-foreground but not majority") {
        Tensor gt = Tensor::zeros({16, 16});
        gt.at(5, 9) = 1.0f;
        CHECK(downsample_majority(gt, 4, 4).at(1, 2) == 0.0f);
        CHECK(downsample_any(gt, 4, 4).at(1, 2) == 1.0f);
    }
}

TEST_CASE("dense_align_loss: worked values") {
    SUBCASE("perfect hot map vanishes") {
        Tensor gt = binary_mask<float>(32, 32, 4);
        Tensor down = downsample_majority(gt, 8, 8);
        Tensor logits({64, 1});
        for (int64_t i = 0; i < 64; ++i) logits[i] = down[i] > 0 ? 30.0f : -30.0f;
        auto l = dense_align_loss(ad::constant(logits), gt, 8, 8);
        CHECK(l->val[0] < 1e-6);
    }
    SUBCASE("uniform 0.5 prediction is ln 2") {
        Tensor gt = binary_mask<float>(32, 32, 5);
        auto l = dense_align_loss(ad::constant(Tensor::zeros({64, 1})), gt, 8, 8);
        CHECK(l->val[0] == doctest::Approx(std::log(2.0)).epsilon(1e-6));
    }
}

TEST_CASE("spatial_align_loss: CE and MIL modes") {
    const int64_t h1 = 4, w1 = 4, d = 8;
    SUBCASE("CE with a perfectly aligned map vanishes") {
        Tensor gt({16, 16});
        for (int64_t y = 0; y < 16; ++y)
            for (int64_t x = 0; x < 16; ++x) gt.at(y, x) = (y < 8) ? 1.0f : 0.0f;
        Tensor t_sent = Tensor::zeros({1, d});
        t_sent[0] = 1.0f;
        Tensor down = downsample_majority(gt, h1, w1);
        Tensor v({h1 * w1, d});
        for (int64_t i = 0; i < h1 * w1; ++i) v.at(i, 0) = down[i] > 0 ? 1.0f : -1.0f;
        auto l = spatial_align_loss(ad::constant(v), ad::constant(t_sent), gt, SpatMode::CE,
                                    h1, w1);
        CHECK(l->val[0] < 1e-6);
    }
    SUBCASE("MIL satisfied case is ~zero; all-zero gt is degenerate") {
        Tensor gt = Tensor::zeros({16, 16});
        gt.at(2, 2) = 1.0f;  // single foreground pixel
        Tensor t_sent = Tensor::zeros({1, d});
        t_sent[0] = 1.0f;
        Tensor v = Tensor::zeros({h1 * w1, d});
        for (int64_t i = 0; i < h1 * w1; ++i) v.at(i, 0) = -1.0f;
        v.at(0, 0) = 1.0f;  // cell (0,0) holds the foreground pixel
        auto l = spatial_align_loss(ad::constant(v), ad::constant(t_sent), gt, SpatMode::MIL,
                                    h1, w1);
        CHECK(l->val[0] < 1e-5);

        Tensor empty = Tensor::zeros({16, 16});
        CHECK_THROWS_AS(spatial_align_loss(ad::constant(v), ad::constant(t_sent), empty,
                                           SpatMode::MIL, h1, w1),
                        DegenerateError);
    }
}

TEST_CASE("sample_nce_loss: worked 2x2 example and properties") {
    SUBCASE("identical pairs with orthogonal cross pairs at temperature 1") {
        TensorD vis = TensorD::zeros({2, 4});
        vis.at(0, 0) = 1.0;
        vis.at(1, 1) = 1.0;
        auto l = sample_nce_loss(ad::constant(vis), ad::constant(vis), 1.0);
        double expected = -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0));
        CHECK(l->val[0] == doctest::Approx(expected).epsilon(1e-9));
        CHECK(l->val[0] == doctest::Approx(0.3133).epsilon(1e-3));
    }
    SUBCASE("matched batch at vanishing temperature goes to zero") {
        Rng rng(6);
        TensorD x = TensorD::randn({4, 8}, rng);
        auto l = sample_nce_loss(ad::constant(x), ad::constant(x), 1e-3);
        CHECK(l->val[0] < 1e-6);
    }
    SUBCASE("batch permutation leaves the scalar unchanged") {
        Rng rng(7);
        TensorD vis = TensorD::randn({5, 8}, rng);
        TensorD txt = TensorD::randn({5, 8}, rng);
        double base = sample_nce_loss(ad::constant(vis), ad::constant(txt), 0.07)->val[0];
        std::vector<int64_t> perm = {3, 0, 4, 1, 2};
        TensorD visp({5, 8}), txtp({5, 8});
        for (int64_t i = 0; i < 5; ++i)
            for (int64_t j = 0; j < 8; ++j) {
                visp.at(i, j) = vis.at(perm[static_cast<size_t>(i)], j);
                txtp.at(i, j) = txt.at(perm[static_cast<size_t>(i)], j);
            }
        double shuffled = sample_nce_loss(ad::constant(visp), ad::constant(txtp), 0.07)->val[0];
        CHECK(shuffled == doctest::Approx(base).epsilon(1e-12));
    }
    SUBCASE("batch of one is degenerate") {
        TensorD x = TensorD::full({1, 4}, 1.0);
        CHECK_THROWS_AS(sample_nce_loss(ad::constant(x), ad::constant(x), 1.0),
                        DegenerateError);
    }
}

TEST_CASE("mask_pooled_visual: empty pooled mask is degenerate") {
    Tensor v = Tensor::full({16, 8}, 1.0f);
    Tensor gt = Tensor::zeros({16, 16});
    CHECK_THROWS_AS(mask_pooled_visual(ad::constant(v), gt, 4, 4), DegenerateError);
    gt.at(3, 3) = 1.0f;
    auto pooled = mask_pooled_visual(ad::constant(v), gt, 4, 4);
    CHECK(pooled->val.shape == std::vector<int64_t>({1, 8}));
}

TEST_CASE("total_loss: composition and bookkeeping") {
    auto scalar = [](double x) { return ad::constant(TensorT<float>::full({1}, (float)x)); };
    SUBCASE("paper weights") {
        LossTerms<float> terms;
        terms.seg = scalar(1.25);    // ce + dice already combined
        terms.ortho = scalar(0.125); // alpha_ortho applied inside
        terms.samp = scalar(0.4);
        auto tl = total_loss(terms, 0.0, 0.0, 0.5);
        CHECK(tl.value->val[0] == doctest::Approx(1.25 + 0.125 + 0.2).epsilon(1e-6));
        double sum = tl.parts.seg + tl.parts.ortho + tl.parts.dense + tl.parts.spat +
                     tl.parts.samp;
        CHECK(sum == doctest::Approx(tl.parts.total).epsilon(1e-6));
    }
    SUBCASE("all extra weights zero leaves exactly the seg term") {
        LossTerms<float> terms;
        terms.seg = scalar(0.77);
        terms.dense = scalar(123.0);
        terms.spat = scalar(55.0);
        auto tl = total_loss(terms, 0.0, 0.0, 0.0);
        CHECK(tl.value->val[0] == doctest::Approx(0.77).epsilon(1e-7));
    }
}

TEST_CASE("losses: float64 central-difference gradient checks on toy instances") {
    Rng rng(8);
    SUBCASE("seg (bce + dice)") {
        TensorD gt = binary_mask<double>(4, 4, 9);
        auto logits = ad::leaf(TensorD::randn({4, 4}, rng), true);
        auto fwd = [&] { return seg_loss(logits, gt, 1.0); };
        CHECK(gradient_check(fwd, {logits}) < 1e-5);
    }
    SUBCASE("ortho") {
        auto t1 = ad::leaf(TensorD::randn({3, 6}, rng), true);
        auto t2 = ad::leaf(TensorD::randn({3, 6}, rng), true);
        auto fwd = [&] { return ortho_loss(t1, t2, 0.5); };
        CHECK(gradient_check(fwd, {t1, t2}) < 1e-5);
    }
    SUBCASE("dense align") {
        TensorD gt = binary_mask<double>(16, 16, 10);
        auto logits = ad::leaf(TensorD::randn({16, 1}, rng), true);
        auto fwd = [&] { return dense_align_loss(logits, gt, 4, 4); };
        CHECK(gradient_check(fwd, {logits}) < 1e-5);
    }
    SUBCASE("spatial align: CE and MIL") {
        // concentrated foreground so the any-pool downsample keeps background
        // cells; temperature 1 keeps the sigmoids off saturation, where
        // central differences lose their own precision
        TensorD gt = TensorD::zeros({16, 16});
        for (int64_t y = 0; y < 6; ++y)
            for (int64_t x = 0; x < 6; ++x) gt.at(y, x) = 1.0;
        auto v = ad::leaf(TensorD::randn({16, 6}, rng), true);
        auto t = ad::leaf(TensorD::randn({1, 6}, rng), true);
        auto ce = [&] { return spatial_align_loss(v, t, gt, SpatMode::CE, 4, 4, 1.0); };
        CHECK(gradient_check(ce, {v, t}) < 1e-5);
        auto mil = [&] { return spatial_align_loss(v, t, gt, SpatMode::MIL, 4, 4, 1.0); };
        CHECK(gradient_check(mil, {v, t}) < 1e-5);
    }
    SUBCASE("nce") {
        auto vis = ad::leaf(TensorD::randn({3, 6}, rng), true);
        auto txt = ad::leaf(TensorD::randn({3, 6}, rng), true);
        auto fwd = [&] { return sample_nce_loss(vis, txt, 0.07); };
        CHECK(gradient_check(fwd, {vis, txt}) < 1e-5);
    }
}
