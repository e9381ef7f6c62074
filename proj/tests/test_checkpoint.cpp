#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "rrseg/checkpoint.hpp"
#include "rrseg/errors.hpp"

using namespace rrseg;
namespace fs = std::filesystem;

namespace {

ModelConfig toy_config() {
    ModelConfig cfg;
    cfg.vocab_size = 2048;
    cfg.seed = 42;
    return validate_config(cfg);
}

fs::path temp_file(const char* name) {
    fs::path dir = fs::temp_directory_path() / "rrseg_ckpt_test";
    fs::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST_CASE("checkpoint: parameters, buffers and config round-trip exactly") {
    ModelConfig cfg = toy_config();
    Model<float> model(cfg);
    // move some state off init so the round trip is non-trivial
    Rng rng(1);
    for (auto& e : model.params().params)
        if (e.var->needs)
            for (auto& x : e.var->val.v) x += static_cast<float>(rng.normal() * 0.01);
    for (auto& b : model.params().buffers)
        for (auto& x : b.tensor->v) x += 0.25f;

    fs::path path = temp_file("roundtrip.ckpt");
    save_checkpoint(path.string(), model);

    ModelConfig peeked = peek_checkpoint_config(path.string());
    CHECK(peeked.seed == cfg.seed);
    CHECK(peeked.vocab_size == cfg.vocab_size);

    auto loaded = load_checkpoint(path.string());
    REQUIRE(loaded->params().params.size() == model.params().params.size());
    for (size_t i = 0; i < model.params().params.size(); ++i) {
        const auto& a = model.params().params[i];
        const auto& b = loaded->params().params[i];
        CHECK(a.name == b.name);
        for (int64_t k = 0; k < a.var->val.numel(); ++k)
            CHECK(a.var->val[k] == b.var->val[k]);
        CHECK(a.var->needs == b.var->needs);
    }
    for (size_t i = 0; i < model.params().buffers.size(); ++i)
        CHECK(model.params().buffers[i].tensor->v == loaded->params().buffers[i].tensor->v);

    // same forward on both models, bit for bit
    Rng dr(2);
    Tensor img = Tensor::randn({128, 128, 3}, dr, 0.2);
    ad::NoGradGuard guard;
    auto fa = model.forward(img, "the green triangle at the top", false);
    auto fb = loaded->forward(img, "the green triangle at the top", false);
    for (int64_t i = 0; i < fa.selected_mask()->val.numel(); ++i)
        CHECK(fa.selected_mask()->val[i] == fb.selected_mask()->val[i]);
}

TEST_CASE("checkpoint: train state round trip") {
    ModelConfig cfg = toy_config();
    Model<float> model(cfg);
    TrainState st;
    st.step = 123;
    st.epoch = 4;
    st.best_giou = 0.875;
    st.rng_state = "somestate";
    Rng rng(3);
    for (const auto& e : model.trainable_parameters())
        st.moments.emplace_back(Tensor::randn(e.var->val.shape, rng, 0.1),
                                Tensor::randn(e.var->val.shape, rng, 0.1));
    fs::path path = temp_file("state.ckpt");
    save_checkpoint(path.string(), model, &st);

    std::optional<TrainState> back;
    auto loaded = load_checkpoint(path.string(), &back);
    REQUIRE(back.has_value());
    CHECK(back->step == 123);
    CHECK(back->epoch == 4);
    CHECK(back->best_giou == 0.875);
    CHECK(back->rng_state == "somestate");
    REQUIRE(back->moments.size() == st.moments.size());
    for (size_t i = 0; i < st.moments.size(); ++i) {
        CHECK(back->moments[i].first.v == st.moments[i].first.v);
        CHECK(back->moments[i].second.v == st.moments[i].second.v);
    }
}

TEST_CASE("checkpoint: malformed files are rejected") {
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_checkpoint("/nonexistent/nope.ckpt"), MissingFileError);
    }
    SUBCASE("wrong magic") {
        fs::path path = temp_file("bad_magic.ckpt");
        std::ofstream f(path, std::ios::binary);
        f << "NOTACKPTxxxxxxxxxxxxxxxx";
        f.close();
        CHECK_THROWS_AS(load_checkpoint(path.string()), CheckpointShapeError);
    }
    SUBCASE("truncated payload") {
        ModelConfig cfg = toy_config();
        Model<float> model(cfg);
        fs::path path = temp_file("trunc.ckpt");
        save_checkpoint(path.string(), model);
        auto size = fs::file_size(path);
        fs::resize_file(path, size / 2);
        CHECK_THROWS_AS(load_checkpoint(path.string()), CheckpointShapeError);
    }
}
