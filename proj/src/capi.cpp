#include "rrseg.h"

#include <cstring>
#include <memory>
#include <string>

#include "rrseg/checkpoint.hpp"
#include "rrseg/errors.hpp"
#include "rrseg/harness.hpp"

namespace {

thread_local std::string g_last_error;

int fail(const std::exception& e, int code) {
    g_last_error = e.what();
    return code;
}

template <typename F>
int guarded(F&& fn) {
    try {
        fn();
        return RRSEG_OK;
    } catch (const rrseg::Error& e) {
        return fail(e, e.kind() == rrseg::ErrorKind::Validation ? RRSEG_ERR_VALIDATION
                                                                : RRSEG_ERR_RUNTIME);
    } catch (const std::exception& e) {
        return fail(e, RRSEG_ERR_RUNTIME);
    }
}

const char* require_str(const char* s, const char* what) {
    if (!s) throw rrseg::ConfigError(std::string(what) + " must not be NULL");
    return s;
}

}  // namespace

struct rrseg_model {
    std::unique_ptr<rrseg::Model<float>> impl;
};

extern "C" {

const char* rrseg_version(void) { return "0.1.0"; }

const char* rrseg_last_error(void) { return g_last_error.c_str(); }

int rrseg_model_open(const char* checkpoint_path, rrseg_model** out_model) {
    return guarded([&] {
        require_str(checkpoint_path, "checkpoint_path");
        if (!out_model) throw rrseg::ConfigError("out_model must not be NULL");
        auto handle = std::make_unique<rrseg_model>();
        handle->impl = rrseg::load_checkpoint(checkpoint_path);
        *out_model = handle.release();
    });
}

void rrseg_model_close(rrseg_model* model) { delete model; }

int rrseg_model_input_size(const rrseg_model* model, int64_t* h2, int64_t* w2) {
    return guarded([&] {
        if (!model) throw rrseg::ConfigError("model must not be NULL");
        if (h2) *h2 = model->impl->config().H2;
        if (w2) *w2 = model->impl->config().W2;
    });
}

int rrseg_model_predict(rrseg_model* model, const float* image_rgb, const char* text,
                        uint8_t* mask_out, float* dense_out) {
    return guarded([&] {
        if (!model) throw rrseg::ConfigError("model must not be NULL");
        if (!image_rgb || !mask_out)
            throw rrseg::ConfigError("image_rgb and mask_out must not be NULL");
        require_str(text, "text");
        const auto& cfg = model->impl->config();
        rrseg::Tensor image({cfg.H2, cfg.W2, 3});
        std::memcpy(image.v.data(), image_rgb, sizeof(float) * static_cast<size_t>(image.numel()));
        rrseg::PredictOutput out = rrseg::predict_sample(*model->impl, image, text);
        for (size_t i = 0; i < out.mask.v.size(); ++i) mask_out[i] = out.mask.v[i];
        if (dense_out)
            std::memcpy(dense_out, out.dense_probs.v.data(),
                        sizeof(float) * static_cast<size_t>(out.dense_probs.numel()));
    });
}

int rrseg_train(const char* config_path, const char* data_root, const char* out_dir) {
    return guarded([&] {
        rrseg::run_train(require_str(config_path, "config_path"),
                         require_str(data_root, "data_root"), require_str(out_dir, "out_dir"));
    });
}

int rrseg_eval(const char* checkpoint_path, const char* data_root, const char* split,
               const char* report_path) {
    return guarded([&] {
        rrseg::run_eval(require_str(checkpoint_path, "checkpoint_path"),
                        require_str(data_root, "data_root"), require_str(split, "split"),
                        report_path ? report_path : "");
    });
}

int rrseg_predict_file(const char* checkpoint_path, const char* image_path, const char* text,
                       const char* mask_out_path, const char* dense_pgm_path) {
    return guarded([&] {
        rrseg::run_predict(require_str(checkpoint_path, "checkpoint_path"),
                           require_str(image_path, "image_path"), require_str(text, "text"),
                           require_str(mask_out_path, "mask_out_path"),
                           dense_pgm_path ? dense_pgm_path : "");
    });
}

int rrseg_diagnose(const char* checkpoint_path, const char* data_root, const char* split,
                   const char* report_path, int64_t* ok_count, int64_t* localization_errors,
                   int64_t* segmentation_errors) {
    return guarded([&] {
        rrseg::DiagnoseCounts counts = rrseg::run_diagnose(
            require_str(checkpoint_path, "checkpoint_path"),
            require_str(data_root, "data_root"), require_str(split, "split"),
            report_path ? report_path : "");
        if (ok_count) *ok_count = counts.ok;
        if (localization_errors) *localization_errors = counts.localization_error;
        if (segmentation_errors) *segmentation_errors = counts.segmentation_error;
    });
}

int rrseg_synth_data(const char* spec_path, int64_t n, const char* out_dir,
                     const char* split) {
    return guarded([&] {
        rrseg::run_synth(spec_path ? spec_path : "", n, require_str(out_dir, "out_dir"),
                         split ? split : "train");
    });
}

}  // extern "C"
