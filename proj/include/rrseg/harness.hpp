#pragma once

#include <string>
#include <vector>

#include "rrseg/data.hpp"
#include "rrseg/metrics.hpp"
#include "rrseg/model.hpp"
#include "rrseg/train.hpp"

namespace rrseg {

struct PredictOutput {
    BinMask mask;         // H2 x W2 thresholded prediction
    Tensor dense_logits;  // [H2/4, W2/4] temperature-scaled cosine map
    Tensor dense_probs;   // sigmoid of the above
};

// Full two-stage forward on one image/text pair (inference mode).
PredictOutput predict_sample(Model<float>& model, const Tensor& image,
                             const std::string& text);

// Predicts every sample and assembles the full metric report; per-category
// IoU is included when samples carry categories.
EvalReport evaluate_model(Model<float>& model, const std::vector<Sample>& samples);

enum class Diagnosis { Ok, LocalizationError, SegmentationError };

// Error attribution: localization_error when the dense prompt's argmax region
// misses the (downsampled) target (IoU < 0.1); segmentation_error when the
// localization was fine but the final mask IoU < 0.5. Thresholds are artifact
// conventions.
Diagnosis diagnose(const BinMask& pred, const Tensor& dense_logits, const BinMask& gt);

const char* diagnosis_name(Diagnosis d);

struct DiagnoseCounts {
    int64_t ok = 0, localization_error = 0, segmentation_error = 0;
};

// ---- file-level operations behind the CLI / C API ----

// Trains from a config file on root/{train,val}.tsv; writes train_log.jsonl,
// best.ckpt and last.ckpt under out_dir.
TrainResult run_train(const std::string& config_path, const std::string& data_root,
                      const std::string& out_dir);

// Evaluates a checkpoint on root/<split>.tsv and writes the JSON report.
EvalReport run_eval(const std::string& ckpt_path, const std::string& data_root,
                    const std::string& split, const std::string& report_path);

// Single-image prediction; writes a 1-bit PNG mask and optionally the dense
// prompt heatmap as 8-bit PGM.
void run_predict(const std::string& ckpt_path, const std::string& image_path,
                 const std::string& text, const std::string& mask_out_path,
                 const std::string& dense_pgm_path);

DiagnoseCounts run_diagnose(const std::string& ckpt_path, const std::string& data_root,
                            const std::string& split, const std::string& report_path);

void run_synth(const std::string& spec_path, int64_t n, const std::string& out_dir,
               const std::string& split);

}  // namespace rrseg
