#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "rrseg/checkpoint.hpp"
#include "rrseg/data.hpp"
#include "rrseg/losses.hpp"
#include "rrseg/model.hpp"

namespace rrseg {

// Auxiliary weight for the IoU-prediction L2 term (keeps T_IoU trained).
inline constexpr double kIouAuxWeight = 0.05;
// Fixed InfoNCE / spatial-alignment temperature.
inline constexpr double kNceTemperature = 0.07;

class AdamW {
public:
    AdamW(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8,
          double weight_decay = 0.01);

    void init(const std::vector<nn::ParamStore<float>::Entry>& params);
    // Decoupled weight decay scaled by lr; a zero lr leaves parameters intact.
    void step(const std::vector<nn::ParamStore<float>::Entry>& params, double lr);

    int64_t t() const { return t_; }
    void set_t(int64_t t) { t_ = t; }
    std::vector<std::pair<Tensor, Tensor>> export_moments() const;
    void import_moments(std::vector<std::pair<Tensor, Tensor>> moments);

private:
    double beta1_, beta2_, eps_, weight_decay_;
    int64_t t_ = 0;
    std::vector<Tensor> m_, v_;
};

// Linear warm-up over warmup_frac of total steps, then cosine decay to
// lr_floor.
double lr_at_step(const ModelConfig& cfg, int64_t step, int64_t total_steps);

struct BatchLoss {
    ad::Var<float> total;  // batch-mean spec loss + alpha_samp*NCE + iou aux
    LossBreakdown parts;   // batch-averaged weighted contributions
    double iou_aux = 0;    // weighted aux value included in total
};

// Builds the full training graph for one batch. NCE joins the batch-level
// pooled pairs and is skipped (with a zero contribution) for 1-sample
// batches, where it is undefined.
BatchLoss batch_loss(Model<float>& model, const std::vector<const Sample*>& batch,
                     bool training);

struct StepRecord {
    int64_t step = 0, epoch = 0;
    double lr = 0, loss = 0;
    LossBreakdown parts;
    double iou_aux = 0;
};

struct TrainOptions {
    std::string out_dir;          // empty: no checkpoints written
    std::ostream* log = nullptr;  // JSONL per-step loss breakdown
    std::string resume_from;     // checkpoint with train state
    int64_t stop_after_epoch = -1;  // early stop for resume tests (-1 = off)
};

struct TrainResult {
    std::vector<StepRecord> steps;
    double best_giou = -1.0;
    double final_val_giou = -1.0;
    std::string best_path, last_path;
};

// Full loop: AdamW over trainable parameters only, per-step JSONL logging,
// best-gIoU checkpoint on the validation split, final checkpoint at the end.
// Throws DivergenceError when the loss goes non-finite.
TrainResult train_model(const ModelConfig& cfg, const std::vector<Sample>& train_set,
                        const std::vector<Sample>& val_set, const TrainOptions& opts);

// Mean validation gIoU of thresholded predictions.
double validation_giou(Model<float>& model, const std::vector<Sample>& val_set);

std::string step_record_json(const StepRecord& rec);

}  // namespace rrseg
