#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace rrseg {

// Plain binary mask for evaluation paths (no autodiff involvement).
struct BinMask {
    int64_t h = 0, w = 0;
    std::vector<uint8_t> v;  // 0/1

    BinMask() = default;
    BinMask(int64_t h_, int64_t w_) : h(h_), w(w_), v(static_cast<size_t>(h_ * w_), 0) {}
    uint8_t& at(int64_t y, int64_t x) { return v[static_cast<size_t>(y * w + x)]; }
    uint8_t at(int64_t y, int64_t x) const { return v[static_cast<size_t>(y * w + x)]; }
    int64_t area() const;
};

struct EvalReport {
    std::vector<std::pair<std::string, double>> per_sample_iou;
    double gIoU = 0;
    double cIoU = 0;
    std::map<double, double> pr_at;                 // X in {0.5..0.9}
    std::map<std::string, double> per_category_iou; // optional
    std::string to_json() const;
};

// |P ∩ G| / |P ∪ G|; 1.0 when both masks are empty.
double iou(const BinMask& p, const BinMask& g);

// gIoU = mean per-sample IoU, cIoU = sum(I)/sum(U) over the set.
std::pair<double, double> giou_ciou(const std::vector<std::pair<BinMask, BinMask>>& samples);

// Fraction of samples with IoU strictly exceeding X.
double pr_at_x(const std::vector<double>& ious, double x);

inline const std::vector<double>& pr_thresholds() {
    static const std::vector<double> t = {0.5, 0.6, 0.7, 0.8, 0.9};
    return t;
}

// Full protocol over aligned prediction/ground-truth mask lists. The optional
// categories vector (same length) enables the per-category mean-IoU table.
EvalReport evaluate_masks(const std::vector<std::string>& ids,
                          const std::vector<BinMask>& preds, const std::vector<BinMask>& gts,
                          const std::vector<std::string>* categories = nullptr);

// Directory variant: for every <id>.png (or .pgm) in gt_dir a matching
// prediction must exist in pred_dir; throws MissingPredictionError naming the
// absent ids otherwise.
EvalReport evaluate(const std::string& pred_dir, const std::string& gt_dir,
                    const std::map<std::string, std::string>* categories = nullptr);

}  // namespace rrseg
