#include "rrseg/metrics.hpp"

#include <algorithm>
#include <filesystem>
#include <sstream>

#include <json.hpp>

#include "rrseg/errors.hpp"
#include "rrseg/image_io.hpp"

namespace fs = std::filesystem;

namespace rrseg {

int64_t BinMask::area() const {
    int64_t n = 0;
    for (uint8_t x : v) n += (x != 0);
    return n;
}

double iou(const BinMask& p, const BinMask& g) {
    if (p.h != g.h || p.w != g.w)
        throw ShapeError("iou: mask sizes differ (" + std::to_string(p.h) + "x" +
                         std::to_string(p.w) + " vs " + std::to_string(g.h) + "x" +
                         std::to_string(g.w) + ")");
    int64_t inter = 0, uni = 0;
    for (size_t i = 0; i < p.v.size(); ++i) {
        bool a = p.v[i] != 0, b = g.v[i] != 0;
        inter += (a && b);
        uni += (a || b);
    }
    if (uni == 0) return 1.0;  // agreement on absence
    return static_cast<double>(inter) / static_cast<double>(uni);
}

std::pair<double, double> giou_ciou(const std::vector<std::pair<BinMask, BinMask>>& samples) {
    if (samples.empty()) throw EmptySetError("giou_ciou: no samples");
    double iou_sum = 0;
    int64_t inter_sum = 0, union_sum = 0;
    for (const auto& [p, g] : samples) {
        iou_sum += iou(p, g);
        for (size_t i = 0; i < p.v.size(); ++i) {
            bool a = p.v[i] != 0, b = g.v[i] != 0;
            inter_sum += (a && b);
            union_sum += (a || b);
        }
    }
    double giou = iou_sum / static_cast<double>(samples.size());
    double ciou = union_sum == 0
                      ? 1.0
                      : static_cast<double>(inter_sum) / static_cast<double>(union_sum);
    return {giou, ciou};
}

double pr_at_x(const std::vector<double>& ious, double x) {
    if (ious.empty()) return 0.0;
    int64_t hits = 0;
    for (double v : ious) hits += (v > x);  // strictly exceeding
    return static_cast<double>(hits) / static_cast<double>(ious.size());
}

EvalReport evaluate_masks(const std::vector<std::string>& ids,
                          const std::vector<BinMask>& preds, const std::vector<BinMask>& gts,
                          const std::vector<std::string>* categories) {
    if (ids.empty()) throw EmptySetError("evaluate_masks: no samples");
    if (preds.size() != ids.size() || gts.size() != ids.size() ||
        (categories && categories->size() != ids.size()))
        throw ShapeError("evaluate_masks: per-sample list lengths differ");

    EvalReport rep;
    std::vector<double> ious;
    int64_t inter_sum = 0, union_sum = 0;
    std::map<std::string, std::pair<double, int64_t>> cat_acc;
    for (size_t i = 0; i < ids.size(); ++i) {
        double v = iou(preds[i], gts[i]);
        ious.push_back(v);
        rep.per_sample_iou.emplace_back(ids[i], v);
        for (size_t k = 0; k < preds[i].v.size(); ++k) {
            bool a = preds[i].v[k] != 0, b = gts[i].v[k] != 0;
            inter_sum += (a && b);
            union_sum += (a || b);
        }
        if (categories) {
            auto& acc = cat_acc[(*categories)[i]];
            acc.first += v;
            acc.second += 1;
        }
    }
    rep.gIoU = 0;
    for (double v : ious) rep.gIoU += v;
    rep.gIoU /= static_cast<double>(ious.size());
    rep.cIoU = union_sum == 0
                   ? 1.0
                   : static_cast<double>(inter_sum) / static_cast<double>(union_sum);
    for (double x : pr_thresholds()) rep.pr_at[x] = pr_at_x(ious, x);
    for (const auto& [cat, acc] : cat_acc)
        rep.per_category_iou[cat] = acc.first / static_cast<double>(acc.second);
    return rep;
}

EvalReport evaluate(const std::string& pred_dir, const std::string& gt_dir,
                    const std::map<std::string, std::string>* categories) {
    if (!fs::is_directory(gt_dir)) throw MissingFileError("gt dir not found: " + gt_dir);
    std::vector<std::string> ids;
    for (const auto& entry : fs::directory_iterator(gt_dir)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        if (ext == ".png" || ext == ".pgm") ids.push_back(entry.path().stem().string());
    }
    std::sort(ids.begin(), ids.end());
    if (ids.empty()) throw EmptySetError("no ground-truth masks in " + gt_dir);

    auto find_mask = [](const std::string& dir, const std::string& id) -> std::string {
        for (const char* ext : {".png", ".pgm"}) {
            fs::path p = fs::path(dir) / (id + ext);
            if (fs::exists(p)) return p.string();
        }
        return "";
    };

    std::vector<std::string> missing;
    for (const auto& id : ids)
        if (find_mask(pred_dir, id).empty()) missing.push_back(id);
    if (!missing.empty()) {
        std::string msg = "no prediction for:";
        for (const auto& id : missing) msg += " " + id;
        throw MissingPredictionError(msg);
    }

    std::vector<BinMask> preds, gts;
    std::vector<std::string> cats;
    for (const auto& id : ids) {
        preds.push_back(read_mask(find_mask(pred_dir, id)));
        gts.push_back(read_mask(find_mask(gt_dir, id)));
        if (categories) {
            auto it = categories->find(id);
            cats.push_back(it == categories->end() ? "uncategorized" : it->second);
        }
    }
    return evaluate_masks(ids, preds, gts, categories ? &cats : nullptr);
}

std::string EvalReport::to_json() const {
    nlohmann::json j;
    j["gIoU"] = gIoU;
    j["cIoU"] = cIoU;
    nlohmann::json pr = nlohmann::json::object();
    for (const auto& [x, v] : pr_at) {
        std::ostringstream key;
        key << x;
        pr[key.str()] = v;
    }
    j["pr"] = pr;
    nlohmann::json per = nlohmann::json::array();
    for (const auto& [id, v] : per_sample_iou) per.push_back({{"id", id}, {"iou", v}});
    j["per_sample"] = per;
    if (!per_category_iou.empty()) {
        nlohmann::json cats = nlohmann::json::object();
        for (const auto& [c, v] : per_category_iou) cats[c] = v;
        j["per_category"] = cats;
    }
    return j.dump(2);
}

}  // namespace rrseg
