#include "rrseg/harness.hpp"

#include <filesystem>
#include <fstream>

#include "rrseg/errors.hpp"
#include "rrseg/image_io.hpp"
#include "rrseg/losses.hpp"

namespace fs = std::filesystem;

namespace rrseg {

PredictOutput predict_sample(Model<float>& model, const Tensor& image,
                             const std::string& text) {
    ad::NoGradGuard guard;
    const ModelConfig& cfg = model.config();
    ForwardResult<float> fr = model.forward(image, text, /*training=*/false);
    PredictOutput out;
    Tensor logits = fr.selected_mask()->val;
    logits.shape = {cfg.H2, cfg.W2};
    out.mask = binarize(logits);
    out.dense_logits = fr.prompts.p_dense_logits->val;
    out.dense_logits.shape = {cfg.dense_h(), cfg.dense_w()};
    out.dense_probs = out.dense_logits;
    for (auto& x : out.dense_probs.v)
        x = x >= 0 ? 1.0f / (1.0f + std::exp(-x)) : std::exp(x) / (1.0f + std::exp(x));
    return out;
}

EvalReport evaluate_model(Model<float>& model, const std::vector<Sample>& samples) {
    if (samples.empty()) throw EmptySetError("evaluate_model: no samples");
    std::vector<std::string> ids, cats;
    std::vector<BinMask> preds, gts;
    bool with_cats = true;
    for (const Sample& s : samples) {
        PredictOutput p = predict_sample(model, s.image, s.text);
        ids.push_back(s.id);
        preds.push_back(std::move(p.mask));
        gts.push_back(s.mask);
        cats.push_back(s.category);
        with_cats = with_cats && !s.category.empty();
    }
    return evaluate_masks(ids, preds, gts, with_cats ? &cats : nullptr);
}

namespace {

// connected component (4-neighborhood) of the argmax over positive logits
BinMask argmax_region(const Tensor& dense_logits) {
    int64_t h = dense_logits.dim(0), w = dense_logits.dim(1);
    int64_t best = 0;
    for (int64_t i = 1; i < dense_logits.numel(); ++i)
        if (dense_logits[i] > dense_logits[best]) best = i;
    BinMask region(h, w);
    BinMask positive(h, w);
    for (int64_t i = 0; i < dense_logits.numel(); ++i)
        positive.v[static_cast<size_t>(i)] = dense_logits[i] > 0 ? 1 : 0;
    region.v[static_cast<size_t>(best)] = 1;  // argmax pixel always included
    if (!positive.v[static_cast<size_t>(best)]) return region;
    std::vector<int64_t> stack = {best};
    while (!stack.empty()) {
        int64_t i = stack.back();
        stack.pop_back();
        int64_t y = i / w, x = i % w;
        const int64_t dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
        for (int k = 0; k < 4; ++k) {
            int64_t ny = y + dy[k], nx = x + dx[k];
            if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
            int64_t ni = ny * w + nx;
            if (positive.v[static_cast<size_t>(ni)] && !region.v[static_cast<size_t>(ni)]) {
                region.v[static_cast<size_t>(ni)] = 1;
                stack.push_back(ni);
            }
        }
    }
    return region;
}

Tensor mask_to_tensor01(const BinMask& m) {
    Tensor t({m.h, m.w});
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = m.v[static_cast<size_t>(i)] ? 1.0f : 0.0f;
    return t;
}

}  // namespace

Diagnosis diagnose(const BinMask& pred, const Tensor& dense_logits, const BinMask& gt) {
    if (dense_logits.ndim() != 2) throw ShapeError("diagnose: dense_logits must be 2-d");
    if (pred.h != gt.h || pred.w != gt.w) throw ShapeError("diagnose: pred/gt sizes differ");
    Tensor gt_t = mask_to_tensor01(gt);
    Tensor down = downsample_majority(gt_t, dense_logits.dim(0), dense_logits.dim(1));
    BinMask gt_down(down.dim(0), down.dim(1));
    for (int64_t i = 0; i < down.numel(); ++i)
        gt_down.v[static_cast<size_t>(i)] = down[i] != 0.0f ? 1 : 0;
    BinMask region = argmax_region(dense_logits);
    if (iou(region, gt_down) < 0.1) return Diagnosis::LocalizationError;
    if (iou(pred, gt) < 0.5) return Diagnosis::SegmentationError;
    return Diagnosis::Ok;
}

const char* diagnosis_name(Diagnosis d) {
    switch (d) {
        case Diagnosis::Ok: return "ok";
        case Diagnosis::LocalizationError: return "localization_error";
        case Diagnosis::SegmentationError: return "segmentation_error";
    }
    return "?";
}

TrainResult run_train(const std::string& config_path, const std::string& data_root,
                      const std::string& out_dir) {
    ModelConfig cfg = validate_config(parse_config_file(config_path));
    TripletDataset train_ds = load_dataset(data_root, "train");
    std::vector<Sample> train_set = train_ds.load_all(cfg.H2, cfg.W2);
    std::vector<Sample> val_set;
    if (fs::exists(fs::path(data_root) / "val.tsv"))
        val_set = load_dataset(data_root, "val").load_all(cfg.H2, cfg.W2);

    fs::create_directories(out_dir);
    std::ofstream log((fs::path(out_dir) / "train_log.jsonl").string());
    if (!log) throw IoError("cannot write training log under " + out_dir);
    TrainOptions opts;
    opts.out_dir = out_dir;
    opts.log = &log;
    return train_model(cfg, train_set, val_set, opts);
}

EvalReport run_eval(const std::string& ckpt_path, const std::string& data_root,
                    const std::string& split, const std::string& report_path) {
    auto model = load_checkpoint(ckpt_path);
    const ModelConfig& cfg = model->config();
    std::vector<Sample> samples = load_dataset(data_root, split).load_all(cfg.H2, cfg.W2);
    EvalReport rep = evaluate_model(*model, samples);
    if (!report_path.empty()) {
        std::ofstream f(report_path);
        if (!f) throw IoError("cannot write report: " + report_path);
        f << rep.to_json() << "\n";
    }
    return rep;
}

void run_predict(const std::string& ckpt_path, const std::string& image_path,
                 const std::string& text, const std::string& mask_out_path,
                 const std::string& dense_pgm_path) {
    auto model = load_checkpoint(ckpt_path);
    const ModelConfig& cfg = model->config();
    Tensor image = image_to_tensor(read_image(image_path));
    if (image.dim(0) != cfg.H2 || image.dim(1) != cfg.W2)
        image = resize_bilinear_rgb(image, cfg.H2, cfg.W2);
    PredictOutput out = predict_sample(*model, image, text);
    write_png_mask1(mask_out_path, out.mask);
    if (!dense_pgm_path.empty()) {
        ImageU8 heat(out.dense_probs.dim(0), out.dense_probs.dim(1), 1);
        for (int64_t i = 0; i < out.dense_probs.numel(); ++i)
            heat.v[static_cast<size_t>(i)] =
                static_cast<uint8_t>(out.dense_probs[i] * 255.0f + 0.5f);
        write_pgm(dense_pgm_path, heat);
    }
}

DiagnoseCounts run_diagnose(const std::string& ckpt_path, const std::string& data_root,
                            const std::string& split, const std::string& report_path) {
    auto model = load_checkpoint(ckpt_path);
    const ModelConfig& cfg = model->config();
    std::vector<Sample> samples = load_dataset(data_root, split).load_all(cfg.H2, cfg.W2);
    if (samples.empty()) throw EmptySetError("diagnose: no samples");
    DiagnoseCounts counts;
    std::ofstream report;
    if (!report_path.empty()) {
        report.open(report_path);
        if (!report) throw IoError("cannot write report: " + report_path);
    }
    for (const Sample& s : samples) {
        PredictOutput p = predict_sample(*model, s.image, s.text);
        Diagnosis d = diagnose(p.mask, p.dense_logits, s.mask);
        switch (d) {
            case Diagnosis::Ok: ++counts.ok; break;
            case Diagnosis::LocalizationError: ++counts.localization_error; break;
            case Diagnosis::SegmentationError: ++counts.segmentation_error; break;
        }
        if (report)
            report << "{\"id\":\"" << s.id << "\",\"diagnosis\":\"" << diagnosis_name(d)
                   << "\"}\n";
    }
    return counts;
}

void run_synth(const std::string& spec_path, int64_t n, const std::string& out_dir,
               const std::string& split) {
    SynthSpec spec;
    if (!spec_path.empty()) spec = parse_synth_spec_file(spec_path);
    write_synth_dataset(spec, n, out_dir, split);
}

}  // namespace rrseg
