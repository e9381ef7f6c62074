#include "rrseg/train.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rrseg/errors.hpp"

namespace fs = std::filesystem;

namespace rrseg {

using ad::Var;

AdamW::AdamW(double beta1, double beta2, double eps, double weight_decay)
    : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

void AdamW::init(const std::vector<nn::ParamStore<float>::Entry>& params) {
    m_.clear();
    v_.clear();
    for (const auto& e : params) {
        m_.push_back(Tensor::zeros(e.var->val.shape));
        v_.push_back(Tensor::zeros(e.var->val.shape));
    }
    t_ = 0;
}

void AdamW::step(const std::vector<nn::ParamStore<float>::Entry>& params, double lr) {
    if (m_.size() != params.size()) throw ShapeError("AdamW: not initialized for this model");
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t k = 0; k < params.size(); ++k) {
        auto& p = params[k].var;
        if (p->grad.numel() == 0) p->ensure_grad();  // untouched params decay only
        Tensor& m = m_[k];
        Tensor& v = v_[k];
        for (int64_t i = 0; i < p->val.numel(); ++i) {
            double g = p->grad[i];
            double mi = beta1_ * m[i] + (1.0 - beta1_) * g;
            double vi = beta2_ * v[i] + (1.0 - beta2_) * g * g;
            m[i] = static_cast<float>(mi);
            v[i] = static_cast<float>(vi);
            double update = (mi / bc1) / (std::sqrt(vi / bc2) + eps_) +
                            weight_decay_ * static_cast<double>(p->val[i]);
            p->val[i] = static_cast<float>(p->val[i] - lr * update);
        }
    }
}

std::vector<std::pair<Tensor, Tensor>> AdamW::export_moments() const {
    std::vector<std::pair<Tensor, Tensor>> out;
    for (size_t i = 0; i < m_.size(); ++i) out.emplace_back(m_[i], v_[i]);
    return out;
}

void AdamW::import_moments(std::vector<std::pair<Tensor, Tensor>> moments) {
    m_.clear();
    v_.clear();
    for (auto& [m, v] : moments) {
        m_.push_back(std::move(m));
        v_.push_back(std::move(v));
    }
}

double lr_at_step(const ModelConfig& cfg, int64_t step, int64_t total_steps) {
    if (total_steps <= 0) return cfg.lr;
    int64_t warmup = static_cast<int64_t>(std::ceil(cfg.warmup_frac * static_cast<double>(total_steps)));
    if (warmup > 0 && step < warmup)
        return cfg.lr * static_cast<double>(step + 1) / static_cast<double>(warmup);
    int64_t span = std::max<int64_t>(total_steps - warmup, 1);
    double prog = static_cast<double>(step - warmup) / static_cast<double>(span);
    if (prog > 1.0) prog = 1.0;
    double floor = std::min(cfg.lr_floor, cfg.lr);
    return floor + (cfg.lr - floor) * 0.5 * (1.0 + std::cos(M_PI * prog));
}

namespace {

Tensor mask_to_tensor(const BinMask& m) {
    Tensor t({m.h, m.w});
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = m.v[static_cast<size_t>(i)] ? 1.0f : 0.0f;
    return t;
}

// actual IoU of each binarized candidate against the ground truth (no grad)
Tensor candidate_iou_targets(const ForwardResult<float>& fr, const Sample& s,
                             const ModelConfig& cfg) {
    Tensor targets({1, 4});
    for (size_t m = 0; m < 4; ++m) {
        Tensor logits = fr.decode.mask_logits[m]->val;
        logits.shape = {cfg.H2, cfg.W2};
        targets[static_cast<int64_t>(m)] =
            static_cast<float>(iou(binarize(logits), s.mask));
    }
    return targets;
}

}  // namespace

BatchLoss batch_loss(Model<float>& model, const std::vector<const Sample*>& batch,
                     bool training) {
    if (batch.empty()) throw ShapeError("batch_loss: empty batch");
    const ModelConfig& cfg = model.config();
    double inv_b = 1.0 / static_cast<double>(batch.size());

    std::vector<Var<float>> sample_totals;
    std::vector<Var<float>> vis_vecs, txt_vecs, iou_terms;
    BatchLoss out;
    for (const Sample* sp : batch) {
        const Sample& s = *sp;
        ForwardResult<float> fr = model.forward(s.image, s.text, training);
        Tensor gt = mask_to_tensor(s.mask);

        LossTerms<float> terms;
        terms.seg = seg_loss(fr.selected_mask(), gt, cfg.alpha_dice);
        if (cfg.cascaded && cfg.alpha_ortho > 0)
            terms.ortho = ortho_loss(fr.prompts.t1, fr.prompts.t2, cfg.alpha_ortho);
        if (cfg.alpha_dense > 0 && cfg.use_dense_prompt)
            terms.dense = dense_align_loss(fr.prompts.p_dense_logits, gt, cfg.dense_h(),
                                           cfg.dense_w());
        if (cfg.alpha_spat > 0 && cfg.spat_mode != SpatMode::Off)
            terms.spat = spatial_align_loss(fr.features.v, fr.features.t_sent, gt,
                                            cfg.spat_mode, cfg.h1(), cfg.w1(), kNceTemperature);
        TotalLoss<float> tl = total_loss(terms, cfg.alpha_dense, cfg.alpha_spat,
                                         /*alpha_samp=*/0.0);
        sample_totals.push_back(tl.value);
        out.parts.seg += tl.parts.seg * inv_b;
        out.parts.ortho += tl.parts.ortho * inv_b;
        out.parts.dense += tl.parts.dense * inv_b;
        out.parts.spat += tl.parts.spat * inv_b;

        if (cfg.alpha_samp > 0 && batch.size() >= 2) {
            const Var<float>& feat = cfg.samp_features == SampFeatures::V ? fr.features.v
                                                                         : fr.prompts.v2p;
            vis_vecs.push_back(mask_pooled_visual(feat, gt, cfg.h1(), cfg.w1()));
            txt_vecs.push_back(cfg.samp_text == SampText::T2 ? ad::mean_rows(fr.prompts.t2)
                                                             : fr.features.t_sent);
        }

        Tensor iou_target = candidate_iou_targets(fr, s, cfg);
        Var<float> diff = ad::sub(fr.decode.iou_pred, ad::constant(std::move(iou_target)));
        iou_terms.push_back(ad::mean(ad::mul(diff, diff)));
    }

    std::vector<Var<float>> pieces;
    std::vector<double> weights;
    for (auto& t : sample_totals) {
        pieces.push_back(t);
        weights.push_back(inv_b);
    }
    if (!vis_vecs.empty()) {
        Var<float> nce = sample_nce_loss(ad::concat_rows(vis_vecs), ad::concat_rows(txt_vecs),
                                         kNceTemperature);
        pieces.push_back(nce);
        weights.push_back(cfg.alpha_samp);
        out.parts.samp = cfg.alpha_samp * static_cast<double>(nce->val[0]);
    }
    for (auto& t : iou_terms) {
        pieces.push_back(t);
        weights.push_back(kIouAuxWeight * inv_b);
        out.iou_aux += kIouAuxWeight * inv_b * static_cast<double>(t->val[0]);
    }
    out.total = ad::weighted_sum(pieces, weights);
    out.parts.total = static_cast<double>(out.total->val[0]);
    return out;
}

double validation_giou(Model<float>& model, const std::vector<Sample>& val_set) {
    if (val_set.empty()) return -1.0;
    ad::NoGradGuard guard;
    const ModelConfig& cfg = model.config();
    double acc = 0;
    for (const Sample& s : val_set) {
        ForwardResult<float> fr = model.forward(s.image, s.text, /*training=*/false);
        Tensor logits = fr.selected_mask()->val;
        logits.shape = {cfg.H2, cfg.W2};
        acc += iou(binarize(logits), s.mask);
    }
    return acc / static_cast<double>(val_set.size());
}

std::string step_record_json(const StepRecord& rec) {
    std::ostringstream os;
    os.precision(10);
    os << "{\"step\":" << rec.step << ",\"epoch\":" << rec.epoch << ",\"lr\":" << rec.lr
       << ",\"loss\":" << rec.loss << ",\"seg\":" << rec.parts.seg
       << ",\"ortho\":" << rec.parts.ortho << ",\"dense\":" << rec.parts.dense
       << ",\"spat\":" << rec.parts.spat << ",\"samp\":" << rec.parts.samp
       << ",\"iou_aux\":" << rec.iou_aux << "}";
    return os.str();
}

TrainResult train_model(const ModelConfig& cfg_in, const std::vector<Sample>& train_set,
                        const std::vector<Sample>& val_set, const TrainOptions& opts) {
    ModelConfig cfg = validate_config(cfg_in);
    if (train_set.empty()) throw EmptySetError("train_model: empty training set");

    std::unique_ptr<Model<float>> model;
    AdamW opt(0.9, 0.999, 1e-8, cfg.weight_decay);
    int64_t start_epoch = 0;
    double best_giou = -1.0;
    int64_t step = 0;

    if (!opts.resume_from.empty()) {
        std::optional<TrainState> st;
        model = load_checkpoint(opts.resume_from, &st);
        if (!st) throw CheckpointShapeError("checkpoint has no train state: " + opts.resume_from);
        cfg = model->config();
        auto trainable = model->trainable_parameters();
        if (st->moments.size() != trainable.size())
            throw CheckpointShapeError("optimizer state does not match trainable set");
        opt.import_moments(std::move(st->moments));
        opt.set_t(st->step);
        step = st->step;
        start_epoch = st->epoch;
        best_giou = st->best_giou;
    } else {
        model = std::make_unique<Model<float>>(cfg);
        opt.init(model->trainable_parameters());
    }

    auto trainable = model->trainable_parameters();
    int64_t batches_per_epoch =
        static_cast<int64_t>((train_set.size() + static_cast<size_t>(cfg.batch_size) - 1) /
                             static_cast<size_t>(cfg.batch_size));
    int64_t total_steps = cfg.epochs * batches_per_epoch;

    TrainResult result;
    result.best_giou = best_giou;

    auto save_state = [&](const std::string& name) -> std::string {
        if (opts.out_dir.empty()) return "";
        fs::create_directories(opts.out_dir);
        TrainState st;
        st.step = step;
        st.epoch = start_epoch;  // updated before each save
        st.best_giou = result.best_giou;
        st.moments = opt.export_moments();
        std::string path = (fs::path(opts.out_dir) / name).string();
        save_checkpoint(path, *model, &st);
        return path;
    };

    int64_t end_epoch = cfg.epochs;
    if (opts.stop_after_epoch >= 0) end_epoch = std::min(end_epoch, opts.stop_after_epoch);

    for (int64_t epoch = start_epoch; epoch < end_epoch; ++epoch) {
        auto batches = make_batches(train_set.size(), cfg.batch_size,
                                    static_cast<uint64_t>(cfg.seed), epoch);
        for (const auto& batch_idx : batches) {
            std::vector<const Sample*> batch;
            for (size_t i : batch_idx) batch.push_back(&train_set[i]);
            model->params().zero_grads();
            BatchLoss bl = batch_loss(*model, batch, /*training=*/true);
            if (!std::isfinite(bl.parts.total))
                throw DivergenceError("loss is not finite at step " + std::to_string(step));
            ad::backward(bl.total);
            double lr = lr_at_step(cfg, step, total_steps);
            opt.step(trainable, lr);

            StepRecord rec;
            rec.step = step;
            rec.epoch = epoch;
            rec.lr = lr;
            rec.loss = bl.parts.total;
            rec.parts = bl.parts;
            rec.iou_aux = bl.iou_aux;
            if (opts.log) (*opts.log) << step_record_json(rec) << "\n";
            result.steps.push_back(rec);
            ++step;
        }
        start_epoch = epoch + 1;  // epochs completed, for checkpoint state
        bool last_epoch = (epoch + 1 == end_epoch);
        if (!val_set.empty() &&
            ((epoch + 1) % cfg.val_every == 0 || last_epoch)) {
            double giou = validation_giou(*model, val_set);
            result.final_val_giou = giou;
            if (giou > result.best_giou) {
                result.best_giou = giou;
                result.best_path = save_state("best.ckpt");
            }
        }
    }
    result.last_path = save_state("last.ckpt");
    if (result.best_path.empty()) result.best_path = result.last_path;
    return result;
}

}  // namespace rrseg
