#include "rrseg/losses.hpp"

#include <cmath>

#include "rrseg/errors.hpp"

namespace rrseg {

using ad::Var;

namespace {

template <typename T>
void require_mask_2d(const TensorT<T>& gt, const char* who) {
    if (gt.ndim() != 2) throw ShapeError(std::string(who) + ": mask must be 2-d");
    for (T x : gt.v)
        if (x != T(0) && x != T(1))
            throw ShapeError(std::string(who) + ": mask values must be 0/1");
}

template <typename T>
void factors(const TensorT<T>& gt, int64_t out_h, int64_t out_w, int64_t* fy, int64_t* fx) {
    if (out_h <= 0 || out_w <= 0 || gt.dim(0) % out_h != 0 || gt.dim(1) % out_w != 0)
        throw ShapeError("mask downsample: " + gt.shape_str() + " not divisible by target " +
                         std::to_string(out_h) + "x" + std::to_string(out_w));
    *fy = gt.dim(0) / out_h;
    *fx = gt.dim(1) / out_w;
}

}  // namespace

template <typename T>
TensorT<T> downsample_majority(const TensorT<T>& gt, int64_t out_h, int64_t out_w) {
    require_mask_2d(gt, "downsample_majority");
    int64_t fy, fx;
    factors(gt, out_h, out_w, &fy, &fx);
    TensorT<T> out({out_h, out_w});
    for (int64_t y = 0; y < out_h; ++y)
        for (int64_t x = 0; x < out_w; ++x) {
            int64_t count = 0;
            for (int64_t dy = 0; dy < fy; ++dy)
                for (int64_t dx = 0; dx < fx; ++dx)
                    count += gt.at(y * fy + dy, x * fx + dx) != T(0);
            out.at(y, x) = (2 * count > fy * fx) ? T(1) : T(0);
        }
    return out;
}

template <typename T>
TensorT<T> downsample_any(const TensorT<T>& gt, int64_t out_h, int64_t out_w) {
    require_mask_2d(gt, "downsample_any");
    int64_t fy, fx;
    factors(gt, out_h, out_w, &fy, &fx);
    TensorT<T> out({out_h, out_w});
    for (int64_t y = 0; y < out_h; ++y)
        for (int64_t x = 0; x < out_w; ++x) {
            T any = T(0);
            for (int64_t dy = 0; dy < fy && any == T(0); ++dy)
                for (int64_t dx = 0; dx < fx; ++dx)
                    if (gt.at(y * fy + dy, x * fx + dx) != T(0)) {
                        any = T(1);
                        break;
                    }
            out.at(y, x) = any;
        }
    return out;
}

template <typename T>
Var<T> seg_loss(const Var<T>& pred_logits, const TensorT<T>& gt, double alpha_dice,
                double* ce_out, double* dice_out) {
    if (pred_logits->val.numel() != gt.numel())
        throw ShapeError("seg_loss: logits " + pred_logits->val.shape_str() + " vs gt " +
                         gt.shape_str());
    for (T x : gt.v)
        if (x != T(0) && x != T(1)) throw ShapeError("seg_loss: gt must be binary");
    TensorT<T> target = gt;
    target.shape = pred_logits->val.shape;

    Var<T> ce = ad::bce_with_logits_mean(pred_logits, target);
    if (ce_out) *ce_out = static_cast<double>(ce->val[0]);
    if (alpha_dice == 0.0) {
        if (dice_out) *dice_out = 0.0;
        return ce;
    }

    const double eps = 1.0;
    Var<T> p = ad::sigmoid(pred_logits);
    Var<T> inter = ad::sum(ad::mul(p, ad::constant(target)));
    double gt_sum = 0;
    for (T x : gt.v) gt_sum += static_cast<double>(x);
    Var<T> num = ad::add_scalar(ad::scale(inter, 2.0), eps);
    Var<T> den = ad::add_scalar(ad::sum(p), gt_sum + eps);
    Var<T> dice = ad::add_scalar(ad::scale(ad::div(num, den), -1.0), 1.0);
    if (dice_out) *dice_out = static_cast<double>(dice->val[0]);
    return ad::weighted_sum<T>({ce, dice}, {1.0, alpha_dice});
}

template <typename T>
Var<T> ortho_loss(const Var<T>& t1, const Var<T>& t2, double alpha_ortho) {
    if (!t1->val.same_shape(t2->val))
        throw ShapeError("ortho_loss: shape mismatch " + t1->val.shape_str() + " vs " +
                         t2->val.shape_str());
    Var<T> p1 = ad::mean_rows(t1);
    Var<T> p2 = ad::mean_rows(t2);
    auto norm_of = [](const Var<T>& p) {
        double s = 0;
        for (T x : p->val.v) s += static_cast<double>(x) * static_cast<double>(x);
        return std::sqrt(s);
    };
    if (norm_of(p1) < 1e-12 || norm_of(p2) < 1e-12)
        throw DegenerateError("ortho_loss: pooled vector norm below 1e-12");
    Var<T> n1 = ad::l2norm_rows(p1, 0.0);
    Var<T> n2 = ad::l2norm_rows(p2, 0.0);
    Var<T> cos = ad::reshape(ad::matmul(n1, ad::transpose(n2)), {1});
    return ad::scale(ad::mul(cos, cos), alpha_ortho);
}

template <typename T>
Var<T> dense_align_loss(const Var<T>& p_dense_logits, const TensorT<T>& gt, int64_t map_h,
                        int64_t map_w) {
    if (p_dense_logits->val.numel() != map_h * map_w)
        throw ShapeError("dense_align_loss: logits numel != map size");
    TensorT<T> down = downsample_majority(gt, map_h, map_w);
    down.shape = p_dense_logits->val.shape;
    return ad::bce_with_logits_mean(p_dense_logits, down);
}

template <typename T>
Var<T> spatial_align_loss(const Var<T>& v, const Var<T>& text_vec, const TensorT<T>& gt,
                          SpatMode mode, int64_t h1, int64_t w1, double temperature) {
    if (mode == SpatMode::Off)
        throw DegenerateError("spatial_align_loss: mode is off");
    if (v->val.ndim() != 2 || v->val.dim(0) != h1 * w1)
        throw ShapeError("spatial_align_loss: v must be [h1*w1, d]");
    if (text_vec->val.ndim() != 2 || text_vec->val.dim(0) != 1 ||
        text_vec->val.dim(1) != v->val.dim(1))
        throw ShapeError("spatial_align_loss: text_vec must be [1, d]");
    Var<T> coarse = ad::matmul(ad::l2norm_rows(v), ad::transpose(ad::l2norm_rows(text_vec)));
    Var<T> logits = ad::scale(coarse, 1.0 / temperature);  // [h1*w1, 1]

    if (mode == SpatMode::CE) {
        TensorT<T> down = downsample_majority(gt, h1, w1);
        down.shape = {h1 * w1, 1};
        return ad::bce_with_logits_mean(logits, down);
    }
    // MIL: the best foreground pixel should score 1, the best background 0
    TensorT<T> down = downsample_any(gt, h1, w1);
    std::vector<int64_t> fg, bg;
    for (int64_t i = 0; i < down.numel(); ++i) (down[i] != T(0) ? fg : bg).push_back(i);
    if (fg.empty())
        throw DegenerateError("spatial_align_loss: ground truth downsamples to all-zero");
    if (bg.empty())
        throw DegenerateError("spatial_align_loss: ground truth downsamples to all-one");
    Var<T> max_fg = ad::masked_max(logits, fg);
    Var<T> max_bg = ad::masked_max(logits, bg);
    Var<T> l_fg = ad::bce_with_logits_mean(max_fg, TensorT<T>::full({1}, T(1)));
    Var<T> l_bg = ad::bce_with_logits_mean(max_bg, TensorT<T>::full({1}, T(0)));
    return ad::weighted_sum<T>({l_fg, l_bg}, {0.5, 0.5});
}

template <typename T>
Var<T> mask_pooled_visual(const Var<T>& v, const TensorT<T>& gt, int64_t h1, int64_t w1) {
    TensorT<T> down = downsample_any(gt, h1, w1);
    std::vector<int64_t> fg;
    for (int64_t i = 0; i < down.numel(); ++i)
        if (down[i] != T(0)) fg.push_back(i);
    if (fg.empty()) throw DegenerateError("mask_pooled_visual: empty pooled mask");
    return ad::masked_mean_rows(v, fg);
}

template <typename T>
Var<T> sample_nce_loss(const Var<T>& vis, const Var<T>& txt, double temperature) {
    if (vis->val.ndim() != 2 || !vis->val.same_shape(txt->val))
        throw ShapeError("sample_nce_loss: vis/txt must share [B, d]");
    int64_t batch = vis->val.dim(0);
    if (batch < 2) throw DegenerateError("sample_nce_loss: batch size must be >= 2");
    Var<T> nv = ad::l2norm_rows(vis);
    Var<T> nt = ad::l2norm_rows(txt);
    Var<T> logits = ad::scale(ad::matmul(nv, ad::transpose(nt)), 1.0 / temperature);
    Var<T> i2t = ad::mean(ad::sub(ad::logsumexp_rows(logits), ad::take_diag(logits)));
    Var<T> logits_t = ad::transpose(logits);
    Var<T> t2i = ad::mean(ad::sub(ad::logsumexp_rows(logits_t), ad::take_diag(logits_t)));
    return ad::weighted_sum<T>({i2t, t2i}, {0.5, 0.5});
}

template <typename T>
TotalLoss<T> total_loss(const LossTerms<T>& terms, double alpha_dense, double alpha_spat,
                        double alpha_samp) {
    if (!terms.seg) throw ShapeError("total_loss: seg term is required");
    std::vector<Var<T>> parts;
    std::vector<double> weights;
    TotalLoss<T> out;
    auto push = [&](const Var<T>& term, double w, double* slot) {
        if (!term || w == 0.0) return;
        parts.push_back(term);
        weights.push_back(w);
        *slot = w * static_cast<double>(term->val[0]);
    };
    push(terms.seg, 1.0, &out.parts.seg);
    push(terms.ortho, 1.0, &out.parts.ortho);
    push(terms.dense, alpha_dense, &out.parts.dense);
    push(terms.spat, alpha_spat, &out.parts.spat);
    push(terms.samp, alpha_samp, &out.parts.samp);
    out.value = ad::weighted_sum(parts, weights);
    out.parts.total = static_cast<double>(out.value->val[0]);
    return out;
}

#define RRSEG_INSTANTIATE_LOSSES(T)                                                          \
    template TensorT<T> downsample_majority<T>(const TensorT<T>&, int64_t, int64_t);         \
    template TensorT<T> downsample_any<T>(const TensorT<T>&, int64_t, int64_t);              \
    template Var<T> seg_loss<T>(const Var<T>&, const TensorT<T>&, double, double*, double*); \
    template Var<T> ortho_loss<T>(const Var<T>&, const Var<T>&, double);                     \
    template Var<T> dense_align_loss<T>(const Var<T>&, const TensorT<T>&, int64_t, int64_t); \
    template Var<T> spatial_align_loss<T>(const Var<T>&, const Var<T>&, const TensorT<T>&,   \
                                          SpatMode, int64_t, int64_t, double);               \
    template Var<T> mask_pooled_visual<T>(const Var<T>&, const TensorT<T>&, int64_t,         \
                                          int64_t);                                          \
    template Var<T> sample_nce_loss<T>(const Var<T>&, const Var<T>&, double);                \
    template TotalLoss<T> total_loss<T>(const LossTerms<T>&, double, double, double);

RRSEG_INSTANTIATE_LOSSES(float)
RRSEG_INSTANTIATE_LOSSES(double)

#undef RRSEG_INSTANTIATE_LOSSES

}  // namespace rrseg
