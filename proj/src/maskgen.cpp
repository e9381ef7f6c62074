#include "rrseg/maskgen.hpp"

#include <cmath>

#include "rrseg/errors.hpp"

namespace rrseg {

using ad::Var;

// ---------------- DensePromptEncoder ----------------

template <typename T>
DensePromptEncoder<T>::DensePromptEncoder(nn::ParamStore<T>& ps, const std::string& scope,
                                          const ModelConfig& cfg, Rng& rng) {
    in_h_ = cfg.dense_h();
    in_w_ = cfg.dense_w();
    grid_h_ = cfg.h2();
    grid_w_ = cfg.w2();
    d2_ = cfg.d2;
    mid_channels_ = std::max<int64_t>(d2_ / 2, 1);
    int64_t factor = cfg.stride2 / 4;
    int64_t n_down = 0;
    while ((int64_t(1) << n_down) < factor) ++n_down;
    int64_t c = 1;
    for (int64_t i = 0; i < n_down; ++i) {
        Stage s;
        s.c_in = c;
        s.c_out = mid_channels_;
        double stddev = std::sqrt(2.0 / static_cast<double>(9 * s.c_in + s.c_out));
        s.w = ps.add(scope + ".down" + std::to_string(i) + ".W",
                     TensorT<T>::randn({9 * s.c_in, s.c_out}, rng, stddev), true);
        s.b = ps.add(scope + ".down" + std::to_string(i) + ".b",
                     TensorT<T>::zeros({1, s.c_out}), true);
        s.ln = std::make_unique<nn::LayerNorm<T>>(ps, scope + ".down" + std::to_string(i) + ".ln",
                                                  s.c_out, true);
        down_.push_back(std::move(s));
        c = mid_channels_;
    }
    double stddev = std::sqrt(2.0 / static_cast<double>(c + d2_));
    out_w_ = ps.add(scope + ".out.W", TensorT<T>::randn({c, d2_}, rng, stddev), true);
    out_b_ = ps.add(scope + ".out.b", TensorT<T>::zeros({1, d2_}), true);
}

template <typename T>
Var<T> DensePromptEncoder<T>::forward(const Var<T>& dense_map) const {
    if (dense_map->val.ndim() != 2 || dense_map->val.dim(0) != in_h_ * in_w_ ||
        dense_map->val.dim(1) != 1)
        throw ShapeError("DensePromptEncoder: expected [" + std::to_string(in_h_ * in_w_) +
                         ", 1], got " + dense_map->val.shape_str());
    Var<T> x = ad::reshape(dense_map, {in_h_, in_w_, 1});
    int64_t h = in_h_, w = in_w_;
    for (const auto& s : down_) {
        x = ad::conv2d(x, s.w, s.b, 3, 2, 1);
        h = (h + 1) / 2;
        w = (w + 1) / 2;
        x = ad::reshape(x, {h * w, s.c_out});
        x = ad::gelu(s.ln->forward(x));
        x = ad::reshape(x, {h, w, s.c_out});
    }
    if (h != grid_h_ || w != grid_w_)
        throw ShapeError("DensePromptEncoder: downsampled grid mismatch");
    int64_t c = down_.empty() ? 1 : mid_channels_;
    Var<T> rows = ad::reshape(x, {h * w, c});
    return ad::add_rowvec(ad::matmul(rows, out_w_), out_b_);
}

// ---------------- MaskDecoder ----------------

template <typename T>
MaskDecoder<T>::MaskDecoder(nn::ParamStore<T>& ps, const ModelConfig& cfg, Rng& rng)
    : cfg_(cfg) {
    int64_t d2 = cfg.d2, heads = cfg.heads2();
    t_filter_ = ps.add("tokens.T_filter", TensorT<T>::randn({4, d2}, rng, 0.02), true);
    t_iou_ = ps.add("tokens.T_IoU", TensorT<T>::randn({1, d2}, rng, 0.02), true);
    img_pos_ = ps.add("mask_decoder.img_pos",
                      TensorT<T>::randn({cfg.h2() * cfg.w2(), d2}, rng, 0.02), true);
    const int64_t depth = 2;  // two-way attention depth at toy scale
    for (int64_t i = 0; i < depth; ++i) {
        std::string scope = "mask_decoder.block" + std::to_string(i);
        TwoWayBlock b;
        b.ln_self = std::make_unique<nn::LayerNorm<T>>(ps, scope + ".ln_self", d2, true);
        b.ln_t2i = std::make_unique<nn::LayerNorm<T>>(ps, scope + ".ln_t2i", d2, true);
        b.ln_mlp = std::make_unique<nn::LayerNorm<T>>(ps, scope + ".ln_mlp", d2, true);
        b.ln_i2t = std::make_unique<nn::LayerNorm<T>>(ps, scope + ".ln_i2t", d2, true);
        b.self_attn = std::make_unique<nn::MultiheadAttention<T>>(ps, scope + ".self_attn", d2,
                                                                  heads, 0, true, rng);
        b.attn_t2i = std::make_unique<nn::MultiheadAttention<T>>(ps, scope + ".attn_t2i", d2,
                                                                 heads, 0, true, rng);
        b.attn_i2t = std::make_unique<nn::MultiheadAttention<T>>(ps, scope + ".attn_i2t", d2,
                                                                 heads, 0, true, rng);
        b.mlp = std::make_unique<nn::Mlp<T>>(ps, scope + ".mlp", d2, 4 * d2, true, rng);
        blocks_.push_back(std::move(b));
    }
    ln_final_ = std::make_unique<nn::LayerNorm<T>>(ps, "mask_decoder.ln_final", d2, true);
    final_t2i_ = std::make_unique<nn::MultiheadAttention<T>>(ps, "mask_decoder.final_t2i", d2,
                                                             heads, 0, true, rng);
    ln_heads_ = std::make_unique<nn::LayerNorm<T>>(ps, "mask_decoder.ln_heads", d2, true);
    int64_t c1 = d2 / 4, c2 = d2 / 8;
    double s1 = std::sqrt(2.0 / static_cast<double>(d2 + 4 * c1));
    double s2 = std::sqrt(2.0 / static_cast<double>(c1 + 4 * c2));
    up1_w_ = ps.add("mask_decoder.up1.W", TensorT<T>::randn({d2, 4 * c1}, rng, s1), true);
    up1_b_ = ps.add("mask_decoder.up1.b", TensorT<T>::zeros({1, c1}), true);
    up_ln_ = std::make_unique<nn::LayerNorm<T>>(ps, "mask_decoder.up1.ln", c1, true);
    up2_w_ = ps.add("mask_decoder.up2.W", TensorT<T>::randn({c1, 4 * c2}, rng, s2), true);
    up2_b_ = ps.add("mask_decoder.up2.b", TensorT<T>::zeros({1, c2}), true);
    for (int64_t m = 0; m < 4; ++m) {
        std::string scope = "mask_decoder.hyper" + std::to_string(m);
        hyper_[static_cast<size_t>(m)].fc1 =
            std::make_unique<nn::LoraLinear<T>>(ps, scope + ".fc1", d2, d2, 0, true, rng);
        hyper_[static_cast<size_t>(m)].fc2 =
            std::make_unique<nn::LoraLinear<T>>(ps, scope + ".fc2", d2, d2, 0, true, rng);
        hyper_[static_cast<size_t>(m)].fc3 =
            std::make_unique<nn::LoraLinear<T>>(ps, scope + ".fc3", d2, c2, 0, true, rng);
    }
    iou_head_.fc1 =
        std::make_unique<nn::LoraLinear<T>>(ps, "mask_decoder.iou_head.fc1", d2, d2, 0, true, rng);
    iou_head_.fc2 =
        std::make_unique<nn::LoraLinear<T>>(ps, "mask_decoder.iou_head.fc2", d2, d2, 0, true, rng);
    iou_head_.fc3 =
        std::make_unique<nn::LoraLinear<T>>(ps, "mask_decoder.iou_head.fc3", d2, 4, 0, true, rng);
}

template <typename T>
DecodeResult<T> MaskDecoder<T>::forward(const Var<T>& f_img, const Var<T>& f_dense,
                                        const Var<T>& p_sparse) const {
    int64_t hw = cfg_.h2() * cfg_.w2();
    int64_t d2 = cfg_.d2;
    if (f_img->val.ndim() != 2 || f_img->val.dim(0) != hw || f_img->val.dim(1) != d2)
        throw ShapeError("MaskDecoder: f_img must be [" + std::to_string(hw) + ", " +
                         std::to_string(d2) + "], got " + f_img->val.shape_str());
    if (!f_dense->val.same_shape(f_img->val))
        throw ShapeError("MaskDecoder: f_dense shape " + f_dense->val.shape_str() +
                         " != f_img shape " + f_img->val.shape_str());
    if (p_sparse->val.ndim() != 2 || p_sparse->val.dim(1) != d2)
        throw ShapeError("MaskDecoder: p_sparse must be [n_p, d2], got " +
                         p_sparse->val.shape_str());

    Var<T> src = ad::add(f_img, f_dense);
    Var<T> tokens = ad::concat_rows<T>({t_filter_, t_iou_, p_sparse});
    for (const auto& b : blocks_) {
        Var<T> h = b.ln_self->forward(tokens);
        tokens = ad::add(tokens, b.self_attn->forward(h, h));
        tokens = ad::add(tokens, b.attn_t2i->forward(b.ln_t2i->forward(tokens), src,
                                                     /*q_pos=*/nullptr, /*k_pos=*/img_pos_));
        tokens = ad::add(tokens, b.mlp->forward(b.ln_mlp->forward(tokens)));
        src = ad::add(src, b.attn_i2t->forward(b.ln_i2t->forward(src), tokens, img_pos_));
    }
    tokens = ad::add(tokens, final_t2i_->forward(ln_final_->forward(tokens), src,
                                                 /*q_pos=*/nullptr, /*k_pos=*/img_pos_));
    tokens = ln_heads_->forward(tokens);

    // upscaling head: h2 x w2 -> 4h2 x 4w2 via two transposed convs
    int64_t h = cfg_.h2(), w = cfg_.w2();
    int64_t c1 = d2 / 4, c2 = d2 / 8;
    Var<T> emb = ad::reshape(src, {h, w, d2});
    emb = ad::conv_transpose2x2(emb, up1_w_, up1_b_);
    emb = ad::reshape(emb, {4 * h * w, c1});
    emb = ad::gelu(up_ln_->forward(emb));
    emb = ad::reshape(emb, {2 * h, 2 * w, c1});
    emb = ad::conv_transpose2x2(emb, up2_w_, up2_b_);
    emb = ad::gelu(emb);
    Var<T> emb_rows = ad::reshape(emb, {16 * h * w, c2});

    DecodeResult<T> out;
    out.tokens_out = tokens;
    int64_t bilinear = cfg_.stride2 / 4;
    for (int64_t m = 0; m < 4; ++m) {
        Var<T> tok = ad::slice_rows(tokens, m, m + 1);
        const auto& hm = hyper_[static_cast<size_t>(m)];
        Var<T> wv = hm.fc3->forward(
            ad::gelu(hm.fc2->forward(ad::gelu(hm.fc1->forward(tok)))));  // [1, c2]
        Var<T> logits = ad::matmul(emb_rows, ad::transpose(wv));         // [16hw, 1]
        logits = ad::reshape(logits, {4 * h, 4 * w, 1});
        if (bilinear > 1)
            logits = ad::bilinear_resize(logits, 4 * h * bilinear, 4 * w * bilinear);
        out.mask_logits[static_cast<size_t>(m)] =
            ad::reshape(logits, {cfg_.H2 * cfg_.W2, 1});
    }
    Var<T> iou_tok = ad::slice_rows(tokens, 4, 5);
    out.iou_pred = iou_head_.fc3->forward(
        ad::gelu(iou_head_.fc2->forward(ad::gelu(iou_head_.fc1->forward(iou_tok)))));
    return out;
}

template <typename T>
Var<T> select_mask(const DecodeResult<T>& result) {
    return result.mask_logits[0];
}

BinMask binarize(const Tensor& logits, double threshold) {
    if (logits.ndim() != 2) throw ShapeError("binarize: expected [H, W] logits");
    if (!logits.all_finite()) throw ShapeError("binarize: non-finite logits");
    BinMask m(logits.dim(0), logits.dim(1));
    for (int64_t i = 0; i < logits.numel(); ++i)
        m.v[static_cast<size_t>(i)] = logits[i] > threshold ? 1 : 0;
    return m;
}

template class DensePromptEncoder<float>;
template class DensePromptEncoder<double>;
template class MaskDecoder<float>;
template class MaskDecoder<double>;
template ad::Var<float> select_mask<float>(const DecodeResult<float>&);
template ad::Var<double> select_mask<double>(const DecodeResult<double>&);

}  // namespace rrseg
