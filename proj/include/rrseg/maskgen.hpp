#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "rrseg/config.hpp"
#include "rrseg/metrics.hpp"
#include "rrseg/nn.hpp"

namespace rrseg {

// Lifts the dense prompt map (H2/4 x W2/4 logits) onto the image-embedding
// grid: stride-2 conv stack down to h2 x w2, channel lift 1 -> d2.
template <typename T>
class DensePromptEncoder {
public:
    DensePromptEncoder(nn::ParamStore<T>& ps, const std::string& scope, const ModelConfig& cfg,
                       Rng& rng);

    // map: [(H2/4)*(W2/4), 1] -> [h2*w2, d2]
    ad::Var<T> forward(const ad::Var<T>& dense_map) const;

private:
    struct Stage {
        ad::Var<T> w, b;
        std::unique_ptr<nn::LayerNorm<T>> ln;
        int64_t c_in, c_out;
    };
    std::vector<Stage> down_;
    ad::Var<T> out_w_, out_b_;  // 1x1 channel lift
    int64_t in_h_, in_w_, grid_h_, grid_w_, d2_;
    int64_t mid_channels_;
};

template <typename T>
struct DecodeResult {
    std::array<ad::Var<T>, 4> mask_logits;  // each [H2*W2, 1]
    ad::Var<T> iou_pred;                    // [1, 4]
    ad::Var<T> tokens_out;                  // [(5+n_p), d2] final token states
};

// Two-way transformer decoder with learnable filter/IoU tokens, upscaling
// head (transposed convs x4, then bilinear), per-mask hypernetwork MLPs and
// an IoU prediction MLP. Emits exactly 4 candidate masks at H2 x W2.
template <typename T>
class MaskDecoder {
public:
    MaskDecoder(nn::ParamStore<T>& ps, const ModelConfig& cfg, Rng& rng);

    // f_img, f_dense: [h2*w2, d2]; p_sparse: [n_p, d2]. Fusion is elementwise
    // f_img + f_dense; pass zeros to run without a dense prompt.
    DecodeResult<T> forward(const ad::Var<T>& f_img, const ad::Var<T>& f_dense,
                            const ad::Var<T>& p_sparse) const;

    ad::Var<T> t_filter() const { return t_filter_; }
    ad::Var<T> t_iou() const { return t_iou_; }

private:
    struct TwoWayBlock {
        std::unique_ptr<nn::LayerNorm<T>> ln_self, ln_t2i, ln_mlp, ln_i2t;
        std::unique_ptr<nn::MultiheadAttention<T>> self_attn, attn_t2i, attn_i2t;
        std::unique_ptr<nn::Mlp<T>> mlp;
    };
    struct HyperMlp {
        std::unique_ptr<nn::LoraLinear<T>> fc1, fc2, fc3;
    };

    ModelConfig cfg_;
    ad::Var<T> t_filter_, t_iou_;  // tokens.* (4 x d2, 1 x d2)
    ad::Var<T> img_pos_;           // [h2*w2, d2]
    std::vector<TwoWayBlock> blocks_;
    std::unique_ptr<nn::LayerNorm<T>> ln_final_, ln_heads_;
    std::unique_ptr<nn::MultiheadAttention<T>> final_t2i_;
    ad::Var<T> up1_w_, up1_b_, up2_w_, up2_b_;  // transposed convs d2->d2/4->d2/8
    std::unique_ptr<nn::LayerNorm<T>> up_ln_;
    std::array<HyperMlp, 4> hyper_;
    HyperMlp iou_head_;
};

// Returns candidate 0 (the paper keeps only the first mask).
template <typename T>
ad::Var<T> select_mask(const DecodeResult<T>& result);

// 1 where logit > threshold (0 on logits is 0.5 on sigmoid). Raising the
// threshold never adds pixels. Expects a 2-d [H, W] tensor of finite logits.
BinMask binarize(const Tensor& logits, double threshold = 0.0);

}  // namespace rrseg
