#pragma once

#include <vector>

#include "rrseg/autodiff.hpp"
#include "rrseg/config.hpp"

namespace rrseg {

// Ground-truth downsampling rules. Area-majority (foreground iff more than
// half the window is foreground) serves CE-style targets; any-foreground
// keeps small targets alive for MIL sets and mask pooling.
template <typename T>
TensorT<T> downsample_majority(const TensorT<T>& gt, int64_t out_h, int64_t out_w);
template <typename T>
TensorT<T> downsample_any(const TensorT<T>& gt, int64_t out_h, int64_t out_w);

// Segmentation loss: mean BCE on logits plus alpha_dice * dice, dice smoothed
// with eps = 1. Optional out-params expose the unweighted parts for logging.
template <typename T>
ad::Var<T> seg_loss(const ad::Var<T>& pred_logits, const TensorT<T>& gt, double alpha_dice,
                    double* ce_out = nullptr, double* dice_out = nullptr);

// alpha_ortho * cos^2(norm-pool(t1), norm-pool(t2)).
template <typename T>
ad::Var<T> ortho_loss(const ad::Var<T>& t1, const ad::Var<T>& t2, double alpha_ortho);

// Mean BCE between the temperature-scaled dense prompt logits and the
// area-majority downsampled ground truth.
template <typename T>
ad::Var<T> dense_align_loss(const ad::Var<T>& p_dense_logits, const TensorT<T>& gt,
                            int64_t map_h, int64_t map_w);

// Coarse cosine map between visual tokens and the pooled text vector,
// supervised by CE (dense BCE) or MIL (max-over-foreground vs
// max-over-background). Cosines are scaled by 1/temperature to form logits.
template <typename T>
ad::Var<T> spatial_align_loss(const ad::Var<T>& v, const ad::Var<T>& text_vec,
                              const TensorT<T>& gt, SpatMode mode, int64_t h1, int64_t w1,
                              double temperature = 0.07);

// Mask-pool visual tokens over the (any-foreground) downsampled ground truth.
template <typename T>
ad::Var<T> mask_pooled_visual(const ad::Var<T>& v, const TensorT<T>& gt, int64_t h1,
                              int64_t w1);

// Symmetric InfoNCE over matched (visual, text) rows.
template <typename T>
ad::Var<T> sample_nce_loss(const ad::Var<T>& vis, const ad::Var<T>& txt,
                           double temperature = 0.07);

template <typename T>
struct LossTerms {
    ad::Var<T> seg;    // already includes alpha_dice
    ad::Var<T> ortho;  // already includes alpha_ortho
    ad::Var<T> dense;  // unweighted
    ad::Var<T> spat;   // unweighted
    ad::Var<T> samp;   // unweighted
};

struct LossBreakdown {
    double seg = 0, ortho = 0, dense = 0, spat = 0, samp = 0, total = 0;
};

template <typename T>
struct TotalLoss {
    ad::Var<T> value;
    LossBreakdown parts;  // weighted contributions; parts sum to total
};

// L = L_seg + L_ortho + alpha_dense*L_dense + alpha_spat*L_spat + alpha_samp*L_samp.
// Null terms contribute zero.
template <typename T>
TotalLoss<T> total_loss(const LossTerms<T>& terms, double alpha_dense, double alpha_spat,
                        double alpha_samp);

}  // namespace rrseg
