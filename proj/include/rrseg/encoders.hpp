#pragma once

#include <memory>
#include <string>
#include <vector>

#include "rrseg/nn.hpp"
#include "rrseg/tokenizer.hpp"

namespace rrseg {

// Joint output of the dual-modality encoder: dense visual map plus word- and
// sentence-level text embeddings in the shared width d1. The fused text
// feature is the row-concatenation [t_word; t_sent].
template <typename T>
struct FeatureBundle {
    ad::Var<T> v;       // [h1*w1, d1]
    ad::Var<T> t_word;  // [L, d1]
    ad::Var<T> t_sent;  // [1, d1]
    int64_t h1 = 0, w1 = 0;

    ad::Var<T> fused_text() const { return ad::concat_rows<T>({t_word, t_sent}); }
};

// Transformer text encoder: hashed embeddings + learned positions + pre-norm
// blocks with LoRA on q/v. The sentence embedding is the final hidden state
// at the appended EOS position.
template <typename T>
class TextEncoder {
public:
    TextEncoder(nn::ParamStore<T>& ps, const std::string& scope, int64_t vocab_size,
                int64_t max_len, int64_t d, int64_t depth, int64_t heads, int64_t lora_rank,
                Rng& rng);

    // (t_word [L,d], t_sent [1,d])
    std::pair<ad::Var<T>, ad::Var<T>> forward(const std::string& text,
                                              const TextTokenizer& tok) const;

private:
    ad::Var<T> table_;  // [vocab, d]
    ad::Var<T> pos_;    // [max_len, d]
    std::vector<std::unique_ptr<nn::TransformerBlock<T>>> blocks_;
    std::unique_ptr<nn::LayerNorm<T>> final_ln_;
    int64_t d_;
};

// ViT-style encoder: non-overlapping patch embedding, learned positional
// table, pre-norm blocks with LoRA on q/v, no pooling. Serves both the
// low-res joint branch (patch1/d1) and the mask branch (stride2/d2).
template <typename T>
class VisualEncoder {
public:
    VisualEncoder(nn::ParamStore<T>& ps, const std::string& scope, int64_t img_h,
                  int64_t img_w, int64_t patch, int64_t d, int64_t depth, int64_t heads,
                  int64_t lora_rank, Rng& rng);

    // image [H,W,3] in [0,1] -> dense token map [h*w, d]
    ad::Var<T> forward(const TensorT<T>& image) const;

    int64_t grid_h() const { return img_h_ / patch_; }
    int64_t grid_w() const { return img_w_ / patch_; }

private:
    std::unique_ptr<nn::LoraLinear<T>> patch_embed_;
    ad::Var<T> pos_;
    std::vector<std::unique_ptr<nn::TransformerBlock<T>>> blocks_;
    std::unique_ptr<nn::LayerNorm<T>> final_ln_;
    int64_t img_h_, img_w_, patch_, d_;
};

}  // namespace rrseg
