#pragma once

#include <memory>
#include <string>
#include <vector>

#include "rrseg/config.hpp"
#include "rrseg/encoders.hpp"
#include "rrseg/nn.hpp"

namespace rrseg {

// One referring-semantic-decomposition block. Each subspace runs
// self-attention over its queries, cross-attention into the word embeddings,
// then a bidirectional exchange with the other subspace; MLP sub-layers
// follow both cross-attentions. Pre-norm residual throughout.
template <typename T>
class DecompBlock {
public:
    DecompBlock(nn::ParamStore<T>& ps, const std::string& scope, int64_t d, int64_t heads,
                Rng& rng);

    // (t1, t2, t_word, pos1, pos2) -> updated (t1, t2); exchange can be
    // disabled for the single-stage ablation.
    std::pair<ad::Var<T>, ad::Var<T>> forward(const ad::Var<T>& t1, const ad::Var<T>& t2,
                                              const ad::Var<T>& t_word, const ad::Var<T>& pos1,
                                              const ad::Var<T>& pos2, bool exchange) const;

private:
    struct Path {
        std::unique_ptr<nn::LayerNorm<T>> ln_self, ln_word, ln_word_mlp, ln_sub, ln_sub_mlp;
        std::unique_ptr<nn::MultiheadAttention<T>> self_attn, word_attn, sub_attn;
        std::unique_ptr<nn::Mlp<T>> word_mlp, sub_mlp;
    };
    Path make_path(nn::ParamStore<T>& ps, const std::string& scope, int64_t d, int64_t heads,
                   Rng& rng);
    Path p1_, p2_;
};

// Text-visual interaction block: subspace tokens self-attend, then the
// visual map queries them; the visual path carries the MLP.
template <typename T>
class InteractBlock {
public:
    InteractBlock(nn::ParamStore<T>& ps, const std::string& scope, int64_t d, int64_t heads,
                  Rng& rng);

    std::pair<ad::Var<T>, ad::Var<T>> forward(const ad::Var<T>& t_sub, const ad::Var<T>& v,
                                              const ad::Var<T>& pos_t,
                                              const ad::Var<T>& pos_vis) const;

private:
    std::unique_ptr<nn::LayerNorm<T>> ln_t_, ln_v_, ln_v_mlp_;
    std::unique_ptr<nn::MultiheadAttention<T>> self_attn_, cross_attn_;
    std::unique_ptr<nn::Mlp<T>> mlp_;
};

// Sparse-prompt generation block: query self-attention, cross-attention to
// the refined text subspace, then to the refined visual map.
template <typename T>
class PromptGenBlock {
public:
    PromptGenBlock(nn::ParamStore<T>& ps, const std::string& scope, int64_t d, int64_t heads,
                   Rng& rng);

    ad::Var<T> forward(const ad::Var<T>& p, const ad::Var<T>& t2p, const ad::Var<T>& v2p,
                       const ad::Var<T>& pos_p) const;

private:
    std::unique_ptr<nn::LayerNorm<T>> ln_self_, ln_t_, ln_t_mlp_, ln_v_, ln_v_mlp_;
    std::unique_ptr<nn::MultiheadAttention<T>> self_attn_, t_attn_, v_attn_;
    std::unique_ptr<nn::Mlp<T>> t_mlp_, v_mlp_;
};

// Dense prompt head: conv-smooth the refined visual map, upsample to the
// dense prompt grid BEFORE the text filter (pre-up), then cosine against the
// normalized sentence embedding. Output is a raw cosine map in [-1, 1];
// consumers scale it by the learnable temperature to obtain logits.
template <typename T>
class DensePromptHead {
public:
    DensePromptHead(nn::ParamStore<T>& ps, const std::string& scope, int64_t d, Rng& rng);

    // v2p: [h1*w1, d]; t_sent: [1, d] -> [(out_h)*(out_w), 1]
    ad::Var<T> forward(const ad::Var<T>& v2p, int64_t h1, int64_t w1, const ad::Var<T>& t_sent,
                       int64_t out_h, int64_t out_w, bool training,
                       std::vector<std::string>* op_trace = nullptr);

    ad::Var<T> temperature;  // scalar [1]

private:
    ad::Var<T> conv_w_, conv_b_;
    std::unique_ptr<nn::BatchNorm<T>> bn_;
};

template <typename T>
struct PrompterOutput {
    ad::Var<T> t1, t2;    // final decomposition outputs [n_t, d1]
    ad::Var<T> t1p, t2p;  // post-interaction subspace embeddings
    ad::Var<T> v1p, v2p;  // post-interaction visual maps [h1*w1, d1]
    ad::Var<T> p_sparse;  // [n_p, d2]
    ad::Var<T> p_dense;          // [(H2/4)*(W2/4), 1], raw cosine
    ad::Var<T> p_dense_logits;   // p_dense * temperature
};

// Cascaded second-order referring prompter. Stage functions are public so
// tests can recompose the cascade and probe intermediates.
template <typename T>
class Prompter {
public:
    Prompter(nn::ParamStore<T>& ps, const ModelConfig& cfg, Rng& rng);

    std::pair<ad::Var<T>, ad::Var<T>> decompose(const ad::Var<T>& t_word) const;
    std::pair<ad::Var<T>, ad::Var<T>> interact_first(const ad::Var<T>& t1,
                                                     const ad::Var<T>& v) const;
    std::pair<ad::Var<T>, ad::Var<T>> interact_second(const ad::Var<T>& t2,
                                                      const ad::Var<T>& v1p) const;
    ad::Var<T> gen_sparse(const ad::Var<T>& t2p, const ad::Var<T>& v2p) const;
    ad::Var<T> gen_dense(const ad::Var<T>& v2p, const ad::Var<T>& t_sent, bool training,
                         std::vector<std::string>* op_trace = nullptr);

    PrompterOutput<T> forward(const FeatureBundle<T>& f, bool training);

    ad::Var<T> temperature() const { return dense_head_->temperature; }

private:
    ModelConfig cfg_;
    ad::Var<T> pos_t1_, pos_t2_;   // subspace query positions [n_t, d1]
    ad::Var<T> pos_vis_;           // visual token positions [h1*w1, d1]
    ad::Var<T> sparse_q_, pos_sparse_;  // sparse queries + positions [n_p, d1]
    std::vector<std::unique_ptr<DecompBlock<T>>> decomp_;
    std::vector<std::unique_ptr<InteractBlock<T>>> interact1_, interact2_;
    std::vector<std::unique_ptr<PromptGenBlock<T>>> pgen_;
    // stack-final norms keep the residual streams unit-scale stage to stage
    std::unique_ptr<nn::LayerNorm<T>> ln_t1_out_, ln_t2_out_;
    std::unique_ptr<nn::LayerNorm<T>> ln_t1p_out_, ln_v1p_out_, ln_t2p_out_, ln_v2p_out_;
    std::unique_ptr<nn::LayerNorm<T>> ln_p_out_;
    std::unique_ptr<nn::LoraLinear<T>> out_proj_;  // d1 -> d2
    std::unique_ptr<DensePromptHead<T>> dense_head_;
};

}  // namespace rrseg
