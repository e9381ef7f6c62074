#pragma once

#include <memory>
#include <string>
#include <vector>

#include "rrseg/autodiff.hpp"
#include "rrseg/rng.hpp"

namespace rrseg::nn {

// Named parameter registry. A parameter's trainable flag is its node's
// `needs`; frozen weights never receive gradient storage. Buffers are
// non-learnable state (batch-norm running stats) that still checkpoints.
template <typename T>
struct ParamStore {
    struct Entry {
        std::string name;
        ad::Var<T> var;
    };
    struct Buffer {
        std::string name;
        TensorT<T>* tensor;  // points into the owning module; modules must not move
    };

    std::vector<Entry> params;
    std::vector<Buffer> buffers;

    ad::Var<T> add(const std::string& name, TensorT<T> init, bool trainable);
    void add_buffer(const std::string& name, TensorT<T>* t);

    std::vector<Entry> trainable() const;
    const Entry* find(const std::string& name) const;
    int64_t total_param_count() const;
    int64_t trainable_param_count() const;
    void zero_grads();
};

// Frozen-or-trainable linear with an optional LoRA adapter on the frozen
// base: y = x W^T + (x B) A^T + b. With rank 0 the adapter is absent.
// W is stored [d_out, d_in], A [d_out, r], B [d_in, r]; B starts at zero so
// the wrapped forward equals the frozen layer exactly at init.
template <typename T>
class LoraLinear {
public:
    LoraLinear(ParamStore<T>& ps, const std::string& scope, int64_t d_in, int64_t d_out,
               int64_t rank, bool base_trainable, Rng& rng, bool bias = true);

    ad::Var<T> forward(const ad::Var<T>& x) const;

    int64_t rank() const { return rank_; }
    ad::Var<T> W, b;  // b null when bias = false
    ad::Var<T> A, B;  // null when rank 0

private:
    int64_t d_in_, d_out_, rank_;
};

template <typename T>
class LayerNorm {
public:
    LayerNorm(ParamStore<T>& ps, const std::string& scope, int64_t d, bool trainable);
    ad::Var<T> forward(const ad::Var<T>& x) const;
    ad::Var<T> gamma, beta;
};

template <typename T>
class BatchNorm {
public:
    BatchNorm(ParamStore<T>& ps, const std::string& scope, int64_t channels, bool trainable);
    // x: [N, C] rows; statistics are over rows.
    ad::Var<T> forward(const ad::Var<T>& x, bool training);
    ad::Var<T> gamma, beta;
    TensorT<T> running_mean, running_var;
};

template <typename T>
class Mlp {
public:
    Mlp(ParamStore<T>& ps, const std::string& scope, int64_t d, int64_t hidden,
        bool trainable, Rng& rng, int64_t lora_rank = 0);
    ad::Var<T> forward(const ad::Var<T>& x) const;

private:
    LoraLinear<T> fc1_, fc2_;
};

// Multi-head attention over row-token tensors. Positional embeddings are
// added to queries and keys only (not values), DETR style. LoRA adapters, if
// any, sit on the query and value projections.
template <typename T>
class MultiheadAttention {
public:
    MultiheadAttention(ParamStore<T>& ps, const std::string& scope, int64_t d_model,
                       int64_t heads, int64_t lora_rank, bool base_trainable, Rng& rng);

    ad::Var<T> forward(const ad::Var<T>& query, const ad::Var<T>& keyvalue,
                       const ad::Var<T>& q_pos = nullptr,
                       const ad::Var<T>& k_pos = nullptr) const;

private:
    LoraLinear<T> q_, k_, v_, o_;
    int64_t heads_, head_dim_;
};

// Pre-norm residual encoder block: x += attn(ln1(x)); x += mlp(ln2(x)).
template <typename T>
class TransformerBlock {
public:
    TransformerBlock(ParamStore<T>& ps, const std::string& scope, int64_t d, int64_t heads,
                     int64_t lora_rank, bool base_trainable, Rng& rng);
    ad::Var<T> forward(const ad::Var<T>& x) const;

private:
    LayerNorm<T> ln1_, ln2_;
    MultiheadAttention<T> attn_;
    Mlp<T> mlp_;
};

// Xavier/Glorot normal init used across the project.
template <typename T>
TensorT<T> xavier_init(int64_t d_in, int64_t d_out, Rng& rng);

}  // namespace rrseg::nn
