#include "rrseg/nn.hpp"

#include <cmath>

#include "rrseg/errors.hpp"

namespace rrseg::nn {

using ad::Var;

template <typename T>
Var<T> ParamStore<T>::add(const std::string& name, TensorT<T> init, bool trainable) {
    for (const auto& e : params)
        if (e.name == name) throw ShapeError("duplicate parameter name: " + name);
    auto v = ad::leaf(std::move(init), trainable, name);
    params.push_back({name, v});
    return v;
}

template <typename T>
void ParamStore<T>::add_buffer(const std::string& name, TensorT<T>* t) {
    buffers.push_back({name, t});
}

template <typename T>
std::vector<typename ParamStore<T>::Entry> ParamStore<T>::trainable() const {
    std::vector<Entry> out;
    for (const auto& e : params)
        if (e.var->needs) out.push_back(e);
    return out;
}

template <typename T>
const typename ParamStore<T>::Entry* ParamStore<T>::find(const std::string& name) const {
    for (const auto& e : params)
        if (e.name == name) return &e;
    return nullptr;
}

template <typename T>
int64_t ParamStore<T>::total_param_count() const {
    int64_t n = 0;
    for (const auto& e : params) n += e.var->val.numel();
    return n;
}

template <typename T>
int64_t ParamStore<T>::trainable_param_count() const {
    int64_t n = 0;
    for (const auto& e : params)
        if (e.var->needs) n += e.var->val.numel();
    return n;
}

template <typename T>
void ParamStore<T>::zero_grads() {
    for (auto& e : params) e.var->zero_grad();
}

template <typename T>
TensorT<T> xavier_init(int64_t d_in, int64_t d_out, Rng& rng) {
    double stddev = std::sqrt(2.0 / static_cast<double>(d_in + d_out));
    return TensorT<T>::randn({d_out, d_in}, rng, stddev);
}

template <typename T>
LoraLinear<T>::LoraLinear(ParamStore<T>& ps, const std::string& scope, int64_t d_in,
                          int64_t d_out, int64_t rank, bool base_trainable, Rng& rng,
                          bool bias)
    : d_in_(d_in), d_out_(d_out), rank_(rank) {
    W = ps.add(scope + ".W", xavier_init<T>(d_in, d_out, rng), base_trainable);
    if (bias) b = ps.add(scope + ".b", TensorT<T>::zeros({1, d_out}), base_trainable);
    if (rank > 0) {
        // A ~ N(0, 1/r), B = 0: adapter contributes exactly zero at init
        double stddev = std::sqrt(1.0 / static_cast<double>(rank));
        A = ps.add("lora." + scope + ".A", TensorT<T>::randn({d_out, rank}, rng, stddev), true);
        B = ps.add("lora." + scope + ".B", TensorT<T>::zeros({d_in, rank}), true);
    }
}

template <typename T>
Var<T> LoraLinear<T>::forward(const Var<T>& x) const {
    if (x->val.ndim() != 2 || x->val.dim(1) != d_in_)
        throw ShapeError("LoraLinear: input " + x->val.shape_str() + " incompatible with d_in " +
                         std::to_string(d_in_));
    Var<T> y = ad::matmul(x, ad::transpose(W));
    if (rank_ > 0) y = ad::add(y, ad::matmul(ad::matmul(x, B), ad::transpose(A)));
    if (b) y = ad::add_rowvec(y, b);
    return y;
}

template <typename T>
LayerNorm<T>::LayerNorm(ParamStore<T>& ps, const std::string& scope, int64_t d, bool trainable) {
    gamma = ps.add(scope + ".gamma", TensorT<T>::full({1, d}, T(1)), trainable);
    beta = ps.add(scope + ".beta", TensorT<T>::zeros({1, d}), trainable);
}

template <typename T>
Var<T> LayerNorm<T>::forward(const Var<T>& x) const {
    return ad::layernorm_rows(x, gamma, beta);
}

template <typename T>
BatchNorm<T>::BatchNorm(ParamStore<T>& ps, const std::string& scope, int64_t channels,
                        bool trainable)
    : running_mean(TensorT<T>::zeros({channels})),
      running_var(TensorT<T>::full({channels}, T(1))) {
    gamma = ps.add(scope + ".gamma", TensorT<T>::full({1, channels}, T(1)), trainable);
    beta = ps.add(scope + ".beta", TensorT<T>::zeros({1, channels}), trainable);
    ps.add_buffer(scope + ".running_mean", &running_mean);
    ps.add_buffer(scope + ".running_var", &running_var);
}

template <typename T>
Var<T> BatchNorm<T>::forward(const Var<T>& x, bool training) {
    return ad::batchnorm_rows(x, gamma, beta, &running_mean, &running_var, training);
}

template <typename T>
Mlp<T>::Mlp(ParamStore<T>& ps, const std::string& scope, int64_t d, int64_t hidden,
            bool trainable, Rng& rng, int64_t lora_rank)
    : fc1_(ps, scope + ".fc1", d, hidden, lora_rank, trainable, rng),
      fc2_(ps, scope + ".fc2", hidden, d, lora_rank, trainable, rng) {}

template <typename T>
Var<T> Mlp<T>::forward(const Var<T>& x) const {
    return fc2_.forward(ad::gelu(fc1_.forward(x)));
}

template <typename T>
MultiheadAttention<T>::MultiheadAttention(ParamStore<T>& ps, const std::string& scope,
                                          int64_t d_model, int64_t heads, int64_t lora_rank,
                                          bool base_trainable, Rng& rng)
    : q_(ps, scope + ".q", d_model, d_model, lora_rank, base_trainable, rng),
      k_(ps, scope + ".k", d_model, d_model, 0, base_trainable, rng),
      v_(ps, scope + ".v", d_model, d_model, lora_rank, base_trainable, rng),
      o_(ps, scope + ".o", d_model, d_model, 0, base_trainable, rng),
      heads_(heads),
      head_dim_(d_model / heads) {
    if (d_model % heads != 0) throw ShapeError("MultiheadAttention: d_model % heads != 0");
}

template <typename T>
Var<T> MultiheadAttention<T>::forward(const Var<T>& query, const Var<T>& keyvalue,
                                      const Var<T>& q_pos, const Var<T>& k_pos) const {
    Var<T> q_in = q_pos ? ad::add(query, q_pos) : query;
    Var<T> k_in = k_pos ? ad::add(keyvalue, k_pos) : keyvalue;
    Var<T> Q = q_.forward(q_in);
    Var<T> K = k_.forward(k_in);
    Var<T> V = v_.forward(keyvalue);
    double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim_));
    std::vector<Var<T>> outs;
    outs.reserve(static_cast<size_t>(heads_));
    for (int64_t h = 0; h < heads_; ++h) {
        int64_t c0 = h * head_dim_, c1 = c0 + head_dim_;
        Var<T> Qh = ad::slice_cols(Q, c0, c1);
        Var<T> Kh = ad::slice_cols(K, c0, c1);
        Var<T> Vh = ad::slice_cols(V, c0, c1);
        Var<T> S = ad::scale(ad::matmul(Qh, ad::transpose(Kh)), inv_sqrt);
        Var<T> attn = ad::softmax_rows(S);
        outs.push_back(ad::matmul(attn, Vh));
    }
    Var<T> concat = heads_ == 1 ? outs[0] : ad::concat_cols(outs);
    return o_.forward(concat);
}

template <typename T>
TransformerBlock<T>::TransformerBlock(ParamStore<T>& ps, const std::string& scope, int64_t d,
                                      int64_t heads, int64_t lora_rank, bool base_trainable,
                                      Rng& rng)
    : ln1_(ps, scope + ".ln1", d, base_trainable),
      ln2_(ps, scope + ".ln2", d, base_trainable),
      attn_(ps, scope + ".attn", d, heads, lora_rank, base_trainable, rng),
      mlp_(ps, scope + ".mlp", d, 4 * d, base_trainable, rng) {}

template <typename T>
Var<T> TransformerBlock<T>::forward(const Var<T>& x) const {
    Var<T> h = ln1_.forward(x);
    Var<T> y = ad::add(x, attn_.forward(h, h));
    return ad::add(y, mlp_.forward(ln2_.forward(y)));
}

#define RRSEG_INSTANTIATE_NN(T)           \
    template struct ParamStore<T>;        \
    template class LoraLinear<T>;         \
    template class LayerNorm<T>;          \
    template class BatchNorm<T>;          \
    template class Mlp<T>;                \
    template class MultiheadAttention<T>; \
    template class TransformerBlock<T>;   \
    template TensorT<T> xavier_init<T>(int64_t, int64_t, Rng&);

RRSEG_INSTANTIATE_NN(float)
RRSEG_INSTANTIATE_NN(double)

#undef RRSEG_INSTANTIATE_NN

}  // namespace rrseg::nn
