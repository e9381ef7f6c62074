#include "rrseg/prompter.hpp"

#include "rrseg/errors.hpp"

namespace rrseg {

using ad::Var;

// ---------------- DecompBlock ----------------

template <typename T>
typename DecompBlock<T>::Path DecompBlock<T>::make_path(nn::ParamStore<T>& ps,
                                                        const std::string& scope, int64_t d,
                                                        int64_t heads, Rng& rng) {
    Path p;
    p.ln_self = std::make_unique<nn::LayerNorm<T>>(ps, scope + ".ln_self", d, true);
    p.ln_word = std::make_unique<nn::LayerNorm<T>>(ps, scope + ".ln_word", d, true);
    p.ln_word_mlp = std::make_unique<nn::LayerNorm<T>>(ps, scope + ".ln_word_mlp", d, true);
    p.ln_sub = std::make_unique<nn::LayerNorm<T>>(ps, scope + ".ln_sub", d, true);
    p.ln_sub_mlp = std::make_unique<nn::LayerNorm<T>>(ps, scope + ".ln_sub_mlp", d, true);
    p.self_attn =
        std::make_unique<nn::MultiheadAttention<T>>(ps, scope + ".self_attn", d, heads, 0, true, rng);
    p.word_attn =
        std::make_unique<nn::MultiheadAttention<T>>(ps, scope + ".word_attn", d, heads, 0, true, rng);
    p.sub_attn =
        std::make_unique<nn::MultiheadAttention<T>>(ps, scope + ".sub_attn", d, heads, 0, true, rng);
    p.word_mlp = std::make_unique<nn::Mlp<T>>(ps, scope + ".word_mlp", d, 4 * d, true, rng);
    p.sub_mlp = std::make_unique<nn::Mlp<T>>(ps, scope + ".sub_mlp", d, 4 * d, true, rng);
    return p;
}

template <typename T>
DecompBlock<T>::DecompBlock(nn::ParamStore<T>& ps, const std::string& scope, int64_t d,
                            int64_t heads, Rng& rng)
    : p1_(make_path(ps, scope + ".s1", d, heads, rng)),
      p2_(make_path(ps, scope + ".s2", d, heads, rng)) {}

template <typename T>
std::pair<Var<T>, Var<T>> DecompBlock<T>::forward(const Var<T>& t1_in, const Var<T>& t2_in,
                                                  const Var<T>& t_word, const Var<T>& pos1,
                                                  const Var<T>& pos2, bool exchange) const {
    auto stage_ab = [&](const Path& p, const Var<T>& x_in, const Var<T>& pos) {
        Var<T> h = p.ln_self->forward(x_in);
        Var<T> x = ad::add(x_in, p.self_attn->forward(h, h, pos, pos));
        x = ad::add(x, p.word_attn->forward(p.ln_word->forward(x), t_word, pos));
        x = ad::add(x, p.word_mlp->forward(p.ln_word_mlp->forward(x)));
        return x;
    };
    Var<T> a1 = stage_ab(p1_, t1_in, pos1);
    Var<T> a2 = stage_ab(p2_, t2_in, pos2);
    if (!exchange) return {a1, a2};
    // bidirectional exchange: both sides read the other's pre-exchange state
    Var<T> b1 = ad::add(a1, p1_.sub_attn->forward(p1_.ln_sub->forward(a1), a2, pos1, pos2));
    b1 = ad::add(b1, p1_.sub_mlp->forward(p1_.ln_sub_mlp->forward(b1)));
    Var<T> b2 = ad::add(a2, p2_.sub_attn->forward(p2_.ln_sub->forward(a2), a1, pos2, pos1));
    b2 = ad::add(b2, p2_.sub_mlp->forward(p2_.ln_sub_mlp->forward(b2)));
    return {b1, b2};
}

// ---------------- InteractBlock ----------------

template <typename T>
InteractBlock<T>::InteractBlock(nn::ParamStore<T>& ps, const std::string& scope, int64_t d,
                                int64_t heads, Rng& rng) {
    ln_t_ = std::make_unique<nn::LayerNorm<T>>(ps, scope + ".ln_t", d, true);
    ln_v_ = std::make_unique<nn::LayerNorm<T>>(ps, scope + ".ln_v", d, true);
    ln_v_mlp_ = std::make_unique<nn::LayerNorm<T>>(ps, scope + ".ln_v_mlp", d, true);
    self_attn_ =
        std::make_unique<nn::MultiheadAttention<T>>(ps, scope + ".self_attn", d, heads, 0, true, rng);
    cross_attn_ =
        std::make_unique<nn::MultiheadAttention<T>>(ps, scope + ".cross_attn", d, heads, 0, true, rng);
    mlp_ = std::make_unique<nn::Mlp<T>>(ps, scope + ".mlp", d, 4 * d, true, rng);
}

template <typename T>
std::pair<Var<T>, Var<T>> InteractBlock<T>::forward(const Var<T>& t_sub, const Var<T>& v,
                                                    const Var<T>& pos_t,
                                                    const Var<T>& pos_vis) const {
    Var<T> h = ln_t_->forward(t_sub);
    Var<T> tp = ad::add(t_sub, self_attn_->forward(h, h, pos_t, pos_t));
    // visual tokens query the refined subspace embeddings
    Var<T> vp = ad::add(v, cross_attn_->forward(ln_v_->forward(v), tp, pos_vis, pos_t));
    vp = ad::add(vp, mlp_->forward(ln_v_mlp_->forward(vp)));
    return {tp, vp};
}

// ---------------- PromptGenBlock ----------------

template <typename T>
PromptGenBlock<T>::PromptGenBlock(nn::ParamStore<T>& ps, const std::string& scope, int64_t d,
                                  int64_t heads, Rng& rng) {
    ln_self_ = std::make_unique<nn::LayerNorm<T>>(ps, scope + ".ln_self", d, true);
    ln_t_ = std::make_unique<nn::LayerNorm<T>>(ps, scope + ".ln_t", d, true);
    ln_t_mlp_ = std::make_unique<nn::LayerNorm<T>>(ps, scope + ".ln_t_mlp", d, true);
    ln_v_ = std::make_unique<nn::LayerNorm<T>>(ps, scope + ".ln_v", d, true);
    ln_v_mlp_ = std::make_unique<nn::LayerNorm<T>>(ps, scope + ".ln_v_mlp", d, true);
    self_attn_ =
        std::make_unique<nn::MultiheadAttention<T>>(ps, scope + ".self_attn", d, heads, 0, true, rng);
    t_attn_ =
        std::make_unique<nn::MultiheadAttention<T>>(ps, scope + ".t_attn", d, heads, 0, true, rng);
    v_attn_ =
        std::make_unique<nn::MultiheadAttention<T>>(ps, scope + ".v_attn", d, heads, 0, true, rng);
    t_mlp_ = std::make_unique<nn::Mlp<T>>(ps, scope + ".t_mlp", d, 4 * d, true, rng);
    v_mlp_ = std::make_unique<nn::Mlp<T>>(ps, scope + ".v_mlp", d, 4 * d, true, rng);
}

template <typename T>
Var<T> PromptGenBlock<T>::forward(const Var<T>& p_in, const Var<T>& t2p, const Var<T>& v2p,
                                  const Var<T>& pos_p) const {
    Var<T> h = ln_self_->forward(p_in);
    Var<T> p = ad::add(p_in, self_attn_->forward(h, h, pos_p, pos_p));
    p = ad::add(p, t_attn_->forward(ln_t_->forward(p), t2p, pos_p));
    p = ad::add(p, t_mlp_->forward(ln_t_mlp_->forward(p)));
    p = ad::add(p, v_attn_->forward(ln_v_->forward(p), v2p, pos_p));
    p = ad::add(p, v_mlp_->forward(ln_v_mlp_->forward(p)));
    return p;
}

// ---------------- DensePromptHead ----------------

template <typename T>
DensePromptHead<T>::DensePromptHead(nn::ParamStore<T>& ps, const std::string& scope, int64_t d,
                                    Rng& rng) {
    double stddev = std::sqrt(2.0 / static_cast<double>(9 * d + d));
    conv_w_ = ps.add(scope + ".conv.W", TensorT<T>::randn({9 * d, d}, rng, stddev), true);
    conv_b_ = ps.add(scope + ".conv.b", TensorT<T>::zeros({1, d}), true);
    bn_ = std::make_unique<nn::BatchNorm<T>>(ps, scope + ".bn", d, true);
    temperature = ps.add(scope + ".temperature", TensorT<T>::full({1}, T(10)), true);
}

template <typename T>
Var<T> DensePromptHead<T>::forward(const Var<T>& v2p, int64_t h1, int64_t w1,
                                   const Var<T>& t_sent, int64_t out_h, int64_t out_w,
                                   bool training, std::vector<std::string>* op_trace) {
    if (v2p->val.ndim() != 2 || v2p->val.dim(0) != h1 * w1)
        throw ShapeError("DensePromptHead: v2p rows != h1*w1");
    int64_t d = v2p->val.dim(1);
    Var<T> x = ad::reshape(v2p, {h1, w1, d});
    x = ad::conv2d(x, conv_w_, conv_b_, 3, 1, 1);
    if (op_trace) op_trace->push_back("conv");
    x = ad::reshape(x, {h1 * w1, d});
    x = ad::relu(bn_->forward(x, training));
    if (op_trace) op_trace->push_back("batchnorm_relu");
    // pre-up: upsample before the sentence filter
    x = ad::bilinear_resize(ad::reshape(x, {h1, w1, d}), out_h, out_w);
    if (op_trace) op_trace->push_back("upsample");
    x = ad::l2norm_rows(ad::reshape(x, {out_h * out_w, d}));
    Var<T> s = ad::l2norm_rows(t_sent);
    if (op_trace) op_trace->push_back("normalize");
    Var<T> p = ad::matmul(x, ad::transpose(s));
    if (op_trace) op_trace->push_back("filter");
    return p;
}

// ---------------- Prompter ----------------

template <typename T>
Prompter<T>::Prompter(nn::ParamStore<T>& ps, const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
    int64_t d = cfg.d1, heads = cfg.heads1();
    pos_t1_ = ps.add("prompter.pos_t1", TensorT<T>::randn({cfg.n_t, d}, rng, 0.02), true);
    pos_t2_ = ps.add("prompter.pos_t2", TensorT<T>::randn({cfg.n_t, d}, rng, 0.02), true);
    pos_vis_ = ps.add("prompter.pos_vis",
                      TensorT<T>::randn({cfg.h1() * cfg.w1(), d}, rng, 0.02), true);
    sparse_q_ = ps.add("prompter.sparse_q", TensorT<T>::randn({cfg.n_p, d}, rng, 0.02), true);
    pos_sparse_ =
        ps.add("prompter.pos_sparse", TensorT<T>::randn({cfg.n_p, d}, rng, 0.02), true);
    for (int64_t i = 0; i < cfg.N_decomp; ++i)
        decomp_.push_back(std::make_unique<DecompBlock<T>>(
            ps, "prompter.decomp." + std::to_string(i), d, heads, rng));
    for (int64_t i = 0; i < cfg.N_interact; ++i)
        interact1_.push_back(std::make_unique<InteractBlock<T>>(
            ps, "prompter.interact1." + std::to_string(i), d, heads, rng));
    for (int64_t i = 0; i < cfg.N_interact; ++i)
        interact2_.push_back(std::make_unique<InteractBlock<T>>(
            ps, "prompter.interact2." + std::to_string(i), d, heads, rng));
    for (int64_t i = 0; i < cfg.N_pgen; ++i)
        pgen_.push_back(std::make_unique<PromptGenBlock<T>>(
            ps, "prompter.pgen." + std::to_string(i), d, heads, rng));
    ln_t1_out_ = std::make_unique<nn::LayerNorm<T>>(ps, "prompter.ln_t1_out", d, true);
    ln_t2_out_ = std::make_unique<nn::LayerNorm<T>>(ps, "prompter.ln_t2_out", d, true);
    ln_t1p_out_ = std::make_unique<nn::LayerNorm<T>>(ps, "prompter.ln_t1p_out", d, true);
    ln_v1p_out_ = std::make_unique<nn::LayerNorm<T>>(ps, "prompter.ln_v1p_out", d, true);
    ln_t2p_out_ = std::make_unique<nn::LayerNorm<T>>(ps, "prompter.ln_t2p_out", d, true);
    ln_v2p_out_ = std::make_unique<nn::LayerNorm<T>>(ps, "prompter.ln_v2p_out", d, true);
    ln_p_out_ = std::make_unique<nn::LayerNorm<T>>(ps, "prompter.ln_p_out", d, true);
    out_proj_ = std::make_unique<nn::LoraLinear<T>>(ps, "prompter.out_proj", d, cfg.d2, 0,
                                                    true, rng);
    dense_head_ = std::make_unique<DensePromptHead<T>>(ps, "prompter.dense_head", d, rng);
}

template <typename T>
std::pair<Var<T>, Var<T>> Prompter<T>::decompose(const Var<T>& t_word) const {
    if (t_word->val.ndim() != 2 || t_word->val.dim(0) < 1 || t_word->val.dim(1) != cfg_.d1)
        throw ShapeError("decompose: t_word must be [L>=1, d1], got " + t_word->val.shape_str());
    // textpool init: both subspace query sets start from the pooled words
    Var<T> pooled = ad::mean_rows(t_word);
    std::vector<Var<T>> reps(static_cast<size_t>(cfg_.n_t), pooled);
    Var<T> t1 = ad::concat_rows(reps);
    Var<T> t2 = ad::concat_rows(reps);
    if (decomp_.empty()) return {t1, t2};  // ablation probe: raw textpool queries
    for (const auto& blk : decomp_) {
        auto [n1, n2] = blk->forward(t1, t2, t_word, pos_t1_, pos_t2_, cfg_.cascaded);
        t1 = n1;
        t2 = n2;
    }
    return {ln_t1_out_->forward(t1), ln_t2_out_->forward(t2)};
}

template <typename T>
std::pair<Var<T>, Var<T>> Prompter<T>::interact_first(const Var<T>& t1, const Var<T>& v) const {
    Var<T> t = t1, vis = v;
    if (interact1_.empty()) return {t, vis};
    for (const auto& blk : interact1_) {
        auto [nt, nv] = blk->forward(t, vis, pos_t1_, pos_vis_);
        t = nt;
        vis = nv;
    }
    return {ln_t1p_out_->forward(t), ln_v1p_out_->forward(vis)};
}

template <typename T>
std::pair<Var<T>, Var<T>> Prompter<T>::interact_second(const Var<T>& t2,
                                                       const Var<T>& v1p) const {
    Var<T> t = t2, vis = v1p;
    if (interact2_.empty()) return {t, vis};
    for (const auto& blk : interact2_) {
        auto [nt, nv] = blk->forward(t, vis, pos_t2_, pos_vis_);
        t = nt;
        vis = nv;
    }
    return {ln_t2p_out_->forward(t), ln_v2p_out_->forward(vis)};
}

template <typename T>
Var<T> Prompter<T>::gen_sparse(const Var<T>& t2p, const Var<T>& v2p) const {
    Var<T> p = sparse_q_;
    for (const auto& blk : pgen_) p = blk->forward(p, t2p, v2p, pos_sparse_);
    if (!pgen_.empty()) p = ln_p_out_->forward(p);
    return out_proj_->forward(p);
}

template <typename T>
Var<T> Prompter<T>::gen_dense(const Var<T>& v2p, const Var<T>& t_sent, bool training,
                              std::vector<std::string>* op_trace) {
    return dense_head_->forward(v2p, cfg_.h1(), cfg_.w1(), t_sent, cfg_.dense_h(),
                                cfg_.dense_w(), training, op_trace);
}

template <typename T>
PrompterOutput<T> Prompter<T>::forward(const FeatureBundle<T>& f, bool training) {
    PrompterOutput<T> out;
    auto [t1, t2] = decompose(f.t_word);
    out.t1 = t1;
    out.t2 = t2;
    if (cfg_.cascaded) {
        auto [t1p, v1p] = interact_first(t1, f.v);
        // second stage consumes the first stage's visual output, not v
        auto [t2p, v2p] = interact_second(t2, v1p);
        out.t1p = t1p;
        out.v1p = v1p;
        out.t2p = t2p;
        out.v2p = v2p;
    } else {
        // single-stage ablation: one interaction on the first subspace
        auto [t1p, v1p] = interact_first(t1, f.v);
        out.t1p = t1p;
        out.v1p = v1p;
        out.t2p = t1p;
        out.v2p = v1p;
    }
    out.p_sparse = gen_sparse(out.t2p, out.v2p);
    out.p_dense = gen_dense(out.v2p, f.t_sent, training);
    out.p_dense_logits = ad::mul_scalar_var(out.p_dense, dense_head_->temperature);
    return out;
}

#define RRSEG_INSTANTIATE_PROMPTER(T)  \
    template class DecompBlock<T>;     \
    template class InteractBlock<T>;   \
    template class PromptGenBlock<T>;  \
    template class DensePromptHead<T>; \
    template class Prompter<T>;

RRSEG_INSTANTIATE_PROMPTER(float)
RRSEG_INSTANTIATE_PROMPTER(double)

#undef RRSEG_INSTANTIATE_PROMPTER

}  // namespace rrseg
