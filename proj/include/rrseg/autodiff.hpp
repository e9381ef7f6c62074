#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "rrseg/tensor.hpp"

namespace rrseg::ad {

// Tape-free reverse-mode autodiff: each op returns a node holding its value
// plus a closure that routes the node's gradient to its parents. Graphs are
// built per forward pass; parameters are long-lived leaf nodes whose .grad
// accumulates until zero_grad.
template <typename T>
class Node {
public:
    TensorT<T> val;
    TensorT<T> grad;  // empty until first accumulation
    bool needs = false;
    bool leaf = false;
    std::string name;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;

    void ensure_grad() {
        if (grad.numel() == 0) grad = TensorT<T>::zeros(val.shape);
    }
    void zero_grad() { grad = TensorT<T>(); }
};

template <typename T>
using Var = std::shared_ptr<Node<T>>;

// Thread-local switch: with grads disabled, ops keep no parents/closures so
// intermediates free as soon as the last handle drops (inference mode).
bool grad_enabled();
void set_grad_enabled(bool on);

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(grad_enabled()) { set_grad_enabled(false); }
    ~NoGradGuard() { set_grad_enabled(prev); }
};

template <typename T>
Var<T> constant(TensorT<T> t);
template <typename T>
Var<T> leaf(TensorT<T> t, bool requires_grad, std::string name = "");

// Seeds root grad with ones and runs reverse topological order.
template <typename T>
void backward(const Var<T>& root);

// ---- shape ops ----
template <typename T>
Var<T> reshape(const Var<T>& a, std::vector<int64_t> shape);
template <typename T>
Var<T> transpose(const Var<T>& a);  // 2-d
template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts);
template <typename T>
Var<T> slice_rows(const Var<T>& a, int64_t r0, int64_t r1);
template <typename T>
Var<T> slice_cols(const Var<T>& a, int64_t c0, int64_t c1);
template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts);

// ---- arithmetic ----
template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> div(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> scale(const Var<T>& a, double c);
template <typename T>
Var<T> add_scalar(const Var<T>& a, double c);
template <typename T>
Var<T> add_rowvec(const Var<T>& a, const Var<T>& b);  // [m,n] + [1,n]
template <typename T>
Var<T> mul_scalar_var(const Var<T>& a, const Var<T>& s);  // tensor * scalar node
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b);

// ---- reductions ----
template <typename T>
Var<T> sum(const Var<T>& a);   // -> [1]
template <typename T>
Var<T> mean(const Var<T>& a);  // -> [1]
template <typename T>
Var<T> mean_rows(const Var<T>& a);  // [m,n] -> [1,n]
template <typename T>
Var<T> masked_mean_rows(const Var<T>& a, const std::vector<int64_t>& rows);  // -> [1,n]
template <typename T>
Var<T> masked_max(const Var<T>& a, const std::vector<int64_t>& idx);  // flat subset max -> [1]
template <typename T>
Var<T> take_diag(const Var<T>& a);       // [n,n] -> [n,1]
template <typename T>
Var<T> logsumexp_rows(const Var<T>& a);  // [m,n] -> [m,1]

// ---- elementwise nonlinearities ----
template <typename T>
Var<T> relu(const Var<T>& a);
template <typename T>
Var<T> gelu(const Var<T>& a);
template <typename T>
Var<T> sigmoid(const Var<T>& a);
template <typename T>
Var<T> exp(const Var<T>& a);
template <typename T>
Var<T> log(const Var<T>& a);
template <typename T>
Var<T> softmax_rows(const Var<T>& a);

// ---- normalization ----
template <typename T>
Var<T> layernorm_rows(const Var<T>& a, const Var<T>& gamma, const Var<T>& beta,
                      double eps = 1e-5);
template <typename T>
Var<T> l2norm_rows(const Var<T>& a, double eps = 1e-12);
// Batch-norm over rows (pixels) per channel; running stats update in training.
template <typename T>
Var<T> batchnorm_rows(const Var<T>& a, const Var<T>& gamma, const Var<T>& beta,
                      TensorT<T>* running_mean, TensorT<T>* running_var, bool training,
                      double momentum = 0.1, double eps = 1e-5);

// ---- spatial ops; activations carry shape [H, W, C] ----
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int64_t ksize,
              int64_t stride, int64_t pad);  // w: [k*k*Cin, Cout], b: [1, Cout]
template <typename T>
Var<T> conv_transpose2x2(const Var<T>& x, const Var<T>& w, const Var<T>& b);
// w: [Cin, 4*Cout]; stride 2, kernel 2 -> [2H, 2W, Cout]
template <typename T>
Var<T> bilinear_resize(const Var<T>& x, int64_t out_h, int64_t out_w);

// ---- misc ----
template <typename T>
Var<T> gather_rows(const Var<T>& table, const std::vector<int64_t>& ids);
template <typename T>
Var<T> bce_with_logits_mean(const Var<T>& logits, const TensorT<T>& target);
template <typename T>
Var<T> weighted_sum(const std::vector<Var<T>>& terms, const std::vector<double>& weights);

}  // namespace rrseg::ad
