#include "rrseg/autodiff.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "rrseg/errors.hpp"

namespace rrseg::ad {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }
void set_grad_enabled(bool on) { g_grad_enabled = on; }

namespace {

template <typename T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using EMap = Eigen::Map<EMat<T>>;
template <typename T>
using ECMap = Eigen::Map<const EMat<T>>;

template <typename T>
Var<T> make_node(TensorT<T> out, std::vector<Var<T>> parents,
                 std::function<void(Node<T>&)> bp) {
    auto n = std::make_shared<Node<T>>();
    n->val = std::move(out);
    if (g_grad_enabled) {
        for (const auto& p : parents) {
            if (p->needs) {
                n->needs = true;
                break;
            }
        }
        if (n->needs) {
            n->parents = std::move(parents);
            n->backprop = std::move(bp);
        }
    }
    return n;
}

template <typename T>
void require_2d(const Var<T>& a, const char* op) {
    if (a->val.ndim() != 2)
        throw ShapeError(std::string(op) + ": expected 2-d tensor, got " + a->val.shape_str());
}

template <typename T>
void require_3d(const Var<T>& a, const char* op) {
    if (a->val.ndim() != 3)
        throw ShapeError(std::string(op) + ": expected 3-d tensor, got " + a->val.shape_str());
}

template <typename T>
void accumulate(Var<T>& p, const TensorT<T>& g) {
    if (!p->needs) return;
    p->ensure_grad();
    for (int64_t i = 0; i < g.numel(); ++i) p->grad[i] += g[i];
}

}  // namespace

template <typename T>
Var<T> constant(TensorT<T> t) {
    auto n = std::make_shared<Node<T>>();
    n->val = std::move(t);
    return n;
}

template <typename T>
Var<T> leaf(TensorT<T> t, bool requires_grad, std::string name) {
    auto n = std::make_shared<Node<T>>();
    n->val = std::move(t);
    n->needs = requires_grad;
    n->leaf = true;
    n->name = std::move(name);
    return n;
}

template <typename T>
void backward(const Var<T>& root) {
    if (!root->needs)
        throw ShapeError("backward: root does not require gradients");
    // iterative post-order DFS
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> visited;
    std::vector<std::pair<Node<T>*, size_t>> stack;
    stack.push_back({root.get(), 0});
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node<T>* p = node->parents[idx].get();
            ++idx;
            if (p->needs && !visited.count(p)) {
                visited.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root->ensure_grad();
    root->grad.fill(T(1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* n = *it;
        if (n->backprop && n->grad.numel() != 0) n->backprop(*n);
    }
}

// ---------------- shape ops ----------------

template <typename T>
Var<T> reshape(const Var<T>& a, std::vector<int64_t> shape) {
    if (shape_numel(shape) != a->val.numel())
        throw ShapeError("reshape: numel mismatch " + a->val.shape_str() + " -> " +
                         shape_to_string(shape));
    TensorT<T> out;
    out.shape = shape;
    out.v = a->val.v;
    return make_node<T>(std::move(out), {a}, [](Node<T>& self) {
        auto& p = self.parents[0];
        if (!p->needs) return;
        p->ensure_grad();
        for (int64_t i = 0; i < self.grad.numel(); ++i) p->grad[i] += self.grad[i];
    });
}

template <typename T>
Var<T> transpose(const Var<T>& a) {
    require_2d(a, "transpose");
    int64_t m = a->val.dim(0), n = a->val.dim(1);
    TensorT<T> out({n, m});
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) out.at(j, i) = a->val.at(i, j);
    return make_node<T>(std::move(out), {a}, [m, n](Node<T>& self) {
        auto& p = self.parents[0];
        if (!p->needs) return;
        p->ensure_grad();
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j) p->grad.at(i, j) += self.grad.at(j, i);
    });
}

template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: empty input");
    int64_t cols = parts[0]->val.ndim() == 2 ? parts[0]->val.dim(1) : -1;
    if (cols < 0) throw ShapeError("concat_rows: expected 2-d tensors");
    int64_t rows = 0;
    for (const auto& p : parts) {
        require_2d(p, "concat_rows");
        if (p->val.dim(1) != cols)
            throw ShapeError("concat_rows: column mismatch " + p->val.shape_str());
        rows += p->val.dim(0);
    }
    TensorT<T> out({rows, cols});
    int64_t r = 0;
    std::vector<int64_t> offsets;
    for (const auto& p : parts) {
        offsets.push_back(r);
        std::copy(p->val.v.begin(), p->val.v.end(), out.v.begin() + r * cols);
        r += p->val.dim(0);
    }
    return make_node<T>(std::move(out), parts, [offsets, cols](Node<T>& self) {
        for (size_t k = 0; k < self.parents.size(); ++k) {
            auto& p = self.parents[k];
            if (!p->needs) continue;
            p->ensure_grad();
            int64_t base = offsets[k] * cols;
            for (int64_t i = 0; i < p->grad.numel(); ++i) p->grad[i] += self.grad[base + i];
        }
    });
}

template <typename T>
Var<T> slice_rows(const Var<T>& a, int64_t r0, int64_t r1) {
    require_2d(a, "slice_rows");
    int64_t m = a->val.dim(0), n = a->val.dim(1);
    if (r0 < 0 || r1 > m || r0 >= r1)
        throw ShapeError("slice_rows: bad range [" + std::to_string(r0) + ", " +
                         std::to_string(r1) + ") for " + a->val.shape_str());
    TensorT<T> out({r1 - r0, n});
    std::copy(a->val.v.begin() + r0 * n, a->val.v.begin() + r1 * n, out.v.begin());
    return make_node<T>(std::move(out), {a}, [r0, n](Node<T>& self) {
        auto& p = self.parents[0];
        if (!p->needs) return;
        p->ensure_grad();
        int64_t base = r0 * n;
        for (int64_t i = 0; i < self.grad.numel(); ++i) p->grad[base + i] += self.grad[i];
    });
}

template <typename T>
Var<T> slice_cols(const Var<T>& a, int64_t c0, int64_t c1) {
    require_2d(a, "slice_cols");
    int64_t m = a->val.dim(0), n = a->val.dim(1);
    if (c0 < 0 || c1 > n || c0 >= c1)
        throw ShapeError("slice_cols: bad range for " + a->val.shape_str());
    int64_t w = c1 - c0;
    TensorT<T> out({m, w});
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < w; ++j) out.at(i, j) = a->val.at(i, c0 + j);
    return make_node<T>(std::move(out), {a}, [m, w, c0](Node<T>& self) {
        auto& p = self.parents[0];
        if (!p->needs) return;
        p->ensure_grad();
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < w; ++j) p->grad.at(i, c0 + j) += self.grad.at(i, j);
    });
}

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: empty input");
    require_2d(parts[0], "concat_cols");
    int64_t rows = parts[0]->val.dim(0);
    int64_t cols = 0;
    for (const auto& p : parts) {
        require_2d(p, "concat_cols");
        if (p->val.dim(0) != rows)
            throw ShapeError("concat_cols: row mismatch " + p->val.shape_str());
        cols += p->val.dim(1);
    }
    TensorT<T> out({rows, cols});
    std::vector<int64_t> offsets;
    int64_t c = 0;
    for (const auto& p : parts) {
        offsets.push_back(c);
        int64_t w = p->val.dim(1);
        for (int64_t i = 0; i < rows; ++i)
            for (int64_t j = 0; j < w; ++j) out.at(i, c + j) = p->val.at(i, j);
        c += w;
    }
    return make_node<T>(std::move(out), parts, [offsets, rows](Node<T>& self) {
        for (size_t k = 0; k < self.parents.size(); ++k) {
            auto& p = self.parents[k];
            if (!p->needs) continue;
            p->ensure_grad();
            int64_t w = p->val.dim(1);
            for (int64_t i = 0; i < rows; ++i)
                for (int64_t j = 0; j < w; ++j)
                    p->grad.at(i, j) += self.grad.at(i, offsets[k] + j);
        }
    });
}

// ---------------- arithmetic ----------------

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    if (!a->val.same_shape(b->val))
        throw ShapeError("add: shape mismatch " + a->val.shape_str() + " vs " +
                         b->val.shape_str());
    TensorT<T> out = a->val;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += b->val[i];
    return make_node<T>(std::move(out), {a, b}, [](Node<T>& self) {
        accumulate(self.parents[0], self.grad);
        accumulate(self.parents[1], self.grad);
    });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
    if (!a->val.same_shape(b->val))
        throw ShapeError("sub: shape mismatch " + a->val.shape_str() + " vs " +
                         b->val.shape_str());
    TensorT<T> out = a->val;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] -= b->val[i];
    return make_node<T>(std::move(out), {a, b}, [](Node<T>& self) {
        accumulate(self.parents[0], self.grad);
        auto& p = self.parents[1];
        if (!p->needs) return;
        p->ensure_grad();
        for (int64_t i = 0; i < self.grad.numel(); ++i) p->grad[i] -= self.grad[i];
    });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    if (!a->val.same_shape(b->val))
        throw ShapeError("mul: shape mismatch " + a->val.shape_str() + " vs " +
                         b->val.shape_str());
    TensorT<T> out = a->val;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= b->val[i];
    return make_node<T>(std::move(out), {a, b}, [](Node<T>& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        if (pa->needs) {
            pa->ensure_grad();
            for (int64_t i = 0; i < self.grad.numel(); ++i)
                pa->grad[i] += self.grad[i] * pb->val[i];
        }
        if (pb->needs) {
            pb->ensure_grad();
            for (int64_t i = 0; i < self.grad.numel(); ++i)
                pb->grad[i] += self.grad[i] * pa->val[i];
        }
    });
}

template <typename T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
    if (!a->val.same_shape(b->val))
        throw ShapeError("div: shape mismatch " + a->val.shape_str() + " vs " +
                         b->val.shape_str());
    TensorT<T> out = a->val;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] /= b->val[i];
    return make_node<T>(std::move(out), {a, b}, [](Node<T>& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        if (pa->needs) {
            pa->ensure_grad();
            for (int64_t i = 0; i < self.grad.numel(); ++i)
                pa->grad[i] += self.grad[i] / pb->val[i];
        }
        if (pb->needs) {
            pb->ensure_grad();
            for (int64_t i = 0; i < self.grad.numel(); ++i)
                pb->grad[i] -= self.grad[i] * self.val[i] / pb->val[i];
        }
    });
}

template <typename T>
Var<T> scale(const Var<T>& a, double c) {
    TensorT<T> out = a->val;
    for (auto& e : out.v) e = static_cast<T>(e * c);
    return make_node<T>(std::move(out), {a}, [c](Node<T>& self) {
        auto& p = self.parents[0];
        if (!p->needs) return;
        p->ensure_grad();
        for (int64_t i = 0; i < self.grad.numel(); ++i)
            p->grad[i] += static_cast<T>(self.grad[i] * c);
    });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, double c) {
    TensorT<T> out = a->val;
    for (auto& e : out.v) e = static_cast<T>(e + c);
    return make_node<T>(std::move(out), {a}, [](Node<T>& self) {
        accumulate(self.parents[0], self.grad);
    });
}

template <typename T>
Var<T> add_rowvec(const Var<T>& a, const Var<T>& b) {
    require_2d(a, "add_rowvec");
    require_2d(b, "add_rowvec");
    int64_t m = a->val.dim(0), n = a->val.dim(1);
    if (b->val.dim(0) != 1 || b->val.dim(1) != n)
        throw ShapeError("add_rowvec: expected [1," + std::to_string(n) + "], got " +
                         b->val.shape_str());
    TensorT<T> out = a->val;
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) out.at(i, j) += b->val[j];
    return make_node<T>(std::move(out), {a, b}, [m, n](Node<T>& self) {
        accumulate(self.parents[0], self.grad);
        auto& pb = self.parents[1];
        if (!pb->needs) return;
        pb->ensure_grad();
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j) pb->grad[j] += self.grad.at(i, j);
    });
}

template <typename T>
Var<T> mul_scalar_var(const Var<T>& a, const Var<T>& s) {
    if (s->val.numel() != 1) throw ShapeError("mul_scalar_var: scalar operand must have 1 element");
    T sv = s->val[0];
    TensorT<T> out = a->val;
    for (auto& e : out.v) e *= sv;
    return make_node<T>(std::move(out), {a, s}, [sv](Node<T>& self) {
        auto& pa = self.parents[0];
        auto& ps = self.parents[1];
        if (pa->needs) {
            pa->ensure_grad();
            for (int64_t i = 0; i < self.grad.numel(); ++i) pa->grad[i] += self.grad[i] * sv;
        }
        if (ps->needs) {
            ps->ensure_grad();
            double acc = 0;
            for (int64_t i = 0; i < self.grad.numel(); ++i)
                acc += static_cast<double>(self.grad[i]) * static_cast<double>(pa->val[i]);
            ps->grad[0] += static_cast<T>(acc);
        }
    });
}

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
    require_2d(a, "matmul");
    require_2d(b, "matmul");
    int64_t m = a->val.dim(0), k = a->val.dim(1), k2 = b->val.dim(0), n = b->val.dim(1);
    if (k != k2)
        throw ShapeError("matmul: inner dim mismatch " + a->val.shape_str() + " x " +
                         b->val.shape_str());
    TensorT<T> out({m, n});
    {
        ECMap<T> A(a->val.v.data(), m, k);
        ECMap<T> B(b->val.v.data(), k, n);
        EMap<T> C(out.v.data(), m, n);
        C.noalias() = A * B;
    }
    return make_node<T>(std::move(out), {a, b}, [m, k, n](Node<T>& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        ECMap<T> G(self.grad.v.data(), m, n);
        if (pa->needs) {
            pa->ensure_grad();
            ECMap<T> B(pb->val.v.data(), k, n);
            EMap<T> dA(pa->grad.v.data(), m, k);
            dA.noalias() += G * B.transpose();
        }
        if (pb->needs) {
            pb->ensure_grad();
            ECMap<T> A(pa->val.v.data(), m, k);
            EMap<T> dB(pb->grad.v.data(), k, n);
            dB.noalias() += A.transpose() * G;
        }
    });
}

// ---------------- reductions ----------------

template <typename T>
Var<T> sum(const Var<T>& a) {
    double acc = 0;
    for (T e : a->val.v) acc += static_cast<double>(e);
    TensorT<T> out({1});
    out[0] = static_cast<T>(acc);
    return make_node<T>(std::move(out), {a}, [](Node<T>& self) {
        auto& p = self.parents[0];
        if (!p->needs) return;
        p->ensure_grad();
        T g = self.grad[0];
        for (int64_t i = 0; i < p->grad.numel(); ++i) p->grad[i] += g;
    });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
    int64_t n = a->val.numel();
    if (n == 0) throw ShapeError("mean: empty tensor");
    double acc = 0;
    for (T e : a->val.v) acc += static_cast<double>(e);
    TensorT<T> out({1});
    out[0] = static_cast<T>(acc / static_cast<double>(n));
    return make_node<T>(std::move(out), {a}, [n](Node<T>& self) {
        auto& p = self.parents[0];
        if (!p->needs) return;
        p->ensure_grad();
        T g = static_cast<T>(self.grad[0] / static_cast<double>(n));
        for (int64_t i = 0; i < p->grad.numel(); ++i) p->grad[i] += g;
    });
}

template <typename T>
Var<T> mean_rows(const Var<T>& a) {
    require_2d(a, "mean_rows");
    int64_t m = a->val.dim(0), n = a->val.dim(1);
    if (m == 0) throw ShapeError("mean_rows: zero rows");
    TensorT<T> out({1, n});
    for (int64_t j = 0; j < n; ++j) {
        double acc = 0;
        for (int64_t i = 0; i < m; ++i) acc += static_cast<double>(a->val.at(i, j));
        out[j] = static_cast<T>(acc / static_cast<double>(m));
    }
    return make_node<T>(std::move(out), {a}, [m, n](Node<T>& self) {
        auto& p = self.parents[0];
        if (!p->needs) return;
        p->ensure_grad();
        for (int64_t j = 0; j < n; ++j) {
            T g = static_cast<T>(self.grad[j] / static_cast<double>(m));
            for (int64_t i = 0; i < m; ++i) p->grad.at(i, j) += g;
        }
    });
}

template <typename T>
Var<T> masked_mean_rows(const Var<T>& a, const std::vector<int64_t>& rows) {
    require_2d(a, "masked_mean_rows");
    if (rows.empty()) throw DegenerateError("masked_mean_rows: empty row set");
    int64_t m = a->val.dim(0), n = a->val.dim(1);
    for (int64_t r : rows)
        if (r < 0 || r >= m) throw ShapeError("masked_mean_rows: row index out of range");
    TensorT<T> out({1, n});
    for (int64_t j = 0; j < n; ++j) {
        double acc = 0;
        for (int64_t r : rows) acc += static_cast<double>(a->val.at(r, j));
        out[j] = static_cast<T>(acc / static_cast<double>(rows.size()));
    }
    return make_node<T>(std::move(out), {a}, [rows, n](Node<T>& self) {
        auto& p = self.parents[0];
        if (!p->needs) return;
        p->ensure_grad();
        for (int64_t j = 0; j < n; ++j) {
            T g = static_cast<T>(self.grad[j] / static_cast<double>(rows.size()));
            for (int64_t r : rows) p->grad.at(r, j) += g;
        }
    });
}

template <typename T>
Var<T> masked_max(const Var<T>& a, const std::vector<int64_t>& idx) {
    if (idx.empty()) throw DegenerateError("masked_max: empty index set");
    int64_t best = idx[0];
    for (int64_t i : idx) {
        if (i < 0 || i >= a->val.numel()) throw ShapeError("masked_max: index out of range");
        if (a->val[i] > a->val[best]) best = i;
    }
    TensorT<T> out({1});
    out[0] = a->val[best];
    return make_node<T>(std::move(out), {a}, [best](Node<T>& self) {
        auto& p = self.parents[0];
        if (!p->needs) return;
        p->ensure_grad();
        p->grad[best] += self.grad[0];
    });
}

template <typename T>
Var<T> take_diag(const Var<T>& a) {
    require_2d(a, "take_diag");
    int64_t n = a->val.dim(0);
    if (a->val.dim(1) != n) throw ShapeError("take_diag: expected square, got " + a->val.shape_str());
    TensorT<T> out({n, 1});
    for (int64_t i = 0; i < n; ++i) out[i] = a->val.at(i, i);
    return make_node<T>(std::move(out), {a}, [n](Node<T>& self) {
        auto& p = self.parents[0];
        if (!p->needs) return;
        p->ensure_grad();
        for (int64_t i = 0; i < n; ++i) p->grad.at(i, i) += self.grad[i];
    });
}

template <typename T>
Var<T> logsumexp_rows(const Var<T>& a) {
    require_2d(a, "logsumexp_rows");
    int64_t m = a->val.dim(0), n = a->val.dim(1);
    TensorT<T> out({m, 1});
    for (int64_t i = 0; i < m; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int64_t j = 0; j < n; ++j) mx = std::max(mx, static_cast<double>(a->val.at(i, j)));
        double acc = 0;
        for (int64_t j = 0; j < n; ++j) acc += std::exp(static_cast<double>(a->val.at(i, j)) - mx);
        out[i] = static_cast<T>(mx + std::log(acc));
    }
    return make_node<T>(std::move(out), {a}, [m, n](Node<T>& self) {
        auto& p = self.parents[0];
        if (!p->needs) return;
        p->ensure_grad();
        for (int64_t i = 0; i < m; ++i) {
            T lse = self.val[i];
            T g = self.grad[i];
            for (int64_t j = 0; j < n; ++j)
                p->grad.at(i, j) += g * std::exp(p->val.at(i, j) - lse);
        }
    });
}

// ---------------- elementwise ----------------

namespace {

template <typename T, typename F, typename DF>
Var<T> unary_op(const Var<T>& a, F f, DF df, const char* /*name*/) {
    TensorT<T> out = a->val;
    for (auto& e : out.v) e = f(e);
    return make_node<T>(std::move(out), {a}, [df](Node<T>& self) {
        auto& p = self.parents[0];
        if (!p->needs) return;
        p->ensure_grad();
        for (int64_t i = 0; i < self.grad.numel(); ++i)
            p->grad[i] += self.grad[i] * df(p->val[i], self.val[i]);
    });
}

template <typename T>
T stable_sigmoid(T x) {
    if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
    T e = std::exp(x);
    return e / (T(1) + e);
}

}  // namespace

template <typename T>
Var<T> relu(const Var<T>& a) {
    return unary_op<T>(
        a, [](T x) { return x > T(0) ? x : T(0); },
        [](T x, T) { return x > T(0) ? T(1) : T(0); }, "relu");
}

template <typename T>
Var<T> gelu(const Var<T>& a) {
    constexpr double kInvSqrt2 = 0.7071067811865475244;
    constexpr double kInvSqrt2Pi = 0.3989422804014326779;
    return unary_op<T>(
        a,
        [](T x) {
            return static_cast<T>(0.5 * static_cast<double>(x) *
                                  (1.0 + std::erf(static_cast<double>(x) * kInvSqrt2)));
        },
        [](T x, T) {
            double xd = static_cast<double>(x);
            double cdf = 0.5 * (1.0 + std::erf(xd * kInvSqrt2));
            double pdf = kInvSqrt2Pi * std::exp(-0.5 * xd * xd);
            return static_cast<T>(cdf + xd * pdf);
        },
        "gelu");
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
    return unary_op<T>(
        a, [](T x) { return stable_sigmoid(x); }, [](T, T y) { return y * (T(1) - y); },
        "sigmoid");
}

template <typename T>
Var<T> exp(const Var<T>& a) {
    return unary_op<T>(
        a, [](T x) { return std::exp(x); }, [](T, T y) { return y; }, "exp");
}

template <typename T>
Var<T> log(const Var<T>& a) {
    return unary_op<T>(
        a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; }, "log");
}

template <typename T>
Var<T> softmax_rows(const Var<T>& a) {
    require_2d(a, "softmax_rows");
    int64_t m = a->val.dim(0), n = a->val.dim(1);
    TensorT<T> out({m, n});
    for (int64_t i = 0; i < m; ++i) {
        T mx = a->val.at(i, 0);
        for (int64_t j = 1; j < n; ++j) mx = std::max(mx, a->val.at(i, j));
        double acc = 0;
        for (int64_t j = 0; j < n; ++j) {
            double e = std::exp(static_cast<double>(a->val.at(i, j) - mx));
            out.at(i, j) = static_cast<T>(e);
            acc += e;
        }
        for (int64_t j = 0; j < n; ++j) out.at(i, j) = static_cast<T>(out.at(i, j) / acc);
    }
    return make_node<T>(std::move(out), {a}, [m, n](Node<T>& self) {
        auto& p = self.parents[0];
        if (!p->needs) return;
        p->ensure_grad();
        for (int64_t i = 0; i < m; ++i) {
            double dot = 0;
            for (int64_t j = 0; j < n; ++j)
                dot += static_cast<double>(self.grad.at(i, j)) *
                       static_cast<double>(self.val.at(i, j));
            for (int64_t j = 0; j < n; ++j)
                p->grad.at(i, j) += self.val.at(i, j) *
                                    (self.grad.at(i, j) - static_cast<T>(dot));
        }
    });
}

// ---------------- normalization ----------------

template <typename T>
Var<T> layernorm_rows(const Var<T>& a, const Var<T>& gamma, const Var<T>& beta, double eps) {
    require_2d(a, "layernorm_rows");
    int64_t m = a->val.dim(0), n = a->val.dim(1);
    if (gamma->val.ndim() != 2 || gamma->val.dim(0) != 1 || gamma->val.dim(1) != n ||
        !gamma->val.same_shape(beta->val))
        throw ShapeError("layernorm_rows: gamma/beta must be [1," + std::to_string(n) + "]");
    TensorT<T> out({m, n});
    std::vector<T> rstd(static_cast<size_t>(m)), xhat(static_cast<size_t>(m * n));
    for (int64_t i = 0; i < m; ++i) {
        double mu = 0;
        for (int64_t j = 0; j < n; ++j) mu += static_cast<double>(a->val.at(i, j));
        mu /= static_cast<double>(n);
        double var = 0;
        for (int64_t j = 0; j < n; ++j) {
            double d = static_cast<double>(a->val.at(i, j)) - mu;
            var += d * d;
        }
        var /= static_cast<double>(n);
        double r = 1.0 / std::sqrt(var + eps);
        rstd[static_cast<size_t>(i)] = static_cast<T>(r);
        for (int64_t j = 0; j < n; ++j) {
            T xh = static_cast<T>((static_cast<double>(a->val.at(i, j)) - mu) * r);
            xhat[static_cast<size_t>(i * n + j)] = xh;
            out.at(i, j) = gamma->val[j] * xh + beta->val[j];
        }
    }
    return make_node<T>(std::move(out), {a, gamma, beta},
                        [m, n, rstd = std::move(rstd), xhat = std::move(xhat)](Node<T>& self) {
        auto& pa = self.parents[0];
        auto& pg = self.parents[1];
        auto& pb = self.parents[2];
        if (pg->needs) pg->ensure_grad();
        if (pb->needs) pb->ensure_grad();
        if (pa->needs) pa->ensure_grad();
        for (int64_t i = 0; i < m; ++i) {
            double sum_dxhat = 0, sum_dxhat_xhat = 0;
            for (int64_t j = 0; j < n; ++j) {
                T go = self.grad.at(i, j);
                T xh = xhat[static_cast<size_t>(i * n + j)];
                if (pg->needs) pg->grad[j] += go * xh;
                if (pb->needs) pb->grad[j] += go;
                double dxh = static_cast<double>(go) * static_cast<double>(pg->val[j]);
                sum_dxhat += dxh;
                sum_dxhat_xhat += dxh * static_cast<double>(xh);
            }
            if (pa->needs) {
                double inv_n = 1.0 / static_cast<double>(n);
                double r = static_cast<double>(rstd[static_cast<size_t>(i)]);
                for (int64_t j = 0; j < n; ++j) {
                    double dxh = static_cast<double>(self.grad.at(i, j)) *
                                 static_cast<double>(pg->val[j]);
                    double xh = static_cast<double>(xhat[static_cast<size_t>(i * n + j)]);
                    pa->grad.at(i, j) += static_cast<T>(
                        r * (dxh - inv_n * sum_dxhat - xh * inv_n * sum_dxhat_xhat));
                }
            }
        }
    });
}

template <typename T>
Var<T> l2norm_rows(const Var<T>& a, double eps) {
    require_2d(a, "l2norm_rows");
    int64_t m = a->val.dim(0), n = a->val.dim(1);
    TensorT<T> out({m, n});
    std::vector<double> inv_norm(static_cast<size_t>(m));
    for (int64_t i = 0; i < m; ++i) {
        double s = 0;
        for (int64_t j = 0; j < n; ++j) {
            double x = static_cast<double>(a->val.at(i, j));
            s += x * x;
        }
        double r = 1.0 / std::sqrt(s + eps);
        inv_norm[static_cast<size_t>(i)] = r;
        for (int64_t j = 0; j < n; ++j) out.at(i, j) = static_cast<T>(a->val.at(i, j) * r);
    }
    return make_node<T>(std::move(out), {a}, [m, n, inv_norm = std::move(inv_norm)](Node<T>& self) {
        auto& p = self.parents[0];
        if (!p->needs) return;
        p->ensure_grad();
        for (int64_t i = 0; i < m; ++i) {
            double r = inv_norm[static_cast<size_t>(i)];
            double dot = 0;
            for (int64_t j = 0; j < n; ++j)
                dot += static_cast<double>(self.grad.at(i, j)) *
                       static_cast<double>(p->val.at(i, j));
            for (int64_t j = 0; j < n; ++j) {
                double x = static_cast<double>(p->val.at(i, j));
                p->grad.at(i, j) += static_cast<T>(
                    r * static_cast<double>(self.grad.at(i, j)) - r * r * r * dot * x);
            }
        }
    });
}

template <typename T>
Var<T> batchnorm_rows(const Var<T>& a, const Var<T>& gamma, const Var<T>& beta,
                      TensorT<T>* running_mean, TensorT<T>* running_var, bool training,
                      double momentum, double eps) {
    require_2d(a, "batchnorm_rows");
    int64_t m = a->val.dim(0), n = a->val.dim(1);
    if (gamma->val.dim(1) != n || beta->val.dim(1) != n)
        throw ShapeError("batchnorm_rows: gamma/beta width mismatch");
    if (running_mean->numel() != n || running_var->numel() != n)
        throw ShapeError("batchnorm_rows: running stats width mismatch");
    TensorT<T> out({m, n});
    if (!training) {
        std::vector<T> rs(static_cast<size_t>(n)), rm(static_cast<size_t>(n));
        for (int64_t j = 0; j < n; ++j) {
            rs[static_cast<size_t>(j)] = static_cast<T>(
                1.0 / std::sqrt(static_cast<double>((*running_var)[j]) + eps));
            rm[static_cast<size_t>(j)] = (*running_mean)[j];
        }
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j)
                out.at(i, j) = (a->val.at(i, j) - rm[static_cast<size_t>(j)]) *
                                   rs[static_cast<size_t>(j)] * gamma->val[j] +
                               beta->val[j];
        return make_node<T>(std::move(out), {a, gamma, beta},
                            [m, n, rs = std::move(rs), rm = std::move(rm)](Node<T>& self) {
            auto& pa = self.parents[0];
            auto& pg = self.parents[1];
            auto& pb = self.parents[2];
            if (pa->needs) pa->ensure_grad();
            if (pg->needs) pg->ensure_grad();
            if (pb->needs) pb->ensure_grad();
            for (int64_t i = 0; i < m; ++i)
                for (int64_t j = 0; j < n; ++j) {
                    T go = self.grad.at(i, j);
                    T xh = (pa->val.at(i, j) - rm[static_cast<size_t>(j)]) *
                           rs[static_cast<size_t>(j)];
                    if (pa->needs)
                        pa->grad.at(i, j) += go * pg->val[j] * rs[static_cast<size_t>(j)];
                    if (pg->needs) pg->grad[j] += go * xh;
                    if (pb->needs) pb->grad[j] += go;
                }
        });
    }
    // training mode: batch statistics over rows
    std::vector<double> mu(static_cast<size_t>(n)), rstd(static_cast<size_t>(n));
    std::vector<T> xhat(static_cast<size_t>(m * n));
    for (int64_t j = 0; j < n; ++j) {
        double s = 0;
        for (int64_t i = 0; i < m; ++i) s += static_cast<double>(a->val.at(i, j));
        double mean_j = s / static_cast<double>(m);
        double var_j = 0;
        for (int64_t i = 0; i < m; ++i) {
            double d = static_cast<double>(a->val.at(i, j)) - mean_j;
            var_j += d * d;
        }
        var_j /= static_cast<double>(m);
        mu[static_cast<size_t>(j)] = mean_j;
        rstd[static_cast<size_t>(j)] = 1.0 / std::sqrt(var_j + eps);
        (*running_mean)[j] = static_cast<T>((1.0 - momentum) *
                                            static_cast<double>((*running_mean)[j]) +
                                            momentum * mean_j);
        (*running_var)[j] = static_cast<T>((1.0 - momentum) *
                                           static_cast<double>((*running_var)[j]) +
                                           momentum * var_j);
    }
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) {
            T xh = static_cast<T>((static_cast<double>(a->val.at(i, j)) -
                                   mu[static_cast<size_t>(j)]) *
                                  rstd[static_cast<size_t>(j)]);
            xhat[static_cast<size_t>(i * n + j)] = xh;
            out.at(i, j) = gamma->val[j] * xh + beta->val[j];
        }
    return make_node<T>(std::move(out), {a, gamma, beta},
                        [m, n, rstd = std::move(rstd), xhat = std::move(xhat)](Node<T>& self) {
        auto& pa = self.parents[0];
        auto& pg = self.parents[1];
        auto& pb = self.parents[2];
        if (pg->needs) pg->ensure_grad();
        if (pb->needs) pb->ensure_grad();
        if (pa->needs) pa->ensure_grad();
        for (int64_t j = 0; j < n; ++j) {
            double sum_dxhat = 0, sum_dxhat_xhat = 0;
            for (int64_t i = 0; i < m; ++i) {
                T go = self.grad.at(i, j);
                T xh = xhat[static_cast<size_t>(i * n + j)];
                if (pg->needs) pg->grad[j] += go * xh;
                if (pb->needs) pb->grad[j] += go;
                double dxh = static_cast<double>(go) * static_cast<double>(pg->val[j]);
                sum_dxhat += dxh;
                sum_dxhat_xhat += dxh * static_cast<double>(xh);
            }
            if (pa->needs) {
                double inv_m = 1.0 / static_cast<double>(m);
                double r = rstd[static_cast<size_t>(j)];
                for (int64_t i = 0; i < m; ++i) {
                    double dxh = static_cast<double>(self.grad.at(i, j)) *
                                 static_cast<double>(pg->val[j]);
                    double xh = static_cast<double>(xhat[static_cast<size_t>(i * n + j)]);
                    pa->grad.at(i, j) += static_cast<T>(
                        r * (dxh - inv_m * sum_dxhat - xh * inv_m * sum_dxhat_xhat));
                }
            }
        }
    });
}

// ---------------- spatial ----------------

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int64_t ksize,
              int64_t stride, int64_t pad) {
    require_3d(x, "conv2d");
    require_2d(w, "conv2d");
    int64_t H = x->val.dim(0), W = x->val.dim(1), Cin = x->val.dim(2);
    int64_t Cout = w->val.dim(1);
    if (w->val.dim(0) != ksize * ksize * Cin)
        throw ShapeError("conv2d: weight rows != k*k*Cin (" + w->val.shape_str() + ")");
    if (b->val.ndim() != 2 || b->val.dim(0) != 1 || b->val.dim(1) != Cout)
        throw ShapeError("conv2d: bias must be [1,Cout]");
    int64_t OH = (H + 2 * pad - ksize) / stride + 1;
    int64_t OW = (W + 2 * pad - ksize) / stride + 1;
    // im2col
    int64_t patch = ksize * ksize * Cin;
    TensorT<T> col({OH * OW, patch});
    for (int64_t oy = 0; oy < OH; ++oy) {
        for (int64_t ox = 0; ox < OW; ++ox) {
            int64_t row = oy * OW + ox;
            int64_t idx = 0;
            for (int64_t ky = 0; ky < ksize; ++ky) {
                int64_t iy = oy * stride + ky - pad;
                for (int64_t kx = 0; kx < ksize; ++kx) {
                    int64_t ix = ox * stride + kx - pad;
                    if (iy >= 0 && iy < H && ix >= 0 && ix < W) {
                        for (int64_t c = 0; c < Cin; ++c)
                            col.at(row, idx + c) = x->val.at(iy, ix, c);
                    }
                    idx += Cin;
                }
            }
        }
    }
    TensorT<T> out_flat({OH * OW, Cout});
    {
        ECMap<T> C(col.v.data(), OH * OW, patch);
        ECMap<T> Wm(w->val.v.data(), patch, Cout);
        EMap<T> O(out_flat.v.data(), OH * OW, Cout);
        O.noalias() = C * Wm;
    }
    for (int64_t r = 0; r < OH * OW; ++r)
        for (int64_t c = 0; c < Cout; ++c) out_flat.at(r, c) += b->val[c];
    out_flat.shape = {OH, OW, Cout};
    return make_node<T>(std::move(out_flat), {x, w, b},
                        [H, W, Cin, Cout, OH, OW, ksize, stride, pad, patch,
                         col = std::move(col)](Node<T>& self) {
        auto& px = self.parents[0];
        auto& pw = self.parents[1];
        auto& pb = self.parents[2];
        ECMap<T> G(self.grad.v.data(), OH * OW, Cout);
        if (pb->needs) {
            pb->ensure_grad();
            for (int64_t r = 0; r < OH * OW; ++r)
                for (int64_t c = 0; c < Cout; ++c) pb->grad[c] += self.grad[r * Cout + c];
        }
        if (pw->needs) {
            pw->ensure_grad();
            ECMap<T> C(col.v.data(), OH * OW, patch);
            EMap<T> dW(pw->grad.v.data(), patch, Cout);
            dW.noalias() += C.transpose() * G;
        }
        if (px->needs) {
            px->ensure_grad();
            TensorT<T> dcol({OH * OW, patch});
            {
                ECMap<T> Wm(pw->val.v.data(), patch, Cout);
                EMap<T> D(dcol.v.data(), OH * OW, patch);
                D.noalias() = G * Wm.transpose();
            }
            for (int64_t oy = 0; oy < OH; ++oy) {
                for (int64_t ox = 0; ox < OW; ++ox) {
                    int64_t row = oy * OW + ox;
                    int64_t idx = 0;
                    for (int64_t ky = 0; ky < ksize; ++ky) {
                        int64_t iy = oy * stride + ky - pad;
                        for (int64_t kx = 0; kx < ksize; ++kx) {
                            int64_t ix = ox * stride + kx - pad;
                            if (iy >= 0 && iy < H && ix >= 0 && ix < W) {
                                for (int64_t c = 0; c < Cin; ++c)
                                    px->grad.at(iy, ix, c) += dcol.at(row, idx + c);
                            }
                            idx += Cin;
                        }
                    }
                }
            }
        }
    });
}

template <typename T>
Var<T> conv_transpose2x2(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
    require_3d(x, "conv_transpose2x2");
    require_2d(w, "conv_transpose2x2");
    int64_t H = x->val.dim(0), W = x->val.dim(1), Cin = x->val.dim(2);
    if (w->val.dim(0) != Cin || w->val.dim(1) % 4 != 0)
        throw ShapeError("conv_transpose2x2: weight must be [Cin, 4*Cout]");
    int64_t Cout = w->val.dim(1) / 4;
    if (b->val.ndim() != 2 || b->val.dim(0) != 1 || b->val.dim(1) != Cout)
        throw ShapeError("conv_transpose2x2: bias must be [1,Cout]");
    // per-pixel matmul then scatter into the 2x2 output cell
    TensorT<T> prod({H * W, 4 * Cout});
    {
        ECMap<T> X(x->val.v.data(), H * W, Cin);
        ECMap<T> Wm(w->val.v.data(), Cin, 4 * Cout);
        EMap<T> P(prod.v.data(), H * W, 4 * Cout);
        P.noalias() = X * Wm;
    }
    TensorT<T> out({2 * H, 2 * W, Cout});
    for (int64_t i = 0; i < H; ++i)
        for (int64_t j = 0; j < W; ++j)
            for (int64_t dy = 0; dy < 2; ++dy)
                for (int64_t dx = 0; dx < 2; ++dx)
                    for (int64_t c = 0; c < Cout; ++c)
                        out.at(2 * i + dy, 2 * j + dx, c) =
                            prod.at(i * W + j, (dy * 2 + dx) * Cout + c) + b->val[c];
    return make_node<T>(std::move(out), {x, w, b}, [H, W, Cin, Cout](Node<T>& self) {
        auto& px = self.parents[0];
        auto& pw = self.parents[1];
        auto& pb = self.parents[2];
        // regroup output grad into [H*W, 4*Cout]
        TensorT<T> gprod({H * W, 4 * Cout});
        for (int64_t i = 0; i < H; ++i)
            for (int64_t j = 0; j < W; ++j)
                for (int64_t dy = 0; dy < 2; ++dy)
                    for (int64_t dx = 0; dx < 2; ++dx)
                        for (int64_t c = 0; c < Cout; ++c)
                            gprod.at(i * W + j, (dy * 2 + dx) * Cout + c) =
                                self.grad.at(2 * i + dy, 2 * j + dx, c);
        if (pb->needs) {
            pb->ensure_grad();
            for (int64_t r = 0; r < H * W; ++r)
                for (int64_t k = 0; k < 4; ++k)
                    for (int64_t c = 0; c < Cout; ++c)
                        pb->grad[c] += gprod.at(r, k * Cout + c);
        }
        ECMap<T> Gp(gprod.v.data(), H * W, 4 * Cout);
        if (pw->needs) {
            pw->ensure_grad();
            ECMap<T> X(px->val.v.data(), H * W, Cin);
            EMap<T> dW(pw->grad.v.data(), Cin, 4 * Cout);
            dW.noalias() += X.transpose() * Gp;
        }
        if (px->needs) {
            px->ensure_grad();
            ECMap<T> Wm(pw->val.v.data(), Cin, 4 * Cout);
            EMap<T> dX(px->grad.v.data(), H * W, Cin);
            dX.noalias() += Gp * Wm.transpose();
        }
    });
}

namespace {

struct LerpWeights {
    int64_t i0, i1;
    double w0, w1;
};

inline LerpWeights lerp_axis(int64_t dst, int64_t in_size, double scale) {
    // half-pixel centers, clamped (align_corners = false)
    double src = (static_cast<double>(dst) + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    double fmax = static_cast<double>(in_size - 1);
    if (src > fmax) src = fmax;
    int64_t i0 = static_cast<int64_t>(std::floor(src));
    int64_t i1 = std::min(i0 + 1, in_size - 1);
    double w1 = src - static_cast<double>(i0);
    return {i0, i1, 1.0 - w1, w1};
}

}  // namespace

template <typename T>
Var<T> bilinear_resize(const Var<T>& x, int64_t out_h, int64_t out_w) {
    require_3d(x, "bilinear_resize");
    int64_t H = x->val.dim(0), W = x->val.dim(1), C = x->val.dim(2);
    if (out_h <= 0 || out_w <= 0) throw ShapeError("bilinear_resize: bad output size");
    double sy = static_cast<double>(H) / static_cast<double>(out_h);
    double sx = static_cast<double>(W) / static_cast<double>(out_w);
    TensorT<T> out({out_h, out_w, C});
    for (int64_t oy = 0; oy < out_h; ++oy) {
        LerpWeights ly = lerp_axis(oy, H, sy);
        for (int64_t ox = 0; ox < out_w; ++ox) {
            LerpWeights lx = lerp_axis(ox, W, sx);
            for (int64_t c = 0; c < C; ++c) {
                double v = ly.w0 * (lx.w0 * static_cast<double>(x->val.at(ly.i0, lx.i0, c)) +
                                    lx.w1 * static_cast<double>(x->val.at(ly.i0, lx.i1, c))) +
                           ly.w1 * (lx.w0 * static_cast<double>(x->val.at(ly.i1, lx.i0, c)) +
                                    lx.w1 * static_cast<double>(x->val.at(ly.i1, lx.i1, c)));
                out.at(oy, ox, c) = static_cast<T>(v);
            }
        }
    }
    return make_node<T>(std::move(out), {x}, [H, W, C, out_h, out_w, sy, sx](Node<T>& self) {
        auto& p = self.parents[0];
        if (!p->needs) return;
        p->ensure_grad();
        for (int64_t oy = 0; oy < out_h; ++oy) {
            LerpWeights ly = lerp_axis(oy, H, sy);
            for (int64_t ox = 0; ox < out_w; ++ox) {
                LerpWeights lx = lerp_axis(ox, W, sx);
                for (int64_t c = 0; c < C; ++c) {
                    double g = static_cast<double>(self.grad.at(oy, ox, c));
                    p->grad.at(ly.i0, lx.i0, c) += static_cast<T>(g * ly.w0 * lx.w0);
                    p->grad.at(ly.i0, lx.i1, c) += static_cast<T>(g * ly.w0 * lx.w1);
                    p->grad.at(ly.i1, lx.i0, c) += static_cast<T>(g * ly.w1 * lx.w0);
                    p->grad.at(ly.i1, lx.i1, c) += static_cast<T>(g * ly.w1 * lx.w1);
                }
            }
        }
    });
}

// ---------------- misc ----------------

template <typename T>
Var<T> gather_rows(const Var<T>& table, const std::vector<int64_t>& ids) {
    require_2d(table, "gather_rows");
    int64_t V = table->val.dim(0), d = table->val.dim(1);
    for (int64_t id : ids)
        if (id < 0 || id >= V) throw ShapeError("gather_rows: id out of range");
    TensorT<T> out({static_cast<int64_t>(ids.size()), d});
    for (size_t i = 0; i < ids.size(); ++i)
        std::copy(table->val.v.begin() + ids[i] * d, table->val.v.begin() + (ids[i] + 1) * d,
                  out.v.begin() + static_cast<int64_t>(i) * d);
    return make_node<T>(std::move(out), {table}, [ids, d](Node<T>& self) {
        auto& p = self.parents[0];
        if (!p->needs) return;
        p->ensure_grad();
        for (size_t i = 0; i < ids.size(); ++i)
            for (int64_t j = 0; j < d; ++j)
                p->grad[ids[i] * d + j] += self.grad[static_cast<int64_t>(i) * d + j];
    });
}

template <typename T>
Var<T> bce_with_logits_mean(const Var<T>& logits, const TensorT<T>& target) {
    if (!logits->val.same_shape(target))
        throw ShapeError("bce_with_logits_mean: shape mismatch " + logits->val.shape_str() +
                         " vs " + target.shape_str());
    int64_t n = logits->val.numel();
    if (n == 0) throw ShapeError("bce_with_logits_mean: empty input");
    double acc = 0;
    for (int64_t i = 0; i < n; ++i) {
        double x = static_cast<double>(logits->val[i]);
        double t = static_cast<double>(target[i]);
        acc += std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))) - x * t;
    }
    TensorT<T> out({1});
    out[0] = static_cast<T>(acc / static_cast<double>(n));
    return make_node<T>(std::move(out), {logits}, [target, n](Node<T>& self) {
        auto& p = self.parents[0];
        if (!p->needs) return;
        p->ensure_grad();
        T g = self.grad[0];
        for (int64_t i = 0; i < n; ++i) {
            T s = stable_sigmoid(p->val[i]);
            p->grad[i] += g * (s - target[i]) / static_cast<T>(n);
        }
    });
}

template <typename T>
Var<T> weighted_sum(const std::vector<Var<T>>& terms, const std::vector<double>& weights) {
    if (terms.empty() || terms.size() != weights.size())
        throw ShapeError("weighted_sum: bad term/weight counts");
    for (const auto& t : terms)
        if (!t->val.same_shape(terms[0]->val))
            throw ShapeError("weighted_sum: shape mismatch across terms");
    TensorT<T> out = TensorT<T>::zeros(terms[0]->val.shape);
    for (size_t k = 0; k < terms.size(); ++k)
        for (int64_t i = 0; i < out.numel(); ++i)
            out[i] += static_cast<T>(weights[k] * static_cast<double>(terms[k]->val[i]));
    return make_node<T>(std::move(out), terms, [weights](Node<T>& self) {
        for (size_t k = 0; k < self.parents.size(); ++k) {
            auto& p = self.parents[k];
            if (!p->needs) continue;
            p->ensure_grad();
            for (int64_t i = 0; i < self.grad.numel(); ++i)
                p->grad[i] += static_cast<T>(weights[k] * static_cast<double>(self.grad[i]));
        }
    });
}

// ---------------- explicit instantiation ----------------

#define RRSEG_INSTANTIATE_OPS(T)                                                              \
    template Var<T> constant<T>(TensorT<T>);                                                  \
    template Var<T> leaf<T>(TensorT<T>, bool, std::string);                                   \
    template void backward<T>(const Var<T>&);                                                 \
    template Var<T> reshape<T>(const Var<T>&, std::vector<int64_t>);                          \
    template Var<T> transpose<T>(const Var<T>&);                                              \
    template Var<T> concat_rows<T>(const std::vector<Var<T>>&);                               \
    template Var<T> slice_rows<T>(const Var<T>&, int64_t, int64_t);                           \
    template Var<T> slice_cols<T>(const Var<T>&, int64_t, int64_t);                           \
    template Var<T> concat_cols<T>(const std::vector<Var<T>>&);                               \
    template Var<T> add<T>(const Var<T>&, const Var<T>&);                                     \
    template Var<T> sub<T>(const Var<T>&, const Var<T>&);                                     \
    template Var<T> mul<T>(const Var<T>&, const Var<T>&);                                     \
    template Var<T> div<T>(const Var<T>&, const Var<T>&);                                     \
    template Var<T> scale<T>(const Var<T>&, double);                                          \
    template Var<T> add_scalar<T>(const Var<T>&, double);                                     \
    template Var<T> add_rowvec<T>(const Var<T>&, const Var<T>&);                              \
    template Var<T> mul_scalar_var<T>(const Var<T>&, const Var<T>&);                          \
    template Var<T> matmul<T>(const Var<T>&, const Var<T>&);                                  \
    template Var<T> sum<T>(const Var<T>&);                                                    \
    template Var<T> mean<T>(const Var<T>&);                                                   \
    template Var<T> mean_rows<T>(const Var<T>&);                                              \
    template Var<T> masked_mean_rows<T>(const Var<T>&, const std::vector<int64_t>&);          \
    template Var<T> masked_max<T>(const Var<T>&, const std::vector<int64_t>&);                \
    template Var<T> take_diag<T>(const Var<T>&);                                              \
    template Var<T> logsumexp_rows<T>(const Var<T>&);                                         \
    template Var<T> relu<T>(const Var<T>&);                                                   \
    template Var<T> gelu<T>(const Var<T>&);                                                   \
    template Var<T> sigmoid<T>(const Var<T>&);                                                \
    template Var<T> exp<T>(const Var<T>&);                                                    \
    template Var<T> log<T>(const Var<T>&);                                                    \
    template Var<T> softmax_rows<T>(const Var<T>&);                                           \
    template Var<T> layernorm_rows<T>(const Var<T>&, const Var<T>&, const Var<T>&, double);   \
    template Var<T> l2norm_rows<T>(const Var<T>&, double);                                    \
    template Var<T> batchnorm_rows<T>(const Var<T>&, const Var<T>&, const Var<T>&,            \
                                      TensorT<T>*, TensorT<T>*, bool, double, double);        \
    template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>&, int64_t, int64_t,  \
                              int64_t);                                                       \
    template Var<T> conv_transpose2x2<T>(const Var<T>&, const Var<T>&, const Var<T>&);        \
    template Var<T> bilinear_resize<T>(const Var<T>&, int64_t, int64_t);                      \
    template Var<T> gather_rows<T>(const Var<T>&, const std::vector<int64_t>&);               \
    template Var<T> bce_with_logits_mean<T>(const Var<T>&, const TensorT<T>&);                \
    template Var<T> weighted_sum<T>(const std::vector<Var<T>>&, const std::vector<double>&);

RRSEG_INSTANTIATE_OPS(float)
RRSEG_INSTANTIATE_OPS(double)

#undef RRSEG_INSTANTIATE_OPS

}  // namespace rrseg::ad
