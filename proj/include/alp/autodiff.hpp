// Reverse-mode autodiff over dense float32 arrays. Define-by-run: a Graph
// records op nodes in creation order, which is already a topological order,
// so backprop is a single reverse sweep. Leaves (parameters, constants) live
// outside any graph and persist across steps; their grads accumulate until
// explicitly zeroed.
#pragma once

#include <Eigen/Core>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "alp/array.hpp"

namespace alp::ndmath {

using alp::Array;
using alp::Shape;

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
    Array value;
    Array grad;  // allocated only when requires_grad
    bool requires_grad = false;
    const char* op = "leaf";
    int seq = -1;  // creation index within the owning graph; -1 for leaves
    std::vector<NodePtr> parents;
    std::function<void()> backward_fn;

    void ensure_grad() {
        if (grad.v.empty()) grad = Array(value.shape);
    }
    void add_grad(const Array& g) {
        ensure_grad();
        for (size_t i = 0; i < grad.v.size(); ++i) grad.v[i] += g.v[i];
    }
};

inline NodePtr make_leaf(Array value, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    if (requires_grad) n->ensure_grad();
    return n;
}

using EMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

// C (r x c) = op(A) * op(B), optionally accumulating.
inline void gemm(const float* a, int ar, int ac, bool ta, const float* b, int br, int bc, bool tb,
                 float* c, bool accumulate) {
    ECMap A(a, ar, ac), B(b, br, bc);
    const int r = ta ? ac : ar, k = ta ? ar : ac, cc = tb ? br : bc;
    const int k2 = tb ? bc : br;
    if (k != k2) throw ShapeError("gemm: inner extents disagree");
    EMap C(c, r, cc);
    if (!ta && !tb) accumulate ? void(C.noalias() += A * B) : void(C.noalias() = A * B);
    else if (ta && !tb)
        accumulate ? void(C.noalias() += A.transpose() * B) : void(C.noalias() = A.transpose() * B);
    else if (!ta && tb)
        accumulate ? void(C.noalias() += A * B.transpose()) : void(C.noalias() = A * B.transpose());
    else
        accumulate ? void(C.noalias() += A.transpose() * B.transpose())
                   : void(C.noalias() = A.transpose() * B.transpose());
}

// C (r x c) = A * op(B), evaluated coefficient-wise so each output row is
// computed exactly as it would be in a single-row product. Forward passes that
// feed per-sample rewards use this: batching must not change any row's bits.
inline void gemm_rowstable(const float* a, int ar, int ac, const float* b, int br, int bc, bool tb,
                           float* c) {
    ECMap A(a, ar, ac), B(b, br, bc);
    const int cc = tb ? br : bc;
    if ((tb ? bc : br) != ac) throw ShapeError("gemm_rowstable: inner extents disagree");
    EMap C(c, ar, cc);
    if (!tb) C = A.lazyProduct(B);
    else C = A.lazyProduct(B.transpose());
}

class Graph {
public:
    explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

    bool grad_enabled() const { return grad_enabled_; }
    size_t size() const { return nodes_.size(); }

    NodePtr constant(Array value) { return make_leaf(std::move(value), false); }

    NodePtr scalar(float x) { return constant(Array(Shape{1}, x)); }

    // ---- elementwise ----

    NodePtr add(NodePtr a, NodePtr b) {
        check_same_shape(a->value.shape, b->value.shape, "add");
        auto n = fresh("add", a->value.shape, {a, b});
        for (std::int64_t i = 0; i < n->value.numel(); ++i) n->value[i] = a->value[i] + b->value[i];
        if (n->requires_grad)
            n->backward_fn = [self = n.get(), a = a.get(), b = b.get()] {
                if (a->requires_grad) a->add_grad(self->grad);
                if (b->requires_grad) b->add_grad(self->grad);
            };
        return n;
    }

    NodePtr sub(NodePtr a, NodePtr b) {
        check_same_shape(a->value.shape, b->value.shape, "sub");
        auto n = fresh("sub", a->value.shape, {a, b});
        for (std::int64_t i = 0; i < n->value.numel(); ++i) n->value[i] = a->value[i] - b->value[i];
        if (n->requires_grad)
            n->backward_fn = [self = n.get(), a = a.get(), b = b.get()] {
                if (a->requires_grad) a->add_grad(self->grad);
                if (b->requires_grad) {
                    b->ensure_grad();
                    for (size_t i = 0; i < b->grad.v.size(); ++i) b->grad.v[i] -= self->grad.v[i];
                }
            };
        return n;
    }

    NodePtr mul(NodePtr a, NodePtr b) {
        check_same_shape(a->value.shape, b->value.shape, "mul");
        auto n = fresh("mul", a->value.shape, {a, b});
        for (std::int64_t i = 0; i < n->value.numel(); ++i) n->value[i] = a->value[i] * b->value[i];
        if (n->requires_grad)
            n->backward_fn = [self = n.get(), a = a.get(), b = b.get()] {
                if (a->requires_grad) {
                    a->ensure_grad();
                    for (size_t i = 0; i < a->grad.v.size(); ++i)
                        a->grad.v[i] += self->grad.v[i] * b->value.v[i];
                }
                if (b->requires_grad) {
                    b->ensure_grad();
                    for (size_t i = 0; i < b->grad.v.size(); ++i)
                        b->grad.v[i] += self->grad.v[i] * a->value.v[i];
                }
            };
        return n;
    }

    NodePtr minimum(NodePtr a, NodePtr b) {
        check_same_shape(a->value.shape, b->value.shape, "minimum");
        auto n = fresh("minimum", a->value.shape, {a, b});
        for (std::int64_t i = 0; i < n->value.numel(); ++i)
            n->value[i] = std::min(a->value[i], b->value[i]);
        if (n->requires_grad)
            n->backward_fn = [self = n.get(), a = a.get(), b = b.get()] {
                if (a->requires_grad) a->ensure_grad();
                if (b->requires_grad) b->ensure_grad();
                for (size_t i = 0; i < self->grad.v.size(); ++i) {
                    const bool take_a = a->value.v[i] <= b->value.v[i];
                    if (take_a && a->requires_grad) a->grad.v[i] += self->grad.v[i];
                    if (!take_a && b->requires_grad) b->grad.v[i] += self->grad.v[i];
                }
            };
        return n;
    }

    NodePtr scale(NodePtr a, float c) {
        auto n = fresh("scale", a->value.shape, {a});
        for (std::int64_t i = 0; i < n->value.numel(); ++i) n->value[i] = a->value[i] * c;
        if (n->requires_grad)
            n->backward_fn = [self = n.get(), a = a.get(), c] {
                a->ensure_grad();
                for (size_t i = 0; i < a->grad.v.size(); ++i) a->grad.v[i] += self->grad.v[i] * c;
            };
        return n;
    }

    NodePtr add_scalar(NodePtr a, float c) {
        auto n = fresh("add_scalar", a->value.shape, {a});
        for (std::int64_t i = 0; i < n->value.numel(); ++i) n->value[i] = a->value[i] + c;
        if (n->requires_grad)
            n->backward_fn = [self = n.get(), a = a.get()] { a->add_grad(self->grad); };
        return n;
    }

    NodePtr relu(NodePtr a) {
        auto n = fresh("relu", a->value.shape, {a});
        for (std::int64_t i = 0; i < n->value.numel(); ++i)
            n->value[i] = a->value[i] > 0.f ? a->value[i] : 0.f;
        if (n->requires_grad)
            n->backward_fn = [self = n.get(), a = a.get()] {
                a->ensure_grad();
                for (size_t i = 0; i < a->grad.v.size(); ++i)
                    if (a->value.v[i] > 0.f) a->grad.v[i] += self->grad.v[i];
            };
        return n;
    }

    NodePtr tanh_(NodePtr a) {
        auto n = fresh("tanh", a->value.shape, {a});
        for (std::int64_t i = 0; i < n->value.numel(); ++i) n->value[i] = std::tanh(a->value[i]);
        if (n->requires_grad)
            n->backward_fn = [self = n.get(), a = a.get()] {
                a->ensure_grad();
                for (size_t i = 0; i < a->grad.v.size(); ++i) {
                    const float y = self->value.v[i];
                    a->grad.v[i] += self->grad.v[i] * (1.f - y * y);
                }
            };
        return n;
    }

    NodePtr sigmoid(NodePtr a) {
        auto n = fresh("sigmoid", a->value.shape, {a});
        for (std::int64_t i = 0; i < n->value.numel(); ++i) {
            const float x = a->value[i];
            n->value[i] = x >= 0.f ? 1.f / (1.f + std::exp(-x))
                                   : std::exp(x) / (1.f + std::exp(x));
        }
        if (n->requires_grad)
            n->backward_fn = [self = n.get(), a = a.get()] {
                a->ensure_grad();
                for (size_t i = 0; i < a->grad.v.size(); ++i) {
                    const float y = self->value.v[i];
                    a->grad.v[i] += self->grad.v[i] * y * (1.f - y);
                }
            };
        return n;
    }

    NodePtr exp_(NodePtr a) {
        auto n = fresh("exp", a->value.shape, {a});
        for (std::int64_t i = 0; i < n->value.numel(); ++i) n->value[i] = std::exp(a->value[i]);
        if (n->requires_grad)
            n->backward_fn = [self = n.get(), a = a.get()] {
                a->ensure_grad();
                for (size_t i = 0; i < a->grad.v.size(); ++i)
                    a->grad.v[i] += self->grad.v[i] * self->value.v[i];
            };
        return n;
    }

    NodePtr log_(NodePtr a) {
        auto n = fresh("log", a->value.shape, {a});
        for (std::int64_t i = 0; i < n->value.numel(); ++i) n->value[i] = std::log(a->value[i]);
        if (n->requires_grad)
            n->backward_fn = [self = n.get(), a = a.get()] {
                a->ensure_grad();
                for (size_t i = 0; i < a->grad.v.size(); ++i)
                    a->grad.v[i] += self->grad.v[i] / a->value.v[i];
            };
        return n;
    }

    NodePtr clampf(NodePtr a, float lo, float hi) {
        auto n = fresh("clamp", a->value.shape, {a});
        for (std::int64_t i = 0; i < n->value.numel(); ++i)
            n->value[i] = std::min(std::max(a->value[i], lo), hi);
        if (n->requires_grad)
            n->backward_fn = [self = n.get(), a = a.get(), lo, hi] {
                a->ensure_grad();
                for (size_t i = 0; i < a->grad.v.size(); ++i) {
                    const float x = a->value.v[i];
                    if (x > lo && x < hi) a->grad.v[i] += self->grad.v[i];
                }
            };
        return n;
    }

    // ---- linear algebra ----

    // x [N x I] * w [I x O] + b [O]
    NodePtr affine(NodePtr x, NodePtr w, NodePtr b) {
        require_rank(x, 2, "affine/x");
        require_rank(w, 2, "affine/w");
        require_rank(b, 1, "affine/b");
        const int N = x->value.extent(0), I = x->value.extent(1), O = w->value.extent(1);
        if (w->value.extent(0) != I || b->value.extent(0) != O)
            throw ShapeError("affine: got x" + shape_str(x->value.shape) + " w" +
                             shape_str(w->value.shape) + " b" + shape_str(b->value.shape));
        auto n = fresh("affine", Shape{N, O}, {x, w, b});
        gemm_rowstable(x->value.data(), N, I, w->value.data(), I, O, false, n->value.data());
        for (int r = 0; r < N; ++r)
            for (int c = 0; c < O; ++c) n->value.at2(r, c) += b->value[c];
        if (n->requires_grad)
            n->backward_fn = [self = n.get(), x = x.get(), w = w.get(), b = b.get(), N, I, O] {
                if (x->requires_grad) {
                    x->ensure_grad();
                    gemm(self->grad.data(), N, O, false, w->value.data(), I, O, true,
                         x->grad.data(), true);
                }
                if (w->requires_grad) {
                    w->ensure_grad();
                    gemm(x->value.data(), N, I, true, self->grad.data(), N, O, false,
                         w->grad.data(), true);
                }
                if (b->requires_grad) {
                    b->ensure_grad();
                    for (int r = 0; r < N; ++r)
                        for (int c = 0; c < O; ++c) b->grad[c] += self->grad.at2(r, c);
                }
            };
        return n;
    }

    // a [N x K] * b [M x K]^T -> [N x M]; similarity matrices.
    NodePtr matmul_nt(NodePtr a, NodePtr b) {
        require_rank(a, 2, "matmul_nt/a");
        require_rank(b, 2, "matmul_nt/b");
        const int N = a->value.extent(0), K = a->value.extent(1), M = b->value.extent(0);
        if (b->value.extent(1) != K)
            throw ShapeError("matmul_nt: " + shape_str(a->value.shape) + " vs " +
                             shape_str(b->value.shape));
        auto n = fresh("matmul_nt", Shape{N, M}, {a, b});
        gemm_rowstable(a->value.data(), N, K, b->value.data(), M, K, true, n->value.data());
        if (n->requires_grad)
            n->backward_fn = [self = n.get(), a = a.get(), b = b.get(), N, K, M] {
                if (a->requires_grad) {
                    a->ensure_grad();
                    gemm(self->grad.data(), N, M, false, b->value.data(), M, K, false,
                         a->grad.data(), true);
                }
                if (b->requires_grad) {
                    b->ensure_grad();
                    gemm(self->grad.data(), N, M, true, a->value.data(), N, K, false,
                         b->grad.data(), true);
                }
            };
        return n;
    }

    // ---- indexing / reshaping ----

    NodePtr reshape(NodePtr a, Shape s) {
        if (shape_numel(s) != a->value.numel())
            throw ShapeError("reshape: " + shape_str(a->value.shape) + " to " + shape_str(s));
        auto n = fresh("reshape", s, {a});
        n->value.v = a->value.v;
        if (n->requires_grad)
            n->backward_fn = [self = n.get(), a = a.get()] {
                a->ensure_grad();
                for (size_t i = 0; i < a->grad.v.size(); ++i) a->grad.v[i] += self->grad.v[i];
            };
        return n;
    }

    // rows of x selected by idx; duplicate indices accumulate in backward.
    NodePtr gather_rows(NodePtr x, const std::vector<int>& idx) {
        require_rank(x, 2, "gather_rows");
        const int C = x->value.extent(1), R = x->value.extent(0);
        for (int i : idx)
            if (i < 0 || i >= R) throw ContractError("gather_rows: index out of range");
        auto n = fresh("gather_rows", Shape{static_cast<int>(idx.size()), C}, {x});
        for (size_t m = 0; m < idx.size(); ++m)
            std::copy_n(x->value.data() + static_cast<size_t>(idx[m]) * C, C,
                        n->value.data() + m * C);
        if (n->requires_grad)
            n->backward_fn = [self = n.get(), x = x.get(), idx, C] {
                x->ensure_grad();
                for (size_t m = 0; m < idx.size(); ++m) {
                    float* dst = x->grad.data() + static_cast<size_t>(idx[m]) * C;
                    const float* src = self->grad.data() + m * C;
                    for (int c = 0; c < C; ++c) dst[c] += src[c];
                }
            };
        return n;
    }

    // y[i] = x[i, idx[i]]
    NodePtr pick_rows(NodePtr x, const std::vector<int>& idx) {
        require_rank(x, 2, "pick_rows");
        const int N = x->value.extent(0), A = x->value.extent(1);
        if (static_cast<int>(idx.size()) != N) throw ShapeError("pick_rows: index count != rows");
        for (int i : idx)
            if (i < 0 || i >= A) throw ContractError("pick_rows: index out of range");
        auto n = fresh("pick_rows", Shape{N}, {x});
        for (int i = 0; i < N; ++i) n->value[i] = x->value.at2(i, idx[i]);
        if (n->requires_grad)
            n->backward_fn = [self = n.get(), x = x.get(), idx, N] {
                x->ensure_grad();
                for (int i = 0; i < N; ++i) x->grad.at2(i, idx[i]) += self->grad[i];
            };
        return n;
    }

    NodePtr concat_cols(const std::vector<NodePtr>& parts) {
        if (parts.empty()) throw ContractError("concat_cols: no inputs");
        const int N = parts[0]->value.extent(0);
        int total = 0;
        for (const auto& p : parts) {
            require_rank(p, 2, "concat_cols");
            if (p->value.extent(0) != N) throw ShapeError("concat_cols: row count mismatch");
            total += p->value.extent(1);
        }
        auto n = fresh("concat_cols", Shape{N, total}, parts);
        int off = 0;
        for (const auto& p : parts) {
            const int C = p->value.extent(1);
            for (int r = 0; r < N; ++r)
                std::copy_n(p->value.data() + static_cast<size_t>(r) * C, C,
                            n->value.data() + static_cast<size_t>(r) * total + off);
            off += C;
        }
        if (n->requires_grad)
            n->backward_fn = [self = n.get(), N, total] {
                int off = 0;
                for (auto& pp : self->parents) {
                    Node* p = pp.get();
                    const int C = p->value.extent(1);
                    if (p->requires_grad) {
                        p->ensure_grad();
                        for (int r = 0; r < N; ++r) {
                            const float* src =
                                self->grad.data() + static_cast<size_t>(r) * total + off;
                            float* dst = p->grad.data() + static_cast<size_t>(r) * C;
                            for (int c = 0; c < C; ++c) dst[c] += src[c];
                        }
                    }
                    off += C;
                }
            };
        return n;
    }

    // x [N x C] scaled per row by m [N]
    NodePtr scale_rows(NodePtr x, NodePtr m) {
        require_rank(x, 2, "scale_rows/x");
        require_rank(m, 1, "scale_rows/m");
        const int N = x->value.extent(0), C = x->value.extent(1);
        if (m->value.extent(0) != N) throw ShapeError("scale_rows: row count mismatch");
        auto n = fresh("scale_rows", x->value.shape, {x, m});
        for (int r = 0; r < N; ++r)
            for (int c = 0; c < C; ++c) n->value.at2(r, c) = x->value.at2(r, c) * m->value[r];
        if (n->requires_grad)
            n->backward_fn = [self = n.get(), x = x.get(), m = m.get(), N, C] {
                if (x->requires_grad) {
                    x->ensure_grad();
                    for (int r = 0; r < N; ++r)
                        for (int c = 0; c < C; ++c)
                            x->grad.at2(r, c) += self->grad.at2(r, c) * m->value[r];
                }
                if (m->requires_grad) {
                    m->ensure_grad();
                    for (int r = 0; r < N; ++r) {
                        double s = 0.0;
                        for (int c = 0; c < C; ++c)
                            s += static_cast<double>(self->grad.at2(r, c)) * x->value.at2(r, c);
                        m->grad[r] += static_cast<float>(s);
                    }
                }
            };
        return n;
    }

    // ---- rowwise softmax family ----

    NodePtr softmax_rows(NodePtr x) {
        require_rank(x, 2, "softmax_rows");
        const int N = x->value.extent(0), A = x->value.extent(1);
        auto n = fresh("softmax_rows", x->value.shape, {x});
        softmax_fill(x->value, n->value, N, A);
        if (n->requires_grad)
            n->backward_fn = [self = n.get(), x = x.get(), N, A] {
                x->ensure_grad();
                for (int r = 0; r < N; ++r) {
                    double dot = 0.0;
                    for (int c = 0; c < A; ++c)
                        dot += static_cast<double>(self->grad.at2(r, c)) * self->value.at2(r, c);
                    for (int c = 0; c < A; ++c)
                        x->grad.at2(r, c) += self->value.at2(r, c) *
                                             (self->grad.at2(r, c) - static_cast<float>(dot));
                }
            };
        return n;
    }

    NodePtr log_softmax_rows(NodePtr x) {
        require_rank(x, 2, "log_softmax_rows");
        const int N = x->value.extent(0), A = x->value.extent(1);
        auto n = fresh("log_softmax_rows", x->value.shape, {x});
        for (int r = 0; r < N; ++r) {
            float mx = x->value.at2(r, 0);
            for (int c = 1; c < A; ++c) mx = std::max(mx, x->value.at2(r, c));
            double z = 0.0;
            for (int c = 0; c < A; ++c) z += std::exp(static_cast<double>(x->value.at2(r, c)) - mx);
            const float lz = static_cast<float>(std::log(z)) + mx;
            for (int c = 0; c < A; ++c) n->value.at2(r, c) = x->value.at2(r, c) - lz;
        }
        if (n->requires_grad)
            n->backward_fn = [self = n.get(), x = x.get(), N, A] {
                x->ensure_grad();
                for (int r = 0; r < N; ++r) {
                    double gsum = 0.0;
                    for (int c = 0; c < A; ++c) gsum += self->grad.at2(r, c);
                    for (int c = 0; c < A; ++c)
                        x->grad.at2(r, c) +=
                            self->grad.at2(r, c) -
                            std::exp(self->value.at2(r, c)) * static_cast<float>(gsum);
                }
            };
        return n;
    }

    // mean over rows of -log softmax(logits)[label]
    NodePtr cross_entropy_rows(NodePtr logits, const std::vector<int>& labels) {
        require_rank(logits, 2, "cross_entropy_rows");
        const int N = logits->value.extent(0), A = logits->value.extent(1);
        if (static_cast<int>(labels.size()) != N)
            throw ShapeError("cross_entropy_rows: label count != rows");
        for (int l : labels)
            if (l < 0 || l >= A) throw ContractError("cross_entropy_rows: label out of range");
        auto probs = std::make_shared<Array>(logits->value.shape);
        softmax_fill(logits->value, *probs, N, A);
        auto n = fresh("cross_entropy_rows", Shape{1}, {logits});
        double loss = 0.0;
        for (int r = 0; r < N; ++r)
            loss -= std::log(std::max(static_cast<double>(probs->at2(r, labels[r])), 1e-30));
        n->value[0] = static_cast<float>(loss / N);
        if (n->requires_grad)
            n->backward_fn = [self = n.get(), x = logits.get(), probs, labels, N, A] {
                x->ensure_grad();
                const float g = self->grad[0] / static_cast<float>(N);
                for (int r = 0; r < N; ++r)
                    for (int c = 0; c < A; ++c)
                        x->grad.at2(r, c) +=
                            g * (probs->at2(r, c) - (c == labels[r] ? 1.f : 0.f));
            };
        return n;
    }

    // ---- reductions ----

    NodePtr sum_all(NodePtr a) {
        auto n = fresh("sum_all", Shape{1}, {a});
        n->value[0] = static_cast<float>(sum64(a->value));
        if (n->requires_grad)
            n->backward_fn = [self = n.get(), a = a.get()] {
                a->ensure_grad();
                for (auto& g : a->grad.v) g += self->grad[0];
            };
        return n;
    }

    NodePtr mean_all(NodePtr a) {
        auto n = fresh("mean_all", Shape{1}, {a});
        const float inv = 1.f / static_cast<float>(a->value.numel());
        n->value[0] = static_cast<float>(sum64(a->value) * inv);
        if (n->requires_grad)
            n->backward_fn = [self = n.get(), a = a.get(), inv] {
                a->ensure_grad();
                for (auto& g : a->grad.v) g += self->grad[0] * inv;
            };
        return n;
    }

    NodePtr l2norm(NodePtr a) {
        auto n = fresh("l2norm", Shape{1}, {a});
        const double nn = std::sqrt(sq_norm64(a->value));
        n->value[0] = static_cast<float>(nn);
        if (n->requires_grad)
            n->backward_fn = [self = n.get(), a = a.get()] {
                a->ensure_grad();
                const float inv = 1.f / std::max(self->value[0], 1e-12f);
                for (size_t i = 0; i < a->grad.v.size(); ++i)
                    a->grad.v[i] += self->grad[0] * a->value.v[i] * inv;
            };
        return n;
    }

    NodePtr mse(NodePtr a, NodePtr b) {
        check_same_shape(a->value.shape, b->value.shape, "mse");
        auto n = fresh("mse", Shape{1}, {a, b});
        double s = 0.0;
        for (std::int64_t i = 0; i < a->value.numel(); ++i) {
            const double d = static_cast<double>(a->value[i]) - b->value[i];
            s += d * d;
        }
        const float inv = 1.f / static_cast<float>(a->value.numel());
        n->value[0] = static_cast<float>(s * inv);
        if (n->requires_grad)
            n->backward_fn = [self = n.get(), a = a.get(), b = b.get(), inv] {
                const float g = 2.f * self->grad[0] * inv;
                if (a->requires_grad) a->ensure_grad();
                if (b->requires_grad) b->ensure_grad();
                for (size_t i = 0; i < a->value.v.size(); ++i) {
                    const float d = a->value.v[i] - b->value.v[i];
                    if (a->requires_grad) a->grad.v[i] += g * d;
                    if (b->requires_grad) b->grad.v[i] -= g * d;
                }
            };
        return n;
    }

    // mean over elements of softplus(z) - t*z, the stable binary CE on logits.
    NodePtr bce_logits(NodePtr z, NodePtr t) {
        check_same_shape(z->value.shape, t->value.shape, "bce_logits");
        auto n = fresh("bce_logits", Shape{1}, {z, t});
        double s = 0.0;
        for (std::int64_t i = 0; i < z->value.numel(); ++i) {
            const double x = z->value[i];
            s += std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0) -
                 static_cast<double>(t->value[i]) * x;
        }
        const float inv = 1.f / static_cast<float>(z->value.numel());
        n->value[0] = static_cast<float>(s * inv);
        if (n->requires_grad)
            n->backward_fn = [self = n.get(), z = z.get(), t = t.get(), inv] {
                if (!z->requires_grad) return;
                z->ensure_grad();
                const float g = self->grad[0] * inv;
                for (size_t i = 0; i < z->value.v.size(); ++i) {
                    const float x = z->value.v[i];
                    const float sig = x >= 0.f ? 1.f / (1.f + std::exp(-x))
                                               : std::exp(x) / (1.f + std::exp(x));
                    z->grad.v[i] += g * (sig - t->value.v[i]);
                }
            };
        return n;
    }

    // rows scaled to unit L2 norm; smoothed as sqrt(sum + eps^2) so the zero
    // row maps to zero with a finite gradient.
    NodePtr normalize_rows(NodePtr x, float eps = 1e-8f) {
        require_rank(x, 2, "normalize_rows");
        const int N = x->value.extent(0), C = x->value.extent(1);
        auto norms = std::make_shared<std::vector<float>>(static_cast<size_t>(N));
        auto n = fresh("normalize_rows", x->value.shape, {x});
        for (int r = 0; r < N; ++r) {
            double s = 0.0;
            for (int c = 0; c < C; ++c)
                s += static_cast<double>(x->value.at2(r, c)) * x->value.at2(r, c);
            const float nn = static_cast<float>(std::sqrt(s + static_cast<double>(eps) * eps));
            (*norms)[static_cast<size_t>(r)] = nn;
            for (int c = 0; c < C; ++c) n->value.at2(r, c) = x->value.at2(r, c) / nn;
        }
        if (n->requires_grad)
            n->backward_fn = [self = n.get(), x = x.get(), norms, N, C] {
                x->ensure_grad();
                for (int r = 0; r < N; ++r) {
                    const float nn = (*norms)[static_cast<size_t>(r)];
                    double dot = 0.0;
                    for (int c = 0; c < C; ++c)
                        dot += static_cast<double>(self->grad.at2(r, c)) * self->value.at2(r, c);
                    for (int c = 0; c < C; ++c)
                        x->grad.at2(r, c) +=
                            (self->grad.at2(r, c) -
                             self->value.at2(r, c) * static_cast<float>(dot)) /
                            nn;
                }
            };
        return n;
    }

    // ---- image ops (NCHW) ----

    NodePtr avgpool2x2(NodePtr x) {
        require_rank(x, 4, "avgpool2x2");
        const int N = x->value.extent(0), C = x->value.extent(1);
        const int H = x->value.extent(2), W = x->value.extent(3);
        if (H % 2 || W % 2) throw ShapeError("avgpool2x2: odd spatial extent " +
                                             shape_str(x->value.shape));
        const int Ho = H / 2, Wo = W / 2;
        auto n = fresh("avgpool2x2", Shape{N, C, Ho, Wo}, {x});
        for (int nc = 0; nc < N * C; ++nc) {
            const float* src = x->value.data() + static_cast<size_t>(nc) * H * W;
            float* dst = n->value.data() + static_cast<size_t>(nc) * Ho * Wo;
            for (int i = 0; i < Ho; ++i)
                for (int j = 0; j < Wo; ++j)
                    dst[i * Wo + j] = 0.25f * (src[(2 * i) * W + 2 * j] +
                                               src[(2 * i) * W + 2 * j + 1] +
                                               src[(2 * i + 1) * W + 2 * j] +
                                               src[(2 * i + 1) * W + 2 * j + 1]);
        }
        if (n->requires_grad)
            n->backward_fn = [self = n.get(), x = x.get(), N, C, H, W, Ho, Wo] {
                x->ensure_grad();
                for (int nc = 0; nc < N * C; ++nc) {
                    float* dst = x->grad.data() + static_cast<size_t>(nc) * H * W;
                    const float* src = self->grad.data() + static_cast<size_t>(nc) * Ho * Wo;
                    for (int i = 0; i < Ho; ++i)
                        for (int j = 0; j < Wo; ++j) {
                            const float g = 0.25f * src[i * Wo + j];
                            dst[(2 * i) * W + 2 * j] += g;
                            dst[(2 * i) * W + 2 * j + 1] += g;
                            dst[(2 * i + 1) * W + 2 * j] += g;
                            dst[(2 * i + 1) * W + 2 * j + 1] += g;
                        }
                }
            };
        return n;
    }

    // x [N,C,H,W], w [O,C,kh,kw], b [O]; im2col + GEMM, columns cached for
    // the backward pass.
    NodePtr conv2d(NodePtr x, NodePtr w, NodePtr b, int stride, int pad) {
        require_rank(x, 4, "conv2d/x");
        require_rank(w, 4, "conv2d/w");
        require_rank(b, 1, "conv2d/b");
        const int N = x->value.extent(0), C = x->value.extent(1);
        const int H = x->value.extent(2), W = x->value.extent(3);
        const int O = w->value.extent(0), kh = w->value.extent(2), kw = w->value.extent(3);
        if (w->value.extent(1) != C || b->value.extent(0) != O)
            throw ShapeError("conv2d: x" + shape_str(x->value.shape) + " w" +
                             shape_str(w->value.shape));
        const int Ho = (H + 2 * pad - kh) / stride + 1;
        const int Wo = (W + 2 * pad - kw) / stride + 1;
        if (Ho <= 0 || Wo <= 0) throw ShapeError("conv2d: empty output");
        const int K = C * kh * kw, P = Ho * Wo;
        auto cols = std::make_shared<std::vector<float>>(static_cast<size_t>(N) * K * P);
        auto n = fresh("conv2d", Shape{N, O, Ho, Wo}, {x, w, b});
        for (int img = 0; img < N; ++img) {
            float* col = cols->data() + static_cast<size_t>(img) * K * P;
            im2col(x->value.data() + static_cast<size_t>(img) * C * H * W, C, H, W, kh, kw,
                   stride, pad, Ho, Wo, col);
            float* y = n->value.data() + static_cast<size_t>(img) * O * P;
            gemm(w->value.data(), O, K, false, col, K, P, false, y, false);
            for (int o = 0; o < O; ++o)
                for (int p = 0; p < P; ++p) y[o * P + p] += b->value[o];
        }
        if (n->requires_grad)
            n->backward_fn = [self = n.get(), x = x.get(), w = w.get(), b = b.get(), cols, N, C,
                              H, W, O, kh, kw, stride, pad, Ho, Wo, K, P] {
                if (w->requires_grad) w->ensure_grad();
                if (b->requires_grad) b->ensure_grad();
                if (x->requires_grad) x->ensure_grad();
                std::vector<float> dcol(static_cast<size_t>(K) * P);
                for (int img = 0; img < N; ++img) {
                    const float* dy = self->grad.data() + static_cast<size_t>(img) * O * P;
                    const float* col = cols->data() + static_cast<size_t>(img) * K * P;
                    if (w->requires_grad)
                        gemm(dy, O, P, false, col, K, P, true, w->grad.data(), true);
                    if (b->requires_grad)
                        for (int o = 0; o < O; ++o)
                            for (int p = 0; p < P; ++p) b->grad[o] += dy[o * P + p];
                    if (x->requires_grad) {
                        gemm(w->value.data(), O, K, true, dy, O, P, false, dcol.data(), false);
                        col2im_add(dcol.data(), C, H, W, kh, kw, stride, pad, Ho, Wo,
                                   x->grad.data() + static_cast<size_t>(img) * C * H * W);
                    }
                }
            };
        return n;
    }

    // Transposed conv with stride == kernel (non-overlapping upsample).
    // x [N,C,H,W], w [C,O,k,k], b [O] -> [N,O,H*k,W*k]
    NodePtr tconv2d(NodePtr x, NodePtr w, NodePtr b, int k) {
        require_rank(x, 4, "tconv2d/x");
        require_rank(w, 4, "tconv2d/w");
        const int N = x->value.extent(0), C = x->value.extent(1);
        const int H = x->value.extent(2), W = x->value.extent(3);
        const int O = w->value.extent(1);
        if (w->value.extent(0) != C || w->value.extent(2) != k || w->value.extent(3) != k ||
            b->value.extent(0) != O)
            throw ShapeError("tconv2d: x" + shape_str(x->value.shape) + " w" +
                             shape_str(w->value.shape));
        const int P = H * W, Q = O * k * k;
        auto n = fresh("tconv2d", Shape{N, O, H * k, W * k}, {x, w, b});
        std::vector<float> m(static_cast<size_t>(Q) * P);
        for (int img = 0; img < N; ++img) {
            const float* xi = x->value.data() + static_cast<size_t>(img) * C * P;
            // m[(o*k+di)*k+dj][p] = sum_c w[c][(o*k+di)*k+dj] * x[c][p]
            gemm(w->value.data(), C, Q, true, xi, C, P, false, m.data(), false);
            float* y = n->value.data() + static_cast<size_t>(img) * O * (P * k * k);
            scatter_blocks(m.data(), y, b->value.data(), O, H, W, k, true);
        }
        if (n->requires_grad)
            n->backward_fn = [self = n.get(), x = x.get(), w = w.get(), b = b.get(), N, C, H, W,
                              O, k, P, Q] {
                if (x->requires_grad) x->ensure_grad();
                if (w->requires_grad) w->ensure_grad();
                if (b->requires_grad) b->ensure_grad();
                std::vector<float> dm(static_cast<size_t>(Q) * P);
                for (int img = 0; img < N; ++img) {
                    const float* dy = self->grad.data() + static_cast<size_t>(img) * O * P * k * k;
                    gather_blocks(dy, dm.data(), O, H, W, k);
                    if (b->requires_grad) {
                        const std::size_t span = static_cast<size_t>(P) * k * k;
                        for (int o = 0; o < O; ++o) {
                            double s = 0.0;
                            for (size_t p = 0; p < span; ++p) s += dy[o * span + p];
                            b->grad[o] += static_cast<float>(s);
                        }
                    }
                    const float* xi = x->value.data() + static_cast<size_t>(img) * C * P;
                    if (w->requires_grad)
                        gemm(xi, C, P, false, dm.data(), Q, P, true, w->grad.data(), true);
                    if (x->requires_grad)
                        gemm(w->value.data(), C, Q, false, dm.data(), Q, P, false,
                             x->grad.data() + static_cast<size_t>(img) * C * P, true);
                }
            };
        return n;
    }

    // Per-pixel CE over channel dim; labels [N*H*W] row-major, ignore < 0.
    NodePtr cross_entropy_chw(NodePtr logits, const std::vector<int>& labels) {
        require_rank(logits, 4, "cross_entropy_chw");
        const int N = logits->value.extent(0), C = logits->value.extent(1);
        const int H = logits->value.extent(2), W = logits->value.extent(3);
        const int P = H * W;
        if (static_cast<int>(labels.size()) != N * P)
            throw ShapeError("cross_entropy_chw: label count != pixels");
        auto probs = std::make_shared<Array>(logits->value.shape);
        auto n = fresh("cross_entropy_chw", Shape{1}, {logits});
        double loss = 0.0;
        std::int64_t counted = 0;
        for (int img = 0; img < N; ++img) {
            const float* z = logits->value.data() + static_cast<size_t>(img) * C * P;
            float* pr = probs->data() + static_cast<size_t>(img) * C * P;
            for (int p = 0; p < P; ++p) {
                float mx = z[p];
                for (int c = 1; c < C; ++c) mx = std::max(mx, z[c * P + p]);
                double sum = 0.0;
                for (int c = 0; c < C; ++c) {
                    const double e = std::exp(static_cast<double>(z[c * P + p]) - mx);
                    pr[c * P + p] = static_cast<float>(e);
                    sum += e;
                }
                const float inv = static_cast<float>(1.0 / sum);
                for (int c = 0; c < C; ++c) pr[c * P + p] *= inv;
                const int lab = labels[static_cast<size_t>(img) * P + p];
                if (lab >= 0) {
                    if (lab >= C) throw ContractError("cross_entropy_chw: label out of range");
                    loss -= std::log(std::max(static_cast<double>(pr[lab * P + p]), 1e-30));
                    ++counted;
                }
            }
        }
        if (counted == 0) throw ContractError("cross_entropy_chw: no labeled pixels");
        n->value[0] = static_cast<float>(loss / static_cast<double>(counted));
        if (n->requires_grad)
            n->backward_fn = [self = n.get(), x = logits.get(), probs, labels, N, C, P, counted] {
                x->ensure_grad();
                const float g = self->grad[0] / static_cast<float>(counted);
                for (int img = 0; img < N; ++img) {
                    const float* pr = probs->data() + static_cast<size_t>(img) * C * P;
                    float* dx = x->grad.data() + static_cast<size_t>(img) * C * P;
                    for (int p = 0; p < P; ++p) {
                        const int lab = labels[static_cast<size_t>(img) * P + p];
                        if (lab < 0) continue;
                        for (int c = 0; c < C; ++c)
                            dx[c * P + p] += g * (pr[c * P + p] - (c == lab ? 1.f : 0.f));
                    }
                }
            };
        return n;
    }

    // ---- driver ----

    // Reverse sweep from `loss` (scalar). Leaf grads accumulate.
    void backward(NodePtr loss) {
        if (loss->value.numel() != 1) throw ShapeError("backward: loss must be scalar");
        if (!loss->requires_grad)
            throw ContractError("backward: loss does not require grad");
        if (!std::isfinite(loss->value[0]))
            throw NumericError(std::string("backward: non-finite loss from op '") + loss->op +
                               "'");
        loss->ensure_grad();
        loss->grad[0] += 1.f;
        for (int i = loss->seq; i >= 0; --i) {
            Node* n = nodes_[static_cast<size_t>(i)].get();
            if (n->requires_grad && n->backward_fn && !n->grad.v.empty()) n->backward_fn();
        }
    }

    // Diagnostic sweep; throws NumericError naming the first offending op.
    void check_finite() const {
        for (const auto& n : nodes_)
            if (!n->value.all_finite())
                throw NumericError(std::string("non-finite value in op '") + n->op + "' at node " +
                                   std::to_string(n->seq));
    }

private:
    NodePtr fresh(const char* op, Shape shape, std::vector<NodePtr> parents) {
        auto n = std::make_shared<Node>();
        n->op = op;
        n->value = Array(std::move(shape));
        n->parents = std::move(parents);
        if (grad_enabled_)
            for (const auto& p : n->parents)
                if (p->requires_grad) {
                    n->requires_grad = true;
                    break;
                }
        n->seq = static_cast<int>(nodes_.size());
        nodes_.push_back(n);
        return n;
    }

    static void require_rank(const NodePtr& n, int r, const char* where) {
        if (n->value.rank() != r)
            throw ShapeError(std::string(where) + ": want rank " + std::to_string(r) + ", got " +
                             shape_str(n->value.shape));
    }

    static void softmax_fill(const Array& x, Array& out, int N, int A) {
        for (int r = 0; r < N; ++r) {
            float mx = x.at2(r, 0);
            for (int c = 1; c < A; ++c) mx = std::max(mx, x.at2(r, c));
            double sum = 0.0;
            for (int c = 0; c < A; ++c) {
                const double e = std::exp(static_cast<double>(x.at2(r, c)) - mx);
                out.at2(r, c) = static_cast<float>(e);
                sum += e;
            }
            const float inv = static_cast<float>(1.0 / sum);
            for (int c = 0; c < A; ++c) out.at2(r, c) *= inv;
        }
    }

    static void im2col(const float* x, int C, int H, int W, int kh, int kw, int stride, int pad,
                       int Ho, int Wo, float* col) {
        for (int c = 0; c < C; ++c)
            for (int i = 0; i < kh; ++i)
                for (int j = 0; j < kw; ++j) {
                    float* dst = col + (static_cast<size_t>(c) * kh * kw + i * kw + j) *
                                           (static_cast<size_t>(Ho) * Wo);
                    for (int oy = 0; oy < Ho; ++oy) {
                        const int y = oy * stride - pad + i;
                        for (int ox = 0; ox < Wo; ++ox) {
                            const int xx = ox * stride - pad + j;
                            dst[oy * Wo + ox] =
                                (y >= 0 && y < H && xx >= 0 && xx < W)
                                    ? x[(static_cast<size_t>(c) * H + y) * W + xx]
                                    : 0.f;
                        }
                    }
                }
    }

    static void col2im_add(const float* col, int C, int H, int W, int kh, int kw, int stride,
                           int pad, int Ho, int Wo, float* x) {
        for (int c = 0; c < C; ++c)
            for (int i = 0; i < kh; ++i)
                for (int j = 0; j < kw; ++j) {
                    const float* src = col + (static_cast<size_t>(c) * kh * kw + i * kw + j) *
                                                 (static_cast<size_t>(Ho) * Wo);
                    for (int oy = 0; oy < Ho; ++oy) {
                        const int y = oy * stride - pad + i;
                        if (y < 0 || y >= H) continue;
                        for (int ox = 0; ox < Wo; ++ox) {
                            const int xx = ox * stride - pad + j;
                            if (xx >= 0 && xx < W)
                                x[(static_cast<size_t>(c) * H + y) * W + xx] += src[oy * Wo + ox];
                        }
                    }
                }
    }

    // m [(O*k*k) x (H*W)] <-> y [O, H*k, W*k]
    static void scatter_blocks(const float* m, float* y, const float* bias, int O, int H, int W,
                               int k, bool add_bias) {
        const int Wk = W * k;
        for (int o = 0; o < O; ++o)
            for (int di = 0; di < k; ++di)
                for (int dj = 0; dj < k; ++dj) {
                    const float* src = m + (static_cast<size_t>(o) * k * k + di * k + dj) *
                                               (static_cast<size_t>(H) * W);
                    const float bb = add_bias ? bias[o] : 0.f;
                    for (int i = 0; i < H; ++i)
                        for (int j = 0; j < W; ++j)
                            y[(static_cast<size_t>(o) * H * k + i * k + di) * Wk + j * k + dj] =
                                src[i * W + j] + bb;
                }
    }

    static void gather_blocks(const float* y, float* m, int O, int H, int W, int k) {
        const int Wk = W * k;
        for (int o = 0; o < O; ++o)
            for (int di = 0; di < k; ++di)
                for (int dj = 0; dj < k; ++dj) {
                    float* dst = m + (static_cast<size_t>(o) * k * k + di * k + dj) *
                                         (static_cast<size_t>(H) * W);
                    for (int i = 0; i < H; ++i)
                        for (int j = 0; j < W; ++j)
                            dst[i * W + j] =
                                y[(static_cast<size_t>(o) * H * k + i * k + di) * Wk + j * k + dj];
                }
    }

    bool grad_enabled_;
    std::vector<NodePtr> nodes_;
};

}  // namespace alp::ndmath
