#ifndef PROMPTREC_TENSOR_HPP
#define PROMPTREC_TENSOR_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <unordered_set>
#include <utility>
#include <vector>

#include "promptrec/common.hpp"

namespace promptrec {

namespace detail {

struct Node {
    std::vector<std::size_t> shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until touched by backward
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    std::size_t numel() const { return data.size(); }
    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
};

inline thread_local bool grad_recording = true;

// ---- raw kernels (no graph) ----

// c (+)= a[m x k] * b[k x n]
inline void mm_nn(const double* a, const double* b, double* c,
                  std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    if (!accumulate) std::fill(c, c + m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t t = 0; t < k; ++t) {
            const double av = arow[t];
            const double* brow = b + t * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// c (+)= a[m x n] * b[p x n]^T   (c is m x p)
inline void mm_nt(const double* a, const double* b, double* c,
                  std::size_t m, std::size_t n, std::size_t p, bool accumulate) {
    if (!accumulate) std::fill(c, c + m * p, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * n;
        double* crow = c + i * p;
        for (std::size_t j = 0; j < p; ++j) {
            const double* brow = b + j * n;
            double acc = 0.0;
            for (std::size_t t = 0; t < n; ++t) acc += arow[t] * brow[t];
            crow[j] += acc;
        }
    }
}

// z += x[r x c1]^T * y[r x c2]   (z is c1 x c2)
inline void mm_tn_acc(const double* x, const double* y, double* z,
                      std::size_t r, std::size_t c1, std::size_t c2) {
    for (std::size_t t = 0; t < r; ++t) {
        const double* xrow = x + t * c1;
        const double* yrow = y + t * c2;
        for (std::size_t i = 0; i < c1; ++i) {
            const double xv = xrow[i];
            double* zrow = z + i * c2;
            for (std::size_t j = 0; j < c2; ++j) zrow[j] += xv * yrow[j];
        }
    }
}

}  // namespace detail

// Disables graph recording for the current thread while alive. Forward-only
// inference (generation, benchmarking) runs under this guard.
class NoGradGuard {
public:
    NoGradGuard() : prev_(detail::grad_recording) { detail::grad_recording = false; }
    ~NoGradGuard() { detail::grad_recording = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

// Dense row-major tensor of doubles with an optional gradient buffer.
// Value-semantics handle: copying a Tensor shares the underlying node.
class Tensor {
public:
    Tensor() = default;

    Tensor(std::vector<std::size_t> shape, double fill = 0.0, bool requires_grad = false) {
        node_ = std::make_shared<detail::Node>();
        node_->shape = std::move(shape);
        node_->data.assign(checked_numel(node_->shape), fill);
        node_->requires_grad = requires_grad;
    }

    Tensor(std::vector<std::size_t> shape, std::vector<double> values, bool requires_grad = false) {
        node_ = std::make_shared<detail::Node>();
        node_->shape = std::move(shape);
        if (checked_numel(node_->shape) != values.size())
            throw std::invalid_argument("tensor data length " + std::to_string(values.size()) +
                                        " does not match shape " + shape_str(node_->shape));
        node_->data = std::move(values);
        node_->requires_grad = requires_grad;
    }

    static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

    bool valid() const { return node_ != nullptr; }

    const std::vector<std::size_t>& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t numel() const { return node_->data.size(); }
    std::size_t rows() const { return node_->shape.at(0); }
    std::size_t cols() const { return node_->shape.at(1); }

    std::vector<double>& data() { return node_->data; }
    const std::vector<double>& data() const { return node_->data; }

    bool has_grad() const { return !node_->grad.empty(); }
    const std::vector<double>& grad() const { return node_->grad; }
    std::vector<double>& grad() { return node_->grad; }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool v) { node_->requires_grad = v; }

    void zero_grad() {
        if (node_->requires_grad) node_->grad.assign(node_->data.size(), 0.0);
    }

    double item() const {
        if (numel() != 1) throw std::invalid_argument("item() on non-scalar tensor " + shape_str(shape()));
        return node_->data[0];
    }

    double at(std::size_t i, std::size_t j) const { return node_->data[i * cols() + j]; }

    // Deep copy of values only; no graph links, no grad.
    Tensor clone_detached() const {
        Tensor t;
        t.node_ = std::make_shared<detail::Node>();
        t.node_->shape = node_->shape;
        t.node_->data = node_->data;
        return t;
    }

    std::shared_ptr<detail::Node> node() const { return node_; }

private:
    static std::size_t checked_numel(const std::vector<std::size_t>& shape) {
        if (shape.empty()) throw std::invalid_argument("tensor shape must have at least one dimension");
        std::size_t n = 1;
        for (std::size_t d : shape) {
            if (d == 0) throw std::invalid_argument("tensor dimensions must be positive, got " + shape_str(shape));
            n *= d;
        }
        return n;
    }

    std::shared_ptr<detail::Node> node_;
};

namespace detail {

// All graph ops are built through this helper: it wires parents and the
// backward closure only when recording is on and some parent needs grads.
template <typename Backward>
Tensor make_op(std::vector<std::size_t> shape, std::vector<double> data,
               std::vector<Tensor> parents, Backward&& bw) {
    Tensor out(std::move(shape), std::move(data));
    bool needs = false;
    if (grad_recording) {
        for (const Tensor& p : parents)
            if (p.requires_grad()) { needs = true; break; }
    }
    if (needs) {
        auto n = out.node();
        n->requires_grad = true;
        n->parents.reserve(parents.size());
        for (const Tensor& p : parents) n->parents.push_back(p.node());
        n->backward_fn = std::forward<Backward>(bw);
    }
    return out;
}

}  // namespace detail

// ---- ops ----

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows())
        throw std::invalid_argument("matmul shape mismatch: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    std::vector<double> out(m * n);
    detail::mm_nn(a.data().data(), b.data().data(), out.data(), m, k, n, false);
    return detail::make_op({m, n}, std::move(out), {a, b}, [m, k, n](detail::Node& self) {
        detail::Node* pa = self.parents[0].get();
        detail::Node* pb = self.parents[1].get();
        if (pa->requires_grad) {
            pa->ensure_grad();
            detail::mm_nt(self.grad.data(), pb->data.data(), pa->grad.data(), m, n, k, true);
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            detail::mm_tn_acc(pa->data.data(), self.grad.data(), pb->grad.data(), m, k, n);
        }
    });
}

// a[m x d] * b[n x d]^T -> [m x n]; the attention-score form.
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols())
        throw std::invalid_argument("matmul_nt shape mismatch: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const std::size_t m = a.rows(), d = a.cols(), n = b.rows();
    std::vector<double> out(m * n);
    detail::mm_nt(a.data().data(), b.data().data(), out.data(), m, d, n, false);
    return detail::make_op({m, n}, std::move(out), {a, b}, [m, d, n](detail::Node& self) {
        detail::Node* pa = self.parents[0].get();
        detail::Node* pb = self.parents[1].get();
        if (pa->requires_grad) {
            pa->ensure_grad();
            detail::mm_nn(self.grad.data(), pb->data.data(), pa->grad.data(), m, n, d, true);
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            detail::mm_tn_acc(self.grad.data(), pa->data.data(), pb->grad.data(), m, n, d);
        }
    });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw std::invalid_argument("add shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    return detail::make_op(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
        for (int s = 0; s < 2; ++s) {
            detail::Node* p = self.parents[static_cast<std::size_t>(s)].get();
            if (!p->requires_grad) continue;
            p->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
        }
    });
}

// x[m x n] + row-broadcast bias[n]
inline Tensor add_bias_rows(const Tensor& x, const Tensor& b) {
    if (x.rank() != 2 || b.rank() != 1 || b.shape()[0] != x.cols())
        throw std::invalid_argument("add_bias_rows shape mismatch: " + shape_str(x.shape()) + " vs " + shape_str(b.shape()));
    const std::size_t m = x.rows(), n = x.cols();
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x.data()[i * n + j] + b.data()[j];
    return detail::make_op({m, n}, std::move(out), {x, b}, [m, n](detail::Node& self) {
        detail::Node* px = self.parents[0].get();
        detail::Node* pb = self.parents[1].get();
        if (px->requires_grad) {
            px->ensure_grad();
            for (std::size_t i = 0; i < m * n; ++i) px->grad[i] += self.grad[i];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) pb->grad[j] += self.grad[i * n + j];
        }
    });
}

inline Tensor relu(const Tensor& x) {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] > 0.0 ? x.data()[i] : 0.0;
    return detail::make_op(x.shape(), std::move(out), {x}, [](detail::Node& self) {
        detail::Node* p = self.parents[0].get();
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            if (p->data[i] > 0.0) p->grad[i] += self.grad[i];
    });
}

inline Tensor scale(const Tensor& x, double c) {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * x.data()[i];
    return detail::make_op(x.shape(), std::move(out), {x}, [c](detail::Node& self) {
        detail::Node* p = self.parents[0].get();
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += c * self.grad[i];
    });
}

// s (a [1] tensor) * x, elementwise in x. Used for the perplexity slot.
inline Tensor mul_scalar(const Tensor& s, const Tensor& x) {
    if (s.numel() != 1) throw std::invalid_argument("mul_scalar: first argument must be a scalar tensor");
    const double sv = s.data()[0];
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = sv * x.data()[i];
    return detail::make_op(x.shape(), std::move(out), {s, x}, [](detail::Node& self) {
        detail::Node* ps = self.parents[0].get();
        detail::Node* px = self.parents[1].get();
        if (ps->requires_grad) {
            ps->ensure_grad();
            double acc = 0.0;
            for (std::size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * px->data[i];
            ps->grad[0] += acc;
        }
        if (px->requires_grad) {
            px->ensure_grad();
            const double sv = ps->data[0];
            for (std::size_t i = 0; i < self.grad.size(); ++i) px->grad[i] += sv * self.grad[i];
        }
    });
}

inline Tensor sum(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.data()) acc += v;
    return detail::make_op({1}, {acc}, {x}, [](detail::Node& self) {
        detail::Node* p = self.parents[0].get();
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (std::size_t i = 0; i < p->grad.size(); ++i) p->grad[i] += self.grad[0];
    });
}

// Row-wise softmax with max subtraction.
inline Tensor softmax_rows(const Tensor& x) {
    if (x.rank() != 2) throw std::invalid_argument("softmax_rows expects a 2-d tensor, got " + shape_str(x.shape()));
    const std::size_t m = x.rows(), n = x.cols();
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = x.data().data() + i * n;
        double mx = row[0];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            out[i * n + j] = std::exp(row[j] - mx);
            s += out[i * n + j];
        }
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= s;
    }
    return detail::make_op({m, n}, std::move(out), {x}, [m, n](detail::Node& self) {
        detail::Node* p = self.parents[0].get();
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (std::size_t i = 0; i < m; ++i) {
            const double* y = self.data.data() + i * n;
            const double* dy = self.grad.data() + i * n;
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += dy[j] * y[j];
            double* dx = p->grad.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) dx[j] += y[j] * (dy[j] - dot);
        }
    });
}

// Per-row normalization to zero mean / unit variance, then affine gain+bias.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5) {
    if (x.rank() != 2) throw std::invalid_argument("layer_norm expects a 2-d tensor, got " + shape_str(x.shape()));
    const std::size_t m = x.rows(), n = x.cols();
    if (gain.rank() != 1 || gain.shape()[0] != n || bias.rank() != 1 || bias.shape()[0] != n)
        throw std::invalid_argument("layer_norm gain/bias must match last dimension " + std::to_string(n));
    std::vector<double> out(m * n);
    std::vector<double> mean(m), inv_std(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = x.data().data() + i * n;
        double mu = 0.0;
        for (std::size_t j = 0; j < n; ++j) mu += row[j];
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<double>(n);
        const double inv = 1.0 / std::sqrt(var + eps);
        mean[i] = mu;
        inv_std[i] = inv;
        for (std::size_t j = 0; j < n; ++j)
            out[i * n + j] = (row[j] - mu) * inv * gain.data()[j] + bias.data()[j];
    }
    return detail::make_op({m, n}, std::move(out), {x, gain, bias},
                           [m, n, mean = std::move(mean), inv_std = std::move(inv_std)](detail::Node& self) {
        detail::Node* px = self.parents[0].get();
        detail::Node* pg = self.parents[1].get();
        detail::Node* pb = self.parents[2].get();
        const double inv_n = 1.0 / static_cast<double>(n);
        std::vector<double> xhat(n);
        for (std::size_t i = 0; i < m; ++i) {
            const double* xrow = px->data.data() + i * n;
            const double* dy = self.grad.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) xhat[j] = (xrow[j] - mean[i]) * inv_std[i];
            if (pg->requires_grad) {
                pg->ensure_grad();
                for (std::size_t j = 0; j < n; ++j) pg->grad[j] += dy[j] * xhat[j];
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                for (std::size_t j = 0; j < n; ++j) pb->grad[j] += dy[j];
            }
            if (px->requires_grad) {
                px->ensure_grad();
                double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    const double dxh = dy[j] * pg->data[j];
                    sum_dxhat += dxh;
                    sum_dxhat_xhat += dxh * xhat[j];
                }
                double* dx = px->grad.data() + i * n;
                for (std::size_t j = 0; j < n; ++j) {
                    const double dxh = dy[j] * pg->data[j];
                    dx[j] += inv_std[i] * (dxh - inv_n * sum_dxhat - xhat[j] * inv_n * sum_dxhat_xhat);
                }
            }
        }
    });
}

// Additive causal mask: -1e9 above the diagonal. Square score matrices only.
inline Tensor add_causal_mask(const Tensor& scores) {
    if (scores.rank() != 2 || scores.rows() != scores.cols())
        throw std::invalid_argument("add_causal_mask expects a square matrix, got " + shape_str(scores.shape()));
    const std::size_t s = scores.rows();
    std::vector<double> out = scores.data();
    for (std::size_t i = 0; i < s; ++i)
        for (std::size_t j = i + 1; j < s; ++j) out[i * s + j] += -1e9;
    return detail::make_op({s, s}, std::move(out), {scores}, [](detail::Node& self) {
        detail::Node* p = self.parents[0].get();
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
    });
}

// Gathers a [s x t] bias matrix from a 1-d relative-offset table:
// out[i][j] = table[center + (i - j)]. center is the index of offset zero.
inline Tensor relpos_bias_matrix(const Tensor& table, std::size_t s, std::size_t t, std::size_t center) {
    if (table.rank() != 1) throw std::invalid_argument("relpos_bias_matrix expects a 1-d table");
    const std::size_t len = table.shape()[0];
    // Offsets i - j range over [-(t-1), s-1]; both ends must land inside the table.
    if (s == 0 || t == 0 || t - 1 > center || center + s - 1 >= len)
        throw std::invalid_argument("relpos_bias_matrix: table of length " + std::to_string(len) +
                                    " cannot cover offsets for s=" + std::to_string(s) + " t=" + std::to_string(t));
    std::vector<double> out(s * t);
    for (std::size_t i = 0; i < s; ++i)
        for (std::size_t j = 0; j < t; ++j)
            out[i * t + j] = table.data()[center + i - j];
    return detail::make_op({s, t}, std::move(out), {table}, [s, t, center](detail::Node& self) {
        detail::Node* p = self.parents[0].get();
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (std::size_t i = 0; i < s; ++i)
            for (std::size_t j = 0; j < t; ++j)
                p->grad[center + i - j] += self.grad[i * t + j];
    });
}

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows of zero tensors");
    const std::size_t n = parts[0].cols();
    std::size_t m = 0;
    for (const Tensor& p : parts) {
        if (p.rank() != 2 || p.cols() != n)
            throw std::invalid_argument("concat_rows column mismatch: " + shape_str(p.shape()));
        m += p.rows();
    }
    std::vector<double> out;
    out.reserve(m * n);
    for (const Tensor& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
    return detail::make_op({m, n}, std::move(out), parts, [](detail::Node& self) {
        std::size_t off = 0;
        for (auto& pp : self.parents) {
            detail::Node* p = pp.get();
            const std::size_t cnt = p->data.size();
            if (p->requires_grad) {
                p->ensure_grad();
                for (std::size_t i = 0; i < cnt; ++i) p->grad[i] += self.grad[off + i];
            }
            off += cnt;
        }
    });
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols of zero tensors");
    const std::size_t m = parts[0].rows();
    std::size_t n = 0;
    for (const Tensor& p : parts) {
        if (p.rank() != 2 || p.rows() != m)
            throw std::invalid_argument("concat_cols row mismatch: " + shape_str(p.shape()));
        n += p.cols();
    }
    std::vector<double> out(m * n);
    std::size_t coff = 0;
    for (const Tensor& p : parts) {
        const std::size_t pc = p.cols();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < pc; ++j) out[i * n + coff + j] = p.data()[i * pc + j];
        coff += pc;
    }
    return detail::make_op({m, n}, std::move(out), parts, [m, n](detail::Node& self) {
        std::size_t coff = 0;
        for (auto& pp : self.parents) {
            detail::Node* p = pp.get();
            const std::size_t pc = p->shape[1];
            if (p->requires_grad) {
                p->ensure_grad();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < pc; ++j) p->grad[i * pc + j] += self.grad[i * n + coff + j];
            }
            coff += pc;
        }
    });
}

inline Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
    if (x.rank() != 2 || begin >= end || end > x.rows())
        throw std::invalid_argument("slice_rows [" + std::to_string(begin) + "," + std::to_string(end) +
                                    ") out of range for " + shape_str(x.shape()));
    const std::size_t n = x.cols(), m = end - begin;
    std::vector<double> out(x.data().begin() + static_cast<std::ptrdiff_t>(begin * n),
                            x.data().begin() + static_cast<std::ptrdiff_t>(end * n));
    return detail::make_op({m, n}, std::move(out), {x}, [begin, n](detail::Node& self) {
        detail::Node* p = self.parents[0].get();
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[begin * n + i] += self.grad[i];
    });
}

// Mean token-level cross entropy in nats: -(1/s) sum_i log softmax(logits_i)[target_i].
// Fused log-sum-exp keeps the forward stable; backward recomputes the softmax.
inline Tensor cross_entropy_rows(const Tensor& logits, const std::vector<int>& targets) {
    if (logits.rank() != 2) throw std::invalid_argument("cross_entropy_rows expects 2-d logits");
    const std::size_t s = logits.rows(), v = logits.cols();
    if (targets.size() != s)
        throw std::invalid_argument("cross_entropy_rows: " + std::to_string(targets.size()) +
                                    " targets for " + std::to_string(s) + " rows");
    double total = 0.0;
    for (std::size_t i = 0; i < s; ++i) {
        const int tgt = targets[i];
        if (tgt < 0 || static_cast<std::size_t>(tgt) >= v)
            throw std::invalid_argument("cross_entropy_rows: target id " + std::to_string(tgt) + " out of range");
        const double* row = logits.data().data() + i * v;
        double mx = row[0];
        for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
        double se = 0.0;
        for (std::size_t j = 0; j < v; ++j) se += std::exp(row[j] - mx);
        total += mx + std::log(se) - row[static_cast<std::size_t>(tgt)];
    }
    total /= static_cast<double>(s);
    return detail::make_op({1}, {total}, {logits}, [s, v, targets](detail::Node& self) {
        detail::Node* p = self.parents[0].get();
        if (!p->requires_grad) return;
        p->ensure_grad();
        const double g = self.grad[0] / static_cast<double>(s);
        for (std::size_t i = 0; i < s; ++i) {
            const double* row = p->data.data() + i * v;
            double mx = row[0];
            for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
            double se = 0.0;
            for (std::size_t j = 0; j < v; ++j) se += std::exp(row[j] - mx);
            double* dx = p->grad.data() + i * v;
            for (std::size_t j = 0; j < v; ++j) dx[j] += g * (std::exp(row[j] - mx) / se);
            dx[static_cast<std::size_t>(targets[i])] -= g;
        }
    });
}

// Reverse-mode sweep from a scalar loss. Fills the grad buffer of every
// reachable tensor with requires_grad, accumulating onto existing contents
// for leaf parameters (training loops call zero_grad between steps).
inline void backward(const Tensor& loss) {
    if (loss.numel() != 1)
        throw std::invalid_argument("backward requires a scalar loss, got " + shape_str(loss.shape()));
    detail::Node* root = loss.node().get();
    if (!root->requires_grad) return;  // nothing reachable requires gradients

    std::vector<detail::Node*> topo;
    std::unordered_set<detail::Node*> visited;
    struct Frame {
        detail::Node* n;
        std::size_t next;
    };
    std::vector<Frame> stack;
    stack.push_back({root, 0});
    visited.insert(root);
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next < f.n->parents.size()) {
            detail::Node* p = f.n->parents[f.next++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            topo.push_back(f.n);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad[0] += 1.0;
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        detail::Node* n = *it;
        if (n->backward_fn) {
            n->ensure_grad();
            n->backward_fn(*n);
        }
    }
}

}  // namespace promptrec

#endif
