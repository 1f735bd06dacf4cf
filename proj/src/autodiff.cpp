#include "revrank/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cassert>
#include <cmath>
#include <unordered_set>

#include "revrank/common.hpp"

namespace revrank::num {

namespace {

std::atomic<std::uint64_t> g_node_counter{0};

#ifndef NDEBUG
bool all_finite(const Tensor& t) {
    for (double v : t.values())
        if (!std::isfinite(v)) return false;
    return true;
}
#endif

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(op) + ": shapes " + a.shape_str() + " and " + b.shape_str() +
                         " do not match");
    }
}

// Splits a shape into [outer, dim, inner] around `axis`.
void axis_view(const std::vector<std::size_t>& shape, std::size_t axis, std::size_t& outer,
               std::size_t& dim, std::size_t& inner) {
    outer = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
    dim = shape[axis];
    inner = 1;
    for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
}

std::size_t normalize_axis(int axis, std::size_t rank) {
    int r = static_cast<int>(rank);
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r) throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
    return static_cast<std::size_t>(axis);
}

// C[b] (+)= opA(A[b]) * opB(B[b]); A is m x k (k x m if transA), B is k x n
// (n x k if transB). Row-parallel: each output row is written by one thread.
void matmul_kernel(const double* A, const double* B, double* C, std::size_t batch, std::size_t m,
                   std::size_t k, std::size_t n, bool transA, bool transB, bool accumulate) {
    const std::size_t a_sz = m * k, b_sz = k * n, c_sz = m * n;
#pragma omp parallel for schedule(static) collapse(2)
    for (std::size_t bt = 0; bt < batch; ++bt) {
        for (std::size_t i = 0; i < m; ++i) {
            const double* a = A + bt * a_sz;
            const double* b = B + bt * b_sz;
            double* c = C + bt * c_sz + i * n;
            if (!accumulate) std::fill(c, c + n, 0.0);
            if (!transB) {
                for (std::size_t kk = 0; kk < k; ++kk) {
                    const double av = transA ? a[kk * m + i] : a[i * k + kk];
                    if (av == 0.0) continue;
                    const double* brow = b + kk * n;
                    for (std::size_t j = 0; j < n; ++j) c[j] += av * brow[j];
                }
            } else {
                for (std::size_t j = 0; j < n; ++j) {
                    double acc = 0.0;
                    const double* bcol = b + j * k;
                    if (!transA) {
                        const double* arow = a + i * k;
                        for (std::size_t kk = 0; kk < k; ++kk) acc += arow[kk] * bcol[kk];
                    } else {
                        for (std::size_t kk = 0; kk < k; ++kk) acc += a[kk * m + i] * bcol[kk];
                    }
                    c[j] += acc;
                }
            }
        }
    }
}

}  // namespace

Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backprop) {
#ifndef NDEBUG
    assert(all_finite(value) && "non-finite value produced by forward op");
#endif
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->id = g_node_counter.fetch_add(1, std::memory_order_relaxed);
    n->parents.reserve(parents.size());
    bool needs = false;
    for (const Var& p : parents) {
        n->parents.push_back(p.node());
        needs = needs || p.requires_grad();
    }
    n->requires_grad = needs;
    if (needs) n->backprop = std::move(backprop);
    return Var(n);
}

Var Var::constant(Tensor v) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->id = g_node_counter.fetch_add(1, std::memory_order_relaxed);
    n->requires_grad = false;
    return Var(n);
}

Var Var::leaf(Tensor v, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->id = g_node_counter.fetch_add(1, std::memory_order_relaxed);
    n->requires_grad = requires_grad;
    return Var(n);
}

void backward(const Var& root) {
    if (root.value().numel() != 1) {
        throw ShapeError("backward expects a scalar root, got " + root.value().shape_str());
    }
    if (!root.requires_grad()) return;

    // Iterative post-order DFS over requires_grad nodes.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    visited.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    // Intermediate grads start at zero each call; leaf grads accumulate.
    for (Node* n : order) {
        const bool is_leaf = n->parents.empty();
        if (!is_leaf || n->grad.numel() != n->value.numel()) {
            n->grad = Tensor(n->value.shape());
        }
    }
    root.node()->grad[0] = 1.0;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop) n->backprop(*n);
    }
}

void zero_grad(std::vector<Var>& params) {
    for (Var& p : params) p.mutable_grad() = Tensor(p.value().shape());
}

// ---------------------------------------------------------------------------
// elementwise / arithmetic
// ---------------------------------------------------------------------------

Var add(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "add");
    Tensor out = a.value();
    const double* bv = b.value().data();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += bv[i];
    return make_node(std::move(out), {a, b}, [](Node& n) {
        for (int pi = 0; pi < 2; ++pi) {
            Node& p = *n.parents[pi];
            if (!p.requires_grad) continue;
            for (std::size_t i = 0; i < n.grad.numel(); ++i) p.grad[i] += n.grad[i];
        }
    });
}

Var add_bias(const Var& a, const Var& b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (bv.rank() != 1 || av.rank() < 1 || bv.dim(0) != av.shape().back()) {
        throw ShapeError("add_bias: bias " + bv.shape_str() + " does not match trailing dim of " +
                         av.shape_str());
    }
    const std::size_t d = bv.dim(0);
    const std::size_t rows = av.numel() / d;
    Tensor out = av;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j) out[r * d + j] += bv[j];
    return make_node(std::move(out), {a, b}, [rows, d](Node& n) {
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        if (pa.requires_grad)
            for (std::size_t i = 0; i < n.grad.numel(); ++i) pa.grad[i] += n.grad[i];
        if (pb.requires_grad)
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t j = 0; j < d; ++j) pb.grad[j] += n.grad[r * d + j];
    });
}

Var sub(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "sub");
    Tensor out = a.value();
    const double* bv = b.value().data();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= bv[i];
    return make_node(std::move(out), {a, b}, [](Node& n) {
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        for (std::size_t i = 0; i < n.grad.numel(); ++i) {
            if (pa.requires_grad) pa.grad[i] += n.grad[i];
            if (pb.requires_grad) pb.grad[i] -= n.grad[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "mul");
    Tensor out = a.value();
    const double* bv = b.value().data();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= bv[i];
    return make_node(std::move(out), {a, b}, [](Node& n) {
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        const Tensor& av = pa.value;
        const Tensor& bvv = pb.value;
        for (std::size_t i = 0; i < n.grad.numel(); ++i) {
            if (pa.requires_grad) pa.grad[i] += n.grad[i] * bvv[i];
            if (pb.requires_grad) pb.grad[i] += n.grad[i] * av[i];
        }
    });
}

Var scale(const Var& a, double s) {
    Tensor out = a.value();
    for (double& v : out.values()) v *= s;
    return make_node(std::move(out), {a}, [s](Node& n) {
        Node& p = *n.parents[0];
        for (std::size_t i = 0; i < n.grad.numel(); ++i) p.grad[i] += s * n.grad[i];
    });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var relu(const Var& a) {
    Tensor out = a.value();
    for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
    return make_node(std::move(out), {a}, [](Node& n) {
        Node& p = *n.parents[0];
        for (std::size_t i = 0; i < n.grad.numel(); ++i)
            if (p.value[i] > 0.0) p.grad[i] += n.grad[i];
    });
}

Var gelu(const Var& a) {
    static constexpr double kInvSqrt2 = 0.7071067811865475244;
    static constexpr double kInvSqrt2Pi = 0.3989422804014326779;
    Tensor out = a.value();
    for (double& v : out.values()) v = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
    return make_node(std::move(out), {a}, [](Node& n) {
        Node& p = *n.parents[0];
        for (std::size_t i = 0; i < n.grad.numel(); ++i) {
            const double x = p.value[i];
            const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
            const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
            p.grad[i] += n.grad[i] * (cdf + x * pdf);
        }
    });
}

Var sigmoid(const Var& a) {
    Tensor out = a.value();
    for (double& v : out.values()) v = 1.0 / (1.0 + std::exp(-v));
    return make_node(std::move(out), {a}, [](Node& n) {
        Node& p = *n.parents[0];
        for (std::size_t i = 0; i < n.grad.numel(); ++i) {
            const double y = n.value[i];
            p.grad[i] += n.grad[i] * y * (1.0 - y);
        }
    });
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

Var reshape(const Var& a, std::vector<std::size_t> shape) {
    if (Tensor::count(shape) != a.value().numel()) {
        throw ShapeError("reshape: cannot view " + a.value().shape_str() + " as " +
                         Tensor::shape_string(shape));
    }
    Tensor out(std::move(shape), a.value().values());
    return make_node(std::move(out), {a}, [](Node& n) {
        Node& p = *n.parents[0];
        for (std::size_t i = 0; i < n.grad.numel(); ++i) p.grad[i] += n.grad[i];
    });
}

namespace {
std::vector<std::size_t> strides_of(const std::vector<std::size_t>& shape) {
    std::vector<std::size_t> s(shape.size(), 1);
    for (std::size_t i = shape.size(); i-- > 1;) s[i - 1] = s[i] * shape[i];
    return s;
}

void permute_copy(const double* src, double* dst, const std::vector<std::size_t>& in_shape,
                  const std::vector<std::size_t>& axes, bool accumulate) {
    const std::size_t rank = in_shape.size();
    std::vector<std::size_t> out_shape(rank);
    for (std::size_t i = 0; i < rank; ++i) out_shape[i] = in_shape[axes[i]];
    const auto in_strides = strides_of(in_shape);
    const auto out_strides = strides_of(out_shape);
    const std::size_t total = Tensor::count(in_shape);
    // dst[out_idx] = src[in_idx]; walk output linearly.
    std::vector<std::size_t> coord(rank, 0);
    for (std::size_t o = 0; o < total; ++o) {
        std::size_t rem = o, src_off = 0;
        for (std::size_t i = 0; i < rank; ++i) {
            const std::size_t c = rem / out_strides[i];
            rem -= c * out_strides[i];
            src_off += c * in_strides[axes[i]];
        }
        if (accumulate)
            dst[o] += src[src_off];
        else
            dst[o] = src[src_off];
    }
}
}  // namespace

Var permute(const Var& a, const std::vector<std::size_t>& axes) {
    const auto& in_shape = a.value().shape();
    if (axes.size() != in_shape.size()) throw ShapeError("permute: axes rank mismatch");
    std::vector<std::size_t> out_shape(axes.size());
    std::vector<bool> seen(axes.size(), false);
    for (std::size_t i = 0; i < axes.size(); ++i) {
        if (axes[i] >= in_shape.size() || seen[axes[i]]) throw ShapeError("permute: invalid axes");
        seen[axes[i]] = true;
        out_shape[i] = in_shape[axes[i]];
    }
    Tensor out(out_shape);
    permute_copy(a.value().data(), out.data(), in_shape, axes, false);
    std::vector<std::size_t> inverse(axes.size());
    for (std::size_t i = 0; i < axes.size(); ++i) inverse[axes[i]] = i;
    return make_node(std::move(out), {a}, [inverse](Node& n) {
        Node& p = *n.parents[0];
        permute_copy(n.grad.data(), p.grad.data(), n.value.shape(), inverse, true);
    });
}

Var transpose_last2(const Var& a) {
    const std::size_t r = a.value().rank();
    if (r < 2) throw ShapeError("transpose_last2 needs rank >= 2, got " + a.value().shape_str());
    std::vector<std::size_t> axes(r);
    for (std::size_t i = 0; i < r; ++i) axes[i] = i;
    std::swap(axes[r - 2], axes[r - 1]);
    return permute(a, axes);
}

Var slice(const Var& a, std::size_t axis, std::size_t start, std::size_t len) {
    const auto& shape = a.value().shape();
    if (axis >= shape.size() || start + len > shape[axis]) {
        throw ShapeError("slice: range [" + std::to_string(start) + "," +
                         std::to_string(start + len) + ") out of bounds for " +
                         a.value().shape_str());
    }
    std::size_t outer, dim, inner;
    axis_view(shape, axis, outer, dim, inner);
    std::vector<std::size_t> out_shape = shape;
    out_shape[axis] = len;
    Tensor out(out_shape);
    const double* src = a.value().data();
    double* dst = out.data();
    for (std::size_t o = 0; o < outer; ++o)
        std::copy(src + (o * dim + start) * inner, src + (o * dim + start + len) * inner,
                  dst + o * len * inner);
    return make_node(std::move(out), {a}, [outer, dim, inner, start, len](Node& n) {
        Node& p = *n.parents[0];
        for (std::size_t o = 0; o < outer; ++o) {
            const double* g = n.grad.data() + o * len * inner;
            double* pg = p.grad.data() + (o * dim + start) * inner;
            for (std::size_t i = 0; i < len * inner; ++i) pg[i] += g[i];
        }
    });
}

Var concat(std::size_t axis, const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const auto& base = parts[0].value().shape();
    if (axis >= base.size()) throw ShapeError("concat: axis out of range");
    std::size_t total_dim = 0;
    for (const Var& p : parts) {
        const auto& s = p.value().shape();
        if (s.size() != base.size()) throw ShapeError("concat: rank mismatch");
        for (std::size_t i = 0; i < s.size(); ++i)
            if (i != axis && s[i] != base[i])
                throw ShapeError("concat: shapes " + parts[0].value().shape_str() + " and " +
                                 p.value().shape_str() + " differ off-axis");
        total_dim += s[axis];
    }
    std::vector<std::size_t> out_shape = base;
    out_shape[axis] = total_dim;
    std::size_t outer, dim_unused, inner;
    axis_view(out_shape, axis, outer, dim_unused, inner);
    Tensor out(out_shape);
    std::vector<std::size_t> dims;
    dims.reserve(parts.size());
    for (const Var& p : parts) dims.push_back(p.value().dim(axis));
    double* dst = out.data();
    for (std::size_t o = 0; o < outer; ++o) {
        std::size_t off = 0;
        for (std::size_t pi = 0; pi < parts.size(); ++pi) {
            const double* src = parts[pi].value().data() + o * dims[pi] * inner;
            std::copy(src, src + dims[pi] * inner, dst + (o * total_dim + off) * inner);
            off += dims[pi];
        }
    }
    return make_node(std::move(out), parts, [outer, inner, total_dim, dims](Node& n) {
        for (std::size_t o = 0; o < outer; ++o) {
            std::size_t off = 0;
            for (std::size_t pi = 0; pi < n.parents.size(); ++pi) {
                Node& p = *n.parents[pi];
                const double* g = n.grad.data() + (o * total_dim + off) * inner;
                if (p.requires_grad) {
                    double* pg = p.grad.data() + o * dims[pi] * inner;
                    for (std::size_t i = 0; i < dims[pi] * inner; ++i) pg[i] += g[i];
                }
                off += dims[pi];
            }
        }
    });
}

// ---------------------------------------------------------------------------
// matmul
// ---------------------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
    const auto& as = a.value().shape();
    const auto& bs = b.value().shape();
    if (as.size() < 2 || bs.size() != as.size()) {
        throw ShapeError("matmul: shapes " + a.value().shape_str() + " x " + b.value().shape_str());
    }
    for (std::size_t i = 0; i + 2 < as.size(); ++i)
        if (as[i] != bs[i])
            throw ShapeError("matmul: batch dims of " + a.value().shape_str() + " and " +
                             b.value().shape_str() + " differ");
    const std::size_t m = as[as.size() - 2], k = as[as.size() - 1];
    const std::size_t k2 = bs[bs.size() - 2], n = bs[bs.size() - 1];
    if (k != k2)
        throw ShapeError("matmul: inner dims of " + a.value().shape_str() + " and " +
                         b.value().shape_str() + " differ");
    std::size_t batch = 1;
    for (std::size_t i = 0; i + 2 < as.size(); ++i) batch *= as[i];
    std::vector<std::size_t> out_shape(as.begin(), as.end() - 2);
    out_shape.push_back(m);
    out_shape.push_back(n);
    Tensor out(out_shape);
    matmul_kernel(a.value().data(), b.value().data(), out.data(), batch, m, k, n, false, false,
                  false);
    return make_node(std::move(out), {a, b}, [batch, m, k, n](Node& nd) {
        Node& pa = *nd.parents[0];
        Node& pb = *nd.parents[1];
        if (pa.requires_grad)  // dA += dC * B^T
            matmul_kernel(nd.grad.data(), pb.value.data(), pa.grad.data(), batch, m, n, k, false,
                          true, true);
        if (pb.requires_grad)  // dB += A^T * dC
            matmul_kernel(pa.value.data(), nd.grad.data(), pb.grad.data(), batch, k, m, n, true,
                          false, true);
    });
}

// ---------------------------------------------------------------------------
// reductions / normalization
// ---------------------------------------------------------------------------

Var sum(const Var& a) {
    double acc = 0.0;
    for (double v : a.value().values()) acc += v;
    return make_node(Tensor::scalar(acc), {a}, [](Node& n) {
        Node& p = *n.parents[0];
        const double g = n.grad[0];
        for (std::size_t i = 0; i < p.grad.numel(); ++i) p.grad[i] += g;
    });
}

Var mean(const Var& a) {
    const double inv = 1.0 / static_cast<double>(a.value().numel());
    double acc = 0.0;
    for (double v : a.value().values()) acc += v;
    return make_node(Tensor::scalar(acc * inv), {a}, [inv](Node& n) {
        Node& p = *n.parents[0];
        const double g = n.grad[0] * inv;
        for (std::size_t i = 0; i < p.grad.numel(); ++i) p.grad[i] += g;
    });
}

Var softmax(const Var& a, int axis_in) {
    const std::size_t axis = normalize_axis(axis_in, a.value().rank());
    std::size_t outer, dim, inner;
    axis_view(a.value().shape(), axis, outer, dim, inner);
    Tensor out = a.value();
    double* y = out.data();
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            double* base = y + o * dim * inner + in;
            double mx = base[0];
            for (std::size_t d = 1; d < dim; ++d) mx = std::max(mx, base[d * inner]);
            double z = 0.0;
            for (std::size_t d = 0; d < dim; ++d) {
                base[d * inner] = std::exp(base[d * inner] - mx);
                z += base[d * inner];
            }
            const double invz = 1.0 / z;
            for (std::size_t d = 0; d < dim; ++d) base[d * inner] *= invz;
        }
    }
    return make_node(std::move(out), {a}, [outer, dim, inner](Node& n) {
        Node& p = *n.parents[0];
        const double* y = n.value.data();
        const double* g = n.grad.data();
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t in = 0; in < inner; ++in) {
                const std::size_t off = o * dim * inner + in;
                double dot = 0.0;
                for (std::size_t d = 0; d < dim; ++d) dot += y[off + d * inner] * g[off + d * inner];
                for (std::size_t d = 0; d < dim; ++d)
                    p.grad[off + d * inner] += y[off + d * inner] * (g[off + d * inner] - dot);
            }
        }
    });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
    const auto& shape = x.value().shape();
    const std::size_t d = shape.back();
    if (gain.value().rank() != 1 || gain.value().dim(0) != d || bias.value().rank() != 1 ||
        bias.value().dim(0) != d) {
        throw ShapeError("layer_norm: gain/bias must be 1-D of length " + std::to_string(d));
    }
    const std::size_t rows = x.value().numel() / d;
    Tensor out(shape);
    Tensor xhat(shape);        // cached for backward
    Tensor inv_sigma({rows});  // 1/sqrt(var+eps) per row
    const double* xv = x.value().data();
    const double* gv = gain.value().data();
    const double* bv = bias.value().data();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = xv + r * d;
        double mu = 0.0;
        for (std::size_t j = 0; j < d; ++j) mu += xr[j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + eps);
        inv_sigma[r] = inv;
        for (std::size_t j = 0; j < d; ++j) {
            const double h = (xr[j] - mu) * inv;
            xhat[r * d + j] = h;
            out[r * d + j] = h * gv[j] + bv[j];
        }
    }
    return make_node(std::move(out), {x, gain, bias},
                     [rows, d, xhat = std::move(xhat), inv_sigma = std::move(inv_sigma)](Node& n) {
                         Node& px = *n.parents[0];
                         Node& pg = *n.parents[1];
                         Node& pb = *n.parents[2];
                         const double* g = n.grad.data();
                         const double* gv = pg.value.data();
                         for (std::size_t r = 0; r < rows; ++r) {
                             const double* gr = g + r * d;
                             const double* hr = xhat.data() + r * d;
                             double sum_dh = 0.0, sum_dh_h = 0.0;
                             for (std::size_t j = 0; j < d; ++j) {
                                 const double dh = gr[j] * gv[j];
                                 sum_dh += dh;
                                 sum_dh_h += dh * hr[j];
                             }
                             const double invd = 1.0 / static_cast<double>(d);
                             if (px.requires_grad) {
                                 for (std::size_t j = 0; j < d; ++j) {
                                     const double dh = gr[j] * gv[j];
                                     px.grad[r * d + j] +=
                                         inv_sigma[r] * (dh - sum_dh * invd - hr[j] * sum_dh_h * invd);
                                 }
                             }
                             if (pg.requires_grad)
                                 for (std::size_t j = 0; j < d; ++j) pg.grad[j] += gr[j] * hr[j];
                             if (pb.requires_grad)
                                 for (std::size_t j = 0; j < d; ++j) pb.grad[j] += gr[j];
                         }
                     });
}

// ---------------------------------------------------------------------------
// dropout / lookup
// ---------------------------------------------------------------------------

Var dropout(const Var& x, double rate, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must be in [0,1)");
    if (rate == 0.0) return x;
    const double keep_scale = 1.0 / (1.0 - rate);
    Tensor mask(x.value().shape());
    for (double& m : mask.values()) m = rng.uniform() < rate ? 0.0 : keep_scale;
    Tensor out = x.value();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= mask[i];
    return make_node(std::move(out), {x}, [mask = std::move(mask)](Node& n) {
        Node& p = *n.parents[0];
        for (std::size_t i = 0; i < n.grad.numel(); ++i) p.grad[i] += n.grad[i] * mask[i];
    });
}

Var embedding_lookup(const Var& table, const std::vector<std::int64_t>& indices) {
    const Tensor& t = table.value();
    if (t.rank() != 2) throw ShapeError("embedding_lookup: table must be 2-D, got " + t.shape_str());
    const std::size_t v = t.dim(0), d = t.dim(1);
    Tensor out({indices.size(), d});
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const auto idx = indices[i];
        if (idx < 0 || static_cast<std::size_t>(idx) >= v)
            throw ShapeError("embedding_lookup: index " + std::to_string(idx) +
                             " out of range for table with " + std::to_string(v) + " rows");
        std::copy(t.data() + idx * d, t.data() + (idx + 1) * d, out.data() + i * d);
    }
    return make_node(std::move(out), {table}, [indices, d](Node& n) {
        Node& p = *n.parents[0];
        for (std::size_t i = 0; i < indices.size(); ++i) {
            double* pg = p.grad.data() + indices[i] * d;
            const double* g = n.grad.data() + i * d;
            for (std::size_t j = 0; j < d; ++j) pg[j] += g[j];
        }
    });
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

namespace {
void check_logits_labels(const Tensor& logits, const std::vector<std::int64_t>& labels) {
    if (logits.rank() != 2) throw ShapeError("loss: logits must be [batch, classes], got " + logits.shape_str());
    if (labels.size() != logits.dim(0))
        throw ShapeError("loss: " + std::to_string(labels.size()) + " labels for batch " +
                         std::to_string(logits.dim(0)));
    for (auto y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= logits.dim(1))
            throw ShapeError("loss: label " + std::to_string(y) + " out of range");
}
}  // namespace

Var cross_entropy(const Var& logits, const std::vector<std::int64_t>& labels,
                  const std::vector<double>& class_weights) {
    const Tensor& lg = logits.value();
    check_logits_labels(lg, labels);
    const std::size_t batch = lg.dim(0), classes = lg.dim(1);
    if (class_weights.size() != classes)
        throw ShapeError("cross_entropy: " + std::to_string(class_weights.size()) +
                         " class weights for " + std::to_string(classes) + " classes");
    Tensor probs({batch, classes});
    double loss = 0.0;
    for (std::size_t i = 0; i < batch; ++i) {
        const double* row = lg.data() + i * classes;
        double mx = row[0];
        for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, row[c]);
        double z = 0.0;
        for (std::size_t c = 0; c < classes; ++c) z += std::exp(row[c] - mx);
        const double logz = std::log(z) + mx;
        for (std::size_t c = 0; c < classes; ++c) probs[i * classes + c] = std::exp(row[c] - logz);
        loss += class_weights[labels[i]] * (logz - row[labels[i]]);
    }
    loss /= static_cast<double>(batch);
    return make_node(Tensor::scalar(loss), {logits},
                     [labels, class_weights, probs = std::move(probs), batch, classes](Node& n) {
                         Node& p = *n.parents[0];
                         const double g = n.grad[0] / static_cast<double>(batch);
                         for (std::size_t i = 0; i < batch; ++i) {
                             const double w = class_weights[labels[i]] * g;
                             for (std::size_t c = 0; c < classes; ++c) {
                                 double delta = probs[i * classes + c];
                                 if (static_cast<std::int64_t>(c) == labels[i]) delta -= 1.0;
                                 p.grad[i * classes + c] += w * delta;
                             }
                         }
                     });
}

Var label_smoothing_loss(const Var& logits, const std::vector<std::int64_t>& labels,
                         double epsilon) {
    const Tensor& lg = logits.value();
    check_logits_labels(lg, labels);
    if (epsilon < 0.0 || epsilon >= 1.0) throw ConfigError("label smoothing epsilon must be in [0,1)");
    const std::size_t batch = lg.dim(0), classes = lg.dim(1);
    const double off = epsilon / static_cast<double>(classes);
    const double on = 1.0 - epsilon + off;
    Tensor probs({batch, classes});
    double loss = 0.0;
    for (std::size_t i = 0; i < batch; ++i) {
        const double* row = lg.data() + i * classes;
        double mx = row[0];
        for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, row[c]);
        double z = 0.0;
        for (std::size_t c = 0; c < classes; ++c) z += std::exp(row[c] - mx);
        const double logz = std::log(z) + mx;
        for (std::size_t c = 0; c < classes; ++c) {
            probs[i * classes + c] = std::exp(row[c] - logz);
            const double t = static_cast<std::int64_t>(c) == labels[i] ? on : off;
            loss += t * (logz - row[c]);
        }
    }
    loss /= static_cast<double>(batch);
    return make_node(Tensor::scalar(loss), {logits},
                     [labels, on, off, probs = std::move(probs), batch, classes](Node& n) {
                         Node& p = *n.parents[0];
                         const double g = n.grad[0] / static_cast<double>(batch);
                         for (std::size_t i = 0; i < batch; ++i) {
                             for (std::size_t c = 0; c < classes; ++c) {
                                 const double t = static_cast<std::int64_t>(c) == labels[i] ? on : off;
                                 p.grad[i * classes + c] += g * (probs[i * classes + c] - t);
                             }
                         }
                     });
}

// ---------------------------------------------------------------------------
// attention
// ---------------------------------------------------------------------------

Var multi_head_attention(const Var& q, const Var& k, const Var& v, std::size_t n_heads,
                         double attn_dropout, Rng* rng) {
    const auto& qs = q.value().shape();
    const auto& ks = k.value().shape();
    const auto& vs = v.value().shape();
    if (qs.size() < 2 || ks.size() != qs.size() || vs.size() != qs.size())
        throw ShapeError("attention: rank mismatch");
    for (std::size_t i = 0; i + 2 < qs.size(); ++i)
        if (qs[i] != ks[i] || qs[i] != vs[i]) throw ShapeError("attention: leading dims differ");
    const std::size_t d_model = qs.back();
    if (ks.back() != d_model || vs.back() != d_model)
        throw ShapeError("attention: model dims differ");
    if (ks[ks.size() - 2] != vs[vs.size() - 2])
        throw ShapeError("attention: key/value lengths differ");
    if (n_heads == 0 || d_model % n_heads != 0)
        throw ConfigError("attention: " + std::to_string(n_heads) + " heads do not divide width " +
                          std::to_string(d_model));
    const std::size_t tq = qs[qs.size() - 2], tk = ks[ks.size() - 2];
    const std::size_t dh = d_model / n_heads;
    std::size_t b = 1;
    for (std::size_t i = 0; i + 2 < qs.size(); ++i) b *= qs[i];

    auto split_heads = [&](const Var& x, std::size_t t) {
        Var r = reshape(x, {b, t, n_heads, dh});
        r = permute(r, {0, 2, 1, 3});  // [b, h, t, dh]
        return reshape(r, {b * n_heads, t, dh});
    };
    Var qh = split_heads(q, tq);
    Var kh = split_heads(k, tk);
    Var vh = split_heads(v, tk);

    Var scores = scale(matmul(qh, transpose_last2(kh)), 1.0 / std::sqrt(static_cast<double>(dh)));
    Var weights = softmax(scores, -1);
    if (attn_dropout > 0.0 && rng != nullptr) weights = dropout(weights, attn_dropout, *rng);
    Var ctx = matmul(weights, vh);  // [b*h, tq, dh]

    Var merged = reshape(ctx, {b, n_heads, tq, dh});
    merged = permute(merged, {0, 2, 1, 3});
    std::vector<std::size_t> out_shape(qs.begin(), qs.end() - 2);
    out_shape.push_back(tq);
    out_shape.push_back(d_model);
    return reshape(merged, out_shape);
}

Var chunked_intersample_attention(const Var& x, std::size_t page_len) {
    const auto& s = x.value().shape();
    if (s.size() != 3)
        throw ShapeError("chunked intersample attention expects [batch, tokens, dim], got " +
                         x.value().shape_str());
    const std::size_t b = s[0], n = s[1], d = s[2];
    if (page_len == 0 || b % page_len != 0)
        throw ShapeError("chunked intersample attention: batch " + std::to_string(b) +
                         " not divisible by page length " + std::to_string(page_len));
    const std::size_t chunks = b / page_len;
    const std::size_t width = n * d;
    // One batched attention over [chunks, page_len, n*d]; row-major layout makes
    // the chunk reshape a pure view, so this matches the per-chunk loop exactly.
    Var u = reshape(x, {chunks, page_len, width});
    Var scores = scale(matmul(u, transpose_last2(u)), 1.0 / std::sqrt(static_cast<double>(width)));
    Var weights = softmax(scores, -1);
    Var y = matmul(weights, u);
    return reshape(y, {b, n, d});
}

}  // namespace revrank::num
