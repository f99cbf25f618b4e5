// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "hlm/tensor.hpp"

namespace hlm {

// ---------------------------------------------------------------------------
// Broadcasting (numpy rules, right-aligned)
// ---------------------------------------------------------------------------

inline Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
    size_t r = std::max(a.size(), b.size());
    Shape out(r);
    for (size_t i = 0; i < r; ++i) {
        int64_t ad = i < r - a.size() ? 1 : a[i - (r - a.size())];
        int64_t bd = i < r - b.size() ? 1 : b[i - (r - b.size())];
        if (ad != bd && ad != 1 && bd != 1)
            throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
        out[i] = std::max(ad, bd);
    }
    return out;
}

namespace detail {

// Right-aligned element steps for iterating `shape` along `out`; 0 where the
// dimension is broadcast.
inline std::vector<int64_t> broadcast_steps(const Shape& out, const Shape& shape) {
    size_t r = out.size();
    std::vector<int64_t> steps(r, 0);
    int64_t stride = 1;
    for (size_t i = 0; i < shape.size(); ++i) {
        size_t d = shape.size() - 1 - i;       // dim of `shape`
        size_t od = r - 1 - i;                 // aligned dim of `out`
        steps[od] = (shape[d] == 1 && out[od] != 1) ? 0 : stride;
        stride *= shape[d];
    }
    return steps;
}

// Visits every element of `out`, yielding (iout, ia, ib) buffer offsets.
template <typename F>
void for_each_broadcast(const Shape& out, const Shape& a, const Shape& b, F&& f) {
    int64_t total = numel_of(out);
    if (a == out && b == out) {
        for (int64_t i = 0; i < total; ++i) f(i, i, i);
        return;
    }
    auto sa = broadcast_steps(out, a);
    auto sb = broadcast_steps(out, b);
    size_t r = out.size();
    std::vector<int64_t> idx(r, 0);
    int64_t ia = 0, ib = 0;
    for (int64_t i = 0; i < total; ++i) {
        f(i, ia, ib);
        for (size_t d = r; d-- > 0;) {
            ++idx[d];
            ia += sa[d];
            ib += sb[d];
            if (idx[d] < out[d]) break;
            ia -= sa[d] * out[d];
            ib -= sb[d] * out[d];
            idx[d] = 0;
        }
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise / broadcast arithmetic
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
    Shape out_shape = broadcast_shape(a.shape(), b.shape(), "add");
    std::vector<S> out(static_cast<size_t>(numel_of(out_shape)));
    {
        const S* pa = a.value().data();
        const S* pb = b.value().data();
        S* po = out.data();
        detail::for_each_broadcast(out_shape, a.shape(), b.shape(),
                                   [&](int64_t i, int64_t ia, int64_t ib) { po[i] = pa[ia] + pb[ib]; });
    }
    return make_op<S>(out_shape, std::move(out), {a, b}, [a, b, out_shape](Node<S>& o) {
        const S* g = o.grad.data();
        if (a.requires_grad()) {
            S* ga = Tensor<S>(a).grad().data();
            detail::for_each_broadcast(out_shape, a.shape(), b.shape(),
                                       [&](int64_t i, int64_t ia, int64_t) { ga[ia] += g[i]; });
        }
        if (b.requires_grad()) {
            S* gb = Tensor<S>(b).grad().data();
            detail::for_each_broadcast(out_shape, a.shape(), b.shape(),
                                       [&](int64_t i, int64_t, int64_t ib) { gb[ib] += g[i]; });
        }
    });
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
    Shape out_shape = broadcast_shape(a.shape(), b.shape(), "mul");
    std::vector<S> out(static_cast<size_t>(numel_of(out_shape)));
    {
        const S* pa = a.value().data();
        const S* pb = b.value().data();
        S* po = out.data();
        detail::for_each_broadcast(out_shape, a.shape(), b.shape(),
                                   [&](int64_t i, int64_t ia, int64_t ib) { po[i] = pa[ia] * pb[ib]; });
    }
    return make_op<S>(out_shape, std::move(out), {a, b}, [a, b, out_shape](Node<S>& o) {
        const S* g = o.grad.data();
        const S* pa = a.value().data();
        const S* pb = b.value().data();
        S* ga = a.requires_grad() ? Tensor<S>(a).grad().data() : nullptr;
        S* gb = b.requires_grad() ? Tensor<S>(b).grad().data() : nullptr;
        detail::for_each_broadcast(out_shape, a.shape(), b.shape(), [&](int64_t i, int64_t ia, int64_t ib) {
            if (ga) ga[ia] += g[i] * pb[ib];
            if (gb) gb[ib] += g[i] * pa[ia];
        });
    });
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, S c) {
    std::vector<S> out(a.value().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * c;
    return make_op<S>(a.shape(), std::move(out), {a}, [a, c](Node<S>& o) {
        if (!a.requires_grad()) return;
        S* ga = Tensor<S>(a).grad().data();
        const S* g = o.grad.data();
        for (size_t i = 0; i < o.grad.size(); ++i) ga[i] += g[i] * c;
    });
}

// ---------------------------------------------------------------------------
// Matrix multiplication kernels (row-parallel, fixed reduction order)
// ---------------------------------------------------------------------------

namespace detail {

template <typename S>
void mm_nn(const S* __restrict__ A, const S* __restrict__ B, S* __restrict__ C, int64_t m, int64_t k,
           int64_t n, bool accumulate) {
    parallel_for(m, m * k * n, [&](int64_t i0, int64_t i1) {
        for (int64_t i = i0; i < i1; ++i) {
            S* __restrict__ c = C + i * n;
            if (!accumulate) std::fill(c, c + n, S(0));
            const S* __restrict__ a = A + i * k;
            for (int64_t l = 0; l < k; ++l) {
                S av = a[l];
                const S* __restrict__ b = B + l * n;
                for (int64_t j = 0; j < n; ++j) c[j] += av * b[j];
            }
        }
    });
}

// C[m,n] (+)= A[m,k] * B[n,k]^T
template <typename S>
void mm_nt(const S* __restrict__ A, const S* __restrict__ B, S* __restrict__ C, int64_t m, int64_t k,
           int64_t n, bool accumulate) {
    parallel_for(m, m * k * n, [&](int64_t i0, int64_t i1) {
        for (int64_t i = i0; i < i1; ++i) {
            const S* __restrict__ a = A + i * k;
            S* __restrict__ c = C + i * n;
            for (int64_t j = 0; j < n; ++j) {
                const S* __restrict__ b = B + j * k;
                S acc = 0;
                for (int64_t l = 0; l < k; ++l) acc += a[l] * b[l];
                c[j] = accumulate ? c[j] + acc : acc;
            }
        }
    });
}

// C[k,n] (+)= A[m,k]^T * B[m,n]
template <typename S>
void mm_tn(const S* __restrict__ A, const S* __restrict__ B, S* __restrict__ C, int64_t m, int64_t k,
           int64_t n, bool accumulate) {
    parallel_for(k, m * k * n, [&](int64_t l0, int64_t l1) {
        for (int64_t l = l0; l < l1; ++l) {
            S* __restrict__ c = C + l * n;
            if (!accumulate) std::fill(c, c + n, S(0));
            for (int64_t i = 0; i < m; ++i) {
                S av = A[i * k + l];
                const S* __restrict__ b = B + i * n;
                for (int64_t j = 0; j < n; ++j) c[j] += av * b[j];
            }
        }
    });
}

struct MatmulDims {
    int64_t batch;  // leading batch count (1 when both rank-2)
    int64_t m, k, n;
    bool b_batched;
};

inline MatmulDims matmul_dims(const Shape& a, const Shape& b, bool b_transposed, const char* op) {
    if (a.size() < 2 || b.size() < 2)
        throw ShapeError(std::string(op) + ": operands must have rank >= 2, got " + shape_str(a) + " and " +
                         shape_str(b));
    MatmulDims d;
    d.m = a[a.size() - 2];
    d.k = a[a.size() - 1];
    int64_t bk = b_transposed ? b[b.size() - 1] : b[b.size() - 2];
    d.n = b_transposed ? b[b.size() - 2] : b[b.size() - 1];
    d.b_batched = b.size() > 2;
    if (d.b_batched && std::vector<int64_t>(a.begin(), a.end() - 2) != std::vector<int64_t>(b.begin(), b.end() - 2))
        throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
    check_shapes(bk == d.k, op, a, b);
    d.batch = 1;
    for (size_t i = 0; i + 2 < a.size(); ++i) d.batch *= a[i];
    return d;
}

}  // namespace detail

// a [..., m, k] times b; b is either [k, n] (applied to every batch) or
// [..., k, n] with identical leading dims.
template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
    auto d = detail::matmul_dims(a.shape(), b.shape(), false, "matmul");
    Shape out_shape(a.shape().begin(), a.shape().end() - 1);
    out_shape.push_back(d.n);
    std::vector<S> out(static_cast<size_t>(numel_of(out_shape)));
    const S* pa = a.value().data();
    const S* pb = b.value().data();
    if (!d.b_batched) {
        detail::mm_nn(pa, pb, out.data(), d.batch * d.m, d.k, d.n, false);
    } else {
        for (int64_t bi = 0; bi < d.batch; ++bi)
            detail::mm_nn(pa + bi * d.m * d.k, pb + bi * d.k * d.n, out.data() + bi * d.m * d.n, d.m, d.k,
                          d.n, false);
    }
    return make_op<S>(out_shape, std::move(out), {a, b}, [a, b, d](Node<S>& o) {
        const S* g = o.grad.data();
        const S* pa = a.value().data();
        const S* pb = b.value().data();
        if (a.requires_grad()) {
            S* ga = Tensor<S>(a).grad().data();
            if (!d.b_batched) {
                detail::mm_nt(g, pb, ga, d.batch * d.m, d.n, d.k, true);
            } else {
                for (int64_t bi = 0; bi < d.batch; ++bi)
                    detail::mm_nt(g + bi * d.m * d.n, pb + bi * d.k * d.n, ga + bi * d.m * d.k, d.m, d.n,
                                  d.k, true);
            }
        }
        if (b.requires_grad()) {
            S* gb = Tensor<S>(b).grad().data();
            if (!d.b_batched) {
                detail::mm_tn(pa, g, gb, d.batch * d.m, d.k, d.n, true);
            } else {
                for (int64_t bi = 0; bi < d.batch; ++bi)
                    detail::mm_tn(pa + bi * d.m * d.k, g + bi * d.m * d.n, gb + bi * d.k * d.n, d.m, d.k,
                                  d.n, true);
            }
        }
    });
}

// a [..., m, k] times b^T where b is [n, k] or [..., n, k]; the attention
// score kernel (q times k^T) without materializing a transpose.
template <typename S>
Tensor<S> matmul_nt(const Tensor<S>& a, const Tensor<S>& b) {
    auto d = detail::matmul_dims(a.shape(), b.shape(), true, "matmul_nt");
    Shape out_shape(a.shape().begin(), a.shape().end() - 1);
    out_shape.push_back(d.n);
    std::vector<S> out(static_cast<size_t>(numel_of(out_shape)));
    const S* pa = a.value().data();
    const S* pb = b.value().data();
    if (!d.b_batched) {
        detail::mm_nt(pa, pb, out.data(), d.batch * d.m, d.k, d.n, false);
    } else {
        for (int64_t bi = 0; bi < d.batch; ++bi)
            detail::mm_nt(pa + bi * d.m * d.k, pb + bi * d.n * d.k, out.data() + bi * d.m * d.n, d.m, d.k,
                          d.n, false);
    }
    return make_op<S>(out_shape, std::move(out), {a, b}, [a, b, d](Node<S>& o) {
        const S* g = o.grad.data();
        const S* pa = a.value().data();
        const S* pb = b.value().data();
        if (a.requires_grad()) {
            S* ga = Tensor<S>(a).grad().data();
            if (!d.b_batched) {
                detail::mm_nn(g, pb, ga, d.batch * d.m, d.n, d.k, true);
            } else {
                for (int64_t bi = 0; bi < d.batch; ++bi)
                    detail::mm_nn(g + bi * d.m * d.n, pb + bi * d.n * d.k, ga + bi * d.m * d.k, d.m, d.n,
                                  d.k, true);
            }
        }
        if (b.requires_grad()) {
            S* gb = Tensor<S>(b).grad().data();
            if (!d.b_batched) {
                detail::mm_tn(g, pa, gb, d.batch * d.m, d.n, d.k, true);
            } else {
                for (int64_t bi = 0; bi < d.batch; ++bi)
                    detail::mm_tn(g + bi * d.m * d.n, pa + bi * d.m * d.k, gb + bi * d.n * d.k, d.m, d.n,
                                  d.k, true);
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Softmax with additive mask, layer norm, GELU
// ---------------------------------------------------------------------------

// Softmax over the last axis. `mask` (optional) is additive, broadcastable to
// x (same rank, each dim equal or 1); masked logits carry -1e9 so their
// probability underflows to zero.
template <typename S>
Tensor<S> softmax_masked(const Tensor<S>& x, const Tensor<S>& mask = Tensor<S>()) {
    const Shape& xs = x.shape();
    if (xs.empty()) throw ShapeError("softmax: rank-0 input");
    int64_t cols = xs.back();
    int64_t rows = x.numel() / cols;

    std::vector<int64_t> msteps;
    int64_t mcol_step = 0;
    if (mask.defined()) {
        const Shape& ms = mask.shape();
        bool ok = ms.size() == xs.size();
        if (ok)
            for (size_t i = 0; i < ms.size(); ++i) ok = ok && (ms[i] == xs[i] || ms[i] == 1);
        if (!ok || ms.back() != cols)
            throw ShapeError("softmax: mask shape " + shape_str(ms) + " does not broadcast to " + shape_str(xs));
        msteps = detail::broadcast_steps(xs, ms);
        mcol_step = msteps.back();
    }

    std::vector<S> out(x.value().size());
    {
        const S* px = x.value().data();
        const S* pm = mask.defined() ? mask.value().data() : nullptr;
        S* po = out.data();
        size_t r = xs.size();
        std::vector<int64_t> idx(r, 0);
        int64_t moff = 0;
        for (int64_t row = 0; row < rows; ++row) {
            const S* xr = px + row * cols;
            S* orow = po + row * cols;
            S mx = -std::numeric_limits<S>::infinity();
            for (int64_t j = 0; j < cols; ++j) {
                S v = xr[j] + (pm ? pm[moff + j * mcol_step] : S(0));
                orow[j] = v;
                mx = std::max(mx, v);
            }
            S sum = 0;
            for (int64_t j = 0; j < cols; ++j) {
                S e = std::exp(orow[j] - mx);
                orow[j] = e;
                sum += e;
            }
            S inv = S(1) / sum;
            for (int64_t j = 0; j < cols; ++j) orow[j] *= inv;
            if (pm && r >= 2) {  // advance mask offset across leading dims
                for (size_t d = r - 1; d-- > 0;) {
                    ++idx[d];
                    moff += msteps[d];
                    if (idx[d] < xs[d]) break;
                    moff -= msteps[d] * xs[d];
                    idx[d] = 0;
                }
            }
        }
    }
    return make_op<S>(xs, std::move(out), {x, mask}, [x, cols, rows](Node<S>& o) {
        if (!x.requires_grad()) return;
        S* gx = Tensor<S>(x).grad().data();
        const S* g = o.grad.data();
        const S* p = o.value.data();
        for (int64_t row = 0; row < rows; ++row) {
            const S* gr = g + row * cols;
            const S* pr = p + row * cols;
            S dot = 0;
            for (int64_t j = 0; j < cols; ++j) dot += gr[j] * pr[j];
            S* gxr = gx + row * cols;
            for (int64_t j = 0; j < cols; ++j) gxr[j] += (gr[j] - dot) * pr[j];
        }
    });
}

// Layer normalization over the last axis with affine gamma/beta [H].
template <typename S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta, S eps = S(1e-5)) {
    const Shape& xs = x.shape();
    if (xs.empty()) throw ShapeError("layer_norm: rank-0 input");
    int64_t h = xs.back();
    check_shapes(gamma.rank() == 1 && gamma.dim(0) == h, "layer_norm", xs, gamma.shape());
    check_shapes(beta.rank() == 1 && beta.dim(0) == h, "layer_norm", xs, beta.shape());
    int64_t rows = x.numel() / h;

    std::vector<S> out(x.value().size());
    auto invstd = std::make_shared<std::vector<S>>(static_cast<size_t>(rows));
    auto means = std::make_shared<std::vector<S>>(static_cast<size_t>(rows));
    {
        const S* px = x.value().data();
        const S* pg = gamma.value().data();
        const S* pb = beta.value().data();
        S* po = out.data();
        for (int64_t r = 0; r < rows; ++r) {
            const S* xr = px + r * h;
            S mean = 0;
            for (int64_t j = 0; j < h; ++j) mean += xr[j];
            mean /= static_cast<S>(h);
            S var = 0;
            for (int64_t j = 0; j < h; ++j) {
                S d = xr[j] - mean;
                var += d * d;
            }
            var /= static_cast<S>(h);
            S is = S(1) / std::sqrt(var + eps);
            (*means)[r] = mean;
            (*invstd)[r] = is;
            S* orow = po + r * h;
            for (int64_t j = 0; j < h; ++j) orow[j] = (xr[j] - mean) * is * pg[j] + pb[j];
        }
    }
    return make_op<S>(xs, std::move(out), {x, gamma, beta}, [x, gamma, beta, h, rows, means, invstd](Node<S>& o) {
        const S* g = o.grad.data();
        const S* px = x.value().data();
        const S* pg = gamma.value().data();
        S* gx = x.requires_grad() ? Tensor<S>(x).grad().data() : nullptr;
        S* gg = gamma.requires_grad() ? Tensor<S>(gamma).grad().data() : nullptr;
        S* gb = beta.requires_grad() ? Tensor<S>(beta).grad().data() : nullptr;
        for (int64_t r = 0; r < rows; ++r) {
            const S* xr = px + r * h;
            const S* gr = g + r * h;
            S mean = (*means)[r], is = (*invstd)[r];
            S sum_gy = 0, sum_gyy = 0;
            for (int64_t j = 0; j < h; ++j) {
                S y = (xr[j] - mean) * is;
                S gy = gr[j] * pg[j];
                sum_gy += gy;
                sum_gyy += gy * y;
                if (gg) gg[j] += gr[j] * y;
                if (gb) gb[j] += gr[j];
            }
            if (gx) {
                S inv_h = S(1) / static_cast<S>(h);
                S* gxr = gx + r * h;
                for (int64_t j = 0; j < h; ++j) {
                    S y = (xr[j] - mean) * is;
                    S gy = gr[j] * pg[j];
                    gxr[j] += is * (gy - sum_gy * inv_h - y * sum_gyy * inv_h);
                }
            }
        }
    });
}

// Exact GELU: x * Phi(x).
template <typename S>
Tensor<S> gelu(const Tensor<S>& x) {
    constexpr double kInvSqrt2 = 0.7071067811865476;
    std::vector<S> out(x.value().size());
    for (size_t i = 0; i < out.size(); ++i) {
        double v = static_cast<double>(x.value()[i]);
        out[i] = static_cast<S>(v * 0.5 * (1.0 + std::erf(v * kInvSqrt2)));
    }
    return make_op<S>(x.shape(), std::move(out), {x}, [x](Node<S>& o) {
        if (!x.requires_grad()) return;
        constexpr double kInvSqrt2 = 0.7071067811865476;
        constexpr double kInvSqrt2Pi = 0.3989422804014327;
        S* gx = Tensor<S>(x).grad().data();
        const S* g = o.grad.data();
        const auto& xv = x.value();
        for (size_t i = 0; i < o.grad.size(); ++i) {
            double v = static_cast<double>(xv[i]);
            double phi = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
            double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
            gx[i] += g[i] * static_cast<S>(phi + v * pdf);
        }
    });
}

// ---------------------------------------------------------------------------
// Gather / dropout
// ---------------------------------------------------------------------------

// Row gather: table [V, H] indexed by ids -> [ids.shape..., H].
template <typename S>
Tensor<S> embedding(const Tensor<S>& table, const IntArray& ids) {
    if (table.rank() != 2) throw ShapeError("embedding: table must be rank-2, got " + shape_str(table.shape()));
    int64_t v = table.dim(0), h = table.dim(1);
    for (int32_t id : ids.data)
        if (id < 0 || id >= v)
            throw DataError("embedding: id " + std::to_string(id) + " outside table of " + std::to_string(v) +
                            " rows");
    Shape out_shape = ids.shape;
    out_shape.push_back(h);
    std::vector<S> out(static_cast<size_t>(ids.numel() * h));
    const S* pt = table.value().data();
    for (int64_t i = 0; i < ids.numel(); ++i)
        std::memcpy(out.data() + i * h, pt + static_cast<int64_t>(ids.data[static_cast<size_t>(i)]) * h,
                    sizeof(S) * static_cast<size_t>(h));
    auto idx = std::make_shared<std::vector<int32_t>>(ids.data);
    return make_op<S>(out_shape, std::move(out), {table}, [table, idx, h](Node<S>& o) {
        if (!table.requires_grad()) return;
        S* gt = Tensor<S>(table).grad().data();
        const S* g = o.grad.data();
        for (size_t i = 0; i < idx->size(); ++i) {
            S* row = gt + static_cast<int64_t>((*idx)[i]) * h;
            const S* gr = g + static_cast<int64_t>(i) * h;
            for (int64_t j = 0; j < h; ++j) row[j] += gr[j];
        }
    });
}

// Inverted dropout: kept activations scale by 1/(1-p) at train time, so
// inference callers skip the op entirely (no rescaling pass at eval time).
template <typename S>
Tensor<S> dropout(const Tensor<S>& x, double p, Rng& rng, bool train) {
    if (p < 0.0 || p >= 1.0) throw UsageError("dropout: rate must be in [0, 1), got " + std::to_string(p));
    if (!train || p == 0.0) return x;
    auto keep = std::make_shared<std::vector<uint8_t>>(x.value().size());
    S inv = static_cast<S>(1.0 / (1.0 - p));
    std::vector<S> out(x.value().size());
    for (size_t i = 0; i < out.size(); ++i) {
        bool k = !rng.bernoulli(p);
        (*keep)[i] = k;
        out[i] = k ? x.value()[i] * inv : S(0);
    }
    return make_op<S>(x.shape(), std::move(out), {x}, [x, keep, inv](Node<S>& o) {
        if (!x.requires_grad()) return;
        S* gx = Tensor<S>(x).grad().data();
        const S* g = o.grad.data();
        for (size_t i = 0; i < o.grad.size(); ++i)
            if ((*keep)[i]) gx[i] += g[i] * inv;
    });
}

// ---------------------------------------------------------------------------
// Shape ops: concat, reshape, permute, slice
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> concat(const std::vector<Tensor<S>>& xs, int axis) {
    if (xs.empty()) throw ShapeError("concat: no inputs");
    const Shape& s0 = xs[0].shape();
    int r = static_cast<int>(s0.size());
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r) throw ShapeError("concat: axis out of range for " + shape_str(s0));
    Shape out_shape = s0;
    int64_t total_axis = 0;
    for (const auto& x : xs) {
        const Shape& s = x.shape();
        bool ok = static_cast<int>(s.size()) == r;
        for (int i = 0; ok && i < r; ++i)
            if (i != axis && s[i] != s0[i]) ok = false;
        check_shapes(ok, "concat", s0, s);
        total_axis += s[axis];
    }
    out_shape[axis] = total_axis;

    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= s0[i];
    for (int i = axis + 1; i < r; ++i) inner *= s0[i];

    std::vector<S> out(static_cast<size_t>(numel_of(out_shape)));
    int64_t off = 0;  // running offset along the concat axis
    for (const auto& x : xs) {
        int64_t ai = x.shape()[axis];
        for (int64_t o = 0; o < outer; ++o)
            std::memcpy(out.data() + (o * total_axis + off) * inner, x.value().data() + o * ai * inner,
                        sizeof(S) * static_cast<size_t>(ai * inner));
        off += ai;
    }

    std::vector<Tensor<S>> parents = xs;
    auto bwd = [parents, axis, outer, inner, total_axis](Node<S>& o) {
        const S* g = o.grad.data();
        int64_t off = 0;
        for (const auto& x : parents) {
            int64_t ai = x.shape()[axis];
            if (x.requires_grad()) {
                S* gx = Tensor<S>(x).grad().data();
                for (int64_t ou = 0; ou < outer; ++ou) {
                    const S* src = g + (ou * total_axis + off) * inner;
                    S* dst = gx + ou * ai * inner;
                    for (int64_t i = 0; i < ai * inner; ++i) dst[i] += src[i];
                }
            }
            off += ai;
        }
    };
    // make_op takes an initializer_list; build the node manually for a vector.
    auto n = std::make_shared<Node<S>>();
    n->shape = std::move(out_shape);
    n->value = std::move(out);
    bool rg = false;
    if (grad_mode())
        for (const auto& p : xs)
            if (p.requires_grad()) rg = true;
    n->requires_grad = rg;
    if (rg) {
        for (const auto& p : xs) n->parents.push_back(p.node());
        n->backward_fn = bwd;
    }
    return Tensor<S>(std::move(n));
}

template <typename S>
Tensor<S> reshape(const Tensor<S>& x, Shape new_shape) {
    int64_t known = 1;
    int infer = -1;
    for (size_t i = 0; i < new_shape.size(); ++i) {
        if (new_shape[i] == -1) {
            if (infer >= 0) throw ShapeError("reshape: more than one -1 in " + shape_str(new_shape));
            infer = static_cast<int>(i);
        } else {
            known *= new_shape[i];
        }
    }
    if (infer >= 0) new_shape[static_cast<size_t>(infer)] = x.numel() / known;
    if (numel_of(new_shape) != x.numel())
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(new_shape));
    std::vector<S> out = x.value();
    return make_op<S>(new_shape, std::move(out), {x}, [x](Node<S>& o) {
        if (!x.requires_grad()) return;
        S* gx = Tensor<S>(x).grad().data();
        const S* g = o.grad.data();
        for (size_t i = 0; i < o.grad.size(); ++i) gx[i] += g[i];
    });
}

template <typename S>
Tensor<S> permute(const Tensor<S>& x, const std::vector<int>& perm) {
    int r = x.rank();
    std::vector<bool> used(static_cast<size_t>(r), false);
    if (static_cast<int>(perm.size()) != r) throw ShapeError("permute: order size mismatch for " + shape_str(x.shape()));
    for (int p : perm) {
        if (p < 0 || p >= r || used[static_cast<size_t>(p)])
            throw ShapeError("permute: invalid order for " + shape_str(x.shape()));
        used[static_cast<size_t>(p)] = true;
    }
    Shape out_shape(static_cast<size_t>(r));
    for (int i = 0; i < r; ++i) out_shape[static_cast<size_t>(i)] = x.dim(perm[static_cast<size_t>(i)]);

    // Input strides, then arranged in output-dim order.
    std::vector<int64_t> in_strides(static_cast<size_t>(r), 1);
    for (int i = r - 2; i >= 0; --i)
        in_strides[static_cast<size_t>(i)] = in_strides[static_cast<size_t>(i + 1)] * x.dim(i + 1);
    auto steps = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(r));
    for (int i = 0; i < r; ++i) (*steps)[static_cast<size_t>(i)] = in_strides[static_cast<size_t>(perm[static_cast<size_t>(i)])];

    auto traverse = [r, out_shape, steps](int64_t total, auto&& f) {
        std::vector<int64_t> idx(static_cast<size_t>(r), 0);
        int64_t src = 0;
        for (int64_t i = 0; i < total; ++i) {
            f(i, src);
            for (int d = r; d-- > 0;) {
                ++idx[static_cast<size_t>(d)];
                src += (*steps)[static_cast<size_t>(d)];
                if (idx[static_cast<size_t>(d)] < out_shape[static_cast<size_t>(d)]) break;
                src -= (*steps)[static_cast<size_t>(d)] * out_shape[static_cast<size_t>(d)];
                idx[static_cast<size_t>(d)] = 0;
            }
        }
    };

    std::vector<S> out(x.value().size());
    {
        const S* px = x.value().data();
        S* po = out.data();
        traverse(x.numel(), [&](int64_t i, int64_t src) { po[i] = px[src]; });
    }
    return make_op<S>(out_shape, std::move(out), {x}, [x, traverse](Node<S>& o) {
        if (!x.requires_grad()) return;
        S* gx = Tensor<S>(x).grad().data();
        const S* g = o.grad.data();
        traverse(static_cast<int64_t>(o.grad.size()), [&](int64_t i, int64_t src) { gx[src] += g[i]; });
    });
}

template <typename S>
Tensor<S> slice(const Tensor<S>& x, int axis, int64_t start, int64_t len) {
    int r = x.rank();
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r) throw ShapeError("slice: axis out of range for " + shape_str(x.shape()));
    int64_t d = x.dim(axis);
    if (start < 0 || len < 0 || start + len > d)
        throw ShapeError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + len) +
                         ") out of bounds for " + shape_str(x.shape()));
    Shape out_shape = x.shape();
    out_shape[static_cast<size_t>(axis)] = len;
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= x.dim(i);
    for (int i = axis + 1; i < r; ++i) inner *= x.dim(i);

    std::vector<S> out(static_cast<size_t>(numel_of(out_shape)));
    for (int64_t o = 0; o < outer; ++o)
        std::memcpy(out.data() + o * len * inner, x.value().data() + (o * d + start) * inner,
                    sizeof(S) * static_cast<size_t>(len * inner));
    return make_op<S>(out_shape, std::move(out), {x}, [x, outer, inner, d, start, len](Node<S>& o) {
        if (!x.requires_grad()) return;
        S* gx = Tensor<S>(x).grad().data();
        const S* g = o.grad.data();
        for (int64_t ou = 0; ou < outer; ++ou) {
            S* dst = gx + (ou * d + start) * inner;
            const S* src = g + ou * len * inner;
            for (int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
        }
    });
}

// ---------------------------------------------------------------------------
// Reductions and loss
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> sum(const Tensor<S>& x) {
    S acc = 0;
    for (S v : x.value()) acc += v;
    return make_op<S>({1}, {acc}, {x}, [x](Node<S>& o) {
        if (!x.requires_grad()) return;
        S g = o.grad[0];
        S* gx = Tensor<S>(x).grad().data();
        for (int64_t i = 0; i < x.numel(); ++i) gx[i] += g;
    });
}

template <typename S>
Tensor<S> mean(const Tensor<S>& x) {
    S acc = 0;
    for (S v : x.value()) acc += v;
    S inv = S(1) / static_cast<S>(x.numel());
    return make_op<S>({1}, {acc * inv}, {x}, [x, inv](Node<S>& o) {
        if (!x.requires_grad()) return;
        S g = o.grad[0] * inv;
        S* gx = Tensor<S>(x).grad().data();
        for (int64_t i = 0; i < x.numel(); ++i) gx[i] += g;
    });
}

inline constexpr int32_t kIgnoreIndex = -100;

// Mean cross entropy over rows whose label != ignore_index. Returns a
// detached zero scalar when every label is ignored.
template <typename S>
Tensor<S> cross_entropy(const Tensor<S>& logits, const IntArray& labels, int32_t ignore_index = kIgnoreIndex) {
    const Shape& ls = logits.shape();
    if (ls.size() < 1) throw ShapeError("cross_entropy: rank-0 logits");
    Shape row_shape(ls.begin(), ls.end() - 1);
    if (labels.shape != row_shape && !(ls.size() == 1 && labels.numel() == 1))
        throw ShapeError("cross_entropy: labels " + shape_str(labels.shape) + " do not match logits " +
                         shape_str(ls));
    int64_t v = ls.back();
    int64_t rows = labels.numel();

    int64_t kept = 0;
    double total = 0;
    const S* pl = logits.value().data();
    for (int64_t r = 0; r < rows; ++r) {
        int32_t y = labels.data[static_cast<size_t>(r)];
        if (y == ignore_index) continue;
        if (y < 0 || y >= v)
            throw DataError("cross_entropy: label " + std::to_string(y) + " outside " + std::to_string(v) +
                            " classes");
        const S* row = pl + r * v;
        S mx = row[0];
        for (int64_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
        double sum = 0;
        for (int64_t j = 0; j < v; ++j) sum += std::exp(static_cast<double>(row[j] - mx));
        total += std::log(sum) + static_cast<double>(mx) - static_cast<double>(row[y]);
        ++kept;
    }
    if (kept == 0) return Tensor<S>::scalar(S(0));

    S loss = static_cast<S>(total / static_cast<double>(kept));
    auto lab = std::make_shared<std::vector<int32_t>>(labels.data);
    return make_op<S>({1}, {loss}, {logits}, [logits, lab, v, rows, kept, ignore_index](Node<S>& o) {
        if (!logits.requires_grad()) return;
        S g = o.grad[0] / static_cast<S>(kept);
        S* gl = Tensor<S>(logits).grad().data();
        const S* pl = logits.value().data();
        for (int64_t r = 0; r < rows; ++r) {
            int32_t y = (*lab)[static_cast<size_t>(r)];
            if (y == ignore_index) continue;
            const S* row = pl + r * v;
            S* grow = gl + r * v;
            S mx = row[0];
            for (int64_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
            S sum = 0;
            for (int64_t j = 0; j < v; ++j) sum += std::exp(row[j] - mx);
            S inv = S(1) / sum;
            for (int64_t j = 0; j < v; ++j) {
                S p = std::exp(row[j] - mx) * inv;
                grow[j] += g * (p - (j == y ? S(1) : S(0)));
            }
        }
    });
}

// Row-wise argmax over the last axis (not differentiated; metrics only).
template <typename S>
IntArray argmax_last(const Tensor<S>& x) {
    int64_t v = x.shape().back();
    int64_t rows = x.numel() / v;
    Shape out_shape(x.shape().begin(), x.shape().end() - 1);
    if (out_shape.empty()) out_shape = {1};
    std::vector<int32_t> out(static_cast<size_t>(rows));
    const S* px = x.value().data();
    for (int64_t r = 0; r < rows; ++r) {
        const S* row = px + r * v;
        int64_t best = 0;
        for (int64_t j = 1; j < v; ++j)
            if (row[j] > row[best]) best = j;
        out[static_cast<size_t>(r)] = static_cast<int32_t>(best);
    }
    return IntArray(out_shape, std::move(out));
}

// Elementwise max over axis 1 of x [N, C, H], restricted to columns with
// col_mask set. Rows with no allowed column must have row_required unset
// (padding slots); they produce zeros. Ties resolve to the lowest column.
template <typename S>
Tensor<S> masked_max_rows(const Tensor<S>& x, const std::vector<uint8_t>& col_mask,
                          const std::vector<uint8_t>& row_required) {
    if (x.rank() != 3) throw ShapeError("masked_max_rows: want rank-3, got " + shape_str(x.shape()));
    int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2);
    if (static_cast<int64_t>(col_mask.size()) != n * c || static_cast<int64_t>(row_required.size()) != n)
        throw ShapeError("masked_max_rows: mask sizes do not match " + shape_str(x.shape()));
    std::vector<S> out(static_cast<size_t>(n * h), S(0));
    auto arg = std::make_shared<std::vector<int32_t>>(static_cast<size_t>(n * h), -1);
    const S* px = x.value().data();
    for (int64_t i = 0; i < n; ++i) {
        bool any = false;
        for (int64_t j = 0; j < c; ++j) {
            if (!col_mask[static_cast<size_t>(i * c + j)]) continue;
            const S* row = px + (i * c + j) * h;
            if (!any) {
                for (int64_t k = 0; k < h; ++k) {
                    out[static_cast<size_t>(i * h + k)] = row[k];
                    (*arg)[static_cast<size_t>(i * h + k)] = static_cast<int32_t>(j);
                }
                any = true;
            } else {
                for (int64_t k = 0; k < h; ++k) {
                    if (row[k] > out[static_cast<size_t>(i * h + k)]) {
                        out[static_cast<size_t>(i * h + k)] = row[k];
                        (*arg)[static_cast<size_t>(i * h + k)] = static_cast<int32_t>(j);
                    }
                }
            }
        }
        if (!any && row_required[static_cast<size_t>(i)])
            throw ShapeError("masked_max_rows: real word with zero real characters at row " + std::to_string(i));
    }
    return make_op<S>({n, h}, std::move(out), {x}, [x, arg, c, h](Node<S>& o) {
        if (!x.requires_grad()) return;
        S* gx = Tensor<S>(x).grad().data();
        const S* g = o.grad.data();
        int64_t n = x.dim(0);
        for (int64_t i = 0; i < n; ++i)
            for (int64_t k = 0; k < h; ++k) {
                int32_t j = (*arg)[static_cast<size_t>(i * h + k)];
                if (j >= 0) gx[(i * c + j) * h + k] += g[i * h + k];
            }
    });
}

}  // namespace hlm
