#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "sharnn/gemm.hpp"
#include "sharnn/rng.hpp"
#include "sharnn/tape.hpp"
#include "sharnn/tensor.hpp"

// Primitive tensor operations. Every op computes its value eagerly; when a
// tape is supplied and some input carries requires_grad, the op appends one
// backward record that accumulates (+=) into its inputs' gradients. Gradients
// of repeated uses therefore sum naturally. Passing tape == nullptr runs the
// same computation without any recording (inference mode).

namespace sharnn {

namespace detail {

template <class S>
void require_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
}

template <class S>
void require_rank(const Tensor<S>& t, int64_t rank, const char* op) {
    if (t.rank() != rank) {
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + shape_str(t.shape()));
    }
}

template <class S>
bool wants_grad(const Tape<S>* tape, std::initializer_list<const Tensor<S>*> inputs) {
    if (!tape) return false;
    for (const Tensor<S>* t : inputs)
        if (t->requires_grad()) return true;
    return false;
}

}  // namespace detail

// ------------------------------ elementwise -------------------------------

template <class S>
Tensor<S> add(Tape<S>* tape, const Tensor<S>& a, const Tensor<S>& b) {
    detail::require_same_shape(a, b, "add");
    Tensor<S> out = Tensor<S>::zeros(a.shape());
    auto av = a.value(), bv = b.value();
    auto ov = out.value();
    for (int64_t i = 0; i < out.numel(); ++i) ov[i] = av[i] + bv[i];
    if (detail::wants_grad(tape, {&a, &b})) {
        out.set_requires_grad(true);
        tape->record([a, b, out]() mutable {
            auto dy = out.ensure_grad();
            if (a.requires_grad()) {
                auto da = a.ensure_grad();
                for (int64_t i = 0; i < out.numel(); ++i) da[i] += dy[i];
            }
            if (b.requires_grad()) {
                auto db = b.ensure_grad();
                for (int64_t i = 0; i < out.numel(); ++i) db[i] += dy[i];
            }
        });
    }
    return out;
}

template <class S>
Tensor<S> sub(Tape<S>* tape, const Tensor<S>& a, const Tensor<S>& b) {
    detail::require_same_shape(a, b, "sub");
    Tensor<S> out = Tensor<S>::zeros(a.shape());
    auto av = a.value(), bv = b.value();
    auto ov = out.value();
    for (int64_t i = 0; i < out.numel(); ++i) ov[i] = av[i] - bv[i];
    if (detail::wants_grad(tape, {&a, &b})) {
        out.set_requires_grad(true);
        tape->record([a, b, out]() mutable {
            auto dy = out.ensure_grad();
            if (a.requires_grad()) {
                auto da = a.ensure_grad();
                for (int64_t i = 0; i < out.numel(); ++i) da[i] += dy[i];
            }
            if (b.requires_grad()) {
                auto db = b.ensure_grad();
                for (int64_t i = 0; i < out.numel(); ++i) db[i] -= dy[i];
            }
        });
    }
    return out;
}

template <class S>
Tensor<S> mul(Tape<S>* tape, const Tensor<S>& a, const Tensor<S>& b) {
    detail::require_same_shape(a, b, "mul");
    Tensor<S> out = Tensor<S>::zeros(a.shape());
    auto av = a.value(), bv = b.value();
    auto ov = out.value();
    for (int64_t i = 0; i < out.numel(); ++i) ov[i] = av[i] * bv[i];
    if (detail::wants_grad(tape, {&a, &b})) {
        out.set_requires_grad(true);
        tape->record([a, b, out]() mutable {
            auto dy = out.ensure_grad();
            auto av2 = a.value(), bv2 = b.value();
            if (a.requires_grad()) {
                auto da = a.ensure_grad();
                for (int64_t i = 0; i < out.numel(); ++i) da[i] += dy[i] * bv2[i];
            }
            if (b.requires_grad()) {
                auto db = b.ensure_grad();
                for (int64_t i = 0; i < out.numel(); ++i) db[i] += dy[i] * av2[i];
            }
        });
    }
    return out;
}

template <class S>
Tensor<S> scalar_mul(Tape<S>* tape, const Tensor<S>& a, S factor) {
    Tensor<S> out = Tensor<S>::zeros(a.shape());
    auto av = a.value();
    auto ov = out.value();
    for (int64_t i = 0; i < out.numel(); ++i) ov[i] = av[i] * factor;
    if (detail::wants_grad(tape, {&a})) {
        out.set_requires_grad(true);
        tape->record([a, out, factor]() mutable {
            auto dy = out.ensure_grad();
            auto da = a.ensure_grad();
            for (int64_t i = 0; i < out.numel(); ++i) da[i] += dy[i] * factor;
        });
    }
    return out;
}

// Broadcast add of a length-C vector over every row of x (last axis = C).
template <class S>
Tensor<S> add_rowvec(Tape<S>* tape, const Tensor<S>& x, const Tensor<S>& b) {
    const int64_t cols = x.cols(), rows = x.rows();
    if (b.numel() != cols) {
        throw ShapeError("add_rowvec: vector length " + std::to_string(b.numel()) +
                         " vs row width " + std::to_string(cols));
    }
    Tensor<S> out = Tensor<S>::zeros(x.shape());
    auto xv = x.value(), bv = b.value();
    auto ov = out.value();
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cols; ++c) ov[r * cols + c] = xv[r * cols + c] + bv[c];
    if (detail::wants_grad(tape, {&x, &b})) {
        out.set_requires_grad(true);
        tape->record([x, b, out, rows, cols]() mutable {
            auto dy = out.ensure_grad();
            if (x.requires_grad()) {
                auto dx = x.ensure_grad();
                for (int64_t i = 0; i < rows * cols; ++i) dx[i] += dy[i];
            }
            if (b.requires_grad()) {
                auto db = b.ensure_grad();
                for (int64_t r = 0; r < rows; ++r)
                    for (int64_t c = 0; c < cols; ++c) db[c] += dy[r * cols + c];
            }
        });
    }
    return out;
}

// Broadcast multiply of a length-C vector over every row of x.
template <class S>
Tensor<S> mul_rowvec(Tape<S>* tape, const Tensor<S>& x, const Tensor<S>& g) {
    const int64_t cols = x.cols(), rows = x.rows();
    if (g.numel() != cols) {
        throw ShapeError("mul_rowvec: vector length " + std::to_string(g.numel()) +
                         " vs row width " + std::to_string(cols));
    }
    Tensor<S> out = Tensor<S>::zeros(x.shape());
    auto xv = x.value(), gv = g.value();
    auto ov = out.value();
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cols; ++c) ov[r * cols + c] = xv[r * cols + c] * gv[c];
    if (detail::wants_grad(tape, {&x, &g})) {
        out.set_requires_grad(true);
        tape->record([x, g, out, rows, cols]() mutable {
            auto dy = out.ensure_grad();
            auto xv2 = x.value(), gv2 = g.value();
            if (x.requires_grad()) {
                auto dx = x.ensure_grad();
                for (int64_t r = 0; r < rows; ++r)
                    for (int64_t c = 0; c < cols; ++c) dx[r * cols + c] += dy[r * cols + c] * gv2[c];
            }
            if (g.requires_grad()) {
                auto dg = g.ensure_grad();
                for (int64_t r = 0; r < rows; ++r)
                    for (int64_t c = 0; c < cols; ++c) dg[c] += dy[r * cols + c] * xv2[r * cols + c];
            }
        });
    }
    return out;
}

// -------------------------------- matmul ----------------------------------

// c[m x n] = a[m x k] * b[k x n]
template <class S>
Tensor<S> matmul(Tape<S>* tape, const Tensor<S>& a, const Tensor<S>& b) {
    detail::require_rank(a, 2, "matmul");
    detail::require_rank(b, 2, "matmul");
    const int64_t m = a.size(0), k = a.size(1), n = b.size(1);
    if (b.size(0) != k) {
        throw ShapeError("matmul: inner dimensions " + shape_str(a.shape()) + " * " +
                         shape_str(b.shape()));
    }
    Tensor<S> out = Tensor<S>::zeros({m, n});
    detail::gemm_nn(a.value().data(), b.value().data(), out.value().data(), m, k, n, false);
    if (detail::wants_grad(tape, {&a, &b})) {
        out.set_requires_grad(true);
        tape->record([a, b, out, m, k, n]() mutable {
            auto dy = out.ensure_grad();
            if (a.requires_grad()) {
                auto da = a.ensure_grad();
                detail::gemm_nt(dy.data(), b.value().data(), da.data(), m, n, k, true);
            }
            if (b.requires_grad()) {
                auto db = b.ensure_grad();
                detail::gemm_tn(a.value().data(), dy.data(), db.data(), k, m, n, true);
            }
        });
    }
    return out;
}

// c[m x n] = a[m x k] * b[n x k]^T  (b stored row-major, used transposed)
template <class S>
Tensor<S> matmul_nt(Tape<S>* tape, const Tensor<S>& a, const Tensor<S>& b) {
    detail::require_rank(a, 2, "matmul_nt");
    detail::require_rank(b, 2, "matmul_nt");
    const int64_t m = a.size(0), k = a.size(1), n = b.size(0);
    if (b.size(1) != k) {
        throw ShapeError("matmul_nt: inner dimensions " + shape_str(a.shape()) + " * " +
                         shape_str(b.shape()) + "^T");
    }
    Tensor<S> out = Tensor<S>::zeros({m, n});
    detail::gemm_nt(a.value().data(), b.value().data(), out.value().data(), m, k, n, false);
    if (detail::wants_grad(tape, {&a, &b})) {
        out.set_requires_grad(true);
        tape->record([a, b, out, m, k, n]() mutable {
            auto dy = out.ensure_grad();
            if (a.requires_grad()) {
                auto da = a.ensure_grad();
                detail::gemm_nn(dy.data(), b.value().data(), da.data(), m, n, k, true);
            }
            if (b.requires_grad()) {
                auto db = b.ensure_grad();
                detail::gemm_tn(dy.data(), a.value().data(), db.data(), n, m, k, true);
            }
        });
    }
    return out;
}

// ------------------------------ activations -------------------------------

template <class S>
Tensor<S> sigmoid(Tape<S>* tape, const Tensor<S>& x) {
    Tensor<S> out = Tensor<S>::zeros(x.shape());
    auto xv = x.value();
    auto ov = out.value();
    for (int64_t i = 0; i < out.numel(); ++i) {
        const S v = xv[i];
        if (v >= S(0)) {
            ov[i] = S(1) / (S(1) + std::exp(-v));
        } else {
            const S e = std::exp(v);
            ov[i] = e / (S(1) + e);
        }
    }
    if (detail::wants_grad(tape, {&x})) {
        out.set_requires_grad(true);
        tape->record([x, out]() mutable {
            auto dy = out.ensure_grad();
            auto dx = x.ensure_grad();
            auto ov2 = out.value();
            for (int64_t i = 0; i < out.numel(); ++i) dx[i] += dy[i] * ov2[i] * (S(1) - ov2[i]);
        });
    }
    return out;
}

template <class S>
Tensor<S> tanh_op(Tape<S>* tape, const Tensor<S>& x) {
    Tensor<S> out = Tensor<S>::zeros(x.shape());
    auto xv = x.value();
    auto ov = out.value();
    for (int64_t i = 0; i < out.numel(); ++i) ov[i] = std::tanh(xv[i]);
    if (detail::wants_grad(tape, {&x})) {
        out.set_requires_grad(true);
        tape->record([x, out]() mutable {
            auto dy = out.ensure_grad();
            auto dx = x.ensure_grad();
            auto ov2 = out.value();
            for (int64_t i = 0; i < out.numel(); ++i) dx[i] += dy[i] * (S(1) - ov2[i] * ov2[i]);
        });
    }
    return out;
}

namespace detail {

// Standard normal CDF via erfc; exact form, not the tanh approximation.
template <class S>
S normal_cdf(S x) {
    return S(0.5) * std::erfc(-x * S(std::numbers::sqrt2 / 2.0));
}

template <class S>
S normal_pdf(S x) {
    return S(std::exp(-0.5 * double(x) * double(x)) * 0.3989422804014326779);
}

}  // namespace detail

// gelu(x) = x * Phi(x), Phi the standard normal CDF.
template <class S>
Tensor<S> gelu(Tape<S>* tape, const Tensor<S>& x) {
    Tensor<S> out = Tensor<S>::zeros(x.shape());
    auto xv = x.value();
    auto ov = out.value();
    for (int64_t i = 0; i < out.numel(); ++i) ov[i] = xv[i] * detail::normal_cdf(xv[i]);
    if (detail::wants_grad(tape, {&x})) {
        out.set_requires_grad(true);
        tape->record([x, out]() mutable {
            auto dy = out.ensure_grad();
            auto dx = x.ensure_grad();
            auto xv2 = x.value();
            for (int64_t i = 0; i < out.numel(); ++i) {
                const S v = xv2[i];
                dx[i] += dy[i] * (detail::normal_cdf(v) + v * detail::normal_pdf(v));
            }
        });
    }
    return out;
}

// Max-subtracted softmax along `axis`. Slices along the axis each sum to 1.
template <class S>
Tensor<S> softmax(Tape<S>* tape, const Tensor<S>& x, int64_t axis) {
    if (axis < 0) axis += x.rank();
    if (axis < 0 || axis >= x.rank()) {
        throw ShapeError("softmax: axis " + std::to_string(axis) + " out of range for " +
                         shape_str(x.shape()));
    }
    const int64_t len = x.size(axis);
    int64_t outer = 1, inner = 1;
    for (int64_t i = 0; i < axis; ++i) outer *= x.size(i);
    for (int64_t i = axis + 1; i < x.rank(); ++i) inner *= x.size(i);

    Tensor<S> out = Tensor<S>::zeros(x.shape());
    auto xv = x.value();
    auto ov = out.value();
    for (int64_t o = 0; o < outer; ++o) {
        for (int64_t in = 0; in < inner; ++in) {
            const int64_t base = o * len * inner + in;
            S mx = xv[base];
            for (int64_t i = 1; i < len; ++i) mx = std::max(mx, xv[base + i * inner]);
            S sum = S(0);
            for (int64_t i = 0; i < len; ++i) {
                const S e = std::exp(xv[base + i * inner] - mx);
                ov[base + i * inner] = e;
                sum += e;
            }
            const S inv = S(1) / sum;
            for (int64_t i = 0; i < len; ++i) ov[base + i * inner] *= inv;
        }
    }
    if (detail::wants_grad(tape, {&x})) {
        out.set_requires_grad(true);
        tape->record([x, out, outer, len, inner]() mutable {
            auto dy = out.ensure_grad();
            auto dx = x.ensure_grad();
            auto ov2 = out.value();
            for (int64_t o = 0; o < outer; ++o) {
                for (int64_t in = 0; in < inner; ++in) {
                    const int64_t base = o * len * inner + in;
                    S dot = S(0);
                    for (int64_t i = 0; i < len; ++i)
                        dot += dy[base + i * inner] * ov2[base + i * inner];
                    for (int64_t i = 0; i < len; ++i) {
                        const int64_t idx = base + i * inner;
                        dx[idx] += ov2[idx] * (dy[idx] - dot);
                    }
                }
            }
        });
    }
    return out;
}

// Per-row layer normalization over the last axis with learned gain and bias.
// Uses the population variance; eps guards constant rows (output 0 there).
template <class S>
Tensor<S> layer_norm(Tape<S>* tape, const Tensor<S>& x, const Tensor<S>& gain,
                     const Tensor<S>& bias, S eps = S(1e-5)) {
    const int64_t cols = x.cols(), rows = x.rows();
    if (gain.numel() != cols || bias.numel() != cols) {
        throw ShapeError("layer_norm: gain/bias length vs row width " + std::to_string(cols));
    }
    Tensor<S> out = Tensor<S>::zeros(x.shape());
    std::vector<S> xhat(static_cast<size_t>(rows * cols));
    std::vector<S> istd(static_cast<size_t>(rows));
    auto xv = x.value(), gv = gain.value(), bv = bias.value();
    auto ov = out.value();
    for (int64_t r = 0; r < rows; ++r) {
        const S* row = xv.data() + r * cols;
        S mean = S(0);
        for (int64_t c = 0; c < cols; ++c) mean += row[c];
        mean /= S(cols);
        S var = S(0);
        for (int64_t c = 0; c < cols; ++c) {
            const S d = row[c] - mean;
            var += d * d;
        }
        var /= S(cols);
        const S is = S(1) / std::sqrt(var + eps);
        istd[static_cast<size_t>(r)] = is;
        for (int64_t c = 0; c < cols; ++c) {
            const S xh = (row[c] - mean) * is;
            xhat[static_cast<size_t>(r * cols + c)] = xh;
            ov[r * cols + c] = gv[c] * xh + bv[c];
        }
    }
    if (detail::wants_grad(tape, {&x, &gain, &bias})) {
        out.set_requires_grad(true);
        tape->record([x, gain, bias, out, xhat = std::move(xhat), istd = std::move(istd), rows,
                      cols]() mutable {
            auto dy = out.ensure_grad();
            auto gv2 = gain.value();
            if (x.requires_grad()) {
                auto dx = x.ensure_grad();
                for (int64_t r = 0; r < rows; ++r) {
                    S m1 = S(0), m2 = S(0);
                    for (int64_t c = 0; c < cols; ++c) {
                        const S cg = dy[r * cols + c] * gv2[c];
                        m1 += cg;
                        m2 += cg * xhat[static_cast<size_t>(r * cols + c)];
                    }
                    m1 /= S(cols);
                    m2 /= S(cols);
                    const S is = istd[static_cast<size_t>(r)];
                    for (int64_t c = 0; c < cols; ++c) {
                        const S cg = dy[r * cols + c] * gv2[c];
                        dx[r * cols + c] +=
                            is * (cg - m1 - xhat[static_cast<size_t>(r * cols + c)] * m2);
                    }
                }
            }
            if (gain.requires_grad()) {
                auto dg = gain.ensure_grad();
                for (int64_t r = 0; r < rows; ++r)
                    for (int64_t c = 0; c < cols; ++c)
                        dg[c] += dy[r * cols + c] * xhat[static_cast<size_t>(r * cols + c)];
            }
            if (bias.requires_grad()) {
                auto db = bias.ensure_grad();
                for (int64_t r = 0; r < rows; ++r)
                    for (int64_t c = 0; c < cols; ++c) db[c] += dy[r * cols + c];
            }
        });
    }
    return out;
}

// Inverted dropout: zeroes each element with probability p and scales the
// survivors by 1/(1-p), so the expected value is unchanged. Identity (the
// same tensor handle) when not training or p == 0.
template <class S>
Tensor<S> dropout(Tape<S>* tape, const Tensor<S>& x, double p, bool training, Rng* rng) {
    if (p < 0.0 || p >= 1.0) {
        throw ContractError("dropout: p must lie in [0, 1), got " + std::to_string(p));
    }
    if (!training || p == 0.0) return x;
    if (!rng) throw ContractError("dropout: rng required when training with p > 0");
    Tensor<S> out = Tensor<S>::zeros(x.shape());
    std::vector<S> mask(static_cast<size_t>(x.numel()));
    const S scale = S(1.0 / (1.0 - p));
    auto xv = x.value();
    auto ov = out.value();
    for (int64_t i = 0; i < x.numel(); ++i) {
        const S m = rng->bernoulli(p) ? S(0) : scale;
        mask[static_cast<size_t>(i)] = m;
        ov[i] = xv[i] * m;
    }
    if (detail::wants_grad(tape, {&x})) {
        out.set_requires_grad(true);
        tape->record([x, out, mask = std::move(mask)]() mutable {
            auto dy = out.ensure_grad();
            auto dx = x.ensure_grad();
            for (int64_t i = 0; i < out.numel(); ++i)
                dx[i] += dy[i] * mask[static_cast<size_t>(i)];
        });
    }
    return out;
}

// ------------------------- gather / slice / stack --------------------------

// Row gather: out[r] = table[ids[r]] * row_scale[ids[r]] (scale optional).
// Used both for embedding lookups (with per-vocabulary-row dropout masks) and
// for regrouping sequence tensors.
template <class S>
Tensor<S> embedding_rows(Tape<S>* tape, const Tensor<S>& table, std::vector<int32_t> ids,
                         const std::vector<S>* row_scale = nullptr) {
    detail::require_rank(table, 2, "embedding_rows");
    const int64_t vocab = table.size(0), width = table.size(1);
    for (int32_t id : ids) {
        if (id < 0 || id >= vocab) {
            throw DataError("embedding_rows: id " + std::to_string(id) + " outside vocabulary " +
                            std::to_string(vocab));
        }
    }
    if (row_scale && static_cast<int64_t>(row_scale->size()) != vocab) {
        throw ShapeError("embedding_rows: row_scale length vs vocabulary size");
    }
    const int64_t n = static_cast<int64_t>(ids.size());
    Tensor<S> out = Tensor<S>::zeros({n, width});
    auto tv = table.value();
    auto ov = out.value();
    for (int64_t r = 0; r < n; ++r) {
        const S scale = row_scale ? (*row_scale)[static_cast<size_t>(ids[r])] : S(1);
        const S* src = tv.data() + int64_t(ids[static_cast<size_t>(r)]) * width;
        S* dst = ov.data() + r * width;
        for (int64_t c = 0; c < width; ++c) dst[c] = src[c] * scale;
    }
    if (detail::wants_grad(tape, {&table})) {
        out.set_requires_grad(true);
        std::vector<S> scales;
        if (row_scale) scales = *row_scale;
        tape->record([table, out, ids = std::move(ids), scales = std::move(scales), n,
                      width]() mutable {
            auto dy = out.ensure_grad();
            auto dt = table.ensure_grad();
            for (int64_t r = 0; r < n; ++r) {
                const S scale = scales.empty() ? S(1) : scales[static_cast<size_t>(ids[r])];
                S* dst = dt.data() + int64_t(ids[static_cast<size_t>(r)]) * width;
                const S* src = dy.data() + r * width;
                for (int64_t c = 0; c < width; ++c) dst[c] += src[c] * scale;
            }
        });
    }
    return out;
}

// out = x[idx[0]], x[idx[1]], ... as rows.
template <class S>
Tensor<S> gather_rows(Tape<S>* tape, const Tensor<S>& x, std::vector<int64_t> idx) {
    const int64_t cols = x.cols(), rows = x.rows();
    for (int64_t i : idx) {
        if (i < 0 || i >= rows) throw ShapeError("gather_rows: row index out of range");
    }
    const int64_t n = static_cast<int64_t>(idx.size());
    Tensor<S> out = Tensor<S>::zeros({n, cols});
    auto xv = x.value();
    auto ov = out.value();
    for (int64_t r = 0; r < n; ++r) {
        const S* src = xv.data() + idx[static_cast<size_t>(r)] * cols;
        for (int64_t c = 0; c < cols; ++c) ov[r * cols + c] = src[c];
    }
    if (detail::wants_grad(tape, {&x})) {
        out.set_requires_grad(true);
        tape->record([x, out, idx = std::move(idx), n, cols]() mutable {
            auto dy = out.ensure_grad();
            auto dx = x.ensure_grad();
            for (int64_t r = 0; r < n; ++r) {
                S* dst = dx.data() + idx[static_cast<size_t>(r)] * cols;
                for (int64_t c = 0; c < cols; ++c) dst[c] += dy[r * cols + c];
            }
        });
    }
    return out;
}

// Contiguous block of rows [r0, r0 + nrows).
template <class S>
Tensor<S> slice_rows(Tape<S>* tape, const Tensor<S>& x, int64_t r0, int64_t nrows) {
    const int64_t cols = x.cols(), rows = x.rows();
    if (r0 < 0 || nrows < 0 || r0 + nrows > rows) {
        throw ShapeError("slice_rows: range [" + std::to_string(r0) + ", " +
                         std::to_string(r0 + nrows) + ") outside " + std::to_string(rows));
    }
    Tensor<S> out = Tensor<S>::zeros({nrows, cols});
    auto xv = x.value();
    auto ov = out.value();
    const S* src = xv.data() + r0 * cols;
    for (int64_t i = 0; i < nrows * cols; ++i) ov[i] = src[i];
    if (detail::wants_grad(tape, {&x})) {
        out.set_requires_grad(true);
        tape->record([x, out, r0, nrows, cols]() mutable {
            auto dy = out.ensure_grad();
            auto dx = x.ensure_grad();
            S* dst = dx.data() + r0 * cols;
            for (int64_t i = 0; i < nrows * cols; ++i) dst[i] += dy[i];
        });
    }
    return out;
}

// Column range [c0, c0 + ncols) of a rank-2 tensor.
template <class S>
Tensor<S> slice_cols(Tape<S>* tape, const Tensor<S>& x, int64_t c0, int64_t ncols) {
    detail::require_rank(x, 2, "slice_cols");
    const int64_t rows = x.size(0), cols = x.size(1);
    if (c0 < 0 || ncols < 0 || c0 + ncols > cols) {
        throw ShapeError("slice_cols: range outside row width " + std::to_string(cols));
    }
    Tensor<S> out = Tensor<S>::zeros({rows, ncols});
    auto xv = x.value();
    auto ov = out.value();
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < ncols; ++c) ov[r * ncols + c] = xv[r * cols + c0 + c];
    if (detail::wants_grad(tape, {&x})) {
        out.set_requires_grad(true);
        tape->record([x, out, c0, rows, cols, ncols]() mutable {
            auto dy = out.ensure_grad();
            auto dx = x.ensure_grad();
            for (int64_t r = 0; r < rows; ++r)
                for (int64_t c = 0; c < ncols; ++c) dx[r * cols + c0 + c] += dy[r * ncols + c];
        });
    }
    return out;
}

// Vertical concatenation of equally wide parts.
template <class S>
Tensor<S> stack_rows(Tape<S>* tape, const std::vector<Tensor<S>>& parts) {
    if (parts.empty()) throw ShapeError("stack_rows: no parts");
    const int64_t cols = parts.front().cols();
    int64_t rows = 0;
    for (const auto& p : parts) {
        if (p.cols() != cols) throw ShapeError("stack_rows: row width mismatch");
        rows += p.rows();
    }
    Tensor<S> out = Tensor<S>::zeros({rows, cols});
    auto ov = out.value();
    int64_t off = 0;
    bool rg = false;
    for (const auto& p : parts) {
        auto pv = p.value();
        for (int64_t i = 0; i < p.numel(); ++i) ov[off + i] = pv[i];
        off += p.numel();
        rg = rg || p.requires_grad();
    }
    if (tape && rg) {
        out.set_requires_grad(true);
        tape->record([parts, out]() mutable {
            auto dy = out.ensure_grad();
            int64_t off2 = 0;
            for (auto& p : parts) {
                if (p.requires_grad()) {
                    auto dp = p.ensure_grad();
                    for (int64_t i = 0; i < p.numel(); ++i) dp[i] += dy[off2 + i];
                }
                off2 += p.numel();
            }
        });
    }
    return out;
}

template <class S>
Tensor<S> concat_rows(Tape<S>* tape, const Tensor<S>& a, const Tensor<S>& b) {
    return stack_rows(tape, std::vector<Tensor<S>>{a, b});
}

// Splits each row of x into n_chunks equal parts and sums them:
// out[r, c] = sum_j x[r, j*C + c] with C = cols/n_chunks.
template <class S>
Tensor<S> sum_chunks(Tape<S>* tape, const Tensor<S>& x, int64_t n_chunks) {
    const int64_t rows = x.rows(), cols = x.cols();
    if (n_chunks <= 0 || cols % n_chunks != 0) {
        throw ShapeError("sum_chunks: row width " + std::to_string(cols) +
                         " not divisible into " + std::to_string(n_chunks) + " chunks");
    }
    const int64_t width = cols / n_chunks;
    Tensor<S> out = Tensor<S>::zeros({rows, width});
    auto xv = x.value();
    auto ov = out.value();
    for (int64_t r = 0; r < rows; ++r) {
        const S* row = xv.data() + r * cols;
        S* dst = ov.data() + r * width;
        for (int64_t j = 0; j < n_chunks; ++j)
            for (int64_t c = 0; c < width; ++c) dst[c] += row[j * width + c];
    }
    if (detail::wants_grad(tape, {&x})) {
        out.set_requires_grad(true);
        tape->record([x, out, rows, cols, width, n_chunks]() mutable {
            auto dy = out.ensure_grad();
            auto dx = x.ensure_grad();
            for (int64_t r = 0; r < rows; ++r) {
                const S* src = dy.data() + r * width;
                S* row = dx.data() + r * cols;
                for (int64_t j = 0; j < n_chunks; ++j)
                    for (int64_t c = 0; c < width; ++c) row[j * width + c] += src[c];
            }
        });
    }
    return out;
}

// ------------------------------- reductions -------------------------------

template <class S>
Tensor<S> sum_all(Tape<S>* tape, const Tensor<S>& x) {
    Tensor<S> out = Tensor<S>::zeros({});
    auto xv = x.value();
    double acc = 0.0;
    for (int64_t i = 0; i < x.numel(); ++i) acc += double(xv[i]);
    out.value()[0] = S(acc);
    if (detail::wants_grad(tape, {&x})) {
        out.set_requires_grad(true);
        tape->record([x, out]() mutable {
            const S dy = out.ensure_grad()[0];
            auto dx = x.ensure_grad();
            for (int64_t i = 0; i < x.numel(); ++i) dx[i] += dy;
        });
    }
    return out;
}

template <class S>
Tensor<S> mean_all(Tape<S>* tape, const Tensor<S>& x) {
    if (x.numel() == 0) throw ShapeError("mean_all: empty tensor");
    Tensor<S> out = sum_all(tape, x);
    return scalar_mul(tape, out, S(1) / S(x.numel()));
}

// Mean cross-entropy (natural log) of row-wise softmax(logits) against integer
// targets. Fused for numerical stability; the loss is averaged per position.
template <class S>
Tensor<S> cross_entropy_mean(Tape<S>* tape, const Tensor<S>& logits,
                             std::vector<int32_t> targets) {
    detail::require_rank(logits, 2, "cross_entropy_mean");
    const int64_t rows = logits.size(0), vocab = logits.size(1);
    if (static_cast<int64_t>(targets.size()) != rows) {
        throw ShapeError("cross_entropy_mean: " + std::to_string(targets.size()) +
                         " targets for " + std::to_string(rows) + " rows");
    }
    for (int32_t t : targets) {
        if (t < 0 || t >= vocab) throw ShapeError("cross_entropy_mean: target outside vocabulary");
    }
    std::vector<S> probs(static_cast<size_t>(rows * vocab));
    auto lv = logits.value();
    double acc = 0.0;
    for (int64_t r = 0; r < rows; ++r) {
        const S* row = lv.data() + r * vocab;
        S mx = row[0];
        for (int64_t v = 1; v < vocab; ++v) mx = std::max(mx, row[v]);
        S sum = S(0);
        for (int64_t v = 0; v < vocab; ++v) {
            const S e = std::exp(row[v] - mx);
            probs[static_cast<size_t>(r * vocab + v)] = e;
            sum += e;
        }
        const S inv = S(1) / sum;
        for (int64_t v = 0; v < vocab; ++v) probs[static_cast<size_t>(r * vocab + v)] *= inv;
        acc += -(double(row[targets[static_cast<size_t>(r)]] - mx) - std::log(double(sum)));
    }
    Tensor<S> out = Tensor<S>::zeros({});
    out.value()[0] = S(acc / double(rows));
    if (detail::wants_grad(tape, {&logits})) {
        out.set_requires_grad(true);
        tape->record([logits, out, probs = std::move(probs), targets = std::move(targets), rows,
                      vocab]() mutable {
            const S dy = out.ensure_grad()[0];
            auto dl = logits.ensure_grad();
            const S scale = dy / S(rows);
            for (int64_t r = 0; r < rows; ++r) {
                const S* p = probs.data() + r * vocab;
                S* dst = dl.data() + r * vocab;
                for (int64_t v = 0; v < vocab; ++v) dst[v] += p[v] * scale;
                dst[targets[static_cast<size_t>(r)]] -= scale;
            }
        });
    }
    return out;
}

}  // namespace sharnn
