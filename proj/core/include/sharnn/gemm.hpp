#pragma once

#include <cstdint>

#ifdef SHARNN_USE_EIGEN
#include <Eigen/Core>
#endif

namespace sharnn::detail {

// Raw row-major GEMM kernels used by the matmul ops and their backward
// passes. When `accumulate` is false the output is overwritten, otherwise the
// product is added to it. Single-threaded by design: results must not depend
// on any worker count.

#ifdef SHARNN_USE_EIGEN

template <class S>
using EigenMap =
    Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <class S>
using EigenCMap =
    Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// c[m x n] = a[m x k] * b[k x n]
template <class S>
void gemm_nn(const S* a, const S* b, S* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
    EigenCMap<S> ma(a, m, k), mb(b, k, n);
    EigenMap<S> mc(c, m, n);
    if (accumulate) mc.noalias() += ma * mb;
    else mc.noalias() = ma * mb;
}

// c[m x n] = a[m x k] * b[n x k]^T
template <class S>
void gemm_nt(const S* a, const S* b, S* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
    EigenCMap<S> ma(a, m, k), mb(b, n, k);
    EigenMap<S> mc(c, m, n);
    if (accumulate) mc.noalias() += ma * mb.transpose();
    else mc.noalias() = ma * mb.transpose();
}

// c[m x n] = a[k x m]^T * b[k x n]
template <class S>
void gemm_tn(const S* a, const S* b, S* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
    EigenCMap<S> ma(a, k, m), mb(b, k, n);
    EigenMap<S> mc(c, m, n);
    if (accumulate) mc.noalias() += ma.transpose() * mb;
    else mc.noalias() = ma.transpose() * mb;
}

#else

template <class S>
void gemm_nn(const S* a, const S* b, S* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
    for (int64_t i = 0; i < m; ++i) {
        S* crow = c + i * n;
        if (!accumulate)
            for (int64_t j = 0; j < n; ++j) crow[j] = S(0);
        for (int64_t p = 0; p < k; ++p) {
            const S av = a[i * k + p];
            const S* brow = b + p * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

template <class S>
void gemm_nt(const S* a, const S* b, S* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) {
            S acc = S(0);
            const S* arow = a + i * k;
            const S* brow = b + j * k;
            for (int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            if (accumulate) c[i * n + j] += acc;
            else c[i * n + j] = acc;
        }
    }
}

template <class S>
void gemm_tn(const S* a, const S* b, S* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
    if (!accumulate)
        for (int64_t i = 0; i < m * n; ++i) c[i] = S(0);
    for (int64_t p = 0; p < k; ++p) {
        const S* arow = a + p * m;
        const S* brow = b + p * n;
        for (int64_t i = 0; i < m; ++i) {
            const S av = arow[i];
            S* crow = c + i * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

#endif

}  // namespace sharnn::detail
