#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "sharnn/rng.hpp"
#include "sharnn/tensor.hpp"

namespace testutil {

// Reference matmul, written independently of the library kernels.
template <class S>
std::vector<S> naive_matmul(const std::vector<S>& a, const std::vector<S>& b, int64_t m,
                            int64_t k, int64_t n) {
    std::vector<S> c(static_cast<size_t>(m * n), S(0));
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) {
            S acc = S(0);
            for (int64_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
            c[i * n + j] = acc;
        }
    return c;
}

template <class S>
double max_abs_diff(std::span<const S> a, std::span<const S> b) {
    double m = 0.0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(double(a[i]) - double(b[i])));
    return m;
}

template <class S>
sharnn::Tensor<S> random_tensor(sharnn::Rng& rng, sharnn::Shape shape, double lo = -1.0,
                                double hi = 1.0, bool requires_grad = true) {
    return sharnn::Tensor<S>::uniform(rng, lo, hi, std::move(shape), requires_grad);
}

}  // namespace testutil
