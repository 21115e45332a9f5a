#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "sharnn/rng.hpp"
#include "sharnn/tape.hpp"
#include "sharnn/tensor.hpp"

namespace sharnn {

struct FdOptions {
    double h = 1e-5;                  // central-difference step
    int64_t max_coords_per_tensor = 64;  // larger tensors are sampled
    uint64_t sample_seed = 0x5eed;
};

struct FdReport {
    double max_rel_err = 0.0;
    int64_t coords_checked = 0;
};

// Central-difference gradient check. `f` must rebuild its forward pass on
// every call: with a tape when analytic gradients are wanted, without one for
// the probe evaluations. The relative error is |analytic - numeric| divided by
// max(1, |analytic|, |numeric|), so tiny gradients are compared absolutely.
// A non-deterministic f (two identical probe calls that disagree) is rejected.
template <class S>
FdReport finite_difference_check(const std::function<Tensor<S>(Tape<S>*)>& f,
                                 std::span<Tensor<S>> params, const FdOptions& opt = {}) {
    auto scalar_of = [](const Tensor<S>& t) {
        if (t.numel() != 1) throw ShapeError("finite_difference_check: f must return a scalar");
        return double(t.value()[0]);
    };

    const double probe0 = scalar_of(f(nullptr));
    const double probe1 = scalar_of(f(nullptr));
    if (probe0 != probe1) {
        throw ContractError("finite_difference_check: f is not deterministic");
    }

    for (auto& p : params) p.zero_grad();
    Tape<S> tape;
    Tensor<S> loss = f(&tape);
    if (loss.numel() != 1) throw ShapeError("finite_difference_check: f must return a scalar");
    tape.backward(loss);
    std::vector<std::vector<S>> analytic;
    analytic.reserve(params.size());
    for (auto& p : params) {
        p.ensure_grad();
        analytic.emplace_back(p.grad().begin(), p.grad().end());
    }
    tape.clear();

    Rng pick(opt.sample_seed);
    FdReport report;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Tensor<S>& p = params[pi];
        std::vector<int64_t> coords;
        if (p.numel() <= opt.max_coords_per_tensor) {
            coords.resize(static_cast<size_t>(p.numel()));
            for (int64_t i = 0; i < p.numel(); ++i) coords[static_cast<size_t>(i)] = i;
        } else {
            for (int64_t i = 0; i < opt.max_coords_per_tensor; ++i)
                coords.push_back(static_cast<int64_t>(pick.below(uint64_t(p.numel()))));
        }
        for (int64_t c : coords) {
            const S saved = p.value()[c];
            p.value()[c] = saved + S(opt.h);
            const double up = scalar_of(f(nullptr));
            p.value()[c] = saved - S(opt.h);
            const double down = scalar_of(f(nullptr));
            p.value()[c] = saved;
            const double numeric = (up - down) / (2.0 * opt.h);
            const double an = double(analytic[pi][static_cast<size_t>(c)]);
            const double scale = std::max({1.0, std::fabs(an), std::fabs(numeric)});
            report.max_rel_err = std::max(report.max_rel_err, std::fabs(an - numeric) / scale);
            ++report.coords_checked;
        }
    }
    return report;
}

}  // namespace sharnn
