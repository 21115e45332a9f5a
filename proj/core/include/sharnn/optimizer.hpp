#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sharnn/config.hpp"
#include "sharnn/errors.hpp"
#include "sharnn/tensor.hpp"

namespace sharnn {

// Learning-rate schedule: the base rate, halved from a chosen epoch onward.
inline double lr_schedule(double base_lr, int64_t epoch, int64_t half_from_epoch) {
    return epoch >= half_from_epoch ? base_lr * 0.5 : base_lr;
}

// LAMB with a floor on the trust ratio.
//
// Per parameter tensor p with gradient g:
//   m ← β₁m + (1−β₁)g           v ← β₂v + (1−β₂)g²
//   r = m̂ / (√v̂ + eps) + wd·p   (hatted moments are bias-corrected)
//   trust = max(‖p‖/‖r‖, min_trust)   (ratio defined as 1 if either norm is 0)
//   p ← p − lr·trust·r
//
// The trust floor guarantees a minimum amount of progress on every tensor;
// the zero-norm fallback keeps freshly zero-initialized tensors trainable.
template <class S>
class MinTrustLamb {
  public:
    explicit MinTrustLamb(LambConfig cfg) : cfg_(cfg) { cfg_.validate(); }

    const LambConfig& config() const { return cfg_; }
    int64_t step_count() const { return t_; }

    // One update over the full parameter list. The list must be identical in
    // order and shape on every call. The whole step is rejected before any
    // state changes if a gradient is missing or non-finite.
    void step(std::vector<Tensor<S>>& params, double lr) {
        if (m_.empty()) {
            m_.resize(params.size());
            v_.resize(params.size());
            for (size_t i = 0; i < params.size(); ++i) {
                m_[i].assign(static_cast<size_t>(params[i].numel()), S(0));
                v_[i].assign(static_cast<size_t>(params[i].numel()), S(0));
            }
        }
        if (m_.size() != params.size()) {
            throw ContractError("optimizer saw " + std::to_string(params.size()) +
                                " parameters, state holds " + std::to_string(m_.size()));
        }
        for (size_t i = 0; i < params.size(); ++i) {
            if (static_cast<size_t>(params[i].numel()) != m_[i].size()) {
                throw ContractError("parameter " + std::to_string(i) +
                                    " changed size under the optimizer");
            }
            if (!params[i].has_grad()) {
                throw ContractError("parameter " + std::to_string(i) + " has no gradient");
            }
            for (S g : params[i].grad()) {
                if (!std::isfinite(double(g))) {
                    throw NumericError("non-finite gradient in parameter " + std::to_string(i));
                }
            }
        }

        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
        std::vector<S> r;
        for (size_t i = 0; i < params.size(); ++i) {
            auto p = params[i].value();
            auto g = params[i].grad();
            std::vector<S>& m = m_[i];
            std::vector<S>& v = v_[i];
            r.resize(p.size());
            double p_sq = 0.0, r_sq = 0.0;
            for (size_t j = 0; j < p.size(); ++j) {
                m[j] = S(cfg_.beta1) * m[j] + S(1.0 - cfg_.beta1) * g[j];
                v[j] = S(cfg_.beta2) * v[j] + S(1.0 - cfg_.beta2) * g[j] * g[j];
                const double m_hat = double(m[j]) / bc1;
                const double v_hat = double(v[j]) / bc2;
                const double rj = m_hat / (std::sqrt(v_hat) + cfg_.eps) +
                                  cfg_.weight_decay * double(p[j]);
                r[j] = S(rj);
                p_sq += double(p[j]) * double(p[j]);
                r_sq += rj * rj;
            }
            const double p_norm = std::sqrt(p_sq), r_norm = std::sqrt(r_sq);
            const double raw_trust = (p_norm > 0.0 && r_norm > 0.0) ? p_norm / r_norm : 1.0;
            const double trust = std::max(raw_trust, cfg_.min_trust);
            const S scale = S(lr * trust);
            for (size_t j = 0; j < p.size(); ++j) p[j] -= scale * r[j];
        }
    }

    // Checkpoint access: moments are copied in/out as flat per-parameter
    // vectors in parameter order.
    const std::vector<std::vector<S>>& moments_m() const { return m_; }
    const std::vector<std::vector<S>>& moments_v() const { return v_; }
    void restore(std::vector<std::vector<S>> m, std::vector<std::vector<S>> v, int64_t t) {
        if (m.size() != v.size()) throw ContractError("moment lists disagree in length");
        for (size_t i = 0; i < m.size(); ++i) {
            if (m[i].size() != v[i].size()) {
                throw ContractError("moment " + std::to_string(i) + " shapes disagree");
            }
        }
        if (t < 0) throw ContractError("negative optimizer step counter");
        m_ = std::move(m);
        v_ = std::move(v);
        t_ = t;
    }

  private:
    LambConfig cfg_;
    std::vector<std::vector<S>> m_, v_;
    int64_t t_ = 0;
};

}  // namespace sharnn
