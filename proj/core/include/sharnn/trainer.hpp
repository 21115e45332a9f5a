#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sharnn/checkpoint.hpp"
#include "sharnn/config.hpp"
#include "sharnn/data.hpp"
#include "sharnn/errors.hpp"
#include "sharnn/model.hpp"
#include "sharnn/ops.hpp"
#include "sharnn/optimizer.hpp"
#include "sharnn/rng.hpp"
#include "sharnn/tape.hpp"

namespace sharnn {

// ------------------------------ evaluation ---------------------------------

struct EvalReport {
    std::string split;
    double total_bits = 0.0;  // sum over positions of -log2 p(target)
    int64_t n_positions = 0;
    double bpc = 0.0;  // total_bits / n_positions
};

namespace detail {

constexpr double kInvLn2 = 1.4426950408889634073599246810019;

// Total -log2 p(target) over `rows` rows of logits, accumulated in double.
// Written so a row of identical logits costs exactly log2(vocab) bits.
template <class S>
double logit_rows_bits(std::span<const S> vals, int64_t rows, int64_t vocab,
                       const std::vector<int32_t>& targets) {
    double total = 0.0;
    for (int64_t r = 0; r < rows; ++r) {
        const S* x = vals.data() + r * vocab;
        double m = static_cast<double>(x[0]);
        for (int64_t j = 1; j < vocab; ++j) m = std::max(m, static_cast<double>(x[j]));
        double s = 0.0;
        for (int64_t j = 0; j < vocab; ++j) s += std::exp(static_cast<double>(x[j]) - m);
        total += (m - static_cast<double>(x[targets[static_cast<size_t>(r)]])) * kInvLn2 +
                 std::log2(s);
    }
    return total;
}

}  // namespace detail

// Sequential bits-per-character over one split. State starts reset and is
// carried across segments, so the result is independent of `bptt` whenever
// the attention window covers the whole split. `debug_uniform` scores every
// position as a uniform distribution over the vocabulary instead of running
// the model (a plumbing check: the answer must be exactly log2(vocab)).
template <class S>
EvalReport evaluate_bpc(ShaRnn<S>& model, std::span<const uint8_t> bytes,
                        const std::string& split_name, int64_t batch = 1, int64_t bptt = 256,
                        bool debug_uniform = false) {
    if (bytes.empty()) throw DataError(split_name + " split is empty");
    BatchStream stream = batchify(bytes, batch);
    std::vector<Segment> segs = bptt_segments(stream, bptt);
    if (segs.empty())
        throw DataError(split_name + " split is too small to evaluate at batch " +
                        std::to_string(batch));

    EvalReport rep;
    rep.split = split_name;
    auto states = model.init_states(batch);
    for (const Segment& seg : segs) {
        const std::vector<int32_t> ids = segment_inputs(stream, seg);
        const std::vector<int32_t> targets = segment_targets(stream, seg);
        const int64_t rows = seg.len * batch;
        if (debug_uniform) {
            rep.total_bits += static_cast<double>(rows) *
                              std::log2(static_cast<double>(model.cfg.vocab_size));
        } else {
            Tensor<S> logits = model.forward(nullptr, ids, seg.len, batch, states, false, nullptr);
            rep.total_bits += detail::logit_rows_bits<S>(logits.value(), rows,
                                                         model.cfg.vocab_size, targets);
        }
        rep.n_positions += rows;
    }
    rep.bpc = rep.total_bits / static_cast<double>(rep.n_positions);
    return rep;
}

// ------------------------------- training ----------------------------------

struct TrainOptions {
    std::string checkpoint_path;                  // per-epoch atomic save when non-empty
    std::function<void(const std::string&)> log;  // receives finished log lines
};

struct TrainResult {
    int64_t epochs_completed = 0;  // counts from training start, resume included
    int64_t global_step = 0;       // optimizer steps over the whole run
    double last_train_bits = 0.0;  // mean train loss (bits/position) of the last epoch
    double last_val_bpc = 0.0;     // NaN when there is no validation split
    bool hit_step_budget = false;
};

namespace detail {

template <class S>
double grad_l2_norm(const std::vector<Tensor<S>>& params) {
    double total = 0.0;
    for (const Tensor<S>& p : params) {
        if (!p.has_grad()) continue;
        for (S g : p.grad()) total += static_cast<double>(g) * static_cast<double>(g);
    }
    return std::sqrt(total);
}

template <class S>
std::string grad_norm_diagnostic(std::vector<Tensor<S>>& params,
                                 const std::vector<std::string>& names) {
    double total_sq = 0.0, worst = -1.0;
    std::string worst_name = "none";
    for (size_t i = 0; i < params.size(); ++i) {
        if (!params[i].has_grad()) continue;
        double sq = 0.0;
        for (S g : params[i].grad()) sq += static_cast<double>(g) * static_cast<double>(g);
        total_sq += sq;
        if (sq > worst) {
            worst = sq;
            worst_name = names[i];
        }
    }
    char buf[160];
    std::snprintf(buf, sizeof(buf), "grad l2 norm %.6g (largest %s at %.6g)",
                  std::sqrt(total_sq), worst_name.c_str(), worst < 0 ? 0.0 : std::sqrt(worst));
    return buf;
}

template <class S>
void clip_global_grad_norm(std::vector<Tensor<S>>& params, double max_norm) {
    const double total = grad_l2_norm(params);
    if (total <= max_norm || total == 0.0) return;
    const S scale = static_cast<S>(max_norm / total);
    for (Tensor<S>& p : params) {
        if (!p.has_grad()) continue;
        for (S& g : p.grad()) g *= scale;
    }
}

inline std::string progress_line(int64_t epoch, int64_t step, double lr, double train_bits,
                                 double val_bpc) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "epoch=%lld step=%lld lr=%g train_loss_bits=%.4f val_bpc=%.4f",
                  static_cast<long long>(epoch), static_cast<long long>(step), lr, train_bits,
                  val_bpc);
    return buf;
}

}  // namespace detail

// Runs (the remainder of) a training schedule. Per epoch: hidden state and
// attention memory start reset, the train split is consumed in bptt-sized
// segments with state carried value-only between them, the mean per-position
// loss is optimized, and one log line plus one atomic checkpoint are emitted.
// Validation runs on a snapshot copy, never the live parameters. A non-finite
// loss or gradient aborts the run with a NumericError naming the segment, the
// learning rate and the gradient norms. `start_epoch`/`start_step` come from
// a loaded checkpoint when resuming; a training run resumed this way replays
// the exact trajectory of an uninterrupted one because the checkpoint carries
// the optimizer moments and the RNG stream position.
template <class S>
TrainResult train(ShaRnn<S>& model, MinTrustLamb<S>& opt, Rng& rng, const Corpus& corpus,
                  const Config& cfg, const TrainOptions& opts = {}, int64_t start_epoch = 0,
                  int64_t start_step = 0) {
    const TrainingConfig& tc = cfg.train;
    if (corpus.train.empty()) throw DataError("train split is empty");
    BatchStream stream = batchify(corpus.train, tc.batch_size);
    std::vector<Segment> segs = bptt_segments(stream, tc.bptt);
    if (segs.empty())
        throw DataError("train split is too small for batch size " +
                        std::to_string(tc.batch_size));

    std::vector<Tensor<S>> params;
    std::vector<std::string> names;
    model.visit_params([&](const std::string& n, Tensor<S>& t) {
        names.push_back(n);
        params.push_back(t);
    });

    auto probe_val_bpc = [&]() -> double {
        if (corpus.valid.empty()) return std::nan("");
        ShaRnn<S> snapshot = model.clone();
        return evaluate_bpc(snapshot, corpus.valid, "valid", tc.eval_batch, tc.eval_bptt).bpc;
    };

    TrainResult res;
    res.global_step = start_step;
    res.epochs_completed = start_epoch;
    for (int64_t e = start_epoch; e < tc.epochs; ++e) {
        if (tc.max_steps > 0 && res.global_step >= tc.max_steps) {
            res.hit_step_budget = true;
            break;
        }
        const double lr = lr_schedule(tc.lamb.lr, e, tc.half_lr_from_epoch);
        auto states = model.init_states(tc.batch_size);
        double bits_sum = 0.0;
        int64_t pos_sum = 0;
        bool budget_hit = false;

        for (size_t si = 0; si < segs.size(); ++si) {
            if (tc.max_steps > 0 && res.global_step >= tc.max_steps) {
                budget_hit = true;
                break;
            }
            const Segment& seg = segs[si];
            const std::vector<int32_t> ids = segment_inputs(stream, seg);
            const std::vector<int32_t> targets = segment_targets(stream, seg);

            Tape<S> tape;
            Tensor<S> logits =
                model.forward(&tape, ids, seg.len, tc.batch_size, states, true, &rng);
            Tensor<S> loss = cross_entropy_mean(
                &tape, logits.reshape({seg.len * tc.batch_size, model.cfg.vocab_size}), targets);
            const double loss_nats = static_cast<double>(loss.value()[0]);
            if (!std::isfinite(loss_nats)) {
                char head[128];
                std::snprintf(head, sizeof(head),
                              "non-finite loss %g at segment %zu of epoch %lld (lr %g); ",
                              loss_nats, si, static_cast<long long>(e), lr);
                throw NumericError(head + detail::grad_norm_diagnostic(params, names));
            }
            for (Tensor<S>& p : params) p.zero_grad();
            tape.backward(loss);
            if (tc.grad_clip > 0.0) detail::clip_global_grad_norm(params, tc.grad_clip);
            try {
                opt.step(params, lr);
            } catch (const NumericError& ex) {
                char head[128];
                std::snprintf(head, sizeof(head), " at segment %zu of epoch %lld (lr %g); ", si,
                              static_cast<long long>(e), lr);
                throw NumericError(ex.what() + std::string(head) +
                                   detail::grad_norm_diagnostic(params, names));
            }
            ++res.global_step;

            const int64_t rows = seg.len * tc.batch_size;
            bits_sum += loss_nats * detail::kInvLn2 * static_cast<double>(rows);
            pos_sum += rows;

            if (tc.eval_every > 0 && res.global_step % tc.eval_every == 0 && opts.log) {
                const double probe = probe_val_bpc();
                opts.log(detail::progress_line(e, res.global_step, lr,
                                               pos_sum ? bits_sum / pos_sum : 0.0, probe));
            }
        }

        res.last_train_bits = pos_sum ? bits_sum / static_cast<double>(pos_sum) : 0.0;
        res.last_val_bpc = probe_val_bpc();
        if (opts.log)
            opts.log(detail::progress_line(e, res.global_step, lr, res.last_train_bits,
                                           res.last_val_bpc));
        // A budget stop leaves the epoch unfinished: the checkpoint records it
        // as not yet done so a resume restarts it from the top.
        const int64_t epochs_done = budget_hit ? e : e + 1;
        if (!opts.checkpoint_path.empty())
            save_checkpoint(opts.checkpoint_path, model, cfg, epochs_done, res.global_step, &opt,
                            &rng);
        res.epochs_completed = epochs_done;
        if (budget_hit) {
            res.hit_step_budget = true;
            break;
        }
    }
    return res;
}

// ------------------------------ generation ---------------------------------

// Samples `length` bytes from the model, seeded with `prime` (a newline when
// empty, so generation never starts from nothing). temperature == 0 picks the
// argmax; otherwise logits are divided by the temperature and sampled.
template <class S>
std::vector<uint8_t> generate(ShaRnn<S>& model, std::span<const uint8_t> prime, int64_t length,
                              double temperature, Rng& rng) {
    if (length < 0) throw ContractError("generate: negative length");
    if (temperature < 0.0) throw ContractError("generate: negative temperature");
    const int64_t vocab = model.cfg.vocab_size;

    std::vector<int32_t> feed;
    if (prime.empty()) feed.push_back('\n');
    for (uint8_t b : prime) feed.push_back(b);

    auto states = model.init_states(1);
    std::vector<uint8_t> out;
    out.reserve(static_cast<size_t>(length));
    while (static_cast<int64_t>(out.size()) < length) {
        Tensor<S> logits = model.forward(nullptr, feed, static_cast<int64_t>(feed.size()), 1,
                                         states, false, nullptr);
        std::span<const S> vals = logits.value();
        const S* row = vals.data() + vals.size() - static_cast<size_t>(vocab);

        int64_t pick = 0;
        if (temperature == 0.0) {
            for (int64_t j = 1; j < vocab; ++j)
                if (row[j] > row[pick]) pick = j;
        } else {
            double m = static_cast<double>(row[0]);
            for (int64_t j = 1; j < vocab; ++j) m = std::max(m, static_cast<double>(row[j]));
            std::vector<double> p(static_cast<size_t>(vocab));
            double s = 0.0;
            for (int64_t j = 0; j < vocab; ++j) {
                p[static_cast<size_t>(j)] =
                    std::exp((static_cast<double>(row[j]) - m) / temperature);
                s += p[static_cast<size_t>(j)];
            }
            double u = rng.uniform(0.0, 1.0) * s;
            pick = vocab - 1;
            for (int64_t j = 0; j < vocab; ++j) {
                u -= p[static_cast<size_t>(j)];
                if (u <= 0.0) {
                    pick = j;
                    break;
                }
            }
        }
        out.push_back(static_cast<uint8_t>(pick));
        feed.assign(1, static_cast<int32_t>(pick));
    }
    return out;
}

}  // namespace sharnn
