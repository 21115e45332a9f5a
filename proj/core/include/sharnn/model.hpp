#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sharnn/config.hpp"
#include "sharnn/errors.hpp"
#include "sharnn/ops.hpp"
#include "sharnn/rng.hpp"
#include "sharnn/tape.hpp"
#include "sharnn/tensor.hpp"

namespace sharnn {

// ------------------------- over-parameterized gate --------------------------

// A learned constant vector trained through an over-parameterized bottleneck:
// out = sigmoid(v·Wf) ⊙ tanh(v·Wc). Because the output does not depend on the
// input, a trained gate can be folded into a single static vector, removing
// the 2·H² + H trainable scalars.
template <class S>
struct OverparamGate {
    Tensor<S> base;                   // v, [1×H]
    Tensor<S> wf;                     // [H×H]
    Tensor<S> wc;                     // [H×H]
    std::optional<Tensor<S>> folded;  // static replacement once folded

    static OverparamGate init(int64_t h, Rng& rng) {
        const double lim = 1.0 / std::sqrt(double(h));
        OverparamGate g;
        g.base = Tensor<S>::uniform(rng, -1.0, 1.0, {1, h}, true);
        g.wf = Tensor<S>::uniform(rng, -lim, lim, {h, h}, true);
        g.wc = Tensor<S>::uniform(rng, -lim, lim, {h, h}, true);
        return g;
    }

    bool is_folded() const { return folded.has_value(); }

    // [1×H]; every element lies strictly inside (-1, 1) before folding.
    Tensor<S> forward(Tape<S>* tape) const {
        if (folded) return *folded;
        Tensor<S> f = sigmoid(tape, matmul(tape, base, wf));
        Tensor<S> c = tanh_op(tape, matmul(tape, base, wc));
        return mul(tape, f, c);
    }

    void fold() {
        if (folded) throw ContractError("overparam gate folded twice");
        folded = forward(nullptr).detached();
        base = Tensor<S>();
        wf = Tensor<S>();
        wc = Tensor<S>();
    }

    int64_t trainable_params() const {
        return folded ? 0 : base.numel() + wf.numel() + wc.numel();
    }
};

// ------------------------------- block ------------------------------------

template <class S>
struct AttentionParams {
    Tensor<S> wq;  // [H×H] query projection (the only matrix touching attention)
    OverparamGate<S> qs;
    OverparamGate<S> ks;
    OverparamGate<S> vs;
    Tensor<S> ln_mem_gain, ln_mem_bias;  // norm applied before entries reach memory
};

template <class S>
struct Block {
    Tensor<S> ln_in_gain, ln_in_bias;
    Tensor<S> wx;  // [H×4H], gate packing [i, f, g, o]
    Tensor<S> wh;  // [H×4H]
    Tensor<S> b;   // [4H], forget-gate slice initialized to 1
    std::optional<AttentionParams<S>> attn;
    Tensor<S> ln_boom_gain, ln_boom_bias;
    Tensor<S> boom_w;  // [H×(N·H)]
    Tensor<S> boom_b;  // [N·H]
};

// Per-block recurrent state. h/c are value-only carries (no gradient history
// crosses a segment boundary); memory holds the normalized post-LSTM entries
// of past segments, oldest first, shaped [M×B×H] and never mutated once
// written.
template <class S>
struct BlockState {
    Tensor<S> h;       // [B×H]
    Tensor<S> c;       // [B×H]
    Tensor<S> memory;  // [M×B×H]; default (empty) tensor when M == 0
    int64_t mem_count = 0;

    int64_t batch() const { return h.size(0); }
};

// ------------------------- standalone layer pieces --------------------------

// One LSTM step over a batch. x, h, c: [B×H]; returns (h', c').
template <class S>
std::pair<Tensor<S>, Tensor<S>> lstm_cell_step(Tape<S>* tape, const Tensor<S>& x,
                                               const Tensor<S>& h, const Tensor<S>& c,
                                               const Tensor<S>& wx, const Tensor<S>& wh,
                                               const Tensor<S>& b) {
    const int64_t hidden = h.size(1);
    if (x.size(1) != hidden || c.size(1) != hidden || wx.size(1) != 4 * hidden) {
        throw ShapeError("lstm_cell_step: widths disagree with hidden size");
    }
    Tensor<S> pre = add_rowvec(tape, matmul(tape, x, wx), b);
    return lstm_cell_from_pregates(tape, pre, h, c, wh);
}

// Same step when x·Wx + b has been precomputed for the whole segment.
template <class S>
std::pair<Tensor<S>, Tensor<S>> lstm_cell_from_pregates(Tape<S>* tape, const Tensor<S>& pre,
                                                        const Tensor<S>& h, const Tensor<S>& c,
                                                        const Tensor<S>& wh) {
    const int64_t hidden = h.size(1);
    Tensor<S> gates = add(tape, pre, matmul(tape, h, wh));
    Tensor<S> i = sigmoid(tape, slice_cols(tape, gates, 0, hidden));
    Tensor<S> f = sigmoid(tape, slice_cols(tape, gates, hidden, hidden));
    Tensor<S> g = tanh_op(tape, slice_cols(tape, gates, 2 * hidden, hidden));
    Tensor<S> o = sigmoid(tape, slice_cols(tape, gates, 3 * hidden, hidden));
    Tensor<S> c_next = add(tape, mul(tape, f, c), mul(tape, i, g));
    Tensor<S> h_next = mul(tape, o, tanh_op(tape, c_next));
    return {h_next, c_next};
}

// Boom feed-forward: u = gelu(x·W + b), u split into N chunks of H which are
// summed. There is no down-projection matrix.
template <class S>
Tensor<S> boom_forward(Tape<S>* tape, const Tensor<S>& x, const Tensor<S>& w,
                       const Tensor<S>& b) {
    const int64_t hidden = x.size(1);
    const int64_t boom_hidden = w.size(1);
    if (boom_hidden % hidden != 0) {
        throw ConfigError("boom width " + std::to_string(boom_hidden) +
                          " not divisible by hidden " + std::to_string(hidden));
    }
    Tensor<S> u = gelu(tape, add_rowvec(tape, matmul(tape, x, w), b));
    return sum_chunks(tape, u, boom_hidden / hidden);
}

// Single-head attention over [detached memory ∥ current segment entries].
//
//   q_t   = qs ⊙ (e_t · Wq)
//   k_j   = ks ⊙ entry_j,  v_j = vs ⊙ entry_j   (no projection touches memory)
//   out_t = softmax_j(q_t·k_j / √H) · v
//
// entries for position t are the memory plus e_1..e_t of the current segment
// (each position sees itself — the entry is written before attending).
// e_seq: [T·B×H] row-major by (t, b). memory: [M×B×H] or empty.
// attn_weights_out, when given, receives one post-softmax row of length M+T
// per (b, t) pair, b-major; masked positions hold ~0.
template <class S>
Tensor<S> single_head_attention(Tape<S>* tape, const Tensor<S>& e_seq, const Tensor<S>& memory,
                                int64_t mem_count, int64_t t_steps, int64_t batch,
                                const Tensor<S>& wq, const Tensor<S>& qs_vec,
                                const Tensor<S>& ks_vec, const Tensor<S>& vs_vec,
                                std::vector<std::vector<S>>* attn_weights_out = nullptr) {
    if (t_steps < 1) throw ContractError("attention span is empty");
    const int64_t hidden = e_seq.size(1);
    const int64_t m = mem_count;
    const S inv_sqrt_h = S(1) / S(std::sqrt(double(hidden)));

    Tensor<S> q_all = mul_rowvec(tape, matmul(tape, e_seq, wq), qs_vec);  // [T·B×H]
    Tensor<S> ke = mul_rowvec(tape, e_seq, ks_vec);
    Tensor<S> ve = mul_rowvec(tape, e_seq, vs_vec);
    Tensor<S> km, vm;
    if (m > 0) {
        km = mul_rowvec(tape, memory, ks_vec);
        vm = mul_rowvec(tape, memory, vs_vec);
    }

    // Additive causal mask: position t may attend to all of memory plus the
    // first t+1 segment entries.
    Tensor<S> mask = Tensor<S>::zeros({t_steps, m + t_steps});
    for (int64_t t = 0; t < t_steps; ++t)
        for (int64_t j = m + t + 1; j < m + t_steps; ++j) mask.at(t, j) = S(-1e30);

    std::vector<Tensor<S>> outs;
    outs.reserve(static_cast<size_t>(batch));
    for (int64_t col = 0; col < batch; ++col) {
        std::vector<int64_t> seg_idx(static_cast<size_t>(t_steps));
        for (int64_t t = 0; t < t_steps; ++t) seg_idx[static_cast<size_t>(t)] = t * batch + col;
        Tensor<S> q = gather_rows(tape, q_all, seg_idx);  // [T×H]
        Tensor<S> k, v;
        if (m > 0) {
            std::vector<int64_t> mem_idx(static_cast<size_t>(m));
            for (int64_t j = 0; j < m; ++j) mem_idx[static_cast<size_t>(j)] = j * batch + col;
            k = concat_rows(tape, gather_rows(tape, km, mem_idx), gather_rows(tape, ke, seg_idx));
            v = concat_rows(tape, gather_rows(tape, vm, mem_idx), gather_rows(tape, ve, seg_idx));
        } else {
            k = gather_rows(tape, ke, seg_idx);
            v = gather_rows(tape, ve, seg_idx);
        }
        Tensor<S> scores = add(tape, scalar_mul(tape, matmul_nt(tape, q, k), inv_sqrt_h), mask);
        Tensor<S> weights = softmax(tape, scores, 1);  // [T×(M+T)]
        if (attn_weights_out) {
            auto wv = weights.value();
            for (int64_t t = 0; t < t_steps; ++t) {
                attn_weights_out->emplace_back(wv.begin() + t * (m + t_steps),
                                               wv.begin() + (t + 1) * (m + t_steps));
            }
        }
        outs.push_back(matmul(tape, weights, v));  // [T×H]
    }

    // Interleave the per-column [T×H] results back into (t, b) row order.
    Tensor<S> stacked = stack_rows(tape, outs);  // [B·T×H], b-major
    std::vector<int64_t> perm(static_cast<size_t>(t_steps * batch));
    for (int64_t t = 0; t < t_steps; ++t)
        for (int64_t col = 0; col < batch; ++col)
            perm[static_cast<size_t>(t * batch + col)] = col * t_steps + t;
    return gather_rows(tape, stacked, perm);
}

// ------------------------------ full block ---------------------------------

namespace detail {

// memory ← last `window` entries of [memory ∥ fresh]; value-only copies.
template <class S>
void append_to_memory(BlockState<S>& state, const Tensor<S>& e_seq, int64_t t_steps,
                      int64_t batch, int64_t window) {
    const int64_t hidden = e_seq.size(1);
    const int64_t total = state.mem_count + t_steps;
    const int64_t keep = std::min(total, window);
    Tensor<S> next = Tensor<S>::zeros({keep, batch, hidden});
    auto dst = next.value();
    const int64_t row = batch * hidden;
    const int64_t drop = total - keep;  // oldest entries trimmed first
    for (int64_t j = 0; j < keep; ++j) {
        const int64_t src_entry = drop + j;
        const S* src = src_entry < state.mem_count
                           ? state.memory.value().data() + src_entry * row
                           : e_seq.value().data() + (src_entry - state.mem_count) * row;
        std::copy(src, src + row, dst.data() + j * row);
    }
    state.memory = next;
    state.mem_count = keep;
}

}  // namespace detail

// One block over a segment: layer-norm → LSTM → (attention layers: residual
// single-head attention over memory, with the normalized hidden states
// appended to memory) → residual Boom. Returns the block output [T·B×H] and
// leaves `state` advanced: h/c detached, memory trimmed to the window.
template <class S>
Tensor<S> block_forward(Tape<S>* tape, const Block<S>& blk, const Tensor<S>& x_seq,
                        BlockState<S>& state, int64_t t_steps, int64_t batch, int64_t mem_window,
                        std::vector<std::vector<S>>* attn_weights_out = nullptr) {
    if (state.batch() != batch) {
        throw ContractError("batch size changed from " + std::to_string(state.batch()) + " to " +
                            std::to_string(batch) + " without a state reset");
    }
    const int64_t hidden = blk.wh.size(0);
    if (x_seq.size(1) != hidden || x_seq.size(0) != t_steps * batch) {
        throw ShapeError("block_forward: input is not [T*B x H]");
    }

    Tensor<S> z = layer_norm(tape, x_seq, blk.ln_in_gain, blk.ln_in_bias);
    Tensor<S> pre = add_rowvec(tape, matmul(tape, z, blk.wx), blk.b);  // [T·B×4H]

    Tensor<S> h = state.h;
    Tensor<S> c = state.c;
    std::vector<Tensor<S>> hs;
    hs.reserve(static_cast<size_t>(t_steps));
    for (int64_t t = 0; t < t_steps; ++t) {
        auto [h_next, c_next] = lstm_cell_from_pregates(
            tape, slice_rows(tape, pre, t * batch, batch), h, c, blk.wh);
        h = h_next;
        c = c_next;
        hs.push_back(h);
    }
    Tensor<S> h_seq = stack_rows(tape, hs);  // [T·B×H]

    if (blk.attn) {
        const AttentionParams<S>& at = *blk.attn;
        Tensor<S> e_seq = layer_norm(tape, h_seq, at.ln_mem_gain, at.ln_mem_bias);
        Tensor<S> attn_out = single_head_attention(
            tape, e_seq, state.memory, state.mem_count, t_steps, batch, at.wq,
            at.qs.forward(tape), at.ks.forward(tape), at.vs.forward(tape), attn_weights_out);
        h_seq = add(tape, h_seq, attn_out);
        detail::append_to_memory(state, e_seq, t_steps, batch, mem_window);
    }

    Tensor<S> boomed = boom_forward(
        tape, layer_norm(tape, h_seq, blk.ln_boom_gain, blk.ln_boom_bias), blk.boom_w, blk.boom_b);
    h_seq = add(tape, h_seq, boomed);

    state.h = hs.back().detached();
    state.c = c.detached();
    return h_seq;
}

// ------------------------------- model -------------------------------------

template <class S>
struct ShaRnn {
    ModelConfig cfg;
    Tensor<S> emb;  // [V×H], tied input embedding and output projection
    std::vector<Block<S>> blocks;

    static ShaRnn init(const ModelConfig& cfg, Rng& rng) {
        cfg.validate();
        const int64_t h = cfg.hidden;
        const double lim = 1.0 / std::sqrt(double(h));
        ShaRnn model;
        model.cfg = cfg;
        model.emb = Tensor<S>::uniform(rng, -lim, lim, {cfg.vocab_size, h}, true);
        model.blocks.resize(static_cast<size_t>(cfg.n_layers));
        for (int64_t l = 0; l < cfg.n_layers; ++l) {
            Block<S>& blk = model.blocks[static_cast<size_t>(l)];
            blk.ln_in_gain = Tensor<S>::full({h}, S(1), true);
            blk.ln_in_bias = Tensor<S>::zeros({h}, true);
            blk.wx = Tensor<S>::uniform(rng, -lim, lim, {h, 4 * h}, true);
            blk.wh = Tensor<S>::uniform(rng, -lim, lim, {h, 4 * h}, true);
            blk.b = Tensor<S>::zeros({4 * h}, true);
            for (int64_t j = h; j < 2 * h; ++j) blk.b.at(j) = S(1);  // forget-gate stabilizer
            if (cfg.has_attention(l)) {
                AttentionParams<S> at;
                at.wq = Tensor<S>::uniform(rng, -lim, lim, {h, h}, true);
                at.qs = OverparamGate<S>::init(h, rng);
                at.ks = OverparamGate<S>::init(h, rng);
                at.vs = OverparamGate<S>::init(h, rng);
                at.ln_mem_gain = Tensor<S>::full({h}, S(1), true);
                at.ln_mem_bias = Tensor<S>::zeros({h}, true);
                blk.attn = std::move(at);
            }
            blk.ln_boom_gain = Tensor<S>::full({h}, S(1), true);
            blk.ln_boom_bias = Tensor<S>::zeros({h}, true);
            blk.boom_w = Tensor<S>::uniform(rng, -lim, lim, {h, cfg.boom_hidden}, true);
            blk.boom_b = Tensor<S>::zeros({cfg.boom_hidden}, true);
        }
        return model;
    }

    std::vector<BlockState<S>> init_states(int64_t batch) const {
        if (batch < 1) throw ContractError("batch must be positive");
        std::vector<BlockState<S>> states(static_cast<size_t>(cfg.n_layers));
        for (auto& st : states) {
            st.h = Tensor<S>::zeros({batch, cfg.hidden});
            st.c = Tensor<S>::zeros({batch, cfg.hidden});
            st.memory = Tensor<S>();
            st.mem_count = 0;
        }
        return states;
    }

    // ids: length T·B, row-major by (t, b); returns logits shaped {T, B, V}.
    // Advances every block state (h/c detached, memories appended + trimmed).
    Tensor<S> forward(Tape<S>* tape, const std::vector<int32_t>& ids, int64_t t_steps,
                      int64_t batch, std::vector<BlockState<S>>& states, bool training = false,
                      Rng* rng = nullptr) const {
        if (static_cast<int64_t>(ids.size()) != t_steps * batch) {
            throw ShapeError("forward: " + std::to_string(ids.size()) + " ids for " +
                             std::to_string(t_steps) + "x" + std::to_string(batch));
        }
        if (states.size() != blocks.size()) {
            throw ContractError("forward: state count does not match layer count");
        }
        std::vector<S> row_scale;
        const std::vector<S>* scale_ptr = nullptr;
        if (training && cfg.dropout_e > 0.0) {
            if (!rng) throw ContractError("training forward with dropout needs an rng");
            row_scale.resize(static_cast<size_t>(cfg.vocab_size));
            const S keep = S(1) / S(1.0 - cfg.dropout_e);
            for (auto& v : row_scale) v = rng->bernoulli(cfg.dropout_e) ? S(0) : keep;
            scale_ptr = &row_scale;
        }
        Tensor<S> x = embedding_rows(tape, emb, ids, scale_ptr);  // [T·B×H]
        x = dropout(tape, x, cfg.dropout_i, training, rng);
        for (size_t l = 0; l < blocks.size(); ++l) {
            x = block_forward(tape, blocks[l], x, states[l], t_steps, batch, cfg.mem_window);
            if (l + 1 < blocks.size()) x = dropout(tape, x, cfg.dropout_h, training, rng);
        }
        x = dropout(tape, x, cfg.dropout_o, training, rng);
        Tensor<S> logits = matmul_nt(tape, x, emb);  // [T·B×V]
        return logits.reshape({t_steps, batch, cfg.vocab_size});
    }

    // Visits trainable tensors in canonical (checkpoint) order. Folded gates
    // contribute nothing here; their static vectors appear in visit_constants.
    void visit_params(const std::function<void(const std::string&, Tensor<S>&)>& fn) {
        fn("emb", emb);
        for (size_t l = 0; l < blocks.size(); ++l) {
            Block<S>& blk = blocks[l];
            const std::string p = "block" + std::to_string(l) + ".";
            fn(p + "ln_in.gain", blk.ln_in_gain);
            fn(p + "ln_in.bias", blk.ln_in_bias);
            fn(p + "lstm.wx", blk.wx);
            fn(p + "lstm.wh", blk.wh);
            fn(p + "lstm.b", blk.b);
            if (blk.attn) {
                AttentionParams<S>& at = *blk.attn;
                fn(p + "attn.wq", at.wq);
                visit_gate(p + "attn.qs.", at.qs, fn);
                visit_gate(p + "attn.ks.", at.ks, fn);
                visit_gate(p + "attn.vs.", at.vs, fn);
                fn(p + "attn.ln_mem.gain", at.ln_mem_gain);
                fn(p + "attn.ln_mem.bias", at.ln_mem_bias);
            }
            fn(p + "ln_boom.gain", blk.ln_boom_gain);
            fn(p + "ln_boom.bias", blk.ln_boom_bias);
            fn(p + "boom.w", blk.boom_w);
            fn(p + "boom.b", blk.boom_b);
        }
    }

    // Folded gate vectors: constants that must survive a checkpoint
    // round-trip but are not trained.
    void visit_constants(const std::function<void(const std::string&, Tensor<S>&)>& fn) {
        for (size_t l = 0; l < blocks.size(); ++l) {
            if (!blocks[l].attn) continue;
            const std::string p = "block" + std::to_string(l) + ".attn.";
            AttentionParams<S>& at = *blocks[l].attn;
            if (at.qs.folded) fn(p + "qs.folded", *at.qs.folded);
            if (at.ks.folded) fn(p + "ks.folded", *at.ks.folded);
            if (at.vs.folded) fn(p + "vs.folded", *at.vs.folded);
        }
    }

    int64_t count_params() {
        int64_t n = 0;
        visit_params([&](const std::string&, Tensor<S>& t) { n += t.numel(); });
        return n;
    }

    bool any_gate_folded() const {
        for (const Block<S>& blk : blocks) {
            if (blk.attn &&
                (blk.attn->qs.is_folded() || blk.attn->ks.is_folded() || blk.attn->vs.is_folded()))
                return true;
        }
        return false;
    }

    // Replaces every over-parameterized gate with its static output vector.
    void fold() {
        if (any_gate_folded()) throw ContractError("model folded twice");
        for (Block<S>& blk : blocks) {
            if (!blk.attn) continue;
            blk.attn->qs.fold();
            blk.attn->ks.fold();
            blk.attn->vs.fold();
        }
    }

    ShaRnn clone() {
        ShaRnn out;
        out.cfg = cfg;
        out.emb = emb.clone();
        out.blocks.resize(blocks.size());
        for (size_t l = 0; l < blocks.size(); ++l) {
            const Block<S>& src = blocks[l];
            Block<S>& dst = out.blocks[l];
            dst.ln_in_gain = src.ln_in_gain.clone();
            dst.ln_in_bias = src.ln_in_bias.clone();
            dst.wx = src.wx.clone();
            dst.wh = src.wh.clone();
            dst.b = src.b.clone();
            if (src.attn) {
                AttentionParams<S> at;
                at.wq = src.attn->wq.clone();
                at.qs = clone_gate(src.attn->qs);
                at.ks = clone_gate(src.attn->ks);
                at.vs = clone_gate(src.attn->vs);
                at.ln_mem_gain = src.attn->ln_mem_gain.clone();
                at.ln_mem_bias = src.attn->ln_mem_bias.clone();
                dst.attn = std::move(at);
            }
            dst.ln_boom_gain = src.ln_boom_gain.clone();
            dst.ln_boom_bias = src.ln_boom_bias.clone();
            dst.boom_w = src.boom_w.clone();
            dst.boom_b = src.boom_b.clone();
        }
        return out;
    }

  private:
    static void visit_gate(const std::string& prefix, OverparamGate<S>& g,
                           const std::function<void(const std::string&, Tensor<S>&)>& fn) {
        if (g.is_folded()) return;
        fn(prefix + "base", g.base);
        fn(prefix + "wf", g.wf);
        fn(prefix + "wc", g.wc);
    }

    static OverparamGate<S> clone_gate(const OverparamGate<S>& g) {
        OverparamGate<S> out;
        if (g.folded) {
            out.folded = g.folded->clone();
        } else {
            out.base = g.base.clone();
            out.wf = g.wf.clone();
            out.wc = g.wc.clone();
        }
        return out;
    }
};

}  // namespace sharnn
