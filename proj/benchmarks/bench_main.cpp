#include <benchmark/benchmark.h>

#include <vector>

#include "sharnn/model.hpp"
#include "sharnn/ops.hpp"
#include "sharnn/optimizer.hpp"
#include "sharnn/rng.hpp"
#include "sharnn/tape.hpp"
#include "sharnn/tensor.hpp"

using namespace sharnn;

namespace {

Tensor<float> rand_f(Rng& rng, Shape shape, bool requires_grad = false) {
    return Tensor<float>::uniform(rng, -1.0, 1.0, std::move(shape), requires_grad);
}

ModelConfig bench_model_config(int64_t hidden) {
    ModelConfig cfg;
    cfg.n_layers = 2;
    cfg.hidden = hidden;
    cfg.boom_hidden = 4 * hidden;
    cfg.attn_layers = {0};
    cfg.mem_window = 512;
    cfg.dropout_e = cfg.dropout_i = cfg.dropout_h = cfg.dropout_o = 0.0;
    return cfg;
}

}  // namespace

// ---- kernels ----

static void BM_matmul(benchmark::State& state) {
    Rng rng(1);
    auto a = rand_f(rng, {128, 256});
    auto b = rand_f(rng, {256, 1024});
    for (auto _ : state) {
        auto c = matmul<float>(nullptr, a, b);
        benchmark::DoNotOptimize(c.value().data());
    }
    state.SetItemsProcessed(state.iterations() * 2 * 128 * 256 * 1024);  // flops
}
BENCHMARK(BM_matmul);

static void BM_lstm_step(benchmark::State& state) {
    Rng rng(2);
    const int64_t batch = 16, hidden = 256;
    auto x = rand_f(rng, {batch, hidden});
    auto h = rand_f(rng, {batch, hidden});
    auto c = rand_f(rng, {batch, hidden});
    auto wx = rand_f(rng, {hidden, 4 * hidden});
    auto wh = rand_f(rng, {hidden, 4 * hidden});
    auto b = rand_f(rng, {4 * hidden});
    for (auto _ : state) {
        auto [hn, cn] = lstm_cell_step<float>(nullptr, x, h, c, wx, wh, b);
        benchmark::DoNotOptimize(hn.value().data());
        benchmark::DoNotOptimize(cn.value().data());
    }
}
BENCHMARK(BM_lstm_step);

static void BM_attention_segment(benchmark::State& state) {
    Rng rng(3);
    const int64_t t_steps = 16, batch = 16, hidden = 256, mem = 512;
    auto e = rand_f(rng, {t_steps * batch, hidden});
    auto memory = rand_f(rng, {mem, batch, hidden});
    auto wq = rand_f(rng, {hidden, hidden});
    auto qs = rand_f(rng, {1, hidden});
    auto ks = rand_f(rng, {1, hidden});
    auto vs = rand_f(rng, {1, hidden});
    for (auto _ : state) {
        auto out = single_head_attention<float>(nullptr, e, memory, mem, t_steps, batch, wq, qs,
                                                ks, vs);
        benchmark::DoNotOptimize(out.value().data());
    }
}
BENCHMARK(BM_attention_segment);

static void BM_boom(benchmark::State& state) {
    Rng rng(4);
    const int64_t rows = 256, hidden = 256;
    auto x = rand_f(rng, {rows, hidden});
    auto w = rand_f(rng, {hidden, 4 * hidden});
    auto b = rand_f(rng, {4 * hidden});
    for (auto _ : state) {
        auto out = boom_forward<float>(nullptr, x, w, b);
        benchmark::DoNotOptimize(out.value().data());
    }
}
BENCHMARK(BM_boom);

// ---- whole model ----

static void BM_forward_segment(benchmark::State& state) {
    const int64_t hidden = state.range(0);
    Rng rng(5);
    auto model = ShaRnn<float>::init(bench_model_config(hidden), rng);
    const int64_t t_steps = 32, batch = 8;
    std::vector<int32_t> ids;
    for (int64_t i = 0; i < t_steps * batch; ++i)
        ids.push_back(static_cast<int32_t>(rng.below(256)));
    for (auto _ : state) {
        auto states = model.init_states(batch);
        auto logits = model.forward(nullptr, ids, t_steps, batch, states, false, nullptr);
        benchmark::DoNotOptimize(logits.value().data());
    }
    state.SetItemsProcessed(state.iterations() * t_steps * batch);  // positions scored
}
BENCHMARK(BM_forward_segment)->Arg(64)->Arg(256);

static void BM_train_step(benchmark::State& state) {
    const int64_t hidden = state.range(0);
    Rng rng(6);
    auto model = ShaRnn<float>::init(bench_model_config(hidden), rng);
    const int64_t t_steps = 32, batch = 8;
    std::vector<int32_t> ids, targets;
    for (int64_t i = 0; i < t_steps * batch; ++i) {
        ids.push_back(static_cast<int32_t>(rng.below(256)));
        targets.push_back(static_cast<int32_t>(rng.below(256)));
    }
    std::vector<Tensor<float>> params;
    model.visit_params([&](const std::string&, Tensor<float>& t) { params.push_back(t); });
    MinTrustLamb<float> opt((LambConfig()));
    for (auto _ : state) {
        for (auto& p : params) p.zero_grad();
        Tape<float> tape;
        auto states = model.init_states(batch);
        auto logits = model.forward(&tape, ids, t_steps, batch, states, false, nullptr);
        auto loss = cross_entropy_mean(&tape, logits.reshape({t_steps * batch, 256}), targets);
        tape.backward(loss);
        opt.step(params, 0.002);
        benchmark::DoNotOptimize(loss.value().data());
    }
    state.SetItemsProcessed(state.iterations() * t_steps * batch);  // positions learned
}
BENCHMARK(BM_train_step)->Arg(64)->Arg(256);

BENCHMARK_MAIN();
