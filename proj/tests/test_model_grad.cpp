#include "doctest.h"

#include <vector>

#include "sharnn/gradcheck.hpp"
#include "sharnn/model.hpp"
#include "testutil.hpp"

using namespace sharnn;

namespace {

ModelConfig grad_config() {
    ModelConfig cfg;
    cfg.vocab_size = 256;
    cfg.n_layers = 2;
    cfg.hidden = 16;
    cfg.boom_hidden = 64;
    cfg.attn_layers = {0};
    cfg.mem_window = 64;
    cfg.dropout_e = cfg.dropout_i = cfg.dropout_h = cfg.dropout_o = 0.0;
    return cfg;
}

}  // namespace

TEST_CASE("every parameter gradient of the full network passes finite differences") {
    Rng rng(77);
    auto model = ShaRnn<double>::init(grad_config(), rng);

    const int64_t t_steps = 8, batch = 2, mem = 3;
    std::vector<int32_t> ids, targets;
    for (int64_t i = 0; i < t_steps * batch; ++i) {
        ids.push_back(static_cast<int32_t>(rng.below(256)));
        targets.push_back(static_cast<int32_t>(rng.below(256)));
    }
    // A fixed, non-empty attention memory so the gradient path through the
    // gated past entries is exercised as well.
    std::vector<double> mem_vals;
    for (int64_t i = 0; i < mem * batch * 16; ++i) mem_vals.push_back(rng.uniform(-1.0, 1.0));

    auto f = [&](Tape<double>* tape) {
        auto states = model.init_states(batch);
        states[0].memory = Tensor<double>::from(mem_vals, {mem, batch, 16});
        states[0].mem_count = mem;
        auto logits = model.forward(tape, ids, t_steps, batch, states, false, nullptr);
        return cross_entropy_mean(tape, logits.reshape({t_steps * batch, 256}), targets);
    };

    std::vector<Tensor<double>> params;
    model.visit_params([&](const std::string&, Tensor<double>& t) { params.push_back(t); });
    // emb + 21 tensors in the attention block + 9 in the plain block.
    REQUIRE(params.size() == 31);

    FdOptions opt;
    opt.max_coords_per_tensor = 40;
    auto report = finite_difference_check<double>(f, params, opt);
    CHECK(report.max_rel_err < 1e-4);
    CHECK(report.coords_checked > 700);
}
