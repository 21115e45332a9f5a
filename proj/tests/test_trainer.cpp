#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "sharnn/checkpoint.hpp"
#include "sharnn/metrics.hpp"
#include "sharnn/model.hpp"
#include "sharnn/trainer.hpp"
#include "testutil.hpp"

using namespace sharnn;

namespace {

Config trainer_config() {
    Config cfg;
    cfg.model.vocab_size = 256;
    cfg.model.n_layers = 2;
    cfg.model.hidden = 16;
    cfg.model.boom_hidden = 64;
    cfg.model.attn_layers = {0};
    cfg.model.mem_window = 512;
    cfg.model.dropout_e = cfg.model.dropout_i = cfg.model.dropout_h = cfg.model.dropout_o = 0.0;
    cfg.train.epochs = 1;
    cfg.train.batch_size = 4;
    cfg.train.bptt = 16;
    cfg.train.eval_batch = 1;
    cfg.train.eval_bptt = 64;
    return cfg;
}

std::vector<uint8_t> random_bytes(int64_t n, uint64_t seed) {
    Rng rng(seed);
    std::vector<uint8_t> out;
    out.reserve(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) out.push_back(static_cast<uint8_t>(rng.below(256)));
    return out;
}

std::vector<uint8_t> repeating_pattern(int64_t n) {
    const std::string pat = "the quick fox! \n";  // 16 bytes
    std::vector<uint8_t> out;
    out.reserve(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) out.push_back(static_cast<uint8_t>(pat[i % pat.size()]));
    return out;
}

template <class S>
std::vector<S> fingerprint(ShaRnn<S>& model) {
    std::vector<int32_t> ids = {1, 2, 3, 4, 5, 6, 7, 8};
    auto states = model.init_states(2);
    auto logits = model.forward(nullptr, ids, 4, 2, states, false, nullptr);
    return {logits.value().begin(), logits.value().end()};
}

}  // namespace

// ------------------------------ evaluation ---------------------------------

TEST_CASE("identical logits cost exactly log2(vocab) bits and a certain row costs none") {
    std::vector<double> row(256, 0.37);
    std::vector<int32_t> target = {41};
    CHECK(detail::logit_rows_bits<double>(row, 1, 256, target) == 8.0);

    std::vector<double> sure(256, -60.0);
    sure[41] = 60.0;
    CHECK(detail::logit_rows_bits<double>(sure, 1, 256, target) < 1e-12);
}

TEST_CASE("uniform scoring reports exactly eight bits per byte") {
    Config cfg = trainer_config();
    Rng rng(3);
    auto model = ShaRnn<float>::init(cfg.model, rng);
    auto bytes = random_bytes(200, 5);

    EvalReport rep = evaluate_bpc(model, bytes, "valid", 1, 64, /*debug_uniform=*/true);
    CHECK(rep.split == "valid");
    CHECK(rep.n_positions == 199);
    CHECK(rep.total_bits == 8.0 * 199);
    CHECK(rep.bpc == 8.0);
}

TEST_CASE("evaluation bits match a naive per-position softmax oracle") {
    Config cfg = trainer_config();
    Rng rng(11);
    auto model = ShaRnn<double>::init(cfg.model, rng);
    auto bytes = random_bytes(100, 6);

    // One segment covers the whole slice, so a single forward pass with the
    // same reset state sees identical inputs.
    EvalReport rep = evaluate_bpc(model, bytes, "test", 1, 128);
    REQUIRE(rep.n_positions == 99);

    std::vector<int32_t> ids(bytes.begin(), bytes.end() - 1);
    auto states = model.init_states(1);
    auto logits = model.forward(nullptr, ids, 99, 1, states, false, nullptr);
    std::span<const double> vals = logits.value();
    double oracle = 0.0;
    for (int64_t t = 0; t < 99; ++t) {
        const double* x = vals.data() + t * 256;
        double denom = 0.0;
        for (int64_t j = 0; j < 256; ++j) denom += std::exp(x[j]);
        const double p = std::exp(x[bytes[static_cast<size_t>(t + 1)]]) / denom;
        oracle += -std::log2(p);
    }
    CHECK(std::abs(rep.total_bits - oracle) < 1e-9);
    CHECK(rep.bpc == doctest::Approx(oracle / 99).epsilon(1e-12));
}

TEST_CASE("evaluation is invariant to how the split is chunked") {
    Config cfg = trainer_config();
    Rng rng(17);
    auto model = ShaRnn<double>::init(cfg.model, rng);
    auto bytes = random_bytes(400, 8);

    EvalReport fine = evaluate_bpc(model, bytes, "valid", 1, 32);
    EvalReport coarse = evaluate_bpc(model, bytes, "valid", 1, 128);
    CHECK(fine.n_positions == coarse.n_positions);
    CHECK(std::abs(fine.total_bits - coarse.total_bits) < 1e-6);
}

TEST_CASE("evaluating an empty or one-byte split fails loudly") {
    Config cfg = trainer_config();
    Rng rng(19);
    auto model = ShaRnn<float>::init(cfg.model, rng);
    std::vector<uint8_t> empty;
    CHECK_THROWS_AS(evaluate_bpc(model, empty, "valid"), DataError);
    std::vector<uint8_t> one = {42};
    CHECK_THROWS_AS(evaluate_bpc(model, one, "valid"), DataError);
}

// ------------------------------- training ----------------------------------

TEST_CASE("the first optimization step sees a near-uniform eight-bit loss") {
    Config cfg = trainer_config();
    cfg.train.epochs = 1;
    cfg.train.max_steps = 1;
    Rng rng(23);
    auto model = ShaRnn<float>::init(cfg.model, rng);
    MinTrustLamb<float> opt(cfg.train.lamb);
    Rng train_rng(1);

    Corpus corpus;
    corpus.train = random_bytes(600, 9);
    auto res = train(model, opt, train_rng, corpus, cfg);
    CHECK(res.global_step == 1);
    CHECK(res.last_train_bits > 7.5);
    CHECK(res.last_train_bits < 8.5);
    CHECK(std::isnan(res.last_val_bpc));  // no validation split provided
}

TEST_CASE("training on a repeating pattern drives the loss down and keeps it down") {
    Config cfg = trainer_config();
    cfg.model.hidden = 64;
    cfg.model.boom_hidden = 256;
    cfg.train.epochs = 60;
    cfg.train.batch_size = 8;
    cfg.train.bptt = 32;
    cfg.train.lamb.lr = 0.004;
    cfg.train.half_lr_from_epoch = 1000;

    Corpus corpus;
    corpus.train = repeating_pattern(1024);
    corpus.valid = repeating_pattern(256);

    Rng rng(29);
    auto model = ShaRnn<float>::init(cfg.model, rng);
    MinTrustLamb<float> opt(cfg.train.lamb);
    Rng train_rng(2);

    std::vector<double> epoch_bits;
    TrainOptions opts;
    opts.log = [&](const std::string& line) {
        const size_t k = line.find("train_loss_bits=");
        REQUIRE(k != std::string::npos);
        epoch_bits.push_back(std::stod(line.substr(k + 16)));
    };
    auto res = train(model, opt, train_rng, corpus, cfg, opts);

    REQUIRE(epoch_bits.size() == 60);
    CHECK(res.last_train_bits < 1.0);
    CHECK(res.last_val_bpc < 1.0);
    // After the first couple of epochs the per-epoch loss never goes back up
    // (deterministic data, no dropout).
    for (size_t e = 3; e < epoch_bits.size(); ++e) {
        CHECK(epoch_bits[e] <= epoch_bits[e - 1] + 0.02);
    }
}

TEST_CASE("log lines carry the pinned fields in order") {
    Config cfg = trainer_config();
    cfg.train.epochs = 2;
    Corpus corpus;
    corpus.train = random_bytes(300, 12);
    corpus.valid = random_bytes(120, 13);

    Rng rng(31);
    auto model = ShaRnn<float>::init(cfg.model, rng);
    MinTrustLamb<float> opt(cfg.train.lamb);
    Rng train_rng(3);

    std::vector<std::string> lines;
    TrainOptions opts;
    opts.log = [&](const std::string& l) { lines.push_back(l); };
    train(model, opt, train_rng, corpus, cfg, opts);

    REQUIRE(lines.size() == 2);
    CHECK(lines[0].rfind("epoch=0 step=", 0) == 0);
    CHECK(lines[1].rfind("epoch=1 step=", 0) == 0);
    for (const std::string& l : lines) {
        size_t p_step = l.find(" step=");
        size_t p_lr = l.find(" lr=");
        size_t p_bits = l.find(" train_loss_bits=");
        size_t p_bpc = l.find(" val_bpc=");
        REQUIRE(p_step != std::string::npos);
        REQUIRE(p_lr != std::string::npos);
        REQUIRE(p_bits != std::string::npos);
        REQUIRE(p_bpc != std::string::npos);
        CHECK(p_step < p_lr);
        CHECK(p_lr < p_bits);
        CHECK(p_bits < p_bpc);
        // both loss fields print with four decimals
        CHECK(l[l.size() - 5] == '.');
    }
}

TEST_CASE("the step budget stops training mid-schedule") {
    Config cfg = trainer_config();
    cfg.train.epochs = 100;
    cfg.train.max_steps = 5;
    Corpus corpus;
    corpus.train = random_bytes(600, 14);

    Rng rng(37);
    auto model = ShaRnn<float>::init(cfg.model, rng);
    MinTrustLamb<float> opt(cfg.train.lamb);
    Rng train_rng(4);
    auto res = train(model, opt, train_rng, corpus, cfg);
    CHECK(res.global_step == 5);
    CHECK(res.hit_step_budget);
    CHECK(opt.step_count() == 5);
}

TEST_CASE("a schedule with no epochs left returns without stepping") {
    Config cfg = trainer_config();
    cfg.train.epochs = 3;
    Corpus corpus;
    corpus.train = random_bytes(300, 15);

    Rng rng(41);
    auto model = ShaRnn<float>::init(cfg.model, rng);
    auto before = fingerprint(model);
    MinTrustLamb<float> opt(cfg.train.lamb);
    Rng train_rng(5);
    auto res = train(model, opt, train_rng, corpus, cfg, {}, /*start_epoch=*/3,
                     /*start_step=*/30);
    CHECK(res.global_step == 30);
    CHECK(res.epochs_completed == 3);
    auto after = fingerprint(model);
    CHECK(std::memcmp(before.data(), after.data(), before.size() * sizeof(float)) == 0);
}

TEST_CASE("a poisoned parameter aborts training with a diagnostic") {
    Config cfg = trainer_config();
    Corpus corpus;
    corpus.train = random_bytes(300, 16);

    Rng rng(43);
    auto model = ShaRnn<float>::init(cfg.model, rng);
    for (float& v : model.emb.value()) v = INFINITY;
    MinTrustLamb<float> opt(cfg.train.lamb);
    Rng train_rng(6);
    try {
        train(model, opt, train_rng, corpus, cfg);
        FAIL("expected NumericError");
    } catch (const NumericError& ex) {
        const std::string msg = ex.what();
        CHECK(msg.find("segment 0") != std::string::npos);
        CHECK(msg.find("lr") != std::string::npos);
        CHECK(msg.find("grad l2 norm") != std::string::npos);
    }
    CHECK(opt.step_count() == 0);
}

TEST_CASE("a resumed run replays the uninterrupted trajectory bit for bit") {
    Config cfg = trainer_config();
    cfg.train.epochs = 4;
    cfg.model.dropout_i = 0.1;  // active dropout makes the RNG stream load-bearing
    Corpus corpus;
    corpus.train = random_bytes(600, 17);
    corpus.valid = random_bytes(150, 18);

    Rng init_rng(99);
    auto model_a = ShaRnn<float>::init(cfg.model, init_rng);
    auto model_b = model_a.clone();

    // Uninterrupted 4-epoch run.
    MinTrustLamb<float> opt_a(cfg.train.lamb);
    Rng rng_a(7);
    std::vector<std::string> log_a;
    TrainOptions opts_a;
    opts_a.log = [&](const std::string& l) { log_a.push_back(l); };
    train(model_a, opt_a, rng_a, corpus, cfg, opts_a);

    // Two epochs, checkpoint, then resume from the file for two more.
    const std::string path = "trainer_resume_test.bin";
    Config cfg_head = cfg;
    cfg_head.train.epochs = 2;
    MinTrustLamb<float> opt_b(cfg.train.lamb);
    Rng rng_b(7);
    TrainOptions opts_b;
    opts_b.checkpoint_path = path;
    train(model_b, opt_b, rng_b, corpus, cfg_head, opts_b);

    auto loaded = load_checkpoint<float>(path);
    std::remove(path.c_str());
    REQUIRE(loaded.epoch == 2);
    MinTrustLamb<float> opt_c(cfg.train.lamb);
    opt_c.restore(loaded.opt_m, loaded.opt_v, loaded.opt_t);
    Rng rng_c(0);
    rng_c.set_state_hex(loaded.rng_hex);

    std::vector<std::string> log_c;
    TrainOptions opts_c;
    opts_c.log = [&](const std::string& l) { log_c.push_back(l); };
    train(loaded.model, opt_c, rng_c, corpus, cfg, opts_c, loaded.epoch, loaded.step);

    // The resumed epochs log the same lines the one-shot run logged.
    REQUIRE(log_a.size() == 4);
    REQUIRE(log_c.size() == 2);
    CHECK(log_a[2] == log_c[0]);
    CHECK(log_a[3] == log_c[1]);

    auto fp_a = fingerprint(model_a);
    auto fp_c = fingerprint(loaded.model);
    CHECK(std::memcmp(fp_a.data(), fp_c.data(), fp_a.size() * sizeof(float)) == 0);
}

TEST_CASE("per-epoch checkpoints record completed progress") {
    Config cfg = trainer_config();
    cfg.train.epochs = 2;
    Corpus corpus;
    corpus.train = random_bytes(300, 20);  // 75 rows per column -> 5 segments
    Rng rng(47);
    auto model = ShaRnn<float>::init(cfg.model, rng);
    MinTrustLamb<float> opt(cfg.train.lamb);
    Rng train_rng(8);
    const std::string path = "trainer_epoch_ckpt.bin";
    TrainOptions opts;
    opts.checkpoint_path = path;
    auto res = train(model, opt, train_rng, corpus, cfg, opts);

    auto loaded = load_checkpoint<float>(path);
    std::remove(path.c_str());
    CHECK(loaded.epoch == 2);
    CHECK(loaded.step == res.global_step);
    CHECK(loaded.opt_t == opt.step_count());
}

// ------------------------------ generation ---------------------------------

TEST_CASE("generation is deterministic at zero temperature and seed-stable otherwise") {
    Config cfg = trainer_config();
    Rng rng(53);
    auto model = ShaRnn<float>::init(cfg.model, rng);
    const std::vector<uint8_t> prime = {'a', 'b'};

    Rng g1(1), g2(1);
    auto greedy1 = generate(model, prime, 64, 0.0, g1);
    auto greedy2 = generate(model, prime, 64, 0.0, g2);
    REQUIRE(greedy1.size() == 64);
    CHECK(greedy1 == greedy2);

    Rng s1(1), s2(1), s3(2);
    auto samp1 = generate(model, prime, 64, 0.9, s1);
    auto samp2 = generate(model, prime, 64, 0.9, s2);
    auto samp3 = generate(model, prime, 64, 0.9, s3);
    CHECK(samp1 == samp2);
    CHECK(samp1 != samp3);

    std::vector<uint8_t> empty_prime;
    Rng g4(1);
    auto from_newline = generate(model, empty_prime, 8, 0.0, g4);
    CHECK(from_newline.size() == 8);

    Rng g5(1);
    CHECK_THROWS_AS(generate(model, prime, -1, 0.0, g5), ContractError);
    Rng g6(1);
    CHECK_THROWS_AS(generate(model, prime, 4, -0.5, g6), ContractError);
}

// ------------------------------- metrics -----------------------------------

TEST_CASE("word perplexity conversion matches its closed form") {
    CHECK(bpc_to_word_ppl(1.0, 10, 10) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(bpc_to_word_ppl(1.0, 50, 10) == doctest::Approx(32.0).epsilon(1e-15));
    CHECK(bpc_to_word_ppl(0.0, 123, 45) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK_THROWS_AS(bpc_to_word_ppl(1.0, 0, 10), ContractError);
    CHECK_THROWS_AS(bpc_to_word_ppl(1.0, 10, 0), ContractError);
}
