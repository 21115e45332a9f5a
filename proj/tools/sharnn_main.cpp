// Command-line surface for the byte-level language model: prepare a corpus,
// train, evaluate, generate, fold a checkpoint for deployment, and convert
// bits-per-character into a word-level perplexity estimate.
//
// Exit codes are part of the contract: 0 success, 1 file or data problems,
// 2 usage or config problems, 3 training aborted on a non-finite loss,
// 4 checkpoint vocabulary does not match byte data, 5 checkpoint already
// folded. Standard output carries machine-readable results only; diagnostics
// go to standard error.

#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sharnn/checkpoint.hpp"
#include "sharnn/config.hpp"
#include "sharnn/data.hpp"
#include "sharnn/errors.hpp"
#include "sharnn/metrics.hpp"
#include "sharnn/model.hpp"
#include "sharnn/optimizer.hpp"
#include "sharnn/trainer.hpp"

namespace {

using namespace sharnn;

constexpr int kExitOk = 0;
constexpr int kExitIo = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitVocab = 4;
constexpr int kExitFolded = 5;

void complain(const std::string& msg) { std::fprintf(stderr, "error: %s\n", msg.c_str()); }

// --seed flag beats the SHARNN_SEED environment variable beats the config.
uint64_t resolve_seed(bool flag_given, uint64_t flag_value, uint64_t config_seed) {
    if (flag_given) return flag_value;
    if (const char* env = std::getenv("SHARNN_SEED")) {
        char* end = nullptr;
        const unsigned long long v = std::strtoull(env, &end, 10);
        if (end == env || *end != '\0')
            throw ConfigError(std::string("SHARNN_SEED is not a number: '") + env + "'");
        return static_cast<uint64_t>(v);
    }
    return config_seed;
}

std::string split_path(const std::string& dir, const std::string& split) {
    return (std::filesystem::path(dir) / (split + ".bin")).string();
}

// ------------------------------- prepare -----------------------------------

struct PrepareArgs {
    std::string input;
    std::string outdir;
    std::string fractions = "0.9,0.05,0.05";
};

int cmd_prepare(const PrepareArgs& a) {
    double f[3];
    if (std::sscanf(a.fractions.c_str(), "%lf,%lf,%lf", &f[0], &f[1], &f[2]) != 3) {
        complain("--fractions wants three comma-separated numbers, got '" + a.fractions + "'");
        return kExitUsage;
    }
    if (f[0] < 0 || f[1] < 0 || f[2] < 0 || f[0] + f[1] + f[2] > 1.0 + 1e-12) {
        complain("--fractions must be non-negative and sum to at most 1.0");
        return kExitUsage;
    }
    Corpus corpus = split_bytes(read_bytes(a.input), f[0], f[1], f[2]);
    std::filesystem::create_directories(a.outdir);
    write_bytes(split_path(a.outdir, "train"), corpus.train);
    write_bytes(split_path(a.outdir, "valid"), corpus.valid);
    write_bytes(split_path(a.outdir, "test"), corpus.test);
    std::printf("train=%zu valid=%zu test=%zu\n", corpus.train.size(), corpus.valid.size(),
                corpus.test.size());
    return kExitOk;
}

// -------------------------------- train ------------------------------------

struct TrainArgs {
    std::string config;
    std::string data;
    std::string checkpoint;
    bool resume = false;
    uint64_t seed = 0;
    bool seed_given = false;
};

template <class S>
int run_train(const TrainArgs& a, const Config& cfg) {
    Corpus corpus;
    corpus.train = read_bytes(split_path(a.data, "train"));
    corpus.valid = read_bytes(split_path(a.data, "valid"));

    Rng rng(resolve_seed(a.seed_given, a.seed, cfg.train.seed));
    ShaRnn<S> model;
    MinTrustLamb<S> opt(cfg.train.lamb);
    int64_t start_epoch = 0, start_step = 0;

    if (a.resume) {
        LoadedCheckpoint<S> loaded = load_checkpoint<S>(a.checkpoint);
        Config normalized = loaded.cfg;  // schedule may change on resume; the model may not
        normalized.train = cfg.train;
        if (render_config(normalized) != render_config(cfg)) {
            complain("checkpoint '" + a.checkpoint + "' was trained with a different model config");
            return kExitUsage;
        }
        if (loaded.model.any_gate_folded()) {
            complain("checkpoint '" + a.checkpoint + "' is folded; training cannot resume from it");
            return kExitUsage;
        }
        model = std::move(loaded.model);
        if (loaded.has_optimizer_state()) opt.restore(loaded.opt_m, loaded.opt_v, loaded.opt_t);
        if (!loaded.rng_hex.empty()) rng.set_state_hex(loaded.rng_hex);
        start_epoch = loaded.epoch;
        start_step = loaded.step;
    } else {
        model = ShaRnn<S>::init(cfg.model, rng);
    }

    TrainOptions opts;
    opts.checkpoint_path = a.checkpoint;
    opts.log = [](const std::string& line) {
        std::printf("%s\n", line.c_str());
        std::fflush(stdout);
    };
    train(model, opt, rng, corpus, cfg, opts, start_epoch, start_step);
    return kExitOk;
}

int cmd_train(const TrainArgs& a) {
    const Config cfg = load_config_file(a.config);
    if (cfg.train.precision == "float64") return run_train<double>(a, cfg);
    return run_train<float>(a, cfg);
}

// --------------------------------- eval ------------------------------------

struct EvalArgs {
    std::string checkpoint;
    std::string data;
    std::string split = "valid";
    bool debug_uniform = false;
};

template <class S>
int run_eval(const EvalArgs& a) {
    LoadedCheckpoint<S> loaded = load_checkpoint<S>(a.checkpoint);
    std::vector<uint8_t> bytes = read_bytes(split_path(a.data, a.split));
    if (loaded.cfg.model.vocab_size != 256) {
        complain("checkpoint speaks a vocabulary of " +
                 std::to_string(loaded.cfg.model.vocab_size) + " symbols, byte data has 256");
        return kExitVocab;
    }
    EvalReport rep = evaluate_bpc(loaded.model, bytes, a.split, loaded.cfg.train.eval_batch,
                                  loaded.cfg.train.eval_bptt, a.debug_uniform);
    std::printf("bpc=%.4f\n", rep.bpc);
    return kExitOk;
}

int cmd_eval(const EvalArgs& a) {
    // Peek at the stored precision so evaluation matches the training engine.
    ckpt::RawCheckpoint raw = ckpt::read_checkpoint_file(a.checkpoint);
    if (raw.meta.count("train.precision") && raw.meta.at("train.precision") == "float64")
        return run_eval<double>(a);
    return run_eval<float>(a);
}

// ------------------------------- generate ----------------------------------

struct GenerateArgs {
    std::string checkpoint;
    std::string prime;
    int64_t length = 256;
    double temperature = 1.0;
    uint64_t seed = 0;
    bool seed_given = false;
};

int cmd_generate(const GenerateArgs& a) {
    LoadedCheckpoint<float> loaded = load_checkpoint<float>(a.checkpoint);
    Rng rng(resolve_seed(a.seed_given, a.seed, loaded.cfg.train.seed));
    std::vector<uint8_t> prime(a.prime.begin(), a.prime.end());
    std::vector<uint8_t> out = generate(loaded.model, prime, a.length, a.temperature, rng);
    std::fwrite(out.data(), 1, out.size(), stdout);
    std::fflush(stdout);
    return kExitOk;
}

// --------------------------------- fold ------------------------------------

struct FoldArgs {
    std::string in;
    std::string out;
};

int cmd_fold(const FoldArgs& a) {
    LoadedCheckpoint<float> loaded = from_raw_checkpoint<float>(ckpt::read_checkpoint_file(a.in));
    if (loaded.model.any_gate_folded()) {
        complain("checkpoint '" + a.in + "' is already folded");
        return kExitFolded;
    }
    const int64_t before = loaded.model.count_params();
    loaded.model.fold();
    const int64_t after = loaded.model.count_params();
    ckpt::write_checkpoint_file(
        a.out, to_raw_checkpoint(loaded.model, loaded.cfg, loaded.epoch, loaded.step));
    std::printf("params_before=%" PRId64 " params_after=%" PRId64 "\n", before, after);
    return kExitOk;
}

// ------------------------------ ppl-convert --------------------------------

struct PplArgs {
    double bpc = 0.0;
    int64_t chars = 0;
    int64_t words = 0;
};

int cmd_ppl_convert(const PplArgs& a) {
    if (a.chars <= 0 || a.words <= 0) {
        complain("--chars and --words must be positive");
        return kExitUsage;
    }
    const double ppl = bpc_to_word_ppl(a.bpc, static_cast<uint64_t>(a.chars),
                                       static_cast<uint64_t>(a.words));
    std::printf("ppl=%#.6g\n", ppl);
    std::fprintf(stderr,
                 "note: the conversion spreads bits evenly across characters and words; real "
                 "text does not, so treat the word perplexity as an estimate\n");
    return kExitOk;
}

// --------------------------------- main ------------------------------------

int dispatch(const std::function<int()>& body) {
    try {
        return body();
    } catch (const NumericError& e) {
        complain(e.what());
        return kExitNumeric;
    } catch (const ConfigError& e) {
        complain(e.what());
        return kExitUsage;
    } catch (const IoError& e) {
        complain(e.what());
        return kExitIo;
    } catch (const FormatError& e) {  // includes version and integrity failures
        complain(e.what());
        return kExitIo;
    } catch (const DataError& e) {
        complain(e.what());
        return kExitIo;
    } catch (const Error& e) {  // contract or shape misuse
        complain(e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        complain(e.what());
        return kExitUsage;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"byte-level language model: train, evaluate, generate"};
    app.require_subcommand(1);

    PrepareArgs pa;
    CLI::App* prepare = app.add_subcommand("prepare", "split a raw byte file into train/valid/test");
    prepare->add_option("--input", pa.input, "raw corpus file")->required();
    prepare->add_option("--outdir", pa.outdir, "directory for the split files")->required();
    prepare->add_option("--fractions", pa.fractions, "train,valid,test fractions (default 0.9,0.05,0.05)");

    TrainArgs ta;
    CLI::App* train_cmd = app.add_subcommand("train", "train a model on a prepared corpus");
    train_cmd->add_option("--config", ta.config, "key=value config file")->required();
    train_cmd->add_option("--data", ta.data, "prepared corpus directory")->required();
    train_cmd->add_option("--checkpoint", ta.checkpoint, "checkpoint file to write")->required();
    train_cmd->add_flag("--resume", ta.resume, "continue from the checkpoint file");
    CLI::Option* ts = train_cmd->add_option("--seed", ta.seed, "seed override");

    EvalArgs ea;
    CLI::App* eval_cmd = app.add_subcommand("eval", "report bits per character on a split");
    eval_cmd->add_option("--checkpoint", ea.checkpoint, "checkpoint file")->required();
    eval_cmd->add_option("--data", ea.data, "prepared corpus directory")->required();
    eval_cmd->add_option("--split", ea.split, "train, valid or test")
        ->check(CLI::IsMember({"train", "valid", "test"}));
    eval_cmd->add_flag("--debug-uniform", ea.debug_uniform,
                       "score a uniform distribution instead of the model");

    GenerateArgs ga;
    CLI::App* gen_cmd = app.add_subcommand("generate", "sample bytes from a model");
    gen_cmd->add_option("--checkpoint", ga.checkpoint, "checkpoint file")->required();
    gen_cmd->add_option("--prime", ga.prime, "priming text (default: a newline)");
    gen_cmd->add_option("--length", ga.length, "bytes to generate");
    gen_cmd->add_option("--temperature", ga.temperature, "0 picks the argmax");
    CLI::Option* gs = gen_cmd->add_option("--seed", ga.seed, "seed override");

    FoldArgs fa;
    CLI::App* fold_cmd = app.add_subcommand("fold", "fold gate weights into static vectors");
    fold_cmd->add_option("--in", fa.in, "checkpoint to fold")->required();
    fold_cmd->add_option("--out", fa.out, "folded checkpoint to write")->required();

    PplArgs ppa;
    CLI::App* ppl_cmd = app.add_subcommand("ppl-convert", "convert bpc to word perplexity");
    ppl_cmd->add_option("--bpc", ppa.bpc, "bits per character")->required();
    ppl_cmd->add_option("--chars", ppa.chars, "character count")->required();
    ppl_cmd->add_option("--words", ppa.words, "word count")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);  // prints help or the parse error
        return rc == 0 ? kExitOk : kExitUsage;
    }

    ta.seed_given = ts->count() > 0;
    ga.seed_given = gs->count() > 0;

    if (prepare->parsed()) return dispatch([&] { return cmd_prepare(pa); });
    if (train_cmd->parsed()) return dispatch([&] { return cmd_train(ta); });
    if (eval_cmd->parsed()) return dispatch([&] { return cmd_eval(ea); });
    if (gen_cmd->parsed()) return dispatch([&] { return cmd_generate(ga); });
    if (fold_cmd->parsed()) return dispatch([&] { return cmd_fold(fa); });
    if (ppl_cmd->parsed()) return dispatch([&] { return cmd_ppl_convert(ppa); });
    return kExitUsage;
}
