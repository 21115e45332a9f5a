#include "doctest.h"

#include <sys/wait.h>

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "sharnn/checkpoint_format.hpp"
#include "sharnn/data.hpp"

using namespace sharnn;
namespace fs = std::filesystem;

namespace {

// The binary under test; the build system injects its location.
std::string cli_bin() {
    const char* p = std::getenv("SHARNN_CLI_BIN");
    REQUIRE_MESSAGE(p != nullptr, "SHARNN_CLI_BIN must point at the sharnn binary");
    return p;
}

struct CmdResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Runs the tool with shell-quoted args, capturing exit code and both streams.
CmdResult run_cli(const std::string& args, const std::string& env_prefix = "") {
    static int counter = 0;
    const std::string tag = std::to_string(counter++);
    const std::string so = "cli_stdout_" + tag + ".txt";
    const std::string se = "cli_stderr_" + tag + ".txt";
    const std::string cmd =
        env_prefix + (env_prefix.empty() ? "" : " ") + cli_bin() + " " + args + " >" + so + " 2>" + se;
    const int status = std::system(cmd.c_str());
    CmdResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(so);
    r.err = slurp(se);
    std::remove(so.c_str());
    std::remove(se.c_str());
    return r;
}

// Shared fixture: a prepared corpus directory, a toy config and a trained
// checkpoint, built once because training (even a toy) dominates runtime.
struct CliFixture {
    fs::path dir = "cli_scratch";
    std::string data_dir() const { return (dir / "data").string(); }
    std::string config_path() const { return (dir / "toy.cfg").string(); }
    std::string ckpt_path() const { return (dir / "toy.ckpt").string(); }

    CliFixture() {
        fs::create_directories(dir);
        if (fs::exists(ckpt_path())) return;  // already built by an earlier case

        // A patterned corpus: repeating 16-byte phrase, 4 KB.
        std::vector<uint8_t> bytes;
        const std::string pat = "the quick fox! \n";
        for (int i = 0; i < 4096; ++i) bytes.push_back(static_cast<uint8_t>(pat[i % pat.size()]));
        write_bytes((dir / "corpus.raw").string(), bytes);

        std::ofstream cfg(config_path());
        cfg << "model.n_layers=2\n"
               "model.hidden=32\n"
               "model.boom_hidden=128\n"
               "model.attn_layers=0\n"
               "model.mem_window=128\n"
               "model.dropout_i=0.0\n"
               "model.dropout_h=0.0\n"
               "model.dropout_o=0.0\n"
               "train.epochs=8\n"
               "train.batch_size=8\n"
               "train.bptt=32\n"
               "train.eval_bptt=64\n"
               "train.seed=11\n"
               "lamb.lr=0.004\n";
        cfg.close();

        auto prep = run_cli("prepare --input " + (dir / "corpus.raw").string() + " --outdir " +
                            data_dir());
        REQUIRE(prep.exit_code == 0);
        auto train = run_cli("train --config " + config_path() + " --data " + data_dir() +
                             " --checkpoint " + ckpt_path());
        REQUIRE_MESSAGE(train.exit_code == 0, train.err);
    }
};

}  // namespace

TEST_CASE("prepare splits 90/5/5 by default and honours custom fractions") {
    fs::create_directories("cli_scratch");
    std::vector<uint8_t> hundred(100);
    for (size_t i = 0; i < hundred.size(); ++i) hundred[i] = static_cast<uint8_t>(i);
    write_bytes("cli_scratch/hundred.raw", hundred);

    auto r = run_cli("prepare --input cli_scratch/hundred.raw --outdir cli_scratch/p1");
    CHECK(r.exit_code == 0);
    CHECK(r.out == "train=90 valid=5 test=5\n");
    CHECK(fs::file_size("cli_scratch/p1/train.bin") == 90);
    CHECK(fs::file_size("cli_scratch/p1/valid.bin") == 5);
    CHECK(fs::file_size("cli_scratch/p1/test.bin") == 5);
    // boundary bytes land where the split math says
    auto valid = read_bytes("cli_scratch/p1/valid.bin");
    CHECK(valid[0] == 90);

    std::vector<uint8_t> thousand(1000, 7);
    write_bytes("cli_scratch/thousand.raw", thousand);
    auto r2 = run_cli(
        "prepare --input cli_scratch/thousand.raw --outdir cli_scratch/p2 --fractions 0.5,0.3,0.2");
    CHECK(r2.exit_code == 0);
    CHECK(r2.out == "train=500 valid=300 test=200\n");
}

TEST_CASE("prepare maps bad inputs to the pinned exit codes") {
    auto missing = run_cli("prepare --input cli_scratch/nope.raw --outdir cli_scratch/p3");
    CHECK(missing.exit_code == 1);
    CHECK(missing.err.find("nope.raw") != std::string::npos);  // message names the path

    auto bad_frac = run_cli(
        "prepare --input cli_scratch/hundred.raw --outdir cli_scratch/p4 --fractions 0.9,0.2,0.2");
    CHECK(bad_frac.exit_code == 2);

    // A corpus below the 100-byte floor is a data problem, not a usage one.
    std::vector<uint8_t> ten(10, 1);
    write_bytes("cli_scratch/ten.raw", ten);
    auto tiny = run_cli("prepare --input cli_scratch/ten.raw --outdir cli_scratch/p5");
    CHECK(tiny.exit_code == 1);
}

TEST_CASE("a toy training run memorizes its corpus and logs the pinned line format") {
    CliFixture fx;
    // Rebuild the final epoch line by re-running eval on the checkpoint: the
    // train log itself was consumed inside the fixture, so re-train two extra
    // epochs from the file to see fresh lines.
    auto more = run_cli("train --config " + fx.config_path() + " --data " + fx.data_dir() +
                        " --checkpoint " + fx.ckpt_path() + " --resume");
    CHECK(more.exit_code == 0);
    CHECK(more.out.empty());  // schedule already finished: nothing to do, exit 0

    auto eval = run_cli("eval --checkpoint " + fx.ckpt_path() + " --data " + fx.data_dir() +
                        " --split train");
    CHECK(eval.exit_code == 0);
    REQUIRE(eval.out.rfind("bpc=", 0) == 0);
    CHECK(std::stod(eval.out.substr(4)) < 1.0);  // the pattern was learned

    // Deterministic: evaluating twice prints identical bytes.
    auto eval2 = run_cli("eval --checkpoint " + fx.ckpt_path() + " --data " + fx.data_dir() +
                         " --split train");
    CHECK(eval2.out == eval.out);
}

TEST_CASE("train reports config problems as usage errors with the offending detail") {
    CliFixture fx;
    std::ofstream bad("cli_scratch/bad.cfg");
    bad << "model.hidden=32\nmodel.frobnicate=1\n";
    bad.close();
    auto r = run_cli("train --config cli_scratch/bad.cfg --data " + fx.data_dir() +
                     " --checkpoint cli_scratch/x.ckpt");
    CHECK(r.exit_code == 2);
    CHECK(r.err.find("frobnicate") != std::string::npos);
    CHECK(r.err.find("line 2") != std::string::npos);

    auto gone = run_cli("train --config cli_scratch/gone.cfg --data " + fx.data_dir() +
                        " --checkpoint cli_scratch/x.ckpt");
    CHECK(gone.exit_code == 1);
}

TEST_CASE("eval handles uniform debug scoring, determinism and bad splits") {
    CliFixture fx;
    auto uni = run_cli("eval --checkpoint " + fx.ckpt_path() + " --data " + fx.data_dir() +
                       " --split valid --debug-uniform");
    CHECK(uni.exit_code == 0);
    CHECK(uni.out == "bpc=8.0000\n");

    auto typo = run_cli("eval --checkpoint " + fx.ckpt_path() + " --data " + fx.data_dir() +
                        " --split validation");
    CHECK(typo.exit_code == 2);

    auto nofile = run_cli("eval --checkpoint cli_scratch/absent.ckpt --data " + fx.data_dir() +
                          " --split valid");
    CHECK(nofile.exit_code == 1);
}

TEST_CASE("eval refuses a checkpoint whose vocabulary is not bytes") {
    CliFixture fx;
    // Rewrite the stored config to claim a 300-symbol vocabulary; the tensors
    // no longer match it, so rebuild them to the bigger shape too.
    auto raw = ckpt::read_checkpoint_file(fx.ckpt_path());
    raw.meta["model.vocab_size"] = "300";
    for (auto& t : raw.tensors) {
        if (t.name == "emb" || t.name == "opt.m.emb" || t.name == "opt.v.emb") {
            if (t.dims.size() == 2)
                t.dims[0] = 300;
            else
                t.dims[0] = 300 * 32;
            t.data.assign(300 * 32, 0.5f);
        }
    }
    ckpt::write_checkpoint_file("cli_scratch/vocab300.ckpt", raw);
    auto r = run_cli("eval --checkpoint cli_scratch/vocab300.ckpt --data " + fx.data_dir() +
                     " --split valid");
    CHECK(r.exit_code == 4);
}

TEST_CASE("generate is deterministic at zero temperature and reproduces the pattern") {
    CliFixture fx;
    const std::string gen_cmd = "generate --checkpoint " + fx.ckpt_path() +
                                " --prime \"the quick\" --length 64 --temperature 0";
    auto a = run_cli(gen_cmd);
    auto b = run_cli(gen_cmd);
    CHECK(a.exit_code == 0);
    REQUIRE(a.out.size() == 64);
    CHECK(a.out == b.out);

    // The memorized 16-byte phrase continues from the prime.
    const std::string pat = "the quick fox! \n";
    std::string expected;
    for (size_t i = 0; i < 64; ++i) expected += pat[(9 + i) % pat.size()];
    size_t agree = 0;
    for (size_t i = 0; i < 64; ++i) agree += (a.out[i] == expected[i]);
    CHECK(agree >= 61);  // >= 95% of 64
}

TEST_CASE("generate seeding: flag beats environment beats config") {
    CliFixture fx;
    // A temperature high enough to flatten even a memorized distribution, so
    // different seeds almost surely produce different bytes.
    const std::string base = "generate --checkpoint " + fx.ckpt_path() +
                             " --prime q --length 48 --temperature 50";
    auto env1 = run_cli(base, "SHARNN_SEED=1234");
    auto env1b = run_cli(base, "SHARNN_SEED=1234");
    auto env2 = run_cli(base, "SHARNN_SEED=99");
    CHECK(env1.exit_code == 0);
    CHECK(env1.out == env1b.out);
    CHECK(env1.out != env2.out);

    auto flag = run_cli(base + " --seed 77", "SHARNN_SEED=1234");
    auto flag_b = run_cli(base + " --seed 77");
    CHECK(flag.out == flag_b.out);  // the flag wins over the environment
    CHECK(flag.out != env1.out);

    auto bad_env = run_cli(base, "SHARNN_SEED=pumpkin");
    CHECK(bad_env.exit_code == 2);
}

TEST_CASE("fold drops the gate weights once and only once") {
    CliFixture fx;
    auto r = run_cli("fold --in " + fx.ckpt_path() + " --out cli_scratch/folded.ckpt");
    CHECK(r.exit_code == 0);
    // 3 gates of 2*32*32 + 32 scalars each
    CHECK(r.out == "params_before=40864 params_after=34624\n");

    auto again = run_cli("fold --in cli_scratch/folded.ckpt --out cli_scratch/folded2.ckpt");
    CHECK(again.exit_code == 5);

    // Folding changes no prediction: bpc identical to four decimals.
    auto before = run_cli("eval --checkpoint " + fx.ckpt_path() + " --data " + fx.data_dir() +
                          " --split valid");
    auto after = run_cli("eval --checkpoint cli_scratch/folded.ckpt --data " + fx.data_dir() +
                         " --split valid");
    CHECK(before.out == after.out);
}

TEST_CASE("corrupting one checkpoint byte is detected on load") {
    CliFixture fx;
    auto bytes = read_bytes(fx.ckpt_path());
    bytes[bytes.size() / 2] ^= 0x40;
    write_bytes("cli_scratch/corrupt.ckpt", bytes);
    auto r = run_cli("eval --checkpoint cli_scratch/corrupt.ckpt --data " + fx.data_dir() +
                     " --split valid");
    CHECK(r.exit_code == 1);
}

TEST_CASE("perplexity conversion prints six significant digits and a caveat") {
    auto two = run_cli("ppl-convert --bpc 1.0 --chars 10 --words 10");
    CHECK(two.exit_code == 0);
    CHECK(two.out == "ppl=2.00000\n");
    CHECK(!two.err.empty());  // the equal-entropy caveat

    auto thirtytwo = run_cli("ppl-convert --bpc 1.0 --chars 50 --words 10");
    CHECK(thirtytwo.out == "ppl=32.0000\n");

    auto zero = run_cli("ppl-convert --bpc 1.0 --chars 5 --words 0");
    CHECK(zero.exit_code == 2);
}

TEST_CASE("usage problems exit with code 2") {
    auto nothing = run_cli("");
    CHECK(nothing.exit_code == 2);
    auto unknown = run_cli("frobnicate --xyz");
    CHECK(unknown.exit_code == 2);
    auto help = run_cli("--help");
    CHECK(help.exit_code == 0);
    CHECK(help.out.find("prepare") != std::string::npos);
}
