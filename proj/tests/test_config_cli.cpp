#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "alasca/config.hpp"

using namespace alasca;
namespace fs = std::filesystem;

namespace {

#ifndef ALASCA_CLI_PATH
#define ALASCA_CLI_PATH "alasca"
#endif

std::string cli_path() {
    if (const char* env = std::getenv("ALASCA_CLI_PATH")) return env;
    return ALASCA_CLI_PATH;
}

struct RunResult {
    int exit_code;
    std::string output;  // stdout + stderr
};

RunResult run_cli(const std::string& args) {
    const fs::path out = fs::temp_directory_path() /
                         ("alasca_cli_out_" + std::to_string(::getpid()) + ".txt");
    const std::string cmd = cli_path() + " " + args + " > " + out.string() + " 2>&1";
    const int raw = std::system(cmd.c_str());
    std::ifstream in(out);
    std::stringstream ss;
    ss << in.rdbuf();
    fs::remove(out);
    return {WEXITSTATUS(raw), ss.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path write_config(const std::string& body, const std::string& name) {
    const fs::path p = fs::temp_directory_path() / name;
    std::ofstream out(p);
    out << body;
    return p;
}

const std::string kTinyConfig =
    "data.n = 80\n"
    "data.dim = 5\n"
    "data.classes = 3\n"
    "data.separation = 3.0\n"
    "data.noise = sym\n"
    "data.epsilon = 0.3\n"
    "data.test_n = 40\n"
    "train.epochs = 3\n"
    "train.warmup = 1\n"
    "train.batch = 16\n"
    "net.width = 8\n";

}  // namespace

TEST_CASE("config defaults mirror the reference hyperparameters") {
    const auto cfg = parse_config_text("data.n = 100\n");
    CHECK(cfg.train.lambda == 2.0);
    CHECK(cfg.train.w_ema == 0.7);
    CHECK(cfg.train.tau == 3.0);
    CHECK(cfg.train.warmup_epochs == 20);
    CHECK(cfg.train.alpha.initial == 0.1);
    CHECK(cfg.train.alpha.final == 0.7);
    CHECK(cfg.train.alpha.ramp_fraction == 0.5);
    CHECK(cfg.train.momentum == 0.9);
    CHECK(cfg.train.lnl.kind == LnlKind::kCe);
}

TEST_CASE("config rejects unknown keys by name") {
    CHECK_THROWS_WITH_AS(parse_config_text("data.n=10\nbogus.key=1\n"),
                         doctest::Contains("bogus.key"), ContractError);
}

TEST_CASE("config requires a data source and validates ranges") {
    CHECK_THROWS_WITH_AS(parse_config_text("train.lambda=1.0\n"), doctest::Contains("data.n"),
                         ContractError);
    CHECK_THROWS_AS(parse_config_text("data.n=10\ndata.epsilon=1.5\n"), ContractError);
    CHECK_THROWS_AS(parse_config_text("data.n=10\ntrain.lambda=-1\n"), ContractError);
    CHECK_THROWS_WITH_AS(parse_config_text("data.path=x.csv\n"),
                         doctest::Contains("data.test_path"), ContractError);
    CHECK_THROWS_AS(parse_config_text("data.n=ten\n"), ContractError);
    CHECK_THROWS_AS(parse_config_text("data.n 10\n"), ContractError);
}

TEST_CASE("small-loss keep fraction defaults to 1 - epsilon") {
    const auto cfg =
        parse_config_text("data.n=100\ndata.epsilon=0.4\ndata.noise=sym\ntrain.lnl=small-loss\n");
    CHECK(cfg.train.lnl.keep_fraction == doctest::Approx(0.6));
    const auto forced = parse_config_text(
        "data.n=100\ndata.epsilon=0.4\ndata.noise=sym\ntrain.lnl=small-loss\ntrain.keep_fraction=0.5\n");
    CHECK(forced.train.lnl.keep_fraction == doctest::Approx(0.5));
}

TEST_CASE("config digest is stable and sensitive") {
    const auto a = parse_config_text("data.n = 100\n");
    const auto b = parse_config_text("data.n=100  # comment\n");
    CHECK(a.digest() == b.digest());
    const auto c = parse_config_text("data.n = 100\ntrain.seed = 2\n");
    CHECK(a.digest() != c.digest());
}

TEST_CASE("materialize_data honors the noise spec") {
    DataSpec spec;
    spec.n = 400;
    spec.dim = 6;
    spec.classes = 4;
    spec.noise = NoiseKind::kSymmetric;
    spec.epsilon = 0.4;
    spec.test_n = 100;
    const auto [train_ds, test_ds] = materialize_data(spec);
    CHECK(train_ds.size() == 400);
    CHECK(test_ds.size() == 100);
    CHECK(train_ds.flip_fraction() > 0.25);
    CHECK(test_ds.flip_fraction() == 0.0);
}

TEST_CASE("cli gen-data: round trip header and byte determinism") {
    const fs::path dir = fs::temp_directory_path();
    const fs::path f1 = dir / "alasca_cli_ds1.csv";
    const fs::path f2 = dir / "alasca_cli_ds2.csv";
    const std::string flags =
        "gen-data --n 200 --classes 4 --dim 6 --sep 2.0 --noise sym --eps 0.4 --seed 1 --out ";
    CHECK(run_cli(flags + f1.string()).exit_code == 0);
    CHECK(run_cli(flags + f2.string()).exit_code == 0);
    const std::string s1 = slurp(f1);
    CHECK(s1.rfind("6 4 200 sym 0.4 1", 0) == 0);
    CHECK(s1 == slurp(f2));
    fs::remove(f1);
    fs::remove(f2);
}

TEST_CASE("cli gen-data: out-of-range eps exits 2 naming the flag") {
    const auto res = run_cli("gen-data --n 10 --eps 1.5 --out /tmp/alasca_never.csv");
    CHECK(res.exit_code == 2);
    CHECK(res.output.find("--eps") != std::string::npos);
}

TEST_CASE("cli train: determinism and config errors") {
    const fs::path dir = fs::temp_directory_path();
    const auto cfg_path = write_config(kTinyConfig, "alasca_cli_cfg.txt");
    const fs::path out1 = dir / "alasca_run1";
    const fs::path out2 = dir / "alasca_run2";

    const auto r1 = run_cli("train --config " + cfg_path.string() + " --out " + out1.string() +
                            " --seed 7");
    REQUIRE(r1.exit_code == 0);
    const auto r2 = run_cli("train --config " + cfg_path.string() + " --out " + out2.string() +
                            " --seed 7");
    REQUIRE(r2.exit_code == 0);
    CHECK(slurp(out1 / "metrics.jsonl") == slurp(out2 / "metrics.jsonl"));
    CHECK(slurp(out1 / "checkpoint.bin") == slurp(out2 / "checkpoint.bin"));

    const auto bad = write_config("train.epochs = 3\n", "alasca_cli_bad.txt");
    const auto rbad = run_cli("train --config " + bad.string() + " --out " + out1.string());
    CHECK(rbad.exit_code == 2);
    CHECK(rbad.output.find("data.n") != std::string::npos);

    const auto unknown = write_config("data.n=10\nnot.a.key=1\n", "alasca_cli_unknown.txt");
    const auto runk = run_cli("train --config " + unknown.string() + " --out " + out1.string());
    CHECK(runk.exit_code == 2);
    CHECK(runk.output.find("not.a.key") != std::string::npos);

    fs::remove_all(out1);
    fs::remove_all(out2);
    fs::remove(cfg_path);
    fs::remove(bad);
    fs::remove(unknown);
}

TEST_CASE("cli verify-theory: pass, degenerate, and tampered tolerances") {
    const fs::path report = fs::temp_directory_path() / "alasca_cli_theory.jsonl";
    const auto ok = run_cli("verify-theory --trials 100 --out " + report.string());
    CHECK(ok.exit_code == 0);
    CHECK(ok.output.find("[PASS]") != std::string::npos);
    CHECK(fs::exists(report));

    const auto degen =
        run_cli("verify-theory --trials 50 --expect-degenerate --out " + report.string());
    CHECK(degen.exit_code == 0);
    CHECK(degen.output.find("degenerate.witness_found") != std::string::npos);

    const auto tampered =
        run_cli("verify-theory --trials 50 --tol-scale 1e-30 --out " + report.string());
    CHECK(tampered.exit_code == 1);
    CHECK(tampered.output.find("[FAIL]") != std::string::npos);
    fs::remove(report);
}

TEST_CASE("cli rejects unknown subcommands with exit 2") {
    CHECK(run_cli("frobnicate").exit_code == 2);
}
