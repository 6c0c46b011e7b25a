// Experiment runner: dataset generation, training, and theory verification.
// Exit codes: 0 success, 1 check failure, 2 usage/config error, 3 divergence.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "alasca/config.hpp"
#include "alasca/noise.hpp"
#include "alasca/theory.hpp"
#include "alasca/trainer.hpp"

namespace fs = std::filesystem;
using namespace alasca;

namespace {

int cmd_gen_data(std::size_t n, std::size_t dim, std::size_t classes, double sep,
                 const std::string& noise, double eps, std::uint64_t seed,
                 const std::string& mapping, bool self_flip, const std::string& out) {
    DataSpec spec;
    spec.n = n;
    spec.dim = dim;
    spec.classes = classes;
    spec.separation = sep;
    spec.noise = noise_kind_from_string(noise);
    spec.epsilon = eps;
    spec.seed = seed;
    spec.mapping = mapping;
    spec.self_flip = self_flip;
    spec.validate();

    NoisyDataset ds = make_gaussian_dataset(n, dim, classes, sep, seed);
    switch (spec.noise) {
        case NoiseKind::kNone:
            break;
        case NoiseKind::kSymmetric:
            ds = inject_symmetric(ds, eps, seed + 1, self_flip);
            break;
        case NoiseKind::kAsymmetric:
            ds = inject_asymmetric(ds, eps, resolve_mapping(mapping, classes), seed + 1);
            break;
        case NoiseKind::kInstance:
            ds = inject_instance_dependent(ds, eps, seed + 1);
            break;
    }
    save_csv(ds, out);
    std::cout << "wrote " << out << " (" << ds.size() << " rows, flip fraction "
              << format_double(ds.flip_fraction()) << ")\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& out_dir,
              std::optional<std::uint64_t> seed_override) {
    ExperimentConfig cfg = load_config(config_path);
    if (seed_override.has_value()) cfg.train.seed = *seed_override;

    auto [train_ds, test_ds] = materialize_data(cfg.data);
    if (cfg.train.net.input_dim != train_ds.dim || cfg.train.net.classes != train_ds.classes) {
        cfg.train.net.input_dim = train_ds.dim;
        cfg.train.net.classes = train_ds.classes;
        cfg.train.validate();
    }

    fs::create_directories(out_dir);
    TrainResult res = train(cfg.train, train_ds, test_ds);

    write_metrics_jsonl(res.metrics, fs::path(out_dir) / "metrics.jsonl");
    write_metrics_csv(res.metrics, fs::path(out_dir) / "metrics.csv");
    save_checkpoint(res.net, cfg.digest(), fs::path(out_dir) / "checkpoint.bin");
    std::cout << "final train accuracy " << format_double(res.final_train_accuracy)
              << ", test accuracy " << format_double(res.final_test_accuracy) << "\n";
    return 0;
}

int cmd_verify_theory(const std::string& out_path, int trials, std::uint64_t seed,
                      double tol_scale, bool expect_degenerate) {
    TheoryOptions opt;
    opt.seed = seed;
    opt.trials = trials;
    opt.tol_scale = tol_scale;
    opt.expect_degenerate = expect_degenerate;
    const auto checks = run_theory_suite(opt);
    if (!out_path.empty()) write_theory_report(checks, out_path);
    for (const auto& c : checks) {
        std::printf("[%s] %-48s statistic=%.3e tolerance=%.3e\n", c.pass ? "PASS" : "FAIL",
                    c.name.c_str(), c.statistic, c.tolerance);
    }
    return all_passed(checks) ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"adaptive label smoothing on sub-classifiers: experiment runner"};
    app.require_subcommand(1);

    // gen-data ---------------------------------------------------------
    auto* gen = app.add_subcommand("gen-data", "generate a Gaussian-cluster dataset CSV");
    std::size_t n = 2000, dim = 20, classes = 4;
    double sep = 3.0, eps = 0.0;
    std::uint64_t seed = 1;
    std::string noise = "none", mapping = "cifar10", out_file;
    bool self_flip = false;
    gen->add_option("--n", n, "instance count")->check(CLI::PositiveNumber);
    gen->add_option("--dim", dim, "feature dimension")->check(CLI::PositiveNumber);
    gen->add_option("--classes", classes, "class count")->check(CLI::Range(2u, 1000000u));
    gen->add_option("--sep", sep, "pairwise mean separation")->check(CLI::NonNegativeNumber);
    gen->add_option("--noise", noise, "none|sym|asym|inst")
        ->check(CLI::IsMember({"none", "sym", "asym", "inst"}));
    gen->add_option("--eps", eps, "noise rate")->check(CLI::Range(0.0, 1.0));
    gen->add_option("--seed", seed, "generation seed");
    gen->add_option("--mapping", mapping, "asymmetric mapping: cifar10 or cyclic:<k>");
    gen->add_flag("--self-flip", self_flip, "symmetric flips may land on the true class");
    gen->add_option("--out", out_file, "output CSV path")->required();

    // train ------------------------------------------------------------
    auto* tr = app.add_subcommand("train", "run a training experiment from a config file");
    std::string config_path, out_dir;
    std::uint64_t seed_flag = 0;
    bool seed_given = false;
    tr->add_option("--config", config_path, "key=value config file")->required();
    tr->add_option("--out", out_dir, "output directory")->required();
    tr->add_option("--seed", seed_flag, "override train.seed")->each([&](const std::string&) {
        seed_given = true;
    });

    // verify-theory ------------------------------------------------------
    auto* vt = app.add_subcommand("verify-theory", "run the numeric theory checks");
    std::string report_path = "theory_report.jsonl";
    int trials = 1000;
    std::uint64_t vt_seed = 1;
    double tol_scale = 1.0;
    bool expect_degenerate = false;
    vt->add_option("--out", report_path, "JSONL report path");
    vt->add_option("--trials", trials, "uniqueness samples per W")->check(CLI::PositiveNumber);
    vt->add_option("--seed", vt_seed, "suite seed");
    vt->add_option("--tol-scale", tol_scale, "multiplies every tolerance")
        ->check(CLI::PositiveNumber);
    vt->add_flag("--expect-degenerate", expect_degenerate,
                 "inject a rank-deficient W and require the flat-direction witness");

    try {
        app.parse(argc, argv);
        if (gen->parsed()) {
            return cmd_gen_data(n, dim, classes, sep, noise, eps, seed, mapping, self_flip,
                                out_file);
        }
        if (tr->parsed()) {
            return cmd_train(config_path, out_dir,
                             seed_given ? std::optional<std::uint64_t>(seed_flag) : std::nullopt);
        }
        if (vt->parsed()) {
            return cmd_verify_theory(report_path, trials, vt_seed, tol_scale, expect_degenerate);
        }
        return 2;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const ContractError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
