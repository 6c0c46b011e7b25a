#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "alasca/config.hpp"
#include "alasca/noise.hpp"
#include "alasca/trainer.hpp"
#include "support/oracles.hpp"

using namespace alasca;

namespace {

TrainConfig tiny_config(std::size_t dim, std::size_t classes) {
    TrainConfig cfg;
    cfg.net.input_dim = dim;
    cfg.net.classes = classes;
    cfg.net.width = 8;
    cfg.net.stages = 2;
    cfg.epochs = 4;
    cfg.warmup_epochs = 2;
    cfg.batch_size = 16;
    cfg.learning_rate = 0.05;
    cfg.seed = 3;
    return cfg;
}

bool same_weights(const MultiExitNet& a, const MultiExitNet& b) {
    const auto pa = a.parameters();
    const auto pb = b.parameters();
    if (pa.size() != pb.size()) return false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        if (pa[i]->data != pb[i]->data) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("ema update: first step, frozen weight, geometric convergence") {
    EmaState ema(3, 2, 0.7, 3.0);
    ema.update(0, std::vector<double>{1.0, -2.0});
    CHECK(ema.logits(0)[0] == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(ema.logits(0)[1] == doctest::Approx(-0.6).epsilon(1e-15));

    EmaState frozen(1, 2, 1.0, 3.0);
    frozen.update(0, std::vector<double>{5.0, 5.0});
    CHECK(frozen.logits(0)[0] == 0.0);

    // Constant stream v: after k steps the gap is 0.7^k * v exactly.
    EmaState conv(1, 2, 0.7, 3.0);
    const std::vector<double> v{2.0, -1.0};
    for (int k = 1; k <= 40; ++k) {
        conv.update(0, v);
        const double expect_gap = std::pow(0.7, k);
        CHECK(std::abs(conv.logits(0)[0] - v[0] * (1.0 - expect_gap)) < 1e-12);
    }

    CHECK_THROWS_AS(ema.update(3, std::vector<double>{0.0, 0.0}), ContractError);
    CHECK_THROWS_AS(ema.update(0, std::vector<double>{0.0}), ContractError);
}

TEST_CASE("ema confidence: uniform at zero state, sharpening, closed form") {
    EmaState ema(1, 4, 0.7, 3.0);
    CHECK(ema.confidence(0, 1) == doctest::Approx(0.25).epsilon(1e-15));

    // tau = 3 sharpens relative to tau = 1 whenever the label is the argmax.
    std::mt19937_64 rng(5);
    std::normal_distribution<double> unit(0.0, 1.0);
    for (int t = 0; t < 50; ++t) {
        std::vector<double> z{unit(rng), unit(rng), unit(rng), unit(rng)};
        EmaState sharp(1, 4, 0.0, 3.0);  // w = 0 adopts z directly
        EmaState mild(1, 4, 0.0, 1.0);
        sharp.update(0, z);
        mild.update(0, z);
        std::size_t top = 0;
        for (std::size_t i = 1; i < 4; ++i) {
            if (z[i] > z[top]) top = i;
        }
        CHECK(sharp.confidence(0, top) > mild.confidence(0, top));
    }

    EmaState two(1, 2, 0.0, 3.0);
    two.update(0, std::vector<double>{1.0, 0.0});
    const double e3 = std::exp(3.0);
    CHECK(two.confidence(0, 0) == doctest::Approx(e3 / (e3 + 1.0)).epsilon(1e-12));
    CHECK(two.confidence(0, 0) == doctest::Approx(0.95257).epsilon(1e-4));
}

TEST_CASE("lca two-case rule") {
    const std::vector<double> main_logits{0.1, 0.2, 3.0, 0.0};  // argmax 2
    const std::vector<double> sub_agree{0.0, 0.1, 2.0, 0.5};    // argmax 2
    const std::vector<double> sub_disagree{4.0, 0.1, 2.0, 0.5}; // argmax 0

    // Before warm-up nothing fires.
    CHECK(lca(main_logits, sub_agree, 7 % 4, 5, 20) == 3);
    CHECK(lca(main_logits, sub_agree, 0, 19, 20) == 0);

    // Agreement with the given label means no correction.
    CHECK(lca(main_logits, sub_agree, 2, 25, 20) == 2);

    // Agreement on a different class corrects after warm-up.
    CHECK(lca(main_logits, sub_agree, 1, 25, 20) == 2);

    // Disagreement never corrects.
    CHECK(lca(main_logits, sub_disagree, 1, 25, 20) == 1);

    std::mt19937_64 rng(7);
    std::normal_distribution<double> unit(0.0, 1.0);
    for (int t = 0; t < 200; ++t) {
        std::vector<double> qm{unit(rng), unit(rng), unit(rng)};
        std::vector<double> qs{unit(rng), unit(rng), unit(rng)};
        const int given = t % 3;
        const int out = lca(qm, qs, given, 30, 20);
        const int pm = static_cast<int>(argmax(qm));
        const int ps = static_cast<int>(argmax(qs));
        if (pm != ps) CHECK(out == given);  // never fires on disagreement
        if (out != given) {
            CHECK(out == pm);
            CHECK(pm == ps);
        }
    }
}

TEST_CASE("alasca loss: lambda endpoints and the worked two-head value") {
    Tape tape;
    // Two classifiers over two classes, both with zero logits.
    const NodeId q1 = tape.input(std::vector<double>{0.0, 0.0});
    const NodeId qc = tape.input(std::vector<double>{0.0, 0.0});
    const std::vector<NodeId> qs{q1, qc};
    LnlSpec ce;

    // lambda = 0 leaves only the main loss.
    const NodeId plain = alasca_loss_node(tape, qs, 0, 0, 0.5, 0.0, ce);
    CHECK(tape.scalar_value(plain) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    // gamma = 0.5: sub target (1.0, 0.5); against uniform logits the CE is
    // 1.5 ln 2. Total = ln2 + lambda * 1.5 ln2.
    const NodeId full = alasca_loss_node(tape, qs, 0, 0, 0.5, 1.0, ce);
    CHECK(tape.scalar_value(full) ==
          doctest::Approx(std::log(2.0) + 1.5 * std::log(2.0)).epsilon(1e-12));
    CHECK(tape.scalar_value(full) - tape.scalar_value(plain) ==
          doctest::Approx(1.03972).epsilon(1e-5));

    // gamma -> 1 turns the sub term into plain CE against the corrected label.
    const NodeId nearly = alasca_loss_node(tape, qs, 0, 1, 1.0 - 1e-12, 1.0, ce);
    const double sub_part = tape.scalar_value(nearly) - std::log(2.0);
    CHECK(sub_part == doctest::Approx(std::log(2.0)).epsilon(1e-9));
}

TEST_CASE("alasca loss gradient matches finite differences with gamma detached") {
    std::mt19937_64 rng(11);
    LnlSpec ce;
    for (int t = 0; t < 30; ++t) {
        const auto f1 = test::random_vector(rng, 3);
        const auto fc = test::random_vector(rng, 3);
        const double gamma = 0.3 + 0.4 * (t % 5) / 5.0;
        const int given = t % 3;
        const int corrected = (t + 1) % 3;
        const double lambda = 2.0;

        // d/d(main logits)
        Tape tape;
        const NodeId n1 = tape.input(f1);
        const NodeId nc = tape.input(fc);
        const std::vector<NodeId> qs{n1, nc};
        tape.backward(alasca_loss_node(tape, qs, given, corrected, gamma, lambda, ce), true);

        auto eval = [&](std::span<const double> a, std::span<const double> b) {
            std::vector<double> onehot(3, 0.0);
            onehot[static_cast<std::size_t>(given)] = 1.0;
            std::vector<double> target(3, 1.0 - gamma);
            target[static_cast<std::size_t>(corrected)] += gamma;
            return cross_entropy(b, onehot) + lambda * cross_entropy(a, target);
        };
        const auto fd_sub =
            test::fd_gradient([&](std::span<const double> a) { return eval(a, fc); }, f1);
        const auto fd_main =
            test::fd_gradient([&](std::span<const double> b) { return eval(f1, b); }, fc);
        CHECK(test::max_rel_error(tape.grad(n1), fd_sub) < 1e-4);
        CHECK(test::max_rel_error(tape.grad(nc), fd_main) < 1e-4);
    }
}

TEST_CASE("training is deterministic and records per-epoch metrics") {
    auto ds = make_gaussian_dataset(120, 6, 3, 3.0, 21);
    ds = inject_symmetric(ds, 0.3, 22);
    const auto test_ds = make_gaussian_dataset(60, 6, 3, 3.0, 23);

    TrainConfig cfg = tiny_config(6, 3);
    const TrainResult a = train(cfg, ds, test_ds);
    const TrainResult b = train(cfg, ds, test_ds);
    CHECK(same_weights(a.net, b.net));
    CHECK(a.metrics.size() == static_cast<std::size_t>(cfg.epochs));
    CHECK(a.gamma_history.size() == ds.size());
    CHECK(a.gamma_history[0].size() == static_cast<std::size_t>(cfg.epochs));
    for (const auto& m : a.metrics) {
        CHECK(m.train_accuracy >= 0.0);
        CHECK(m.train_accuracy <= 1.0);
        CHECK(std::isfinite(m.mean_loss));
    }
    // Jacobian stats appear at the final epoch.
    CHECK(a.metrics.back().jac_clean.has_value());
    CHECK(a.metrics.back().jac_noisy.has_value());
}

TEST_CASE("lambda 0 with ce reduces bit-identically to the plain CE loop") {
    auto ds = make_gaussian_dataset(100, 5, 3, 3.0, 31);
    ds = inject_symmetric(ds, 0.2, 32);
    const auto test_ds = make_gaussian_dataset(50, 5, 3, 3.0, 33);

    TrainConfig cfg = tiny_config(5, 3);
    cfg.lambda = 0.0;
    cfg.epochs = 5;

    const TrainResult reduced = train(cfg, ds, test_ds);
    const TrainResult plain = train_plain_ce(cfg, ds, test_ds);
    CHECK(same_weights(reduced.net, plain.net));
    for (std::size_t e = 0; e < reduced.metrics.size(); ++e) {
        CHECK(reduced.metrics[e].mean_loss == plain.metrics[e].mean_loss);
        CHECK(reduced.metrics[e].train_accuracy == plain.metrics[e].train_accuracy);
    }
}

TEST_CASE("separable clean data trains to high accuracy") {
    const auto ds = make_gaussian_dataset(300, 8, 3, 8.0, 41);
    const auto test_ds = make_gaussian_dataset(150, 8, 3, 8.0, 42);
    TrainConfig cfg = tiny_config(8, 3);
    cfg.epochs = 20;
    cfg.warmup_epochs = 5;
    const TrainResult res = train(cfg, ds, test_ds);
    CHECK(res.final_train_accuracy > 0.99);
    CHECK(res.final_test_accuracy > 0.99);
}

TEST_CASE("lca never fires before warm-up during training") {
    auto ds = make_gaussian_dataset(100, 5, 3, 2.0, 51);
    ds = inject_symmetric(ds, 0.4, 52);
    const auto test_ds = make_gaussian_dataset(40, 5, 3, 2.0, 53);
    TrainConfig cfg = tiny_config(5, 3);
    cfg.epochs = 6;
    cfg.warmup_epochs = 4;
    const TrainResult res = train(cfg, ds, test_ds);
    for (int e = 0; e < 4; ++e) CHECK(res.metrics[static_cast<std::size_t>(e)].lca_fire_count == 0);
}

TEST_CASE("small-loss keeps the requested fraction and reports an fscore") {
    auto ds = make_gaussian_dataset(200, 5, 3, 4.0, 61);
    ds = inject_symmetric(ds, 0.3, 62);
    const auto test_ds = make_gaussian_dataset(80, 5, 3, 4.0, 63);
    TrainConfig cfg = tiny_config(5, 3);
    cfg.lnl.kind = LnlKind::kSmallLoss;
    cfg.lnl.keep_fraction = 0.7;
    cfg.epochs = 6;
    const TrainResult res = train(cfg, ds, test_ds);
    REQUIRE(res.metrics.back().selection_fscore.has_value());
    CHECK(*res.metrics.back().selection_fscore >= 0.0);
    CHECK(*res.metrics.back().selection_fscore <= 1.0);

    // keep_fraction = 1 equals the mean CE over the batch (reduction case).
    TrainConfig full = tiny_config(5, 3);
    full.lambda = 0.0;
    full.lnl.kind = LnlKind::kSmallLoss;
    full.lnl.keep_fraction = 1.0;
    TrainConfig ce = full;
    ce.lnl.kind = LnlKind::kCe;
    const TrainResult rs = train(full, ds, test_ds);
    const TrainResult rc = train(ce, ds, test_ds);
    CHECK(same_weights(rs.net, rc.net));
}

TEST_CASE("divergent learning rate raises NumericError") {
    auto ds = make_gaussian_dataset(60, 4, 3, 3.0, 71);
    const auto test_ds = make_gaussian_dataset(30, 4, 3, 3.0, 72);
    TrainConfig cfg = tiny_config(4, 3);
    cfg.learning_rate = 1e18;
    cfg.epochs = 30;
    CHECK_THROWS_AS(train(cfg, ds, test_ds), NumericError);
}

TEST_CASE("checkpoint round trip restores parameters bitwise") {
    auto ds = make_gaussian_dataset(80, 5, 3, 3.0, 81);
    const auto test_ds = make_gaussian_dataset(40, 5, 3, 3.0, 82);
    TrainConfig cfg = tiny_config(5, 3);
    cfg.epochs = 2;
    const TrainResult res = train(cfg, ds, test_ds);

    const auto path = std::filesystem::temp_directory_path() / "alasca_ckpt_test.bin";
    save_checkpoint(res.net, 0xdeadbeefULL, path);

    MultiExitNet restored(cfg.net);
    const std::uint64_t digest = load_checkpoint(restored, path);
    CHECK(digest == 0xdeadbeefULL);
    CHECK(same_weights(res.net, restored));

    // Truncated file is rejected.
    std::filesystem::resize_file(path, 16);
    MultiExitNet scratch(cfg.net);
    CHECK_THROWS_AS(load_checkpoint(scratch, path), ContractError);
    std::filesystem::remove(path);
}

TEST_CASE("alpha schedule ramps linearly over the first half") {
    AlphaSchedule s;  // 0.1 -> 0.7, ramp 0.5
    CHECK(s.at(0, 60) == doctest::Approx(0.1));
    CHECK(s.at(15, 60) == doctest::Approx(0.4));
    CHECK(s.at(30, 60) == doctest::Approx(0.7));
    CHECK(s.at(59, 60) == doctest::Approx(0.7));
}

TEST_CASE("train config validation") {
    TrainConfig cfg = tiny_config(4, 3);
    cfg.warmup_epochs = cfg.epochs + 1;
    CHECK_THROWS_AS(cfg.validate(), ContractError);
    cfg = tiny_config(4, 3);
    cfg.lambda = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ContractError);
    cfg = tiny_config(4, 3);
    cfg.lnl.keep_fraction = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ContractError);
    cfg = tiny_config(4, 3);
    cfg.main_ls_alpha = 0.3;
    cfg.lnl.kind = LnlKind::kGce;
    CHECK_THROWS_AS(cfg.validate(), ContractError);
}
