#include <doctest.h>

#include <cmath>

#include "alasca/losses.hpp"
#include "support/oracles.hpp"

using namespace alasca;

TEST_CASE("smooth targets: one-hot at alpha 0, both conventions") {
    SmoothingSpec off{0.0, SmoothingConvention::kNormalized, 4};
    auto t = smooth_target(2, off);
    CHECK(t == std::vector<double>{0, 0, 1, 0});
    off.convention = SmoothingConvention::kUnnormalized;
    CHECK(smooth_target(2, off) == std::vector<double>{0, 0, 1, 0});

    SmoothingSpec half{0.5, SmoothingConvention::kNormalized, 10};
    t = smooth_target(3, half);
    CHECK(t[3] == doctest::Approx(0.55).epsilon(1e-15));
    for (std::size_t i = 0; i < 10; ++i) {
        if (i != 3) CHECK(t[i] == doctest::Approx(0.05).epsilon(1e-15));
    }

    SmoothingSpec un{0.3, SmoothingConvention::kUnnormalized, 4};
    t = smooth_target(0, un);
    CHECK(t[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(t[1] == doctest::Approx(0.3).epsilon(1e-15));

    CHECK_THROWS_AS(smooth_target(4, un), ContractError);
}

TEST_CASE("omega: equal-logits minimum, shift invariance, direct value") {
    const std::vector<double> zeros(10, 0.0);
    CHECK(omega(zeros) == doctest::Approx(10.0 * std::log(10.0)).epsilon(1e-13));
    CHECK(omega(zeros) == doctest::Approx(23.02585).epsilon(1e-6));

    const std::vector<double> f{1.0, 0.0};
    CHECK(omega(f) == doctest::Approx(2.0 * std::log(std::exp(1.0) + 1.0) - 1.0).epsilon(1e-13));
    CHECK(omega(f) == doctest::Approx(1.62652).epsilon(1e-5));

    std::mt19937_64 rng(2);
    for (int t = 0; t < 100; ++t) {
        const auto v = test::random_vector(rng, 7, 3.0);
        std::vector<double> shifted = v;
        for (auto& x : shifted) x += 5.4321;
        CHECK(omega(v) == doctest::Approx(omega(shifted)).epsilon(1e-10));
        CHECK(omega(v) >= 7.0 * std::log(7.0) - 1e-12);
    }
    CHECK_THROWS_AS(omega(std::vector<double>{1.0, std::numeric_limits<double>::infinity()}),
                    NumericError);
}

TEST_CASE("omega gradient identity L*softmax - 1 vs autodiff") {
    std::mt19937_64 rng(9);
    for (int t = 0; t < 50; ++t) {
        const auto f = test::random_vector(rng, 5, 2.0);
        Tape tape;
        const NodeId x = tape.input(f);
        tape.backward(omega_node(tape, x), true);
        const auto g = tape.grad(x);
        const auto closed = omega_gradient(f);
        for (std::size_t i = 0; i < f.size(); ++i) {
            CHECK(std::abs(g[i] - closed[i]) < 1e-10);
        }
    }
}

TEST_CASE("normalized LS decomposition residual vanishes") {
    std::mt19937_64 rng(17);
    double worst = 0.0;
    for (int t = 0; t < 1000; ++t) {
        std::uniform_int_distribution<std::size_t> ld(2, 9);
        const std::size_t L = ld(rng);
        const auto f = test::random_vector(rng, L, 3.0);
        std::uniform_int_distribution<std::size_t> yd(0, L - 1);
        std::uniform_real_distribution<double> ad(0.01, 0.99);
        worst = std::max(worst, std::abs(ls_decomposition_residual(f, yd(rng), ad(rng))));
    }
    CHECK(worst < 1e-10);

    // equal-logits case
    const std::vector<double> zeros(5, 0.0);
    CHECK(std::abs(ls_decomposition_residual(zeros, 1, 0.3)) < 1e-10);

    CHECK_THROWS_AS(ls_decomposition_residual(zeros, 1, 0.0), ContractError);
    CHECK_THROWS_AS(ls_decomposition_residual(zeros, 1, 1.0), ContractError);
}

TEST_CASE("unnormalized LS decomposition is exact with coefficient alpha") {
    std::mt19937_64 rng(19);
    double worst = 0.0;
    for (int t = 0; t < 1000; ++t) {
        const auto f = test::random_vector(rng, 6, 3.0);
        std::uniform_int_distribution<std::size_t> yd(0, 5);
        std::uniform_real_distribution<double> ad(0.01, 0.99);
        worst = std::max(worst,
                         std::abs(ls_decomposition_residual_unnormalized(f, yd(rng), ad(rng))));
    }
    CHECK(worst < 1e-10);
}

TEST_CASE("als loss: uniform-logit value and mixture identity") {
    // f = 0, L = 4: beta = 1/4, CE = ln4, Omega = 4 ln4 => 3.25 ln4.
    const std::vector<double> zeros(4, 0.0);
    CHECK(als_loss(zeros, 2) == doctest::Approx(3.25 * std::log(4.0)).epsilon(1e-13));
    CHECK(als_loss(zeros, 2) == doctest::Approx(4.50580).epsilon(1e-5));

    std::mt19937_64 rng(23);
    for (int t = 0; t < 50; ++t) {
        const auto f = test::random_vector(rng, 5, 2.0);
        const std::size_t y = static_cast<std::size_t>(t % 5);
        const double beta = softmax(f)[y];
        std::vector<double> onehot(5, 0.0);
        onehot[y] = 1.0;
        const double expect = beta * cross_entropy(f, onehot) + (1.0 - beta) * omega(f);
        CHECK(als_loss(f, y) == doctest::Approx(expect).epsilon(1e-12));
    }

    // Confident-on-y logits drive the loss to CE.
    const std::vector<double> confident{30.0, 0.0, 0.0};
    std::vector<double> e0{1.0, 0.0, 0.0};
    CHECK(als_loss(confident, 0) ==
          doctest::Approx(cross_entropy(confident, e0)).epsilon(1e-9));
}

TEST_CASE("als loss gradient matches finite differences with beta frozen") {
    std::mt19937_64 rng(29);
    for (int t = 0; t < 50; ++t) {
        const auto f = test::random_vector(rng, 4, 1.5);
        const std::size_t y = static_cast<std::size_t>(t % 4);
        Tape tape;
        const NodeId x = tape.input(f);
        tape.backward(als_loss_node(tape, x, y), true);
        const double beta = softmax(f)[y];  // frozen, as the loss treats it
        const auto fd = test::fd_gradient(
            [&](std::span<const double> fv) {
                std::vector<double> onehot(fv.size(), 0.0);
                onehot[y] = 1.0;
                return beta * cross_entropy(fv, onehot) + (1.0 - beta) * omega(fv);
            },
            f);
        CHECK(test::max_rel_error(tape.grad(x), fd) < 1e-4);
    }
}

TEST_CASE("tape cross entropy and omega match the plain routes") {
    std::mt19937_64 rng(31);
    for (int t = 0; t < 30; ++t) {
        const auto f = test::random_vector(rng, 6, 2.5);
        auto target = test::random_vector(rng, 6);
        for (auto& v : target) v = std::abs(v);
        Tape tape;
        const NodeId x = tape.input(f);
        CHECK(tape.scalar_value(cross_entropy_node(tape, x, target)) ==
              doctest::Approx(cross_entropy(f, target)).epsilon(1e-12));
        CHECK(tape.scalar_value(omega_node(tape, x)) == doctest::Approx(omega(f)).epsilon(1e-12));
    }
}

TEST_CASE("gce endpoints: q -> 0 recovers CE, q = 1 is 1 - p_y") {
    std::mt19937_64 rng(37);
    for (int t = 0; t < 20; ++t) {
        const auto f = test::random_vector(rng, 5, 1.0);
        const std::size_t y = static_cast<std::size_t>(t % 5);
        std::vector<double> onehot(5, 0.0);
        onehot[y] = 1.0;

        LnlSpec tiny;
        tiny.kind = LnlKind::kGce;
        tiny.gce_q = 1e-3;
        const double ce = cross_entropy(f, onehot);
        CHECK(std::abs(lnl_loss(tiny, f, y) - ce) / std::max(1.0, ce) < 1e-2);

        LnlSpec one;
        one.kind = LnlKind::kGce;
        one.gce_q = 1.0;
        CHECK(lnl_loss(one, f, y) == doctest::Approx(1.0 - softmax(f)[y]).epsilon(1e-12));
    }
}

TEST_CASE("sce equals w1*CE + w2*A*(1 - p_y)") {
    std::mt19937_64 rng(41);
    LnlSpec spec;
    spec.kind = LnlKind::kSce;
    spec.sce_w1 = 0.1;
    spec.sce_w2 = 1.0;
    for (int t = 0; t < 20; ++t) {
        const auto f = test::random_vector(rng, 4, 2.0);
        const std::size_t y = static_cast<std::size_t>(t % 4);
        std::vector<double> onehot(4, 0.0);
        onehot[y] = 1.0;
        const double expect =
            0.1 * cross_entropy(f, onehot) + 1.0 * 4.0 * (1.0 - softmax(f)[y]);
        CHECK(lnl_loss(spec, f, y) == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("gce and sce gradients match finite differences") {
    std::mt19937_64 rng(43);
    for (LnlKind kind : {LnlKind::kGce, LnlKind::kSce}) {
        LnlSpec spec;
        spec.kind = kind;
        for (int t = 0; t < 50; ++t) {
            const auto f = test::random_vector(rng, 4, 1.5);
            const std::size_t y = static_cast<std::size_t>(t % 4);
            Tape tape;
            const NodeId x = tape.input(f);
            tape.backward(lnl_loss_node(tape, spec, x, y), true);
            const auto fd = test::fd_gradient(
                [&](std::span<const double> fv) { return lnl_loss(spec, fv, y); }, f);
            CHECK(test::max_rel_error(tape.grad(x), fd) < 1e-4);
        }
    }
}

TEST_CASE("lnl kind parsing") {
    CHECK(lnl_kind_from_string("ce") == LnlKind::kCe);
    CHECK(lnl_kind_from_string("small-loss") == LnlKind::kSmallLoss);
    CHECK_THROWS_AS(lnl_kind_from_string("unknown"), ContractError);
}
