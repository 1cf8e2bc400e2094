#include <catch2/catch_amalgamated.hpp>

#include "unlearn/nn/losses.hpp"
#include "unlearn/rng.hpp"

using namespace unlearn;

namespace {

Tensor column(const std::vector<real>& v) {
    Tensor t({static_cast<int>(v.size()), 1});
    for (std::size_t i = 0; i < v.size(); ++i) t[i] = v[i];
    return t;
}

} // namespace

TEST_CASE("discriminator loss: hand-evaluated scalars") {
    SECTION("constant D = 0.5 on both batches gives 2 ln 0.5") {
        const Tensor half = column({0.5, 0.5});
        const auto lg = nn::discriminator_loss_grad(half, half);
        REQUIRE(lg.value == Catch::Approx(2.0 * std::log(0.5)).epsilon(1e-9));
        REQUIRE(lg.value == Catch::Approx(-1.3862943611).margin(1e-6));
    }
    SECTION("D(x)=[0.8,0.9], D(x_enc)=[0.3,0.1]") {
        // independent evaluation: mean(ln .8, ln .9) + mean(ln .7, ln .9)
        const real expected = (std::log(0.8) + std::log(0.9)) / 2.0 +
                              (std::log(0.7) + std::log(0.9)) / 2.0;
        const auto lg = nn::discriminator_loss_grad(column({0.8, 0.9}), column({0.3, 0.1}));
        REQUIRE(lg.value == Catch::Approx(expected).margin(1e-12));
        REQUIRE(lg.value == Catch::Approx(-0.3953).margin(1e-4));
    }
    SECTION("perfect discrimination approaches the maximum 0") {
        const auto lg = nn::discriminator_loss_grad(column({1.0 - 1e-9}), column({1e-9}));
        REQUIRE(lg.value <= 0.0);
        REQUIRE(lg.value > -1e-5);
    }
    SECTION("non-positive for arbitrary probability outputs") {
        Rng rng(1);
        for (int trial = 0; trial < 50; ++trial) {
            Tensor a({5, 1}), b({5, 1});
            for (std::size_t i = 0; i < a.size(); ++i) {
                a[i] = rng.uniform();
                b[i] = rng.uniform();
            }
            REQUIRE(nn::discriminator_loss_grad(a, b).value <= 0.0);
        }
    }
    SECTION("gradient direction: raising D(x) raises the objective") {
        const auto lg = nn::discriminator_loss_grad(column({0.4}), column({0.6}));
        REQUIRE(lg.d_real_grad[0] > 0.0);
        REQUIRE(lg.d_fake_grad[0] < 0.0);
    }
    SECTION("batch mismatch rejected") {
        REQUIRE_THROWS_AS(nn::discriminator_loss_grad(column({0.5}), column({0.5, 0.5})),
                          std::invalid_argument);
    }
}

TEST_CASE("cross entropy: hand-evaluated scalars") {
    SECTION("uniform probabilities give ln K") {
        Tensor logits({3, 10}); // all-equal logits = uniform softmax
        const auto lg = nn::softmax_cross_entropy(logits, {0, 5, 9});
        REQUIRE(lg.value == Catch::Approx(std::log(10.0)).margin(1e-12));
        REQUIRE(lg.value == Catch::Approx(2.302585093).margin(1e-7));
    }
    SECTION("probability 1 on the true class gives 0") {
        Tensor logits({1, 4});
        logits.at2(0, 2) = 100.0;
        const auto lg = nn::softmax_cross_entropy(logits, {2});
        REQUIRE(lg.value < 1e-12);
    }
    SECTION("two-class logits (2,0) with true label 0 give ln(1+e^-2)") {
        Tensor logits({1, 2});
        logits.at2(0, 0) = 2.0;
        const auto lg = nn::softmax_cross_entropy(logits, {0});
        REQUIRE(lg.value == Catch::Approx(std::log(1.0 + std::exp(-2.0))).margin(1e-12));
        REQUIRE(lg.value == Catch::Approx(0.126928011).margin(1e-7));
    }
    SECTION("non-negative, zero only at certainty") {
        Rng rng(2);
        for (int trial = 0; trial < 50; ++trial) {
            Tensor logits({4, 3});
            for (std::size_t i = 0; i < logits.size(); ++i) logits[i] = rng.uniform(-3.0, 3.0);
            REQUIRE(nn::softmax_cross_entropy(logits, {0, 1, 2, 0}).value > 0.0);
        }
    }
    SECTION("label out of range rejected") {
        Tensor logits({1, 3});
        REQUIRE_THROWS_AS(nn::softmax_cross_entropy(logits, {3}), std::invalid_argument);
    }
    SECTION("soft targets reduce to hard labels on one-hot rows") {
        Rng rng(3);
        Tensor logits({5, 4});
        for (std::size_t i = 0; i < logits.size(); ++i) logits[i] = rng.uniform(-2.0, 2.0);
        const std::vector<int> labels = {1, 3, 0, 2, 2};
        Tensor onehot({5, 4});
        for (int i = 0; i < 5; ++i) onehot.at2(i, labels[static_cast<std::size_t>(i)]) = 1.0;
        const auto hard = nn::softmax_cross_entropy(logits, labels);
        const auto soft = nn::softmax_cross_entropy_soft(logits, onehot);
        REQUIRE(soft.value == Catch::Approx(hard.value).margin(1e-12));
        REQUIRE(max_abs_diff(soft.grad, hard.grad) < 1e-12);
    }
}

TEST_CASE("hinge loss: hand-evaluated scalars and properties") {
    SECTION("all-zero noise gives 0 for any bound") {
        Tensor noise({4, 3, 8, 8});
        REQUIRE(nn::hinge_loss(noise, 0.001) == 0.0);
        REQUIRE(nn::hinge_loss(noise, 10.0) == 0.0);
    }
    SECTION("single tensor with norm 2.5, c=1 gives 1.5") {
        Tensor noise({1, 1, 2, 2});
        noise[0] = 2.5; // l2 norm = 2.5
        REQUIRE(nn::hinge_loss(noise, 1.0) == Catch::Approx(1.5).margin(1e-12));
    }
    SECTION("batch of norms {0.5, 3.0} with c=1 gives mean(0, 2) = 1") {
        Tensor noise({2, 1, 1, 2});
        noise[0] = 0.5;
        noise[2] = 3.0;
        REQUIRE(nn::hinge_loss(noise, 1.0) == Catch::Approx(1.0).margin(1e-12));
    }
    SECTION("non-negative, zero iff every member within the bound") {
        Rng rng(4);
        for (int trial = 0; trial < 30; ++trial) {
            Tensor noise({3, 2, 4, 4});
            for (std::size_t i = 0; i < noise.size(); ++i) noise[i] = rng.uniform(-0.2, 0.2);
            const real c = rng.uniform(0.1, 2.0);
            const auto lg = nn::hinge_loss_grad(noise, c);
            REQUIRE(lg.value >= 0.0);
            bool all_within = true;
            const std::size_t per = noise.size() / 3;
            for (int i = 0; i < 3; ++i) {
                real sq = 0.0;
                for (std::size_t j = 0; j < per; ++j) {
                    const real v = noise[static_cast<std::size_t>(i) * per + j];
                    sq += v * v;
                }
                all_within &= std::sqrt(sq) <= c;
            }
            REQUIRE((lg.value == 0.0) == all_within);
        }
    }
    SECTION("invalid bound rejected") {
        Tensor noise({1, 1, 1, 1});
        REQUIRE_THROWS_AS(nn::hinge_loss(noise, 0.0), std::invalid_argument);
    }
}

TEST_CASE("generator adversarial loss") {
    const auto lg = nn::generator_adversarial_loss_grad(column({0.5, 0.25}));
    REQUIRE(lg.value == Catch::Approx(-(std::log(0.5) + std::log(0.25)) / 2.0).margin(1e-12));
    REQUIRE(lg.grad[0] < 0.0); // raising D(x_enc) lowers the loss
}

TEST_CASE("mse loss matches finite differences") {
    Rng rng(5);
    Tensor pred({2, 3}), target({2, 3});
    for (std::size_t i = 0; i < pred.size(); ++i) {
        pred[i] = rng.uniform(-1.0, 1.0);
        target[i] = rng.uniform(-1.0, 1.0);
    }
    const auto lg = nn::mse_loss_grad(pred, target);
    const real h = 1e-6;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        Tensor p = pred;
        p[i] += h;
        const real up = nn::mse_loss_grad(p, target).value;
        p[i] -= 2 * h;
        const real dn = nn::mse_loss_grad(p, target).value;
        REQUIRE(lg.grad[i] == Catch::Approx((up - dn) / (2 * h)).margin(1e-6));
    }
}
