#include <catch2/catch_amalgamated.hpp>

#include "unlearn/data.hpp"
#include "unlearn/encrypt.hpp"
#include "unlearn/nn/checkpoint.hpp"

using namespace unlearn;

namespace {

nn::ModelHandle desk_generator(std::uint64_t seed) {
    nn::ArchSpec spec{"generator4x4", 3, 16, 16, 0, 0.5};
    return nn::build_model(spec, seed);
}

// every trainable parameter zeroed -> raw output identically zero
nn::ModelHandle zero_generator() {
    nn::ModelHandle g = desk_generator(0);
    for (nn::Param* p : g.net.trainable_params()) p->value.fill(0.0);
    return g;
}

// saturate the final deconv bias so tanh emits exactly +-1 everywhere
nn::ModelHandle saturated_generator() {
    nn::ModelHandle g = zero_generator();
    auto params = g.net.trainable_params();
    // the last two trainable entries are the head deconv weight and bias
    params.back()->value.fill(100.0);
    return g;
}

} // namespace

TEST_CASE("encrypt_image: identity, saturation, budget") {
    Dataset ds = make_synthetic(2, 5, 3, 16, 16, 0.2, 70);
    const PerturbationBudget budget = resolve_budget(8.0 / 255.0, 0.0, 3, 16, 16);

    SECTION("all-zero generator output leaves the image bitwise unchanged") {
        nn::ModelHandle g = zero_generator();
        const EncryptedImage enc = encrypt_image(g, ds.items[0].pixels, budget);
        REQUIRE(enc.x_enc == ds.items[0].pixels);
        REQUIRE(enc.noise.max_abs() == 0.0);
    }
    SECTION("saturated raw output gives noise identically epsilon; 1.0 pixels stay") {
        nn::ModelHandle g = saturated_generator();
        Tensor x = ds.items[0].pixels;
        x.at3(0, 0, 0) = 1.0;
        const EncryptedImage enc = encrypt_image(g, x, budget);
        for (std::size_t i = 0; i < enc.noise.size(); ++i) {
            REQUIRE(enc.noise[i] == Catch::Approx(budget.epsilon).margin(1e-15));
        }
        REQUIRE(enc.x_enc.at3(0, 0, 0) == 1.0);
        REQUIRE(enc.x_enc.max_value() <= 1.0);
    }
    SECTION("per-pixel bound holds exactly for a random generator") {
        nn::ModelHandle g = desk_generator(71);
        for (int i = 0; i < 5; ++i) {
            const EncryptedImage enc =
                encrypt_image(g, ds.items[static_cast<std::size_t>(i)].pixels, budget);
            REQUIRE(enc.noise.max_abs() <= budget.epsilon);
            REQUIRE(max_abs_diff(enc.x_enc, ds.items[static_cast<std::size_t>(i)].pixels) <=
                    budget.epsilon);
            REQUIRE(enc.x_enc.min_value() >= 0.0);
            REQUIRE(enc.x_enc.max_value() <= 1.0);
        }
    }
    SECTION("purity: same checkpoint and image give bit-identical output") {
        nn::ModelHandle g = desk_generator(72);
        const EncryptedImage a = encrypt_image(g, ds.items[1].pixels, budget);
        const EncryptedImage b = encrypt_image(g, ds.items[1].pixels, budget);
        REQUIRE(a.x_enc == b.x_enc);
        nn::ModelHandle g2 = nn::clone_model(g);
        const EncryptedImage c = encrypt_image(g2, ds.items[1].pixels, budget);
        REQUIRE(a.x_enc == c.x_enc);
    }
    SECTION("shape mismatch rejected") {
        nn::ModelHandle g = desk_generator(73);
        Tensor wrong({3, 32, 32});
        REQUIRE_THROWS_AS(encrypt_image(g, wrong, budget), std::invalid_argument);
    }
    SECTION("budget validation") {
        nn::ModelHandle g = desk_generator(74);
        PerturbationBudget bad;
        bad.epsilon = 0.0;
        bad.c = 1.0;
        REQUIRE_THROWS_AS(encrypt_image(g, ds.items[0].pixels, bad), std::invalid_argument);
    }
}

TEST_CASE("encrypt_dataset: counts, labels, provenance") {
    Dataset ds = make_synthetic(3, 8, 3, 16, 16, 0.2, 75);
    const PerturbationBudget budget = resolve_budget(0.1, 0.0, 3, 16, 16);
    nn::ModelHandle g = desk_generator(76);

    SECTION("empty in, empty out") {
        Dataset empty;
        empty.class_count = 3;
        Dataset enc = encrypt_dataset(g, empty, budget, Provenance::in_encrypted);
        REQUIRE(enc.items.empty());
        REQUIRE(enc.provenance == Provenance::in_encrypted);
    }
    SECTION("item count, order and label multiset preserved") {
        Dataset enc = encrypt_dataset(g, ds, budget, Provenance::out_encrypted);
        REQUIRE(enc.items.size() == ds.items.size());
        REQUIRE(enc.provenance == Provenance::out_encrypted);
        for (std::size_t i = 0; i < ds.items.size(); ++i) {
            REQUIRE(enc.items[i].label == ds.items[i].label);
        }
        enc.validate();
    }
    SECTION("matches per-image encryption") {
        Dataset enc = encrypt_dataset(g, ds, budget, Provenance::in_encrypted);
        const EncryptedImage one = encrypt_image(g, ds.items[4].pixels, budget);
        REQUIRE(enc.items[4].pixels == one.x_enc);
    }
    SECTION("only encryption provenances accepted") {
        REQUIRE_THROWS_AS(encrypt_dataset(g, ds, budget, Provenance::patched),
                          std::invalid_argument);
    }
    SECTION("dataset shape mismatch rejected") {
        Dataset big = make_synthetic(2, 2, 3, 32, 32, 0.2, 77);
        REQUIRE_THROWS_AS(encrypt_dataset(g, big, budget, Provenance::in_encrypted),
                          std::invalid_argument);
    }
}

TEST_CASE("default hinge bound is half the maximal epsilon-box norm") {
    const real eps = 8.0 / 255.0;
    const real c = default_hinge_bound(eps, 3, 32, 32);
    REQUIRE(c == Catch::Approx(0.5 * eps * std::sqrt(3.0 * 32 * 32)).margin(1e-12));
    const PerturbationBudget b = resolve_budget(eps, 0.0, 3, 32, 32);
    REQUIRE(b.c == Catch::Approx(c));
    const PerturbationBudget explicit_c = resolve_budget(eps, 2.5, 3, 32, 32);
    REQUIRE(explicit_c.c == 2.5);
}
