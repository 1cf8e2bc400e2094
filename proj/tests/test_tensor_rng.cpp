#include <catch2/catch_amalgamated.hpp>

#include "unlearn/rng.hpp"
#include "unlearn/serial.hpp"
#include "unlearn/tensor.hpp"

using namespace unlearn;

TEST_CASE("tensor basics") {
    Tensor t({2, 3, 4, 4});
    REQUIRE(t.size() == 96);
    t.at4(1, 2, 3, 3) = 5.0;
    REQUIRE(t[95] == 5.0);
    REQUIRE(t.max_abs() == 5.0);
    t.clamp(0.0, 1.0);
    REQUIRE(t.max_value() == 1.0);

    Tensor r = t.reshaped({2, 48});
    REQUIRE(r.dim(1) == 48);
    REQUIRE_THROWS_AS(t.reshaped({7}), std::invalid_argument);
}

TEST_CASE("rng reproducibility and ranges") {
    Rng a(42), b(42), c(43);
    for (int i = 0; i < 1000; ++i) {
        const double u = a.uniform();
        REQUIRE(u == b.uniform());
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
    }
    bool differs = false;
    for (int i = 0; i < 16; ++i) differs |= (a.next_u64() != c.next_u64());
    REQUIRE(differs);
}

TEST_CASE("rng shuffle is a permutation") {
    Rng rng(7);
    for (int trial = 0; trial < 10; ++trial) {
        auto p = rng.permutation(97);
        std::vector<char> seen(97, 0);
        for (int v : p) {
            REQUIRE(v >= 0);
            REQUIRE(v < 97);
            REQUIRE(!seen[static_cast<std::size_t>(v)]);
            seen[static_cast<std::size_t>(v)] = 1;
        }
    }
}

TEST_CASE("rng normal and beta are sane") {
    Rng rng(3);
    double sum = 0.0, sq = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double v = rng.normal();
        sum += v;
        sq += v * v;
    }
    REQUIRE(std::abs(sum / n) < 0.05);
    REQUIRE(std::abs(sq / n - 1.0) < 0.05);
    for (int i = 0; i < 1000; ++i) {
        const double b = rng.beta_symmetric(1.0);
        REQUIRE(b >= 0.0);
        REQUIRE(b <= 1.0);
    }
}

TEST_CASE("derive_seed decorrelates streams") {
    REQUIRE(derive_seed(1, 0) != derive_seed(1, 1));
    REQUIRE(derive_seed(1, 0) != derive_seed(2, 0));
    REQUIRE(derive_seed(1, 5) == derive_seed(1, 5));
}

TEST_CASE("binary round trip and digest") {
    std::stringstream ss(std::ios::in | std::ios::out | std::ios::binary);
    BinaryWriter w(ss);
    Tensor t({3, 2});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = 0.1 * static_cast<double>(i) - 0.25;
    w.u32(7);
    w.str("hello");
    w.tensor(t);
    BinaryReader r(ss);
    REQUIRE(r.u32() == 7);
    REQUIRE(r.str() == "hello");
    REQUIRE(r.tensor() == t);

    REQUIRE(digest_bytes("abc") == digest_bytes("abc"));
    REQUIRE(digest_bytes("abc") != digest_bytes("abd"));
}
