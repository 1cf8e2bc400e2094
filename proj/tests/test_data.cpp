#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "unlearn/data.hpp"
#include "unlearn/image_io.hpp"
#include "unlearn/nn/train.hpp"

using namespace unlearn;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("unlearn_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

} // namespace

TEST_CASE("load_dataset: tree layout, determinism, errors") {
    const fs::path root = fresh_dir("tree");
    Rng rng(1);
    for (const std::string cls : {"cat", "dog"}) {
        fs::create_directories(root / cls);
        for (int i = 0; i < 3; ++i) {
            Tensor img({3, 8, 8});
            for (std::size_t j = 0; j < img.size(); ++j) img[j] = rng.uniform();
            save_image_png((root / cls / (std::to_string(i) + ".png")).string(), img);
        }
    }

    Dataset ds = load_dataset(root.string(), 32, 32);
    REQUIRE(ds.items.size() == 6);
    REQUIRE(ds.class_count == 2);
    REQUIRE(ds.height() == 32);
    ds.validate();
    // class index = lexicographic rank: cat=0, dog=1
    REQUIRE(ds.items[0].label == 0);
    REQUIRE(ds.items[5].label == 1);

    Dataset again = load_dataset(root.string(), 32, 32);
    REQUIRE(again.items.size() == ds.items.size());
    for (std::size_t i = 0; i < ds.items.size(); ++i) {
        REQUIRE(again.items[i].label == ds.items[i].label);
        REQUIRE(again.items[i].pixels == ds.items[i].pixels);
    }

    SECTION("empty class directory names the class") {
        fs::create_directories(root / "aardvark");
        try {
            load_dataset(root.string(), 8, 8);
            FAIL("expected an error");
        } catch (const std::invalid_argument& e) {
            REQUIRE(std::string(e.what()).find("aardvark") != std::string::npos);
        }
    }
    SECTION("undecodable file reports its path") {
        std::ofstream bad(root / "cat" / "broken.png");
        bad << "not a png";
        bad.close();
        try {
            load_dataset(root.string(), 8, 8);
            FAIL("expected an error");
        } catch (const std::runtime_error& e) {
            REQUIRE(std::string(e.what()).find("broken.png") != std::string::npos);
        }
    }
    SECTION("missing directory") {
        REQUIRE_THROWS_AS(load_dataset((root / "nope").string(), 8, 8), std::invalid_argument);
    }
}

TEST_CASE("make_synthetic: counts, determinism, preconditions") {
    Dataset a = make_synthetic(2, 100, 3, 16, 16, 1.0, 0);
    REQUIRE(a.items.size() == 200);
    REQUIRE(a.class_count == 2);
    a.validate();

    Dataset b = make_synthetic(2, 100, 3, 16, 16, 1.0, 0);
    for (std::size_t i = 0; i < a.items.size(); ++i) {
        REQUIRE(a.items[i].pixels == b.items[i].pixels);
    }

    REQUIRE_THROWS_AS(make_synthetic(2, 100, 3, 16, 16, 0.0, 0), std::invalid_argument);
    REQUIRE_THROWS_AS(make_synthetic(1, 100, 3, 16, 16, 1.0, 0), std::invalid_argument);
    REQUIRE_THROWS_AS(make_synthetic(2, 0, 3, 16, 16, 1.0, 0), std::invalid_argument);
}

TEST_CASE("make_synthetic: small classifier separates it") {
    // expected values frozen from an oracle run of the victim trainer at the
    // default separation
    Dataset train = make_synthetic(2, 100, 3, 16, 16, 1.0, 11);
    Dataset held_out = make_synthetic(2, 100, 3, 16, 16, 1.0, 1011);
    nn::ArchSpec arch{"smallcnn", 3, 16, 16, 2, 1.0};
    nn::TrainSpec spec;
    spec.epochs = 30;
    spec.seed = 11;
    nn::ModelHandle model = nn::pretrain_classifier(train, arch, spec);
    REQUIRE(nn::evaluate_accuracy(model, held_out) >= 0.95);
}

TEST_CASE("split_in_out: boundaries, stratification, partition") {
    Dataset ds = make_synthetic(2, 50, 3, 16, 16, 1.0, 3);

    SECTION("p=1 gives (full, empty)") {
        auto [a, b] = split_in_out(ds, 1.0, 9);
        REQUIRE(a.items.size() == 100);
        REQUIRE(b.items.empty());
    }
    SECTION("p=0.5 on 100 balanced items gives 50/50 with 25 per class") {
        auto [a, b] = split_in_out(ds, 0.5, 9);
        REQUIRE(a.items.size() == 50);
        REQUIRE(b.items.size() == 50);
        REQUIRE(a.class_histogram() == std::vector<std::size_t>{25, 25});
        REQUIRE(b.class_histogram() == std::vector<std::size_t>{25, 25});
    }
    SECTION("union equals input as a multiset for any seed") {
        for (std::uint64_t seed : {1ULL, 17ULL, 991ULL}) {
            auto [a, b] = split_in_out(ds, 0.37, seed);
            REQUIRE(a.items.size() + b.items.size() == ds.items.size());
            // multiset equality via sorted pixel digests
            auto digests = [](const Dataset& d) {
                std::vector<std::string> out;
                for (const auto& it : d.items) {
                    out.push_back(digest_bytes(std::string(
                        reinterpret_cast<const char*>(it.pixels.data()),
                        it.pixels.size() * sizeof(real))));
                }
                return out;
            };
            auto u = digests(a);
            auto v = digests(b);
            u.insert(u.end(), v.begin(), v.end());
            std::sort(u.begin(), u.end());
            auto w = digests(ds);
            std::sort(w.begin(), w.end());
            REQUIRE(u == w);
        }
    }
    SECTION("p out of range") {
        REQUIRE_THROWS_AS(split_in_out(ds, 1.5, 0), std::invalid_argument);
    }
}

TEST_CASE("apply_class_patch: placement, locality, identity") {
    // 25-class table; first entry (220,0,0), last (250,250,250)
    PatchTable table = default_patch_table(32);
    REQUIRE(table.entries.size() == 25);
    REQUIRE(table.entries.front() == std::array<int, 3>{220, 0, 0});
    REQUIRE(table.entries.back() == std::array<int, 3>{250, 250, 250});

    Dataset ds = make_synthetic(2, 3, 3, 64, 64, 1.0, 5);
    Dataset patched = apply_class_patch(ds, table);
    REQUIRE(patched.provenance == Provenance::patched);

    const int ps = 32, h = 64, w = 64;
    std::size_t modified = 0;
    for (std::size_t i = 0; i < ds.items.size(); ++i) {
        const Tensor& before = ds.items[i].pixels;
        const Tensor& after = patched.items[i].pixels;
        const auto rgb = table.entries[static_cast<std::size_t>(ds.items[i].label)];
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    if (y >= h - ps && x >= w - ps) {
                        REQUIRE(after.at3(c, y, x) == rgb[static_cast<std::size_t>(c)] / 255.0);
                    } else {
                        REQUIRE(after.at3(c, y, x) == before.at3(c, y, x));
                    }
                }
        if (i == 0) {
            for (std::size_t j = 0; j < before.size(); ++j) modified += before[j] != after[j];
        }
    }
    // at most the patch region changes (equal values may coincide)
    REQUIRE(modified <= static_cast<std::size_t>(ps) * ps * 3);

    SECTION("class 0 patch is (220/255, 0, 0)") {
        const Tensor& px = patched.items[0].pixels;
        REQUIRE(ds.items[0].label == 0);
        REQUIRE(px.at3(0, 63, 63) == 220.0 / 255.0);
        REQUIRE(px.at3(1, 63, 63) == 0.0);
        REQUIRE(px.at3(2, 63, 63) == 0.0);
    }
    SECTION("patch_size 0 is the identity") {
        Dataset same = apply_class_patch(ds, default_patch_table(0));
        for (std::size_t i = 0; i < ds.items.size(); ++i) {
            REQUIRE(same.items[i].pixels == ds.items[i].pixels);
        }
    }
    SECTION("missing classes rejected") {
        PatchTable small;
        small.patch_size = 4;
        small.entries = {{{1, 2, 3}}};
        REQUIRE_THROWS_AS(apply_class_patch(ds, small), std::invalid_argument);
    }
    SECTION("oversized patch rejected") {
        REQUIRE_THROWS_AS(apply_class_patch(ds, default_patch_table(65)), std::invalid_argument);
    }
}

TEST_CASE("patch table file parsing") {
    const fs::path dir = fresh_dir("ptable");
    {
        std::ofstream f(dir / "t.txt");
        f << "# class r g b\n1 0 250 0\n0 220 0 0\n";
    }
    PatchTable t = load_patch_table((dir / "t.txt").string(), 8);
    REQUIRE(t.entries.size() == 2);
    REQUIRE(t.entries[0] == std::array<int, 3>{220, 0, 0});
    REQUIRE(t.entries[1] == std::array<int, 3>{0, 250, 0});

    {
        std::ofstream f(dir / "bad.txt");
        f << "0 300 0 0\n";
    }
    REQUIRE_THROWS_AS(load_patch_table((dir / "bad.txt").string(), 8), std::invalid_argument);
}

TEST_CASE("apply_class_noise: class-wise definition, budget, identity") {
    Dataset ds = make_synthetic(3, 10, 3, 16, 16, 1.0, 8);

    SECTION("epsilon 0 is the identity") {
        Dataset same = apply_class_noise(ds, 0.0, 4);
        for (std::size_t i = 0; i < ds.items.size(); ++i) {
            REQUIRE(same.items[i].pixels == ds.items[i].pixels);
        }
    }
    SECTION("same class gets the identical noise tensor") {
        const real eps = 8.0 / 255.0;
        Dataset noised = apply_class_noise(ds, eps, 4);
        REQUIRE(noised.provenance == Provenance::class_noised);
        // items 0 and 1 share class 0; compare their deltas where no clamping
        // happened
        for (std::size_t a = 0; a < ds.items.size(); ++a) {
            for (std::size_t b = a + 1; b < ds.items.size(); ++b) {
                if (ds.items[a].label != ds.items[b].label) continue;
                const Tensor& pa = ds.items[a].pixels;
                const Tensor& pb = ds.items[b].pixels;
                for (std::size_t j = 0; j < pa.size(); ++j) {
                    const real da = noised.items[a].pixels[j] - pa[j];
                    const real db = noised.items[b].pixels[j] - pb[j];
                    const bool clamped = noised.items[a].pixels[j] <= 0.0 ||
                                         noised.items[a].pixels[j] >= 1.0 ||
                                         noised.items[b].pixels[j] <= 0.0 ||
                                         noised.items[b].pixels[j] >= 1.0;
                    if (!clamped) REQUIRE(da == db);
                }
                break;
            }
            break;
        }
    }
    SECTION("per-pixel delta bounded by epsilon") {
        const real eps = 0.05;
        Dataset noised = apply_class_noise(ds, eps, 4);
        for (std::size_t i = 0; i < ds.items.size(); ++i) {
            REQUIRE(max_abs_diff(noised.items[i].pixels, ds.items[i].pixels) <= eps + 1e-12);
            REQUIRE(noised.items[i].pixels.min_value() >= 0.0);
            REQUIRE(noised.items[i].pixels.max_value() <= 1.0);
        }
    }
    SECTION("deterministic given seed") {
        Dataset n1 = apply_class_noise(ds, 0.05, 4);
        Dataset n2 = apply_class_noise(ds, 0.05, 4);
        for (std::size_t i = 0; i < n1.items.size(); ++i) {
            REQUIRE(n1.items[i].pixels == n2.items[i].pixels);
        }
    }
}

TEST_CASE("export/quantize round trip") {
    const fs::path dir = fresh_dir("export");
    Dataset ds = make_synthetic(2, 4, 3, 16, 16, 1.0, 2);
    export_dataset(ds, (dir / "out").string());
    Dataset back = load_dataset((dir / "out").string(), 16, 16);
    REQUIRE(back.items.size() == ds.items.size());
    Dataset q = quantize_dataset(ds);
    for (std::size_t i = 0; i < ds.items.size(); ++i) {
        // 8-bit quantization error is at most 1/510 per pixel
        REQUIRE(max_abs_diff(back.items[i].pixels, ds.items[i].pixels) <= 0.5 / 255.0 + 1e-12);
        REQUIRE(back.items[i].pixels == q.items[i].pixels);
    }
}
