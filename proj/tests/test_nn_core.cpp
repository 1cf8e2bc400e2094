#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "unlearn/data.hpp"
#include "unlearn/nn/checkpoint.hpp"
#include "unlearn/nn/gradcheck.hpp"
#include "unlearn/nn/train.hpp"

using namespace unlearn;

namespace {

Tensor random_batch(int n, int c, int h, int w, std::uint64_t seed) {
    Rng rng(seed);
    Tensor x({n, c, h, w});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform();
    return x;
}

} // namespace

TEST_CASE("build_model: contracts and determinism") {
    SECTION("generator maps to the same shape, outputs in [-1,1]") {
        nn::ArchSpec spec{"generator4x4", 3, 32, 32, 0, 0.5};
        nn::ModelHandle g = nn::build_model(spec, 1);
        const Tensor x = random_batch(4, 3, 32, 32, 2);
        const Tensor y = g.net.forward(x, false);
        REQUIRE(y.dims() == x.dims());
        REQUIRE(y.min_value() >= -1.0);
        REQUIRE(y.max_value() <= 1.0);
    }
    SECTION("discriminator output strictly in (0,1)") {
        nn::ArchSpec spec{"discriminator4", 3, 16, 16, 0, 1.0};
        nn::ModelHandle d = nn::build_model(spec, 3);
        const Tensor x = random_batch(8, 3, 16, 16, 4);
        const Tensor y = d.net.forward(x, false);
        REQUIRE(y.dims() == std::vector<int>{8, 1});
        for (std::size_t i = 0; i < y.size(); ++i) {
            REQUIRE(y[i] > 0.0);
            REQUIRE(y[i] < 1.0);
        }
    }
    SECTION("same spec and seed give identical parameter maps") {
        nn::ArchSpec spec{"resnet18", 3, 16, 16, 4, 0.125};
        nn::ModelHandle a = nn::build_model(spec, 9);
        nn::ModelHandle b = nn::build_model(spec, 9);
        REQUIRE(a.net.state_equal(b.net));
        nn::ModelHandle c = nn::build_model(spec, 10);
        REQUIRE(!a.net.state_equal(c.net));
    }
    SECTION("unknown arch rejected") {
        nn::ArchSpec spec{"transformer9000", 3, 16, 16, 2, 1.0};
        REQUIRE_THROWS_AS(nn::build_model(spec, 0), std::invalid_argument);
    }
    SECTION("every backbone runs forward and backward") {
        const Tensor x = random_batch(2, 3, 32, 32, 5);
        for (const std::string id : {"smallcnn", "resnet18", "resnet50", "vgg11", "densenet121"}) {
            nn::ArchSpec spec{id, 3, 32, 32, 5, 0.125};
            nn::ModelHandle m = nn::build_model(spec, 6);
            Tensor y = m.net.forward(x, true);
            REQUIRE(y.dims() == std::vector<int>{2, 5});
            Tensor dy = Tensor::zeros_like(y);
            dy[0] = 1.0;
            Tensor dx = m.net.backward(dy, true);
            REQUIRE(dx.dims() == x.dims());
            REQUIRE(dx.all_finite());
        }
    }
    SECTION("denoiser maps image to same-shape residual") {
        nn::ArchSpec spec{"dncnn_denoiser", 3, 16, 16, 0, 0.25};
        nn::ModelHandle m = nn::build_model(spec, 7);
        const Tensor x = random_batch(3, 3, 16, 16, 8);
        REQUIRE(m.net.forward(x, false).dims() == x.dims());
    }
}

TEST_CASE("pretrain_classifier: boundary, oracle accuracy, monotone trend") {
    Dataset train = make_synthetic(2, 100, 3, 16, 16, 1.0, 21);
    nn::ArchSpec arch{"smallcnn", 3, 16, 16, 2, 1.0};

    SECTION("epochs=0 returns the initialized model unchanged") {
        nn::TrainSpec spec;
        spec.epochs = 0;
        spec.seed = 5;
        nn::ModelHandle trained = nn::pretrain_classifier(train, arch, spec);
        nn::ModelHandle fresh = nn::build_model(arch, 5);
        REQUIRE(trained.net.state_equal(fresh.net));
        REQUIRE(trained.meta.epoch == 0);
    }
    SECTION("30 epochs reach >= 0.95 train accuracy") {
        nn::TrainSpec spec;
        spec.epochs = 30;
        spec.seed = 21;
        nn::FitCurves curves;
        nn::ModelHandle model = nn::pretrain_classifier(train, arch, spec, &curves);
        REQUIRE(curves.train_acc.back() >= 0.95);
        REQUIRE(model.meta.epoch == 30);
    }
    SECTION("training accuracy final >= initial, averaged over 5 seeds") {
        real first = 0.0, last = 0.0;
        for (std::uint64_t seed : {31ULL, 32ULL, 33ULL, 34ULL, 35ULL}) {
            nn::TrainSpec spec;
            spec.epochs = 8;
            spec.seed = seed;
            nn::FitCurves curves;
            nn::pretrain_classifier(train, arch, spec, &curves);
            first += curves.train_acc.front();
            last += curves.train_acc.back();
        }
        REQUIRE(last >= first);
    }
    SECTION("class count mismatch rejected") {
        nn::ArchSpec bad = arch;
        bad.class_count = 7;
        nn::TrainSpec spec;
        spec.epochs = 1;
        REQUIRE_THROWS_AS(nn::pretrain_classifier(train, bad, spec), std::invalid_argument);
    }
}

TEST_CASE("checkpoint: lossless round trip and corruption detection") {
    Dataset train = make_synthetic(2, 30, 3, 16, 16, 1.0, 40);
    nn::ArchSpec arch{"resnet18", 3, 16, 16, 2, 0.125}; // exercises BN buffers
    nn::TrainSpec spec;
    spec.epochs = 1;
    spec.seed = 2;
    nn::ModelHandle model = nn::pretrain_classifier(train, arch, spec);

    std::stringstream ss(std::ios::in | std::ios::out | std::ios::binary);
    nn::save_checkpoint(model, ss);
    const std::string bytes = ss.str();

    SECTION("round trip is bitwise lossless, metadata preserved") {
        nn::ModelHandle loaded = nn::load_checkpoint(ss);
        REQUIRE(loaded.net.state_equal(model.net));
        REQUIRE(loaded.meta.epoch == 1);
        REQUIRE(loaded.meta.seed == 2);
        REQUIRE(loaded.spec.arch_id == "resnet18");
        // saving the loaded model reproduces the exact original bytes
        REQUIRE(nn::checkpoint_bytes(loaded) == bytes);
    }
    SECTION("tampered input shape fails to load") {
        std::string bad = bytes;
        // in_h is the second i32 after magic+version+arch_id
        const std::size_t off = 4 + 4 + 4 + std::string("resnet18").size() + 4;
        bad[off] = 127;
        std::istringstream is(bad, std::ios::binary);
        REQUIRE_THROWS_AS(nn::load_checkpoint(is), std::exception);
    }
    SECTION("truncated blob fails to load") {
        std::istringstream is(bytes.substr(0, bytes.size() / 2), std::ios::binary);
        REQUIRE_THROWS_AS(nn::load_checkpoint(is), std::runtime_error);
    }
    SECTION("bad magic fails to load") {
        std::string bad = bytes;
        bad[0] = 'X';
        std::istringstream is(bad, std::ios::binary);
        REQUIRE_THROWS_AS(nn::load_checkpoint(is), std::runtime_error);
    }
    SECTION("unsupported version fails to load") {
        std::string bad = bytes;
        bad[4] = 99;
        std::istringstream is(bad, std::ios::binary);
        REQUIRE_THROWS_AS(nn::load_checkpoint(is), std::runtime_error);
    }
}

TEST_CASE("gradcheck: every named loss at tolerance 1e-3") {
    const Tensor x = random_batch(4, 3, 16, 16, 50);

    SECTION("cross_entropy on smallcnn") {
        nn::ArchSpec spec{"smallcnn", 3, 16, 16, 2, 1.0};
        nn::ModelHandle f = nn::build_model(spec, 7);
        REQUIRE(nn::gradcheck(f, "cross_entropy", x) < 1e-3);
    }
    SECTION("confounder_loss on the fixed classifier") {
        nn::ArchSpec spec{"smallcnn", 3, 16, 16, 2, 1.0};
        nn::ModelHandle f = nn::build_model(spec, 7);
        // noise-scale inputs rather than images
        Tensor noise = x;
        noise.scale(16.0 / 255.0);
        REQUIRE(nn::gradcheck(f, "confounder_loss", noise) < 1e-3);
    }
    SECTION("discriminator_loss") {
        nn::ArchSpec spec{"discriminator4", 3, 16, 16, 0, 1.0};
        nn::ModelHandle d = nn::build_model(spec, 7);
        REQUIRE(nn::gradcheck(d, "discriminator_loss", x) < 1e-3);
    }
    SECTION("hinge_loss through the generator, active region") {
        nn::ArchSpec spec{"generator4x4", 3, 16, 16, 0, 0.5};
        nn::ModelHandle g = nn::build_model(spec, 7);
        nn::GradcheckOptions opts;
        opts.hinge_c = 1e-3; // small bound so the hinge is active
        REQUIRE(nn::gradcheck(g, "hinge_loss", x, opts) < 1e-3);
    }
    SECTION("hinge_loss flat region has exactly zero gradient") {
        nn::ArchSpec spec{"generator4x4", 3, 16, 16, 0, 0.5};
        nn::ModelHandle g = nn::build_model(spec, 7);
        nn::GradcheckOptions opts;
        opts.hinge_c = 1e9; // every norm far below the bound
        REQUIRE(nn::gradcheck(g, "hinge_loss", x, opts) < 1e-3);
        // the analytic gradient must be exactly zero everywhere
        g.net.zero_grad();
        Tensor raw = g.net.forward(x, false);
        raw.scale(opts.epsilon);
        const nn::LossGrad lg = nn::hinge_loss_grad(raw, opts.hinge_c);
        REQUIRE(lg.value == 0.0);
        REQUIRE(lg.grad.max_abs() == 0.0);
    }
    SECTION("unknown loss name rejected") {
        nn::ArchSpec spec{"smallcnn", 3, 16, 16, 2, 1.0};
        nn::ModelHandle f = nn::build_model(spec, 7);
        REQUIRE_THROWS_AS(nn::gradcheck(f, "l2_fantasy", x), std::invalid_argument);
    }
    SECTION("batchnorm path (resnet) also passes") {
        nn::ArchSpec spec{"resnet18", 3, 16, 16, 2, 0.125};
        nn::ModelHandle m = nn::build_model(spec, 7);
        REQUIRE(nn::gradcheck(m, "cross_entropy", x) < 1e-3);
    }
}

TEST_CASE("scheduled_lr: cosine without restart and constant") {
    nn::TrainSpec spec;
    spec.lr = 0.025;
    spec.epochs = 100;
    REQUIRE(nn::scheduled_lr(spec, 0) == Catch::Approx(0.025));
    REQUIRE(nn::scheduled_lr(spec, 50) == Catch::Approx(0.0125));
    REQUIRE(nn::scheduled_lr(spec, 99) < 0.0125 * 0.01 + 1e-5);
    spec.lr_schedule = "constant";
    REQUIRE(nn::scheduled_lr(spec, 99) == Catch::Approx(0.025));
}

TEST_CASE("clone_model copies state without sharing") {
    nn::ArchSpec spec{"smallcnn", 3, 16, 16, 2, 1.0};
    nn::ModelHandle a = nn::build_model(spec, 1);
    nn::ModelHandle b = nn::clone_model(a);
    REQUIRE(a.net.state_equal(b.net));
    b.net.trainable_params()[0]->value[0] += 1.0;
    REQUIRE(!a.net.state_equal(b.net));
}
