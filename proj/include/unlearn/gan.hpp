#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "unlearn/data.hpp"
#include "unlearn/nn/arch.hpp"
#include "unlearn/nn/batch.hpp"
#include "unlearn/nn/losses.hpp"
#include "unlearn/nn/optim.hpp"

namespace unlearn {

/// Hyperparameters for the confounder-noise GAN. The generator follows the
/// shared SGD/cosine recipe; the discriminator trains at a constant rate.
/// alpha weighs only the soft L2 hinge term.
struct GanTrainSpec {
    nn::TrainSpec gen_train;  // lr 0.025, momentum 0.9, cosine
    nn::TrainSpec disc_train; // lr 0.025, constant
    real alpha = 0.001;
    real c = 0.0; // soft L2 bound; 0 -> default_hinge_bound for the data shape
    real epsilon = 8.0 / 255.0;
    int epochs = 50;
    // When set (the default) the generator also descends the non-saturating
    // fooling term -log D(x_enc), i.e. the full max-min objective. Cleared,
    // the generator update uses only confounder + alpha*hinge, the literal
    // minibatch pseudocode reading.
    bool use_generator_adversarial_term = true;

    void validate() const {
        if (!(alpha >= 0.0)) throw std::invalid_argument("GanTrainSpec: alpha must be >= 0");
        if (!(epsilon > 0.0) || epsilon > 1.0)
            throw std::invalid_argument("GanTrainSpec: epsilon must be in (0,1]");
        if (epochs < 0) throw std::invalid_argument("GanTrainSpec: epochs must be >= 0");
        gen_train.validate();
        disc_train.validate();
    }
};

struct GanCurves {
    std::vector<real> l_dis, l_confounder, l_hinge, l_gen_adv;
};

struct GanResult {
    nn::ModelHandle generator;
    nn::ModelHandle discriminator;
    GanCurves curves;
};

/// Eq.-(2)-style discriminator objective evaluated on two ready-made batches.
inline real discriminator_loss(nn::ModelHandle& disc, const Tensor& x_batch,
                               const Tensor& x_enc_batch) {
    if (!x_batch.same_dims(x_enc_batch))
        throw std::invalid_argument("discriminator_loss: batch shape mismatch");
    const Tensor d_real = disc.net.forward(x_batch, false);
    const Tensor d_fake = disc.net.forward(x_enc_batch, false);
    return nn::discriminator_loss_grad(d_real, d_fake).value;
}

/// Mean cross-entropy of the fixed classifier on pure noises against the true
/// labels; this is the term that ties the noise to the label.
inline real confounder_loss(nn::ModelHandle& classifier, const Tensor& noise_batch,
                            const std::vector<int>& labels) {
    const Tensor logits = classifier.net.forward(noise_batch, false);
    return nn::softmax_cross_entropy(logits, labels).value;
}

using nn::hinge_loss;

namespace detail {

inline Tensor scaled_noise(const Tensor& raw, real epsilon) {
    Tensor noise = raw;
    noise.scale(epsilon);
    return noise;
}

inline Tensor clamped_sum(const Tensor& x, const Tensor& noise) {
    Tensor out = x + noise;
    out.clamp(0.0, 1.0);
    return out;
}

// clamp backward: gradient passes only strictly inside (0,1)
inline void mask_clamp_grad(Tensor& grad, const Tensor& pre_clamp) {
    for (std::size_t i = 0; i < grad.size(); ++i) {
        if (pre_clamp[i] <= 0.0 || pre_clamp[i] >= 1.0) grad[i] = 0.0;
    }
}

} // namespace detail

/// Minibatch max-min training of the noise generator. Per batch the
/// discriminator ascends its real/fake objective first, then the generator
/// descends confounder + alpha*hinge (+ the fooling term when enabled).
/// The classifier is frozen throughout: its parameters are never stepped and
/// its gradient buffers are never touched.
inline GanResult train_confounder_gan(const Dataset& ds, nn::ModelHandle& classifier,
                                      const GanTrainSpec& spec,
                                      const nn::ArchSpec* gen_arch = nullptr,
                                      const nn::ArchSpec* disc_arch = nullptr) {
    spec.validate();
    if (ds.items.empty()) throw std::invalid_argument("train_confounder_gan: empty dataset");
    if (classifier.spec.class_count != ds.class_count)
        throw std::invalid_argument("train_confounder_gan: classifier class_count mismatch");

    nn::ArchSpec ga;
    if (gen_arch) ga = *gen_arch;
    else {
        ga.arch_id = "generator4x4";
        ga.in_c = ds.channels();
        ga.in_h = ds.height();
        ga.in_w = ds.width();
    }
    nn::ArchSpec da;
    if (disc_arch) da = *disc_arch;
    else {
        da.arch_id = "discriminator4";
        da.in_c = ds.channels();
        da.in_h = ds.height();
        da.in_w = ds.width();
    }

    const std::uint64_t seed = spec.gen_train.seed;
    GanResult result{nn::build_model(ga, seed), nn::build_model(da, derive_seed(seed, 0xd15cULL)), {}};
    nn::ModelHandle& gen = result.generator;
    nn::ModelHandle& disc = result.discriminator;
    gen.meta.trainspec_digest = spec.gen_train.digest();
    disc.meta.trainspec_digest = spec.disc_train.digest();

    const real hinge_c = spec.c > 0.0
                             ? spec.c
                             : default_hinge_bound(spec.epsilon, ds.channels(), ds.height(), ds.width());

    nn::SgdMomentum opt_gen(spec.gen_train.momentum);
    nn::SgdMomentum opt_disc(spec.disc_train.momentum);
    auto gen_params = gen.net.trainable_params();
    auto disc_params = disc.net.trainable_params();

    nn::TrainSpec gen_sched = spec.gen_train;
    gen_sched.epochs = spec.epochs;
    nn::TrainSpec disc_sched = spec.disc_train;
    disc_sched.epochs = spec.epochs;

    const int n = static_cast<int>(ds.items.size());
    for (int epoch = 0; epoch < spec.epochs; ++epoch) {
        const real lr_g = nn::scheduled_lr(gen_sched, epoch);
        const real lr_d = nn::scheduled_lr(disc_sched, epoch);
        Rng rng(derive_seed(seed, 0x9a40ULL + static_cast<std::uint64_t>(epoch)));
        const auto perm = rng.permutation(n);

        real acc_dis = 0.0, acc_conf = 0.0, acc_hinge = 0.0, acc_adv = 0.0;
        std::size_t batches = 0;

        for (const auto& batch : nn::batch_of_permutation(perm, spec.gen_train.batch_size)) {
            const Tensor x = nn::stack_images(ds, batch);
            const auto labels = nn::gather_labels(ds, batch);

            // generator forward; kept for the generator backward below
            const Tensor raw = gen.net.forward(x, true);
            const Tensor noise = detail::scaled_noise(raw, spec.epsilon);
            const Tensor pre_clamp = x + noise;
            Tensor x_enc = pre_clamp;
            x_enc.clamp(0.0, 1.0);

            // --- discriminator: ascend mean log D(x) + log(1 - D(x_enc))
            disc.net.zero_grad();
            const Tensor d_real = disc.net.forward(x, true);
            Tensor g_real = Tensor::zeros_like(d_real);
            real l_dis = 0.0;
            for (std::size_t i = 0; i < d_real.size(); ++i) {
                const real p = std::min(1.0 - nn::kProbClamp, std::max(nn::kProbClamp, d_real[i]));
                l_dis += std::log(p) / static_cast<real>(d_real.size());
                if (d_real[i] > nn::kProbClamp && d_real[i] < 1.0 - nn::kProbClamp)
                    g_real[i] = -1.0 / (p * static_cast<real>(d_real.size())); // descend -L
            }
            disc.net.backward(g_real, true);
            const Tensor d_fake = disc.net.forward(x_enc, true);
            Tensor g_fake = Tensor::zeros_like(d_fake);
            for (std::size_t i = 0; i < d_fake.size(); ++i) {
                const real p = std::min(1.0 - nn::kProbClamp, std::max(nn::kProbClamp, d_fake[i]));
                l_dis += std::log(1.0 - p) / static_cast<real>(d_fake.size());
                if (d_fake[i] > nn::kProbClamp && d_fake[i] < 1.0 - nn::kProbClamp)
                    g_fake[i] = 1.0 / ((1.0 - p) * static_cast<real>(d_fake.size()));
            }
            disc.net.backward(g_fake, true);
            opt_disc.step(disc_params, lr_d);

            // --- generator: descend confounder + alpha*hinge (+ fooling term)
            // The label-tying term classifies the generator's raw pattern;
            // the invisibility terms (hinge, fooling) act on the pixel-space
            // perturbation epsilon*raw that is actually added to images.
            Tensor g_raw = Tensor::zeros_like(raw);

            const Tensor logits = classifier.net.forward(raw, false);
            const nn::LossGrad conf = nn::softmax_cross_entropy(logits, labels);
            g_raw.add_scaled(classifier.net.backward(conf.grad, false), 1.0);

            const nn::LossGrad hinge = nn::hinge_loss_grad(noise, hinge_c);
            g_raw.add_scaled(hinge.grad, spec.alpha * spec.epsilon);

            real l_adv = 0.0;
            if (spec.use_generator_adversarial_term) {
                const Tensor d_fake2 = disc.net.forward(x_enc, true);
                const nn::LossGrad adv = nn::generator_adversarial_loss_grad(d_fake2);
                l_adv = adv.value;
                Tensor g_xenc = disc.net.backward(adv.grad, false);
                detail::mask_clamp_grad(g_xenc, pre_clamp);
                g_raw.add_scaled(g_xenc, spec.epsilon);
            }

            if (!std::isfinite(conf.value) || !std::isfinite(hinge.value) || !std::isfinite(l_dis) ||
                !std::isfinite(l_adv)) {
                throw std::runtime_error("train_confounder_gan: non-finite loss at epoch " +
                                         std::to_string(epoch) + ", batch " +
                                         std::to_string(batches));
            }

            gen.net.zero_grad();
            gen.net.backward(g_raw, true);
            opt_gen.step(gen_params, lr_g);

            acc_dis += l_dis;
            acc_conf += conf.value;
            acc_hinge += hinge.value;
            acc_adv += l_adv;
            ++batches;
        }

        const real inv = 1.0 / static_cast<real>(batches);
        result.curves.l_dis.push_back(acc_dis * inv);
        result.curves.l_confounder.push_back(acc_conf * inv);
        result.curves.l_hinge.push_back(acc_hinge * inv);
        result.curves.l_gen_adv.push_back(acc_adv * inv);
        gen.meta.epoch = epoch + 1;
        disc.meta.epoch = epoch + 1;
    }
    return result;
}

/// Accuracy of the fixed classifier on pure generator noises over a dataset;
/// this is the measurable form of the noise-to-label edge.
inline real noise_label_accuracy(nn::ModelHandle& classifier, nn::ModelHandle& generator,
                                 const Dataset& ds, int batch_size = 64) {
    if (ds.items.empty()) throw std::invalid_argument("noise_label_accuracy: empty dataset");
    std::size_t correct = 0;
    for (const auto& batch : nn::batch_indices(static_cast<int>(ds.items.size()), batch_size)) {
        const Tensor x = nn::stack_images(ds, batch);
        const Tensor noise = generator.net.forward(x, false);
        const Tensor logits = classifier.net.forward(noise, false);
        for (int i = 0; i < logits.dim(0); ++i) {
            int best = 0;
            for (int j = 1; j < logits.dim(1); ++j) {
                if (logits.at2(i, j) > logits.at2(i, best)) best = j;
            }
            if (best == ds.items[static_cast<std::size_t>(batch[static_cast<std::size_t>(i)])].label)
                ++correct;
        }
    }
    return static_cast<real>(correct) / static_cast<real>(ds.items.size());
}

} // namespace unlearn
