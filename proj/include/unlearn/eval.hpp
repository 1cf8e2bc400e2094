#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "unlearn/augment.hpp"
#include "unlearn/data.hpp"
#include "unlearn/encrypt.hpp"
#include "unlearn/nn/checkpoint.hpp"
#include "unlearn/nn/train.hpp"

namespace unlearn {

/// One slice of a composed training set.
struct MixturePart {
    const Dataset* dataset = nullptr;
    real fraction = 1.0; // floor(fraction * |dataset|) items are taken
};

struct MixtureSpec {
    std::vector<MixturePart> parts;
    std::string description;
};

/// Takes the requested fraction of each part (seeded selection), concatenates
/// and shuffles. Parts must share image shape and class space.
inline Dataset compose_training_set(const MixtureSpec& spec, std::uint64_t seed) {
    if (spec.parts.empty()) throw std::invalid_argument("compose_training_set: no parts");
    const Dataset* first = spec.parts.front().dataset;
    Dataset out;
    out.class_count = first->class_count;
    out.name = spec.description.empty() ? "mixture" : spec.description;
    out.provenance = first->provenance;

    std::uint64_t stream = 0;
    for (const auto& part : spec.parts) {
        if (!part.dataset) throw std::invalid_argument("compose_training_set: null part");
        if (part.fraction < 0.0) throw std::invalid_argument("compose_training_set: negative fraction");
        const Dataset& ds = *part.dataset;
        if (ds.class_count != out.class_count ||
            (!ds.items.empty() && !first->items.empty() &&
             (ds.channels() != first->channels() || ds.height() != first->height() ||
              ds.width() != first->width()))) {
            throw std::invalid_argument("compose_training_set: parts disagree on shape/classes");
        }
        Rng rng(derive_seed(seed, 0xc0de + stream++));
        auto idx = rng.permutation(static_cast<int>(ds.items.size()));
        const std::size_t take = static_cast<std::size_t>(
            std::floor(part.fraction * static_cast<real>(ds.items.size())));
        idx.resize(std::min(idx.size(), take));
        std::sort(idx.begin(), idx.end());
        for (int i : idx) out.items.push_back(ds.items[static_cast<std::size_t>(i)]);
    }
    Rng rng(derive_seed(seed, 0x5bffULL));
    rng.shuffle(out.items);
    return out;
}

/// One evaluation result row: what was trained on what, and the full
/// per-epoch accuracy curves.
struct RunRecord {
    std::string run_id;
    std::string method;       // natural / confounder / emn / patched / ...
    std::string mixture;      // human-readable data composition
    std::string backbone;     // victim arch_id
    std::string augmentation; // augmentation name
    std::vector<real> train_acc;
    std::vector<real> test_acc;
    real final_test_acc = 0.0;
    std::uint64_t seed = 0;
    real wall_seconds = 0.0;
    bool diverged = false;

    real max_test_acc() const {
        real m = 0.0;
        for (real v : test_acc) m = std::max(m, v);
        return m;
    }
};

/// Trains a victim classifier on (possibly encrypted) data, measuring
/// accuracy on the untouched natural test set after every epoch. The
/// augmentation is applied online to training batches only.
inline RunRecord train_victim(const Dataset& train_set, const Dataset& test_set,
                              const nn::ArchSpec& arch, const nn::TrainSpec& spec,
                              const std::string& augmentation, const AugParams& aug_params = {},
                              nn::ModelHandle* model_out = nullptr,
                              const std::string& epoch_ckpt_dir = "") {
    spec.validate();
    if (test_set.provenance != Provenance::natural) {
        throw std::invalid_argument("train_victim: test set must be natural (unencrypted)");
    }
    if (train_set.items.empty()) throw std::invalid_argument("train_victim: empty training set");
    if (std::find(augmentation_names().begin(), augmentation_names().end(), augmentation) ==
        augmentation_names().end()) {
        throw std::invalid_argument("train_victim: unknown augmentation '" + augmentation + "'");
    }

    const auto t0 = std::chrono::steady_clock::now();
    nn::ModelHandle model = nn::build_model(arch, spec.seed);
    model.meta.trainspec_digest = spec.digest();
    nn::SgdMomentum opt(spec.momentum);
    auto trainable = model.net.trainable_params();

    RunRecord rec;
    rec.method = to_string(train_set.provenance);
    rec.mixture = train_set.name;
    rec.backbone = arch.arch_id;
    rec.augmentation = augmentation;
    rec.seed = spec.seed;

    const int n = static_cast<int>(train_set.items.size());
    for (int epoch = 0; epoch < spec.epochs; ++epoch) {
        const real lr = nn::scheduled_lr(spec, epoch);
        Rng rng(derive_seed(spec.seed, 0x1c71ULL + static_cast<std::uint64_t>(epoch)));
        const auto perm = rng.permutation(n);
        bool bad = false;
        for (const auto& batch : nn::batch_of_permutation(perm, spec.batch_size)) {
            Tensor x = nn::stack_images(train_set, batch);
            Tensor y = nn::one_hot(nn::gather_labels(train_set, batch), train_set.class_count);
            apply_augmentation(x, y, augmentation, aug_params, rng);
            const Tensor logits = model.net.forward(x, true);
            const nn::LossGrad lg = nn::softmax_cross_entropy_soft(logits, y);
            if (!std::isfinite(lg.value)) {
                bad = true;
                break;
            }
            model.net.zero_grad();
            model.net.backward(lg.grad, true);
            opt.step(trainable, lr);
        }
        if (bad) {
            rec.diverged = true;
            break;
        }
        rec.train_acc.push_back(nn::evaluate_accuracy(model, train_set));
        rec.test_acc.push_back(nn::evaluate_accuracy(model, test_set));
        model.meta.epoch = epoch + 1;
        if (!epoch_ckpt_dir.empty()) {
            nn::save_checkpoint(model, epoch_ckpt_dir + "/epoch_" + std::to_string(epoch + 1) +
                                           ".ckpt");
        }
    }
    if (rec.test_acc.empty()) {
        // epochs == 0 (or divergence in epoch 0): report the initialized model
        rec.final_test_acc = nn::evaluate_accuracy(model, test_set);
    } else {
        rec.final_test_acc = rec.test_acc.back();
    }
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (model_out) *model_out = std::move(model);
    return rec;
}

/// One victim run per backbone against the same encrypted pool; the noise was
/// generated against some other source classifier, so this measures transfer.
inline std::vector<RunRecord> transferability_sweep(const Dataset& encrypted,
                                                    const Dataset& test_set,
                                                    const std::vector<nn::ArchSpec>& backbones,
                                                    const nn::TrainSpec& spec,
                                                    const std::string& augmentation = "none") {
    std::vector<RunRecord> out;
    out.reserve(backbones.size());
    for (const auto& arch : backbones) {
        out.push_back(train_victim(encrypted, test_set, arch, spec, augmentation));
    }
    return out;
}

/// Trains the residual denoiser on (encrypted, natural) surrogate pairs: the
/// network regresses the applied noise, so denoising subtracts its output.
inline nn::ModelHandle train_denoiser(nn::ModelHandle& generator, const Dataset& surrogate_natural,
                                      const PerturbationBudget& budget,
                                      const nn::TrainSpec& spec, real capacity_scale = 1.0) {
    if (surrogate_natural.items.empty())
        throw std::invalid_argument("train_denoiser: empty surrogate pool");
    nn::ArchSpec arch;
    arch.arch_id = "dncnn_denoiser";
    arch.in_c = surrogate_natural.channels();
    arch.in_h = surrogate_natural.height();
    arch.in_w = surrogate_natural.width();
    arch.capacity_scale = capacity_scale;
    nn::ModelHandle denoiser = nn::build_model(arch, spec.seed);
    denoiser.meta.trainspec_digest = spec.digest();

    const Dataset enc = encrypt_dataset(generator, surrogate_natural, budget,
                                        Provenance::out_encrypted);
    nn::SgdMomentum opt(spec.momentum);
    auto trainable = denoiser.net.trainable_params();
    const int n = static_cast<int>(surrogate_natural.items.size());
    for (int epoch = 0; epoch < spec.epochs; ++epoch) {
        const real lr = nn::scheduled_lr(spec, epoch);
        Rng rng(derive_seed(spec.seed, 0xd30ULL + static_cast<std::uint64_t>(epoch)));
        const auto perm = rng.permutation(n);
        for (const auto& batch : nn::batch_of_permutation(perm, spec.batch_size)) {
            const Tensor x_enc = nn::stack_images(enc, batch);
            const Tensor x_nat = nn::stack_images(surrogate_natural, batch);
            const Tensor target = x_enc - x_nat; // the applied (post-clamp) noise
            const Tensor pred = denoiser.net.forward(x_enc, true);
            const nn::LossGrad lg = nn::mse_loss_grad(pred, target);
            if (!std::isfinite(lg.value))
                throw std::runtime_error("train_denoiser: diverged at epoch " + std::to_string(epoch));
            denoiser.net.zero_grad();
            denoiser.net.backward(lg.grad, true);
            opt.step(trainable, lr);
        }
        denoiser.meta.epoch = epoch + 1;
    }
    return denoiser;
}

inline Dataset denoise_dataset(nn::ModelHandle& denoiser, const Dataset& ds, int batch_size = 64) {
    Dataset out = ds;
    out.name = ds.name + "/denoised";
    for (const auto& batch : nn::batch_indices(static_cast<int>(ds.items.size()), batch_size)) {
        const Tensor x = nn::stack_images(ds, batch);
        const Tensor residual = denoiser.net.forward(x, false);
        const std::size_t per = x.size() / static_cast<std::size_t>(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) {
            Tensor& px = out.items[static_cast<std::size_t>(batch[i])].pixels;
            for (std::size_t j = 0; j < per; ++j) {
                px[j] = std::min(1.0, std::max(0.0, x[i * per + j] - residual[i * per + j]));
            }
        }
    }
    return out;
}

struct DenoiserAttackResult {
    RunRecord denoised_run;
    nn::ModelHandle denoiser;
};

/// The adaptive trainer-side countermeasure: learn a denoiser from surrogate
/// (natural, encrypted) pairs, strip the target pool, train a victim on the
/// result. The surrogate pool must be disjoint from the pool behind
/// target_encrypted (the attacker never sees those originals).
inline DenoiserAttackResult adaptive_denoiser_attack(
    nn::ModelHandle& generator, const Dataset& surrogate_natural, const Dataset& target_encrypted,
    const Dataset& test_set, const nn::ArchSpec& victim_arch, const nn::TrainSpec& victim_train,
    const PerturbationBudget& budget, const nn::TrainSpec& denoiser_train,
    real denoiser_capacity = 1.0) {
    nn::ModelHandle denoiser =
        train_denoiser(generator, surrogate_natural, budget, denoiser_train, denoiser_capacity);
    Dataset denoised = denoise_dataset(denoiser, target_encrypted);
    RunRecord run = train_victim(denoised, test_set, victim_arch, victim_train, "none");
    run.method = "denoised";
    return {std::move(run), std::move(denoiser)};
}

} // namespace unlearn
