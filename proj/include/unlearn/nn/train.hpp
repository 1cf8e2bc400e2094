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

namespace unlearn::nn {

/// Fraction of items whose argmax logit matches the label; model runs in
/// eval mode.
inline real evaluate_accuracy(ModelHandle& model, const Dataset& ds, int batch_size = 64) {
    if (ds.items.empty()) return 0.0;
    std::size_t correct = 0;
    for (const auto& batch : batch_indices(static_cast<int>(ds.items.size()), batch_size)) {
        const Tensor x = stack_images(ds, batch);
        const Tensor logits = model.net.forward(x, false);
        const int k = logits.dim(1);
        for (int i = 0; i < logits.dim(0); ++i) {
            int best = 0;
            for (int j = 1; j < k; ++j) {
                if (logits.at2(i, j) > logits.at2(i, best)) best = j;
            }
            if (best == ds.items[static_cast<std::size_t>(batch[static_cast<std::size_t>(i)])].label) {
                ++correct;
            }
        }
    }
    return static_cast<real>(correct) / static_cast<real>(ds.items.size());
}

struct FitCurves {
    std::vector<real> train_acc;
    std::vector<real> train_loss;
};

/// Cross-entropy training loop shared by classifier pretraining and the
/// victim harness. Mutates the handle in place; per-epoch accuracy is
/// measured in eval mode on the unaugmented training set.
inline FitCurves fit_classifier(ModelHandle& model, const Dataset& ds, const TrainSpec& spec) {
    spec.validate();
    if (ds.class_count != model.spec.class_count) {
        throw std::invalid_argument("fit_classifier: dataset K=" + std::to_string(ds.class_count) +
                                    " vs model K=" + std::to_string(model.spec.class_count));
    }
    if (ds.items.empty()) throw std::invalid_argument("fit_classifier: empty dataset");

    FitCurves curves;
    SgdMomentum opt(spec.momentum);
    auto trainable = model.net.trainable_params();

    for (int epoch = 0; epoch < spec.epochs; ++epoch) {
        const real lr = scheduled_lr(spec, epoch);
        Rng rng(derive_seed(spec.seed, 0xe90c5ULL + static_cast<std::uint64_t>(epoch)));
        const auto perm = rng.permutation(static_cast<int>(ds.items.size()));
        real loss_sum = 0.0;
        std::size_t batches = 0;
        for (const auto& batch : batch_of_permutation(perm, spec.batch_size)) {
            const Tensor x = stack_images(ds, batch);
            const auto labels = gather_labels(ds, batch);
            const Tensor logits = model.net.forward(x, true);
            const LossGrad lg = softmax_cross_entropy(logits, labels);
            if (!std::isfinite(lg.value)) {
                throw std::runtime_error("fit_classifier: diverged (non-finite loss) at epoch " +
                                         std::to_string(epoch));
            }
            loss_sum += lg.value;
            ++batches;
            model.net.zero_grad();
            model.net.backward(lg.grad, true);
            opt.step(trainable, lr);
        }
        curves.train_loss.push_back(loss_sum / static_cast<real>(batches));
        curves.train_acc.push_back(evaluate_accuracy(model, ds));
        model.meta.epoch = epoch + 1;
    }
    return curves;
}

/// Builds and trains a classifier on the dataset; the returned handle records
/// the final epoch and the spec digest.
inline ModelHandle pretrain_classifier(const Dataset& ds, const ArchSpec& arch,
                                       const TrainSpec& spec, FitCurves* curves_out = nullptr) {
    ModelHandle model = build_model(arch, spec.seed);
    model.meta.trainspec_digest = spec.digest();
    FitCurves curves = fit_classifier(model, ds, spec);
    if (curves_out) *curves_out = std::move(curves);
    return model;
}

} // namespace unlearn::nn
