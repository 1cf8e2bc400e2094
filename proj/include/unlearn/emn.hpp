#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "unlearn/data.hpp"
#include "unlearn/nn/arch.hpp"
#include "unlearn/nn/batch.hpp"
#include "unlearn/nn/losses.hpp"
#include "unlearn/nn/optim.hpp"

namespace unlearn {

/// Error-minimizing noise baseline: alternating bi-level loop against a
/// source classifier. Inner steps shape the per-image noise, outer steps
/// update the source model, until its training error on the noised images
/// drops below stop_train_error (or the round cap is hit).
struct EmnSpec {
    real inner_lr = 0.003;
    int inner_steps = 20;
    real outer_lr = 0.003;
    int outer_steps = 10;
    real stop_train_error = 0.01;
    real epsilon = 8.0 / 255.0;
    std::uint64_t seed = 0;
    int max_rounds = 100;  // the stopping error alone might never be reached
    int batch_size = 32;
    bool signed_steps = true; // false: raw-gradient SGD on delta

    void validate() const {
        if (inner_steps < 1 || outer_steps < 1)
            throw std::invalid_argument("EmnSpec: steps must be >= 1");
        if (!(stop_train_error > 0.0) || stop_train_error >= 1.0)
            throw std::invalid_argument("EmnSpec: stop_train_error must be in (0,1)");
        if (!(epsilon > 0.0) || epsilon > 1.0)
            throw std::invalid_argument("EmnSpec: epsilon must be in (0,1]");
        if (!(inner_lr > 0.0) || !(outer_lr > 0.0))
            throw std::invalid_argument("EmnSpec: learning rates must be > 0");
        if (max_rounds < 1) throw std::invalid_argument("EmnSpec: max_rounds must be >= 1");
        if (batch_size < 1) throw std::invalid_argument("EmnSpec: batch_size must be >= 1");
    }
};

struct EmnResult {
    Dataset encrypted;
    std::vector<Tensor> noise; // per-image delta, ||delta||_inf <= epsilon
    bool converged = false;    // false: round cap hit before the stop criterion
    int outer_rounds = 0;
    nn::ModelHandle source;
};

namespace detail {

inline void apply_noise_batch(Tensor& x, const std::vector<Tensor>& noise,
                              const std::vector<int>& indices) {
    const std::size_t per = x.size() / static_cast<std::size_t>(x.dim(0));
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const Tensor& d = noise[static_cast<std::size_t>(indices[i])];
        real* dst = x.data() + i * per;
        for (std::size_t j = 0; j < per; ++j) dst[j] = std::min(1.0, std::max(0.0, dst[j] + d[j]));
    }
}

inline real train_error(nn::ModelHandle& model, const Dataset& ds,
                        const std::vector<Tensor>& noise, int batch_size) {
    std::size_t wrong = 0;
    for (const auto& batch : nn::batch_indices(static_cast<int>(ds.items.size()), batch_size)) {
        Tensor x = nn::stack_images(ds, batch);
        apply_noise_batch(x, noise, batch);
        const Tensor logits = model.net.forward(x, false);
        for (int i = 0; i < logits.dim(0); ++i) {
            int best = 0;
            for (int j = 1; j < logits.dim(1); ++j) {
                if (logits.at2(i, j) > logits.at2(i, best)) best = j;
            }
            if (best != ds.items[static_cast<std::size_t>(batch[static_cast<std::size_t>(i)])].label)
                ++wrong;
        }
    }
    return static_cast<real>(wrong) / static_cast<real>(ds.items.size());
}

} // namespace detail

/// Mean per-image cross-entropy of the source model on x+delta; exposed so
/// callers can verify that inner passes actually shrink it.
inline real emn_mean_loss(nn::ModelHandle& model, const Dataset& ds,
                          const std::vector<Tensor>& noise, int batch_size = 64) {
    real total = 0.0;
    for (const auto& batch : nn::batch_indices(static_cast<int>(ds.items.size()), batch_size)) {
        Tensor x = nn::stack_images(ds, batch);
        if (!noise.empty()) detail::apply_noise_batch(x, noise, batch);
        const auto labels = nn::gather_labels(ds, batch);
        const Tensor logits = model.net.forward(x, false);
        total += nn::softmax_cross_entropy(logits, labels).value * static_cast<real>(batch.size());
    }
    return total / static_cast<real>(ds.items.size());
}

/// source_init, when given, seeds the bi-level loop with an already-trained
/// source model instead of a fresh initialization.
inline EmnResult emn_generate(const Dataset& ds, const nn::ArchSpec& source_spec,
                              const EmnSpec& spec, nn::ModelHandle* source_init = nullptr) {
    spec.validate();
    if (ds.items.empty()) throw std::invalid_argument("emn_generate: empty dataset");
    if (source_spec.class_count != ds.class_count)
        throw std::invalid_argument("emn_generate: source model class_count mismatch");

    EmnResult result{Dataset{}, {}, false, 0,
                     source_init ? nn::clone_model(*source_init)
                                 : nn::build_model(source_spec, spec.seed)};
    nn::ModelHandle& src = result.source;
    auto src_params = src.net.trainable_params();
    nn::SgdMomentum opt(0.0); // plain SGD for the outer updates

    const int n = static_cast<int>(ds.items.size());
    result.noise.assign(static_cast<std::size_t>(n),
                        Tensor({ds.channels(), ds.height(), ds.width()}));

    for (int round = 0; round < spec.max_rounds; ++round) {
        // inner: per-image projected steps minimizing the source loss w.r.t. delta
        for (int step = 0; step < spec.inner_steps; ++step) {
            for (const auto& batch : nn::batch_indices(n, spec.batch_size)) {
                Tensor x = nn::stack_images(ds, batch);
                detail::apply_noise_batch(x, result.noise, batch);
                const auto labels = nn::gather_labels(ds, batch);
                const Tensor logits = src.net.forward(x, false);
                nn::LossGrad lg = nn::softmax_cross_entropy(logits, labels);
                if (!std::isfinite(lg.value))
                    throw std::runtime_error("emn_generate: non-finite loss in inner loop");
                // per-image gradient: undo the batch-mean scaling
                lg.grad.scale(static_cast<real>(batch.size()));
                const Tensor g = src.net.backward(lg.grad, false);
                const std::size_t per = g.size() / static_cast<std::size_t>(batch.size());
                for (std::size_t i = 0; i < batch.size(); ++i) {
                    Tensor& d = result.noise[static_cast<std::size_t>(batch[i])];
                    const real* gp = g.data() + i * per;
                    for (std::size_t j = 0; j < per; ++j) {
                        const real stepv = spec.signed_steps
                                               ? spec.inner_lr * (gp[j] > 0.0 ? 1.0 : (gp[j] < 0.0 ? -1.0 : 0.0))
                                               : spec.inner_lr * gp[j];
                        d[j] = std::min(spec.epsilon, std::max(-spec.epsilon, d[j] - stepv));
                    }
                }
            }
        }

        // stop criterion between inner and outer: a source model that is
        // already accurate enough exits with zero outer rounds
        if (detail::train_error(src, ds, result.noise, spec.batch_size) <= spec.stop_train_error) {
            result.converged = true;
            break;
        }

        // outer: a few SGD steps on the current noised images
        Rng rng(derive_seed(spec.seed, 0xe34ULL + static_cast<std::uint64_t>(round)));
        const auto perm = rng.permutation(n);
        const auto batches = nn::batch_of_permutation(perm, spec.batch_size);
        for (int step = 0; step < spec.outer_steps; ++step) {
            const auto& batch = batches[static_cast<std::size_t>(step) % batches.size()];
            Tensor x = nn::stack_images(ds, batch);
            detail::apply_noise_batch(x, result.noise, batch);
            const auto labels = nn::gather_labels(ds, batch);
            const Tensor logits = src.net.forward(x, true);
            const nn::LossGrad lg = nn::softmax_cross_entropy(logits, labels);
            if (!std::isfinite(lg.value))
                throw std::runtime_error("emn_generate: non-finite loss in outer loop");
            src.net.zero_grad();
            src.net.backward(lg.grad, true);
            opt.step(src_params, spec.outer_lr);
        }
        result.outer_rounds = round + 1;
        src.meta.epoch = result.outer_rounds;
    }

    result.encrypted.class_count = ds.class_count;
    result.encrypted.name = ds.name + "/emn";
    result.encrypted.provenance = Provenance::emn;
    result.encrypted.items.reserve(ds.items.size());
    for (int i = 0; i < n; ++i) {
        LabeledImage item;
        item.label = ds.items[static_cast<std::size_t>(i)].label;
        item.pixels = ds.items[static_cast<std::size_t>(i)].pixels;
        item.pixels.add_scaled(result.noise[static_cast<std::size_t>(i)], 1.0);
        item.pixels.clamp(0.0, 1.0);
        result.encrypted.items.push_back(std::move(item));
    }
    return result;
}

} // namespace unlearn
