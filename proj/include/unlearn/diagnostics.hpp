#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "unlearn/data.hpp"
#include "unlearn/encrypt.hpp"
#include "unlearn/nn/batch.hpp"
#include "unlearn/nn/losses.hpp"

namespace unlearn {

namespace detail_diag {

// softmax confidence on the true class, per item
inline std::vector<real> true_class_confidence(nn::ModelHandle& model, const Tensor& x,
                                               const std::vector<int>& labels) {
    const Tensor logits = model.net.forward(x, false);
    const Tensor p = nn::softmax_rows(logits);
    std::vector<real> out(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        out[i] = p.at2(static_cast<int>(i), labels[i]);
    }
    return out;
}

} // namespace detail_diag

/// Confidence ascent ratio: the fraction of images whose softmax confidence
/// on the true class strictly rises after encryption. Zero noise gives
/// differences of exactly 0, which the strict inequality rejects.
inline real car(nn::ModelHandle& model, const Dataset& natural, nn::ModelHandle& generator,
                const PerturbationBudget& budget, int batch_size = 64) {
    if (natural.items.empty()) throw std::invalid_argument("car: empty dataset");
    std::size_t ascended = 0;
    for (const auto& batch : nn::batch_indices(static_cast<int>(natural.items.size()), batch_size)) {
        const Tensor x = nn::stack_images(natural, batch);
        const auto labels = nn::gather_labels(natural, batch);
        Tensor noise = generator.net.forward(x, false);
        noise.scale(budget.epsilon);
        Tensor x_enc = x + noise;
        x_enc.clamp(0.0, 1.0);
        const auto conf_nat = detail_diag::true_class_confidence(model, x, labels);
        const auto conf_enc = detail_diag::true_class_confidence(model, x_enc, labels);
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (conf_enc[i] - conf_nat[i] > 0.0) ++ascended;
        }
    }
    return static_cast<real>(ascended) / static_cast<real>(natural.items.size());
}

struct GcrResult {
    real value = 0.0;
    int excluded = 0; // items whose natural-image gradient norm was exactly zero
    int n = 0;
};

/// Gradient compression ratio: mean over items of
/// ||grad_W loss(x_enc)|| / ||grad_W loss(x)||, where W is the weight+bias of
/// the model's final affine (logit) layer. For cross-entropy that gradient
/// factorizes, so each norm is ||p - onehot|| * sqrt(||features||^2 + 1).
inline GcrResult gcr(nn::ModelHandle& model, const Dataset& natural, nn::ModelHandle& generator,
                     const PerturbationBudget& budget, int batch_size = 64) {
    if (natural.items.empty()) throw std::invalid_argument("gcr: empty dataset");
    const int lin_idx = model.net.last_linear_index();
    if (lin_idx < 0) throw std::invalid_argument("gcr: model has no final linear layer");
    nn::Linear* lin = model.net.linear_at(lin_idx);

    auto grad_norm = [&](const Tensor& x, const std::vector<int>& labels, std::vector<real>& out) {
        const Tensor feats =
            model.net.root().forward_upto(x, static_cast<std::size_t>(lin_idx), false);
        const Tensor logits = lin->forward(feats, false);
        const Tensor p = nn::softmax_rows(logits);
        const int k = logits.dim(1);
        for (int i = 0; i < logits.dim(0); ++i) {
            real gsq = 0.0;
            for (int j = 0; j < k; ++j) {
                const real g = p.at2(i, j) - (j == labels[static_cast<std::size_t>(i)] ? 1.0 : 0.0);
                gsq += g * g;
            }
            real fsq = 0.0;
            for (int j = 0; j < feats.dim(1); ++j) fsq += feats.at2(i, j) * feats.at2(i, j);
            out.push_back(std::sqrt(gsq * (fsq + 1.0)));
        }
    };

    real sum_ratio = 0.0;
    int excluded = 0, counted = 0;
    for (const auto& batch : nn::batch_indices(static_cast<int>(natural.items.size()), batch_size)) {
        const Tensor x = nn::stack_images(natural, batch);
        const auto labels = nn::gather_labels(natural, batch);
        Tensor noise = generator.net.forward(x, false);
        noise.scale(budget.epsilon);
        Tensor x_enc = x + noise;
        x_enc.clamp(0.0, 1.0);
        std::vector<real> norm_nat, norm_enc;
        grad_norm(x, labels, norm_nat);
        grad_norm(x_enc, labels, norm_enc);
        for (std::size_t i = 0; i < norm_nat.size(); ++i) {
            if (norm_nat[i] == 0.0) {
                ++excluded;
                continue;
            }
            sum_ratio += norm_enc[i] / norm_nat[i];
            ++counted;
        }
    }
    if (counted == 0) throw std::runtime_error("gcr: every item had zero natural gradient");
    return {sum_ratio / static_cast<real>(counted), excluded,
            static_cast<int>(natural.items.size())};
}

/// Rescales a noise tensor to the 8-bit range by its own min/max (the usual
/// way small noises are made visible); a constant tensor maps to mid-gray.
/// Returns {c,h,w} pixels already quantized to the k/255 grid.
inline Tensor visualize_noise(const Tensor& noise) {
    if (!noise.all_finite()) throw std::invalid_argument("visualize_noise: non-finite input");
    const real lo = noise.min_value(), hi = noise.max_value();
    Tensor out = noise;
    if (hi <= lo) {
        out.fill(128.0 / 255.0);
        return out;
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = std::lround((noise[i] - lo) / (hi - lo) * 255.0) / 255.0;
    }
    return out;
}

/// Horizontal triptych rows (original | noise | encrypted) for the first
/// `count` items; returns one {c, rows*h, 3*w} image in [0,1].
inline Tensor noise_triptych(nn::ModelHandle& generator, const Dataset& ds,
                             const PerturbationBudget& budget, int count) {
    count = std::min<int>(count, static_cast<int>(ds.items.size()));
    if (count < 1) throw std::invalid_argument("noise_triptych: empty dataset");
    const int c = ds.channels(), h = ds.height(), w = ds.width();
    Tensor grid({c, count * h, 3 * w});
    for (int i = 0; i < count; ++i) {
        const Tensor& x = ds.items[static_cast<std::size_t>(i)].pixels;
        const EncryptedImage enc = encrypt_image(generator, x, budget);
        const Tensor vis = visualize_noise(enc.noise);
        for (int ci = 0; ci < c; ++ci)
            for (int y = 0; y < h; ++y)
                for (int xx = 0; xx < w; ++xx) {
                    grid.at3(ci, i * h + y, xx) = x.at3(ci, y, xx);
                    grid.at3(ci, i * h + y, w + xx) = vis.at3(ci, y, xx);
                    grid.at3(ci, i * h + y, 2 * w + xx) = enc.x_enc.at3(ci, y, xx);
                }
    }
    return grid;
}

} // namespace unlearn
