#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "unlearn/tensor.hpp"

namespace unlearn::nn {

// Discriminator outputs are clamped this far away from {0,1} before taking
// logs; keeps the loss finite when the sigmoid saturates.
inline constexpr real kProbClamp = 1e-7;

struct LossGrad {
    real value = 0.0;
    Tensor grad; // d(value)/d(input), batch-mean scaling already applied
};

inline Tensor softmax_rows(const Tensor& logits) {
    const int n = logits.dim(0), k = logits.dim(1);
    Tensor p = logits;
    for (int i = 0; i < n; ++i) {
        real m = -1e300;
        for (int j = 0; j < k; ++j) m = std::max(m, p.at2(i, j));
        real s = 0.0;
        for (int j = 0; j < k; ++j) {
            p.at2(i, j) = std::exp(p.at2(i, j) - m);
            s += p.at2(i, j);
        }
        for (int j = 0; j < k; ++j) p.at2(i, j) /= s;
    }
    return p;
}

/// Mean softmax cross-entropy against integer labels; grad is w.r.t. logits.
inline LossGrad softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    const int n = logits.dim(0), k = logits.dim(1);
    if (static_cast<int>(labels.size()) != n)
        throw std::invalid_argument("cross_entropy: batch/label count mismatch");
    LossGrad out;
    out.grad = Tensor({n, k});
    real total = 0.0;
    for (int i = 0; i < n; ++i) {
        const int t = labels[static_cast<std::size_t>(i)];
        if (t < 0 || t >= k) throw std::invalid_argument("cross_entropy: label out of range");
        real m = -1e300;
        for (int j = 0; j < k; ++j) m = std::max(m, logits.at2(i, j));
        real lse = 0.0;
        for (int j = 0; j < k; ++j) lse += std::exp(logits.at2(i, j) - m);
        lse = m + std::log(lse);
        total += lse - logits.at2(i, t);
        for (int j = 0; j < k; ++j) {
            const real p = std::exp(logits.at2(i, j) - lse);
            out.grad.at2(i, j) = (p - (j == t ? 1.0 : 0.0)) / n;
        }
    }
    out.value = total / n;
    return out;
}

inline real row_sum(const Tensor& t, int row, int k) {
    real s = 0.0;
    for (int j = 0; j < k; ++j) s += t.at2(row, j);
    return s;
}

/// Cross-entropy against soft target rows (mixup/cutmix labels).
inline LossGrad softmax_cross_entropy_soft(const Tensor& logits, const Tensor& targets) {
    const int n = logits.dim(0), k = logits.dim(1);
    if (!targets.same_dims(logits))
        throw std::invalid_argument("cross_entropy_soft: target shape mismatch");
    LossGrad out;
    out.grad = Tensor({n, k});
    real total = 0.0;
    for (int i = 0; i < n; ++i) {
        real m = -1e300;
        for (int j = 0; j < k; ++j) m = std::max(m, logits.at2(i, j));
        real lse = 0.0;
        for (int j = 0; j < k; ++j) lse += std::exp(logits.at2(i, j) - m);
        lse = m + std::log(lse);
        for (int j = 0; j < k; ++j) {
            const real logp = logits.at2(i, j) - lse;
            total -= targets.at2(i, j) * logp;
            out.grad.at2(i, j) = (std::exp(logp) * row_sum(targets, i, k) - targets.at2(i, j)) / n;
        }
    }
    out.value = total / n;
    return out;
}

/// Binary GAN discriminator objective: mean log D(x) + mean log(1 - D(x_enc)).
/// Always <= 0; the discriminator ASCENDS it. Gradients are of the value
/// itself (callers negate for gradient ascent via a descent step).
struct DiscriminatorLossGrad {
    real value = 0.0;
    Tensor d_real_grad;
    Tensor d_fake_grad;
};

inline DiscriminatorLossGrad discriminator_loss_grad(const Tensor& d_real, const Tensor& d_fake) {
    if (d_real.dim(0) != d_fake.dim(0))
        throw std::invalid_argument("discriminator_loss: batch size mismatch");
    const int n = d_real.dim(0);
    if (n == 0) throw std::invalid_argument("discriminator_loss: empty batch");
    DiscriminatorLossGrad out;
    out.d_real_grad = Tensor::zeros_like(d_real);
    out.d_fake_grad = Tensor::zeros_like(d_fake);
    real sum_real = 0.0, sum_fake = 0.0;
    for (std::size_t i = 0; i < d_real.size(); ++i) {
        const real d = d_real[i];
        if (!std::isfinite(d)) throw std::runtime_error("discriminator_loss: non-finite output");
        const real p = std::min(1.0 - kProbClamp, std::max(kProbClamp, d));
        sum_real += std::log(p);
        if (d > kProbClamp && d < 1.0 - kProbClamp) out.d_real_grad[i] = 1.0 / (p * n);
    }
    for (std::size_t i = 0; i < d_fake.size(); ++i) {
        const real d = d_fake[i];
        if (!std::isfinite(d)) throw std::runtime_error("discriminator_loss: non-finite output");
        const real p = std::min(1.0 - kProbClamp, std::max(kProbClamp, d));
        sum_fake += std::log(1.0 - p);
        if (d > kProbClamp && d < 1.0 - kProbClamp) out.d_fake_grad[i] = -1.0 / ((1.0 - p) * n);
    }
    out.value = sum_real / n + sum_fake / n;
    return out;
}

/// Non-saturating generator fooling term: -mean log D(x_enc).
inline LossGrad generator_adversarial_loss_grad(const Tensor& d_fake) {
    const int n = d_fake.dim(0);
    if (n == 0) throw std::invalid_argument("generator_adversarial_loss: empty batch");
    LossGrad out;
    out.grad = Tensor::zeros_like(d_fake);
    real s = 0.0;
    for (std::size_t i = 0; i < d_fake.size(); ++i) {
        const real p = std::min(1.0 - kProbClamp, std::max(kProbClamp, d_fake[i]));
        s -= std::log(p);
        if (d_fake[i] > kProbClamp && d_fake[i] < 1.0 - kProbClamp) out.grad[i] = -1.0 / (p * n);
    }
    out.value = s / n;
    return out;
}

/// Soft L2 bound: mean over the batch of max(0, ||noise_i||_2 - c), where the
/// norm runs over all elements of one sample's noise tensor.
inline LossGrad hinge_loss_grad(const Tensor& noise, real c) {
    if (!(c > 0.0)) throw std::invalid_argument("hinge_loss: c must be > 0");
    if (noise.ndim() < 2) throw std::invalid_argument("hinge_loss: expected a batch tensor");
    const int n = noise.dim(0);
    if (n == 0) throw std::invalid_argument("hinge_loss: empty batch");
    const std::size_t per = noise.size() / static_cast<std::size_t>(n);
    LossGrad out;
    out.grad = Tensor::zeros_like(noise);
    real total = 0.0;
    for (int i = 0; i < n; ++i) {
        const real* x = noise.data() + static_cast<std::size_t>(i) * per;
        real sq = 0.0;
        for (std::size_t j = 0; j < per; ++j) sq += x[j] * x[j];
        const real norm = std::sqrt(sq);
        if (norm > c) {
            total += norm - c;
            real* g = out.grad.data() + static_cast<std::size_t>(i) * per;
            const real coef = 1.0 / (norm * n);
            for (std::size_t j = 0; j < per; ++j) g[j] = x[j] * coef;
        }
    }
    out.value = total / n;
    return out;
}

inline real hinge_loss(const Tensor& noise, real c) { return hinge_loss_grad(noise, c).value; }

/// Mean squared error over all elements; used for denoiser regression.
inline LossGrad mse_loss_grad(const Tensor& pred, const Tensor& target) {
    if (!pred.same_dims(target)) throw std::invalid_argument("mse_loss: shape mismatch");
    LossGrad out;
    out.grad = Tensor::zeros_like(pred);
    real s = 0.0;
    const real inv = 1.0 / static_cast<real>(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const real d = pred[i] - target[i];
        s += d * d;
        out.grad[i] = 2.0 * d * inv;
    }
    out.value = s * inv;
    return out;
}

} // namespace unlearn::nn
