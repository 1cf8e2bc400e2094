#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "unlearn/nn/arch.hpp"
#include "unlearn/nn/losses.hpp"

namespace unlearn::nn {

struct GradcheckOptions {
    real step = 1e-4;      // central-difference step
    int param_samples = 20; // randomly sampled parameter entries
    std::uint64_t seed = 0;
    real epsilon = 8.0 / 255.0; // noise scaling for hinge_loss through a generator
    real hinge_c = 1.0;
};

namespace detail {

// Deterministic labels for the check; the values are irrelevant as long as
// analytic and numeric sides agree.
inline std::vector<int> gradcheck_labels(int n, int k) {
    std::vector<int> t(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) t[static_cast<std::size_t>(i)] = i % k;
    return t;
}

} // namespace detail

/// Compares the analytic gradient of the named loss w.r.t. a sampled subset
/// of the model's parameters against central finite differences and returns
/// the worst relative error. Models run in eval mode so the scalar being
/// differentiated is a pure function of (parameters, input).
///
/// loss_name:
///   cross_entropy      model is a classifier, input is an image batch
///   confounder_loss    model is the fixed classifier, input is a noise batch
///   discriminator_loss model is a discriminator; the input batch is split in
///                      half into (real, generated) parts
///   hinge_loss         model is a generator; the loss is applied to the
///                      epsilon-scaled generator output
inline real gradcheck(ModelHandle& model, const std::string& loss_name, const Tensor& input,
                      const GradcheckOptions& opts = {}) {
    const int n = input.dim(0);
    if (n < 1) throw std::invalid_argument("gradcheck: empty input");

    // loss() evaluates the scalar; loss_and_backward() also accumulates
    // parameter gradients.
    std::function<real(bool)> run;
    if (loss_name == "cross_entropy" || loss_name == "confounder_loss") {
        const auto labels = detail::gradcheck_labels(n, model.spec.class_count);
        run = [&, labels](bool with_grad) {
            const Tensor logits = model.net.forward(input, false);
            const LossGrad lg = softmax_cross_entropy(logits, labels);
            if (with_grad) model.net.backward(lg.grad, true);
            return lg.value;
        };
    } else if (loss_name == "discriminator_loss") {
        if (n < 2) throw std::invalid_argument("gradcheck: discriminator_loss needs a batch >= 2");
        const int half = n / 2;
        std::vector<int> adim = input.dims();
        adim[0] = half;
        std::vector<int> bdim = input.dims();
        bdim[0] = n - half;
        Tensor a(adim), b(bdim);
        const std::size_t per = input.size() / static_cast<std::size_t>(n);
        std::copy(input.data(), input.data() + per * static_cast<std::size_t>(half), a.data());
        std::copy(input.data() + per * static_cast<std::size_t>(half),
                  input.data() + input.size(), b.data());
        // The two terms of Eq.(2)-style losses are separable, so each half
        // gets its own forward/backward pair (layer contexts are reused by
        // the next forward).
        run = [&, a, b](bool with_grad) {
            real value = 0.0;
            const Tensor dr = model.net.forward(a, false);
            Tensor g_real = Tensor::zeros_like(dr);
            for (std::size_t i = 0; i < dr.size(); ++i) {
                const real p = std::min(1.0 - kProbClamp, std::max(kProbClamp, dr[i]));
                value += std::log(p) / static_cast<real>(dr.size());
                if (dr[i] > kProbClamp && dr[i] < 1.0 - kProbClamp)
                    g_real[i] = 1.0 / (p * static_cast<real>(dr.size()));
            }
            if (with_grad) model.net.backward(g_real, true);
            const Tensor df = model.net.forward(b, false);
            Tensor g_fake = Tensor::zeros_like(df);
            for (std::size_t i = 0; i < df.size(); ++i) {
                const real p = std::min(1.0 - kProbClamp, std::max(kProbClamp, df[i]));
                value += std::log(1.0 - p) / static_cast<real>(df.size());
                if (df[i] > kProbClamp && df[i] < 1.0 - kProbClamp)
                    g_fake[i] = -1.0 / ((1.0 - p) * static_cast<real>(df.size()));
            }
            if (with_grad) model.net.backward(g_fake, true);
            return value;
        };
    } else if (loss_name == "hinge_loss") {
        run = [&](bool with_grad) {
            Tensor raw = model.net.forward(input, false);
            raw.scale(opts.epsilon);
            const LossGrad lg = hinge_loss_grad(raw, opts.hinge_c);
            if (with_grad) {
                Tensor g = lg.grad;
                g.scale(opts.epsilon);
                model.net.backward(g, true);
            }
            return lg.value;
        };
    } else {
        throw std::invalid_argument("gradcheck: unknown loss_name '" + loss_name + "'");
    }

    // analytic gradients
    model.net.zero_grad();
    run(true);
    auto trainable = model.net.trainable_params();

    // sample parameter entries
    Rng rng(derive_seed(opts.seed, 0x67636bULL));
    std::vector<std::pair<std::size_t, std::size_t>> picks;
    std::size_t total = 0;
    for (Param* p : trainable) total += p->value.size();
    for (int s = 0; s < opts.param_samples; ++s) {
        std::size_t flat = static_cast<std::size_t>(rng.uniform_int(total));
        std::size_t pi = 0;
        while (flat >= trainable[pi]->value.size()) {
            flat -= trainable[pi]->value.size();
            ++pi;
        }
        picks.emplace_back(pi, flat);
    }

    auto central_diff = [&](real& v, real h) {
        const real keep = v;
        v = keep + h;
        const real plus = run(false);
        v = keep - h;
        const real minus = run(false);
        v = keep;
        return (plus - minus) / (2.0 * h);
    };

    real max_rel = 0.0;
    for (const auto& [pi, ei] : picks) {
        const real analytic = trainable[pi]->grad[ei];
        if (!std::isfinite(analytic)) throw std::runtime_error("gradcheck: non-finite analytic gradient");
        real& v = trainable[pi]->value[ei];
        real rel = 1e300;
        // If the +-h interval straddles a ReLU/maxpool kink the estimate is
        // garbage at any fixed h; shrinking the step moves the probe off the
        // kink. A wrong analytic gradient stays wrong at every step.
        for (real h = opts.step; h >= opts.step * 1e-3; h *= 0.1) {
            const real numeric = central_diff(v, h);
            const real denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
            rel = std::min(rel, std::abs(analytic - numeric) / denom);
            if (rel < 1e-5) break;
        }
        max_rel = std::max(max_rel, rel);
    }
    return max_rel;
}

} // namespace unlearn::nn
