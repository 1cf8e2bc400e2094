#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "unlearn/rng.hpp"
#include "unlearn/tensor.hpp"

namespace unlearn {

/// Knobs for the augmentation pipeline. The pad/cutout defaults follow the
/// usual 32px-image recipe (pad 4, cutout 16); desk-scale configs shrink them
/// to match smaller images. fa_* magnitudes belong to the fixed-policy
/// pipeline.
struct AugParams {
    int pad = 4;
    int cutout_len = 16;
    real mixup_alpha = 1.0; // symmetric Beta concentration
    real fa_contrast = 1.4;
    real fa_brightness = 0.15;
    real fa_sharpness = 1.6;
    real fa_rotate_deg = 10.0;
};

inline const std::vector<std::string>& augmentation_names() {
    static const std::vector<std::string> names = {"none",   "rhf",   "rc",     "rhf_rc",
                                                   "cutout", "mixup", "cutmix", "fa_fixed"};
    return names;
}

namespace detail_aug {

inline void hflip_sample(Tensor& batch, int s) {
    const int c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w / 2; ++x)
                std::swap(batch.at4(s, ci, y, x), batch.at4(s, ci, y, w - 1 - x));
}

// zero-pad then crop back to the original size at offset (dy,dx) in [0, 2*pad]
inline void shift_crop_sample(Tensor& batch, int s, int pad, int dy, int dx) {
    const int c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
    Tensor src({c, h, w});
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) src.at3(ci, y, x) = batch.at4(s, ci, y, x);
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const int sy = y + dy - pad;
                const int sx = x + dx - pad;
                batch.at4(s, ci, y, x) =
                    (sy >= 0 && sy < h && sx >= 0 && sx < w) ? src.at3(ci, sy, sx) : 0.0;
            }
}

inline void cutout_sample(Tensor& batch, int s, int len, Rng& rng) {
    const int c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
    const int cy = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(h)));
    const int cx = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(w)));
    const int y0 = std::max(0, cy - len / 2), y1 = std::min(h, cy + (len + 1) / 2);
    const int x0 = std::max(0, cx - len / 2), x1 = std::min(w, cx + (len + 1) / 2);
    for (int ci = 0; ci < c; ++ci)
        for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x) batch.at4(s, ci, y, x) = 0.0;
}

inline void contrast_sample(Tensor& batch, int s, real factor) {
    const int c = batch.dim(1), hw = batch.dim(2) * batch.dim(3);
    for (int ci = 0; ci < c; ++ci) {
        real* p = &batch.at4(s, ci, 0, 0);
        real mean = 0.0;
        for (int i = 0; i < hw; ++i) mean += p[i];
        mean /= hw;
        for (int i = 0; i < hw; ++i)
            p[i] = std::min(1.0, std::max(0.0, mean + factor * (p[i] - mean)));
    }
}

inline void brightness_sample(Tensor& batch, int s, real delta) {
    const int c = batch.dim(1), hw = batch.dim(2) * batch.dim(3);
    for (int ci = 0; ci < c; ++ci) {
        real* p = &batch.at4(s, ci, 0, 0);
        for (int i = 0; i < hw; ++i) p[i] = std::min(1.0, std::max(0.0, p[i] + delta));
    }
}

// unsharp mask: x + (f-1)*(x - box3(x))
inline void sharpness_sample(Tensor& batch, int s, real factor) {
    const int c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
    Tensor blur({c, h, w});
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                real sum = 0.0;
                int cnt = 0;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int yy = y + dy, xx = x + dx;
                        if (yy >= 0 && yy < h && xx >= 0 && xx < w) {
                            sum += batch.at4(s, ci, yy, xx);
                            ++cnt;
                        }
                    }
                blur.at3(ci, y, x) = sum / cnt;
            }
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const real v = batch.at4(s, ci, y, x);
                batch.at4(s, ci, y, x) = std::min(
                    1.0, std::max(0.0, v + (factor - 1.0) * (v - blur.at3(ci, y, x))));
            }
}

inline void rotate_sample(Tensor& batch, int s, real degrees) {
    const int c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
    const real rad = degrees * 3.141592653589793238462643 / 180.0;
    const real cs = std::cos(rad), sn = std::sin(rad);
    const real cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
    Tensor src({c, h, w});
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) src.at3(ci, y, x) = batch.at4(s, ci, y, x);
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const real sy = cs * (y - cy) - sn * (x - cx) + cy;
                const real sx = sn * (y - cy) + cs * (x - cx) + cx;
                const int y0 = static_cast<int>(std::floor(sy));
                const int x0 = static_cast<int>(std::floor(sx));
                real v = 0.0;
                const real fy = sy - y0, fx = sx - x0;
                for (int dy = 0; dy <= 1; ++dy)
                    for (int dx = 0; dx <= 1; ++dx) {
                        const int yy = y0 + dy, xx = x0 + dx;
                        if (yy >= 0 && yy < h && xx >= 0 && xx < w) {
                            const real wgt = (dy ? fy : 1.0 - fy) * (dx ? fx : 1.0 - fx);
                            v += wgt * src.at3(ci, yy, xx);
                        }
                    }
                batch.at4(s, ci, y, x) = v;
            }
}

} // namespace detail_aug

/// Convex combination of the batch with its permuted self; lam = 1 keeps the
/// batch and labels unchanged.
inline void mixup_batch(Tensor& batch, Tensor& onehot, real lam, const std::vector<int>& perm) {
    const int n = batch.dim(0);
    const Tensor orig = batch;
    const Tensor orig_y = onehot;
    const std::size_t per = batch.size() / static_cast<std::size_t>(n);
    for (int s = 0; s < n; ++s) {
        const int o = perm[static_cast<std::size_t>(s)];
        real* dst = batch.data() + static_cast<std::size_t>(s) * per;
        const real* other = orig.data() + static_cast<std::size_t>(o) * per;
        for (std::size_t j = 0; j < per; ++j) dst[j] = lam * dst[j] + (1.0 - lam) * other[j];
        for (int j = 0; j < onehot.dim(1); ++j) {
            onehot.at2(s, j) = lam * orig_y.at2(s, j) + (1.0 - lam) * orig_y.at2(o, j);
        }
    }
}

/// Pastes one box from the permuted partner into each sample; labels mix by
/// the surviving-area fraction.
inline void cutmix_batch(Tensor& batch, Tensor& onehot, real lam, const std::vector<int>& perm,
                         int cy, int cx) {
    const int n = batch.dim(0), h = batch.dim(2), w = batch.dim(3);
    const real cut = std::sqrt(std::max(0.0, 1.0 - lam));
    const int rh = static_cast<int>(std::lround(cut * h));
    const int rw = static_cast<int>(std::lround(cut * w));
    const int y0 = std::max(0, cy - rh / 2), y1 = std::min(h, cy + (rh + 1) / 2);
    const int x0 = std::max(0, cx - rw / 2), x1 = std::min(w, cx + (rw + 1) / 2);
    const real lam_adj =
        1.0 - static_cast<real>(std::max(0, y1 - y0) * std::max(0, x1 - x0)) / static_cast<real>(h * w);
    const Tensor orig = batch;
    const Tensor orig_y = onehot;
    for (int s = 0; s < n; ++s) {
        const int o = perm[static_cast<std::size_t>(s)];
        for (int ci = 0; ci < batch.dim(1); ++ci)
            for (int y = y0; y < y1; ++y)
                for (int x = x0; x < x1; ++x) batch.at4(s, ci, y, x) = orig.at4(o, ci, y, x);
        for (int j = 0; j < onehot.dim(1); ++j) {
            onehot.at2(s, j) = lam_adj * orig_y.at2(s, j) + (1.0 - lam_adj) * orig_y.at2(o, j);
        }
    }
}

/// Applies the named augmentation in place to a {n,c,h,w} batch and its
/// one-hot label rows (labels change only under mixup/cutmix). Shapes are
/// preserved and pixels stay in [0,1].
inline void apply_augmentation(Tensor& batch, Tensor& onehot, const std::string& name,
                               const AugParams& params, Rng& rng) {
    const int n = batch.dim(0);
    if (name == "none") return;

    if (name == "rhf" || name == "rc" || name == "rhf_rc") {
        if (name != "rc") {
            for (int s = 0; s < n; ++s) {
                if (rng.uniform() < 0.5) detail_aug::hflip_sample(batch, s);
            }
        }
        if (name != "rhf") {
            for (int s = 0; s < n; ++s) {
                const int dy = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(2 * params.pad + 1)));
                const int dx = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(2 * params.pad + 1)));
                detail_aug::shift_crop_sample(batch, s, params.pad, dy, dx);
            }
        }
        return;
    }
    if (name == "cutout") {
        for (int s = 0; s < n; ++s) detail_aug::cutout_sample(batch, s, params.cutout_len, rng);
        return;
    }
    if (name == "mixup" || name == "cutmix") {
        const real lam = rng.beta_symmetric(params.mixup_alpha);
        const auto perm = rng.permutation(n);
        if (name == "mixup") {
            mixup_batch(batch, onehot, lam, perm);
        } else {
            const int cy = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(batch.dim(2))));
            const int cx = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(batch.dim(3))));
            cutmix_batch(batch, onehot, lam, perm, cy, cx);
        }
        return;
    }
    if (name == "fa_fixed") {
        // fixed pipeline: contrast, brightness, sharpness, rotation, cutout;
        // each applied with probability 1/2 per sample
        for (int s = 0; s < n; ++s) {
            if (rng.uniform() < 0.5) detail_aug::contrast_sample(batch, s, params.fa_contrast);
            if (rng.uniform() < 0.5) {
                const real sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
                detail_aug::brightness_sample(batch, s, sign * params.fa_brightness);
            }
            if (rng.uniform() < 0.5) detail_aug::sharpness_sample(batch, s, params.fa_sharpness);
            if (rng.uniform() < 0.5) {
                detail_aug::rotate_sample(batch, s, rng.uniform(-params.fa_rotate_deg, params.fa_rotate_deg));
            }
            if (rng.uniform() < 0.5) detail_aug::cutout_sample(batch, s, params.cutout_len, rng);
        }
        return;
    }
    throw std::invalid_argument("apply_augmentation: unknown augmentation '" + name + "'");
}

} // namespace unlearn
