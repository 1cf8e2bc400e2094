#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "unlearn/rng.hpp"
#include "unlearn/tensor.hpp"

namespace unlearn {

enum class Provenance { natural, in_encrypted, out_encrypted, patched, class_noised, emn };

inline const char* to_string(Provenance p) {
    switch (p) {
        case Provenance::natural: return "natural";
        case Provenance::in_encrypted: return "in_encrypted";
        case Provenance::out_encrypted: return "out_encrypted";
        case Provenance::patched: return "patched";
        case Provenance::class_noised: return "class_noised";
        case Provenance::emn: return "emn";
    }
    return "?";
}

inline Provenance provenance_from_string(const std::string& s) {
    if (s == "natural") return Provenance::natural;
    if (s == "in_encrypted") return Provenance::in_encrypted;
    if (s == "out_encrypted") return Provenance::out_encrypted;
    if (s == "patched") return Provenance::patched;
    if (s == "class_noised") return Provenance::class_noised;
    if (s == "emn") return Provenance::emn;
    throw std::invalid_argument("unknown provenance: " + s);
}

/// One image with its class label. Pixels are {c,h,w} in [0,1].
struct LabeledImage {
    Tensor pixels;
    int label = 0;
};

struct Dataset {
    std::vector<LabeledImage> items;
    int class_count = 0;
    std::string name;
    Provenance provenance = Provenance::natural;

    int channels() const { return items.empty() ? 0 : items.front().pixels.dim(0); }
    int height() const { return items.empty() ? 0 : items.front().pixels.dim(1); }
    int width() const { return items.empty() ? 0 : items.front().pixels.dim(2); }

    void validate() const {
        for (std::size_t i = 0; i < items.size(); ++i) {
            const auto& it = items[i];
            if (it.label < 0 || it.label >= class_count) {
                throw std::invalid_argument("Dataset " + name + ": item " + std::to_string(i) +
                                            " label " + std::to_string(it.label) +
                                            " out of range for K=" + std::to_string(class_count));
            }
            if (it.pixels.ndim() != 3 || it.pixels.dim(0) != channels() ||
                it.pixels.dim(1) != height() || it.pixels.dim(2) != width()) {
                throw std::invalid_argument("Dataset " + name + ": item " + std::to_string(i) +
                                            " shape mismatch");
            }
            if (!it.pixels.all_finite() || it.pixels.min_value() < 0.0 || it.pixels.max_value() > 1.0) {
                throw std::invalid_argument("Dataset " + name + ": item " + std::to_string(i) +
                                            " has pixels outside [0,1]");
            }
        }
    }

    std::vector<int> labels() const {
        std::vector<int> out;
        out.reserve(items.size());
        for (const auto& it : items) out.push_back(it.label);
        return out;
    }

    std::vector<std::size_t> class_histogram() const {
        std::vector<std::size_t> hist(static_cast<std::size_t>(class_count), 0);
        for (const auto& it : items) hist[static_cast<std::size_t>(it.label)]++;
        return hist;
    }
};

namespace detail {
// Evenly spaced saturated colors, one per class.
inline std::array<real, 3> class_color(int k, int class_count) {
    const real hue = 6.0 * static_cast<real>(k) / static_cast<real>(class_count);
    const int sector = static_cast<int>(hue) % 6;
    const real f = hue - std::floor(hue);
    const real v = 0.9, p = 0.1, q = v - (v - p) * f, t = p + (v - p) * f;
    switch (sector) {
        case 0: return {v, t, p};
        case 1: return {q, v, p};
        case 2: return {p, v, t};
        case 3: return {p, q, v};
        case 4: return {t, p, v};
        default: return {v, p, q};
    }
}
} // namespace detail

/// Desk-scale stand-in for a real image dataset: each class is a colored
/// Gaussian blob at a class-specific position over a noisy gray background.
/// `separation` scales the blob contrast; anything >= 0.5 is easily
/// separable by a small CNN.
inline Dataset make_synthetic(int class_count, int per_class, int channels, int height, int width,
                              real separation, std::uint64_t seed) {
    if (class_count < 2) throw std::invalid_argument("make_synthetic: class_count must be >= 2");
    if (per_class < 1) throw std::invalid_argument("make_synthetic: per_class must be >= 1");
    if (separation <= 0.0) throw std::invalid_argument("make_synthetic: separation must be > 0");
    if (channels < 1 || height < 4 || width < 4)
        throw std::invalid_argument("make_synthetic: image size too small");

    Dataset ds;
    ds.class_count = class_count;
    ds.name = "synthetic";
    ds.provenance = Provenance::natural;
    ds.items.reserve(static_cast<std::size_t>(class_count) * per_class);

    Rng rng(seed);
    const real sigma = static_cast<real>(std::min(height, width)) / 7.0;
    const real two_pi = 6.283185307179586;

    for (int k = 0; k < class_count; ++k) {
        const auto color = detail::class_color(k, class_count);
        const real angle = two_pi * static_cast<real>(k) / static_cast<real>(class_count);
        const real cy0 = height / 2.0 + 0.2 * height * std::sin(angle);
        const real cx0 = width / 2.0 + 0.2 * width * std::cos(angle);
        for (int i = 0; i < per_class; ++i) {
            LabeledImage img;
            img.label = k;
            img.pixels = Tensor({channels, height, width});
            const real cy = cy0 + rng.uniform(-1.0, 1.0) * height / 5.0;
            const real cx = cx0 + rng.uniform(-1.0, 1.0) * width / 5.0;
            for (int c = 0; c < channels; ++c) {
                const real col = channels == 3 ? color[static_cast<std::size_t>(c)]
                                               : (0.15 + 0.7 * (k + 1.0) / class_count);
                for (int y = 0; y < height; ++y) {
                    for (int x = 0; x < width; ++x) {
                        const real d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
                        const real bump = std::exp(-d2 / (2.0 * sigma * sigma));
                        const real mixw = std::min(1.0, separation * bump);
                        real v = 0.5 + 0.15 * rng.normal();
                        v = (1.0 - mixw) * v + mixw * col;
                        img.pixels.at3(c, y, x) = std::min(1.0, std::max(0.0, v));
                    }
                }
            }
            ds.items.push_back(std::move(img));
        }
    }
    return ds;
}

/// Seeded stratified split: per class, floor(p * n_k) items go to the first
/// part (the generator-training / in-distribution pool), the rest to the
/// second. Original item order is preserved within each part.
inline std::pair<Dataset, Dataset> split_in_out(const Dataset& ds, real p, std::uint64_t seed) {
    if (p < 0.0 || p > 1.0) throw std::invalid_argument("split_in_out: p must be in [0,1]");
    std::vector<std::vector<int>> by_class(static_cast<std::size_t>(ds.class_count));
    for (int i = 0; i < static_cast<int>(ds.items.size()); ++i) {
        by_class[static_cast<std::size_t>(ds.items[static_cast<std::size_t>(i)].label)].push_back(i);
    }
    std::vector<char> in_first(ds.items.size(), 0);
    for (int k = 0; k < ds.class_count; ++k) {
        auto idx = by_class[static_cast<std::size_t>(k)];
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(k)));
        rng.shuffle(idx);
        const std::size_t take = static_cast<std::size_t>(
            std::floor(p * static_cast<real>(idx.size())));
        for (std::size_t i = 0; i < take; ++i) in_first[static_cast<std::size_t>(idx[i])] = 1;
    }
    Dataset a, b;
    a.class_count = b.class_count = ds.class_count;
    a.name = ds.name + "/in_pool";
    b.name = ds.name + "/out_pool";
    a.provenance = b.provenance = ds.provenance;
    for (std::size_t i = 0; i < ds.items.size(); ++i) {
        (in_first[i] ? a : b).items.push_back(ds.items[i]);
    }
    return {std::move(a), std::move(b)};
}

/// Per-class solid-color patch placed in the lower-right corner.
struct PatchTable {
    std::vector<std::array<int, 3>> entries; // one RGB triple (0..255) per class
    int patch_size = 32;
};

/// The 25-entry color list used by the toy class-wise patch experiment.
inline PatchTable default_patch_table(int patch_size = 32) {
    PatchTable t;
    t.patch_size = patch_size;
    t.entries = {
        {{220, 0, 0}},     {{230, 0, 0}},     {{240, 0, 0}},     {{250, 0, 0}},
        {{0, 220, 0}},     {{0, 230, 0}},     {{0, 240, 0}},     {{0, 250, 0}},
        {{0, 0, 220}},     {{0, 0, 230}},     {{0, 0, 240}},     {{0, 0, 250}},
        {{220, 220, 0}},   {{230, 230, 0}},   {{240, 240, 0}},   {{250, 250, 0}},
        {{220, 0, 220}},   {{230, 0, 230}},   {{240, 0, 240}},   {{250, 0, 250}},
        {{220, 0, 220}},   {{230, 0, 230}},   {{240, 0, 240}},   {{250, 0, 250}},
        {{250, 250, 250}},
    };
    return t;
}

/// Parses a patch table file: one line per class, `k r g b` with 0..255
/// components. Lines starting with '#' are ignored.
inline PatchTable load_patch_table(const std::string& path, int patch_size) {
    std::ifstream f(path);
    if (!f) throw std::invalid_argument("load_patch_table: cannot open " + path);
    std::vector<std::pair<int, std::array<int, 3>>> rows;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        int k, r, g, b;
        if (!(ss >> k >> r >> g >> b)) {
            throw std::invalid_argument("load_patch_table: bad line " + std::to_string(lineno) +
                                        " in " + path);
        }
        for (int v : {r, g, b}) {
            if (v < 0 || v > 255)
                throw std::invalid_argument("load_patch_table: component out of [0,255] at line " +
                                            std::to_string(lineno));
        }
        rows.emplace_back(k, std::array<int, 3>{r, g, b});
    }
    PatchTable t;
    t.patch_size = patch_size;
    t.entries.resize(rows.size());
    std::vector<char> seen(rows.size(), 0);
    for (const auto& [k, rgb] : rows) {
        if (k < 0 || k >= static_cast<int>(rows.size()) || seen[static_cast<std::size_t>(k)]) {
            throw std::invalid_argument("load_patch_table: class indices must be 0..K-1, each once");
        }
        seen[static_cast<std::size_t>(k)] = 1;
        t.entries[static_cast<std::size_t>(k)] = rgb;
    }
    return t;
}

/// Overwrites the lower-right patch_size x patch_size corner of every image
/// with its class color. patch_size 0 is the identity transform.
inline Dataset apply_class_patch(const Dataset& ds, const PatchTable& table) {
    if (static_cast<int>(table.entries.size()) < ds.class_count) {
        throw std::invalid_argument("apply_class_patch: table has " +
                                    std::to_string(table.entries.size()) + " entries, dataset has " +
                                    std::to_string(ds.class_count) + " classes");
    }
    if (table.patch_size < 0 || table.patch_size > std::min(ds.height(), ds.width())) {
        throw std::invalid_argument("apply_class_patch: patch_size " +
                                    std::to_string(table.patch_size) + " exceeds image size");
    }
    Dataset out = ds;
    out.provenance = Provenance::patched;
    out.name = ds.name + "/patched";
    const int ps = table.patch_size;
    const int h = ds.height(), w = ds.width(), c = ds.channels();
    for (auto& item : out.items) {
        const auto& rgb = table.entries[static_cast<std::size_t>(item.label)];
        for (int ch = 0; ch < c; ++ch) {
            const real v = static_cast<real>(rgb[static_cast<std::size_t>(ch % 3)]) / 255.0;
            for (int y = h - ps; y < h; ++y) {
                for (int x = w - ps; x < w; ++x) {
                    item.pixels.at3(ch, y, x) = v;
                }
            }
        }
    }
    return out;
}

struct PerturbationBudget {
    real epsilon = 8.0 / 255.0; // hard per-pixel max-norm bound
    real c = 0.0;               // soft L2 hinge bound; 0 means "derive default"

    void validate() const {
        if (!(epsilon > 0.0) || epsilon > 1.0)
            throw std::invalid_argument("PerturbationBudget: epsilon must be in (0,1]");
        if (!(c > 0.0)) throw std::invalid_argument("PerturbationBudget: c must be > 0");
    }
};

/// Default soft bound: half the largest L2 norm an epsilon-box noise can have.
inline real default_hinge_bound(real epsilon, int channels, int height, int width) {
    return 0.5 * epsilon * std::sqrt(static_cast<real>(channels) * height * width);
}

inline PerturbationBudget resolve_budget(real epsilon, real c, int channels, int height, int width) {
    PerturbationBudget b;
    b.epsilon = epsilon;
    b.c = c > 0.0 ? c : default_hinge_bound(epsilon, channels, height, width);
    b.validate();
    return b;
}

/// One fixed noise tensor per class, values uniform in [-eps, eps], added to
/// every image of that class and then clamped back to [0,1].
inline Dataset apply_class_noise(const Dataset& ds, real epsilon, std::uint64_t seed) {
    if (epsilon < 0.0) throw std::invalid_argument("apply_class_noise: epsilon must be >= 0");
    Dataset out = ds;
    out.provenance = Provenance::class_noised;
    out.name = ds.name + "/class_noised";
    if (epsilon == 0.0 || ds.items.empty()) return out;

    std::vector<Tensor> class_noise(static_cast<std::size_t>(ds.class_count));
    for (int k = 0; k < ds.class_count; ++k) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(k)));
        Tensor n({ds.channels(), ds.height(), ds.width()});
        for (std::size_t i = 0; i < n.size(); ++i) n[i] = rng.uniform(-epsilon, epsilon);
        class_noise[static_cast<std::size_t>(k)] = std::move(n);
    }
    for (auto& item : out.items) {
        item.pixels.add_scaled(class_noise[static_cast<std::size_t>(item.label)], 1.0);
        item.pixels.clamp(0.0, 1.0);
    }
    return out;
}

} // namespace unlearn
