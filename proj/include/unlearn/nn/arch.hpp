#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "unlearn/nn/model.hpp"

namespace unlearn::nn {

/// Architecture identity plus the knobs every builder understands.
/// capacity_scale multiplies channel widths so the full backbones can run at
/// desk scale; 1.0 reproduces the standard widths.
struct ArchSpec {
    std::string arch_id;
    int in_c = 3, in_h = 32, in_w = 32;
    int class_count = 0; // classifiers only
    real capacity_scale = 1.0;

    void validate() const {
        if (in_c < 1 || in_h < 1 || in_w < 1)
            throw std::invalid_argument("ArchSpec: input_shape must be positive");
        if (capacity_scale <= 0.0)
            throw std::invalid_argument("ArchSpec: capacity_scale must be > 0");
    }
};

struct ModelMeta {
    int epoch = 0;
    std::uint64_t seed = 0;
    std::string trainspec_digest;
    std::uint32_t format_version = 1;
};

struct ModelHandle {
    ArchSpec spec;
    Model net;
    ModelMeta meta;
};

inline bool is_classifier_arch(const std::string& arch_id) {
    return arch_id == "smallcnn" || arch_id == "resnet18" || arch_id == "resnet50" ||
           arch_id == "vgg11" || arch_id == "densenet121";
}

namespace detail {

inline int scaled_width(int base, real scale, int floor_width = 4) {
    return std::max(floor_width, static_cast<int>(std::lround(base * scale)));
}

inline void add_input_norm(Sequential& seq, int channels) {
    // classifiers normalize (x - 0.5) / 0.5 internally; data-space code sees
    // raw [0,1] pixels so the epsilon budget stays exact in pixel units
    seq.emplace<InputNorm>(std::vector<real>(static_cast<std::size_t>(channels), 0.5),
                           std::vector<real>(static_cast<std::size_t>(channels), 0.5));
}

inline std::unique_ptr<Sequential> basic_block_main(int in_c, int out_c, int stride, Rng& rng) {
    auto seq = std::make_unique<Sequential>();
    seq->emplace<Conv2d>(in_c, out_c, 3, stride, 1, false, rng);
    seq->emplace<BatchNorm2d>(out_c);
    seq->emplace<ReLU>();
    seq->emplace<Conv2d>(out_c, out_c, 3, 1, 1, false, rng);
    seq->emplace<BatchNorm2d>(out_c);
    return seq;
}

inline std::unique_ptr<Sequential> projection_shortcut(int in_c, int out_c, int stride, Rng& rng) {
    auto seq = std::make_unique<Sequential>();
    seq->emplace<Conv2d>(in_c, out_c, 1, stride, 0, false, rng);
    seq->emplace<BatchNorm2d>(out_c);
    return seq;
}

inline void add_basic_block(Sequential& seq, int in_c, int out_c, int stride, Rng& rng) {
    auto main = basic_block_main(in_c, out_c, stride, rng);
    std::unique_ptr<Sequential> shortcut;
    if (stride != 1 || in_c != out_c) shortcut = projection_shortcut(in_c, out_c, stride, rng);
    seq.emplace<ResidualAdd>(std::move(main), std::move(shortcut));
}

inline void add_bottleneck_block(Sequential& seq, int in_c, int mid_c, int stride, Rng& rng) {
    const int out_c = 4 * mid_c;
    auto main = std::make_unique<Sequential>();
    main->emplace<Conv2d>(in_c, mid_c, 1, 1, 0, false, rng);
    main->emplace<BatchNorm2d>(mid_c);
    main->emplace<ReLU>();
    main->emplace<Conv2d>(mid_c, mid_c, 3, stride, 1, false, rng);
    main->emplace<BatchNorm2d>(mid_c);
    main->emplace<ReLU>();
    main->emplace<Conv2d>(mid_c, out_c, 1, 1, 0, false, rng);
    main->emplace<BatchNorm2d>(out_c);
    std::unique_ptr<Sequential> shortcut;
    if (stride != 1 || in_c != out_c) shortcut = projection_shortcut(in_c, out_c, stride, rng);
    seq.emplace<ResidualAdd>(std::move(main), std::move(shortcut));
}

inline void add_dense_layer(Sequential& seq, int in_c, int growth, Rng& rng) {
    auto branch = std::make_unique<Sequential>();
    branch->emplace<BatchNorm2d>(in_c);
    branch->emplace<ReLU>();
    branch->emplace<Conv2d>(in_c, 4 * growth, 1, 1, 0, false, rng);
    branch->emplace<BatchNorm2d>(4 * growth);
    branch->emplace<ReLU>();
    branch->emplace<Conv2d>(4 * growth, growth, 3, 1, 1, false, rng);
    seq.emplace<DenseConcat>(std::move(branch));
}

inline void build_smallcnn(Model& m, const ArchSpec& s, Rng& rng) {
    const int w1 = scaled_width(16, s.capacity_scale);
    const int w2 = scaled_width(32, s.capacity_scale);
    auto& seq = m.root();
    add_input_norm(seq, s.in_c);
    seq.emplace<Conv2d>(s.in_c, w1, 3, 1, 1, true, rng);
    seq.emplace<ReLU>();
    seq.emplace<MaxPool2d>(2, 2);
    seq.emplace<Conv2d>(w1, w2, 3, 1, 1, true, rng);
    seq.emplace<ReLU>();
    seq.emplace<MaxPool2d>(2, 2);
    seq.emplace<Flatten>();
    const int fh = ((s.in_h - 2) / 2 + 1 - 2) / 2 + 1;
    const int fw = ((s.in_w - 2) / 2 + 1 - 2) / 2 + 1;
    seq.emplace<Linear>(w2 * fh * fw, s.class_count, rng);
}

inline void build_resnet(Model& m, const ArchSpec& s, bool bottleneck, Rng& rng) {
    const std::vector<int> widths = {
        scaled_width(64, s.capacity_scale), scaled_width(128, s.capacity_scale),
        scaled_width(256, s.capacity_scale), scaled_width(512, s.capacity_scale)};
    const std::vector<int> depths = bottleneck ? std::vector<int>{3, 4, 6, 3}
                                               : std::vector<int>{2, 2, 2, 2};
    const std::vector<int> strides = {1, 2, 2, 2};
    auto& seq = m.root();
    add_input_norm(seq, s.in_c);
    const bool big_input = std::min(s.in_h, s.in_w) >= 112;
    if (big_input) {
        seq.emplace<Conv2d>(s.in_c, widths[0], 7, 2, 3, false, rng);
        seq.emplace<BatchNorm2d>(widths[0]);
        seq.emplace<ReLU>();
        seq.emplace<MaxPool2d>(3, 2);
    } else {
        if (std::min(s.in_h, s.in_w) < 16)
            throw std::invalid_argument("resnet: input must be at least 16x16");
        seq.emplace<Conv2d>(s.in_c, widths[0], 3, 1, 1, false, rng);
        seq.emplace<BatchNorm2d>(widths[0]);
        seq.emplace<ReLU>();
    }
    int cur = widths[0];
    for (int stage = 0; stage < 4; ++stage) {
        for (int b = 0; b < depths[static_cast<std::size_t>(stage)]; ++b) {
            const int stride = b == 0 ? strides[static_cast<std::size_t>(stage)] : 1;
            if (bottleneck) {
                add_bottleneck_block(seq, cur, widths[static_cast<std::size_t>(stage)], stride, rng);
                cur = 4 * widths[static_cast<std::size_t>(stage)];
            } else {
                add_basic_block(seq, cur, widths[static_cast<std::size_t>(stage)], stride, rng);
                cur = widths[static_cast<std::size_t>(stage)];
            }
        }
    }
    seq.emplace<GlobalAvgPool>();
    seq.emplace<Linear>(cur, s.class_count, rng);
}

inline void build_vgg11(Model& m, const ArchSpec& s, Rng& rng) {
    if (std::min(s.in_h, s.in_w) < 32)
        throw std::invalid_argument("vgg11: input must be at least 32x32");
    auto& seq = m.root();
    add_input_norm(seq, s.in_c);
    const std::vector<int> cfg = {64, -1, 128, -1, 256, 256, -1, 512, 512, -1, 512, 512, -1};
    int cur = s.in_c;
    for (int v : cfg) {
        if (v < 0) {
            seq.emplace<MaxPool2d>(2, 2);
        } else {
            const int w = scaled_width(v, s.capacity_scale);
            seq.emplace<Conv2d>(cur, w, 3, 1, 1, true, rng);
            seq.emplace<ReLU>();
            cur = w;
        }
    }
    seq.emplace<GlobalAvgPool>();
    seq.emplace<Linear>(cur, s.class_count, rng);
}

inline void build_densenet121(Model& m, const ArchSpec& s, Rng& rng) {
    if (std::min(s.in_h, s.in_w) < 16)
        throw std::invalid_argument("densenet121: input must be at least 16x16");
    const int growth = std::max(2, static_cast<int>(std::lround(32 * s.capacity_scale)));
    const std::vector<int> block_layers = {6, 12, 24, 16};
    auto& seq = m.root();
    add_input_norm(seq, s.in_c);
    int cur = 2 * growth;
    if (std::min(s.in_h, s.in_w) >= 112) {
        seq.emplace<Conv2d>(s.in_c, cur, 7, 2, 3, false, rng);
        seq.emplace<BatchNorm2d>(cur);
        seq.emplace<ReLU>();
        seq.emplace<MaxPool2d>(3, 2);
    } else {
        seq.emplace<Conv2d>(s.in_c, cur, 3, 1, 1, false, rng);
    }
    for (std::size_t b = 0; b < block_layers.size(); ++b) {
        for (int i = 0; i < block_layers[b]; ++i) {
            add_dense_layer(seq, cur, growth, rng);
            cur += growth;
        }
        if (b + 1 < block_layers.size()) {
            const int out = cur / 2;
            seq.emplace<BatchNorm2d>(cur);
            seq.emplace<ReLU>();
            seq.emplace<Conv2d>(cur, out, 1, 1, 0, false, rng);
            seq.emplace<AvgPool2d>(2, 2);
            cur = out;
        }
    }
    seq.emplace<BatchNorm2d>(cur);
    seq.emplace<ReLU>();
    seq.emplace<GlobalAvgPool>();
    seq.emplace<Linear>(cur, s.class_count, rng);
}

// conv/deconv stacks with batchnorm before each activation; without the
// norm the encoder's relus die wholesale under momentum-SGD and the
// generator degenerates to a constant (bias-only) output
inline void build_generator4x4(Model& m, const ArchSpec& s, Rng& rng) {
    if (s.in_h % 4 != 0 || s.in_w % 4 != 0 || s.in_h < 8 || s.in_w < 8)
        throw std::invalid_argument("generator4x4: input height/width must be multiples of 4, >= 8");
    const int w = scaled_width(16, s.capacity_scale);
    auto& seq = m.root();
    auto block = [&](int in_c, int out_c, int k, int stride, bool deconv) {
        if (deconv) seq.emplace<ConvTranspose2d>(in_c, out_c, k, stride, 1, false, rng);
        else seq.emplace<Conv2d>(in_c, out_c, k, stride, 1, false, rng);
        seq.emplace<BatchNorm2d>(out_c);
        seq.emplace<ReLU>();
    };
    block(s.in_c, w, 3, 1, false);
    block(w, 2 * w, 4, 2, false);
    block(2 * w, 4 * w, 4, 2, false);
    block(4 * w, 4 * w, 3, 1, false);
    block(4 * w, 4 * w, 3, 1, true);
    block(4 * w, 2 * w, 4, 2, true);
    block(2 * w, w, 4, 2, true);
    // down-scaled head init: a fresh generator emits near-zero noise and the
    // tanh starts in its high-gradient band
    ConvTranspose2d* head = seq.emplace<ConvTranspose2d>(w, s.in_c, 3, 1, 1, true, rng);
    std::vector<Param*> head_params;
    head->collect_params(head_params);
    for (Param* p : head_params) p->value.scale(0.1);
    seq.emplace<Tanh>();
}

inline void build_discriminator4(Model& m, const ArchSpec& s, Rng& rng) {
    if (s.in_h < 8 || s.in_w < 8)
        throw std::invalid_argument("discriminator4: input must be at least 8x8");
    const int w = scaled_width(16, s.capacity_scale);
    auto& seq = m.root();
    seq.emplace<Conv2d>(s.in_c, w, 4, 2, 1, true, rng);
    seq.emplace<LeakyReLU>(0.2);
    seq.emplace<Conv2d>(w, 2 * w, 4, 2, 1, false, rng);
    seq.emplace<BatchNorm2d>(2 * w);
    seq.emplace<LeakyReLU>(0.2);
    seq.emplace<Conv2d>(2 * w, 4 * w, 3, 1, 1, false, rng);
    seq.emplace<BatchNorm2d>(4 * w);
    seq.emplace<LeakyReLU>(0.2);
    seq.emplace<Conv2d>(4 * w, 4 * w, 3, 1, 1, false, rng);
    seq.emplace<BatchNorm2d>(4 * w);
    seq.emplace<LeakyReLU>(0.2);
    seq.emplace<GlobalAvgPool>();
    seq.emplace<Linear>(4 * w, 1, rng);
    seq.emplace<Sigmoid>();
}

inline void build_dncnn(Model& m, const ArchSpec& s, Rng& rng) {
    const int w = std::max(8, static_cast<int>(std::lround(64 * s.capacity_scale)));
    const int depth = 5;
    auto& seq = m.root();
    seq.emplace<Conv2d>(s.in_c, w, 3, 1, 1, true, rng);
    seq.emplace<ReLU>();
    for (int i = 0; i < depth - 2; ++i) {
        seq.emplace<Conv2d>(w, w, 3, 1, 1, false, rng);
        seq.emplace<BatchNorm2d>(w);
        seq.emplace<ReLU>();
    }
    seq.emplace<Conv2d>(w, s.in_c, 3, 1, 1, true, rng);
}

} // namespace detail

/// Deterministically initialized model for the named architecture. Same spec
/// and seed always produce identical parameters.
inline ModelHandle build_model(const ArchSpec& spec, std::uint64_t seed) {
    spec.validate();
    if (is_classifier_arch(spec.arch_id) && spec.class_count < 2) {
        throw std::invalid_argument("build_model: classifier needs class_count >= 2");
    }
    ModelHandle h;
    h.spec = spec;
    h.meta.seed = seed;
    Rng rng(derive_seed(seed, 0x6d6f64656cULL));
    if (spec.arch_id == "smallcnn") detail::build_smallcnn(h.net, spec, rng);
    else if (spec.arch_id == "resnet18") detail::build_resnet(h.net, spec, false, rng);
    else if (spec.arch_id == "resnet50") detail::build_resnet(h.net, spec, true, rng);
    else if (spec.arch_id == "vgg11") detail::build_vgg11(h.net, spec, rng);
    else if (spec.arch_id == "densenet121") detail::build_densenet121(h.net, spec, rng);
    else if (spec.arch_id == "generator4x4") detail::build_generator4x4(h.net, spec, rng);
    else if (spec.arch_id == "discriminator4") detail::build_discriminator4(h.net, spec, rng);
    else if (spec.arch_id == "dncnn_denoiser") detail::build_dncnn(h.net, spec, rng);
    else throw std::invalid_argument("build_model: unknown arch_id '" + spec.arch_id + "'");
    return h;
}

/// Fresh handle with the same architecture and a copy of all state.
inline ModelHandle clone_model(ModelHandle& h) {
    ModelHandle c = build_model(h.spec, h.meta.seed);
    c.net.copy_state_from(h.net);
    c.meta = h.meta;
    return c;
}

} // namespace unlearn::nn
