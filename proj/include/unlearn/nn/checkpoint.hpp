#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "unlearn/nn/arch.hpp"
#include "unlearn/serial.hpp"

namespace unlearn::nn {

// Checkpoint layout (version 1, little-endian):
//   magic "ULNN" | u32 version
//   arch_id | i32 c,h,w | i32 class_count | f64 capacity_scale
//   u64 seed | i32 epoch | trainspec_digest
//   u32 entry_count | entries: name | u8 is_buffer | tensor
// Round-trips are bitwise lossless; parameters are stored as f64.
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[5] = "ULNN";

inline void save_checkpoint(ModelHandle& model, std::ostream& os) {
    BinaryWriter w(os);
    os.write(kCheckpointMagic, 4);
    w.u32(kCheckpointVersion);
    w.str(model.spec.arch_id);
    w.i32(model.spec.in_c);
    w.i32(model.spec.in_h);
    w.i32(model.spec.in_w);
    w.i32(model.spec.class_count);
    w.f64(model.spec.capacity_scale);
    w.u64(model.meta.seed);
    w.i32(model.meta.epoch);
    w.str(model.meta.trainspec_digest);
    auto params = model.net.params();
    w.u32(static_cast<std::uint32_t>(params.size()));
    for (Param* p : params) {
        w.str(p->name);
        w.u8(p->is_buffer ? 1 : 0);
        w.tensor(p->value);
    }
    if (!os) throw std::runtime_error("save_checkpoint: write failed");
}

inline void save_checkpoint(ModelHandle& model, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
    save_checkpoint(model, f);
}

inline ModelHandle load_checkpoint(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (is.gcount() != 4 || std::string(magic, 4) != std::string(kCheckpointMagic, 4)) {
        throw std::runtime_error("load_checkpoint: bad magic (not a checkpoint file)");
    }
    BinaryReader r(is);
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw std::runtime_error("load_checkpoint: unsupported format version " +
                                 std::to_string(version));
    }
    ArchSpec spec;
    spec.arch_id = r.str();
    spec.in_c = r.i32();
    spec.in_h = r.i32();
    spec.in_w = r.i32();
    spec.class_count = r.i32();
    spec.capacity_scale = r.f64();
    ModelMeta meta;
    meta.seed = r.u64();
    meta.epoch = r.i32();
    meta.trainspec_digest = r.str();
    meta.format_version = version;

    ModelHandle model = build_model(spec, meta.seed);
    model.meta = meta;
    auto params = model.net.params();
    const std::uint32_t count = r.u32();
    if (count != params.size()) {
        throw std::runtime_error("load_checkpoint: parameter count mismatch (file " +
                                 std::to_string(count) + ", arch " +
                                 std::to_string(params.size()) + ")");
    }
    for (Param* p : params) {
        const std::string name = r.str();
        const bool is_buffer = r.u8() != 0;
        Tensor value = r.tensor();
        if (name != p->name || is_buffer != p->is_buffer || !value.same_dims(p->value)) {
            throw std::runtime_error("load_checkpoint: entry mismatch at '" + name +
                                     "' (expected '" + p->name + "' " + p->value.shape_str() + ")");
        }
        if (!value.all_finite()) {
            throw std::runtime_error("load_checkpoint: non-finite parameter in '" + name + "'");
        }
        p->value = std::move(value);
    }
    return model;
}

inline ModelHandle load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
    return load_checkpoint(f);
}

/// In-memory serialize; used for cloning and digests.
inline std::string checkpoint_bytes(ModelHandle& model) {
    std::ostringstream os(std::ios::binary);
    save_checkpoint(model, os);
    return os.str();
}

inline std::string checkpoint_digest(ModelHandle& model) {
    return digest_bytes(checkpoint_bytes(model));
}

} // namespace unlearn::nn
