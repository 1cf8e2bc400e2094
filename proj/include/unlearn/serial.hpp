#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "unlearn/tensor.hpp"

namespace unlearn {

/// Little binary writer/reader pair for checkpoint files. Fixed-width
/// little-endian fields; strings and tensors are length-prefixed.
class BinaryWriter {
public:
    explicit BinaryWriter(std::ostream& os) : os_(os) {}

    void u8(std::uint8_t v) { raw(&v, 1); }
    void u32(std::uint32_t v) { raw(&v, 4); }
    void u64(std::uint64_t v) { raw(&v, 8); }
    void i32(std::int32_t v) { raw(&v, 4); }
    void f64(double v) { raw(&v, 8); }

    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        raw(s.data(), s.size());
    }

    void tensor(const Tensor& t) {
        u32(static_cast<std::uint32_t>(t.ndim()));
        for (int i = 0; i < t.ndim(); ++i) i32(t.dim(i));
        raw(t.data(), t.size() * sizeof(real));
    }

private:
    void raw(const void* p, std::size_t n) {
        os_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    }
    std::ostream& os_;
};

class BinaryReader {
public:
    explicit BinaryReader(std::istream& is) : is_(is) {}

    std::uint8_t u8() { std::uint8_t v; raw(&v, 1); return v; }
    std::uint32_t u32() { std::uint32_t v; raw(&v, 4); return v; }
    std::uint64_t u64() { std::uint64_t v; raw(&v, 8); return v; }
    std::int32_t i32() { std::int32_t v; raw(&v, 4); return v; }
    double f64() { double v; raw(&v, 8); return v; }

    std::string str() {
        const std::uint32_t n = u32();
        if (n > (1u << 20)) throw std::runtime_error("corrupt stream: oversized string");
        std::string s(n, '\0');
        raw(s.data(), n);
        return s;
    }

    Tensor tensor() {
        const std::uint32_t nd = u32();
        if (nd > 8) throw std::runtime_error("corrupt stream: tensor rank");
        std::vector<int> dims(nd);
        for (auto& d : dims) {
            d = i32();
            if (d < 0 || d > (1 << 28)) throw std::runtime_error("corrupt stream: tensor dim");
        }
        Tensor t(dims);
        raw(t.data(), t.size() * sizeof(real));
        return t;
    }

private:
    void raw(void* p, std::size_t n) {
        is_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(is_.gcount()) != n) {
            throw std::runtime_error("corrupt stream: truncated read");
        }
    }
    std::istream& is_;
};

/// FNV-1a 64-bit over a byte buffer; used for config/checkpoint digests in
/// run manifests.
inline std::uint64_t fnv1a64(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

inline std::string digest_bytes(const std::string& bytes) {
    return hex64(fnv1a64(bytes.data(), bytes.size()));
}

inline std::string digest_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("digest_file: cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return digest_bytes(ss.str());
}

} // namespace unlearn
