#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace unlearn {

// All numeric work is done in double. Desk-scale models are small enough
// that the 2x memory cost is irrelevant, and finite-difference gradient
// checks need the extra mantissa bits.
using real = double;

/// Dense row-major tensor with a small dynamic rank. Batched image data is
/// {n, c, h, w}, feature matrices are {n, d}, single images are {c, h, w}.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> dims, real fill = 0.0) : dims_(std::move(dims)) {
        std::size_t n = 1;
        for (int d : dims_) {
            if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
            n *= static_cast<std::size_t>(d);
        }
        data_.assign(n, fill);
    }

    static Tensor zeros_like(const Tensor& other) { return Tensor(other.dims_); }

    bool empty() const { return data_.empty(); }
    std::size_t size() const { return data_.size(); }
    int ndim() const { return static_cast<int>(dims_.size()); }
    int dim(int i) const { return dims_.at(static_cast<std::size_t>(i)); }
    const std::vector<int>& dims() const { return dims_; }

    real* data() { return data_.data(); }
    const real* data() const { return data_.data(); }

    real& operator[](std::size_t i) { return data_[i]; }
    real operator[](std::size_t i) const { return data_[i]; }

    /// Element access for {n,c,h,w} tensors.
    real& at4(int n, int c, int y, int x) {
        return data_[((static_cast<std::size_t>(n) * dims_[1] + c) * dims_[2] + y) * dims_[3] + x];
    }
    const real& at4(int n, int c, int y, int x) const {
        return data_[((static_cast<std::size_t>(n) * dims_[1] + c) * dims_[2] + y) * dims_[3] + x];
    }
    /// Element access for {c,h,w} tensors.
    real& at3(int c, int y, int x) {
        return data_[(static_cast<std::size_t>(c) * dims_[1] + y) * dims_[2] + x];
    }
    const real& at3(int c, int y, int x) const {
        return data_[(static_cast<std::size_t>(c) * dims_[1] + y) * dims_[2] + x];
    }
    /// Element access for {n,d} tensors.
    real& at2(int r, int c) { return data_[static_cast<std::size_t>(r) * dims_[1] + c]; }
    const real& at2(int r, int c) const { return data_[static_cast<std::size_t>(r) * dims_[1] + c]; }

    Tensor reshaped(std::vector<int> dims) const {
        Tensor t = *this;
        std::size_t n = 1;
        for (int d : dims) n *= static_cast<std::size_t>(d);
        if (n != size()) throw std::invalid_argument("Tensor::reshaped: size mismatch");
        t.dims_ = std::move(dims);
        return t;
    }

    void fill(real v) { std::fill(data_.begin(), data_.end(), v); }

    void add_scaled(const Tensor& other, real scale) {
        check_same_size(other, "add_scaled");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += scale * other.data_[i];
    }

    void scale(real s) {
        for (real& v : data_) v *= s;
    }

    void clamp(real lo, real hi) {
        for (real& v : data_) v = std::min(hi, std::max(lo, v));
    }

    real min_value() const {
        return data_.empty() ? 0.0 : *std::min_element(data_.begin(), data_.end());
    }
    real max_value() const {
        return data_.empty() ? 0.0 : *std::max_element(data_.begin(), data_.end());
    }
    real max_abs() const {
        real m = 0.0;
        for (real v : data_) m = std::max(m, std::abs(v));
        return m;
    }
    real l2_norm() const {
        real s = 0.0;
        for (real v : data_) s += v * v;
        return std::sqrt(s);
    }
    real sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

    bool all_finite() const {
        for (real v : data_) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    bool same_dims(const Tensor& other) const { return dims_ == other.dims_; }

    bool operator==(const Tensor& other) const {
        return dims_ == other.dims_ && data_ == other.data_;
    }

    std::string shape_str() const {
        std::string s = "(";
        for (std::size_t i = 0; i < dims_.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(dims_[i]);
        }
        return s + ")";
    }

private:
    void check_same_size(const Tensor& other, const char* op) const {
        if (other.size() != size()) {
            throw std::invalid_argument(std::string("Tensor::") + op + ": size mismatch " +
                                        shape_str() + " vs " + other.shape_str());
        }
    }

    std::vector<int> dims_;
    std::vector<real> data_;
};

inline Tensor operator-(const Tensor& a, const Tensor& b) {
    if (!a.same_dims(b)) throw std::invalid_argument("Tensor operator-: shape mismatch");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
    return out;
}

inline Tensor operator+(const Tensor& a, const Tensor& b) {
    if (!a.same_dims(b)) throw std::invalid_argument("Tensor operator+: shape mismatch");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
}

inline real max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!a.same_dims(b)) throw std::invalid_argument("max_abs_diff: shape mismatch");
    real m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

} // namespace unlearn
