#pragma once

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "unlearn/rng.hpp"
#include "unlearn/tensor.hpp"

namespace unlearn::nn {

using Mat = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<Mat>;
using ConstMatMap = Eigen::Map<const Mat>;

/// A named parameter or buffer owned by a layer. Buffers (BatchNorm running
/// stats, fixed normalization constants) are serialized with checkpoints but
/// never touched by the optimizer.
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;
    bool is_buffer = false;

    Param(std::string n, Tensor v, bool buffer = false)
        : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros_like(value)), is_buffer(buffer) {}
};

class Layer {
public:
    virtual ~Layer() = default;

    /// Runs the layer and caches whatever backward() needs. Layers are not
    /// re-entrant: one forward/backward pair at a time per instance.
    virtual Tensor forward(const Tensor& x, bool train) = 0;

    /// Returns grad w.r.t. the layer input. When accumulate_param_grads is
    /// false the parameter gradients are skipped (used when backpropagating
    /// through a frozen model only to reach its input).
    virtual Tensor backward(const Tensor& dy, bool accumulate_param_grads) = 0;

    virtual void collect_params(std::vector<Param*>& out) {}
    virtual std::string kind() const = 0;
};

namespace detail {

inline int conv_out_extent(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

// cols has shape {C*k*k, N*Ho*Wo}; column index = n*Ho*Wo + oy*Wo + ox.
inline void im2col(const Tensor& x, int k, int stride, int pad, int ho, int wo, real* cols) {
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t col_w = static_cast<std::size_t>(n) * ho * wo;
    for (int ci = 0; ci < c; ++ci) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                real* row = cols + (static_cast<std::size_t>(ci) * k * k + ky * k + kx) * col_w;
                for (int ni = 0; ni < n; ++ni) {
                    for (int oy = 0; oy < ho; ++oy) {
                        const int iy = oy * stride + ky - pad;
                        real* dst = row + (static_cast<std::size_t>(ni) * ho + oy) * wo;
                        if (iy < 0 || iy >= h) {
                            std::fill(dst, dst + wo, 0.0);
                            continue;
                        }
                        for (int ox = 0; ox < wo; ++ox) {
                            const int ix = ox * stride + kx - pad;
                            dst[ox] = (ix < 0 || ix >= w) ? 0.0 : x.at4(ni, ci, iy, ix);
                        }
                    }
                }
            }
        }
    }
}

// Scatter-add inverse of im2col; x must be pre-zeroed by the caller when a
// fresh gradient is wanted.
inline void col2im(const real* cols, int k, int stride, int pad, int ho, int wo, Tensor& x) {
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t col_w = static_cast<std::size_t>(n) * ho * wo;
    for (int ci = 0; ci < c; ++ci) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const real* row = cols + (static_cast<std::size_t>(ci) * k * k + ky * k + kx) * col_w;
                for (int ni = 0; ni < n; ++ni) {
                    for (int oy = 0; oy < ho; ++oy) {
                        const int iy = oy * stride + ky - pad;
                        if (iy < 0 || iy >= h) continue;
                        const real* src = row + (static_cast<std::size_t>(ni) * ho + oy) * wo;
                        for (int ox = 0; ox < wo; ++ox) {
                            const int ix = ox * stride + kx - pad;
                            if (ix >= 0 && ix < w) x.at4(ni, ci, iy, ix) += src[ox];
                        }
                    }
                }
            }
        }
    }
}

// he-uniform
inline void init_fan_in(Tensor& t, int fan_in, Rng& rng) {
    const real limit = std::sqrt(6.0 / static_cast<real>(fan_in));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-limit, limit);
}

// {N,C,H,W} batch tensor in row-major == {N*C*H*W}; view sample-major matrix
// {C, N*H*W} requires a transpose-gather, so convs keep explicit copies.

} // namespace detail

class Conv2d final : public Layer {
public:
    Conv2d(int in_c, int out_c, int k, int stride, int pad, bool bias, Rng& rng)
        : in_c_(in_c), out_c_(out_c), k_(k), stride_(stride), pad_(pad), has_bias_(bias),
          weight_("weight", Tensor({out_c, in_c, k, k})),
          bias_("bias", Tensor({out_c})) {
        detail::init_fan_in(weight_.value, in_c * k * k, rng);
    }

    Tensor forward(const Tensor& x, bool) override {
        if (x.ndim() != 4 || x.dim(1) != in_c_) {
            throw std::invalid_argument("Conv2d: expected {n," + std::to_string(in_c_) +
                                        ",h,w}, got " + x.shape_str());
        }
        const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
        ho_ = detail::conv_out_extent(h, k_, stride_, pad_);
        wo_ = detail::conv_out_extent(w, k_, stride_, pad_);
        if (ho_ < 1 || wo_ < 1) throw std::invalid_argument("Conv2d: input smaller than kernel");
        input_ = x;

        const std::size_t col_rows = static_cast<std::size_t>(in_c_) * k_ * k_;
        const std::size_t col_cols = static_cast<std::size_t>(n) * ho_ * wo_;
        cols_buf_.assign(col_rows * col_cols, 0.0);
        detail::im2col(x, k_, stride_, pad_, ho_, wo_, cols_buf_.data());

        Tensor y({n, out_c_, ho_, wo_});
        ConstMatMap wmat(weight_.value.data(), out_c_, static_cast<Eigen::Index>(col_rows));
        ConstMatMap cmat(cols_buf_.data(), static_cast<Eigen::Index>(col_rows),
                         static_cast<Eigen::Index>(col_cols));
        Mat out = wmat * cmat; // {out_c, n*ho*wo}
        const int hw = ho_ * wo_;
        for (int ni = 0; ni < n; ++ni) {
            for (int co = 0; co < out_c_; ++co) {
                const real b = has_bias_ ? bias_.value[static_cast<std::size_t>(co)] : 0.0;
                const real* src = out.data() + static_cast<std::size_t>(co) * n * hw +
                                  static_cast<std::size_t>(ni) * hw;
                real* dst = &y.at4(ni, co, 0, 0);
                for (int i = 0; i < hw; ++i) dst[i] = src[i] + b;
            }
        }
        return y;
    }

    Tensor backward(const Tensor& dy, bool accumulate_param_grads) override {
        const int n = input_.dim(0);
        const int hw = ho_ * wo_;
        const std::size_t col_rows = static_cast<std::size_t>(in_c_) * k_ * k_;
        const std::size_t col_cols = static_cast<std::size_t>(n) * ho_ * wo_;

        // regroup dy {n,co,ho,wo} -> {co, n*ho*wo}
        Mat dy_mat(out_c_, static_cast<Eigen::Index>(col_cols));
        for (int ni = 0; ni < n; ++ni) {
            for (int co = 0; co < out_c_; ++co) {
                const real* src = &dy.at4(ni, co, 0, 0);
                real* dst = dy_mat.data() + static_cast<std::size_t>(co) * col_cols +
                            static_cast<std::size_t>(ni) * hw;
                std::copy(src, src + hw, dst);
            }
        }

        ConstMatMap cmat(cols_buf_.data(), static_cast<Eigen::Index>(col_rows),
                         static_cast<Eigen::Index>(col_cols));
        if (accumulate_param_grads) {
            MatMap dw(weight_.grad.data(), out_c_, static_cast<Eigen::Index>(col_rows));
            dw.noalias() += dy_mat * cmat.transpose();
            if (has_bias_) {
                for (int co = 0; co < out_c_; ++co) {
                    bias_.grad[static_cast<std::size_t>(co)] += dy_mat.row(co).sum();
                }
            }
        }

        ConstMatMap wmat(weight_.value.data(), out_c_, static_cast<Eigen::Index>(col_rows));
        Mat dcols = wmat.transpose() * dy_mat;
        Tensor dx({n, in_c_, input_.dim(2), input_.dim(3)});
        detail::col2im(dcols.data(), k_, stride_, pad_, ho_, wo_, dx);
        return dx;
    }

    void collect_params(std::vector<Param*>& out) override {
        out.push_back(&weight_);
        if (has_bias_) out.push_back(&bias_);
    }
    std::string kind() const override { return "conv2d"; }

private:
    int in_c_, out_c_, k_, stride_, pad_;
    bool has_bias_;
    Param weight_, bias_;
    Tensor input_;
    std::vector<real> cols_buf_;
    int ho_ = 0, wo_ = 0;
};

class ConvTranspose2d final : public Layer {
public:
    ConvTranspose2d(int in_c, int out_c, int k, int stride, int pad, bool bias, Rng& rng)
        : in_c_(in_c), out_c_(out_c), k_(k), stride_(stride), pad_(pad), has_bias_(bias),
          weight_("weight", Tensor({in_c, out_c, k, k})),
          bias_("bias", Tensor({out_c})) {
        detail::init_fan_in(weight_.value, in_c * k * k, rng);
    }

    Tensor forward(const Tensor& x, bool) override {
        if (x.ndim() != 4 || x.dim(1) != in_c_) {
            throw std::invalid_argument("ConvTranspose2d: expected {n," + std::to_string(in_c_) +
                                        ",h,w}, got " + x.shape_str());
        }
        const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
        const int ho = (h - 1) * stride_ - 2 * pad_ + k_;
        const int wo = (w - 1) * stride_ - 2 * pad_ + k_;
        if (ho < 1 || wo < 1) throw std::invalid_argument("ConvTranspose2d: degenerate output");
        input_ = x;

        // x as {in_c, n*h*w}
        const std::size_t xcols = static_cast<std::size_t>(n) * h * w;
        Mat x_mat(in_c_, static_cast<Eigen::Index>(xcols));
        const int hw = h * w;
        for (int ni = 0; ni < n; ++ni) {
            for (int ci = 0; ci < in_c_; ++ci) {
                const real* src = &x.at4(ni, ci, 0, 0);
                std::copy(src, src + hw,
                          x_mat.data() + static_cast<std::size_t>(ci) * xcols +
                              static_cast<std::size_t>(ni) * hw);
            }
        }

        const std::size_t col_rows = static_cast<std::size_t>(out_c_) * k_ * k_;
        ConstMatMap wmat(weight_.value.data(), in_c_, static_cast<Eigen::Index>(col_rows));
        Mat cols = wmat.transpose() * x_mat; // {out_c*k*k, n*h*w}

        Tensor y({n, out_c_, ho, wo});
        detail::col2im(cols.data(), k_, stride_, pad_, h, w, y);
        if (has_bias_) {
            for (int ni = 0; ni < n; ++ni) {
                for (int co = 0; co < out_c_; ++co) {
                    real* dst = &y.at4(ni, co, 0, 0);
                    const real b = bias_.value[static_cast<std::size_t>(co)];
                    for (int i = 0; i < ho * wo; ++i) dst[i] += b;
                }
            }
        }
        return y;
    }

    Tensor backward(const Tensor& dy, bool accumulate_param_grads) override {
        const int n = input_.dim(0), h = input_.dim(2), w = input_.dim(3);
        const std::size_t xcols = static_cast<std::size_t>(n) * h * w;
        const std::size_t col_rows = static_cast<std::size_t>(out_c_) * k_ * k_;

        std::vector<real> dcols(col_rows * xcols, 0.0);
        detail::im2col(dy, k_, stride_, pad_, h, w, dcols.data());
        ConstMatMap dcols_mat(dcols.data(), static_cast<Eigen::Index>(col_rows),
                              static_cast<Eigen::Index>(xcols));

        if (accumulate_param_grads) {
            // rebuild x_mat (cheap relative to storing it)
            Mat x_mat(in_c_, static_cast<Eigen::Index>(xcols));
            const int hw = h * w;
            for (int ni = 0; ni < n; ++ni) {
                for (int ci = 0; ci < in_c_; ++ci) {
                    const real* src = &input_.at4(ni, ci, 0, 0);
                    std::copy(src, src + hw,
                              x_mat.data() + static_cast<std::size_t>(ci) * xcols +
                                  static_cast<std::size_t>(ni) * hw);
                }
            }
            MatMap dw(weight_.grad.data(), in_c_, static_cast<Eigen::Index>(col_rows));
            dw.noalias() += x_mat * dcols_mat.transpose();
            if (has_bias_) {
                const int out_hw = dy.dim(2) * dy.dim(3);
                for (int ni = 0; ni < n; ++ni) {
                    for (int co = 0; co < out_c_; ++co) {
                        const real* src = &dy.at4(ni, co, 0, 0);
                        real s = 0.0;
                        for (int i = 0; i < out_hw; ++i) s += src[i];
                        bias_.grad[static_cast<std::size_t>(co)] += s;
                    }
                }
            }
        }

        ConstMatMap wmat(weight_.value.data(), in_c_, static_cast<Eigen::Index>(col_rows));
        Mat dx_mat = wmat * dcols_mat; // {in_c, n*h*w}
        Tensor dx({n, in_c_, h, w});
        const int hw = h * w;
        for (int ni = 0; ni < n; ++ni) {
            for (int ci = 0; ci < in_c_; ++ci) {
                const real* src = dx_mat.data() + static_cast<std::size_t>(ci) * xcols +
                                  static_cast<std::size_t>(ni) * hw;
                std::copy(src, src + hw, &dx.at4(ni, ci, 0, 0));
            }
        }
        return dx;
    }

    void collect_params(std::vector<Param*>& out) override {
        out.push_back(&weight_);
        if (has_bias_) out.push_back(&bias_);
    }
    std::string kind() const override { return "conv_transpose2d"; }

private:
    int in_c_, out_c_, k_, stride_, pad_;
    bool has_bias_;
    Param weight_, bias_;
    Tensor input_;
};

class Linear final : public Layer {
public:
    Linear(int in_f, int out_f, Rng& rng)
        : in_f_(in_f), out_f_(out_f),
          weight_("weight", Tensor({out_f, in_f})),
          bias_("bias", Tensor({out_f})) {
        detail::init_fan_in(weight_.value, in_f, rng);
    }

    Tensor forward(const Tensor& x, bool) override {
        if (x.ndim() != 2 || x.dim(1) != in_f_) {
            throw std::invalid_argument("Linear: expected {n," + std::to_string(in_f_) + "}, got " +
                                        x.shape_str());
        }
        input_ = x;
        const int n = x.dim(0);
        Tensor y({n, out_f_});
        ConstMatMap xm(x.data(), n, in_f_);
        ConstMatMap wm(weight_.value.data(), out_f_, in_f_);
        MatMap ym(y.data(), n, out_f_);
        ym.noalias() = xm * wm.transpose();
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < out_f_; ++j) y.at2(i, j) += bias_.value[static_cast<std::size_t>(j)];
        }
        return y;
    }

    Tensor backward(const Tensor& dy, bool accumulate_param_grads) override {
        const int n = input_.dim(0);
        ConstMatMap dym(dy.data(), n, out_f_);
        ConstMatMap xm(input_.data(), n, in_f_);
        if (accumulate_param_grads) {
            MatMap dwm(weight_.grad.data(), out_f_, in_f_);
            dwm.noalias() += dym.transpose() * xm;
            for (int j = 0; j < out_f_; ++j) {
                bias_.grad[static_cast<std::size_t>(j)] += dym.col(j).sum();
            }
        }
        Tensor dx({n, in_f_});
        ConstMatMap wm(weight_.value.data(), out_f_, in_f_);
        MatMap dxm(dx.data(), n, in_f_);
        dxm.noalias() = dym * wm;
        return dx;
    }

    void collect_params(std::vector<Param*>& out) override {
        out.push_back(&weight_);
        out.push_back(&bias_);
    }
    std::string kind() const override { return "linear"; }

    const Tensor& weight() const { return weight_.value; }
    const Tensor& bias() const { return bias_.value; }
    int in_features() const { return in_f_; }
    int out_features() const { return out_f_; }

private:
    int in_f_, out_f_;
    Param weight_, bias_;
    Tensor input_;
};

class ReLU final : public Layer {
public:
    Tensor forward(const Tensor& x, bool) override {
        mask_.assign(x.size(), 0);
        Tensor y = x;
        for (std::size_t i = 0; i < y.size(); ++i) {
            if (y[i] > 0.0) mask_[i] = 1;
            else y[i] = 0.0;
        }
        return y;
    }
    Tensor backward(const Tensor& dy, bool) override {
        Tensor dx = dy;
        for (std::size_t i = 0; i < dx.size(); ++i) {
            if (!mask_[i]) dx[i] = 0.0;
        }
        return dx;
    }
    std::string kind() const override { return "relu"; }

private:
    std::vector<char> mask_;
};

class LeakyReLU final : public Layer {
public:
    explicit LeakyReLU(real slope = 0.2) : slope_(slope) {}
    Tensor forward(const Tensor& x, bool) override {
        mask_.assign(x.size(), 0);
        Tensor y = x;
        for (std::size_t i = 0; i < y.size(); ++i) {
            if (y[i] > 0.0) mask_[i] = 1;
            else y[i] *= slope_;
        }
        return y;
    }
    Tensor backward(const Tensor& dy, bool) override {
        Tensor dx = dy;
        for (std::size_t i = 0; i < dx.size(); ++i) {
            if (!mask_[i]) dx[i] *= slope_;
        }
        return dx;
    }
    std::string kind() const override { return "leaky_relu"; }

private:
    real slope_;
    std::vector<char> mask_;
};

class Tanh final : public Layer {
public:
    Tensor forward(const Tensor& x, bool) override {
        Tensor y = x;
        for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::tanh(y[i]);
        output_ = y;
        return y;
    }
    Tensor backward(const Tensor& dy, bool) override {
        Tensor dx = dy;
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= 1.0 - output_[i] * output_[i];
        return dx;
    }
    std::string kind() const override { return "tanh"; }

private:
    Tensor output_;
};

class Sigmoid final : public Layer {
public:
    Tensor forward(const Tensor& x, bool) override {
        Tensor y = x;
        for (std::size_t i = 0; i < y.size(); ++i) y[i] = 1.0 / (1.0 + std::exp(-y[i]));
        output_ = y;
        return y;
    }
    Tensor backward(const Tensor& dy, bool) override {
        Tensor dx = dy;
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= output_[i] * (1.0 - output_[i]);
        return dx;
    }
    std::string kind() const override { return "sigmoid"; }

private:
    Tensor output_;
};

class MaxPool2d final : public Layer {
public:
    MaxPool2d(int k, int stride) : k_(k), stride_(stride) {}

    Tensor forward(const Tensor& x, bool) override {
        const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
        const int ho = (h - k_) / stride_ + 1;
        const int wo = (w - k_) / stride_ + 1;
        if (ho < 1 || wo < 1) throw std::invalid_argument("MaxPool2d: input smaller than window");
        in_dims_ = x.dims();
        Tensor y({n, c, ho, wo});
        argmax_.assign(y.size(), 0);
        std::size_t oi = 0;
        for (int ni = 0; ni < n; ++ni) {
            for (int ci = 0; ci < c; ++ci) {
                for (int oy = 0; oy < ho; ++oy) {
                    for (int ox = 0; ox < wo; ++ox, ++oi) {
                        real best = -1e300;
                        std::size_t best_idx = 0;
                        for (int ky = 0; ky < k_; ++ky) {
                            for (int kx = 0; kx < k_; ++kx) {
                                const int iy = oy * stride_ + ky;
                                const int ix = ox * stride_ + kx;
                                const std::size_t idx =
                                    ((static_cast<std::size_t>(ni) * c + ci) * h + iy) * w + ix;
                                if (x[idx] > best) {
                                    best = x[idx];
                                    best_idx = idx;
                                }
                            }
                        }
                        y[oi] = best;
                        argmax_[oi] = best_idx;
                    }
                }
            }
        }
        return y;
    }

    Tensor backward(const Tensor& dy, bool) override {
        Tensor dx(in_dims_);
        for (std::size_t i = 0; i < dy.size(); ++i) dx[argmax_[i]] += dy[i];
        return dx;
    }
    std::string kind() const override { return "maxpool2d"; }

private:
    int k_, stride_;
    std::vector<int> in_dims_;
    std::vector<std::size_t> argmax_;
};

class AvgPool2d final : public Layer {
public:
    AvgPool2d(int k, int stride) : k_(k), stride_(stride) {}

    Tensor forward(const Tensor& x, bool) override {
        const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
        const int ho = (h - k_) / stride_ + 1;
        const int wo = (w - k_) / stride_ + 1;
        if (ho < 1 || wo < 1) throw std::invalid_argument("AvgPool2d: input smaller than window");
        in_dims_ = x.dims();
        Tensor y({n, c, ho, wo});
        const real inv = 1.0 / (k_ * k_);
        for (int ni = 0; ni < n; ++ni)
            for (int ci = 0; ci < c; ++ci)
                for (int oy = 0; oy < ho; ++oy)
                    for (int ox = 0; ox < wo; ++ox) {
                        real s = 0.0;
                        for (int ky = 0; ky < k_; ++ky)
                            for (int kx = 0; kx < k_; ++kx)
                                s += x.at4(ni, ci, oy * stride_ + ky, ox * stride_ + kx);
                        y.at4(ni, ci, oy, ox) = s * inv;
                    }
        return y;
    }

    Tensor backward(const Tensor& dy, bool) override {
        Tensor dx(in_dims_);
        const int n = dy.dim(0), c = dy.dim(1), ho = dy.dim(2), wo = dy.dim(3);
        const real inv = 1.0 / (k_ * k_);
        for (int ni = 0; ni < n; ++ni)
            for (int ci = 0; ci < c; ++ci)
                for (int oy = 0; oy < ho; ++oy)
                    for (int ox = 0; ox < wo; ++ox) {
                        const real g = dy.at4(ni, ci, oy, ox) * inv;
                        for (int ky = 0; ky < k_; ++ky)
                            for (int kx = 0; kx < k_; ++kx)
                                dx.at4(ni, ci, oy * stride_ + ky, ox * stride_ + kx) += g;
                    }
        return dx;
    }
    std::string kind() const override { return "avgpool2d"; }

private:
    int k_, stride_;
    std::vector<int> in_dims_;
};

/// Mean over the spatial extent; {n,c,h,w} -> {n,c}.
class GlobalAvgPool final : public Layer {
public:
    Tensor forward(const Tensor& x, bool) override {
        in_dims_ = x.dims();
        const int n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
        Tensor y({n, c});
        for (int ni = 0; ni < n; ++ni)
            for (int ci = 0; ci < c; ++ci) {
                const real* src = &x.at4(ni, ci, 0, 0);
                real s = 0.0;
                for (int i = 0; i < hw; ++i) s += src[i];
                y.at2(ni, ci) = s / hw;
            }
        return y;
    }
    Tensor backward(const Tensor& dy, bool) override {
        Tensor dx(in_dims_);
        const int n = in_dims_[0], c = in_dims_[1], hw = in_dims_[2] * in_dims_[3];
        const real inv = 1.0 / hw;
        for (int ni = 0; ni < n; ++ni)
            for (int ci = 0; ci < c; ++ci) {
                const real g = dy.at2(ni, ci) * inv;
                real* dst = &dx.at4(ni, ci, 0, 0);
                for (int i = 0; i < hw; ++i) dst[i] = g;
            }
        return dx;
    }
    std::string kind() const override { return "global_avgpool"; }

private:
    std::vector<int> in_dims_;
};

class Flatten final : public Layer {
public:
    Tensor forward(const Tensor& x, bool) override {
        in_dims_ = x.dims();
        const int n = x.dim(0);
        return x.reshaped({n, static_cast<int>(x.size()) / n});
    }
    Tensor backward(const Tensor& dy, bool) override { return dy.reshaped(in_dims_); }
    std::string kind() const override { return "flatten"; }

private:
    std::vector<int> in_dims_;
};

/// Fixed per-channel (x - mean) / std, folded into classifier models so
/// every data-space operation sees raw [0,1] pixels.
class InputNorm final : public Layer {
public:
    InputNorm(std::vector<real> mean, std::vector<real> stdev)
        : mean_("mean", Tensor({static_cast<int>(mean.size())}), true),
          std_("std", Tensor({static_cast<int>(stdev.size())}), true) {
        for (std::size_t i = 0; i < mean.size(); ++i) mean_.value[i] = mean[i];
        for (std::size_t i = 0; i < stdev.size(); ++i) {
            if (stdev[i] <= 0.0) throw std::invalid_argument("InputNorm: std must be > 0");
            std_.value[i] = stdev[i];
        }
    }

    Tensor forward(const Tensor& x, bool) override {
        const int n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
        if (c != static_cast<int>(mean_.value.size()))
            throw std::invalid_argument("InputNorm: channel mismatch");
        Tensor y = x;
        for (int ni = 0; ni < n; ++ni)
            for (int ci = 0; ci < c; ++ci) {
                real* dst = &y.at4(ni, ci, 0, 0);
                const real m = mean_.value[static_cast<std::size_t>(ci)];
                const real inv = 1.0 / std_.value[static_cast<std::size_t>(ci)];
                for (int i = 0; i < hw; ++i) dst[i] = (dst[i] - m) * inv;
            }
        return y;
    }

    Tensor backward(const Tensor& dy, bool) override {
        const int n = dy.dim(0), c = dy.dim(1), hw = dy.dim(2) * dy.dim(3);
        Tensor dx = dy;
        for (int ni = 0; ni < n; ++ni)
            for (int ci = 0; ci < c; ++ci) {
                real* dst = &dx.at4(ni, ci, 0, 0);
                const real inv = 1.0 / std_.value[static_cast<std::size_t>(ci)];
                for (int i = 0; i < hw; ++i) dst[i] *= inv;
            }
        return dx;
    }

    void collect_params(std::vector<Param*>& out) override {
        out.push_back(&mean_);
        out.push_back(&std_);
    }
    std::string kind() const override { return "input_norm"; }

private:
    Param mean_, std_;
};

class BatchNorm2d final : public Layer {
public:
    explicit BatchNorm2d(int channels, real eps = 1e-5, real momentum = 0.1)
        : c_(channels), eps_(eps), momentum_(momentum),
          gamma_("gamma", Tensor({channels}, 1.0)),
          beta_("beta", Tensor({channels})),
          running_mean_("running_mean", Tensor({channels}), true),
          running_var_("running_var", Tensor({channels}, 1.0), true) {}

    Tensor forward(const Tensor& x, bool train) override {
        const int n = x.dim(0), hw = x.dim(2) * x.dim(3);
        if (x.dim(1) != c_) throw std::invalid_argument("BatchNorm2d: channel mismatch");
        const real m = static_cast<real>(n) * hw;
        train_mode_ = train;
        input_ = x;
        mean_.assign(static_cast<std::size_t>(c_), 0.0);
        var_.assign(static_cast<std::size_t>(c_), 0.0);

        Tensor y = x;
        for (int ci = 0; ci < c_; ++ci) {
            real mu, v;
            if (train) {
                real s = 0.0;
                for (int ni = 0; ni < n; ++ni) {
                    const real* src = &x.at4(ni, ci, 0, 0);
                    for (int i = 0; i < hw; ++i) s += src[i];
                }
                mu = s / m;
                real sv = 0.0;
                for (int ni = 0; ni < n; ++ni) {
                    const real* src = &x.at4(ni, ci, 0, 0);
                    for (int i = 0; i < hw; ++i) sv += (src[i] - mu) * (src[i] - mu);
                }
                v = sv / m;
                mean_[static_cast<std::size_t>(ci)] = mu;
                var_[static_cast<std::size_t>(ci)] = v;
                const real unbiased = m > 1.0 ? sv / (m - 1.0) : v;
                running_mean_.value[static_cast<std::size_t>(ci)] =
                    (1.0 - momentum_) * running_mean_.value[static_cast<std::size_t>(ci)] +
                    momentum_ * mu;
                running_var_.value[static_cast<std::size_t>(ci)] =
                    (1.0 - momentum_) * running_var_.value[static_cast<std::size_t>(ci)] +
                    momentum_ * unbiased;
            } else {
                mu = running_mean_.value[static_cast<std::size_t>(ci)];
                v = running_var_.value[static_cast<std::size_t>(ci)];
                mean_[static_cast<std::size_t>(ci)] = mu;
                var_[static_cast<std::size_t>(ci)] = v;
            }
            const real inv = 1.0 / std::sqrt(v + eps_);
            const real g = gamma_.value[static_cast<std::size_t>(ci)];
            const real b = beta_.value[static_cast<std::size_t>(ci)];
            for (int ni = 0; ni < n; ++ni) {
                real* dst = &y.at4(ni, ci, 0, 0);
                for (int i = 0; i < hw; ++i) dst[i] = g * (dst[i] - mu) * inv + b;
            }
        }
        return y;
    }

    Tensor backward(const Tensor& dy, bool accumulate_param_grads) override {
        const int n = input_.dim(0), hw = input_.dim(2) * input_.dim(3);
        const real m = static_cast<real>(n) * hw;
        Tensor dx({n, c_, input_.dim(2), input_.dim(3)});
        for (int ci = 0; ci < c_; ++ci) {
            const real mu = mean_[static_cast<std::size_t>(ci)];
            const real v = var_[static_cast<std::size_t>(ci)];
            const real inv = 1.0 / std::sqrt(v + eps_);
            const real g = gamma_.value[static_cast<std::size_t>(ci)];

            real sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (int ni = 0; ni < n; ++ni) {
                const real* dsrc = &dy.at4(ni, ci, 0, 0);
                const real* xsrc = &input_.at4(ni, ci, 0, 0);
                for (int i = 0; i < hw; ++i) {
                    sum_dy += dsrc[i];
                    sum_dy_xhat += dsrc[i] * (xsrc[i] - mu) * inv;
                }
            }
            if (accumulate_param_grads) {
                beta_.grad[static_cast<std::size_t>(ci)] += sum_dy;
                gamma_.grad[static_cast<std::size_t>(ci)] += sum_dy_xhat;
            }
            if (train_mode_) {
                for (int ni = 0; ni < n; ++ni) {
                    const real* dsrc = &dy.at4(ni, ci, 0, 0);
                    const real* xsrc = &input_.at4(ni, ci, 0, 0);
                    real* dst = &dx.at4(ni, ci, 0, 0);
                    for (int i = 0; i < hw; ++i) {
                        const real xhat = (xsrc[i] - mu) * inv;
                        dst[i] = g * inv * (dsrc[i] - sum_dy / m - xhat * sum_dy_xhat / m);
                    }
                }
            } else {
                for (int ni = 0; ni < n; ++ni) {
                    const real* dsrc = &dy.at4(ni, ci, 0, 0);
                    real* dst = &dx.at4(ni, ci, 0, 0);
                    for (int i = 0; i < hw; ++i) dst[i] = dsrc[i] * g * inv;
                }
            }
        }
        return dx;
    }

    void collect_params(std::vector<Param*>& out) override {
        out.push_back(&gamma_);
        out.push_back(&beta_);
        out.push_back(&running_mean_);
        out.push_back(&running_var_);
    }
    std::string kind() const override { return "batchnorm2d"; }

private:
    int c_;
    real eps_, momentum_;
    Param gamma_, beta_, running_mean_, running_var_;
    Tensor input_;
    std::vector<real> mean_, var_;
    bool train_mode_ = false;
};

/// Ordered layer container; also a Layer so residual/dense blocks can nest it.
class Sequential : public Layer {
public:
    Sequential() = default;

    void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }
    template <typename L, typename... Args>
    L* emplace(Args&&... args) {
        auto p = std::make_unique<L>(std::forward<Args>(args)...);
        L* raw = p.get();
        layers_.push_back(std::move(p));
        return raw;
    }

    std::size_t size() const { return layers_.size(); }
    Layer* layer(std::size_t i) { return layers_[i].get(); }
    const Layer* layer(std::size_t i) const { return layers_[i].get(); }

    Tensor forward(const Tensor& x, bool train) override {
        Tensor h = x;
        for (auto& l : layers_) h = l->forward(h, train);
        return h;
    }

    /// Runs only layers [0, n); used to tap intermediate features.
    Tensor forward_upto(const Tensor& x, std::size_t n, bool train) {
        Tensor h = x;
        for (std::size_t i = 0; i < n && i < layers_.size(); ++i) h = layers_[i]->forward(h, train);
        return h;
    }

    Tensor backward(const Tensor& dy, bool accumulate_param_grads) override {
        Tensor g = dy;
        for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
            g = (*it)->backward(g, accumulate_param_grads);
        }
        return g;
    }

    void collect_params(std::vector<Param*>& out) override {
        for (auto& l : layers_) l->collect_params(out);
    }
    std::string kind() const override { return "sequential"; }

private:
    std::vector<std::unique_ptr<Layer>> layers_;
};

/// y = relu(main(x) + shortcut(x)); shortcut may be empty (identity).
class ResidualAdd final : public Layer {
public:
    ResidualAdd(std::unique_ptr<Sequential> main, std::unique_ptr<Sequential> shortcut)
        : main_(std::move(main)), shortcut_(std::move(shortcut)) {}

    Tensor forward(const Tensor& x, bool train) override {
        Tensor a = main_->forward(x, train);
        Tensor b = shortcut_ ? shortcut_->forward(x, train) : x;
        Tensor y = a + b;
        mask_.assign(y.size(), 0);
        for (std::size_t i = 0; i < y.size(); ++i) {
            if (y[i] > 0.0) mask_[i] = 1;
            else y[i] = 0.0;
        }
        return y;
    }

    Tensor backward(const Tensor& dy, bool accumulate_param_grads) override {
        Tensor g = dy;
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (!mask_[i]) g[i] = 0.0;
        }
        Tensor dx = main_->backward(g, accumulate_param_grads);
        if (shortcut_) {
            dx.add_scaled(shortcut_->backward(g, accumulate_param_grads), 1.0);
        } else {
            dx.add_scaled(g, 1.0);
        }
        return dx;
    }

    void collect_params(std::vector<Param*>& out) override {
        main_->collect_params(out);
        if (shortcut_) shortcut_->collect_params(out);
    }
    std::string kind() const override { return "residual_add"; }

private:
    std::unique_ptr<Sequential> main_;
    std::unique_ptr<Sequential> shortcut_;
    std::vector<char> mask_;
};

/// y = concat(x, f(x)) along channels; the dense connectivity primitive.
class DenseConcat final : public Layer {
public:
    explicit DenseConcat(std::unique_ptr<Sequential> branch) : branch_(std::move(branch)) {}

    Tensor forward(const Tensor& x, bool train) override {
        Tensor f = branch_->forward(x, train);
        const int n = x.dim(0), c0 = x.dim(1), c1 = f.dim(1), h = x.dim(2), w = x.dim(3);
        in_c_ = c0;
        Tensor y({n, c0 + c1, h, w});
        const int hw = h * w;
        for (int ni = 0; ni < n; ++ni) {
            for (int ci = 0; ci < c0; ++ci)
                std::copy(&x.at4(ni, ci, 0, 0), &x.at4(ni, ci, 0, 0) + hw, &y.at4(ni, ci, 0, 0));
            for (int ci = 0; ci < c1; ++ci)
                std::copy(&f.at4(ni, ci, 0, 0), &f.at4(ni, ci, 0, 0) + hw,
                          &y.at4(ni, c0 + ci, 0, 0));
        }
        return y;
    }

    Tensor backward(const Tensor& dy, bool accumulate_param_grads) override {
        const int n = dy.dim(0), c = dy.dim(1), h = dy.dim(2), w = dy.dim(3);
        const int c1 = c - in_c_;
        const int hw = h * w;
        Tensor dpass({n, in_c_, h, w});
        Tensor dbranch({n, c1, h, w});
        for (int ni = 0; ni < n; ++ni) {
            for (int ci = 0; ci < in_c_; ++ci)
                std::copy(&dy.at4(ni, ci, 0, 0), &dy.at4(ni, ci, 0, 0) + hw,
                          &dpass.at4(ni, ci, 0, 0));
            for (int ci = 0; ci < c1; ++ci)
                std::copy(&dy.at4(ni, in_c_ + ci, 0, 0), &dy.at4(ni, in_c_ + ci, 0, 0) + hw,
                          &dbranch.at4(ni, ci, 0, 0));
        }
        Tensor dx = branch_->backward(dbranch, accumulate_param_grads);
        dx.add_scaled(dpass, 1.0);
        return dx;
    }

    void collect_params(std::vector<Param*>& out) override { branch_->collect_params(out); }
    std::string kind() const override { return "dense_concat"; }

private:
    std::unique_ptr<Sequential> branch_;
    int in_c_ = 0;
};

} // namespace unlearn::nn
