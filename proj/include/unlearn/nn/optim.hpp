#pragma once

#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "unlearn/nn/model.hpp"
#include "unlearn/serial.hpp"

namespace unlearn::nn {

/// Full hyperparameter record for one training run. The defaults are the
/// shared training recipe used throughout: SGD with momentum 0.9, lr 0.025,
/// cosine schedule without restart.
struct TrainSpec {
    std::string optimizer = "sgd";
    real momentum = 0.9;
    real lr = 0.025;
    std::string lr_schedule = "cosine_no_restart"; // or "constant"
    int epochs = 0;
    int batch_size = 32;
    std::uint64_t seed = 0;
    std::map<std::string, real> extra; // method-specific weights (e.g. alpha)

    void validate() const {
        if (optimizer != "sgd") throw std::invalid_argument("TrainSpec: unknown optimizer " + optimizer);
        if (!(lr > 0.0)) throw std::invalid_argument("TrainSpec: lr must be > 0");
        if (epochs < 0) throw std::invalid_argument("TrainSpec: epochs must be >= 0");
        if (batch_size < 1) throw std::invalid_argument("TrainSpec: batch_size must be >= 1");
        if (lr_schedule != "cosine_no_restart" && lr_schedule != "constant")
            throw std::invalid_argument("TrainSpec: unknown lr_schedule " + lr_schedule);
        if (momentum < 0.0 || momentum >= 1.0)
            throw std::invalid_argument("TrainSpec: momentum must be in [0,1)");
    }

    std::string digest() const {
        std::ostringstream os;
        os << optimizer << '|' << momentum << '|' << lr << '|' << lr_schedule << '|' << epochs
           << '|' << batch_size << '|' << seed;
        for (const auto& [k, v] : extra) os << '|' << k << '=' << v;
        return digest_bytes(os.str());
    }
};

/// Learning rate for a 0-based epoch index under the spec's schedule.
inline real scheduled_lr(const TrainSpec& spec, int epoch) {
    if (spec.lr_schedule == "constant") return spec.lr;
    if (spec.epochs <= 1) return spec.lr;
    const real t = static_cast<real>(epoch) / static_cast<real>(spec.epochs);
    return spec.lr * 0.5 * (1.0 + std::cos(3.141592653589793238462643 * t));
}

/// Plain SGD with classical momentum: v <- mu*v + g, p <- p - lr*v.
class SgdMomentum {
public:
    explicit SgdMomentum(real momentum = 0.9) : momentum_(momentum) {}

    void step(const std::vector<Param*>& params, real lr) {
        if (velocity_.size() != params.size()) {
            velocity_.clear();
            for (Param* p : params) velocity_.push_back(Tensor::zeros_like(p->value));
        }
        for (std::size_t i = 0; i < params.size(); ++i) {
            Tensor& v = velocity_[i];
            Tensor& p = params[i]->value;
            const Tensor& g = params[i]->grad;
            for (std::size_t j = 0; j < p.size(); ++j) {
                v[j] = momentum_ * v[j] + g[j];
                p[j] -= lr * v[j];
            }
        }
    }

private:
    real momentum_;
    std::vector<Tensor> velocity_;
};

} // namespace unlearn::nn
