#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "unlearn/nn/layers.hpp"

namespace unlearn::nn {

/// A model is a top-level Sequential plus parameter bookkeeping.
class Model {
public:
    Model() : root_(std::make_unique<Sequential>()) {}

    Sequential& root() { return *root_; }
    const Sequential& root() const { return *root_; }

    Tensor forward(const Tensor& x, bool train = false) { return root_->forward(x, train); }
    Tensor backward(const Tensor& dy, bool accumulate_param_grads = true) {
        return root_->backward(dy, accumulate_param_grads);
    }

    std::vector<Param*> params() {
        std::vector<Param*> out;
        root_->collect_params(out);
        return out;
    }

    std::vector<Param*> trainable_params() {
        std::vector<Param*> out;
        for (Param* p : params()) {
            if (!p->is_buffer) out.push_back(p);
        }
        return out;
    }

    void zero_grad() {
        for (Param* p : params()) p->grad.fill(0.0);
    }

    std::size_t param_count() {
        std::size_t n = 0;
        for (Param* p : trainable_params()) n += p->value.size();
        return n;
    }

    bool all_params_finite() {
        for (Param* p : params()) {
            if (!p->value.all_finite()) return false;
        }
        return true;
    }

    /// Copies parameters and buffers from another model built from the same
    /// spec. Shapes are checked entry by entry.
    void copy_state_from(Model& other) {
        auto dst = params();
        auto src = other.params();
        if (dst.size() != src.size()) throw std::runtime_error("copy_state_from: topology mismatch");
        for (std::size_t i = 0; i < dst.size(); ++i) {
            if (!dst[i]->value.same_dims(src[i]->value)) {
                throw std::runtime_error("copy_state_from: shape mismatch at " + dst[i]->name);
            }
            dst[i]->value = src[i]->value;
        }
    }

    bool state_equal(Model& other) {
        auto a = params();
        auto b = other.params();
        if (a.size() != b.size()) return false;
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (!(a[i]->value == b[i]->value)) return false;
        }
        return true;
    }

    /// Index of the last Linear layer in the top-level sequence, or -1.
    int last_linear_index() const {
        for (int i = static_cast<int>(root_->size()) - 1; i >= 0; --i) {
            if (dynamic_cast<const Linear*>(root_->layer(static_cast<std::size_t>(i)))) return i;
        }
        return -1;
    }

    Linear* linear_at(int idx) {
        return dynamic_cast<Linear*>(root_->layer(static_cast<std::size_t>(idx)));
    }

private:
    std::unique_ptr<Sequential> root_;
};

} // namespace unlearn::nn
