#pragma once

#include <vector>

#include "unlearn/data.hpp"
#include "unlearn/tensor.hpp"

namespace unlearn::nn {

/// Stacks items[indices] into a {n,c,h,w} batch.
inline Tensor stack_images(const Dataset& ds, const std::vector<int>& indices) {
    const int n = static_cast<int>(indices.size());
    Tensor out({n, ds.channels(), ds.height(), ds.width()});
    const std::size_t per = out.size() / static_cast<std::size_t>(n ? n : 1);
    for (int i = 0; i < n; ++i) {
        const Tensor& px = ds.items[static_cast<std::size_t>(indices[static_cast<std::size_t>(i)])].pixels;
        std::copy(px.data(), px.data() + per, out.data() + static_cast<std::size_t>(i) * per);
    }
    return out;
}

inline std::vector<int> gather_labels(const Dataset& ds, const std::vector<int>& indices) {
    std::vector<int> out;
    out.reserve(indices.size());
    for (int i : indices) out.push_back(ds.items[static_cast<std::size_t>(i)].label);
    return out;
}

inline Tensor one_hot(const std::vector<int>& labels, int class_count) {
    Tensor out({static_cast<int>(labels.size()), class_count});
    for (std::size_t i = 0; i < labels.size(); ++i) {
        out.at2(static_cast<int>(i), labels[i]) = 1.0;
    }
    return out;
}

/// Splits [0,n) into consecutive index chunks of at most batch_size.
inline std::vector<std::vector<int>> batch_indices(int n, int batch_size) {
    std::vector<std::vector<int>> out;
    for (int start = 0; start < n; start += batch_size) {
        std::vector<int> b;
        for (int i = start; i < std::min(n, start + batch_size); ++i) b.push_back(i);
        out.push_back(std::move(b));
    }
    return out;
}

inline std::vector<std::vector<int>> batch_of_permutation(const std::vector<int>& perm, int batch_size) {
    std::vector<std::vector<int>> out;
    for (std::size_t start = 0; start < perm.size(); start += static_cast<std::size_t>(batch_size)) {
        std::vector<int> b;
        for (std::size_t i = start; i < std::min(perm.size(), start + static_cast<std::size_t>(batch_size)); ++i) {
            b.push_back(perm[i]);
        }
        out.push_back(std::move(b));
    }
    return out;
}

} // namespace unlearn::nn
