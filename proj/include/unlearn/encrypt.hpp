#pragma once

#include <stdexcept>
#include <utility>

#include "unlearn/data.hpp"
#include "unlearn/nn/arch.hpp"
#include "unlearn/nn/batch.hpp"

namespace unlearn {

struct EncryptedImage {
    Tensor x_enc;
    Tensor noise;
};

/// One inference pass: noise = epsilon * generator_raw(x). The generator's
/// bounded output makes the max-norm budget exact by construction; the pixel
/// clamp afterwards only ever shrinks the applied perturbation.
inline EncryptedImage encrypt_image(nn::ModelHandle& generator, const Tensor& x,
                                    const PerturbationBudget& budget) {
    budget.validate();
    if (x.ndim() != 3 || x.dim(0) != generator.spec.in_c || x.dim(1) != generator.spec.in_h ||
        x.dim(2) != generator.spec.in_w) {
        throw std::invalid_argument("encrypt_image: image shape " + x.shape_str() +
                                    " does not match generator input (" +
                                    std::to_string(generator.spec.in_c) + "," +
                                    std::to_string(generator.spec.in_h) + "," +
                                    std::to_string(generator.spec.in_w) + ")");
    }
    const Tensor batch = x.reshaped({1, x.dim(0), x.dim(1), x.dim(2)});
    Tensor noise = generator.net.forward(batch, false);
    noise.scale(budget.epsilon);
    Tensor x_enc = batch + noise;
    x_enc.clamp(0.0, 1.0);
    return {x_enc.reshaped({x.dim(0), x.dim(1), x.dim(2)}),
            noise.reshaped({x.dim(0), x.dim(1), x.dim(2)})};
}

/// Encrypts every item, preserving labels and order. provenance must be
/// in_encrypted (the generator's own training pool) or out_encrypted (data
/// the generator never saw).
inline Dataset encrypt_dataset(nn::ModelHandle& generator, const Dataset& ds,
                               const PerturbationBudget& budget, Provenance provenance,
                               int batch_size = 64) {
    budget.validate();
    if (provenance != Provenance::in_encrypted && provenance != Provenance::out_encrypted) {
        throw std::invalid_argument("encrypt_dataset: provenance must be in_ or out_encrypted");
    }
    if (!ds.items.empty() &&
        (ds.channels() != generator.spec.in_c || ds.height() != generator.spec.in_h ||
         ds.width() != generator.spec.in_w)) {
        throw std::invalid_argument("encrypt_dataset: dataset shape (" +
                                    std::to_string(ds.channels()) + "," +
                                    std::to_string(ds.height()) + "," + std::to_string(ds.width()) +
                                    ") does not match generator input (" +
                                    std::to_string(generator.spec.in_c) + "," +
                                    std::to_string(generator.spec.in_h) + "," +
                                    std::to_string(generator.spec.in_w) + ")");
    }
    Dataset out;
    out.class_count = ds.class_count;
    out.name = ds.name + (provenance == Provenance::in_encrypted ? "/in_enc" : "/out_enc");
    out.provenance = provenance;
    out.items.reserve(ds.items.size());

    for (const auto& batch : nn::batch_indices(static_cast<int>(ds.items.size()), batch_size)) {
        const Tensor x = nn::stack_images(ds, batch);
        Tensor noise = generator.net.forward(x, false);
        noise.scale(budget.epsilon);
        Tensor x_enc = x + noise;
        x_enc.clamp(0.0, 1.0);
        const std::size_t per = x_enc.size() / static_cast<std::size_t>(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) {
            LabeledImage item;
            item.label = ds.items[static_cast<std::size_t>(batch[i])].label;
            item.pixels = Tensor({ds.channels(), ds.height(), ds.width()});
            std::copy(x_enc.data() + i * per, x_enc.data() + (i + 1) * per, item.pixels.data());
            out.items.push_back(std::move(item));
        }
    }
    return out;
}

} // namespace unlearn
