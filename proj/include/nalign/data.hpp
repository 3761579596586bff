#pragma once

// Seeded synthetic classification data: Gaussian blobs whose class centres
// sit on a 2-D grid in the first two features, with class-specific random
// offsets in the remaining ones.

#include <cmath>
#include <cstdint>

#include "random.hpp"
#include "training.hpp"

namespace nalign {

struct BlobSpec {
    std::size_t samples = 2000;
    std::size_t input_dim = 16;
    int classes = 4;
    double separation = 3.0;
    double noise = 1.0;
    std::uint64_t seed = 0;
};

inline MatrixD blob_centres(const BlobSpec& spec) {
    Rng rng(derive_seed(spec.seed, 0xC3));
    const auto side = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(spec.classes))));
    MatrixD centres(static_cast<std::size_t>(spec.classes), spec.input_dim);
    for (int k = 0; k < spec.classes; ++k) {
        const auto row = static_cast<std::size_t>(k);
        for (std::size_t d = 0; d < spec.input_dim; ++d) {
            if (d == 0) {
                centres(row, d) = spec.separation * (k % side - 0.5 * (side - 1));
            } else if (d == 1) {
                centres(row, d) = spec.separation * (k / side - 0.5 * (side - 1));
            } else {
                centres(row, d) = 0.5 * spec.separation * rng.normal();
            }
        }
    }
    return centres;
}

// `stream` separates train and test draws around the same centres.
inline Dataset make_blobs(const BlobSpec& spec, std::uint64_t stream = 0) {
    if (spec.samples == 0 || spec.input_dim == 0 || spec.classes < 2) {
        throw ValidationError("blob data needs samples >= 1, input_dim >= 1, classes >= 2");
    }
    const MatrixD centres = blob_centres(spec);
    Rng rng(derive_seed(spec.seed, 0x1000 + stream));
    Dataset data{MatrixF(spec.samples, spec.input_dim), {}, spec.classes};
    for (std::size_t i = 0; i < spec.samples; ++i) {
        const int label = static_cast<int>(i % static_cast<std::size_t>(spec.classes));
        data.labels.push_back(label);
        for (std::size_t d = 0; d < spec.input_dim; ++d) {
            data.inputs(i, d) = static_cast<float>(centres(static_cast<std::size_t>(label), d) + spec.noise * rng.normal());
        }
    }
    return data;
}

}  // namespace nalign
