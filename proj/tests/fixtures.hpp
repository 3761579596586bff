#pragma once

#include "nalign/experiment.hpp"

namespace nalign::testing {

// One full desk-scale build per test binary.
inline const PipelineArtifacts& desk() {
    static const PipelineArtifacts a = build_artifacts(ExperimentConfig{});
    return a;
}

inline Dataset small_data(std::uint64_t stream, std::size_t samples = 600) {
    BlobSpec spec;
    spec.samples = samples;
    spec.input_dim = 8;
    spec.seed = 21;
    return make_blobs(spec, stream);
}

inline Network small_trained(std::uint64_t seed = 1) {
    TrainParams hp;
    hp.epochs = 5;
    hp.seed = seed;
    return train(Network::create(8, std::vector<std::size_t>{16, 12}, 4, seed), small_data(0), hp);
}

}  // namespace nalign::testing
