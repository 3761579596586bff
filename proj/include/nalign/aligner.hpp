#pragma once

// Neuron alignment: read each neuron's code off the trigger set, match codes
// to codewords with a bijective minimum-cost assignment, undo the estimated
// permutation, and hand the result to a watermark backend.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "assignment.hpp"
#include "attacks.hpp"
#include "coding.hpp"
#include "network.hpp"
#include "triggers.hpp"
#include "watermark.hpp"

namespace nalign {

struct ObservedCodeMatrix {
    SymbolMatrix codes;  // N x T
    MatrixD raw;         // N x T layer outputs
};

inline ObservedCodeMatrix read_codes(const Network& net, const TriggerSet& triggers) {
    if (net.input_dim() != triggers.inputs.cols()) {
        throw TamperError("suspect model takes " + std::to_string(net.input_dim()) + " inputs, triggers have " +
                          std::to_string(triggers.inputs.cols()));
    }
    const auto layer = net.find_layer(triggers.layer_name);
    if (!layer) throw TamperError("suspect model has no layer '" + triggers.layer_name + "'");
    const MatrixD out = layer_outputs(net, triggers.inputs, *layer);  // T x N
    ObservedCodeMatrix obs{SymbolMatrix(out.cols(), out.rows()), MatrixD(out.cols(), out.rows())};
    for (std::size_t t = 0; t < out.rows(); ++t) {
        for (std::size_t n = 0; n < out.cols(); ++n) {
            obs.raw(n, t) = out(t, n);
            obs.codes(n, t) = static_cast<std::uint8_t>(nearest_centroid(out(t, n), triggers.centroids));
        }
    }
    return obs;
}

// Neurons whose output does not vary across the triggers.
inline std::vector<std::size_t> dead_neurons(const ObservedCodeMatrix& obs) {
    std::vector<std::size_t> dead;
    for (std::size_t n = 0; n < obs.raw.rows(); ++n) {
        const auto row = obs.raw.row(n);
        const auto [lo, hi] = std::ranges::minmax_element(row);
        if (*lo == *hi) dead.push_back(n);
    }
    return dead;
}

struct AlignmentResult {
    Permutation perm_estimate;  // estimated attack permutation (destination array)
    std::vector<std::size_t> per_neuron_distance;  // by observed position
    std::size_t collisions_resolved = 0;
    std::int64_t total_cost = 0;
    std::vector<std::size_t> dead_neurons;
    std::optional<double> accuracy;       // all neurons, when ground truth is known
    std::optional<double> live_accuracy;  // excluding dead neurons
};

// Fraction of original neurons whose estimated destination is right.
inline void score_alignment(AlignmentResult& res, std::span<const std::size_t> true_perm) {
    if (true_perm.size() != res.perm_estimate.size()) throw ShapeError("ground-truth permutation has wrong length");
    std::vector<bool> dead_at(true_perm.size(), false);
    for (std::size_t d : res.dead_neurons) dead_at[d] = true;
    std::size_t hits = 0, live = 0, live_hits = 0;
    for (std::size_t i = 0; i < true_perm.size(); ++i) {
        const bool ok = res.perm_estimate[i] == true_perm[i];
        hits += ok;
        if (!dead_at[true_perm[i]]) {
            ++live;
            live_hits += ok;
        }
    }
    res.accuracy = static_cast<double>(hits) / static_cast<double>(true_perm.size());
    res.live_accuracy = live ? static_cast<double>(live_hits) / static_cast<double>(live) : 1.0;
}

inline AlignmentResult align(const ObservedCodeMatrix& observed, const Codebook& cb) {
    if (observed.codes.rows() != cb.n || observed.codes.cols() != cb.t) {
        throw TamperError("observed code matrix is " + std::to_string(observed.codes.rows()) + "x" +
                          std::to_string(observed.codes.cols()) + ", codebook is " + std::to_string(cb.n) + "x" +
                          std::to_string(cb.t));
    }
    const std::size_t n = cb.n;
    Matrix<std::int64_t> cost(n, n);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < n; ++c) {
            cost(r, c) = static_cast<std::int64_t>(l1_distance(observed.codes.row(r), cb.word(c)));
        }
    }
    const auto origin = min_cost_assignment(cost);  // observed position -> original index

    AlignmentResult res;
    res.perm_estimate.assign(n, 0);
    res.total_cost = assignment_cost(cost, origin);
    std::map<std::size_t, std::size_t> argmin_use;
    std::vector<std::size_t> argmin(n);
    for (std::size_t r = 0; r < n; ++r) {
        res.perm_estimate[origin[r]] = r;
        res.per_neuron_distance.push_back(static_cast<std::size_t>(cost(r, origin[r])));
        argmin[r] = decode_codeword(observed.codes.row(r), cb).index;
        ++argmin_use[argmin[r]];
    }
    for (std::size_t r = 0; r < n; ++r) res.collisions_resolved += argmin_use[argmin[r]] > 1;
    res.dead_neurons = dead_neurons(observed);
    return res;
}

// Moves every neuron back to its estimated original index.
inline Network apply_alignment(const Network& net, std::string_view layer_name, const AlignmentResult& result) {
    if (!is_bijection(result.perm_estimate)) throw ValidationError("alignment estimate is not a bijection");
    return permute_neurons(net, PermutationSpec{std::string(layer_name), inverse(result.perm_estimate), 0});
}

// Scales each neuron's incoming row and bias to unit L2 norm and pushes the
// inverse factor into the successor. Zero rows are left alone.
inline Network normalize_layer(const Network& net, std::string_view layer_name) {
    const auto& layer = net.layer(net.layer_index(layer_name));
    std::vector<double> scales(layer.out_dim(), 1.0);
    for (std::size_t i = 0; i < scales.size(); ++i) {
        double sq = double(layer.biases[i]) * double(layer.biases[i]);
        for (float w : layer.weights.row(i)) sq += double(w) * double(w);
        if (sq > 0.0) scales[i] = 1.0 / std::sqrt(sq);
    }
    return attack_rescale(net, layer_name, scales);
}

struct AlignOptions {
    bool normalize = false;
    std::optional<Permutation> ground_truth;  // scores accuracy when known
};

struct VerifiedAlignment {
    OVResult ov;
    std::optional<AlignmentResult> alignment;
    std::string failure_cause;  // set when a tamper error stopped the pipeline
};

// normalize? -> read_codes -> align -> apply_alignment -> backend.verify
template <WatermarkBackend Backend>
VerifiedAlignment verify_with_alignment(const Network& suspect, const TriggerSet& triggers, const Codebook& cb,
                                        const typename Backend::Record& record, const Backend& backend,
                                        const AlignOptions& options = {}) {
    if (triggers.codebook_hash != codebook_hash(cb)) {
        throw IntegrityError("trigger set was forged for a different codebook");
    }
    VerifiedAlignment out;
    try {
        const Network probe = options.normalize ? normalize_layer(suspect, triggers.layer_name) : suspect;
        AlignmentResult res = align(read_codes(probe, triggers), cb);
        if (options.ground_truth) score_alignment(res, *options.ground_truth);
        out.ov = backend.verify(apply_alignment(suspect, triggers.layer_name, res), record);
        out.alignment = std::move(res);
    } catch (const TamperError& e) {
        out.ov = OVResult{};
        out.failure_cause = e.what();
    }
    return out;
}

}  // namespace nalign
