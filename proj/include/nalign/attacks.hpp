#pragma once

// Functionality-equivalence attacks on a watermarked layer: neuron
// permutation cancelled in the successor layer, fine-tune or prune followed
// by permutation, and per-neuron rescaling through a relu.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "errors.hpp"
#include "network.hpp"
#include "random.hpp"
#include "training.hpp"

namespace nalign {

// perm[i] is the destination index of neuron i. The 1-indexed cycle
// notation (2,3,4) corresponds to perm = {0, 2, 3, 1, ...}.
using Permutation = std::vector<std::size_t>;

inline bool is_bijection(std::span<const std::size_t> perm) {
    std::vector<bool> seen(perm.size(), false);
    for (std::size_t p : perm) {
        if (p >= perm.size() || seen[p]) return false;
        seen[p] = true;
    }
    return true;
}

inline Permutation identity_permutation(std::size_t n) {
    Permutation p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    return p;
}

inline Permutation inverse(std::span<const std::size_t> perm) {
    Permutation inv(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = i;
    return inv;
}

// Applying `first` and then `second` equals applying compose(first, second).
inline Permutation compose(std::span<const std::size_t> first, std::span<const std::size_t> second) {
    Permutation out(first.size());
    for (std::size_t i = 0; i < first.size(); ++i) out[i] = second[first[i]];
    return out;
}

struct PermutationSpec {
    std::string layer_name;
    Permutation perm;
    std::uint64_t seed = 0;
};

// Uniform over bijections of {0..N-1}, excluding the identity when N >= 2.
inline PermutationSpec random_permutation(std::string layer_name, std::size_t n, std::uint64_t seed) {
    if (n < 1) throw ValidationError("permutation size must be positive");
    Rng rng(seed);
    Permutation p = identity_permutation(n);
    if (n >= 2) {
        const Permutation id = p;
        do {
            rng.shuffle(p);
        } while (p == id);
    }
    return {std::move(layer_name), std::move(p), seed};
}

namespace detail {

inline std::size_t layer_with_successor(const Network& net, std::string_view name, const char* what) {
    const std::size_t l = net.layer_index(name);
    if (l + 1 >= net.num_layers()) {
        throw ValidationError(std::string(what) + " needs a successor layer; '" + std::string(name) +
                              "' is the final layer");
    }
    return l;
}

}  // namespace detail

// Rows of the layer move to perm[i]; successor columns follow, so the
// network function is unchanged.
inline Network permute_neurons(const Network& net, const PermutationSpec& spec) {
    const std::size_t l = detail::layer_with_successor(net, spec.layer_name, "neuron permutation");
    const auto& src = net.layer(l);
    if (spec.perm.size() != src.out_dim() || !is_bijection(spec.perm)) {
        throw ValidationError("permutation is not a bijection on the " + std::to_string(src.out_dim()) +
                              " neurons of '" + spec.layer_name + "'");
    }
    Network out = net;
    auto& dst = out.layer(l);
    const auto& next_src = net.layer(l + 1);
    auto& next_dst = out.layer(l + 1);
    for (std::size_t i = 0; i < spec.perm.size(); ++i) {
        const std::size_t to = spec.perm[i];
        std::ranges::copy(src.weights.row(i), dst.weights.row(to).begin());
        dst.biases[to] = src.biases[i];
        for (std::size_t r = 0; r < next_src.out_dim(); ++r) next_dst.weights(r, to) = next_src.weights(r, i);
    }
    return out;
}

// Neuron i's incoming row and bias scale by scales[i]; the successor's column
// i is divided by it. Exact for relu by positive homogeneity.
inline Network attack_rescale(const Network& net, std::string_view layer_name, std::span<const double> scales) {
    const std::size_t l = detail::layer_with_successor(net, layer_name, "rescaling");
    if (net.layer(l).activation != Activation::relu) {
        throw ValidationError("rescaling requires a relu layer; '" + std::string(layer_name) + "' is " +
                              to_string(net.layer(l).activation));
    }
    if (scales.size() != net.layer(l).out_dim()) throw ValidationError("one scale per neuron is required");
    Network out = net;
    auto& layer = out.layer(l);
    auto& next = out.layer(l + 1);
    for (std::size_t i = 0; i < scales.size(); ++i) {
        const double s = scales[i];
        if (!(s > 0.0) || !std::isfinite(s)) throw ValidationError("rescale factors must be positive and finite");
        for (float& w : layer.weights.row(i)) w = static_cast<float>(w * s);
        layer.biases[i] = static_cast<float>(layer.biases[i] * s);
        for (std::size_t r = 0; r < next.out_dim(); ++r) next.weights(r, i) = static_cast<float>(next.weights(r, i) / s);
    }
    return out;
}

// Log-uniform factors in [lo, hi].
inline std::vector<double> random_scales(std::size_t n, std::uint64_t seed, double lo = 0.5, double hi = 2.0) {
    Rng rng(seed);
    std::vector<double> s(n);
    for (double& v : s) v = std::exp(rng.uniform(std::log(lo), std::log(hi)));
    return s;
}

// Fine-tune, then permute.
inline Network attack_ftp(const Network& net, const Dataset& data, int epochs, const PermutationSpec& spec,
                          std::uint64_t seed, double lr = kFinetuneLr) {
    return permute_neurons(finetune_variant(net, data, epochs, seed, lr), spec);
}

// Prune the permuted layer, then permute.
inline Network attack_npp(const Network& net, double fraction, const PermutationSpec& spec, std::uint64_t seed) {
    return permute_neurons(prune_variant(net, spec.layer_name, fraction, seed), spec);
}

enum class AttackKind { np, ftp, npp, rescale };

inline std::string to_string(AttackKind k) {
    switch (k) {
        case AttackKind::np: return "NP";
        case AttackKind::ftp: return "FTP";
        case AttackKind::npp: return "NPP";
        case AttackKind::rescale: return "RESCALE";
    }
    return "?";
}

inline AttackKind parse_attack_kind(std::string_view s) {
    std::string lower(s);
    std::ranges::transform(lower, lower.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (lower == "np") return AttackKind::np;
    if (lower == "ftp") return AttackKind::ftp;
    if (lower == "npp") return AttackKind::npp;
    if (lower == "rescale") return AttackKind::rescale;
    throw ValidationError("unknown attack kind '" + std::string(s) + "'");
}

struct AttackReport {
    AttackKind kind = AttackKind::np;
    PermutationSpec spec;
    int epochs = 0;          // FTP
    double fraction = 0.0;   // NPP
    std::vector<double> scales;  // RESCALE
    double functional_drift = 0.0;
    std::uint64_t seed = 0;
};

// Uniform probes in [lo, hi]^input_dim.
inline MatrixF random_probes(std::size_t count, std::size_t input_dim, std::uint64_t seed, double lo = -4.0,
                             double hi = 4.0) {
    Rng rng(seed);
    MatrixF m(count, input_dim);
    for (float& v : m.data()) v = static_cast<float>(rng.uniform(lo, hi));
    return m;
}

// Pre-softmax scores of the final layer.
inline MatrixD logits(const Network& net, const MatrixF& batch) {
    Network raw = net;
    raw.layer(raw.num_layers() - 1).activation = Activation::identity;
    return forward(raw, batch).final();
}

// Largest absolute difference between two networks' final-layer scores.
inline double functional_drift(const Network& a, const Network& b, const MatrixF& probes) {
    const auto ya = logits(a, probes);
    const auto yb = logits(b, probes);
    double worst = 0.0;
    for (std::size_t i = 0; i < ya.size(); ++i) worst = std::max(worst, std::abs(ya.data()[i] - yb.data()[i]));
    return worst;
}

}  // namespace nalign
