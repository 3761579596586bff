#pragma once

// Trigger synthesis: gradient descent on the input of frozen networks so that
// every neuron of the watermarked layer emits the centroid its codeword asks
// for at that position.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "binary_io.hpp"
#include "coding.hpp"
#include "network.hpp"
#include "random.hpp"
#include "training.hpp"

namespace nalign {

struct VariantEnsemble {
    std::vector<Network> networks;  // [0] is the unmodified model
    std::vector<std::string> provenance;
};

struct EnsembleParams {
    double finetune_lr = kFinetuneLr;
    double prune_step = 0.05;
};

// J/2 fine-tuned copies (1, 2, ... epochs) and J/2 copies with the
// watermarked layer pruned at prune_step, 2*prune_step, ...
inline VariantEnsemble make_variant_ensemble(const Network& net, const Dataset& data, std::string_view wm_layer,
                                             std::size_t j, std::uint64_t seed, const EnsembleParams& params = {}) {
    if (j % 2 != 0) throw ValidationError("variant count J must be even (half fine-tuned, half pruned)");
    net.layer_index(wm_layer);
    VariantEnsemble ens;
    ens.networks.push_back(net);
    ens.provenance.push_back("original");
    for (std::size_t i = 0; i < j / 2; ++i) {
        const int epochs = static_cast<int>(i) + 1;
        const std::uint64_t s = derive_seed(seed, 100 + i);
        ens.networks.push_back(finetune_variant(net, data, epochs, s, params.finetune_lr));
        ens.provenance.push_back("finetune epochs=" + std::to_string(epochs) + " lr=" +
                                 std::to_string(params.finetune_lr) + " seed=" + std::to_string(s));
    }
    for (std::size_t i = 0; i < j / 2; ++i) {
        const double fraction = params.prune_step * static_cast<double>(i + 1);
        const std::uint64_t s = derive_seed(seed, 200 + i);
        ens.networks.push_back(prune_variant(net, wm_layer, fraction, s));
        ens.provenance.push_back("prune fraction=" + std::to_string(fraction) + " layer=" + std::string(wm_layer) +
                                 " seed=" + std::to_string(s));
    }
    return ens;
}

// Per-feature bounding box of a data matrix.
struct InputBox {
    std::vector<double> lo;
    std::vector<double> hi;
};

inline InputBox bounding_box(const MatrixF& inputs) {
    InputBox box{std::vector<double>(inputs.cols(), std::numeric_limits<double>::infinity()),
                 std::vector<double>(inputs.cols(), -std::numeric_limits<double>::infinity())};
    for (std::size_t r = 0; r < inputs.rows(); ++r) {
        for (std::size_t c = 0; c < inputs.cols(); ++c) {
            box.lo[c] = std::min(box.lo[c], double(inputs(r, c)));
            box.hi[c] = std::max(box.hi[c], double(inputs(r, c)));
        }
    }
    return box;
}

struct TriggerOptions {
    int steps = 1000;
    double lr = 0.5;
    std::uint64_t seed = 0;
    InputBox box;
    // Backward slope through inactive relus; 0 is the exact gradient.
    double inactive_slope = 0.1;
};

struct TriggerResult {
    std::vector<double> input;
    double initial_loss = 0.0;
    double final_loss = 0.0;
};

inline std::vector<double> random_point(const InputBox& box, Rng& rng) {
    std::vector<double> x(box.lo.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(box.lo[i], box.hi[i]);
    return x;
}

// Projected gradient descent from `start`; returns the best iterate, so the
// final loss never exceeds the initial one.
inline TriggerResult descend(std::span<const Network> ensemble, TriggerObjective objective,
                             std::vector<double> start, const TriggerOptions& opt) {
    objective.inactive_slope = opt.inactive_slope;
    const auto clamp = [&](std::vector<double>& x) {
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], opt.box.lo[i], opt.box.hi[i]);
    };
    clamp(start);
    // The summed ensemble loss scales with its size; keep the step per network.
    const double rate = opt.lr / static_cast<double>(ensemble.size());
    TriggerResult res{start, 0.0, 0.0};
    std::vector<double> x = std::move(start);
    for (int step = 0; step <= opt.steps; ++step) {
        const ObjectiveEval eval = evaluate_objective(ensemble, x, objective);
        if (!std::isfinite(eval.loss)) throw OptimizationError("non-finite trigger loss", step);
        if (step == 0) {
            res.initial_loss = res.final_loss = eval.loss;
        } else if (eval.loss < res.final_loss) {
            res.final_loss = eval.loss;
            res.input = x;
        }
        if (step == opt.steps || eval.loss == 0.0) break;
        for (std::size_t i = 0; i < x.size(); ++i) x[i] -= rate * eval.gradient[i];
        clamp(x);
    }
    return res;
}

// Starts from seeded uniform noise inside the box.
inline TriggerResult synthesize_trigger(std::span<const Network> ensemble, const TriggerObjective& objective,
                                        const TriggerOptions& opt) {
    if (opt.box.lo.size() != ensemble.front().input_dim()) throw ShapeError("input box width does not match network");
    Rng rng(opt.seed);
    return descend(ensemble, objective, random_point(opt.box, rng), opt);
}

enum class TriggerMode : std::uint8_t { t1 = 1, t2 = 2 };

inline std::string to_string(TriggerMode m) { return m == TriggerMode::t1 ? "t1" : "t2"; }

inline TriggerMode parse_trigger_mode(std::string_view s) {
    if (s == "t1" || s == "T1") return TriggerMode::t1;
    if (s == "t2" || s == "T2") return TriggerMode::t2;
    throw ValidationError("trigger mode must be t1 or t2, got '" + std::string(s) + "'");
}

struct TriggerSet {
    MatrixF inputs;  // T x input_dim
    CentroidSet centroids;
    std::string layer_name;
    std::string codebook_hash;
    TriggerMode mode = TriggerMode::t1;
    std::uint32_t j = 0;
    std::vector<double> final_loss;
    std::vector<std::uint8_t> converged;
    std::vector<std::string> provenance;

    std::size_t t() const noexcept { return inputs.rows(); }
    std::size_t failures() const { return static_cast<std::size_t>(std::ranges::count(converged, 0)); }

    bool operator==(const TriggerSet&) const = default;
};

// Per-trigger success: summed loss per network within N * (gap / 4)^2.
inline double loss_ceiling(std::size_t n, const CentroidSet& cs, std::size_t ensemble_size) {
    const double q = cs.gap() / 4.0;
    return static_cast<double>(n * ensemble_size) * q * q;
}

// One trigger per code position t, aimed at c[r_{n,t}] for every neuron n.
// Non-converged triggers are flagged, not fatal.
inline TriggerSet synthesize_trigger_set(const VariantEnsemble& ensemble, std::string_view layer_name,
                                         const CentroidSet& cs, const Codebook& cb, const TriggerOptions& opt) {
    const Network& net = ensemble.networks.front();
    const std::size_t width = net.layer(net.layer_index(layer_name)).out_dim();
    if (cb.n != width) {
        throw ShapeError("codebook has " + std::to_string(cb.n) + " words, layer '" + std::string(layer_name) +
                         "' has " + std::to_string(width) + " neurons");
    }
    if (cb.k != cs.k()) throw ShapeError("codebook alphabet does not match centroid count");
    TriggerSet ts;
    ts.inputs = MatrixF(cb.t, net.input_dim());
    ts.centroids = cs;
    ts.layer_name = std::string(layer_name);
    ts.codebook_hash = codebook_hash(cb);
    ts.j = static_cast<std::uint32_t>(ensemble.networks.size() - 1);
    ts.mode = ts.j == 0 ? TriggerMode::t1 : TriggerMode::t2;
    ts.provenance = ensemble.provenance;
    const double ceiling = loss_ceiling(width, cs, ensemble.networks.size());
    TriggerObjective objective{std::string(layer_name), std::vector<double>(width), {}};
    for (std::size_t t = 0; t < cb.t; ++t) {
        for (std::size_t n = 0; n < width; ++n) objective.targets[n] = cs.centroids[cb.codewords(n, t)];
        TriggerOptions o = opt;
        o.seed = derive_seed(opt.seed, t);
        const TriggerResult r = synthesize_trigger(ensemble.networks, objective, o);
        for (std::size_t i = 0; i < r.input.size(); ++i) ts.inputs(t, i) = static_cast<float>(r.input[i]);
        ts.final_loss.push_back(r.final_loss);
        ts.converged.push_back(r.final_loss <= ceiling ? 1 : 0);
    }
    return ts;
}

struct ClusterQuality {
    std::optional<double> inter;  // absent when fewer than two clusters are populated
    double intra = 0.0;
};

// Groups outputs by nearest centroid. inter: mean gap between consecutive
// populated cluster means. intra: mean absolute deviation from own cluster mean.
inline ClusterQuality cluster_quality(std::span<const double> outputs, const CentroidSet& cs) {
    std::vector<double> sum(cs.k(), 0.0);
    std::vector<std::size_t> count(cs.k(), 0);
    std::vector<std::size_t> label(outputs.size());
    for (std::size_t i = 0; i < outputs.size(); ++i) {
        label[i] = nearest_centroid(outputs[i], cs);
        sum[label[i]] += outputs[i];
        ++count[label[i]];
    }
    std::vector<double> mean(cs.k(), 0.0);
    std::vector<double> populated;
    for (std::size_t k = 0; k < cs.k(); ++k) {
        if (count[k]) {
            mean[k] = sum[k] / static_cast<double>(count[k]);
            populated.push_back(mean[k]);
        }
    }
    ClusterQuality q;
    for (std::size_t i = 0; i < outputs.size(); ++i) q.intra += std::abs(outputs[i] - mean[label[i]]);
    if (!outputs.empty()) q.intra /= static_cast<double>(outputs.size());
    if (populated.size() >= 2) {
        double gaps = 0.0;
        for (std::size_t i = 1; i < populated.size(); ++i) gaps += populated[i] - populated[i - 1];
        q.inter = gaps / static_cast<double>(populated.size() - 1);
    }
    return q;
}

inline std::vector<std::uint8_t> serialize_triggers(const TriggerSet& ts) {
    ByteWriter body;
    body.u8(static_cast<std::uint8_t>(ts.mode));
    body.u32(ts.j);
    body.u32(static_cast<std::uint32_t>(ts.t()));
    body.u32(static_cast<std::uint32_t>(ts.inputs.cols()));
    body.str(ts.layer_name);
    write_centroids(body, ts.centroids);
    body.str(ts.codebook_hash);
    for (float v : ts.inputs.data()) body.f32(v);
    for (std::size_t t = 0; t < ts.t(); ++t) {
        body.f64(ts.final_loss[t]);
        body.u8(ts.converged[t]);
    }
    body.u32(static_cast<std::uint32_t>(ts.provenance.size()));
    for (const auto& p : ts.provenance) body.str(p);
    return frame_container(static_cast<std::uint16_t>(RecordTag::triggers), body);
}

inline TriggerSet deserialize_triggers(std::span<const std::uint8_t> bytes) {
    ByteReader in = open_record(bytes, RecordTag::triggers);
    TriggerSet ts;
    const std::size_t mode_at = in.offset();
    const std::uint8_t mode = in.u8();
    if (mode != 1 && mode != 2) throw FormatError("unknown trigger mode", mode_at);
    ts.mode = static_cast<TriggerMode>(mode);
    ts.j = in.u32();
    const std::uint32_t t = in.u32();
    const std::uint32_t dim = in.u32();
    ts.layer_name = in.str();
    ts.centroids = read_centroids(in);
    ts.codebook_hash = in.str();
    if (std::uint64_t(t) * dim * 4 > in.remaining()) throw FormatError("trigger payload truncated", in.offset());
    ts.inputs = MatrixF(t, dim);
    for (float& v : ts.inputs.data()) v = in.f32();
    for (std::uint32_t i = 0; i < t; ++i) {
        ts.final_loss.push_back(in.f64());
        ts.converged.push_back(in.u8());
    }
    const std::uint32_t np = in.u32();
    for (std::uint32_t i = 0; i < np; ++i) ts.provenance.push_back(in.str());
    in.expect_end();
    return ts;
}

inline void save_triggers(const TriggerSet& ts, const std::filesystem::path& path) {
    write_file(path, serialize_triggers(ts));
}
inline TriggerSet load_triggers(const std::filesystem::path& path) { return deserialize_triggers(read_file(path)); }

}  // namespace nalign
