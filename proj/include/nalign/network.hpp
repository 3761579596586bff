#pragma once

// Dense feedforward network engine: construction, forward passes with the
// full activation trace, and gradients with respect to the input.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "matrix.hpp"
#include "random.hpp"

namespace nalign {

enum class Activation : std::uint8_t { relu = 0, identity = 1, softmax = 2 };

inline std::string to_string(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::identity: return "identity";
        case Activation::softmax: return "softmax";
    }
    return "unknown";
}

// One fully connected layer. Row i of `weights` is the incoming weight row of
// neuron i.
struct DenseLayer {
    MatrixF weights;  // out_dim x in_dim
    std::vector<float> biases;
    Activation activation = Activation::relu;

    std::size_t in_dim() const noexcept { return weights.cols(); }
    std::size_t out_dim() const noexcept { return weights.rows(); }

    bool operator==(const DenseLayer&) const = default;
};

class Network {
public:
    Network() = default;
    Network(std::size_t input_dim, std::vector<DenseLayer> layers)
        : input_dim_(input_dim), layers_(std::move(layers)) {
        validate();
    }

    // Glorot-uniform weights, zero biases, relu hidden layers and a softmax
    // output of `num_classes` units.
    static Network create(std::size_t input_dim, std::span<const std::size_t> hidden_widths,
                          std::size_t num_classes, std::uint64_t seed) {
        Rng rng(seed);
        std::vector<DenseLayer> layers;
        std::size_t prev = input_dim;
        auto add = [&](std::size_t width, Activation act) {
            DenseLayer layer{MatrixF(width, prev), std::vector<float>(width, 0.0f), act};
            const double a = std::sqrt(6.0 / static_cast<double>(prev + width));
            for (auto& w : layer.weights.data()) w = static_cast<float>(rng.uniform(-a, a));
            layers.push_back(std::move(layer));
            prev = width;
        };
        for (std::size_t w : hidden_widths) add(w, Activation::relu);
        add(num_classes, Activation::softmax);
        Network net(input_dim, std::move(layers));
        net.metadata["init_seed"] = std::to_string(seed);
        return net;
    }

    std::size_t input_dim() const noexcept { return input_dim_; }
    std::size_t num_layers() const noexcept { return layers_.size(); }
    std::size_t output_dim() const noexcept { return layers_.empty() ? input_dim_ : layers_.back().out_dim(); }

    const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
    const DenseLayer& layer(std::size_t i) const { return layers_.at(i); }
    // Mutable access for weight transformations; callers keep shapes intact.
    DenseLayer& layer(std::size_t i) { return layers_.at(i); }

    // Layers are named by position: hidden1, hidden2, ..., output.
    std::string layer_name(std::size_t i) const {
        return i + 1 == layers_.size() ? std::string("output") : "hidden" + std::to_string(i + 1);
    }

    std::optional<std::size_t> find_layer(std::string_view name) const {
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            if (layer_name(i) == name) return i;
        }
        return std::nullopt;
    }

    std::size_t layer_index(std::string_view name) const {
        auto idx = find_layer(name);
        if (!idx) throw ValidationError("unknown layer name '" + std::string(name) + "'");
        return *idx;
    }

    void validate() const {
        if (input_dim_ == 0) throw ShapeError("network input_dim must be positive");
        std::size_t prev = input_dim_;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            const auto& l = layers_[i];
            if (l.out_dim() == 0 || l.in_dim() != prev) {
                throw ShapeError("layer '" + layer_name(i) + "' expects input width " + std::to_string(l.in_dim()) +
                                 " but receives " + std::to_string(prev));
            }
            if (l.biases.size() != l.out_dim()) {
                throw ShapeError("layer '" + layer_name(i) + "' bias length does not match its width");
            }
            auto finite = [](float v) { return std::isfinite(v); };
            if (!std::ranges::all_of(l.weights.data(), finite) || !std::ranges::all_of(l.biases, finite)) {
                throw ShapeError("layer '" + layer_name(i) + "' holds non-finite parameters");
            }
            prev = l.out_dim();
        }
    }

    // Parameters only; metadata is not part of network identity.
    bool operator==(const Network& o) const { return input_dim_ == o.input_dim_ && layers_ == o.layers_; }

    std::map<std::string, std::string> metadata;

private:
    std::size_t input_dim_ = 0;
    std::vector<DenseLayer> layers_;
};

// Post-activation outputs of every layer for a batch.
struct ActivationTrace {
    std::vector<MatrixD> outputs;  // outputs[l] is batch x out_dim(l)

    const MatrixD& layer(std::size_t l) const { return outputs.at(l); }
    const MatrixD& final() const { return outputs.back(); }
};

namespace detail {

inline void activate(Activation act, std::span<double> z) {
    switch (act) {
        case Activation::relu:
            for (double& v : z) v = v > 0.0 ? v : 0.0;
            break;
        case Activation::identity:
            break;
        case Activation::softmax: {
            const double m = *std::ranges::max_element(z);
            double sum = 0.0;
            for (double& v : z) {
                v = std::exp(v - m);
                sum += v;
            }
            for (double& v : z) v /= sum;
            break;
        }
    }
}

// z = W x + b, accumulated in double.
inline void affine(const DenseLayer& layer, std::span<const double> x, std::span<double> z) {
    for (std::size_t o = 0; o < layer.out_dim(); ++o) {
        const auto w = layer.weights.row(o);
        double acc = layer.biases[o];
        for (std::size_t i = 0; i < x.size(); ++i) acc += static_cast<double>(w[i]) * x[i];
        z[o] = acc;
    }
}

}  // namespace detail

// Pre- and post-activation values of one input through the first
// `depth` layers.
struct SampleTrace {
    std::vector<std::vector<double>> pre;
    std::vector<std::vector<double>> post;
};

inline SampleTrace forward_sample(const Network& net, std::span<const double> x, std::size_t depth) {
    if (x.size() != net.input_dim()) {
        throw ShapeError("input has " + std::to_string(x.size()) + " features, layer '" + net.layer_name(0) +
                         "' expects " + std::to_string(net.input_dim()));
    }
    SampleTrace t;
    t.pre.reserve(depth);
    t.post.reserve(depth);
    std::span<const double> in = x;
    for (std::size_t l = 0; l < depth; ++l) {
        const auto& layer = net.layer(l);
        std::vector<double> z(layer.out_dim());
        detail::affine(layer, in, z);
        t.pre.push_back(z);
        detail::activate(layer.activation, z);
        t.post.push_back(std::move(z));
        in = t.post.back();
    }
    return t;
}

inline ActivationTrace forward(const Network& net, const MatrixF& batch) {
    if (batch.cols() != net.input_dim()) {
        throw ShapeError("batch has " + std::to_string(batch.cols()) + " columns, layer '" +
                         (net.num_layers() ? net.layer_name(0) : std::string("input")) + "' expects " +
                         std::to_string(net.input_dim()));
    }
    ActivationTrace trace;
    for (const auto& layer : net.layers()) trace.outputs.emplace_back(batch.rows(), layer.out_dim());
    std::vector<double> x(net.input_dim());
    for (std::size_t r = 0; r < batch.rows(); ++r) {
        std::ranges::copy(batch.row(r), x.begin());
        std::span<const double> in = x;
        for (std::size_t l = 0; l < net.num_layers(); ++l) {
            auto out = trace.outputs[l].row(r);
            detail::affine(net.layer(l), in, out);
            detail::activate(net.layer(l).activation, out);
            in = out;
        }
    }
    return trace;
}

// Outputs of a single layer for a batch.
inline MatrixD layer_outputs(const Network& net, const MatrixF& batch, std::size_t layer) {
    return forward(net, batch).outputs.at(layer);
}

// Per-position objective: sum over networks j and neurons n of
// weight_j * (y_n^j(x) - target_n)^2 at the named layer.
struct TriggerObjective {
    std::string layer_name;
    std::vector<double> targets;
    std::vector<double> ensemble_weights;  // empty means all ones
    // Slope used in place of a relu's zero derivative when the unit is
    // inactive. 0 gives the exact gradient.
    double inactive_slope = 0.0;
};

struct ObjectiveEval {
    double loss = 0.0;
    std::vector<double> gradient;
};

inline ObjectiveEval evaluate_objective(std::span<const Network> nets, std::span<const double> input,
                                        const TriggerObjective& objective) {
    if (nets.empty()) throw ValidationError("objective needs at least one network");
    if (!objective.ensemble_weights.empty() && objective.ensemble_weights.size() != nets.size()) {
        throw ValidationError("ensemble_weights length does not match network count");
    }
    ObjectiveEval eval{0.0, std::vector<double>(input.size(), 0.0)};
    for (std::size_t j = 0; j < nets.size(); ++j) {
        const Network& net = nets[j];
        if (net.input_dim() != nets[0].input_dim()) throw ShapeError("ensemble members differ in input_dim");
        const auto found = net.find_layer(objective.layer_name);
        if (!found) throw ValidationError("objective layer '" + objective.layer_name + "' out of range");
        const std::size_t depth = *found + 1;
        if (objective.targets.size() != net.layer(*found).out_dim()) {
            throw ShapeError("objective has " + std::to_string(objective.targets.size()) + " targets, layer '" +
                             objective.layer_name + "' has " + std::to_string(net.layer(*found).out_dim()) +
                             " neurons");
        }
        const double weight = objective.ensemble_weights.empty() ? 1.0 : objective.ensemble_weights[j];
        const SampleTrace t = forward_sample(net, input, depth);

        std::vector<double> delta(t.post.back().size());
        for (std::size_t n = 0; n < delta.size(); ++n) {
            const double diff = t.post.back()[n] - objective.targets[n];
            eval.loss += weight * diff * diff;
            delta[n] = 2.0 * weight * diff;
        }
        for (std::size_t l = depth; l-- > 0;) {
            const auto& layer = net.layer(l);
            // delta currently holds dL/d(post); turn it into dL/d(pre).
            switch (layer.activation) {
                case Activation::relu:
                    for (std::size_t n = 0; n < delta.size(); ++n) {
                        if (t.pre[l][n] <= 0.0) delta[n] *= objective.inactive_slope;
                    }
                    break;
                case Activation::identity:
                    break;
                case Activation::softmax: {
                    const auto& y = t.post[l];
                    double dot = 0.0;
                    for (std::size_t n = 0; n < y.size(); ++n) dot += y[n] * delta[n];
                    for (std::size_t n = 0; n < y.size(); ++n) delta[n] = y[n] * (delta[n] - dot);
                    break;
                }
            }
            std::vector<double> prev(layer.in_dim(), 0.0);
            for (std::size_t o = 0; o < layer.out_dim(); ++o) {
                if (delta[o] == 0.0) continue;
                const auto w = layer.weights.row(o);
                for (std::size_t i = 0; i < prev.size(); ++i) prev[i] += static_cast<double>(w[i]) * delta[o];
            }
            delta = std::move(prev);
        }
        for (std::size_t i = 0; i < delta.size(); ++i) eval.gradient[i] += delta[i];
    }
    return eval;
}

// dL/d(input) of the summed objective; network parameters are read only.
inline std::vector<double> input_gradient(std::span<const Network> nets, std::span<const double> input,
                                          const TriggerObjective& objective) {
    return evaluate_objective(nets, input, objective).gradient;
}

}  // namespace nalign
