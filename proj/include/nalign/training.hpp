#pragma once

// Minibatch SGD training with softmax cross-entropy, plus the tuned and
// pruned model variants used by attacks and the trigger ensemble.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "errors.hpp"
#include "network.hpp"
#include "random.hpp"

namespace nalign {

struct Dataset {
    MatrixF inputs;           // D x input_dim
    std::vector<int> labels;  // D entries in [0, num_classes)
    int num_classes = 0;

    std::size_t size() const noexcept { return labels.size(); }

    void validate() const {
        if (labels.empty()) throw ValidationError("dataset is empty");
        if (inputs.rows() != labels.size()) throw ShapeError("dataset inputs and labels disagree on D");
        for (int y : labels) {
            if (y < 0 || y >= num_classes) throw ValidationError("label out of range");
        }
    }

    Dataset subset(std::span<const std::size_t> rows) const {
        Dataset out{MatrixF(rows.size(), inputs.cols()), {}, num_classes};
        out.labels.reserve(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            std::ranges::copy(inputs.row(rows[i]), out.inputs.row(i).begin());
            out.labels.push_back(labels[rows[i]]);
        }
        return out;
    }
};

// Parameter gradients laid out like the network.
struct LayerGradient {
    MatrixD weights;
    std::vector<double> biases;
};
using Gradients = std::vector<LayerGradient>;

inline Gradients zero_gradients(const Network& net) {
    Gradients g;
    for (const auto& l : net.layers()) g.push_back({MatrixD(l.out_dim(), l.in_dim()), std::vector<double>(l.out_dim())});
    return g;
}

// Extra regularizer evaluated once per minibatch: returns its loss and adds
// its parameter gradient into `grads`.
using ExtraLoss = std::function<double(const Network&, Gradients& grads)>;

struct TrainParams {
    int epochs = 10;
    double lr = 0.05;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    double l2 = 0.0;
    ExtraLoss extra_loss;
};

struct TrainLog {
    std::string optimizer = "sgd";
    std::vector<double> epoch_loss;  // mean minibatch objective per epoch
};

inline double cross_entropy(const Network& net, const Dataset& data) {
    const auto probs = forward(net, data.inputs).final();
    double loss = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        loss -= std::log(std::max(probs(i, static_cast<std::size_t>(data.labels[i])), 1e-300));
    }
    return loss / static_cast<double>(data.size());
}

inline double accuracy(const Network& net, const Dataset& data) {
    const auto scores = forward(net, data.inputs).final();
    std::size_t hits = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto row = scores.row(i);
        const auto best = static_cast<int>(std::ranges::max_element(row) - row.begin());
        hits += best == data.labels[i];
    }
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

// Cross-entropy of one sample; accumulates d(loss)/d(params) scaled by `scale`.
inline double backprop_sample(const Network& net, std::span<const double> x, int label, double scale,
                              Gradients& grads) {
    const std::size_t depth = net.num_layers();
    const SampleTrace t = forward_sample(net, x, depth);
    const auto& probs = t.post.back();
    const double loss = -std::log(std::max(probs[static_cast<std::size_t>(label)], 1e-300));

    std::vector<double> delta(probs.size());
    for (std::size_t k = 0; k < probs.size(); ++k) {
        delta[k] = scale * (probs[k] - (static_cast<int>(k) == label ? 1.0 : 0.0));
    }
    for (std::size_t l = depth; l-- > 0;) {
        const auto& layer = net.layer(l);
        if (l + 1 != depth && layer.activation == Activation::relu) {
            for (std::size_t n = 0; n < delta.size(); ++n) {
                if (t.pre[l][n] <= 0.0) delta[n] = 0.0;
            }
        }
        const std::span<const double> in = l == 0 ? x : std::span<const double>(t.post[l - 1]);
        auto& g = grads[l];
        std::vector<double> prev(layer.in_dim(), 0.0);
        for (std::size_t o = 0; o < layer.out_dim(); ++o) {
            const double d = delta[o];
            if (d == 0.0) continue;
            g.biases[o] += d;
            auto gw = g.weights.row(o);
            const auto w = layer.weights.row(o);
            for (std::size_t i = 0; i < in.size(); ++i) {
                gw[i] += d * in[i];
                prev[i] += d * static_cast<double>(w[i]);
            }
        }
        delta = std::move(prev);
    }
    return loss;
}

inline Network train(const Network& initial, const Dataset& data, const TrainParams& hp, TrainLog* log = nullptr) {
    data.validate();
    if (!(hp.lr > 0.0)) throw ValidationError("learning rate must be positive");
    if (hp.batch_size == 0) throw ValidationError("batch_size must be positive");
    if (initial.num_layers() == 0 || initial.layers().back().activation != Activation::softmax) {
        throw ValidationError("training requires a softmax output layer");
    }
    if (data.inputs.cols() != initial.input_dim()) throw ShapeError("dataset width does not match network input_dim");

    Network net = initial;
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> x(net.input_dim());
    Rng rng(hp.seed);

    for (int epoch = 0; epoch < hp.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += hp.batch_size) {
            const std::size_t end = std::min(order.size(), start + hp.batch_size);
            const double scale = 1.0 / static_cast<double>(end - start);
            Gradients grads = zero_gradients(net);
            double batch_loss = 0.0;
            for (std::size_t k = start; k < end; ++k) {
                std::ranges::copy(data.inputs.row(order[k]), x.begin());
                batch_loss += scale * backprop_sample(net, x, data.labels[order[k]], scale, grads);
            }
            if (hp.l2 > 0.0) {
                for (std::size_t l = 0; l < net.num_layers(); ++l) {
                    const auto& w = net.layer(l).weights.data();
                    auto& gw = grads[l].weights.data();
                    for (std::size_t i = 0; i < w.size(); ++i) {
                        batch_loss += 0.5 * hp.l2 * double(w[i]) * double(w[i]);
                        gw[i] += hp.l2 * double(w[i]);
                    }
                }
            }
            if (hp.extra_loss) batch_loss += hp.extra_loss(net, grads);
            if (!std::isfinite(batch_loss)) throw DivergenceError("non-finite training loss", epoch);

            for (std::size_t l = 0; l < net.num_layers(); ++l) {
                auto& layer = net.layer(l);
                auto& w = layer.weights.data();
                const auto& gw = grads[l].weights.data();
                for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<float>(w[i] - hp.lr * gw[i]);
                for (std::size_t o = 0; o < layer.biases.size(); ++o) {
                    layer.biases[o] = static_cast<float>(layer.biases[o] - hp.lr * grads[l].biases[o]);
                }
            }
            epoch_loss += batch_loss;
            ++batches;
        }
        epoch_loss /= static_cast<double>(batches);
        if (!std::isfinite(epoch_loss)) throw DivergenceError("non-finite training loss", epoch);
        if (log) log->epoch_loss.push_back(epoch_loss);
    }
    if (hp.epochs > 0) {
        net.metadata["optimizer"] = "sgd";
        net.metadata["train_seed"] = std::to_string(hp.seed);
    }
    return net;
}

inline constexpr double kFinetuneLr = 0.01;

// Adversarial tuning of a copy; the source network is untouched.
inline Network finetune_variant(const Network& net, const Dataset& data, int epochs, std::uint64_t seed,
                                double lr = kFinetuneLr) {
    TrainParams hp;
    hp.epochs = epochs;
    hp.lr = lr;
    hp.seed = seed;
    return train(net, data, hp);
}

// Indices of the floor(fraction * N) neurons with the smallest L1 incoming
// weight norm. Equal norms are ordered by a seeded random key.
inline std::vector<std::size_t> smallest_neurons(const DenseLayer& layer, double fraction, std::uint64_t seed) {
    if (!(fraction >= 0.0 && fraction < 1.0)) throw ValidationError("prune fraction must lie in [0, 1)");
    const std::size_t n = layer.out_dim();
    const auto count = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
    struct Entry {
        double norm;
        std::uint64_t key;
        std::size_t index;
    };
    Rng rng(seed);
    std::vector<Entry> entries;
    for (std::size_t i = 0; i < n; ++i) {
        double norm = 0.0;
        for (float w : layer.weights.row(i)) norm += std::abs(double(w));
        entries.push_back({norm, rng.next_u64(), i});
    }
    std::ranges::sort(entries, [](const Entry& a, const Entry& b) {
        return a.norm != b.norm ? a.norm < b.norm : a.key < b.key;
    });
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < count; ++i) out.push_back(entries[i].index);
    std::ranges::sort(out);
    return out;
}

// Zeroes the incoming weight row and bias of the weakest neurons.
inline Network prune_variant(const Network& net, std::string_view layer_name, double fraction, std::uint64_t seed) {
    const std::size_t l = net.layer_index(layer_name);
    Network out = net;
    auto& layer = out.layer(l);
    for (std::size_t i : smallest_neurons(layer, fraction, seed)) {
        std::ranges::fill(layer.weights.row(i), 0.0f);
        layer.biases[i] = 0.0f;
    }
    return out;
}

}  // namespace nalign
