#pragma once

// White-box watermark backends. A backend is any type offering
// embed(net, record, data, params) and verify(net, record); the aligner
// depends only on that contract. UchidaBackend projects the flattened
// weights of one layer through a secret key matrix and reads one bit per
// key row from the projection's sign.

#include <cmath>
#include <concepts>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "binary_io.hpp"
#include "network.hpp"
#include "random.hpp"
#include "training.hpp"

namespace nalign {

struct OVResult {
    bool accepted = false;
    double ber = 1.0;
    std::vector<std::uint8_t> bits;
};

struct EmbedParams {
    int epochs = 10;
    double lr = 0.02;
    double strength = 0.05;  // regularizer weight
    int max_extra_rounds = 20;
    std::uint64_t seed = 0;
};

template <typename B>
concept WatermarkBackend = requires(const B& backend, const Network& net, const typename B::Record& record,
                                    const Dataset& data, const EmbedParams& hp) {
    { backend.embed(net, record, data, hp) } -> std::same_as<Network>;
    { backend.verify(net, record) } -> std::same_as<OVResult>;
};

struct WatermarkRecord {
    std::string layer_name;
    MatrixF key_matrix;                 // bits x flattened weight count
    std::vector<std::uint8_t> payload;  // one 0/1 entry per key row
    double threshold = 0.15;
    std::uint64_t seed = 0;

    bool operator==(const WatermarkRecord&) const = default;
};

inline constexpr std::size_t kDefaultPayloadBits = 32;
inline constexpr double kDefaultBerThreshold = 0.15;

// Standard normal key entries and a uniformly random payload.
inline WatermarkRecord make_watermark_record(const Network& net, std::string_view layer_name, std::uint64_t seed,
                                             std::size_t bits = kDefaultPayloadBits,
                                             double threshold = kDefaultBerThreshold) {
    if (bits == 0) throw ValidationError("payload must carry at least one bit");
    if (!(threshold > 0.0 && threshold <= 1.0)) throw ValidationError("BER threshold must lie in (0, 1]");
    const auto& layer = net.layer(net.layer_index(layer_name));
    Rng rng(seed);
    WatermarkRecord r{std::string(layer_name), MatrixF(bits, layer.weights.size()), {}, threshold, seed};
    for (float& k : r.key_matrix.data()) k = static_cast<float>(rng.normal());
    for (std::size_t b = 0; b < bits; ++b) r.payload.push_back(static_cast<std::uint8_t>(rng.below(2)));
    return r;
}

class UchidaBackend {
public:
    using Record = WatermarkRecord;

    static void check_shape(const Network& net, const Record& record) {
        const auto idx = net.find_layer(record.layer_name);
        if (!idx) throw TamperError("watermarked layer '" + record.layer_name + "' is missing");
        const auto count = net.layer(*idx).weights.size();
        if (count != record.key_matrix.cols()) {
            throw TamperError("layer '" + record.layer_name + "' has " + std::to_string(count) +
                              " weights, key expects " + std::to_string(record.key_matrix.cols()));
        }
        if (record.payload.size() != record.key_matrix.rows()) {
            throw ValidationError("watermark payload length does not match key rows");
        }
    }

    // Projection of the flattened layer weights through each key row.
    static std::vector<double> projections(const Network& net, const Record& record) {
        check_shape(net, record);
        const auto& w = net.layer(net.layer_index(record.layer_name)).weights.data();
        std::vector<double> out(record.key_matrix.rows());
        for (std::size_t b = 0; b < out.size(); ++b) {
            const auto k = record.key_matrix.row(b);
            double acc = 0.0;
            for (std::size_t i = 0; i < w.size(); ++i) acc += double(k[i]) * double(w[i]);
            out[b] = acc;
        }
        return out;
    }

    // A projection of exactly zero reads as bit 1.
    OVResult verify(const Network& net, const Record& record) const {
        const auto proj = projections(net, record);
        OVResult res;
        std::size_t errors = 0;
        for (std::size_t b = 0; b < proj.size(); ++b) {
            const std::uint8_t bit = proj[b] >= 0.0 ? 1 : 0;
            res.bits.push_back(bit);
            errors += bit != record.payload[b];
        }
        res.ber = static_cast<double>(errors) / static_cast<double>(proj.size());
        res.accepted = res.ber <= record.threshold;
        return res;
    }

    // Fine-tunes with a binary cross-entropy regularizer pulling
    // sigmoid(key . w) toward the payload, until every bit reads back.
    Network embed(const Network& net, const Record& record, const Dataset& data, const EmbedParams& hp) const {
        check_shape(net, record);
        const std::size_t layer = net.layer_index(record.layer_name);
        TrainParams tp;
        tp.epochs = hp.epochs;
        tp.lr = hp.lr;
        tp.seed = hp.seed;
        tp.extra_loss = [&record, layer, strength = hp.strength](const Network& n, Gradients& grads) {
            const auto& w = n.layer(layer).weights.data();
            auto& gw = grads[layer].weights.data();
            double loss = 0.0;
            for (std::size_t b = 0; b < record.key_matrix.rows(); ++b) {
                const auto k = record.key_matrix.row(b);
                double s = 0.0;
                for (std::size_t i = 0; i < w.size(); ++i) s += double(k[i]) * double(w[i]);
                const double target = record.payload[b];
                // log(1 + e^s) - target * s, written stably
                loss += strength * (std::max(s, 0.0) + std::log1p(std::exp(-std::abs(s))) - target * s);
                const double p = 1.0 / (1.0 + std::exp(-s));
                const double coef = strength * (p - target);
                for (std::size_t i = 0; i < w.size(); ++i) gw[i] += coef * double(k[i]);
            }
            return loss;
        };
        Network out = train(net, data, tp);
        for (int round = 0; round < hp.max_extra_rounds && verify(out, record).ber > 0.0; ++round) {
            tp.epochs = 1;
            tp.seed = derive_seed(hp.seed, static_cast<std::uint64_t>(round) + 1);
            out = train(out, data, tp);
        }
        if (verify(out, record).ber > 0.0) throw NumericError("watermark embedding did not converge to BER 0");
        out.metadata["watermark"] = "uchida";
        return out;
    }
};

static_assert(WatermarkBackend<UchidaBackend>);

inline std::vector<std::uint8_t> serialize_watermark(const WatermarkRecord& r) {
    ByteWriter body;
    body.str(r.layer_name);
    body.u32(static_cast<std::uint32_t>(r.key_matrix.rows()));
    body.u32(static_cast<std::uint32_t>(r.key_matrix.cols()));
    body.u64(r.seed);
    body.f64(r.threshold);
    for (float k : r.key_matrix.data()) body.f32(k);
    std::vector<std::uint8_t> packed((r.payload.size() + 7) / 8, 0);
    for (std::size_t b = 0; b < r.payload.size(); ++b) {
        if (r.payload[b]) packed[b / 8] |= static_cast<std::uint8_t>(1u << (b % 8));
    }
    body.bytes(packed);
    return frame_container(static_cast<std::uint16_t>(RecordTag::watermark), body);
}

inline WatermarkRecord deserialize_watermark(std::span<const std::uint8_t> bytes) {
    ByteReader in = open_record(bytes, RecordTag::watermark);
    WatermarkRecord r;
    r.layer_name = in.str();
    const std::uint32_t rows = in.u32();
    const std::uint32_t cols = in.u32();
    r.seed = in.u64();
    r.threshold = in.f64();
    if (std::uint64_t(rows) * cols * 4 > in.remaining()) throw FormatError("key matrix truncated", in.offset());
    r.key_matrix = MatrixF(rows, cols);
    for (float& k : r.key_matrix.data()) k = in.f32();
    const auto packed = in.bytes((rows + 7) / 8);
    for (std::uint32_t b = 0; b < rows; ++b) r.payload.push_back((packed[b / 8] >> (b % 8)) & 1u);
    in.expect_end();
    return r;
}

inline void save_watermark(const WatermarkRecord& r, const std::filesystem::path& path) {
    write_file(path, serialize_watermark(r));
}
inline WatermarkRecord load_watermark(const std::filesystem::path& path) {
    return deserialize_watermark(read_file(path));
}

}  // namespace nalign
