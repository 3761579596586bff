#pragma once

// Model file: "NAF1" | u16 version | u16 layer count | per layer
// { u32 in_dim, u32 out_dim, u8 activation, f32 weights (row-major), f32 biases }
// | u32 CRC32. All integers and floats little-endian.

#include <filesystem>
#include <vector>

#include "binary_io.hpp"
#include "network.hpp"

namespace nalign {

inline std::vector<std::uint8_t> serialize_model(const Network& net) {
    if (net.num_layers() >= kFirstRecordTag) throw ValidationError("too many layers for the model format");
    ByteWriter body;
    for (const auto& l : net.layers()) {
        body.u32(static_cast<std::uint32_t>(l.in_dim()));
        body.u32(static_cast<std::uint32_t>(l.out_dim()));
        body.u8(static_cast<std::uint8_t>(l.activation));
        for (float w : l.weights.data()) body.f32(w);
        for (float b : l.biases) body.f32(b);
    }
    return frame_container(static_cast<std::uint16_t>(net.num_layers()), body);
}

inline Network deserialize_model(std::span<const std::uint8_t> bytes) {
    auto view = open_container(bytes);
    if (view.third_field == 0 || view.third_field >= kFirstRecordTag) {
        throw FormatError("not a model file (layer count/tag " + std::to_string(view.third_field) + ")", 6);
    }
    ByteReader& in = view.body;
    std::vector<DenseLayer> layers;
    std::size_t input_dim = 0;
    for (std::uint16_t i = 0; i < view.third_field; ++i) {
        const std::size_t at = in.offset();
        const std::uint32_t in_dim = in.u32();
        const std::uint32_t out_dim = in.u32();
        const std::uint8_t act = in.u8();
        if (in_dim == 0 || out_dim == 0) throw FormatError("zero layer dimension", at);
        if (act > static_cast<std::uint8_t>(Activation::softmax)) throw FormatError("unknown activation tag", at + 8);
        if (std::uint64_t(in_dim) * out_dim * 4 > in.remaining()) throw FormatError("payload truncated", in.offset());
        if (i == 0) input_dim = in_dim;
        DenseLayer layer{MatrixF(out_dim, in_dim), std::vector<float>(out_dim), static_cast<Activation>(act)};
        for (float& w : layer.weights.data()) w = in.f32();
        for (float& b : layer.biases) b = in.f32();
        layers.push_back(std::move(layer));
    }
    in.expect_end();
    try {
        return Network(input_dim, std::move(layers));
    } catch (const ShapeError& e) {
        throw FormatError(std::string("inconsistent model: ") + e.what(), 8);
    }
}

inline void save_model(const Network& net, const std::filesystem::path& path) {
    write_file(path, serialize_model(net));
}

inline Network load_model(const std::filesystem::path& path) { return deserialize_model(read_file(path)); }

}  // namespace nalign
