#pragma once

// Little-endian byte container shared by every on-disk artifact:
//
//   "NAF1" | u16 version | u16 layer count or record tag | body ... | u32 CRC32
//
// The CRC covers every byte between the magic and the CRC itself. Model files
// put their layer count in the third field; other artifacts put a record tag
// there, taken from a range no model can reach.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <openssl/evp.h>
#include <zlib.h>

#include "errors.hpp"

namespace nalign {

inline constexpr std::array<char, 4> kMagic{'N', 'A', 'F', '1'};
inline constexpr std::uint16_t kFormatVersion = 1;

// Values of the third header field for non-model artifacts.
enum class RecordTag : std::uint16_t {
    watermark = 0xF001,
    codebook = 0xF002,
    triggers = 0xF003,
    centroids = 0xF004,
};
inline constexpr std::uint16_t kFirstRecordTag = 0xF000;

inline std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    return static_cast<std::uint32_t>(::crc32(crc, bytes.data(), static_cast<uInt>(bytes.size())));
}

inline std::string sha256_hex(std::span<const std::uint8_t> bytes) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
        throw Error("SHA-256 digest failed");
    }
    std::ostringstream out;
    for (unsigned i = 0; i < len; ++i) {
        out << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
    }
    return out.str();
}

class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u16(std::uint16_t v) { put_le(v); }
    void u32(std::uint32_t v) { put_le(v); }
    void u64(std::uint64_t v) { put_le(v); }
    void f32(float v) { put_le(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { put_le(std::bit_cast<std::uint64_t>(v)); }
    void str(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        buf_.insert(buf_.end(), s.begin(), s.end());
    }
    void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }

    const std::vector<std::uint8_t>& buffer() const noexcept { return buf_; }

private:
    template <typename U>
    void put_le(U v) {
        for (std::size_t i = 0; i < sizeof(U); ++i) {
            buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
        }
    }
    std::vector<std::uint8_t> buf_;
};

class ByteReader {
public:
    ByteReader(std::span<const std::uint8_t> bytes, std::size_t base_offset)
        : bytes_(bytes), base_(base_offset) {}

    std::uint8_t u8() { return get_le<std::uint8_t>(); }
    std::uint16_t u16() { return get_le<std::uint16_t>(); }
    std::uint32_t u32() { return get_le<std::uint32_t>(); }
    std::uint64_t u64() { return get_le<std::uint64_t>(); }
    float f32() { return std::bit_cast<float>(get_le<std::uint32_t>()); }
    double f64() { return std::bit_cast<double>(get_le<std::uint64_t>()); }
    std::string str() {
        const std::uint32_t n = u32();
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    std::span<const std::uint8_t> bytes(std::size_t n) {
        need(n);
        auto s = bytes_.subspan(pos_, n);
        pos_ += n;
        return s;
    }

    std::size_t offset() const noexcept { return base_ + pos_; }
    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

    void expect_end() const {
        if (pos_ != bytes_.size()) throw FormatError("trailing bytes after payload", offset());
    }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw FormatError("payload truncated", offset());
    }
    template <typename U>
    U get_le() {
        need(sizeof(U));
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) {
            v |= static_cast<U>(static_cast<U>(bytes_[pos_ + i]) << (8 * i));
        }
        pos_ += sizeof(U);
        return v;
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t base_;
    std::size_t pos_ = 0;
};

// Wraps a body into a framed container.
inline std::vector<std::uint8_t> frame_container(std::uint16_t third_field, const ByteWriter& body) {
    ByteWriter payload;
    payload.u16(kFormatVersion);
    payload.u16(third_field);
    payload.bytes(body.buffer());
    const auto& p = payload.buffer();
    std::vector<std::uint8_t> out(kMagic.size() + p.size() + 4);
    std::ranges::copy(kMagic, out.begin());
    std::ranges::copy(p, out.begin() + kMagic.size());
    out.resize(kMagic.size() + p.size());
    const std::uint32_t crc = crc32_of(p);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(crc >> (8 * i)));
    return out;
}

struct ContainerView {
    std::uint16_t version = 0;
    std::uint16_t third_field = 0;
    ByteReader body;
};

// Checks magic, CRC and version; returns a reader over the body.
inline ContainerView open_container(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kMagic.size()) throw FormatError("file shorter than magic", bytes.size());
    if (std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
        throw FormatError("bad magic", 0);
    }
    if (bytes.size() < kMagic.size() + 4 + 4) throw FormatError("header truncated", bytes.size());
    const std::size_t crc_at = bytes.size() - 4;
    auto payload = bytes.subspan(kMagic.size(), crc_at - kMagic.size());
    std::uint32_t stored = 0;
    for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(bytes[crc_at + i]) << (8 * i);
    if (stored != crc32_of(payload)) throw FormatError("CRC mismatch (corrupt or truncated)", crc_at);

    ByteReader header(payload.first(4), kMagic.size());
    ContainerView view{header.u16(), header.u16(), ByteReader(payload.subspan(4), kMagic.size() + 4)};
    if (view.version != kFormatVersion) {
        throw FormatError("unsupported format version " + std::to_string(view.version), kMagic.size());
    }
    return view;
}

inline ByteReader open_record(std::span<const std::uint8_t> bytes, RecordTag tag) {
    auto view = open_container(bytes);
    if (view.third_field != static_cast<std::uint16_t>(tag)) {
        throw FormatError("unexpected record tag " + std::to_string(view.third_field), kMagic.size() + 2);
    }
    return view.body;
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IntegrityError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ValidationError("write failed for " + path.string());
}

}  // namespace nalign
