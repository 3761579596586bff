#pragma once

// Neuron coding: rank-quantile centroids over a layer's output distribution,
// the code-capacity bound, random minimum-distance codebooks, and the two
// nearest-neighbour transcriptions (output -> symbol, code -> neuron).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "binary_io.hpp"
#include "errors.hpp"
#include "matrix.hpp"
#include "random.hpp"

namespace nalign {

struct CentroidSet {
    std::vector<double> centroids;   // K values, strictly ascending
    std::vector<double> boundaries;  // K-1 fold edges

    std::size_t k() const noexcept { return centroids.size(); }
    double gap() const { return centroids.size() < 2 ? 0.0 : centroids[1] - centroids[0]; }

    bool operator==(const CentroidSet&) const = default;
};

// Pools every value, sorts, and splits the sorted sequence into K rank folds;
// fold k (0-based) holds sorted positions [ceil(Mk/K), ceil(M(k+1)/K)).
// Each centroid is its fold's mean; boundaries sit halfway between the
// largest value of one fold and the smallest of the next.
inline CentroidSet compute_centroids(std::span<const double> values, std::size_t k) {
    const std::size_t m = values.size();
    if (k < 1 || k > m) {
        throw ValidationError("K must lie in [1, " + std::to_string(m) + "] for " + std::to_string(m) +
                              " pooled outputs, got " + std::to_string(k));
    }
    std::vector<double> sorted(values.begin(), values.end());
    if (!std::ranges::all_of(sorted, [](double v) { return std::isfinite(v); })) {
        throw ValidationError("layer outputs contain non-finite values");
    }
    std::ranges::sort(sorted);
    auto edge = [&](std::size_t fold) { return (m * fold + k - 1) / k; };  // ceil(m*fold/k)

    CentroidSet cs;
    for (std::size_t f = 0; f < k; ++f) {
        const std::size_t lo = edge(f), hi = edge(f + 1);
        double sum = 0.0;
        for (std::size_t i = lo; i < hi; ++i) sum += sorted[i];
        cs.centroids.push_back(sum / static_cast<double>(hi - lo));
        if (f + 1 < k) cs.boundaries.push_back(0.5 * (sorted[hi - 1] + sorted[hi]));
    }
    for (std::size_t f = 1; f < k; ++f) {
        if (!(cs.centroids[f] > cs.centroids[f - 1])) {
            throw ValidationError("output distribution too degenerate for " + std::to_string(k) +
                                  " distinct centroids");
        }
    }
    return cs;
}

inline CentroidSet compute_centroids(const MatrixD& outputs, std::size_t k) {
    return compute_centroids(std::span<const double>(outputs.data()), k);
}

// Closest centroid; equidistant values go to the lower index.
inline std::size_t nearest_centroid(double value, const CentroidSet& cs) {
    std::size_t best = 0;
    double best_d = std::abs(value - cs.centroids[0]);
    for (std::size_t k = 1; k < cs.k(); ++k) {
        const double d = std::abs(value - cs.centroids[k]);
        if (d < best_d) {
            best_d = d;
            best = k;
        }
    }
    return best;
}

// Fold containing `value` according to the stored boundaries.
inline std::size_t fold_of(double value, const CentroidSet& cs) {
    return static_cast<std::size_t>(std::ranges::upper_bound(cs.boundaries, value) - cs.boundaries.begin());
}

// Left-hand side of the capacity condition:
// N * sum_{t=1..t_corrupted} C(T, t) * k_corrupted^t <= K^T.
inline bool capacity_holds(std::uint64_t n, std::uint64_t t, std::uint64_t k, std::uint64_t k_corrupted,
                           std::uint64_t t_corrupted) {
    using boost::multiprecision::cpp_int;
    const cpp_int rhs = boost::multiprecision::pow(cpp_int(k), static_cast<unsigned>(t));
    cpp_int sum = 0, binom = 1, kc_pow = 1;
    for (std::uint64_t i = 1; i <= t_corrupted; ++i) {
        binom = binom * (t - i + 1) / i;
        kc_pow *= k_corrupted;
        sum += binom * kc_pow;
    }
    return cpp_int(n) * sum <= rhs;
}

// Largest T_corrupted <= T satisfying the capacity condition, or 0.
inline std::uint64_t max_correctable(std::uint64_t n, std::uint64_t t, std::uint64_t k, std::uint64_t k_corrupted) {
    if (n < 1 || t < 1 || k < 2 || k_corrupted < 1) {
        throw ValidationError("max_correctable needs N >= 1, T >= 1, K >= 2, K_corrupted >= 1");
    }
    // The left side grows with t_corrupted, so a linear scan stops at the first failure.
    std::uint64_t best = 0;
    while (best < t && capacity_holds(n, t, k, k_corrupted, best + 1)) ++best;
    return best;
}

using SymbolMatrix = Matrix<std::uint8_t>;

struct Codebook {
    std::size_t n = 0;
    std::size_t t = 0;
    std::size_t k = 2;
    SymbolMatrix codewords;  // n x t
    std::size_t d_min = 0;
    std::uint64_t seed = 0;

    std::span<const std::uint8_t> word(std::size_t i) const { return codewords.row(i); }
    // Guaranteed decoding radius.
    std::size_t radius() const { return d_min == 0 ? 0 : (d_min - 1) / 2; }

    bool operator==(const Codebook&) const = default;
};

inline std::size_t hamming(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
    std::size_t d = 0;
    for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i];
    return d;
}

inline std::size_t l1_distance(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
    std::size_t d = 0;
    for (std::size_t i = 0; i < a.size(); ++i) d += a[i] > b[i] ? a[i] - b[i] : b[i] - a[i];
    return d;
}

inline std::size_t min_pairwise_distance(const SymbolMatrix& words) {
    if (words.rows() < 2) return words.cols();
    std::size_t d = std::numeric_limits<std::size_t>::max();
    for (std::size_t i = 0; i < words.rows(); ++i) {
        for (std::size_t j = i + 1; j < words.rows(); ++j) d = std::min(d, hamming(words.row(i), words.row(j)));
    }
    return d;
}

struct CodebookBudget {
    int restarts = 4;
    int candidates_per_word = 4000;
};

// Seeded random codewords kept only if they sit at Hamming distance
// >= d_min_target from every accepted word.
inline Codebook generate_codebook(std::size_t n, std::size_t t, std::size_t k, std::size_t d_min_target,
                                  std::uint64_t seed, CodebookBudget budget = {}) {
    if (n < 1 || t < 1 || k < 2 || k > 256) throw ValidationError("codebook needs N >= 1, T >= 1, 2 <= K <= 256");
    if (d_min_target > t) throw CapacityError("d_min " + std::to_string(d_min_target) + " exceeds code length T");
    for (int attempt = 0; attempt < budget.restarts; ++attempt) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(attempt)));
        SymbolMatrix words(n, t);
        std::vector<std::uint8_t> cand(t);
        std::size_t placed = 0;
        bool stuck = false;
        while (placed < n && !stuck) {
            int tries = 0;
            for (;;) {
                for (auto& s : cand) s = static_cast<std::uint8_t>(rng.below(k));
                bool ok = true;
                for (std::size_t j = 0; j < placed && ok; ++j) {
                    const std::size_t d = hamming(cand, words.row(j));
                    ok = d >= d_min_target && d > 0;
                }
                if (ok) {
                    std::ranges::copy(cand, words.row(placed).begin());
                    ++placed;
                    break;
                }
                if (++tries >= budget.candidates_per_word) {
                    stuck = true;
                    break;
                }
            }
        }
        if (placed == n) {
            const std::size_t d = min_pairwise_distance(words);
            return Codebook{n, t, k, std::move(words), d, seed};
        }
    }
    throw CapacityError("could not place " + std::to_string(n) + " codewords of length " + std::to_string(t) +
                        " at minimum distance " + std::to_string(d_min_target) +
                        "; raise T or lower d_min");
}

struct CodebookChoice {
    Codebook codebook;
    std::size_t requested_d_min = 0;  // 2 * max_correctable + 1, capped at T
    bool fell_back = false;
};

// Tries the capacity-derived distance first, then binary-searches the largest
// distance the generator reaches within its budget.
inline CodebookChoice default_codebook(std::size_t n, std::size_t t, std::size_t k, std::size_t k_corrupted,
                                       std::uint64_t seed, CodebookBudget budget = {}) {
    const std::size_t requested = std::min<std::size_t>(2 * max_correctable(n, t, k, k_corrupted) + 1, t);
    try {
        return {generate_codebook(n, t, k, requested, seed, budget), requested, false};
    } catch (const CapacityError&) {
    }
    std::size_t lo = 1, hi = requested - 1;  // lo always feasible once verified
    std::optional<Codebook> best;
    while (lo <= hi) {
        const std::size_t mid = lo + (hi - lo) / 2;
        try {
            best = generate_codebook(n, t, k, mid, seed, budget);
            lo = mid + 1;
        } catch (const CapacityError&) {
            if (mid == 1) break;
            hi = mid - 1;
        }
    }
    if (!best) throw CapacityError("no codebook of " + std::to_string(n) + " distinct words fits in T=" + std::to_string(t));
    return {std::move(*best), requested, true};
}

struct Decoded {
    std::size_t index = 0;
    std::size_t distance = 0;
};

// Codeword at minimum symbol-wise L1 distance; ties go to the lowest index.
inline Decoded decode_codeword(std::span<const std::uint8_t> observed, const Codebook& cb) {
    if (observed.size() != cb.t) throw ShapeError("observed code length does not match codebook T");
    Decoded best{0, std::numeric_limits<std::size_t>::max()};
    for (std::size_t i = 0; i < cb.n; ++i) {
        const std::size_t d = l1_distance(observed, cb.word(i));
        if (d < best.distance) best = {i, d};
    }
    return best;
}

inline std::size_t bits_per_symbol(std::size_t k) {
    std::size_t bits = 1;
    while ((std::size_t{1} << bits) < k) ++bits;
    return bits;
}

inline std::vector<std::uint8_t> serialize_codebook(const Codebook& cb) {
    ByteWriter body;
    body.u32(static_cast<std::uint32_t>(cb.n));
    body.u32(static_cast<std::uint32_t>(cb.t));
    body.u16(static_cast<std::uint16_t>(cb.k));
    body.u32(static_cast<std::uint32_t>(cb.d_min));
    body.u64(cb.seed);
    const std::size_t bps = bits_per_symbol(cb.k);
    std::vector<std::uint8_t> packed((cb.codewords.size() * bps + 7) / 8, 0);
    std::size_t bit = 0;
    for (std::uint8_t s : cb.codewords.data()) {
        for (std::size_t b = 0; b < bps; ++b, ++bit) {
            if ((s >> b) & 1u) packed[bit / 8] |= static_cast<std::uint8_t>(1u << (bit % 8));
        }
    }
    body.bytes(packed);
    return frame_container(static_cast<std::uint16_t>(RecordTag::codebook), body);
}

inline Codebook deserialize_codebook(std::span<const std::uint8_t> bytes) {
    ByteReader in = open_record(bytes, RecordTag::codebook);
    Codebook cb;
    cb.n = in.u32();
    cb.t = in.u32();
    const std::size_t k_at = in.offset();
    cb.k = in.u16();
    cb.d_min = in.u32();
    cb.seed = in.u64();
    if (cb.k < 2 || cb.k > 256) throw FormatError("codebook alphabet out of range", k_at);
    const std::size_t bps = bits_per_symbol(cb.k);
    const std::size_t symbols = cb.n * cb.t;
    const auto packed = in.bytes((symbols * bps + 7) / 8);
    cb.codewords = SymbolMatrix(cb.n, cb.t);
    std::size_t bit = 0;
    for (auto& s : cb.codewords.data()) {
        std::uint8_t v = 0;
        for (std::size_t b = 0; b < bps; ++b, ++bit) v |= static_cast<std::uint8_t>(((packed[bit / 8] >> (bit % 8)) & 1u) << b);
        if (v >= cb.k) throw FormatError("codebook symbol out of range", in.offset());
        s = v;
    }
    in.expect_end();
    return cb;
}

inline std::string codebook_hash(const Codebook& cb) { return sha256_hex(serialize_codebook(cb)); }

inline void write_centroids(ByteWriter& w, const CentroidSet& cs) {
    w.u16(static_cast<std::uint16_t>(cs.k()));
    for (double c : cs.centroids) w.f64(c);
    for (double b : cs.boundaries) w.f64(b);
}

inline CentroidSet read_centroids(ByteReader& in) {
    CentroidSet cs;
    const std::size_t at = in.offset();
    const std::uint16_t k = in.u16();
    if (k < 1) throw FormatError("empty centroid set", at);
    for (std::uint16_t i = 0; i < k; ++i) cs.centroids.push_back(in.f64());
    for (std::uint16_t i = 0; i + 1 < k; ++i) cs.boundaries.push_back(in.f64());
    return cs;
}

inline std::vector<std::uint8_t> serialize_centroids(const CentroidSet& cs) {
    ByteWriter body;
    write_centroids(body, cs);
    return frame_container(static_cast<std::uint16_t>(RecordTag::centroids), body);
}

inline CentroidSet deserialize_centroids(std::span<const std::uint8_t> bytes) {
    ByteReader in = open_record(bytes, RecordTag::centroids);
    CentroidSet cs = read_centroids(in);
    in.expect_end();
    return cs;
}

}  // namespace nalign
