#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "nalign/assignment.hpp"
#include "nalign/coding.hpp"

using namespace nalign;

namespace {

// Sort, cut into K equal-rank groups, average each group.
std::vector<double> oracle_centroids(std::vector<double> v, std::size_t k) {
    std::ranges::sort(v);
    std::vector<double> out;
    const std::size_t per = v.size() / k;
    for (std::size_t f = 0; f < k; ++f) {
        out.push_back(std::accumulate(v.begin() + long(f * per), v.begin() + long((f + 1) * per), 0.0) / double(per));
    }
    return out;
}

CentroidSet two_centroids(double c0, double c1) { return CentroidSet{{c0, c1}, {0.5 * (c0 + c1)}}; }

}  // namespace

TEST(Centroids, EightValuesTwoFolds) {
    const std::vector<double> v{3, 7, 0, 5, 1, 6, 2, 4};
    const auto cs = compute_centroids(v, 2);
    EXPECT_EQ(cs.centroids, oracle_centroids(v, 2));
    EXPECT_EQ(cs.centroids, (std::vector<double>{1.5, 5.5}));
    EXPECT_EQ(cs.boundaries, (std::vector<double>{3.5}));
}

TEST(Centroids, SingleFoldIsMean) {
    const std::vector<double> v{1, 2, 3, 10};
    const auto cs = compute_centroids(v, 1);
    ASSERT_EQ(cs.k(), 1u);
    EXPECT_DOUBLE_EQ(cs.centroids[0], 4.0);
    EXPECT_TRUE(cs.boundaries.empty());
}

TEST(Centroids, RandomAgainstOracle) {
    Rng rng(3);
    for (std::size_t k : {2u, 3u, 4u, 5u}) {
        std::vector<double> v(60 * k);
        for (auto& x : v) x = rng.normal();
        const auto cs = compute_centroids(v, k);
        const auto want = oracle_centroids(v, k);
        for (std::size_t f = 0; f < k; ++f) EXPECT_NEAR(cs.centroids[f], want[f], 1e-12);
        for (std::size_t f = 0; f + 1 < k; ++f) {
            EXPECT_GT(cs.boundaries[f], cs.centroids[f]);
            EXPECT_LT(cs.boundaries[f], cs.centroids[f + 1]);
        }
    }
}

TEST(Centroids, UnequalFoldsUseFoldMeans) {
    // M=5, K=2: folds hold sorted positions [0,3) and [3,5)
    const std::vector<double> v{0, 1, 2, 10, 20};
    const auto cs = compute_centroids(v, 2);
    EXPECT_DOUBLE_EQ(cs.centroids[0], 1.0);
    EXPECT_DOUBLE_EQ(cs.centroids[1], 15.0);
    EXPECT_DOUBLE_EQ(cs.boundaries[0], 6.0);
}

TEST(Centroids, Errors) {
    const std::vector<double> v{1, 2, 3};
    EXPECT_THROW(compute_centroids(v, 0), ValidationError);
    EXPECT_THROW(compute_centroids(v, 4), ValidationError);
    const std::vector<double> flat{0, 0, 0, 0};
    EXPECT_THROW(compute_centroids(flat, 2), ValidationError);
    const std::vector<double> bad{0, std::nan(""), 1};
    EXPECT_THROW(compute_centroids(bad, 2), ValidationError);
}

TEST(Centroids, NearestWithTies) {
    const auto cs = two_centroids(0.0, 2.5);
    EXPECT_EQ(nearest_centroid(0.3, cs), 0u);
    EXPECT_EQ(nearest_centroid(1.25, cs), 0u);
    EXPECT_EQ(nearest_centroid(100.0, cs), 1u);
    EXPECT_EQ(nearest_centroid(-100.0, cs), 0u);
    EXPECT_EQ(fold_of(0.3, cs), 0u);
    EXPECT_EQ(fold_of(2.0, cs), 1u);
}

TEST(Capacity, PublishedGrid) {
    const std::size_t ts[] = {20, 40, 60, 80, 100, 120, 140, 160};
    const std::uint64_t n64[] = {4, 12, 21, 29, 38, 47, 56, 65};
    const std::uint64_t n128[] = {4, 11, 20, 28, 37, 46, 55, 64};
    for (int i = 0; i < 8; ++i) {
        EXPECT_EQ(max_correctable(64, ts[i], 2, 1), n64[i]) << "T=" << ts[i];
        EXPECT_EQ(max_correctable(128, ts[i], 2, 1), n128[i]) << "T=" << ts[i];
    }
}

TEST(Capacity, SmallCases) {
    EXPECT_EQ(max_correctable(1, 1, 2, 1), 1u);
    EXPECT_EQ(max_correctable(32, 60, 2, 1), 22u);
    // 4 * C(4,1) = 16 <= 16 but 4 * (4 + 6) > 16
    EXPECT_EQ(max_correctable(4, 4, 2, 1), 1u);
    EXPECT_TRUE(capacity_holds(4, 4, 2, 1, 1));
    EXPECT_FALSE(capacity_holds(4, 4, 2, 1, 2));
    EXPECT_EQ(max_correctable(1000, 4, 2, 1), 0u);
    EXPECT_THROW(max_correctable(0, 4, 2, 1), ValidationError);
    EXPECT_THROW(max_correctable(4, 4, 1, 1), ValidationError);
}

TEST(Capacity, MonotoneInT) {
    std::uint64_t prev = 0;
    for (std::uint64_t t = 1; t <= 200; ++t) {
        const auto v = max_correctable(64, t, 2, 1);
        EXPECT_GE(v, prev);
        prev = v;
    }
}

TEST(Codebook, ComplementsAreTheOnlyDistanceSixPairs) {
    int pairs = 0;
    for (unsigned a = 0; a < 64; ++a) {
        for (unsigned b = 0; b < 64; ++b) {
            if (std::popcount(a ^ b) == 6) {
                EXPECT_EQ(b, (~a) & 63u);
                ++pairs;
            }
        }
    }
    EXPECT_EQ(pairs, 64);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Codebook cb = generate_codebook(2, 6, 2, 6, seed, CodebookBudget{8, 200});
        EXPECT_EQ(cb.d_min, 6u);
        for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(cb.codewords(0, i), 1 - cb.codewords(1, i));
    }
}

TEST(Codebook, SingleWordHasDistanceT) {
    const Codebook cb = generate_codebook(1, 9, 2, 9, 4);
    EXPECT_EQ(cb.d_min, 9u);
    EXPECT_EQ(cb.radius(), 4u);
}

TEST(Codebook, MeetsTargetAndIsDeterministic) {
    const Codebook a = generate_codebook(32, 60, 2, 20, 11);
    const Codebook b = generate_codebook(32, 60, 2, 20, 11);
    EXPECT_GE(a.d_min, 20u);
    EXPECT_EQ(a.d_min, min_pairwise_distance(a.codewords));
    EXPECT_EQ(a.codewords, b.codewords);
    EXPECT_EQ(codebook_hash(a), codebook_hash(b));
}

TEST(Codebook, PlotkinBoundRejectsLargeDistance) {
    // Two binary words at distance > T/2 leave no room for a third, so 64
    // words at distance 129 of length 160 cannot exist.
    CodebookBudget small{1, 200};
    EXPECT_THROW(generate_codebook(64, 160, 2, 129, 1, small), CapacityError);
    EXPECT_THROW(generate_codebook(3, 10, 2, 7, 1, small), CapacityError);
    try {
        generate_codebook(64, 160, 2, 129, 1, small);
    } catch (const CapacityError& e) {
        EXPECT_NE(std::string(e.what()).find("raise T"), std::string::npos);
    }
}

TEST(Codebook, FallbackFindsFeasibleDistance) {
    const auto choice = default_codebook(32, 60, 2, 1, 3);
    EXPECT_EQ(choice.requested_d_min, 45u);
    EXPECT_TRUE(choice.fell_back);
    EXPECT_GE(choice.codebook.d_min, 20u);
    EXPECT_LT(choice.codebook.d_min, 31u);  // Plotkin: d <= T/2 for 32 words
}

TEST(Codebook, FallbackAtLargestPublishedSetting) {
    const auto choice = default_codebook(64, 160, 2, 1, 3, CodebookBudget{2, 1000});
    EXPECT_EQ(choice.requested_d_min, 131u);  // 2 * 65 + 1
    EXPECT_TRUE(choice.fell_back);
    EXPECT_GE(choice.codebook.d_min, 50u);
    EXPECT_EQ(choice.codebook.n, 64u);
}

TEST(Codebook, DistanceTargetAboveT) {
    EXPECT_THROW(generate_codebook(2, 5, 2, 6, 1), CapacityError);
}

TEST(Decode, ExactAndNearby) {
    Codebook cb{2, 6, 2, SymbolMatrix(2, 6), 6, 0};
    std::ranges::fill(cb.codewords.row(1), 1);
    for (std::size_t i = 0; i < 2; ++i) {
        const auto d = decode_codeword(cb.word(i), cb);
        EXPECT_EQ(d.index, i);
        EXPECT_EQ(d.distance, 0u);
    }
    const std::vector<std::uint8_t> obs{1, 1, 0, 1, 1, 1};
    const auto d = decode_codeword(obs, cb);
    EXPECT_EQ(d.index, 1u);
    EXPECT_EQ(d.distance, 1u);
    const std::vector<std::uint8_t> tie{1, 1, 1, 0, 0, 0};
    EXPECT_EQ(decode_codeword(tie, cb).index, 0u);
    const std::vector<std::uint8_t> wrong_len{1, 1};
    EXPECT_THROW(decode_codeword(wrong_len, cb), ShapeError);
}

TEST(Decode, CorrectsWithinRadius) {
    const Codebook cb = generate_codebook(32, 60, 2, 25, 8);
    Rng rng(99);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t idx = rng.below(cb.n);
        std::vector<std::uint8_t> w(cb.word(idx).begin(), cb.word(idx).end());
        std::vector<std::size_t> pos(cb.t);
        std::iota(pos.begin(), pos.end(), 0);
        rng.shuffle(pos);
        const std::size_t flips = rng.below(cb.radius() + 1);
        for (std::size_t f = 0; f < flips; ++f) w[pos[f]] ^= 1;
        const auto d = decode_codeword(w, cb);
        ASSERT_EQ(d.index, idx);
        ASSERT_EQ(d.distance, flips);
    }
}

TEST(CodebookIo, RoundTrip) {
    for (std::size_t k : {2u, 3u, 5u}) {
        const Codebook cb = generate_codebook(7, 13, k, 3, 2);
        const auto bytes = serialize_codebook(cb);
        const Codebook back = deserialize_codebook(bytes);
        EXPECT_EQ(back.codewords, cb.codewords);
        EXPECT_EQ(back.d_min, cb.d_min);
        EXPECT_EQ(back.k, k);
        EXPECT_EQ(serialize_codebook(back), bytes);
    }
}

TEST(CentroidIo, RoundTrip) {
    const CentroidSet cs{{0.0, 1.0, 2.5}, {0.5, 1.75}};
    EXPECT_EQ(deserialize_centroids(serialize_centroids(cs)), cs);
    auto bytes = serialize_centroids(cs);
    bytes.pop_back();
    EXPECT_THROW(deserialize_centroids(bytes), FormatError);
}

TEST(Assignment, MatchesBruteForce) {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 1 + rng.below(6);
        Matrix<std::int64_t> cost(n, n);
        for (auto& c : cost.data()) c = static_cast<std::int64_t>(rng.below(20));
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        std::int64_t best = std::numeric_limits<std::int64_t>::max();
        do {
            best = std::min(best, assignment_cost(cost, perm));
        } while (std::next_permutation(perm.begin(), perm.end()));
        const auto got = min_cost_assignment(cost);
        auto sorted = got;
        std::ranges::sort(sorted);
        for (std::size_t i = 0; i < n; ++i) ASSERT_EQ(sorted[i], i);
        EXPECT_EQ(assignment_cost(cost, got), best);
    }
}

TEST(Assignment, RejectsNonSquare) {
    EXPECT_THROW(min_cost_assignment(Matrix<std::int64_t>(2, 3)), ShapeError);
    EXPECT_TRUE(min_cost_assignment(Matrix<std::int64_t>(0, 0)).empty());
}
