#include <gtest/gtest.h>

#include <map>

#include "fixtures.hpp"

using namespace nalign;
using nalign::testing::small_data;
using nalign::testing::small_trained;

TEST(Permutation, Helpers) {
    const Permutation p{2, 0, 1};
    EXPECT_TRUE(is_bijection(p));
    EXPECT_FALSE(is_bijection(Permutation{0, 0, 1}));
    EXPECT_FALSE(is_bijection(Permutation{0, 3, 1}));
    EXPECT_EQ(compose(p, inverse(p)), identity_permutation(3));
    EXPECT_EQ(compose(inverse(p), p), identity_permutation(3));
}

TEST(Permute, IdentityIsBitExact) {
    const Network net = small_trained();
    EXPECT_EQ(permute_neurons(net, {"hidden1", identity_permutation(16), 0}), net);
}

TEST(Permute, ThreeCycleKeepsFunction) {
    const Network net = small_trained();
    // cycle (2,3,4) in 1-indexed notation
    Permutation p = identity_permutation(16);
    p[1] = 2;
    p[2] = 3;
    p[3] = 1;
    const Network moved = permute_neurons(net, {"hidden1", p, 0});
    EXPECT_FALSE(moved == net);
    EXPECT_EQ(moved.layer(0).weights.row(2)[0], net.layer(0).weights.row(1)[0]);
    const MatrixF probes = random_probes(200, 8, 3);
    EXPECT_LE(functional_drift(net, moved, probes), 1e-6);
}

TEST(Permute, CompositionMatches) {
    const Network net = small_trained();
    const auto p = random_permutation("hidden2", 12, 1);
    const auto q = random_permutation("hidden2", 12, 2);
    const Network twice = permute_neurons(permute_neurons(net, p), q);
    const Network once = permute_neurons(net, {"hidden2", compose(p.perm, q.perm), 0});
    EXPECT_EQ(twice, once);
}

TEST(Permute, Errors) {
    const Network net = small_trained();
    EXPECT_THROW(permute_neurons(net, {"output", identity_permutation(4), 0}), ValidationError);
    EXPECT_THROW(permute_neurons(net, {"hidden1", identity_permutation(15), 0}), ValidationError);
    EXPECT_THROW(permute_neurons(net, {"hidden1", Permutation(16, 0), 0}), ValidationError);
    EXPECT_THROW(permute_neurons(net, {"hidden9", identity_permutation(16), 0}), ValidationError);
}

TEST(RandomPermutation, SmallSizes) {
    EXPECT_EQ(random_permutation("h", 1, 5).perm, identity_permutation(1));
    for (std::uint64_t s = 0; s < 20; ++s) EXPECT_EQ(random_permutation("h", 2, s).perm, (Permutation{1, 0}));
    EXPECT_THROW(random_permutation("h", 0, 1), ValidationError);
}

TEST(RandomPermutation, UniformOverNonIdentity) {
    std::map<Permutation, int> counts;
    const int draws = 10000;
    for (int s = 0; s < draws; ++s) ++counts[random_permutation("h", 4, static_cast<std::uint64_t>(s)).perm];
    EXPECT_EQ(counts.size(), 23u);
    EXPECT_FALSE(counts.contains(identity_permutation(4)));
    const double expected = draws / 23.0;
    const double sigma = std::sqrt(expected * (1.0 - 1.0 / 23.0));
    double chi2 = 0.0;
    for (const auto& [p, c] : counts) {
        EXPECT_NEAR(c, expected, 3 * sigma);
        chi2 += (c - expected) * (c - expected) / expected;
    }
    EXPECT_LT(chi2, 48.0);  // 99.9% quantile at 22 degrees of freedom
}

TEST(Rescale, UnitScalesAreIdentity) {
    const Network net = small_trained();
    const std::vector<double> ones(12, 1.0);
    EXPECT_EQ(attack_rescale(net, "hidden2", ones), net);
}

TEST(Rescale, PreservesFunction) {
    const Network net = small_trained();
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto scales = random_scales(12, seed);
        for (double s : scales) {
            EXPECT_GE(s, 0.5);
            EXPECT_LE(s, 2.0);
        }
        EXPECT_LE(functional_drift(net, attack_rescale(net, "hidden2", scales), random_probes(500, 8, seed)), 1e-5);
    }
}

TEST(Rescale, Errors) {
    const Network net = small_trained();
    EXPECT_THROW(attack_rescale(net, "hidden2", std::vector<double>(11, 1.0)), ValidationError);
    std::vector<double> bad(12, 1.0);
    bad[3] = -1.0;
    EXPECT_THROW(attack_rescale(net, "hidden2", bad), ValidationError);
    EXPECT_THROW(attack_rescale(net, "output", std::vector<double>(4, 1.0)), ValidationError);
}

TEST(Ftp, ZeroEpochsIsPlainPermutation) {
    const Network net = small_trained();
    const auto spec = random_permutation("hidden2", 12, 4);
    EXPECT_EQ(attack_ftp(net, small_data(0), 0, spec, 1), permute_neurons(net, spec));
}

TEST(Ftp, ChangesOutputsButKeepsAccuracy) {
    const auto& a = nalign::testing::desk();
    const auto spec = random_permutation("hidden2", 32, 4);
    const Network attacked = attack_ftp(a.host.model, a.data.train, 1, spec, 9);
    EXPECT_GT(functional_drift(a.host.model, attacked, random_probes(200, 64, 1)), 0.0);
    EXPECT_NEAR(accuracy(attacked, a.data.test), accuracy(a.host.model, a.data.test), 0.05);
    EXPECT_FALSE(UchidaBackend{}.verify(attacked, a.host.record).accepted);
}

TEST(Npp, PrunesThenPermutes) {
    const Network net = small_trained();
    const auto spec = random_permutation("hidden2", 12, 4);
    const Network attacked = attack_npp(net, 0.25, spec, 3);
    EXPECT_EQ(attacked, permute_neurons(prune_variant(net, "hidden2", 0.25, 3), spec));
    std::size_t zero_rows = 0;
    for (std::size_t r = 0; r < 12; ++r) {
        const auto row = attacked.layer(1).weights.row(r);
        zero_rows += std::ranges::all_of(row, [](float w) { return w == 0.f; });
    }
    EXPECT_EQ(zero_rows, 3u);
}

TEST(AttackKind, ParseAndPrint) {
    for (auto k : {AttackKind::np, AttackKind::ftp, AttackKind::npp, AttackKind::rescale}) {
        EXPECT_EQ(parse_attack_kind(to_string(k)), k);
    }
    EXPECT_EQ(parse_attack_kind("npp"), AttackKind::npp);
    EXPECT_THROW(parse_attack_kind("xyz"), ValidationError);
}

TEST(Drift, ZeroForSameNetwork) {
    const Network net = small_trained();
    EXPECT_EQ(functional_drift(net, net, random_probes(50, 8, 1)), 0.0);
}
