#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "nalign/run_dir.hpp"

using namespace nalign;
using nalign::testing::desk;

namespace {

PipelineArtifacts with_trials(std::size_t trials) {
    PipelineArtifacts a = desk();
    a.config.trials = trials;
    return a;
}

std::filesystem::path fresh_dir(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(p);
    return p;
}

}  // namespace

TEST(Host, TrainedAndWatermarked) {
    const auto& a = desk();
    EXPECT_GE(a.host.accuracy_after_embed, 0.95);
    EXPECT_EQ(UchidaBackend{}.verify(a.host.model, a.host.record).ber, 0.0);
}

TEST(Host, Deterministic) {
    const auto& a = desk();
    const HostModel again = train_host(a.config, make_experiment_data(a.config));
    EXPECT_EQ(serialize_model(again.model), serialize_model(a.host.model));
    EXPECT_EQ(serialize_watermark(again.record), serialize_watermark(a.host.record));
}

TEST(Encode, CentroidsAndCodebook) {
    const auto& a = desk();
    const auto& cs = a.encoding.centroids;
    ASSERT_EQ(cs.k(), 2u);
    EXPECT_LT(std::abs(cs.centroids[0]), 0.1 * cs.centroids[1]);
    EXPECT_EQ(a.encoding.t_corrupted_bound, 22u);
    const Encoding again = encode(a.config, a.reference, a.data.train);
    EXPECT_EQ(codebook_hash(again.codebook.codebook), codebook_hash(a.encoding.codebook.codebook));
}

TEST(Encode, TooManyCentroids) {
    const auto& a = desk();
    ExperimentConfig cfg = a.config;
    cfg.k = 1000000;
    Dataset tiny = a.data.train.subset(std::vector<std::size_t>{0, 1});
    EXPECT_THROW(encode(cfg, a.reference, tiny), ValidationError);
}

TEST(Forge, SmokeWithOneTrigger) {
    // One position only distinguishes K words, so the layer is two wide.
    ExperimentConfig cfg;
    cfg.data.samples = 300;
    cfg.data.input_dim = 8;
    cfg.hidden = {16, 2};
    cfg.wm_bits = 4;
    cfg.epochs = 3;
    cfg.t = 1;
    cfg.j = 2;
    cfg.trigger_steps = 50;
    const ExperimentData data = make_experiment_data(cfg);
    const HostModel host = train_host(cfg, data);
    const Encoding enc = encode(cfg, host.model, data.train);
    for (auto mode : {TriggerMode::t1, TriggerMode::t2}) {
        const TriggerSet ts = forge(cfg, host.model, data.train, enc, mode);
        EXPECT_EQ(ts.t(), 1u);
        EXPECT_EQ(ts.provenance.size(), mode == TriggerMode::t1 ? 1u : 3u);
    }
}

TEST(Forge, TooFewPositionsForDistinctWords) {
    const auto& a = desk();
    ExperimentConfig cfg = a.config;
    cfg.t = 1;
    EXPECT_THROW(encode(cfg, a.reference, a.data.train), CapacityError);
}

TEST(Attacks, FunctionPreservingKinds) {
    const auto& a = desk();
    for (auto kind : {AttackKind::np, AttackKind::rescale}) {
        for (std::uint64_t s = 0; s < 5; ++s) {
            const auto r = run_attack(a.config, a.host.model, a.data.train, kind, s).report;
            EXPECT_LE(r.functional_drift, 1e-5) << to_string(kind);
            EXPECT_TRUE(is_bijection(r.spec.perm));
        }
    }
}

TEST(Bootstrap, RateAndInterval) {
    std::vector<std::uint8_t> v(100, 0);
    for (int i = 0; i < 30; ++i) v[i] = 1;
    const auto r = bootstrap_rate(v, 1);
    EXPECT_DOUBLE_EQ(r.rate, 0.3);
    EXPECT_LT(r.ci_lo, 0.3);
    EXPECT_GT(r.ci_hi, 0.3);
    EXPECT_GT(r.ci_lo, 0.15);
    EXPECT_LT(r.ci_hi, 0.45);
    const std::vector<std::uint8_t> all(50, 1);
    const auto full = bootstrap_rate(all, 1);
    EXPECT_EQ(full.ci_lo, 1.0);
    EXPECT_EQ(full.ci_hi, 1.0);
}

TEST(Bootstrap, Ordering) {
    std::vector<std::uint8_t> hi(100, 1), lo(100, 0);
    for (int i = 0; i < 50; ++i) lo[i] = 1;
    EXPECT_EQ(bootstrap_ordering(hi, lo, 2), 1.0);
    EXPECT_LT(bootstrap_ordering(lo, hi, 2), 0.01);
    EXPECT_EQ(bootstrap_ordering(lo, lo, 2), 1.0);
    EXPECT_THROW(bootstrap_ordering(hi, std::vector<std::uint8_t>(3), 2), ValidationError);
}

TEST(Report, CapacityGridText) {
    const json g = capacity_grid(kCapacityNs, kCapacityTs, 2, 1);
    const std::string text = capacity_table_text(g);
    EXPECT_NE(text.find("64\t4\t12\t21\t29\t38\t47\t56\t65"), std::string::npos);
    EXPECT_NE(text.find("128\t4\t11\t20\t28\t37\t46\t55\t64"), std::string::npos);
}

TEST(Report, DeterministicAndValid) {
    const auto a = with_trials(4);
    const json r1 = make_report(a);
    const json r2 = make_report(a);
    EXPECT_EQ(r1.dump(), r2.dump());
    EXPECT_TRUE(validate_report(r1).empty());
    const json parsed = json::parse(r1.dump());
    EXPECT_TRUE(validate_report(parsed).empty());
    EXPECT_EQ(parsed.dump(), r1.dump());
    for (const auto& row : r1["attacks"]) {
        EXPECT_EQ(row["trials"], 4);
        EXPECT_LE(row["accept_t1"]["ci_lo"].get<double>(), row["accept_t1"]["rate"].get<double>());
    }
    EXPECT_EQ(r1["separation"].size(), 3u);
    EXPECT_FALSE(capacity_csv(r1).empty());
    EXPECT_NE(attacks_csv(r1).find("NP,4,"), std::string::npos);
    EXPECT_NE(separation_csv(r1).find("T1,"), std::string::npos);
}

TEST(Report, ValidatorCatchesProblems) {
    json r = make_report(with_trials(1));
    r["attacks"][0]["accept_t1"]["rate"] = 1.5;
    EXPECT_FALSE(validate_report(r).empty());
    r.erase("attacks");
    EXPECT_FALSE(validate_report(r).empty());
    EXPECT_FALSE(validate_report(json::object()).empty());
}

TEST(Report, TimingsStripped) {
    json r{{"a", 1}, {"timings", {{"x", 2.0}}}};
    EXPECT_EQ(strip_timings(r), (json{{"a", 1}}));
}

TEST(RunDir, StagesAndIntegrity) {
    const auto& a = desk();
    const auto root = fresh_dir("nalign_rundir_test");
    {
        RunDir dir(root);
        dir.set_config(a.config);
        store_host(dir, a.host);
        store_encoding(dir, a.encoding);
        store_triggers(dir, a.t1);
        store_triggers(dir, a.t2);
    }
    RunDir dir(root);
    const PipelineArtifacts loaded = load_artifacts(dir);
    EXPECT_EQ(loaded.host.model, a.host.model);
    EXPECT_EQ(loaded.t2, a.t2);
    EXPECT_EQ(loaded.host.accuracy_after_embed, a.host.accuracy_after_embed);
    EXPECT_EQ(make_report(with_trials(2)).dump(), [&] {
        PipelineArtifacts b = loaded;
        b.config.trials = 2;
        return make_report(b).dump();
    }());

    // deleting an artifact and re-running its stage reproduces the hash
    const std::string before = dir.manifest()["files"][artifact::codebook];
    std::filesystem::remove(dir.path(artifact::codebook));
    EXPECT_THROW(dir.codebook(), IntegrityError);
    store_encoding(dir, encode(loaded.config, loaded.reference, loaded.data.train));
    EXPECT_EQ(dir.manifest()["files"][artifact::codebook], before);

    auto bytes = read_file(dir.path(artifact::model));
    bytes[20] ^= 1;
    write_file(dir.path(artifact::model), bytes);
    EXPECT_THROW(dir.model(), IntegrityError);
    std::filesystem::remove_all(root);
}

TEST(RunDir, MissingArtifact) {
    const auto root = fresh_dir("nalign_rundir_empty");
    RunDir dir(root);
    EXPECT_THROW(dir.config(), IntegrityError);
    EXPECT_THROW(load_artifacts(dir), IntegrityError);
}
