#pragma once

// End-to-end pipeline stages shared by the CLI and the acceptance suite:
// host training + watermark embedding, encoding, trigger forging, attack
// trials, and report aggregation.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "aligner.hpp"
#include "attacks.hpp"
#include "coding.hpp"
#include "config.hpp"
#include "data.hpp"
#include "model_io.hpp"
#include "training.hpp"
#include "triggers.hpp"
#include "watermark.hpp"

namespace nalign {

using json = nlohmann::ordered_json;

inline constexpr const char* kReportSchema = "nalign.report/1";

struct ExperimentData {
    Dataset train;
    Dataset test;
};

inline ExperimentData make_experiment_data(const ExperimentConfig& cfg) {
    BlobSpec spec = cfg.blob_spec();
    Dataset train = make_blobs(spec, 0);
    spec.samples = cfg.test_samples;
    return {std::move(train), make_blobs(spec, 1)};
}

struct HostModel {
    Network model;  // trained and watermarked
    WatermarkRecord record;
    double accuracy_before_embed = 0.0;
    double accuracy_after_embed = 0.0;
    std::vector<double> epoch_loss;
};

inline HostModel train_host(const ExperimentConfig& cfg, const ExperimentData& data) {
    cfg.validate();
    Network net = Network::create(cfg.data.input_dim, cfg.hidden, static_cast<std::size_t>(cfg.data.classes),
                                  derive_seed(cfg.seed, 1));
    TrainParams hp;
    hp.epochs = cfg.epochs;
    hp.lr = cfg.lr;
    hp.batch_size = cfg.batch_size;
    hp.seed = derive_seed(cfg.seed, 2);
    TrainLog log;
    HostModel host;
    net = train(net, data.train, hp, &log);
    host.epoch_loss = log.epoch_loss;
    host.accuracy_before_embed = accuracy(net, data.test);
    host.record = make_watermark_record(net, cfg.watermark_layer, derive_seed(cfg.seed, 3), cfg.wm_bits,
                                        cfg.wm_threshold);
    EmbedParams ep;
    ep.epochs = cfg.embed_epochs;
    ep.lr = cfg.embed_lr;
    ep.strength = cfg.wm_strength;
    ep.seed = derive_seed(cfg.seed, 4);
    host.model = UchidaBackend{}.embed(net, host.record, data.train, ep);
    host.accuracy_after_embed = accuracy(host.model, data.test);
    return host;
}

// The network the owner encodes against: the host itself, or its
// normalized form when alignment runs with normalization.
inline Network reference_network(const ExperimentConfig& cfg, const Network& model) {
    return cfg.normalize ? normalize_layer(model, cfg.watermark_layer) : model;
}

struct Encoding {
    CentroidSet centroids;
    CodebookChoice codebook;
    std::uint64_t t_corrupted_bound = 0;
};

inline Encoding encode(const ExperimentConfig& cfg, const Network& reference, const Dataset& train) {
    const std::size_t layer = reference.layer_index(cfg.watermark_layer);
    const MatrixD outputs = layer_outputs(reference, train.inputs, layer);
    Encoding enc;
    enc.centroids = compute_centroids(outputs, cfg.k);
    const std::size_t n = reference.layer(layer).out_dim();
    enc.t_corrupted_bound = max_correctable(n, cfg.t, cfg.k, cfg.k_corrupted);
    enc.codebook = default_codebook(n, cfg.t, cfg.k, cfg.k_corrupted, derive_seed(cfg.seed, 5));
    return enc;
}

inline TriggerSet forge(const ExperimentConfig& cfg, const Network& reference, const Dataset& train,
                        const Encoding& enc, TriggerMode mode) {
    const std::size_t j = mode == TriggerMode::t1 ? 0 : cfg.j;
    if (mode == TriggerMode::t2 && j == 0) throw ValidationError("config field 'triggers.J': T2 mode needs J >= 1");
    EnsembleParams ep{cfg.ensemble_finetune_lr, cfg.ensemble_prune_step};
    const VariantEnsemble ens = make_variant_ensemble(reference, train, cfg.watermark_layer, j,
                                                      derive_seed(cfg.seed, 6), ep);
    TriggerOptions opt;
    opt.steps = cfg.trigger_steps;
    opt.lr = cfg.trigger_lr;
    opt.seed = derive_seed(cfg.seed, mode == TriggerMode::t1 ? 7 : 8);
    opt.box = bounding_box(train.inputs);
    opt.inactive_slope = cfg.trigger_inactive_slope;
    TriggerSet ts = synthesize_trigger_set(ens, cfg.watermark_layer, enc.centroids, enc.codebook.codebook, opt);
    ts.mode = mode;
    return ts;
}


// ---------------------------------------------------------------- attacks

struct AttackedModel {
    Network net;
    AttackReport report;
};

inline std::uint64_t trial_seed(const ExperimentConfig& cfg, AttackKind kind, std::size_t trial) {
    return derive_seed(cfg.seed, 1000 + 100000 * static_cast<std::uint64_t>(kind) + trial);
}

inline AttackedModel run_attack(const ExperimentConfig& cfg, const Network& model, const Dataset& train,
                                AttackKind kind, std::uint64_t seed) {
    const std::size_t width = model.layer(model.layer_index(cfg.watermark_layer)).out_dim();
    AttackedModel out;
    out.report.kind = kind;
    out.report.seed = seed;
    out.report.spec = random_permutation(cfg.watermark_layer, width, seed);
    switch (kind) {
        case AttackKind::np:
            out.net = permute_neurons(model, out.report.spec);
            break;
        case AttackKind::ftp:
            out.report.epochs = cfg.ftp_epochs;
            out.net = attack_ftp(model, train, cfg.ftp_epochs, out.report.spec, derive_seed(seed, 1), cfg.ftp_lr);
            break;
        case AttackKind::npp:
            out.report.fraction = cfg.npp_fraction;
            out.net = attack_npp(model, cfg.npp_fraction, out.report.spec, derive_seed(seed, 1));
            break;
        case AttackKind::rescale:
            out.report.scales = random_scales(width, derive_seed(seed, 1), cfg.rescale_lo, cfg.rescale_hi);
            out.net = permute_neurons(attack_rescale(model, cfg.watermark_layer, out.report.scales), out.report.spec);
            break;
    }
    const MatrixF probes = random_probes(cfg.probes, model.input_dim(), derive_seed(seed, 2));
    out.report.functional_drift = functional_drift(model, out.net, probes);
    return out;
}

inline json to_json(const AttackReport& r) {
    json j{{"kind", to_string(r.kind)},
           {"seed", r.seed},
           {"layer", r.spec.layer_name},
           {"perm", r.spec.perm},
           {"functional_drift", r.functional_drift}};
    if (r.kind == AttackKind::ftp) j["epochs"] = r.epochs;
    if (r.kind == AttackKind::npp) j["fraction"] = r.fraction;
    if (r.kind == AttackKind::rescale) j["scales"] = r.scales;
    return j;
}

inline json to_json(const OVResult& ov) {
    std::string bits;
    for (auto b : ov.bits) bits.push_back(b ? '1' : '0');
    return json{{"accepted", ov.accepted}, {"ber", ov.ber}, {"bits", bits}};
}

inline json to_json(const AlignmentResult& a) {
    json j{{"perm_estimate", a.perm_estimate},
           {"per_neuron_distance", a.per_neuron_distance},
           {"collisions_resolved", a.collisions_resolved},
           {"total_cost", a.total_cost},
           {"dead_neurons", a.dead_neurons}};
    if (a.accuracy) j["accuracy"] = *a.accuracy;
    if (a.live_accuracy) j["live_accuracy"] = *a.live_accuracy;
    return j;
}

// Plain verification; a reshaped layer counts as a rejection.
inline OVResult verify_plain(const Network& net, const WatermarkRecord& record) {
    try {
        return UchidaBackend{}.verify(net, record);
    } catch (const TamperError&) {
        return OVResult{};
    }
}

// ---------------------------------------------------------------- statistics

struct RateEstimate {
    double rate = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
};

inline constexpr int kBootstrapResamples = 1000;

// Percentile bootstrap (95%) of the mean of 0/1 outcomes.
inline RateEstimate bootstrap_rate(std::span<const std::uint8_t> outcomes, std::uint64_t seed) {
    RateEstimate est;
    if (outcomes.empty()) return est;
    const auto n = outcomes.size();
    est.rate = static_cast<double>(std::ranges::count(outcomes, 1)) / static_cast<double>(n);
    Rng rng(seed);
    std::vector<double> means;
    means.reserve(kBootstrapResamples);
    for (int b = 0; b < kBootstrapResamples; ++b) {
        std::size_t hits = 0;
        for (std::size_t i = 0; i < n; ++i) hits += outcomes[rng.below(n)];
        means.push_back(static_cast<double>(hits) / static_cast<double>(n));
    }
    std::ranges::sort(means);
    est.ci_lo = means[static_cast<std::size_t>(0.025 * (kBootstrapResamples - 1))];
    est.ci_hi = means[static_cast<std::size_t>(0.975 * (kBootstrapResamples - 1))];
    return est;
}

// Paired bootstrap: share of resamples in which the rate of `better` is at
// least the rate of `worse`.
inline double bootstrap_ordering(std::span<const std::uint8_t> better, std::span<const std::uint8_t> worse,
                                 std::uint64_t seed) {
    if (better.size() != worse.size()) throw ValidationError("paired outcomes differ in length");
    if (better.empty()) return 1.0;
    const auto n = better.size();
    Rng rng(seed);
    int holds = 0;
    for (int b = 0; b < kBootstrapResamples; ++b) {
        long diff = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t k = rng.below(n);
            diff += static_cast<long>(better[k]) - static_cast<long>(worse[k]);
        }
        holds += diff >= 0;
    }
    return static_cast<double>(holds) / kBootstrapResamples;
}

// ---------------------------------------------------------------- summaries

inline json capacity_grid(std::span<const std::size_t> ns, std::span<const std::size_t> ts, std::size_t k,
                          std::size_t k_corrupted) {
    json rows = json::array();
    for (std::size_t n : ns) {
        json vals = json::array();
        for (std::size_t t : ts) vals.push_back(max_correctable(n, t, k, k_corrupted));
        rows.push_back(json{{"N", n}, {"T_corrupted", vals}});
    }
    return json{{"K", k}, {"K_corrupted", k_corrupted}, {"T", ts}, {"rows", rows}};
}

inline std::string capacity_table_text(const json& grid) {
    std::ostringstream out;
    out << "N \\ T";
    for (const auto& t : grid["T"]) out << '\t' << t.get<std::size_t>();
    out << '\n';
    for (const auto& row : grid["rows"]) {
        out << row["N"].get<std::size_t>();
        for (const auto& v : row["T_corrupted"]) out << '\t' << v.get<std::size_t>();
        out << '\n';
    }
    return out.str();
}

inline const std::vector<std::size_t> kCapacityNs{64, 128};
inline const std::vector<std::size_t> kCapacityTs{20, 40, 60, 80, 100, 120, 140, 160};

struct SeparationStats {
    std::optional<double> inter;
    double intra = 0.0;
    std::vector<std::size_t> dead;
};

// Mean cluster statistics over triggers, dead neurons excluded.
inline SeparationStats separation(const ObservedCodeMatrix& obs, const CentroidSet& cs) {
    SeparationStats s;
    s.dead = dead_neurons(obs);
    std::vector<bool> dead_at(obs.raw.rows(), false);
    for (auto d : s.dead) dead_at[d] = true;
    double inter_sum = 0.0;
    std::size_t inter_count = 0;
    for (std::size_t t = 0; t < obs.raw.cols(); ++t) {
        std::vector<double> v;
        for (std::size_t n = 0; n < obs.raw.rows(); ++n) {
            if (!dead_at[n]) v.push_back(obs.raw(n, t));
        }
        const auto q = cluster_quality(v, cs);
        s.intra += q.intra;
        if (q.inter) {
            inter_sum += *q.inter;
            ++inter_count;
        }
    }
    if (obs.raw.cols()) s.intra /= static_cast<double>(obs.raw.cols());
    if (inter_count) s.inter = inter_sum / static_cast<double>(inter_count);
    return s;
}

// Baseline "trigger set" made of the first T normal training samples; its
// codebook is whatever the reference network transcribes on them.
struct NormalBaseline {
    TriggerSet triggers;
    Codebook codebook;
};

inline NormalBaseline normal_sample_baseline(const Network& reference, const Dataset& train, std::string_view layer,
                                             const CentroidSet& cs, std::size_t t) {
    const std::size_t count = std::min(t, train.size());
    NormalBaseline b;
    b.triggers.inputs = MatrixF(count, train.inputs.cols());
    for (std::size_t i = 0; i < count; ++i) std::ranges::copy(train.inputs.row(i), b.triggers.inputs.row(i).begin());
    b.triggers.centroids = cs;
    b.triggers.layer_name = std::string(layer);
    b.triggers.final_loss.assign(count, 0.0);
    b.triggers.converged.assign(count, 0);
    const ObservedCodeMatrix obs = read_codes(reference, b.triggers);
    b.codebook = Codebook{obs.codes.rows(), count, cs.k(), obs.codes, min_pairwise_distance(obs.codes), 0};
    b.triggers.codebook_hash = codebook_hash(b.codebook);
    return b;
}

// ---------------------------------------------------------------- full run

struct PipelineArtifacts {
    ExperimentConfig config;
    ExperimentData data;
    HostModel host;
    Network reference;
    Encoding encoding;
    TriggerSet t1;
    TriggerSet t2;
};

struct TrialOutcome {
    AttackReport attack;
    OVResult plain;
    VerifiedAlignment t1;
    VerifiedAlignment t2;
    std::optional<double> normal_accuracy;  // NP trials only
};

inline TrialOutcome run_trial(const PipelineArtifacts& a, AttackKind kind, std::size_t trial,
                              const NormalBaseline* baseline) {
    const auto& cfg = a.config;
    const AttackedModel attacked = run_attack(cfg, a.host.model, a.data.train, kind, trial_seed(cfg, kind, trial));
    TrialOutcome out;
    out.attack = attacked.report;
    out.plain = verify_plain(attacked.net, a.host.record);
    AlignOptions opt{cfg.normalize, attacked.report.spec.perm};
    const UchidaBackend backend;
    const Codebook& cb = a.encoding.codebook.codebook;
    out.t1 = verify_with_alignment(attacked.net, a.t1, cb, a.host.record, backend, opt);
    out.t2 = verify_with_alignment(attacked.net, a.t2, cb, a.host.record, backend, opt);
    if (baseline) {
        const Network probe = cfg.normalize ? normalize_layer(attacked.net, cfg.watermark_layer) : attacked.net;
        AlignmentResult r = align(read_codes(probe, baseline->triggers), baseline->codebook);
        score_alignment(r, attacked.report.spec.perm);
        out.normal_accuracy = r.accuracy;
    }
    return out;
}

inline PipelineArtifacts build_artifacts(const ExperimentConfig& cfg) {
    cfg.validate();
    PipelineArtifacts a{cfg, make_experiment_data(cfg), {}, {}, {}, {}, {}};
    a.host = train_host(cfg, a.data);
    a.reference = reference_network(cfg, a.host.model);
    a.encoding = encode(cfg, a.reference, a.data.train);
    a.t1 = forge(cfg, a.reference, a.data.train, a.encoding, TriggerMode::t1);
    a.t2 = forge(cfg, a.reference, a.data.train, a.encoding, TriggerMode::t2);
    return a;
}

inline json artifact_hashes(const PipelineArtifacts& a) {
    return json{{"model", sha256_hex(serialize_model(a.host.model))},
                {"watermark", sha256_hex(serialize_watermark(a.host.record))},
                {"centroids", sha256_hex(serialize_centroids(a.encoding.centroids))},
                {"codebook", sha256_hex(serialize_codebook(a.encoding.codebook.codebook))},
                {"triggers_t1", sha256_hex(serialize_triggers(a.t1))},
                {"triggers_t2", sha256_hex(serialize_triggers(a.t2))}};
}

inline json rate_json(const RateEstimate& r) {
    return json{{"rate", r.rate}, {"ci_lo", r.ci_lo}, {"ci_hi", r.ci_hi}};
}

struct ReportTimer {
    json timings = json::object();
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    void lap(const std::string& stage) {
        const auto now = std::chrono::steady_clock::now();
        timings[stage] = std::chrono::duration<double>(now - start).count();
        start = now;
    }
};

// Runs every configured attack for cfg.trials seeds and aggregates the
// report. Timing fields live under "timings" only.
inline json make_report(const PipelineArtifacts& a, ReportTimer* timer = nullptr) {
    const auto& cfg = a.config;
    const Codebook& cb = a.encoding.codebook.codebook;
    json report;
    report["schema"] = kReportSchema;
    report["format_version"] = kFormatVersion;
    report["config"] = to_ini(cfg);
    report["optimizer"] = json{{"training", "sgd"}, {"triggers", "projected gradient descent"}};
    report["host"] = json{{"accuracy_before_embed", a.host.accuracy_before_embed},
                          {"accuracy_after_embed", a.host.accuracy_after_embed},
                          {"first_epoch_loss", a.host.epoch_loss.empty() ? 0.0 : a.host.epoch_loss.front()},
                          {"last_epoch_loss", a.host.epoch_loss.empty() ? 0.0 : a.host.epoch_loss.back()},
                          {"embed_ber", UchidaBackend{}.verify(a.host.model, a.host.record).ber},
                          {"ber_threshold", a.host.record.threshold},
                          {"payload_bits", a.host.record.payload.size()}};
    report["artifacts"] = artifact_hashes(a);
    report["encoding"] = json{{"centroids", a.encoding.centroids.centroids},
                              {"boundaries", a.encoding.centroids.boundaries},
                              {"t_corrupted_bound", a.encoding.t_corrupted_bound},
                              {"requested_d_min", a.encoding.codebook.requested_d_min},
                              {"d_min", cb.d_min},
                              {"decoding_radius", cb.radius()},
                              {"fell_back", a.encoding.codebook.fell_back}};
    report["capacity"] = capacity_grid(kCapacityNs, kCapacityTs, 2, 1);

    const NormalBaseline baseline =
        normal_sample_baseline(a.reference, a.data.train, cfg.watermark_layer, a.encoding.centroids, cfg.t);
    const auto sep_n = separation(read_codes(a.reference, baseline.triggers), a.encoding.centroids);
    const auto sep_t1 = separation(read_codes(a.reference, a.t1), a.encoding.centroids);
    const auto sep_t2 = separation(read_codes(a.reference, a.t2), a.encoding.centroids);
    report["triggers"] = json{{"t1", {{"failures", a.t1.failures()}, {"count", a.t1.t()}}},
                              {"t2", {{"failures", a.t2.failures()}, {"count", a.t2.t()}, {"J", a.t2.j},
                                      {"provenance", a.t2.provenance}}}};
    report["dead_neurons"] = sep_t1.dead.size();
    if (timer) timer->lap("separation");

    json attack_rows = json::array();
    std::vector<double> np_acc_n, np_acc_t1, np_acc_t2;
    for (AttackKind kind : cfg.attacks) {
        std::vector<std::uint8_t> plain, t1, t2;
        double acc1 = 0.0, acc2 = 0.0, max_drift = 0.0, mean_drift = 0.0;
        std::size_t collisions1 = 0, collisions2 = 0;
        for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
            const TrialOutcome o = run_trial(a, kind, trial, kind == AttackKind::np ? &baseline : nullptr);
            plain.push_back(o.plain.accepted);
            t1.push_back(o.t1.ov.accepted);
            t2.push_back(o.t2.ov.accepted);
            const double a1 = o.t1.alignment ? o.t1.alignment->accuracy.value_or(0.0) : 0.0;
            const double a2 = o.t2.alignment ? o.t2.alignment->accuracy.value_or(0.0) : 0.0;
            acc1 += a1;
            acc2 += a2;
            if (o.t1.alignment) collisions1 += o.t1.alignment->collisions_resolved;
            if (o.t2.alignment) collisions2 += o.t2.alignment->collisions_resolved;
            max_drift = std::max(max_drift, o.attack.functional_drift);
            mean_drift += o.attack.functional_drift;
            if (kind == AttackKind::np) {
                np_acc_t1.push_back(a1);
                np_acc_t2.push_back(a2);
                np_acc_n.push_back(o.normal_accuracy.value_or(0.0));
            }
        }
        const double n = static_cast<double>(cfg.trials);
        const std::uint64_t bs = derive_seed(cfg.seed, 0xB0 + static_cast<std::uint64_t>(kind));
        attack_rows.push_back(json{{"attack", to_string(kind)},
                              {"trials", cfg.trials},
                              {"accept_without_alignment", rate_json(bootstrap_rate(plain, bs))},
                              {"accept_t1", rate_json(bootstrap_rate(t1, bs + 1))},
                              {"accept_t2", rate_json(bootstrap_rate(t2, bs + 2))},
                              {"p_t2_ge_t1", bootstrap_ordering(t2, t1, bs + 3)},
                              {"alignment_accuracy_t1", acc1 / n},
                              {"alignment_accuracy_t2", acc2 / n},
                              {"collisions_t1", collisions1},
                              {"collisions_t2", collisions2},
                              {"mean_drift", mean_drift / n},
                              {"max_drift", max_drift}});
        if (timer) timer->lap("attack_" + to_string(kind));
    }
    report["attacks"] = attack_rows;

    auto mean = [](const std::vector<double>& v) {
        return v.empty() ? json(nullptr) : json(std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()));
    };
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    report["separation"] = json::array({
        json{{"mode", "N"}, {"inter", opt(sep_n.inter)}, {"intra", sep_n.intra}, {"accuracy", mean(np_acc_n)}},
        json{{"mode", "T1"}, {"inter", opt(sep_t1.inter)}, {"intra", sep_t1.intra}, {"accuracy", mean(np_acc_t1)}},
        json{{"mode", "T2"}, {"inter", opt(sep_t2.inter)}, {"intra", sep_t2.intra}, {"accuracy", mean(np_acc_t2)}},
    });
    report["centroid_gap"] = a.encoding.centroids.gap();
    return report;
}

// Structural check of a report document; returns the list of problems.
inline std::vector<std::string> validate_report(const json& r) {
    std::vector<std::string> problems;
    auto need = [&](const json& obj, const char* key, json::value_t type, const std::string& where) {
        if (!obj.is_object() || !obj.contains(key)) {
            problems.push_back(where + key + " missing");
            return false;
        }
        const auto t = obj.at(key).type();
        const bool numeric = type == json::value_t::number_float &&
                             (t == json::value_t::number_integer || t == json::value_t::number_unsigned);
        const bool unsigned_ok = type == json::value_t::number_unsigned && t == json::value_t::number_integer &&
                                 obj.at(key).get<long long>() >= 0;
        if (t != type && !numeric && !unsigned_ok) {
            problems.push_back(where + key + " has wrong type");
            return false;
        }
        return true;
    };
    auto rate = [&](const json& obj, const char* key, const std::string& where) {
        if (!need(obj, key, json::value_t::number_float, where)) return;
        const double v = obj.at(key).get<double>();
        if (!(v >= 0.0 && v <= 1.0)) problems.push_back(where + key + " outside [0,1]");
    };
    using vt = json::value_t;
    if (need(r, "schema", vt::string, "") && r["schema"] != kReportSchema) problems.push_back("schema mismatch");
    need(r, "config", vt::string, "");
    need(r, "artifacts", vt::object, "");
    need(r, "encoding", vt::object, "");
    need(r, "dead_neurons", vt::number_unsigned, "");
    if (need(r, "capacity", vt::object, "")) {
        need(r["capacity"], "rows", vt::array, "capacity.");
    }
    if (need(r, "separation", vt::array, "")) {
        for (const auto& row : r["separation"]) {
            need(row, "mode", vt::string, "separation[].");
            need(row, "intra", vt::number_float, "separation[].");
            if (row.contains("accuracy") && !row["accuracy"].is_null()) rate(row, "accuracy", "separation[].");
        }
    }
    if (need(r, "attacks", vt::array, "")) {
        for (const auto& row : r["attacks"]) {
            need(row, "attack", vt::string, "attacks[].");
            for (const char* key : {"accept_without_alignment", "accept_t1", "accept_t2"}) {
                if (need(row, key, vt::object, "attacks[].")) {
                    for (const char* f : {"rate", "ci_lo", "ci_hi"}) rate(row[key], f, std::string("attacks[].") + key + ".");
                }
            }
            rate(row, "p_t2_ge_t1", "attacks[].");
            rate(row, "alignment_accuracy_t1", "attacks[].");
            rate(row, "alignment_accuracy_t2", "attacks[].");
        }
    }
    return problems;
}

inline json strip_timings(json report) {
    report.erase("timings");
    return report;
}

// CSV renderings of the capacity grid, separation and attack tables.
inline std::string capacity_csv(const json& r) {
    std::ostringstream out;
    out << "N";
    for (const auto& t : r["capacity"]["T"]) out << ",T" << t.get<std::size_t>();
    out << '\n';
    for (const auto& row : r["capacity"]["rows"]) {
        out << row["N"].get<std::size_t>();
        for (const auto& v : row["T_corrupted"]) out << ',' << v.get<std::size_t>();
        out << '\n';
    }
    return out.str();
}

inline std::string separation_csv(const json& r) {
    std::ostringstream out;
    out << "mode,inter,intra,accuracy\n";
    for (const auto& row : r["separation"]) {
        out << row["mode"].get<std::string>() << ',' << row["inter"].dump() << ',' << row["intra"].dump() << ','
            << row["accuracy"].dump() << '\n';
    }
    return out.str();
}

inline std::string attacks_csv(const json& r) {
    std::ostringstream out;
    out << "attack,trials,accept_without_alignment,accept_t1,accept_t2,p_t2_ge_t1,alignment_accuracy_t1,"
           "alignment_accuracy_t2,max_drift\n";
    for (const auto& row : r["attacks"]) {
        out << row["attack"].get<std::string>() << ',' << row["trials"].dump() << ','
            << row["accept_without_alignment"]["rate"].dump() << ',' << row["accept_t1"]["rate"].dump() << ','
            << row["accept_t2"]["rate"].dump() << ',' << row["p_t2_ge_t1"].dump() << ','
            << row["alignment_accuracy_t1"].dump() << ',' << row["alignment_accuracy_t2"].dump() << ','
            << row["max_drift"].dump() << '\n';
    }
    return out.str();
}

inline json run_pipeline(const ExperimentConfig& cfg) {
    ReportTimer timer;
    const PipelineArtifacts a = build_artifacts(cfg);
    timer.lap("build_artifacts");
    json report = make_report(a, &timer);
    report["timings"] = timer.timings;
    return report;
}

}  // namespace nalign
