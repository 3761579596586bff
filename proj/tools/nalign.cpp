#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "nalign/run_dir.hpp"

using namespace nalign;

namespace {

struct Options {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out = "run";
    bool normalize = false;
    std::string mode = "t1";
    std::optional<std::size_t> trials;
    std::string attack = "NP";
    std::size_t trial = 0;
    std::string model;
    std::string report_path;
};

void print_json(const json& j) { std::cout << j.dump(2) << '\n'; }

void cmd_train(const Options& o) {
    ExperimentConfig cfg = o.config_path.empty() ? ExperimentConfig{} : load_config(o.config_path);
    if (o.seed) cfg.seed = *o.seed;
    if (o.normalize) cfg.normalize = true;
    if (o.trials) cfg.trials = *o.trials;
    cfg.validate();
    RunDir dir(o.out);
    dir.set_config(cfg);
    const ExperimentData data = make_experiment_data(cfg);
    const HostModel host = train_host(cfg, data);
    store_host(dir, host);
    print_json(json{{"model", dir.path(artifact::model).string()},
                    {"accuracy", host.accuracy_after_embed},
                    {"embed_ber", UchidaBackend{}.verify(host.model, host.record).ber}});
}

void cmd_encode(const Options& o) {
    RunDir dir(o.out);
    const ExperimentConfig cfg = dir.config();
    const ExperimentData data = make_experiment_data(cfg);
    const Network reference = reference_network(cfg, dir.model());
    const Encoding enc = encode(cfg, reference, data.train);
    store_encoding(dir, enc);
    std::cout << capacity_table_text(capacity_grid(kCapacityNs, kCapacityTs, cfg.k, cfg.k_corrupted));
    const auto& cb = enc.codebook.codebook;
    std::cout << "N=" << cb.n << " T=" << cb.t << " K=" << cb.k << " T_corrupted=" << enc.t_corrupted_bound
              << " d_min=" << cb.d_min << (enc.codebook.fell_back ? " (fallback from " : " (requested ")
              << enc.codebook.requested_d_min << ")\n";
}

void cmd_forge(const Options& o) {
    RunDir dir(o.out);
    const ExperimentConfig cfg = dir.config();
    const ExperimentData data = make_experiment_data(cfg);
    const Network reference = reference_network(cfg, dir.model());
    const Encoding enc = load_encoding(dir);
    const TriggerMode mode = parse_trigger_mode(o.mode);
    const TriggerSet ts = forge(cfg, reference, data.train, enc, mode);
    store_triggers(dir, ts);
    print_json(json{{"triggers", dir.path(artifact::triggers(mode)).string()},
                    {"T", ts.t()},
                    {"above_loss_ceiling", ts.failures()},
                    {"provenance", ts.provenance}});
}

void cmd_attack(const Options& o) {
    RunDir dir(o.out);
    const ExperimentConfig cfg = dir.config();
    const AttackKind kind = parse_attack_kind(o.attack);
    const std::uint64_t seed = o.seed ? *o.seed : trial_seed(cfg, kind, o.trial);
    const ExperimentData data = make_experiment_data(cfg);
    const AttackedModel attacked = run_attack(cfg, dir.model(), data.train, kind, seed);
    const std::string stem = "attacks/" + to_string(kind) + "_" + std::to_string(o.trial);
    dir.put(stem + ".naf", serialize_model(attacked.net));
    dir.put_text(stem + ".json", to_json(attacked.report).dump(2) + "\n");
    print_json(json{{"model", dir.path(stem + ".naf").string()}, {"attack", to_json(attacked.report)}});
}

Network suspect_model(const RunDir& dir, const std::string& name) {
    if (name.empty()) throw ValidationError("--model is required");
    if (dir.has(name)) return deserialize_model(dir.get(name));
    return load_model(name);
}

int cmd_align(const Options& o) {
    RunDir dir(o.out);
    ExperimentConfig cfg = dir.config();
    const Network suspect = suspect_model(dir, o.model);
    const TriggerMode mode = parse_trigger_mode(o.mode);
    AlignOptions opt;
    opt.normalize = cfg.normalize || o.normalize;
    const VerifiedAlignment v =
        verify_with_alignment(suspect, dir.triggers(mode), dir.codebook(), dir.watermark(), UchidaBackend{}, opt);
    json out{{"verification", to_json(v.ov)}};
    if (v.alignment) {
        out["alignment"] = to_json(*v.alignment);
        const Network aligned = apply_alignment(suspect, cfg.watermark_layer, *v.alignment);
        const std::string name = "aligned_" + std::filesystem::path(o.model).stem().string() + "_" + o.mode + ".naf";
        dir.put(name, serialize_model(aligned));
        out["aligned_model"] = dir.path(name).string();
    }
    if (!v.failure_cause.empty()) out["failure_cause"] = v.failure_cause;
    print_json(out);
    return 0;
}

int cmd_verify(const Options& o) {
    RunDir dir(o.out);
    const Network suspect = suspect_model(dir, o.model);
    const OVResult ov = UchidaBackend{}.verify(suspect, dir.watermark());
    print_json(to_json(ov));
    return 0;
}

void cmd_report(const Options& o) {
    RunDir dir(o.out);
    ReportTimer timer;
    PipelineArtifacts a = load_artifacts(dir);
    if (o.trials) {
        a.config.trials = *o.trials;
        a.config.validate();
    }
    timer.lap("load_artifacts");
    json report = make_report(a, &timer);
    report["timings"] = timer.timings;
    const auto problems = validate_report(report);
    if (!problems.empty()) throw ValidationError("report failed schema validation: " + problems.front());
    dir.put_text("report.json", report.dump(2) + "\n");
    dir.put_text("capacity.csv", capacity_csv(report));
    dir.put_text("separation.csv", separation_csv(report));
    dir.put_text("attacks.csv", attacks_csv(report));
    std::cout << separation_csv(report) << '\n' << attacks_csv(report);
}

void cmd_capacity(const Options& o) {
    ExperimentConfig cfg = o.config_path.empty() ? ExperimentConfig{} : load_config(o.config_path);
    std::cout << capacity_table_text(capacity_grid(kCapacityNs, kCapacityTs, cfg.k, cfg.k_corrupted));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Neuron alignment for white-box watermark verification"};
    app.require_subcommand(1);
    Options o;

    auto* train = app.add_subcommand("train", "train and watermark a host model");
    train->add_option("--config", o.config_path, "INI config file")->check(CLI::ExistingFile);
    train->add_option("--seed", o.seed, "override the config seed");
    train->add_flag("--normalize", o.normalize, "align with per-neuron normalization");
    train->add_option("--trials", o.trials, "attack trials per kind");

    auto* enc = app.add_subcommand("encode", "compute centroids and the codebook");
    auto* forge_cmd = app.add_subcommand("forge", "synthesize a trigger set");
    forge_cmd->add_option("--mode", o.mode, "t1 or t2")->check(CLI::IsMember({"t1", "t2"}));

    auto* attack = app.add_subcommand("attack", "attack the watermarked layer");
    attack->add_option("--attack", o.attack, "NP, FTP, NPP or RESCALE");
    attack->add_option("--trial", o.trial, "trial index");
    attack->add_option("--seed", o.seed, "explicit attack seed");

    auto* align_cmd = app.add_subcommand("align", "align a suspect model and verify");
    align_cmd->add_option("--model", o.model, "suspect model (run-dir artifact or path)")->required();
    align_cmd->add_option("--mode", o.mode, "t1 or t2")->check(CLI::IsMember({"t1", "t2"}));
    align_cmd->add_flag("--normalize", o.normalize, "normalize the suspect layer first");

    auto* verify = app.add_subcommand("verify", "verify a model without alignment");
    verify->add_option("--model", o.model, "suspect model (run-dir artifact or path)")->required();

    auto* report = app.add_subcommand("report", "run attack trials and write the report");
    report->add_option("--trials", o.trials, "override the trial count");

    auto* capacity = app.add_subcommand("capacity-table", "print the capacity grid");
    capacity->add_option("--config", o.config_path, "INI config file")->check(CLI::ExistingFile);

    for (auto* sub : {train, enc, forge_cmd, attack, align_cmd, verify, report}) {
        sub->add_option("--out", o.out, "run directory");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(ExitCode::validation);
    }

    try {
        if (*train) cmd_train(o);
        else if (*enc) cmd_encode(o);
        else if (*forge_cmd) cmd_forge(o);
        else if (*attack) cmd_attack(o);
        else if (*align_cmd) return cmd_align(o);
        else if (*verify) return cmd_verify(o);
        else if (*report) cmd_report(o);
        else if (*capacity) cmd_capacity(o);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(e.exit_code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(ExitCode::validation);
    }
    return 0;
}
