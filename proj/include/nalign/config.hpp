#pragma once

// Experiment configuration: an INI file with flat sections.
//
//   [run]        seed
//   [data]       samples test_samples input_dim classes separation noise
//   [model]      hidden epochs lr batch_size watermark_layer
//   [watermark]  bits threshold strength embed_epochs embed_lr
//   [coding]     K T K_corrupted
//   [triggers]   mode J steps lr inactive_slope finetune_lr prune_step
//   [attack]     kinds trials ftp_epochs ftp_lr npp_fraction rescale_lo rescale_hi probes
//   [align]      normalize
//
// Every key is optional; omitted keys keep the desk-scale defaults below.

#include <cstdint>
#include <filesystem>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "attacks.hpp"
#include "data.hpp"
#include "errors.hpp"
#include "triggers.hpp"

namespace nalign {

struct ExperimentConfig {
    std::uint64_t seed = 7;

    BlobSpec data{2000, 64, 4, 3.0, 1.0, 0};
    std::size_t test_samples = 500;

    std::vector<std::size_t> hidden{128, 32, 16};
    int epochs = 20;
    double lr = 0.05;
    std::size_t batch_size = 32;
    std::string watermark_layer = "hidden2";

    std::size_t wm_bits = 32;
    double wm_threshold = 0.15;
    double wm_strength = 0.05;
    int embed_epochs = 5;
    double embed_lr = 0.02;

    std::size_t k = 2;
    std::size_t t = 60;
    std::size_t k_corrupted = 1;

    TriggerMode mode = TriggerMode::t1;
    std::size_t j = 6;
    int trigger_steps = 1000;
    double trigger_lr = 0.5;
    double trigger_inactive_slope = 0.1;
    double ensemble_finetune_lr = kFinetuneLr;
    double ensemble_prune_step = 0.05;

    std::vector<AttackKind> attacks{AttackKind::np, AttackKind::ftp, AttackKind::npp};
    std::size_t trials = 100;
    int ftp_epochs = 1;
    double ftp_lr = kFinetuneLr;
    double npp_fraction = 0.1;
    double rescale_lo = 0.5;
    double rescale_hi = 2.0;
    std::size_t probes = 1000;

    bool normalize = false;

    // Throws ValidationError naming the offending field.
    void validate() const {
        auto fail = [](const std::string& field, const std::string& why) {
            throw ValidationError("config field '" + field + "': " + why);
        };
        if (data.samples == 0) fail("data.samples", "must be positive");
        if (test_samples == 0) fail("data.test_samples", "must be positive");
        if (data.input_dim == 0) fail("data.input_dim", "must be positive");
        if (data.classes < 2) fail("data.classes", "must be at least 2");
        if (hidden.empty()) fail("model.hidden", "needs at least one hidden layer");
        for (std::size_t w : hidden) {
            if (w == 0) fail("model.hidden", "widths must be positive");
        }
        if (epochs < 0) fail("model.epochs", "must be non-negative");
        if (!(lr > 0.0)) fail("model.lr", "must be positive");
        if (batch_size == 0) fail("model.batch_size", "must be positive");
        if (watermark_layer.empty()) fail("model.watermark_layer", "is required");
        bool found = false;
        for (std::size_t i = 0; i < hidden.size(); ++i) found |= watermark_layer == "hidden" + std::to_string(i + 1);
        if (!found) {
            fail("model.watermark_layer", "'" + watermark_layer + "' is not a hidden layer of the architecture");
        }
        if (wm_bits == 0) fail("watermark.bits", "must be positive");
        if (!(wm_threshold > 0.0 && wm_threshold <= 1.0)) fail("watermark.threshold", "must lie in (0, 1]");
        if (k < 2) fail("coding.K", "must be at least 2");
        if (t < 1) fail("coding.T", "must be at least 1");
        if (k_corrupted < 1) fail("coding.K_corrupted", "must be at least 1");
        if (j % 2 != 0) fail("triggers.J", "must be even");
        if (trigger_steps < 0) fail("triggers.steps", "must be non-negative");
        if (!(trigger_lr > 0.0)) fail("triggers.lr", "must be positive");
        if (!(trigger_inactive_slope >= 0.0 && trigger_inactive_slope <= 1.0)) {
            fail("triggers.inactive_slope", "must lie in [0, 1]");
        }
        if (trials < 1) fail("attack.trials", "must be at least 1");
        if (!(npp_fraction >= 0.0 && npp_fraction < 1.0)) fail("attack.npp_fraction", "must lie in [0, 1)");
        if (!(rescale_lo > 0.0 && rescale_hi >= rescale_lo)) fail("attack.rescale_lo", "need 0 < lo <= hi");
        if (probes == 0) fail("attack.probes", "must be positive");
    }

    std::size_t watermark_width() const {
        return hidden.at(std::stoul(watermark_layer.substr(std::string("hidden").size())) - 1);
    }

    BlobSpec blob_spec() const {
        BlobSpec s = data;
        s.seed = seed;
        return s;
    }
};

namespace detail {

template <typename T>
std::string join(const std::vector<T>& v) {
    std::ostringstream out;
    for (std::size_t i = 0; i < v.size(); ++i) out << (i ? "," : "") << v[i];
    return out.str();
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        const auto e = item.find_last_not_of(" \t");
        if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
    }
    return out;
}

}  // namespace detail

inline ExperimentConfig parse_config(std::istream& in) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ValidationError(std::string("config parse error: ") + e.what());
    }
    static const std::set<std::string> known{
        "run.seed", "data.samples", "data.test_samples", "data.input_dim", "data.classes", "data.separation",
        "data.noise", "model.hidden", "model.epochs", "model.lr", "model.batch_size", "model.watermark_layer",
        "watermark.bits", "watermark.threshold", "watermark.strength", "watermark.embed_epochs",
        "watermark.embed_lr", "coding.K", "coding.T", "coding.K_corrupted", "triggers.mode", "triggers.J",
        "triggers.steps", "triggers.lr", "triggers.inactive_slope", "triggers.finetune_lr", "triggers.prune_step", "attack.kinds",
        "attack.trials", "attack.ftp_epochs", "attack.ftp_lr", "attack.npp_fraction", "attack.rescale_lo",
        "attack.rescale_hi", "attack.probes", "align.normalize"};
    for (const auto& [section, body] : tree) {
        if (body.empty()) throw ValidationError("config field '" + section + "': keys must live inside a section");
        for (const auto& [key, _] : body) {
            if (!known.contains(section + "." + key)) {
                throw ValidationError("config field '" + section + "." + key + "': unknown key");
            }
        }
    }

    ExperimentConfig c;
    auto get = [&]<typename T>(const char* path, T& dst) {
        const auto v = tree.get_optional<std::string>(path);
        if (!v) return;
        try {
            dst = tree.get<T>(path);
        } catch (const pt::ptree_bad_data&) {
            throw ValidationError(std::string("config field '") + path + "': cannot parse '" + *v + "'");
        }
    };
    get("run.seed", c.seed);
    get("data.samples", c.data.samples);
    get("data.test_samples", c.test_samples);
    get("data.input_dim", c.data.input_dim);
    get("data.classes", c.data.classes);
    get("data.separation", c.data.separation);
    get("data.noise", c.data.noise);
    if (auto v = tree.get_optional<std::string>("model.hidden")) {
        c.hidden.clear();
        for (const auto& item : detail::split_list(*v)) {
            try {
                c.hidden.push_back(std::stoul(item));
            } catch (const std::exception&) {
                throw ValidationError("config field 'model.hidden': cannot parse '" + item + "'");
            }
        }
    }
    get("model.epochs", c.epochs);
    get("model.lr", c.lr);
    get("model.batch_size", c.batch_size);
    get("model.watermark_layer", c.watermark_layer);
    get("watermark.bits", c.wm_bits);
    get("watermark.threshold", c.wm_threshold);
    get("watermark.strength", c.wm_strength);
    get("watermark.embed_epochs", c.embed_epochs);
    get("watermark.embed_lr", c.embed_lr);
    get("coding.K", c.k);
    get("coding.T", c.t);
    get("coding.K_corrupted", c.k_corrupted);
    if (auto v = tree.get_optional<std::string>("triggers.mode")) {
        try {
            c.mode = parse_trigger_mode(*v);
        } catch (const ValidationError& e) {
            throw ValidationError(std::string("config field 'triggers.mode': ") + e.what());
        }
    }
    get("triggers.J", c.j);
    get("triggers.steps", c.trigger_steps);
    get("triggers.lr", c.trigger_lr);
    get("triggers.inactive_slope", c.trigger_inactive_slope);
    get("triggers.finetune_lr", c.ensemble_finetune_lr);
    get("triggers.prune_step", c.ensemble_prune_step);
    if (auto v = tree.get_optional<std::string>("attack.kinds")) {
        c.attacks.clear();
        for (const auto& item : detail::split_list(*v)) {
            try {
                c.attacks.push_back(parse_attack_kind(item));
            } catch (const ValidationError& e) {
                throw ValidationError(std::string("config field 'attack.kinds': ") + e.what());
            }
        }
    }
    get("attack.trials", c.trials);
    get("attack.ftp_epochs", c.ftp_epochs);
    get("attack.ftp_lr", c.ftp_lr);
    get("attack.npp_fraction", c.npp_fraction);
    get("attack.rescale_lo", c.rescale_lo);
    get("attack.rescale_hi", c.rescale_hi);
    get("attack.probes", c.probes);
    get("align.normalize", c.normalize);
    c.validate();
    return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config " + path.string());
    return parse_config(in);
}

// Canonical INI text; parse_config(to_ini(c)) reproduces c.
inline std::string to_ini(const ExperimentConfig& c) {
    std::vector<std::string> kinds;
    for (auto a : c.attacks) kinds.push_back(to_string(a));
    std::ostringstream o;
    o.precision(17);
    o << "[run]\nseed = " << c.seed << "\n\n"
      << "[data]\nsamples = " << c.data.samples << "\ntest_samples = " << c.test_samples
      << "\ninput_dim = " << c.data.input_dim << "\nclasses = " << c.data.classes
      << "\nseparation = " << c.data.separation << "\nnoise = " << c.data.noise << "\n\n"
      << "[model]\nhidden = " << detail::join(c.hidden) << "\nepochs = " << c.epochs << "\nlr = " << c.lr
      << "\nbatch_size = " << c.batch_size << "\nwatermark_layer = " << c.watermark_layer << "\n\n"
      << "[watermark]\nbits = " << c.wm_bits << "\nthreshold = " << c.wm_threshold
      << "\nstrength = " << c.wm_strength << "\nembed_epochs = " << c.embed_epochs
      << "\nembed_lr = " << c.embed_lr << "\n\n"
      << "[coding]\nK = " << c.k << "\nT = " << c.t << "\nK_corrupted = " << c.k_corrupted << "\n\n"
      << "[triggers]\nmode = " << to_string(c.mode) << "\nJ = " << c.j << "\nsteps = " << c.trigger_steps
      << "\nlr = " << c.trigger_lr << "\ninactive_slope = " << c.trigger_inactive_slope << "\nfinetune_lr = " << c.ensemble_finetune_lr
      << "\nprune_step = " << c.ensemble_prune_step << "\n\n"
      << "[attack]\nkinds = " << detail::join(kinds) << "\ntrials = " << c.trials
      << "\nftp_epochs = " << c.ftp_epochs << "\nftp_lr = " << c.ftp_lr << "\nnpp_fraction = " << c.npp_fraction
      << "\nrescale_lo = " << c.rescale_lo << "\nrescale_hi = " << c.rescale_hi << "\nprobes = " << c.probes
      << "\n\n"
      << "[align]\nnormalize = " << (c.normalize ? "true" : "false") << "\n";
    return o.str();
}

}  // namespace nalign
