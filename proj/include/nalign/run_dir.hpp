#pragma once

// A run directory holds the stage artifacts plus manifest.json, which maps
// each artifact file to its SHA-256. Every read is checked against it.

#include <filesystem>
#include <fstream>
#include <string>

#include "experiment.hpp"

namespace nalign {

namespace artifact {
inline constexpr const char* config = "config.ini";
inline constexpr const char* model = "model.naf";
inline constexpr const char* watermark = "watermark.naf";
inline constexpr const char* centroids = "centroids.naf";
inline constexpr const char* codebook = "codebook.naf";
inline std::string triggers(TriggerMode m) { return "triggers_" + to_string(m) + ".naf"; }
}  // namespace artifact

class RunDir {
public:
    explicit RunDir(std::filesystem::path root) : root_(std::move(root)) {
        if (std::filesystem::exists(manifest_path())) {
            std::ifstream in(manifest_path());
            try {
                manifest_ = json::parse(in);
            } catch (const json::exception& e) {
                throw FormatError(std::string("manifest.json: ") + e.what(), 0);
            }
        } else {
            manifest_ = json{{"files", json::object()}, {"host", json::object()}};
        }
    }

    const std::filesystem::path& root() const { return root_; }
    std::filesystem::path path(const std::string& name) const { return root_ / name; }
    std::filesystem::path manifest_path() const { return root_ / "manifest.json"; }
    json& manifest() { return manifest_; }
    const json& manifest() const { return manifest_; }

    void put(const std::string& name, std::span<const std::uint8_t> bytes) {
        std::filesystem::create_directories(path(name).parent_path());
        write_file(path(name), bytes);
        manifest_["files"][name] = sha256_hex(bytes);
        flush();
    }

    void put_text(const std::string& name, const std::string& text) {
        put(name, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
    }

    std::vector<std::uint8_t> get(const std::string& name) const {
        if (!manifest_["files"].contains(name)) throw IntegrityError("artifact '" + name + "' is not in the manifest");
        auto bytes = read_file(path(name));
        if (sha256_hex(bytes) != manifest_["files"][name].get<std::string>()) {
            throw IntegrityError("artifact '" + name + "' does not match its manifest hash");
        }
        return bytes;
    }

    bool has(const std::string& name) const { return manifest_["files"].contains(name); }

    void flush() const {
        std::filesystem::create_directories(root_);
        std::ofstream out(manifest_path());
        out << manifest_.dump(2) << '\n';
    }

    ExperimentConfig config() const {
        const auto bytes = get(artifact::config);
        std::istringstream in(std::string(bytes.begin(), bytes.end()));
        return parse_config(in);
    }
    void set_config(const ExperimentConfig& cfg) { put_text(artifact::config, to_ini(cfg)); }

    Network model() const { return deserialize_model(get(artifact::model)); }
    WatermarkRecord watermark() const { return deserialize_watermark(get(artifact::watermark)); }
    CentroidSet centroids() const { return deserialize_centroids(get(artifact::centroids)); }
    Codebook codebook() const { return deserialize_codebook(get(artifact::codebook)); }
    TriggerSet triggers(TriggerMode m) const { return deserialize_triggers(get(artifact::triggers(m))); }

private:
    std::filesystem::path root_;
    json manifest_;
};

inline void store_host(RunDir& dir, const HostModel& host) {
    dir.put(artifact::model, serialize_model(host.model));
    dir.put(artifact::watermark, serialize_watermark(host.record));
    dir.manifest()["host"] = json{{"accuracy_before_embed", host.accuracy_before_embed},
                                  {"accuracy_after_embed", host.accuracy_after_embed},
                                  {"epoch_loss", host.epoch_loss}};
    dir.flush();
}

inline void store_encoding(RunDir& dir, const Encoding& enc) {
    dir.put(artifact::centroids, serialize_centroids(enc.centroids));
    dir.put(artifact::codebook, serialize_codebook(enc.codebook.codebook));
    dir.manifest()["encoding"] = json{{"requested_d_min", enc.codebook.requested_d_min},
                                      {"fell_back", enc.codebook.fell_back},
                                      {"t_corrupted_bound", enc.t_corrupted_bound}};
    dir.flush();
}

inline void store_triggers(RunDir& dir, const TriggerSet& ts) {
    dir.put(artifact::triggers(ts.mode), serialize_triggers(ts));
}

inline HostModel load_host(const RunDir& dir) {
    HostModel host;
    host.model = dir.model();
    host.record = dir.watermark();
    const json& h = dir.manifest()["host"];
    host.accuracy_before_embed = h.value("accuracy_before_embed", 0.0);
    host.accuracy_after_embed = h.value("accuracy_after_embed", 0.0);
    host.epoch_loss = h.value("epoch_loss", std::vector<double>{});
    return host;
}

inline Encoding load_encoding(const RunDir& dir) {
    Encoding enc;
    enc.centroids = dir.centroids();
    enc.codebook.codebook = dir.codebook();
    const json& e = dir.manifest().value("encoding", json::object());
    enc.codebook.requested_d_min = e.value("requested_d_min", enc.codebook.codebook.d_min);
    enc.codebook.fell_back = e.value("fell_back", false);
    enc.t_corrupted_bound = e.value("t_corrupted_bound", std::uint64_t{0});
    return enc;
}

inline PipelineArtifacts load_artifacts(const RunDir& dir) {
    PipelineArtifacts a;
    a.config = dir.config();
    a.config.validate();
    a.data = make_experiment_data(a.config);
    a.host = load_host(dir);
    a.reference = reference_network(a.config, a.host.model);
    a.encoding = load_encoding(dir);
    a.t1 = dir.triggers(TriggerMode::t1);
    a.t2 = dir.triggers(TriggerMode::t2);
    if (a.t1.codebook_hash != codebook_hash(a.encoding.codebook.codebook) ||
        a.t2.codebook_hash != codebook_hash(a.encoding.codebook.codebook)) {
        throw IntegrityError("trigger sets were forged against a different codebook");
    }
    return a;
}

}  // namespace nalign
