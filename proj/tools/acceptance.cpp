#include <chrono>
#include <cstdio>
#include <iostream>

#include "nalign/experiment.hpp"

using namespace nalign;

namespace {

int failures = 0;

void line(bool ok, const std::string& name, const std::string& detail) {
    std::printf("%s  %-28s %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
    std::fflush(stdout);
    failures += !ok;
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

void capacity_grid_exact() {
    const auto start = std::chrono::steady_clock::now();
    const std::uint64_t want[2][8] = {{4, 12, 21, 29, 38, 47, 56, 65}, {4, 11, 20, 28, 37, 46, 55, 64}};
    int matched = 0;
    for (std::size_t r = 0; r < 2; ++r) {
        for (std::size_t c = 0; c < 8; ++c) matched += max_correctable(kCapacityNs[r], kCapacityTs[c], 2, 1) == want[r][c];
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    line(matched == 16 && secs < 1.0, "capacity-grid", fmt("%d/16 entries exact in %.3f s", matched, secs));
}

void functional_equivalence(const PipelineArtifacts& a) {
    double worst = 0.0;
    for (auto kind : {AttackKind::np, AttackKind::rescale}) {
        for (std::uint64_t s = 0; s < 20; ++s) {
            ExperimentConfig cfg = a.config;
            cfg.probes = 1000;
            worst = std::max(worst, run_attack(cfg, a.host.model, a.data.train, kind, derive_seed(99, s)).report.functional_drift);
        }
    }
    line(worst <= 1e-5, "functional-equivalence", fmt("max |delta logits| %.3g over NP+RESCALE, 20 seeds x 1000 probes", worst));
}

void ecc_radius(const Codebook& cb) {
    Rng rng(2024);
    int ok = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t idx = rng.below(cb.n);
        std::vector<std::uint8_t> w(cb.word(idx).begin(), cb.word(idx).end());
        std::vector<std::size_t> pos(cb.t);
        for (std::size_t i = 0; i < cb.t; ++i) pos[i] = i;
        rng.shuffle(pos);
        const std::size_t flips = rng.below(cb.radius() + 1);
        for (std::size_t f = 0; f < flips; ++f) w[pos[f]] = static_cast<std::uint8_t>((w[pos[f]] + 1 + rng.below(cb.k - 1)) % cb.k);
        ok += decode_codeword(w, cb).index == idx;
    }
    line(ok == 1000, "ecc-radius", fmt("%d/1000 decoded (N=%zu T=%zu d_min=%zu radius=%zu)", ok, cb.n, cb.t, cb.d_min, cb.radius()));
}

const json* attack_row(const json& report, const std::string& kind) {
    for (const auto& row : report["attacks"]) {
        if (row["attack"] == kind) return &row;
    }
    return nullptr;
}

void np_recovery(const json& report) {
    const json* row = attack_row(report, "NP");
    if (!row) return line(false, "np-recovery", "NP attack missing from report");
    const double plain = (*row)["accept_without_alignment"]["rate"];
    const double t1 = (*row)["accept_t1"]["rate"];
    const double acc = (*row)["alignment_accuracy_t1"];
    line(plain == 0.0 && t1 >= 0.95 && acc >= 0.95, "np-recovery",
         fmt("%d trials: accept %.2f without alignment, %.2f with T1; neuron accuracy %.4f",
             (*row)["trials"].get<int>(), plain, t1, acc));
}

void robustness_ordering(const json& report) {
    for (const char* kind : {"FTP", "NPP"}) {
        const json* row = attack_row(report, kind);
        if (!row) {
            line(false, std::string("ordering-") + kind, "attack missing from report");
            continue;
        }
        const double p = (*row)["p_t2_ge_t1"];
        line(p >= 0.95, std::string("ordering-") + kind,
             fmt("accept T1 %.2f, T2 %.2f; bootstrap P(T2 >= T1) = %.3f", (*row)["accept_t1"]["rate"].get<double>(),
                 (*row)["accept_t2"]["rate"].get<double>(), p));
    }
}

void separation(const json& report) {
    const double gap = report["centroid_gap"];
    double t1 = -1, normal = -1;
    for (const auto& row : report["separation"]) {
        if (row["mode"] == "T1") t1 = row["intra"];
        if (row["mode"] == "N") normal = row["intra"];
    }
    line(t1 >= 0 && t1 <= gap / 10 && normal > gap / 10, "separation",
         fmt("gap/10 = %.4f; T1 intra %.4f, normal-sample intra %.4f", gap / 10, t1, normal));
}

void gradient_check() {
    Rng rng(77);
    std::size_t checked = 0, skipped = 0;
    double worst = 0.0;
    for (std::uint64_t s = 0; s < 20; ++s) {
        const std::vector<Network> nets{Network::create(64, std::vector<std::size_t>{128, 32, 16}, 4, derive_seed(500, s))};
        TriggerObjective obj{"hidden2", std::vector<double>(32), {}};
        for (auto& t : obj.targets) t = rng.uniform(0.0, 2.5);
        std::vector<double> x(64);
        for (auto& v : x) v = rng.uniform(-3.0, 3.0);
        const auto grad = input_gradient(nets, x, obj);
        const double h = 1e-4;
        for (std::size_t i = 0; i < x.size(); ++i) {
            auto xp = x, xm = x;
            xp[i] += h;
            xm[i] -= h;
            const auto tp = forward_sample(nets[0], xp, 2), tm = forward_sample(nets[0], xm, 2);
            bool kink = false;
            for (std::size_t l = 0; l < 2; ++l) {
                for (std::size_t n = 0; n < tp.pre[l].size(); ++n) kink |= (tp.pre[l][n] > 0) != (tm.pre[l][n] > 0);
            }
            if (kink) {
                ++skipped;
                continue;
            }
            const double fd = (evaluate_objective(nets, xp, obj).loss - evaluate_objective(nets, xm, obj).loss) / (2 * h);
            const double scale = std::max({std::abs(fd), std::abs(grad[i]), 1e-8});
            worst = std::max(worst, std::abs(fd - grad[i]) / scale);
            ++checked;
        }
    }
    line(worst <= 1e-3 && checked > 0, "gradient", fmt("20 nets, %zu components, worst relative error %.2e (%zu straddled a relu kink)", checked, worst, skipped));
}

}  // namespace

int main() {
    try {
        capacity_grid_exact();
        gradient_check();

        const ExperimentConfig cfg;
        const auto start = std::chrono::steady_clock::now();
        const PipelineArtifacts a = build_artifacts(cfg);
        ReportTimer timer;
        json report = make_report(a, &timer);
        report["timings"] = timer.timings;
        const double first = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

        functional_equivalence(a);
        ecc_radius(a.encoding.codebook.codebook);
        np_recovery(report);
        robustness_ordering(report);
        separation(report);

        const json again = run_pipeline(cfg);
        const bool same = strip_timings(report).dump() == strip_timings(again).dump();
        line(same, "determinism", fmt("two full pipeline runs (%.1f s each) %s modulo timings", first,
                                      same ? "byte-identical" : "differ"));
    } catch (const std::exception& e) {
        line(false, "pipeline", e.what());
    }
    return failures == 0 ? 0 : 1;
}
