#pragma once

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "ctpm/common.hpp"
#include "ctpm/dataset.hpp"
#include "json.hpp"

namespace ctpm::data {

// Planted-effect generator. The reward uplift has three parts with distinct
// structure: a convex softplus term in one subject feature (its top tail is
// mis-ranked by any global least-squares fit), a linear candidate term, and a
// bilinear-affinity bell in the intensity centered at a per-pair optimum.
// A shared saturating gate along x1 can additionally modulate quality lift,
// treatment cost, and assignment odds, which makes naive constant-propensity
// fits systematically wrong along the gate axis while a fitted logistic
// propensity stays correctly specified.
struct SyntheticConfig {
    std::size_t n_records = 20000;
    std::size_t subject_dims = 4;    // >= 4; extras are distractors
    std::size_t candidate_dims = 4;  // >= 4; extras are distractors
    double treatment_rate = 0.5;
    double noise_r = 0.25;
    double noise_c = 0.10;
    double prognostic_gain = 0.3;  // shared base outcome, nets out of the ATE
    double uplift_base = 0.10;
    double convex_gain = 2.0;
    double linear_gain = 0.5;
    double bell_gain = 2.2;
    double bell_width = 0.15;
    double cost_base = 0.2;
    double cost_slope = 1.0;
    double cost_bell = 0.0;  // signed cost term along the affinity bell; keep small so
                             // cost stays increasing in intensity
    double quality_base = 0.1;
    double quality_lift = 0.7;
    double quality_gate = 0.0;   // gate coefficient on the quality lift; 0 = constant lift
    double cost_gate = 0.0;      // extra treated cost for pairs outside the gate
    double assign_gate = 0.0;    // gate-axis tilt of the assignment log-odds; 0 = constant rate
    double gate_sharpness = 1.5; // slope of the shared saturating gate sigmoid(k*(x1-c))
    double gate_center = 0.0;    // center of the shared gate
    std::uint64_t seed = 1;
};

struct SyntheticGroundTruth {
    std::vector<double> pstar;     // per-record optimal intensity
    std::vector<double> affinity;  // per-record pair affinity in (0,1)
    std::vector<double> uplift_r;  // reward uplift at the sampled intensity
    std::vector<double> uplift_c;  // cost uplift at the sampled intensity
};

struct SyntheticResult {
    Dataset dataset;
    SyntheticGroundTruth truth;
};

inline double planted_pstar(const std::vector<double>& x, const std::vector<double>& y) {
    return sigmoid(1.2 * x[0] + 0.9 * y[0]);
}

inline double planted_affinity(const std::vector<double>& x, const std::vector<double>& y) {
    return sigmoid(1.8 * (x[2] * y[2] + x[3] * y[3]));
}

inline SyntheticResult generate_synthetic(const SyntheticConfig& cfg) {
    if (cfg.subject_dims < 4 || cfg.candidate_dims < 4) {
        throw ConfigError("synthetic generator needs at least 4 subject and 4 candidate dims");
    }
    if (cfg.treatment_rate <= 0.0 || cfg.treatment_rate >= 1.0) {
        throw ConfigError("treatment_rate must be in (0,1)");
    }
    require(cfg.n_records > 0, "n_records must be positive");
    require(cfg.bell_width > 0.0, "bell_width must be positive");

    Rng rng(derive_seed(cfg.seed, 200));
    SyntheticResult out;
    Dataset& ds = out.dataset;
    for (std::size_t i = 0; i < cfg.subject_dims; ++i) {
        ds.subject_feature_names.push_back("x" + std::to_string(i));
    }
    for (std::size_t i = 0; i < cfg.candidate_dims; ++i) {
        ds.candidate_feature_names.push_back("y" + std::to_string(i));
    }
    ds.outcome_names = {"r", "c", "q"};
    ds.records.reserve(cfg.n_records);

    for (std::size_t i = 0; i < cfg.n_records; ++i) {
        MatchRecord rec;
        rec.subject_id = "s" + std::to_string(i);
        rec.candidate_id = "c" + std::to_string(i);
        rec.x.resize(cfg.subject_dims);
        rec.y.resize(cfg.candidate_dims);
        for (auto& v : rec.x) v = rng.normal();
        for (auto& v : rec.y) v = rng.normal();
        rec.intensity = rng.uniform01();
        const double gate = sigmoid(cfg.gate_sharpness * (rec.x[1] - cfg.gate_center));
        const double assign_p =
            cfg.assign_gate == 0.0
                ? cfg.treatment_rate
                : sigmoid(std::log(cfg.treatment_rate / (1.0 - cfg.treatment_rate)) +
                          cfg.assign_gate * rec.x[1]);
        rec.treatment = rng.bernoulli(assign_p) ? 1 : 0;
        const double eps_r = rng.normal();
        const double eps_c = rng.normal();

        const double pstar = planted_pstar(rec.x, rec.y);
        const double aff = planted_affinity(rec.x, rec.y);
        const double dp = rec.intensity - pstar;
        const double bell = std::exp(-dp * dp / (2.0 * cfg.bell_width * cfg.bell_width));
        const double up_r = cfg.uplift_base + cfg.convex_gain * softplus(rec.x[1] - 1.0) +
                            cfg.linear_gain * rec.y[1] + cfg.bell_gain * aff * bell;
        const double up_c = cfg.cost_base + cfg.cost_slope * rec.intensity +
                            cfg.cost_gate * (1.0 - gate) + cfg.cost_bell * aff * bell;
        const double prog = cfg.prognostic_gain * (rec.x[0] + rec.y[0]);

        const double t = static_cast<double>(rec.treatment);
        rec.outcomes["r"] = prog + t * up_r + cfg.noise_r * eps_r;
        rec.outcomes["c"] = t * up_c + cfg.noise_c * eps_c;
        const double up_q = cfg.quality_lift + cfg.quality_gate * gate;
        rec.outcomes["q"] = cfg.quality_base + t * up_q;

        out.truth.pstar.push_back(pstar);
        out.truth.affinity.push_back(aff);
        out.truth.uplift_r.push_back(up_r);
        out.truth.uplift_c.push_back(up_c);
        ds.records.push_back(std::move(rec));
    }
    return out;
}

inline TableSchema synthetic_schema(std::size_t subject_dims, std::size_t candidate_dims) {
    TableSchema s;
    for (std::size_t i = 0; i < subject_dims; ++i) {
        s.subject_features.push_back("x" + std::to_string(i));
    }
    for (std::size_t i = 0; i < candidate_dims; ++i) {
        s.candidate_features.push_back("y" + std::to_string(i));
    }
    s.outcomes = {{"r", "r"}, {"c", "c"}, {"q", "q"}};
    return s;
}

inline void save_truth(const SyntheticGroundTruth& truth, const std::string& path) {
    nlohmann::json j;
    j["format"] = "ctpm-truth";
    j["version"] = 1;
    j["pstar"] = truth.pstar;
    j["affinity"] = truth.affinity;
    j["uplift_r"] = truth.uplift_r;
    j["uplift_c"] = truth.uplift_c;
    std::ofstream out(path);
    if (!out) throw DataError("cannot write truth file: " + path);
    out << j.dump(2) << "\n";
    if (!out) throw DataError("write failed: " + path);
}

inline SyntheticGroundTruth load_truth(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open truth file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw DataError("cannot parse truth file " + path + ": " + e.what());
    }
    if (!j.contains("format") || j["format"] != "ctpm-truth") {
        throw DataError("not a truth file: " + path);
    }
    SyntheticGroundTruth t;
    t.pstar = j.at("pstar").get<std::vector<double>>();
    t.affinity = j.at("affinity").get<std::vector<double>>();
    t.uplift_r = j.at("uplift_r").get<std::vector<double>>();
    t.uplift_c = j.at("uplift_c").get<std::vector<double>>();
    const std::size_t n = t.pstar.size();
    if (t.affinity.size() != n || t.uplift_r.size() != n || t.uplift_c.size() != n) {
        throw DataError("truth file arrays have inconsistent lengths: " + path);
    }
    return t;
}

}  // namespace ctpm::data
