#pragma once

#include <string>
#include <vector>

#include "ctpm/common.hpp"
#include "ctpm/dataset.hpp"
#include "ctpm/optim.hpp"

namespace ctpm {

enum class PropensityKind { Constant, Logistic };

inline PropensityKind propensity_kind_from_string(const std::string& s) {
    if (s == "constant") return PropensityKind::Constant;
    if (s == "logistic") return PropensityKind::Logistic;
    throw ConfigError("unknown propensity kind '" + s + "' (expected constant|logistic)");
}

inline std::string to_string(PropensityKind k) {
    return k == PropensityKind::Constant ? "constant" : "logistic";
}

struct PropensityConfig {
    PropensityKind kind = PropensityKind::Constant;
    bool use_candidate_features = false;  // subject-only by default
    std::size_t iterations = 200;
    double learning_rate = 0.1;
    double clip = 0.01;
};

// Treatment-assignment model. Scores are clipped away from 0 and 1 so the
// inverse-propensity terms stay bounded.
struct PropensityModel {
    PropensityKind kind = PropensityKind::Constant;
    double treated_rate = 0.5;  // overall cohort rate, also the constant score
    bool use_candidate_features = false;
    std::vector<double> weights;  // logistic: [bias, features...]
    double clip = 0.01;

    std::vector<double> features(const data::MatchRecord& rec) const {
        std::vector<double> f = rec.x;
        if (use_candidate_features) f.insert(f.end(), rec.y.begin(), rec.y.end());
        return f;
    }

    double score(const data::MatchRecord& rec) const {
        double e = treated_rate;
        if (kind == PropensityKind::Logistic) {
            const auto f = features(rec);
            if (f.size() + 1 != weights.size()) {
                throw ShapeError("propensity score: feature length " + std::to_string(f.size()) +
                                 " does not match model with " + std::to_string(weights.size()) +
                                 " weights");
            }
            double z = weights[0];
            for (std::size_t i = 0; i < f.size(); ++i) z += weights[i + 1] * f[i];
            e = sigmoid(z);
        }
        return clamp(e, clip, 1.0 - clip);
    }
};

inline PropensityModel fit_propensity(const data::Dataset& ds, const PropensityConfig& cfg) {
    require(!ds.empty(), "fit_propensity: empty dataset");
    if (cfg.clip <= 0.0 || cfg.clip >= 0.5) {
        throw ConfigError("propensity clip must be in (0,0.5)");
    }
    PropensityModel model;
    model.kind = cfg.kind;
    model.use_candidate_features = cfg.use_candidate_features;
    model.clip = cfg.clip;
    model.treated_rate =
        static_cast<double>(ds.treated_count()) / static_cast<double>(ds.size());
    if (cfg.kind == PropensityKind::Constant) return model;

    const std::size_t dim =
        ds.records.front().x.size() +
        (cfg.use_candidate_features ? ds.records.front().y.size() : 0);
    model.weights.assign(dim + 1, 0.0);  // convex problem; zero init is deterministic

    diffcore::AdamState adam(model.weights.size(), cfg.learning_rate);
    std::vector<double> grad(model.weights.size());
    const double inv_n = 1.0 / static_cast<double>(ds.size());
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        std::fill(grad.begin(), grad.end(), 0.0);
        for (const auto& rec : ds.records) {
            const auto f = model.features(rec);
            double z = model.weights[0];
            for (std::size_t i = 0; i < f.size(); ++i) z += model.weights[i + 1] * f[i];
            const double resid = (sigmoid(z) - static_cast<double>(rec.treatment)) * inv_n;
            grad[0] += resid;
            for (std::size_t i = 0; i < f.size(); ++i) grad[i + 1] += resid * f[i];
        }
        diffcore::adam_step(model.weights, grad, adam);
    }
    return model;
}

}  // namespace ctpm
