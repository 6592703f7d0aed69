#pragma once

#include <string>
#include <vector>

#include "ctpm/common.hpp"
#include "ctpm/dataset.hpp"
#include "ctpm/gradients.hpp"
#include "ctpm/linalg.hpp"
#include "ctpm/model.hpp"
#include "ctpm/train.hpp"

namespace ctpm {

// ---------------------------------------------------------------------------
// Random scorer
// ---------------------------------------------------------------------------

inline std::vector<double> random_scores(const data::Dataset& ds, std::uint64_t seed) {
    return uniform_scores(ds.size(), derive_seed(seed, 420));
}

// ---------------------------------------------------------------------------
// Simple CT: a single logistic weight per match, trained in the same
// partition-normalized composite objective as the full model.
// ---------------------------------------------------------------------------

struct SimpleCtModel {
    std::vector<double> weights;  // [bias, x features..., y features...]

    double raw(const data::MatchRecord& rec) const {
        if (weights.size() != 1 + rec.x.size() + rec.y.size()) {
            throw ShapeError("simple_ct: weight length " + std::to_string(weights.size()) +
                             " does not fit record features");
        }
        double z = weights[0];
        std::size_t k = 1;
        for (double v : rec.x) z += weights[k++] * v;
        for (double v : rec.y) z += weights[k++] * v;
        return z;
    }

    double score(const data::MatchRecord& rec) const { return sigmoid(raw(rec)); }
};

inline SimpleCtModel make_simple_ct(int x_dim, int y_dim) {
    require(x_dim > 0 && y_dim > 0, "make_simple_ct: feature dims must be positive");
    SimpleCtModel m;
    m.weights.assign(1 + static_cast<std::size_t>(x_dim) + static_cast<std::size_t>(y_dim), 0.0);
    return m;
}

inline LossReport simple_ct_loss_and_grad(const SimpleCtModel& model, const data::Dataset& ds,
                                          const IpwCoefficients& coef, const ObjectiveSpec& spec,
                                          std::vector<double>* grad) {
    require(!ds.empty(), "simple_ct: empty dataset");
    std::vector<double> unnorm(ds.size());
    for (std::size_t m = 0; m < ds.size(); ++m) {
        unnorm[m] = sigmoid(model.raw(ds.records[m]));
    }
    const OuterGrad outer = outer_gradient(unnorm, coef, spec);
    if (grad != nullptr) {
        grad->assign(model.weights.size(), 0.0);
        for (std::size_t m = 0; m < ds.size(); ++m) {
            const double s = unnorm[m];
            const double gz = outer.dl_du[m] * s * (1.0 - s);
            if (gz == 0.0) continue;
            const auto& rec = ds.records[m];
            (*grad)[0] += gz;
            std::size_t k = 1;
            for (double v : rec.x) (*grad)[k++] += gz * v;
            for (double v : rec.y) (*grad)[k++] += gz * v;
        }
    }
    LossReport rep;
    rep.loss = outer.loss;
    rep.tau_reward = outer.tau_reward;
    rep.tau_cost = outer.tau_cost;
    rep.tau_aux = outer.tau_aux;
    rep.z_total = outer.z_total;
    return rep;
}

inline TrainResult train_simple_ct(SimpleCtModel& model, const data::Dataset& train,
                                   const data::Dataset& validation, const PropensityModel& prop,
                                   const ObjectiveSpec& spec, const TrainConfig& cfg) {
    const IpwCoefficients coef_train = compute_ipw_coefficients(train, prop, spec);
    const IpwCoefficients coef_val = compute_ipw_coefficients(validation, prop, spec);
    const std::size_t dim = model.weights.size();

    TrainHooks hooks;
    hooks.init_params = [dim](Rng& rng) {
        std::vector<double> w(dim, 0.0);
        const double bound = 1.0 / std::sqrt(static_cast<double>(dim - 1));
        for (std::size_t i = 1; i < dim; ++i) w[i] = rng.uniform(-bound, bound);
        return w;
    };
    hooks.train_loss_and_grad = [&](std::span<const double> params, std::vector<double>& grad) {
        model.weights.assign(params.begin(), params.end());
        return simple_ct_loss_and_grad(model, train, coef_train, spec, &grad).loss;
    };
    hooks.val_loss = [&](std::span<const double> params) {
        model.weights.assign(params.begin(), params.end());
        return simple_ct_loss_and_grad(model, validation, coef_val, spec, nullptr).loss;
    };

    TrainResult result = run_training(hooks, cfg);
    model.weights = result.restarts[result.best_restart].params;
    return result;
}

// ---------------------------------------------------------------------------
// R-learner with linear base estimators: outcome model by OLS on [1,x,y],
// then the effect model by least squares on the residual-on-residual
// objective, whose minimizer solves sum((Y - m) - (T - e) tau(x))^2.
// ---------------------------------------------------------------------------

struct RLearnerModel {
    std::string dim;
    std::vector<double> outcome_coef;  // on [1, x, y]
    std::vector<double> effect_coef;   // on [1, x, y]

    static std::vector<double> design_row(const data::MatchRecord& rec) {
        std::vector<double> row;
        row.reserve(1 + rec.x.size() + rec.y.size());
        row.push_back(1.0);
        row.insert(row.end(), rec.x.begin(), rec.x.end());
        row.insert(row.end(), rec.y.begin(), rec.y.end());
        return row;
    }

    double outcome_estimate(const data::MatchRecord& rec) const {
        const auto row = design_row(rec);
        require(row.size() == outcome_coef.size(), "rlearner: design size mismatch");
        double v = 0.0;
        for (std::size_t i = 0; i < row.size(); ++i) v += outcome_coef[i] * row[i];
        return v;
    }

    // predicted conditional effect; also the ranking score
    double score(const data::MatchRecord& rec) const {
        const auto row = design_row(rec);
        require(row.size() == effect_coef.size(), "rlearner: design size mismatch");
        double v = 0.0;
        for (std::size_t i = 0; i < row.size(); ++i) v += effect_coef[i] * row[i];
        return v;
    }
};

// Per-dimension effect models combined at evaluation time (Eqs. 1-2): the
// plug-in composite score over the fitted tau-hats.
struct RLearnerSet {
    RLearnerModel reward, cost, aux;
};

inline double rlearner_score(const RLearnerSet& set, const data::MatchRecord& rec,
                             const ObjectiveSpec& spec) {
    const double tr = set.reward.score(rec);
    const double tc = set.cost.score(rec);
    const double ta = set.aux.score(rec);
    if (spec.form == ObjectiveForm::QualityNetReward) return ta * (tr - spec.lambda * tc);
    // negated so higher is better under either form
    return -(tc / guarded_reward(tr) + spec.lambda * ta);
}

inline RLearnerModel fit_rlearner(const data::Dataset& ds, const PropensityModel& prop,
                                  const std::string& dim) {
    require(!ds.empty(), "fit_rlearner: empty dataset");
    const std::size_t nt = ds.treated_count();
    if (nt == 0 || nt == ds.size()) {
        throw DataError("fit_rlearner: both cohorts required (treated " + std::to_string(nt) +
                        " of " + std::to_string(ds.size()) + ")");
    }
    RLearnerModel model;
    model.dim = dim;

    linalg::Matrix design;
    std::vector<double> y;
    design.reserve(ds.size());
    y.reserve(ds.size());
    for (const auto& rec : ds.records) {
        design.push_back(RLearnerModel::design_row(rec));
        y.push_back(rec.outcome(dim));
    }
    model.outcome_coef = linalg::least_squares(design, y);

    linalg::Matrix scaled;
    std::vector<double> resid;
    scaled.reserve(ds.size());
    resid.reserve(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto& rec = ds.records[i];
        const double e = prop.score(rec);
        const double w = static_cast<double>(rec.treatment) - e;
        std::vector<double> row = design[i];
        for (double& v : row) v *= w;
        scaled.push_back(std::move(row));
        resid.push_back(y[i] - model.outcome_estimate(rec));
    }
    model.effect_coef = linalg::least_squares(scaled, resid);
    return model;
}

inline RLearnerSet fit_rlearner_set(const data::Dataset& ds, const PropensityModel& prop,
                                    const ObjectiveSpec& spec) {
    RLearnerSet set;
    set.reward = fit_rlearner(ds, prop, spec.reward_dim);
    set.cost = fit_rlearner(ds, prop, spec.cost_dim);
    set.aux = fit_rlearner(ds, prop, spec.aux_dim);
    return set;
}

}  // namespace ctpm
