#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "ctpm/common.hpp"
#include "ctpm/gradients.hpp"
#include "ctpm/model.hpp"
#include "ctpm/optim.hpp"

namespace ctpm {

struct TrainConfig {
    std::size_t iterations = 300;
    std::size_t restarts = 6;
    double learning_rate = 0.01;
    std::uint64_t seed = 1;
};

struct TrainHistory {
    std::vector<double> train_loss;  // objective before each update
    std::vector<double> val_loss;
};

struct RestartResult {
    std::size_t restart_index = 0;
    bool aborted = false;
    std::string abort_reason;
    double final_train_loss = std::numeric_limits<double>::infinity();
    double final_val_loss = std::numeric_limits<double>::infinity();
    TrainHistory history;
    std::vector<double> params;
};

struct TrainResult {
    std::size_t best_restart = 0;
    double best_val_loss = std::numeric_limits<double>::infinity();
    std::vector<RestartResult> restarts;
};

// Model-agnostic restart loop: each restart draws fresh parameters, runs Adam
// for a fixed number of full-batch iterations, and is scored by its final
// validation loss. A restart that goes non-finite is dropped; the run only
// fails if every restart does.
struct TrainHooks {
    std::function<std::vector<double>(Rng&)> init_params;
    std::function<double(std::span<const double> params, std::vector<double>& grad)>
        train_loss_and_grad;
    std::function<double(std::span<const double> params)> val_loss;
};

inline TrainResult run_training(const TrainHooks& hooks, const TrainConfig& cfg) {
    require(cfg.iterations > 0, "training needs at least one iteration");
    require(cfg.restarts > 0, "training needs at least one restart");
    TrainResult result;
    std::string last_reason = "no restarts ran";
    for (std::size_t r = 0; r < cfg.restarts; ++r) {
        RestartResult rr;
        rr.restart_index = r;
        Rng rng(derive_seed(cfg.seed, 300 + r));
        std::vector<double> params = hooks.init_params(rng);
        diffcore::AdamState adam(params.size(), cfg.learning_rate);
        std::vector<double> grad;
        try {
            for (std::size_t it = 0; it < cfg.iterations; ++it) {
                const double train_loss = hooks.train_loss_and_grad(params, grad);
                const double val_loss = hooks.val_loss(params);
                if (!std::isfinite(train_loss) || !std::isfinite(val_loss)) {
                    throw NumericError("non-finite objective at iteration " + std::to_string(it));
                }
                rr.history.train_loss.push_back(train_loss);
                rr.history.val_loss.push_back(val_loss);
                diffcore::adam_step(params, grad, adam);
            }
            std::vector<double> unused;
            rr.final_train_loss = hooks.train_loss_and_grad(params, unused);
            rr.final_val_loss = hooks.val_loss(params);
            if (!std::isfinite(rr.final_train_loss) || !std::isfinite(rr.final_val_loss)) {
                throw NumericError("non-finite objective after final update");
            }
            rr.params = std::move(params);
        } catch (const NumericError& e) {
            rr.aborted = true;
            rr.abort_reason = e.what();
            last_reason = e.what();
        }
        result.restarts.push_back(std::move(rr));
    }
    bool any = false;
    for (const auto& rr : result.restarts) {
        if (rr.aborted) continue;
        if (!any || rr.final_val_loss < result.best_val_loss) {
            result.best_restart = rr.restart_index;
            result.best_val_loss = rr.final_val_loss;
            any = true;
        }
    }
    if (!any) {
        throw NumericError("all training restarts aborted; last reason: " + last_reason);
    }
    return result;
}

// Value-only objective evaluation against precomputed coefficients.
inline LossReport ctpm_loss_only(const CtpmModel& model, const data::Dataset& ds,
                                 const IpwCoefficients& coef, const ObjectiveSpec& spec) {
    detail::RecordScratch s;
    std::vector<double> unnorm(ds.size());
    for (std::size_t m = 0; m < ds.size(); ++m) {
        unnorm[m] = detail::forward_record(model, ds.records[m], s);
    }
    const OuterGrad outer = outer_gradient(unnorm, coef, spec);
    LossReport rep;
    rep.loss = outer.loss;
    rep.tau_reward = outer.tau_reward;
    rep.tau_cost = outer.tau_cost;
    rep.tau_aux = outer.tau_aux;
    rep.z_total = outer.z_total;
    return rep;
}

// Trains the CTPM model in place; returns the per-restart record. The model is
// left holding the winning restart's parameters.
inline TrainResult train_ctpm(CtpmModel& model, const data::Dataset& train,
                              const data::Dataset& validation, const PropensityModel& prop,
                              const ObjectiveSpec& spec, const TrainConfig& cfg) {
    const IpwCoefficients coef_train = compute_ipw_coefficients(train, prop, spec);
    const IpwCoefficients coef_val = compute_ipw_coefficients(validation, prop, spec);

    TrainHooks hooks;
    hooks.init_params = [&](Rng& rng) {
        init_ctpm_params(model, rng);
        return get_params(model);
    };
    hooks.train_loss_and_grad = [&](std::span<const double> params, std::vector<double>& grad) {
        set_params(model, params);
        return ctpm_loss_and_grad(model, train, coef_train, spec, grad).loss;
    };
    hooks.val_loss = [&](std::span<const double> params) {
        set_params(model, params);
        return ctpm_loss_only(model, validation, coef_val, spec).loss;
    };

    TrainResult result = run_training(hooks, cfg);
    set_params(model, result.restarts[result.best_restart].params);
    return result;
}

}  // namespace ctpm
