#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "ctpm/common.hpp"
#include "ctpm/dataset.hpp"
#include "ctpm/nets.hpp"
#include "ctpm/policy.hpp"
#include "ctpm/propensity.hpp"

namespace ctpm {

// ---------------------------------------------------------------------------
// Composite objectives over weighted treatment-effect estimates.
//
// quality_net_reward: loss = -tau_aux * (tau_r - lambda * tau_c)
// cost_per_reward:    loss = tau_c / guard(tau_r) + lambda * tau_aux
// ---------------------------------------------------------------------------

enum class ObjectiveForm { QualityNetReward, CostPerReward };

inline ObjectiveForm objective_form_from_string(const std::string& s) {
    if (s == "quality_net_reward") return ObjectiveForm::QualityNetReward;
    if (s == "cost_per_reward") return ObjectiveForm::CostPerReward;
    throw ConfigError("unknown objective form '" + s +
                      "' (expected quality_net_reward|cost_per_reward)");
}

inline std::string to_string(ObjectiveForm f) {
    return f == ObjectiveForm::QualityNetReward ? "quality_net_reward" : "cost_per_reward";
}

struct ObjectiveSpec {
    ObjectiveForm form = ObjectiveForm::CostPerReward;
    double lambda = 0.1;
    std::string reward_dim = "r";
    std::string cost_dim = "c";
    std::string aux_dim = "q";  // quality gate or magnitude penalty, by form

    std::array<std::string, 3> dims() const { return {reward_dim, cost_dim, aux_dim}; }
};

// The reward estimate sits in a denominator under cost_per_reward; keep it
// away from zero without flipping its sign. Derivative is zero when clamped.
inline constexpr double kRewardGuard = 1e-6;

inline double guarded_reward(double tau_r) {
    if (std::fabs(tau_r) >= kRewardGuard) return tau_r;
    return tau_r < 0.0 ? -kRewardGuard : kRewardGuard;
}

struct CompositeGrad {
    double loss = 0.0;
    double d_reward = 0.0;
    double d_cost = 0.0;
    double d_aux = 0.0;
};

inline CompositeGrad composite_grad(const ObjectiveSpec& spec, double tau_r, double tau_c,
                                    double tau_aux) {
    CompositeGrad g;
    if (spec.form == ObjectiveForm::QualityNetReward) {
        const double net = tau_r - spec.lambda * tau_c;
        g.loss = -tau_aux * net;
        g.d_reward = -tau_aux;
        g.d_cost = spec.lambda * tau_aux;
        g.d_aux = -net;
    } else {
        const double tr = guarded_reward(tau_r);
        g.loss = tau_c / tr + spec.lambda * tau_aux;
        g.d_reward = std::fabs(tau_r) >= kRewardGuard ? -tau_c / (tau_r * tau_r) : 0.0;
        g.d_cost = 1.0 / tr;
        g.d_aux = spec.lambda;
    }
    return g;
}

inline double composite_loss(const ObjectiveSpec& spec, double tau_r, double tau_c,
                             double tau_aux) {
    return composite_grad(spec, tau_r, tau_c, tau_aux).loss;
}

// ---------------------------------------------------------------------------
// Inverse-propensity coefficients: tau_d = sum_m weight_m * coef[m][d], where
// coef is e_hat*Y/e for treated records and -(1-e_hat)*Y/(1-e) for control.
// ---------------------------------------------------------------------------

struct IpwCoefficients {
    std::array<std::string, 3> dims;
    std::vector<std::array<double, 3>> coef;  // per record, aligned with dims
};

inline IpwCoefficients compute_ipw_coefficients(const data::Dataset& ds,
                                                const PropensityModel& prop,
                                                const ObjectiveSpec& spec) {
    const std::size_t nt = ds.treated_count();
    if (nt == 0 || nt == ds.size()) {
        throw DataError("effect estimation needs both cohorts present (treated count " +
                        std::to_string(nt) + " of " + std::to_string(ds.size()) + ")");
    }
    IpwCoefficients out;
    out.dims = spec.dims();
    out.coef.reserve(ds.size());
    const double e_hat = prop.treated_rate;
    for (const auto& rec : ds.records) {
        const double e = prop.score(rec);
        std::array<double, 3> c{};
        for (std::size_t j = 0; j < 3; ++j) {
            const double y = rec.outcome(out.dims[j]);
            c[j] = rec.treatment == 1 ? e_hat * y / e : -(1.0 - e_hat) * y / (1.0 - e);
        }
        out.coef.push_back(c);
    }
    return out;
}

// ---------------------------------------------------------------------------
// CTPM model: subject prior net, two embedding nets feeding a cosine affinity,
// and a policy net producing intensity-density parameters for the pair.
// ---------------------------------------------------------------------------

struct CtpmArchitecture {
    std::vector<int> prior_hidden = {8};
    std::vector<int> embed_hidden = {16};
    int embed_dim = 8;
    std::vector<int> policy_hidden = {16};
    PolicyFamily family = PolicyFamily::SigmoidBell;
    double bell_sharpness = 1.0;  // k
    diffcore::Activation hidden_activation = diffcore::Activation::Tanh;
};

struct CtpmModel {
    CtpmArchitecture arch;
    diffcore::DenseNet prior_net;        // x -> (0,1) subject prior
    diffcore::DenseNet subject_embed;    // x -> embedding
    diffcore::DenseNet candidate_embed;  // y -> embedding
    diffcore::DenseNet policy_net;       // [x;y] -> density parameters
};

namespace detail {
inline std::vector<int> net_dims(int in, const std::vector<int>& hidden, int out) {
    std::vector<int> dims{in};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(out);
    return dims;
}
}  // namespace detail

inline CtpmModel make_ctpm_model(const CtpmArchitecture& arch, int x_dim, int y_dim) {
    require(x_dim > 0 && y_dim > 0, "make_ctpm_model: feature dims must be positive");
    require(arch.embed_dim > 0, "make_ctpm_model: embed_dim must be positive");
    require(arch.bell_sharpness > 0.0, "make_ctpm_model: bell_sharpness must be positive");
    const auto hid = arch.hidden_activation;
    CtpmModel m;
    m.arch = arch;
    m.prior_net = diffcore::make_net(detail::net_dims(x_dim, arch.prior_hidden, 1), hid,
                                     diffcore::Activation::Sigmoid);
    m.subject_embed = diffcore::make_net(detail::net_dims(x_dim, arch.embed_hidden, arch.embed_dim),
                                         hid, diffcore::Activation::Identity);
    m.candidate_embed = diffcore::make_net(
        detail::net_dims(y_dim, arch.embed_hidden, arch.embed_dim), hid,
        diffcore::Activation::Identity);
    const int head = static_cast<int>(policy_param_count(arch.family));
    m.policy_net = diffcore::make_net(detail::net_dims(x_dim + y_dim, arch.policy_hidden, head),
                                      hid, diffcore::Activation::Identity);
    return m;
}

inline std::size_t param_count(const CtpmModel& m) {
    return m.prior_net.param_count() + m.subject_embed.param_count() +
           m.candidate_embed.param_count() + m.policy_net.param_count();
}

// Flat parameter order: prior, subject embed, candidate embed, policy.
struct ParamLayout {
    std::size_t prior = 0, subject_embed = 0, candidate_embed = 0, policy = 0, total = 0;
};

inline ParamLayout param_layout(const CtpmModel& m) {
    ParamLayout l;
    l.prior = 0;
    l.subject_embed = l.prior + m.prior_net.param_count();
    l.candidate_embed = l.subject_embed + m.subject_embed.param_count();
    l.policy = l.candidate_embed + m.candidate_embed.param_count();
    l.total = l.policy + m.policy_net.param_count();
    return l;
}

inline std::vector<double> get_params(const CtpmModel& m) {
    std::vector<double> out;
    out.reserve(param_count(m));
    for (const auto* net : {&m.prior_net, &m.subject_embed, &m.candidate_embed, &m.policy_net}) {
        out.insert(out.end(), net->params.begin(), net->params.end());
    }
    return out;
}

inline void set_params(CtpmModel& m, std::span<const double> flat) {
    if (flat.size() != param_count(m)) {
        throw ShapeError("set_params: expected " + std::to_string(param_count(m)) +
                         " values, got " + std::to_string(flat.size()));
    }
    std::size_t off = 0;
    for (auto* net : {&m.prior_net, &m.subject_embed, &m.candidate_embed, &m.policy_net}) {
        std::copy(flat.begin() + off, flat.begin() + off + net->param_count(),
                  net->params.begin());
        off += net->param_count();
    }
}

inline void init_ctpm_params(CtpmModel& m, Rng& rng) {
    diffcore::init_params(m.prior_net, rng);
    diffcore::init_params(m.subject_embed, rng);
    diffcore::init_params(m.candidate_embed, rng);
    diffcore::init_params(m.policy_net, rng);
}

// ---------------------------------------------------------------------------
// Forward components
// ---------------------------------------------------------------------------

// Norm handling for the cosine affinity: training clamps tiny embedding norms
// up to a floor; scoring treats a degenerate embedding as an error.
inline constexpr double kTrainNormFloor = 1e-8;
inline constexpr double kScoreNormMin = 1e-12;

enum class NormPolicy { TrainFloor, ScoreStrict };

struct PolicyHead {
    PolicyFamily family = PolicyFamily::SigmoidBell;
    double s = 0.5;       // sigmoid_bell peak
    double alpha = 2.0;   // beta shapes, > 1 by construction
    double beta = 2.0;
};

inline PolicyHead policy_head_from_raw(PolicyFamily family, std::span<const double> raw) {
    PolicyHead h;
    h.family = family;
    if (family == PolicyFamily::SigmoidBell) {
        require(raw.size() == 1, "sigmoid_bell head expects 1 output");
        h.s = sigmoid(raw[0]);
    } else {
        require(raw.size() == 2, "beta head expects 2 outputs");
        h.alpha = 1.0 + softplus(raw[0]);
        h.beta = 1.0 + softplus(raw[1]);
    }
    return h;
}

inline double policy_density_value(const PolicyHead& h, double p, double sharpness) {
    return h.family == PolicyFamily::SigmoidBell ? sigmoid_bell_density(p, h.s, sharpness)
                                                 : beta_density(p, h.alpha, h.beta);
}

inline double optimal_intensity(const PolicyHead& h) {
    return h.family == PolicyFamily::SigmoidBell ? optimal_intensity_bell(h.s)
                                                 : optimal_intensity_beta(h.alpha, h.beta);
}

struct AffinityParts {
    std::vector<double> ea, eb;
    double dot = 0.0;
    double norm_a = 0.0, norm_b = 0.0;  // raw norms
    double eff_a = 0.0, eff_b = 0.0;    // norms used in the ratio (floored)
    double cosine = 0.0;
    double h = 0.0;  // 1 + cosine, in [0,2]
};

inline AffinityParts affinity_from_embeddings(std::vector<double> ea, std::vector<double> eb,
                                              NormPolicy np) {
    AffinityParts a;
    a.ea = std::move(ea);
    a.eb = std::move(eb);
    require(a.ea.size() == a.eb.size(), "affinity: embedding dims differ");
    for (std::size_t i = 0; i < a.ea.size(); ++i) {
        a.dot += a.ea[i] * a.eb[i];
        a.norm_a += a.ea[i] * a.ea[i];
        a.norm_b += a.eb[i] * a.eb[i];
    }
    a.norm_a = std::sqrt(a.norm_a);
    a.norm_b = std::sqrt(a.norm_b);
    if (np == NormPolicy::ScoreStrict && (a.norm_a < kScoreNormMin || a.norm_b < kScoreNormMin)) {
        throw NumericError("degenerate embedding norm in scoring (" +
                           std::to_string(a.norm_a) + ", " + std::to_string(a.norm_b) + ")");
    }
    a.eff_a = std::max(a.norm_a, kTrainNormFloor);
    a.eff_b = std::max(a.norm_b, kTrainNormFloor);
    a.cosine = a.dot / (a.eff_a * a.eff_b);
    a.cosine = clamp(a.cosine, -1.0, 1.0);
    a.h = 1.0 + a.cosine;
    return a;
}

inline AffinityParts match_affinity(const CtpmModel& m, const std::vector<double>& x,
                                    const std::vector<double>& y, NormPolicy np) {
    return affinity_from_embeddings(diffcore::forward(m.subject_embed, x),
                                    diffcore::forward(m.candidate_embed, y), np);
}

inline double subject_prior(const CtpmModel& m, const std::vector<double>& x) {
    return diffcore::forward(m.prior_net, x)[0];
}

inline std::vector<double> concat_features(const std::vector<double>& x,
                                           const std::vector<double>& y) {
    std::vector<double> xy;
    xy.reserve(x.size() + y.size());
    xy.insert(xy.end(), x.begin(), x.end());
    xy.insert(xy.end(), y.begin(), y.end());
    return xy;
}

inline PolicyHead policy_params(const CtpmModel& m, const std::vector<double>& x,
                                const std::vector<double>& y) {
    const auto raw = diffcore::forward(m.policy_net, concat_features(x, y));
    return policy_head_from_raw(m.arch.family, raw);
}

struct RecordComponents {
    double g = 0.0;       // subject prior
    double h = 0.0;       // match affinity
    double p = 0.0;       // policy density at the observed intensity
    double unnorm = 0.0;  // g * h * p
    PolicyHead head;
    AffinityParts affinity;
};

inline RecordComponents record_components(const CtpmModel& m, const data::MatchRecord& rec,
                                          NormPolicy np) {
    RecordComponents rc;
    rc.g = subject_prior(m, rec.x);
    rc.affinity = match_affinity(m, rec.x, rec.y, np);
    rc.h = rc.affinity.h;
    rc.head = policy_params(m, rec.x, rec.y);
    rc.p = policy_density_value(rc.head, rec.intensity, m.arch.bell_sharpness);
    rc.unnorm = rc.g * rc.h * rc.p;
    return rc;
}

// ---------------------------------------------------------------------------
// Batch weights and effect estimates
// ---------------------------------------------------------------------------

struct BatchWeights {
    std::vector<double> unnorm;  // g*h*p per record
    std::vector<double> weight;  // normalized, sums to 1
    double z_total = 0.0;        // sum of g*h*p
    double z_prior_affinity = 0.0;  // sum of g*h
    double z_policy = 0.0;          // z_total / z_prior_affinity
};

inline constexpr double kPartitionFloor = 1e-300;

inline BatchWeights batch_weights(const CtpmModel& m, const data::Dataset& ds,
                                  NormPolicy np = NormPolicy::TrainFloor) {
    require(!ds.empty(), "batch_weights: empty dataset");
    BatchWeights bw;
    bw.unnorm.reserve(ds.size());
    for (const auto& rec : ds.records) {
        const RecordComponents rc = record_components(m, rec, np);
        bw.unnorm.push_back(rc.unnorm);
        bw.z_total += rc.unnorm;
        bw.z_prior_affinity += rc.g * rc.h;
    }
    if (!std::isfinite(bw.z_total) || bw.z_total < kPartitionFloor) {
        throw NumericError("partition function underflow: total weight " +
                           std::to_string(bw.z_total));
    }
    bw.z_policy = bw.z_total / bw.z_prior_affinity;
    bw.weight.resize(bw.unnorm.size());
    for (std::size_t i = 0; i < bw.unnorm.size(); ++i) bw.weight[i] = bw.unnorm[i] / bw.z_total;
    return bw;
}

inline double weighted_tau(std::span<const double> weights, const IpwCoefficients& coef,
                           std::size_t dim_index) {
    require(weights.size() == coef.coef.size(), "weighted_tau: size mismatch");
    double tau = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) tau += weights[i] * coef.coef[i][dim_index];
    return tau;
}

// Convenience single-dimension estimate with freshly computed weights.
inline double ate_estimate(const CtpmModel& m, const data::Dataset& ds,
                           const PropensityModel& prop, const std::string& dim) {
    ObjectiveSpec spec;
    spec.reward_dim = dim;
    spec.cost_dim = dim;
    spec.aux_dim = dim;
    const auto coef = compute_ipw_coefficients(ds, prop, spec);
    const auto bw = batch_weights(m, ds);
    return weighted_tau(bw.weight, coef, 0);
}

struct CompositeResult {
    double loss = 0.0;
    double tau_reward = 0.0, tau_cost = 0.0, tau_aux = 0.0;
    BatchWeights weights;
};

inline CompositeResult composite_objective(const CtpmModel& m, const data::Dataset& ds,
                                           const PropensityModel& prop,
                                           const ObjectiveSpec& spec,
                                           NormPolicy np = NormPolicy::TrainFloor) {
    CompositeResult out;
    out.weights = batch_weights(m, ds, np);
    const auto coef = compute_ipw_coefficients(ds, prop, spec);
    out.tau_reward = weighted_tau(out.weights.weight, coef, 0);
    out.tau_cost = weighted_tau(out.weights.weight, coef, 1);
    out.tau_aux = weighted_tau(out.weights.weight, coef, 2);
    out.loss = composite_loss(spec, out.tau_reward, out.tau_cost, out.tau_aux);
    return out;
}

// ---------------------------------------------------------------------------
// Scoring
// ---------------------------------------------------------------------------

enum class ScoreMode { ObservedIntensity, OptimalIntensity };

inline ScoreMode score_mode_from_string(const std::string& s) {
    if (s == "observed_intensity") return ScoreMode::ObservedIntensity;
    if (s == "optimal_intensity") return ScoreMode::OptimalIntensity;
    throw ConfigError("unknown score mode '" + s +
                      "' (expected observed_intensity|optimal_intensity)");
}

inline std::string to_string(ScoreMode m) {
    return m == ScoreMode::ObservedIntensity ? "observed_intensity" : "optimal_intensity";
}

// Ranking score for a match: the un-normalized weight, with the density taken
// either at the observed intensity or at the policy's own optimum.
inline double score_record(const CtpmModel& m, const data::MatchRecord& rec,
                           ScoreMode mode = ScoreMode::ObservedIntensity) {
    const RecordComponents rc = record_components(m, rec, NormPolicy::ScoreStrict);
    if (mode == ScoreMode::ObservedIntensity) return rc.unnorm;
    const double p_opt =
        policy_density_value(rc.head, optimal_intensity(rc.head), m.arch.bell_sharpness);
    return rc.g * rc.h * p_opt;
}

inline double optimal_intensity(const CtpmModel& m, const data::MatchRecord& rec) {
    return optimal_intensity(policy_params(m, rec.x, rec.y));
}

struct EmbeddingExport {
    std::vector<std::string> ids;
    std::vector<std::vector<double>> vectors;
};

inline EmbeddingExport export_subject_embeddings(const CtpmModel& m, const data::Dataset& ds) {
    EmbeddingExport out;
    for (const auto& rec : ds.records) {
        out.ids.push_back(rec.subject_id);
        out.vectors.push_back(diffcore::forward(m.subject_embed, rec.x));
    }
    return out;
}

inline EmbeddingExport export_candidate_embeddings(const CtpmModel& m, const data::Dataset& ds) {
    EmbeddingExport out;
    for (const auto& rec : ds.records) {
        out.ids.push_back(rec.candidate_id);
        out.vectors.push_back(diffcore::forward(m.candidate_embed, rec.y));
    }
    return out;
}

}  // namespace ctpm
