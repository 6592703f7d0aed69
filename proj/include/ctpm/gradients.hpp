#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "ctpm/common.hpp"
#include "ctpm/model.hpp"
#include "ctpm/tape.hpp"

namespace ctpm {

// ---------------------------------------------------------------------------
// Outer derivative, shared by every model that produces per-record
// un-normalized weights u_m: with w = u / sum(u) and tau_d = sum_m w_m c_dm,
//   d tau_d / d u_m = (c_dm - tau_d) / Z.
// ---------------------------------------------------------------------------

struct OuterGrad {
    double loss = 0.0;
    double tau_reward = 0.0, tau_cost = 0.0, tau_aux = 0.0;
    double z_total = 0.0;
    std::vector<double> dl_du;  // dLoss / d(un-normalized weight), per record
};

inline OuterGrad outer_gradient(std::span<const double> unnorm, const IpwCoefficients& coef,
                                const ObjectiveSpec& spec) {
    require(unnorm.size() == coef.coef.size(), "outer_gradient: size mismatch");
    OuterGrad out;
    for (double u : unnorm) out.z_total += u;
    if (!std::isfinite(out.z_total) || out.z_total < kPartitionFloor) {
        throw NumericError("partition function underflow: total weight " +
                           std::to_string(out.z_total));
    }
    double s0 = 0.0, s1 = 0.0, s2 = 0.0;
    for (std::size_t m = 0; m < unnorm.size(); ++m) {
        s0 += unnorm[m] * coef.coef[m][0];
        s1 += unnorm[m] * coef.coef[m][1];
        s2 += unnorm[m] * coef.coef[m][2];
    }
    out.tau_reward = s0 / out.z_total;
    out.tau_cost = s1 / out.z_total;
    out.tau_aux = s2 / out.z_total;
    const CompositeGrad cg = composite_grad(spec, out.tau_reward, out.tau_cost, out.tau_aux);
    out.loss = cg.loss;
    out.dl_du.resize(unnorm.size());
    const double inv_z = 1.0 / out.z_total;
    for (std::size_t m = 0; m < unnorm.size(); ++m) {
        out.dl_du[m] = (cg.d_reward * (coef.coef[m][0] - out.tau_reward) +
                        cg.d_cost * (coef.coef[m][1] - out.tau_cost) +
                        cg.d_aux * (coef.coef[m][2] - out.tau_aux)) *
                       inv_z;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Hand-derived full gradient of the CTPM composite objective. Two sweeps: a
// value pass for the partition function and taus, then a backprop pass that
// chains dL/du through the prior, embedding, and policy nets per record.
// ---------------------------------------------------------------------------

struct LossReport {
    double loss = 0.0;
    double tau_reward = 0.0, tau_cost = 0.0, tau_aux = 0.0;
    double z_total = 0.0;
};

namespace detail {

struct RecordScratch {
    diffcore::ForwardTrace prior, se, ce, pol;
    std::vector<double> xy;
    double g = 0.0, p = 0.0;
    AffinityParts aff;
    PolicyHead head;
};

inline double forward_record(const CtpmModel& model, const data::MatchRecord& rec,
                             RecordScratch& s) {
    diffcore::forward_trace(model.prior_net, rec.x, s.prior);
    s.g = s.prior.act.back()[0];
    diffcore::forward_trace(model.subject_embed, rec.x, s.se);
    diffcore::forward_trace(model.candidate_embed, rec.y, s.ce);
    s.aff = affinity_from_embeddings(s.se.act.back(), s.ce.act.back(), NormPolicy::TrainFloor);
    s.xy.assign(rec.x.begin(), rec.x.end());
    s.xy.insert(s.xy.end(), rec.y.begin(), rec.y.end());
    diffcore::forward_trace(model.policy_net, s.xy, s.pol);
    s.head = policy_head_from_raw(model.arch.family, s.pol.act.back());
    s.p = policy_density_value(s.head, rec.intensity, model.arch.bell_sharpness);
    return s.g * s.aff.h * s.p;
}

}  // namespace detail

inline LossReport ctpm_loss_and_grad(const CtpmModel& model, const data::Dataset& ds,
                                     const IpwCoefficients& coef, const ObjectiveSpec& spec,
                                     std::vector<double>& grad) {
    require(!ds.empty(), "ctpm_loss_and_grad: empty dataset");
    const ParamLayout lay = param_layout(model);
    grad.assign(lay.total, 0.0);

    detail::RecordScratch s;
    std::vector<double> unnorm(ds.size());
    for (std::size_t m = 0; m < ds.size(); ++m) {
        unnorm[m] = detail::forward_record(model, ds.records[m], s);
    }
    const OuterGrad outer = outer_gradient(unnorm, coef, spec);

    std::span<double> gp(grad.data() + lay.prior, model.prior_net.param_count());
    std::span<double> gs(grad.data() + lay.subject_embed, model.subject_embed.param_count());
    std::span<double> gc(grad.data() + lay.candidate_embed, model.candidate_embed.param_count());
    std::span<double> gl(grad.data() + lay.policy, model.policy_net.param_count());

    const double k = model.arch.bell_sharpness;
    std::vector<double> seed1(1), seed_ea, seed_eb, seed_pol;
    for (std::size_t m = 0; m < ds.size(); ++m) {
        const double du = outer.dl_du[m];
        if (du == 0.0) continue;
        const auto& rec = ds.records[m];
        detail::forward_record(model, rec, s);
        const AffinityParts& a = s.aff;

        // prior net: output is g itself, so seed with dL/dg
        seed1[0] = du * a.h * s.p;
        diffcore::backward_trace(model.prior_net, rec.x, s.prior, seed1, gp);

        // embeddings through the cosine: h = 1 + dot/(eff_a*eff_b)
        const double dcos = du * s.g * s.p;
        const std::size_t ed = a.ea.size();
        seed_ea.assign(ed, 0.0);
        seed_eb.assign(ed, 0.0);
        const double inv_ab = 1.0 / (a.eff_a * a.eff_b);
        const double ca = a.norm_a > kTrainNormFloor ? a.dot * inv_ab / (a.eff_a * a.norm_a) : 0.0;
        const double cb = a.norm_b > kTrainNormFloor ? a.dot * inv_ab / (a.eff_b * a.norm_b) : 0.0;
        for (std::size_t i = 0; i < ed; ++i) {
            seed_ea[i] = dcos * (a.eb[i] * inv_ab - ca * a.ea[i]);
            seed_eb[i] = dcos * (a.ea[i] * inv_ab - cb * a.eb[i]);
        }
        diffcore::backward_trace(model.subject_embed, rec.x, s.se, seed_ea, gs);
        diffcore::backward_trace(model.candidate_embed, rec.y, s.ce, seed_eb, gc);

        // policy net through the density and the head mapping
        const double dp = du * s.g * a.h;
        const auto& raw = s.pol.act.back();
        if (model.arch.family == PolicyFamily::SigmoidBell) {
            const BellGrad bg = sigmoid_bell_density_grad(rec.intensity, s.head.s, k);
            seed_pol.assign(1, dp * bg.d_s * s.head.s * (1.0 - s.head.s));
        } else {
            const BetaGrad bg = beta_density_grad(rec.intensity, s.head.alpha, s.head.beta);
            seed_pol.assign(2, 0.0);
            seed_pol[0] = dp * bg.d_alpha * sigmoid(raw[0]);
            seed_pol[1] = dp * bg.d_beta * sigmoid(raw[1]);
        }
        diffcore::backward_trace(model.policy_net, s.xy, s.pol, seed_pol, gl);
    }

    LossReport rep;
    rep.loss = outer.loss;
    rep.tau_reward = outer.tau_reward;
    rep.tau_cost = outer.tau_cost;
    rep.tau_aux = outer.tau_aux;
    rep.z_total = outer.z_total;
    return rep;
}

// ---------------------------------------------------------------------------
// Tape-built objective, used to cross-check the hand gradient and for finite
// difference validation. Captures its arguments by reference.
// ---------------------------------------------------------------------------

inline diffcore::LossFn ctpm_taped_objective(const CtpmModel& model, const data::Dataset& ds,
                                             const IpwCoefficients& coef,
                                             const ObjectiveSpec& spec) {
    return [&model, &ds, &coef, &spec](diffcore::Tape& tape,
                                       const std::vector<diffcore::Var>& params) {
        using diffcore::Var;
        const ParamLayout lay = param_layout(model);
        require(params.size() == lay.total, "taped objective: param count mismatch");
        std::span<const Var> pp(params.data() + lay.prior, model.prior_net.param_count());
        std::span<const Var> ps(params.data() + lay.subject_embed,
                                model.subject_embed.param_count());
        std::span<const Var> pc(params.data() + lay.candidate_embed,
                                model.candidate_embed.param_count());
        std::span<const Var> pl(params.data() + lay.policy, model.policy_net.param_count());

        const double k = model.arch.bell_sharpness;
        std::vector<Var> us;
        us.reserve(ds.size());
        for (const auto& rec : ds.records) {
            const Var g = diffcore::forward_taped(model.prior_net, tape, pp, rec.x)[0];
            const auto ea = diffcore::forward_taped(model.subject_embed, tape, ps, rec.x);
            const auto eb = diffcore::forward_taped(model.candidate_embed, tape, pc, rec.y);
            const Var na = clamp_min(sqrt(dot(ea, ea)), kTrainNormFloor);
            const Var nb = clamp_min(sqrt(dot(eb, eb)), kTrainNormFloor);
            const Var h = dot(ea, eb) / (na * nb) + 1.0;
            const auto xy = concat_features(rec.x, rec.y);
            const auto raw = diffcore::forward_taped(model.policy_net, tape, pl, xy);
            Var p = raw[0];
            if (model.arch.family == PolicyFamily::SigmoidBell) {
                p = sigmoid_bell_density(sigmoid(raw[0]), rec.intensity, k);
            } else {
                p = beta_density(softplus(raw[0]) + 1.0, softplus(raw[1]) + 1.0, rec.intensity);
            }
            us.push_back(g * h * p);
        }
        const Var z = sum(us);
        std::array<Var, 3> taus{z, z, z};
        std::vector<Var> terms(us.size(), z);
        for (std::size_t d = 0; d < 3; ++d) {
            for (std::size_t m = 0; m < us.size(); ++m) terms[m] = us[m] * coef.coef[m][d];
            taus[d] = sum(terms) / z;
        }
        if (spec.form == ObjectiveForm::QualityNetReward) {
            return -(taus[2] * (taus[0] - taus[1] * spec.lambda));
        }
        Var tr = taus[0];
        if (std::fabs(value(tr)) < kRewardGuard) {
            tr = tape.constant(guarded_reward(value(tr)));
        }
        return taus[1] / tr + taus[2] * spec.lambda;
    };
}

}  // namespace ctpm
