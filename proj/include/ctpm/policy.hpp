#pragma once

#include <cmath>
#include <string>

#include "ctpm/common.hpp"
#include "ctpm/tape.hpp"

namespace ctpm {

// Intensity policy as a parametric density on [0,1]. The sigmoid-bell is a
// one-parameter bump peaked at s, renormalized in closed form over the unit
// interval; the beta family uses shape parameters constrained above 1 so the
// mode is interior.
enum class PolicyFamily { SigmoidBell, Beta };

inline PolicyFamily policy_family_from_string(const std::string& s) {
    if (s == "sigmoid_bell") return PolicyFamily::SigmoidBell;
    if (s == "beta") return PolicyFamily::Beta;
    throw ConfigError("unknown policy family '" + s + "' (expected sigmoid_bell|beta)");
}

inline std::string to_string(PolicyFamily f) {
    return f == PolicyFamily::SigmoidBell ? "sigmoid_bell" : "beta";
}

inline std::size_t policy_param_count(PolicyFamily f) {
    return f == PolicyFamily::SigmoidBell ? 1 : 2;
}

namespace detail {
inline double sigmoid_deriv(double u) {
    const double s = sigmoid(u);
    return s * (1.0 - s);
}
}  // namespace detail

// rho(P; s) = k * sig'(k(P-s)) / (sig(k(1-s)) - sig(-k s)); integrates to 1
// over [0,1] for any real s and k > 0.
inline double sigmoid_bell_density(double p, double s, double k) {
    require(k > 0.0, "sigmoid_bell: sharpness k must be positive");
    const double num = k * detail::sigmoid_deriv(k * (p - s));
    const double den = sigmoid(k * (1.0 - s)) - sigmoid(-k * s);
    return num / den;
}

struct BellGrad {
    double value = 0.0;
    double d_s = 0.0;  // d value / d s
};

inline BellGrad sigmoid_bell_density_grad(double p, double s, double k) {
    require(k > 0.0, "sigmoid_bell: sharpness k must be positive");
    const double u = k * (p - s);
    const double su = sigmoid(u);
    const double sp = su * (1.0 - su);           // sig'(u)
    const double spp = sp * (1.0 - 2.0 * su);    // sig''(u)
    const double num = k * sp;
    const double dnum = -k * k * spp;  // du/ds = -k
    const double den = sigmoid(k * (1.0 - s)) - sigmoid(-k * s);
    const double dden =
        -k * detail::sigmoid_deriv(k * (1.0 - s)) + k * detail::sigmoid_deriv(-k * s);
    BellGrad g;
    g.value = num / den;
    g.d_s = (dnum * den - num * dden) / (den * den);
    return g;
}

inline constexpr double kBetaIntensityEps = 1e-6;

inline double beta_log_density(double p, double alpha, double beta) {
    require(alpha > 0.0 && beta > 0.0, "beta density: shape parameters must be positive");
    const double pc = clamp(p, kBetaIntensityEps, 1.0 - kBetaIntensityEps);
    return (alpha - 1.0) * std::log(pc) + (beta - 1.0) * std::log1p(-pc) -
           std::lgamma(alpha) - std::lgamma(beta) + std::lgamma(alpha + beta);
}

inline double beta_density(double p, double alpha, double beta) {
    return std::exp(beta_log_density(p, alpha, beta));
}

struct BetaGrad {
    double value = 0.0;
    double d_alpha = 0.0;
    double d_beta = 0.0;
};

inline BetaGrad beta_density_grad(double p, double alpha, double beta) {
    const double pc = clamp(p, kBetaIntensityEps, 1.0 - kBetaIntensityEps);
    BetaGrad g;
    g.value = beta_density(p, alpha, beta);
    const double dg_ab = digamma(alpha + beta);
    g.d_alpha = g.value * (std::log(pc) - digamma(alpha) + dg_ab);
    g.d_beta = g.value * (std::log1p(-pc) - digamma(beta) + dg_ab);
    return g;
}

// Intensity the fitted policy recommends: the density mode on [0,1].
inline double optimal_intensity_bell(double s) { return clamp(s, 0.0, 1.0); }

inline double optimal_intensity_beta(double alpha, double beta) {
    require(alpha >= 1.0 && beta >= 1.0, "beta mode needs alpha,beta >= 1");
    const double den = alpha + beta - 2.0;
    if (den <= 0.0) return 0.5;  // alpha = beta = 1: flat density
    return clamp((alpha - 1.0) / den, 0.0, 1.0);
}

// Tape versions for the autodiff cross-check path.
inline diffcore::Var sigmoid_bell_density(diffcore::Var s, double p, double k) {
    require(k > 0.0, "sigmoid_bell: sharpness k must be positive");
    using diffcore::Var;
    const Var u = (s * -k) + (k * p);
    const Var su = sigmoid(u);
    const Var num = su * (1.0 - su) * k;
    const Var shi = sigmoid((s * -k) + k);
    const Var slo = sigmoid(s * -k);
    return num / (shi - slo);
}

inline diffcore::Var beta_density(diffcore::Var alpha, diffcore::Var beta, double p) {
    using diffcore::Var;
    const double pc = clamp(p, kBetaIntensityEps, 1.0 - kBetaIntensityEps);
    const Var ab = alpha + beta;
    const Var ld = (alpha - 1.0) * std::log(pc) + (beta - 1.0) * std::log1p(-pc) -
                   lgamma(alpha) - lgamma(beta) + lgamma(ab);
    return exp(ld);
}

}  // namespace ctpm
