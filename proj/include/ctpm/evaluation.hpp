#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "ctpm/common.hpp"
#include "ctpm/dataset.hpp"
#include "ctpm/model.hpp"
#include "ctpm/propensity.hpp"

namespace ctpm::eval {

enum class CurveKind { Atetp, Cost };

struct CurvePoint {
    double x = 0.0;
    double y = 0.0;
};

struct EvaluationCurve {
    CurveKind kind = CurveKind::Atetp;
    std::vector<CurvePoint> points;
    double auc = 0.0;
};

// Signed trapezoid area over the points in order.
inline double trapezoid_area(const std::vector<CurvePoint>& pts) {
    double area = 0.0;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        area += 0.5 * (pts[i + 1].x - pts[i].x) * (pts[i].y + pts[i + 1].y);
    }
    return area;
}

// Descending-score order with ties broken by a seeded shuffle applied before
// the (stable) sort, so rankings are deterministic and rank-only: any strictly
// increasing transform of the scores yields the same permutation.
inline std::vector<std::size_t> ranked_indices(std::span<const double> scores,
                                               std::uint64_t tie_seed) {
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!std::isfinite(scores[i])) {
            throw NumericError("non-finite score at index " + std::to_string(i));
        }
    }
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(derive_seed(tie_seed, 401));
    rng.shuffle(idx);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return idx;
}

// Plain inverse-propensity difference of cohort means over the selection.
inline double subset_ate(const data::Dataset& ds, std::span<const std::size_t> selection,
                         const std::string& dim, const PropensityModel& prop) {
    double sum_t = 0.0, sum_c = 0.0;
    std::size_t n_t = 0, n_c = 0;
    for (std::size_t i : selection) {
        const auto& rec = ds.records[i];
        const double e = prop.score(rec);
        if (rec.treatment == 1) {
            sum_t += rec.outcome(dim) / e;
            ++n_t;
        } else {
            sum_c += rec.outcome(dim) / (1.0 - e);
            ++n_c;
        }
    }
    if (n_t == 0 || n_c == 0) {
        throw DataError("subset_ate: selection holds a single cohort (treated " +
                        std::to_string(n_t) + ", control " + std::to_string(n_c) + ")");
    }
    return sum_t / static_cast<double>(n_t) - sum_c / static_cast<double>(n_c);
}

struct CurveOptions {
    int grid_percent = 5;       // coverage grid step for the atetp curve
    std::uint64_t tie_seed = 0;
};

// Composite metric on score-selected prefixes, higher is better: the
// quality_net_reward objective as written, the cost_per_reward form negated.
inline EvaluationCurve atetp_curve(const data::Dataset& ds, std::span<const double> scores,
                                   const PropensityModel& prop, const ObjectiveSpec& spec,
                                   const CurveOptions& opt = {}) {
    require(scores.size() == ds.size(), "atetp_curve: score/record count mismatch");
    if (opt.grid_percent <= 0 || opt.grid_percent > 100 || 100 % opt.grid_percent != 0) {
        throw ConfigError("grid_percent must divide 100");
    }
    const auto order = ranked_indices(scores, opt.tie_seed);
    const std::size_t n = ds.size();
    const auto dims = spec.dims();

    EvaluationCurve curve;
    curve.kind = CurveKind::Atetp;
    for (int pct = opt.grid_percent; pct <= 100; pct += opt.grid_percent) {
        // top-ceil(rho*N) selection, exact in integer arithmetic
        const std::size_t k =
            (n * static_cast<std::size_t>(pct) + 99) / 100;
        std::span<const std::size_t> sel(order.data(), k);
        std::array<double, 3> taus{};
        try {
            for (std::size_t d = 0; d < 3; ++d) taus[d] = subset_ate(ds, sel, dims[d], prop);
        } catch (const DataError&) {
            // selection misses a cohort at small coverage: omit the point
            continue;
        }
        const double value = -composite_loss(spec, taus[0], taus[1], taus[2]);
        curve.points.push_back({static_cast<double>(pct) / 100.0, value});
    }
    if (curve.points.size() < 2) {
        throw DataError("atetp_curve: fewer than two valid coverage points");
    }
    // mean curve height: area divided by the covered span, so a flat curve at
    // value v scores exactly v
    const double span_x = curve.points.back().x - curve.points.front().x;
    curve.auc = trapezoid_area(curve.points) / span_x;
    return curve;
}

inline constexpr double kCostNormalizationFloor = 1e-9;

// Cumulative inverse-propensity reward vs cost along the ranking, both
// normalized by their full-coverage totals; (0,0) prepended, ends at (1,1).
// Cohort denominators are the full-coverage counts, which is what anchors a
// random ranking on the diagonal.
inline EvaluationCurve cost_curve(const data::Dataset& ds, std::span<const double> scores,
                                  const PropensityModel& prop, const std::string& reward_dim,
                                  const std::string& cost_dim, const CurveOptions& opt = {}) {
    require(scores.size() == ds.size(), "cost_curve: score/record count mismatch");
    const auto order = ranked_indices(scores, opt.tie_seed);
    const std::size_t n_t = ds.treated_count();
    const std::size_t n_c = ds.size() - n_t;
    if (n_t == 0 || n_c == 0) throw DataError("cost_curve: dataset holds a single cohort");

    std::vector<CurvePoint> cumulative;
    cumulative.reserve(ds.size() + 1);
    double run_r = 0.0, run_c = 0.0;
    for (std::size_t i : order) {
        const auto& rec = ds.records[i];
        const double e = prop.score(rec);
        if (rec.treatment == 1) {
            run_r += rec.outcome(reward_dim) / e / static_cast<double>(n_t);
            run_c += rec.outcome(cost_dim) / e / static_cast<double>(n_t);
        } else {
            run_r -= rec.outcome(reward_dim) / (1.0 - e) / static_cast<double>(n_c);
            run_c -= rec.outcome(cost_dim) / (1.0 - e) / static_cast<double>(n_c);
        }
        cumulative.push_back({run_c, run_r});
    }
    const double total_r = run_r, total_c = run_c;
    if (std::fabs(total_r) < kCostNormalizationFloor ||
        std::fabs(total_c) < kCostNormalizationFloor) {
        throw NumericError("cost_curve: full-coverage effect near zero (reward " +
                           std::to_string(total_r) + ", cost " + std::to_string(total_c) +
                           "); normalization undefined");
    }
    EvaluationCurve curve;
    curve.kind = CurveKind::Cost;
    curve.points.reserve(cumulative.size() + 1);
    curve.points.push_back({0.0, 0.0});
    for (const auto& pt : cumulative) {
        curve.points.push_back({pt.x / total_c, pt.y / total_r});
    }
    curve.auc = trapezoid_area(curve.points);
    return curve;
}

// ---------------------------------------------------------------------------
// Model comparison report
// ---------------------------------------------------------------------------

struct NamedScores {
    std::string name;
    std::vector<double> scores;
};

struct ModelEvaluation {
    std::string name;
    double a_auc = 0.0;
    double c_auc = 0.0;
    EvaluationCurve atetp;
    EvaluationCurve cost;
};

struct EvaluationReport {
    std::vector<ModelEvaluation> rows;  // sorted by a_auc descending
};

inline ModelEvaluation evaluate_scores(const std::string& name, std::span<const double> scores,
                                       const data::Dataset& ds, const PropensityModel& prop,
                                       const ObjectiveSpec& spec, const CurveOptions& opt) {
    ModelEvaluation ev;
    ev.name = name;
    ev.atetp = atetp_curve(ds, scores, prop, spec, opt);
    ev.cost = cost_curve(ds, scores, prop, spec.reward_dim, spec.cost_dim, opt);
    ev.a_auc = ev.atetp.auc;
    ev.c_auc = ev.cost.auc;
    return ev;
}

// Evaluates each scorer plus an always-present "random" baseline row.
inline EvaluationReport evaluate_all(const std::vector<NamedScores>& models,
                                     const data::Dataset& ds, const PropensityModel& prop,
                                     const ObjectiveSpec& spec, const CurveOptions& opt = {},
                                     std::uint64_t random_seed = 0) {
    EvaluationReport report;
    bool has_random = false;
    for (const auto& m : models) {
        require(m.scores.size() == ds.size(), "evaluate_all: score count mismatch for " + m.name);
        report.rows.push_back(evaluate_scores(m.name, m.scores, ds, prop, spec, opt));
        if (m.name == "random") has_random = true;
    }
    if (!has_random) {
        const auto rnd = uniform_scores(ds.size(), derive_seed(random_seed, 499));
        report.rows.push_back(evaluate_scores("random", rnd, ds, prop, spec, opt));
    }
    std::stable_sort(report.rows.begin(), report.rows.end(),
                     [](const ModelEvaluation& a, const ModelEvaluation& b) {
                         return a.a_auc > b.a_auc;
                     });
    return report;
}

// ---------------------------------------------------------------------------
// Resampled null band: spread of both AUCs across random scorers
// ---------------------------------------------------------------------------

struct NullBand {
    double mean_a = 0.0, std_a = 0.0;
    double mean_c = 0.0, std_c = 0.0;
    std::size_t draws = 0;

    // gap threshold: three sample standard deviations
    double band_a() const { return 3.0 * std_a; }
    double band_c() const { return 3.0 * std_c; }
};

inline NullBand random_null_band(const data::Dataset& ds, const PropensityModel& prop,
                                 const ObjectiveSpec& spec, std::size_t draws = 20,
                                 std::uint64_t seed = 0, const CurveOptions& opt = {}) {
    require(draws >= 2, "null band needs at least two draws");
    std::vector<double> a_aucs, c_aucs;
    for (std::size_t i = 0; i < draws; ++i) {
        const auto scores = uniform_scores(ds.size(), derive_seed(seed, 410 + i));
        const auto ev = evaluate_scores("random", scores, ds, prop, spec, opt);
        a_aucs.push_back(ev.a_auc);
        c_aucs.push_back(ev.c_auc);
    }
    auto mean_std = [](const std::vector<double>& v, double& mean, double& sd) {
        mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        sd = std::sqrt(ss / static_cast<double>(v.size() - 1));  // sample std
    };
    NullBand band;
    band.draws = draws;
    mean_std(a_aucs, band.mean_a, band.std_a);
    mean_std(c_aucs, band.mean_c, band.std_c);
    return band;
}

// ---------------------------------------------------------------------------
// Rank correlation
// ---------------------------------------------------------------------------

inline std::vector<double> average_ranks(std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    std::size_t i = 0;
    while (i < idx.size()) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
        for (std::size_t t = i; t <= j; ++t) ranks[idx[t]] = avg;
        i = j + 1;
    }
    return ranks;
}

inline double spearman(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size(), "spearman: length mismatch");
    require(a.size() >= 2, "spearman: need at least two points");
    const auto ra = average_ranks(a);
    const auto rb = average_ranks(b);
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) throw NumericError("spearman undefined for constant input");
    return sab / std::sqrt(saa * sbb);
}

// ---------------------------------------------------------------------------
// Curve files
// ---------------------------------------------------------------------------

inline void write_curve_csv(const EvaluationCurve& curve, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write curve file: " + path);
    out << (curve.kind == CurveKind::Atetp ? "coverage,value" : "cost,reward") << "\n";
    for (const auto& pt : curve.points) {
        out << data::format_value(pt.x) << "," << data::format_value(pt.y) << "\n";
    }
    if (!out) throw DataError("write failed: " + path);
}

// Minimal self-contained polyline plot.
inline void write_curve_svg(const EvaluationCurve& curve, const std::string& path,
                            const std::string& title) {
    const int w = 640, h = 480, margin = 50;
    double xmin = curve.points.front().x, xmax = xmin;
    double ymin = curve.points.front().y, ymax = ymin;
    for (const auto& pt : curve.points) {
        xmin = std::min(xmin, pt.x);
        xmax = std::max(xmax, pt.x);
        ymin = std::min(ymin, pt.y);
        ymax = std::max(ymax, pt.y);
    }
    if (xmax - xmin < 1e-12) xmax = xmin + 1.0;
    if (ymax - ymin < 1e-12) ymax = ymin + 1.0;
    auto sx = [&](double x) { return margin + (x - xmin) / (xmax - xmin) * (w - 2 * margin); };
    auto sy = [&](double y) { return h - margin - (y - ymin) / (ymax - ymin) * (h - 2 * margin); };

    std::ofstream out(path);
    if (!out) throw DataError("cannot write svg file: " + path);
    char buf[128];
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
        << "\" viewBox=\"0 0 " << w << " " << h << "\">\n";
    out << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
    out << "<text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\""
        << " font-size=\"16\">" << title << "</text>\n";
    // axes
    out << "<line x1=\"" << margin << "\" y1=\"" << h - margin << "\" x2=\"" << w - margin
        << "\" y2=\"" << h - margin << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin << "\" y2=\""
        << h - margin << "\" stroke=\"black\"/>\n";
    std::snprintf(buf, sizeof(buf), "%.3g / %.3g", xmin, xmax);
    out << "<text x=\"" << w - margin << "\" y=\"" << h - margin + 20
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\">" << buf
        << "</text>\n";
    std::snprintf(buf, sizeof(buf), "%.3g / %.3g", ymin, ymax);
    out << "<text x=\"" << margin << "\" y=\"" << margin - 8
        << "\" font-family=\"sans-serif\" font-size=\"12\">" << buf << "</text>\n";
    out << "<polyline fill=\"none\" stroke=\"#2060c0\" stroke-width=\"1.5\" points=\"";
    for (const auto& pt : curve.points) {
        std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", sx(pt.x), sy(pt.y));
        out << buf;
    }
    out << "\"/>\n</svg>\n";
    if (!out) throw DataError("write failed: " + path);
}

}  // namespace ctpm::eval
