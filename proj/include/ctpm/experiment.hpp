#pragma once

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "ctpm/baselines.hpp"
#include "ctpm/checkpoint.hpp"
#include "ctpm/config.hpp"
#include "ctpm/evaluation.hpp"
#include "ctpm/synthetic.hpp"
#include "ctpm/train.hpp"
#include "json.hpp"

namespace ctpm {

// Log verbosity from CTPM_LOG (quiet|info|debug); logs go to stderr and are
// not part of any artifact.
inline int log_level() {
    static const int level = [] {
        const char* v = std::getenv("CTPM_LOG");
        if (v == nullptr) return 1;
        const std::string s(v);
        if (s == "quiet") return 0;
        if (s == "debug") return 2;
        return 1;
    }();
    return level;
}

inline void log_info(const std::string& msg) {
    if (log_level() >= 1) std::cerr << "[ctpm] " << msg << std::endl;
}

inline void log_debug(const std::string& msg) {
    if (log_level() >= 2) std::cerr << "[ctpm] " << msg << std::endl;
}

inline std::filesystem::path run_dir(const ExperimentConfig& c) {
    return std::filesystem::path(c.output_dir) / c.run_name;
}

inline void write_manifest(const std::filesystem::path& dir, const std::string& command,
                           std::vector<std::string> files) {
    files.push_back("manifest.json");
    std::sort(files.begin(), files.end());
    nlohmann::json j;
    j["command"] = command;
    j["files"] = files;
    atomic_write_text((dir / "manifest.json").string(), j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Data preparation shared by train/eval: source -> subsample -> split ->
// cohort derivation -> normalization stats from the train split.
// ---------------------------------------------------------------------------

struct PreparedData {
    data::Splits raw;         // un-normalized splits
    data::Splits normalized;  // z-scored with stats from the raw train split
    data::NormalizationStats stats;
    data::SyntheticGroundTruth truth;  // synthetic source only
    bool has_truth = false;
};

inline data::Dataset obtain_dataset(const ExperimentConfig& c,
                                    data::SyntheticGroundTruth* truth_out) {
    if (c.data.source == "synthetic") {
        auto res = data::generate_synthetic(c.data.synthetic);
        if (truth_out != nullptr) *truth_out = std::move(res.truth);
        return std::move(res.dataset);
    }
    return data::load_table(c.data.file_path, c.data.schema);
}

inline PreparedData prepare_data(const ExperimentConfig& c) {
    PreparedData pd;
    data::Dataset full = obtain_dataset(c, &pd.truth);
    pd.has_truth = c.data.source == "synthetic";
    if (!c.data.subsample_dim.empty()) {
        full = data::subsample_zero_outcome(full, c.data.subsample_dim, c.data.subsample_keep,
                                            derive_seed(c.seed, 5));
    }
    pd.raw = data::split(full, c.data.split, c.seed);
    const bool derive =
        c.data.derive_treatment || (c.data.source == "file" && c.data.schema.treatment.empty());
    if (derive) data::derive_treatment_from_median(pd.raw);
    pd.stats = data::fit_normalizer(pd.raw.train);
    pd.normalized.train = data::apply_normalizer(pd.stats, pd.raw.train);
    pd.normalized.validation = data::apply_normalizer(pd.stats, pd.raw.validation);
    pd.normalized.test = data::apply_normalizer(pd.stats, pd.raw.test);
    return pd;
}

// ---------------------------------------------------------------------------
// synth: dataset file + ground-truth sidecar
// ---------------------------------------------------------------------------

inline void cmd_synth(const ExperimentConfig& c) {
    if (c.data.source != "synthetic") {
        throw ConfigError("synth needs data.source = synthetic");
    }
    const auto dir = run_dir(c);
    std::filesystem::create_directories(dir);
    auto res = data::generate_synthetic(c.data.synthetic);
    const auto schema = data::synthetic_schema(c.data.synthetic.subject_dims,
                                               c.data.synthetic.candidate_dims);
    data::save_table(res.dataset, (dir / "data.csv").string(), schema);
    data::save_truth(res.truth, (dir / "truth.json").string());
    write_manifest(dir, "synth", {"data.csv", "truth.json"});
    log_info("synth: wrote " + std::to_string(res.dataset.size()) + " records to " +
             (dir / "data.csv").string());
}

// ---------------------------------------------------------------------------
// train: checkpoint + per-restart history + summary report
// ---------------------------------------------------------------------------

namespace detail {

inline void write_history(const std::filesystem::path& path, const TrainResult* result) {
    std::ostringstream out;
    out << "restart,iteration,train_loss,val_loss\n";
    if (result != nullptr) {
        for (const auto& rr : result->restarts) {
            for (std::size_t i = 0; i < rr.history.train_loss.size(); ++i) {
                out << rr.restart_index << "," << i << ","
                    << data::format_value(rr.history.train_loss[i]) << ","
                    << data::format_value(rr.history.val_loss[i]) << "\n";
            }
        }
    }
    atomic_write_text(path.string(), out.str());
}

inline nlohmann::json train_summary(const std::string& kind, const TrainResult* result) {
    nlohmann::json j;
    j["model_kind"] = kind;
    if (result == nullptr) return j;
    j["best_restart"] = result->best_restart;
    j["best_val_loss"] = result->best_val_loss;
    nlohmann::json rs = nlohmann::json::array();
    for (const auto& rr : result->restarts) {
        nlohmann::json r;
        r["index"] = rr.restart_index;
        r["aborted"] = rr.aborted;
        if (rr.aborted) {
            r["abort_reason"] = rr.abort_reason;
        } else {
            r["final_train_loss"] = rr.final_train_loss;
            r["final_val_loss"] = rr.final_val_loss;
        }
        rs.push_back(r);
    }
    j["restarts"] = rs;
    return j;
}

}  // namespace detail

inline Checkpoint cmd_train(const ExperimentConfig& c) {
    const auto dir = run_dir(c);
    std::filesystem::create_directories(dir);
    const PreparedData pd = prepare_data(c);
    log_info("train: " + std::to_string(pd.normalized.train.size()) + " train / " +
             std::to_string(pd.normalized.validation.size()) + " validation records");

    const PropensityModel prop = fit_propensity(pd.normalized.train, c.propensity);

    Checkpoint ck;
    ck.model_kind = c.model_kind;
    ck.normalization = pd.stats;
    ck.propensity = prop;
    ck.objective = c.objective;
    ck.subject_features = pd.raw.train.subject_feature_names;
    ck.candidate_features = pd.raw.train.candidate_feature_names;

    const int x_dim = static_cast<int>(pd.normalized.train.records.front().x.size());
    const int y_dim = static_cast<int>(pd.normalized.train.records.front().y.size());

    TrainResult result;
    const TrainResult* result_ptr = nullptr;
    if (c.model_kind == "ctpm") {
        ck.ctpm = make_ctpm_model(c.architecture, x_dim, y_dim);
        result = train_ctpm(ck.ctpm, pd.normalized.train, pd.normalized.validation, prop,
                            c.objective, c.training);
        result_ptr = &result;
    } else if (c.model_kind == "simple_ct") {
        ck.simple_ct = make_simple_ct(x_dim, y_dim);
        result = train_simple_ct(ck.simple_ct, pd.normalized.train, pd.normalized.validation,
                                 prop, c.objective, c.training);
        result_ptr = &result;
    } else {
        ck.rlearner = fit_rlearner(pd.normalized.train, prop, c.objective.reward_dim);
    }
    if (result_ptr != nullptr) {
        log_info("train: best restart " + std::to_string(result.best_restart) +
                 " validation loss " + std::to_string(result.best_val_loss));
    }

    save_checkpoint(ck, (dir / "checkpoint.json").string());
    detail::write_history(dir / "history.csv", result_ptr);
    atomic_write_text((dir / "train_report.json").string(),
                      detail::train_summary(c.model_kind, result_ptr).dump(2) + "\n");
    write_manifest(dir, "train", {"checkpoint.json", "history.csv", "train_report.json"});
    return ck;
}

// ---------------------------------------------------------------------------
// eval: model-comparison report with curves; random baseline always included
// ---------------------------------------------------------------------------

struct EvalOutput {
    eval::EvaluationReport report;
    eval::NullBand null_band;
};

namespace detail {

inline std::vector<double> score_with_checkpoint(const Checkpoint& ck,
                                                 const data::Dataset& raw_test,
                                                 ScoreMode mode) {
    const data::Dataset test = data::apply_normalizer(ck.normalization, raw_test);
    std::vector<double> scores;
    scores.reserve(test.size());
    if (ck.model_kind == "ctpm") {
        for (const auto& rec : test.records) scores.push_back(score_record(ck.ctpm, rec, mode));
    } else if (ck.model_kind == "simple_ct") {
        for (const auto& rec : test.records) scores.push_back(ck.simple_ct.score(rec));
    } else {
        for (const auto& rec : test.records) scores.push_back(ck.rlearner.score(rec));
    }
    return scores;
}

inline std::string report_table(const eval::EvaluationReport& report,
                                const eval::NullBand& band) {
    std::ostringstream out;
    out << "model            a-AUC            c-AUC\n";
    char buf[96];
    for (const auto& row : report.rows) {
        std::snprintf(buf, sizeof(buf), "%-16s %-16.6f %-16.6f\n", row.name.c_str(), row.a_auc,
                      row.c_auc);
        out << buf;
    }
    std::snprintf(buf, sizeof(buf),
                  "null band (%zu draws, 3 sd): a-AUC %.6f +/- %.6f, c-AUC %.6f +/- %.6f\n",
                  band.draws, band.mean_a, band.band_a(), band.mean_c, band.band_c());
    out << buf;
    return out.str();
}

}  // namespace detail

inline EvalOutput cmd_eval(const ExperimentConfig& c,
                           const std::vector<std::string>& checkpoint_paths) {
    const auto dir = run_dir(c);
    std::filesystem::create_directories(dir);
    std::vector<std::string> paths = checkpoint_paths;
    if (paths.empty()) paths.push_back((dir / "checkpoint.json").string());

    const PreparedData pd = prepare_data(c);
    // The evaluation machinery is model-agnostic: one propensity model, fit
    // on this config's training split, is shared across every scored row.
    const PropensityModel prop = fit_propensity(pd.normalized.train, c.propensity);

    std::vector<eval::NamedScores> rows;
    for (const auto& path : paths) {
        const Checkpoint ck = load_checkpoint(path);
        std::string name = ck.model_kind;
        for (const auto& r : rows) {
            if (r.name == name) {
                name += "-" + std::to_string(rows.size() + 1);
                break;
            }
        }
        rows.push_back({name, detail::score_with_checkpoint(ck, pd.raw.test,
                                                            c.evaluation.score_mode)});
    }

    eval::CurveOptions opt;
    opt.grid_percent = c.evaluation.grid_percent;
    opt.tie_seed = c.seed;
    const data::Dataset& test = pd.normalized.test;

    EvalOutput out;
    out.report = eval::evaluate_all(rows, test, prop, c.objective, opt, c.seed);
    out.null_band = eval::random_null_band(test, prop, c.objective, c.evaluation.null_band_draws,
                                           c.seed, opt);

    std::vector<std::string> files;
    nlohmann::json jrows = nlohmann::json::array();
    for (const auto& row : out.report.rows) {
        const std::string atetp_csv = "atetp_" + row.name + ".csv";
        const std::string cost_csv = "cost_" + row.name + ".csv";
        eval::write_curve_csv(row.atetp, (dir / atetp_csv).string());
        eval::write_curve_csv(row.cost, (dir / cost_csv).string());
        files.push_back(atetp_csv);
        files.push_back(cost_csv);
        nlohmann::json r;
        r["name"] = row.name;
        r["a_auc"] = row.a_auc;
        r["c_auc"] = row.c_auc;
        r["atetp_curve"] = atetp_csv;
        r["cost_curve"] = cost_csv;
        if (c.evaluation.svg) {
            const std::string atetp_svg = "atetp_" + row.name + ".svg";
            const std::string cost_svg = "cost_" + row.name + ".svg";
            eval::write_curve_svg(row.atetp, (dir / atetp_svg).string(), row.name + " atetp");
            eval::write_curve_svg(row.cost, (dir / cost_svg).string(), row.name + " cost");
            files.push_back(atetp_svg);
            files.push_back(cost_svg);
        }
        jrows.push_back(r);
    }

    nlohmann::json j;
    j["rows"] = jrows;
    j["null_band"] = {{"draws", out.null_band.draws},   {"mean_a", out.null_band.mean_a},
                      {"std_a", out.null_band.std_a},   {"mean_c", out.null_band.mean_c},
                      {"std_c", out.null_band.std_c},   {"band_a", out.null_band.band_a()},
                      {"band_c", out.null_band.band_c()}};
    // the cost_per_reward form is negated in curves so higher is better
    j["metric_note"] = to_string(c.objective.form) +
                       (c.objective.form == ObjectiveForm::CostPerReward
                            ? " (negated: higher is better)"
                            : " (higher is better)");
    atomic_write_text((dir / "report.json").string(), j.dump(2) + "\n");
    atomic_write_text((dir / "report.txt").string(),
                      detail::report_table(out.report, out.null_band));
    files.push_back("report.json");
    files.push_back("report.txt");
    write_manifest(dir, "eval", files);
    log_info("eval: wrote report for " + std::to_string(out.report.rows.size()) + " rows");
    return out;
}

// ---------------------------------------------------------------------------
// predict: per-record score and optimal intensity for a CTPM checkpoint
// ---------------------------------------------------------------------------

inline void cmd_predict(const ExperimentConfig& c, const std::string& checkpoint_path,
                        const std::string& input_path, const std::string& output_path) {
    const Checkpoint ck = load_checkpoint(checkpoint_path.empty()
                                              ? (run_dir(c) / "checkpoint.json").string()
                                              : checkpoint_path);
    if (ck.model_kind != "ctpm") {
        throw ConfigError("predict requires a ctpm checkpoint, got " + ck.model_kind);
    }
    // input needs ids, features, and intensity; outcomes and cohort are not used
    data::TableSchema schema;
    if (c.data.source == "file") {
        schema = c.data.schema;
    } else {
        schema = data::synthetic_schema(ck.subject_features.size(), ck.candidate_features.size());
    }
    schema.subject_features = ck.subject_features;
    schema.candidate_features = ck.candidate_features;
    schema.treatment.clear();
    schema.outcomes.clear();

    const data::Dataset raw = data::load_table(input_path, schema);
    const data::Dataset ds = data::apply_normalizer(ck.normalization, raw);

    std::ostringstream out;
    out << "subject_id,candidate_id,score,optimal_intensity\n";
    for (const auto& rec : ds.records) {
        const double score = score_record(ck.ctpm, rec, c.evaluation.score_mode);
        const double popt = optimal_intensity(ck.ctpm, rec);
        out << rec.subject_id << "," << rec.candidate_id << "," << data::format_value(score)
            << "," << data::format_value(popt) << "\n";
    }
    const auto dir = run_dir(c);
    std::filesystem::create_directories(dir);
    const std::string out_path = output_path.empty() ? (dir / "predictions.csv").string()
                                                     : output_path;
    atomic_write_text(out_path, out.str());
    log_info("predict: wrote " + std::to_string(ds.size()) + " rows to " + out_path);
}

}  // namespace ctpm
