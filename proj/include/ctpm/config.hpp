#pragma once

#include <set>
#include <string>
#include <vector>

#include "ctpm/checkpoint.hpp"
#include "ctpm/common.hpp"
#include "ctpm/dataset.hpp"
#include "ctpm/evaluation.hpp"
#include "ctpm/model.hpp"
#include "ctpm/propensity.hpp"
#include "ctpm/synthetic.hpp"
#include "ctpm/train.hpp"
#include "json.hpp"

namespace ctpm {

struct DataConfig {
    std::string source = "synthetic";  // synthetic | file
    data::SyntheticConfig synthetic;
    std::string file_path;
    data::TableSchema schema;
    data::SplitRatios split;
    bool derive_treatment = false;  // cohort from the train-split intensity median
    std::string subsample_dim;      // empty: no subsampling
    double subsample_keep = 1.0;
};

struct EvalConfig {
    int grid_percent = 5;
    std::size_t null_band_draws = 20;
    ScoreMode score_mode = ScoreMode::ObservedIntensity;
    bool svg = true;
};

struct ExperimentConfig {
    std::string run_name = "run";
    std::string output_dir = "runs";
    std::uint64_t seed = 1;
    DataConfig data;
    ObjectiveSpec objective;
    std::string model_kind = "ctpm";  // ctpm | simple_ct | rlearner
    CtpmArchitecture architecture;
    TrainConfig training;
    PropensityConfig propensity;
    EvalConfig evaluation;
};

namespace cfg_detail {

// Wraps a JSON object, errors on unknown keys when finish() runs.
class StrictObject {
public:
    StrictObject(const nlohmann::json& j, std::string context)
        : j_(j), context_(std::move(context)) {
        if (!j_.is_object()) throw ConfigError(context_ + " must be an object");
    }

    bool has(const std::string& key) {
        seen_.insert(key);
        return j_.contains(key);
    }

    template <typename T>
    T get(const std::string& key, const T& fallback) {
        seen_.insert(key);
        if (!j_.contains(key)) return fallback;
        return read<T>(key);
    }

    template <typename T>
    T need(const std::string& key) {
        seen_.insert(key);
        if (!j_.contains(key)) throw ConfigError(context_ + " is missing key '" + key + "'");
        return read<T>(key);
    }

    const nlohmann::json& raw(const std::string& key) {
        seen_.insert(key);
        if (!j_.contains(key)) throw ConfigError(context_ + " is missing key '" + key + "'");
        return j_.at(key);
    }

    void finish() const {
        for (const auto& [key, value] : j_.items()) {
            if (!seen_.contains(key)) {
                throw ConfigError("unknown key '" + key + "' in " + context_);
            }
        }
    }

private:
    template <typename T>
    T read(const std::string& key) {
        try {
            return j_.at(key).get<T>();
        } catch (const nlohmann::json::exception&) {
            throw ConfigError(context_ + " key '" + key + "' has the wrong type");
        }
    }

    const nlohmann::json& j_;
    std::string context_;
    std::set<std::string> seen_;
};

inline data::SyntheticConfig parse_synthetic(const nlohmann::json& j, std::uint64_t seed) {
    StrictObject o(j, "data.synthetic");
    data::SyntheticConfig c;
    c.n_records = o.get<std::size_t>("n_records", c.n_records);
    c.subject_dims = o.get<std::size_t>("subject_dims", c.subject_dims);
    c.candidate_dims = o.get<std::size_t>("candidate_dims", c.candidate_dims);
    c.treatment_rate = o.get<double>("treatment_rate", c.treatment_rate);
    c.noise_r = o.get<double>("noise_r", c.noise_r);
    c.noise_c = o.get<double>("noise_c", c.noise_c);
    c.prognostic_gain = o.get<double>("prognostic_gain", c.prognostic_gain);
    c.uplift_base = o.get<double>("uplift_base", c.uplift_base);
    c.convex_gain = o.get<double>("convex_gain", c.convex_gain);
    c.linear_gain = o.get<double>("linear_gain", c.linear_gain);
    c.bell_gain = o.get<double>("bell_gain", c.bell_gain);
    c.bell_width = o.get<double>("bell_width", c.bell_width);
    c.cost_base = o.get<double>("cost_base", c.cost_base);
    c.cost_slope = o.get<double>("cost_slope", c.cost_slope);
    c.cost_bell = o.get<double>("cost_bell", c.cost_bell);
    c.quality_base = o.get<double>("quality_base", c.quality_base);
    c.quality_lift = o.get<double>("quality_lift", c.quality_lift);
    c.quality_gate = o.get<double>("quality_gate", c.quality_gate);
    c.cost_gate = o.get<double>("cost_gate", c.cost_gate);
    c.assign_gate = o.get<double>("assign_gate", c.assign_gate);
    c.gate_sharpness = o.get<double>("gate_sharpness", c.gate_sharpness);
    c.gate_center = o.get<double>("gate_center", c.gate_center);
    c.seed = seed;
    o.finish();
    return c;
}

inline data::TableSchema parse_schema(const nlohmann::json& j) {
    StrictObject o(j, "data.file");
    data::TableSchema s;
    const std::string delim = o.get<std::string>("delimiter", ",");
    if (delim.size() != 1) throw ConfigError("data.file delimiter must be one character");
    s.delimiter = delim[0];
    s.subject_id = o.get<std::string>("subject_id", s.subject_id);
    s.candidate_id = o.get<std::string>("candidate_id", s.candidate_id);
    s.subject_features = o.need<std::vector<std::string>>("subject_features");
    s.candidate_features = o.need<std::vector<std::string>>("candidate_features");
    s.treatment = o.get<std::string>("treatment", s.treatment);
    s.intensity = o.get<std::string>("intensity", s.intensity);
    if (o.has("outcomes")) {
        s.outcomes = o.raw("outcomes").get<std::map<std::string, std::string>>();
    }
    o.finish();
    return s;
}

inline DataConfig parse_data(const nlohmann::json& j, std::uint64_t seed) {
    StrictObject o(j, "data");
    DataConfig c;
    c.source = o.get<std::string>("source", c.source);
    if (c.source != "synthetic" && c.source != "file") {
        throw ConfigError("data.source must be synthetic or file");
    }
    if (o.has("synthetic")) {
        c.synthetic = parse_synthetic(o.raw("synthetic"), seed);
    } else {
        c.synthetic.seed = seed;
    }
    if (c.source == "file") {
        StrictObject f(o.raw("file"), "data.file");
        // path is pulled out first; the rest of the object is the schema
        c.file_path = f.need<std::string>("path");
        nlohmann::json rest = o.raw("file");
        rest.erase("path");
        c.schema = parse_schema(rest);
    } else if (o.has("file")) {
        throw ConfigError("data.file given but data.source is synthetic");
    }
    if (o.has("split")) {
        StrictObject sp(o.raw("split"), "data.split");
        c.split.train = sp.get<double>("train", c.split.train);
        c.split.validation = sp.get<double>("validation", c.split.validation);
        c.split.test = sp.get<double>("test", c.split.test);
        sp.finish();
    }
    c.derive_treatment = o.get<bool>("derive_treatment_from_median", c.derive_treatment);
    if (o.has("subsample")) {
        StrictObject ss(o.raw("subsample"), "data.subsample");
        c.subsample_dim = ss.need<std::string>("dim");
        c.subsample_keep = ss.need<double>("keep_rate");
        ss.finish();
    }
    o.finish();
    return c;
}

inline ObjectiveSpec parse_objective(const nlohmann::json& j) {
    StrictObject o(j, "objective");
    ObjectiveSpec s;
    s.form = objective_form_from_string(o.get<std::string>("form", to_string(s.form)));
    s.lambda = o.get<double>("lambda", s.lambda);
    s.reward_dim = o.get<std::string>("reward_dim", s.reward_dim);
    s.cost_dim = o.get<std::string>("cost_dim", s.cost_dim);
    s.aux_dim = o.get<std::string>("aux_dim", s.aux_dim);
    o.finish();
    return s;
}

inline CtpmArchitecture parse_architecture(StrictObject& o) {
    CtpmArchitecture a;
    a.prior_hidden = o.get<std::vector<int>>("prior_hidden", a.prior_hidden);
    a.embed_hidden = o.get<std::vector<int>>("embed_hidden", a.embed_hidden);
    a.embed_dim = o.get<int>("embed_dim", a.embed_dim);
    a.policy_hidden = o.get<std::vector<int>>("policy_hidden", a.policy_hidden);
    a.family = policy_family_from_string(o.get<std::string>("policy_family", to_string(a.family)));
    a.bell_sharpness = o.get<double>("bell_sharpness", a.bell_sharpness);
    a.hidden_activation = diffcore::activation_from_string(
        o.get<std::string>("hidden_activation", to_string(a.hidden_activation)));
    return a;
}

inline TrainConfig parse_training(const nlohmann::json& j, std::uint64_t seed) {
    StrictObject o(j, "training");
    TrainConfig c;
    c.iterations = o.get<std::size_t>("iterations", c.iterations);
    c.restarts = o.get<std::size_t>("restarts", c.restarts);
    c.learning_rate = o.get<double>("learning_rate", c.learning_rate);
    c.seed = seed;
    o.finish();
    return c;
}

inline PropensityConfig parse_propensity(const nlohmann::json& j) {
    StrictObject o(j, "propensity");
    PropensityConfig c;
    c.kind = propensity_kind_from_string(o.get<std::string>("kind", to_string(c.kind)));
    c.use_candidate_features = o.get<bool>("use_candidate_features", c.use_candidate_features);
    c.iterations = o.get<std::size_t>("iterations", c.iterations);
    c.learning_rate = o.get<double>("learning_rate", c.learning_rate);
    c.clip = o.get<double>("clip", c.clip);
    o.finish();
    return c;
}

inline EvalConfig parse_evaluation(const nlohmann::json& j) {
    StrictObject o(j, "evaluation");
    EvalConfig c;
    c.grid_percent = o.get<int>("grid_percent", c.grid_percent);
    c.null_band_draws = o.get<std::size_t>("null_band_draws", c.null_band_draws);
    c.score_mode =
        score_mode_from_string(o.get<std::string>("score_mode", to_string(c.score_mode)));
    c.svg = o.get<bool>("svg", c.svg);
    o.finish();
    return c;
}

}  // namespace cfg_detail

inline ExperimentConfig parse_config(const nlohmann::json& j) {
    cfg_detail::StrictObject o(j, "config");
    ExperimentConfig c;
    c.run_name = o.get<std::string>("run_name", c.run_name);
    c.output_dir = o.get<std::string>("output_dir", c.output_dir);
    c.seed = o.get<std::uint64_t>("seed", c.seed);
    if (c.run_name.empty() || c.run_name.find('/') != std::string::npos) {
        throw ConfigError("run_name must be a non-empty name without slashes");
    }
    if (o.has("data")) c.data = cfg_detail::parse_data(o.raw("data"), c.seed);
    c.data.synthetic.seed = c.seed;
    if (o.has("objective")) c.objective = cfg_detail::parse_objective(o.raw("objective"));
    if (o.has("model")) {
        cfg_detail::StrictObject m(o.raw("model"), "model");
        c.model_kind = m.get<std::string>("kind", c.model_kind);
        if (c.model_kind != "ctpm" && c.model_kind != "simple_ct" && c.model_kind != "rlearner") {
            throw ConfigError("model.kind must be ctpm, simple_ct, or rlearner");
        }
        c.architecture = cfg_detail::parse_architecture(m);
        m.finish();
    }
    if (o.has("training")) {
        c.training = cfg_detail::parse_training(o.raw("training"), c.seed);
    } else {
        c.training.seed = c.seed;
    }
    if (o.has("propensity")) c.propensity = cfg_detail::parse_propensity(o.raw("propensity"));
    if (o.has("evaluation")) c.evaluation = cfg_detail::parse_evaluation(o.raw("evaluation"));
    o.finish();
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const DataError&) {
        throw ConfigError("cannot open config file: " + path);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("cannot parse config " + path + ": " + e.what());
    }
    return parse_config(j);
}

}  // namespace ctpm
