#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "ctpm/baselines.hpp"
#include "ctpm/common.hpp"
#include "ctpm/dataset.hpp"
#include "ctpm/model.hpp"
#include "ctpm/propensity.hpp"
#include "json.hpp"

namespace ctpm {

// Write-then-rename so a crashed run never leaves a truncated artifact.
inline void atomic_write_text(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write file: " + tmp);
        out << content;
        out.flush();
        if (!out) throw DataError("write failed: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw DataError("cannot rename " + tmp + " to " + path);
    }
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return content;
}

// ---------------------------------------------------------------------------
// Versioned checkpoint: one trained model plus everything needed to score raw
// records again (normalizer, propensity model, objective).
// ---------------------------------------------------------------------------

inline constexpr const char* kCheckpointFormat = "ctpm-checkpoint";
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
    std::string model_kind;  // "ctpm" | "simple_ct" | "rlearner"
    CtpmModel ctpm;
    SimpleCtModel simple_ct;
    RLearnerModel rlearner;
    data::NormalizationStats normalization;
    PropensityModel propensity;
    ObjectiveSpec objective;
    std::vector<std::string> subject_features;
    std::vector<std::string> candidate_features;
};

namespace detail {

inline nlohmann::json propensity_to_json(const PropensityModel& p) {
    return {{"kind", to_string(p.kind)},
            {"treated_rate", p.treated_rate},
            {"use_candidate_features", p.use_candidate_features},
            {"weights", p.weights},
            {"clip", p.clip}};
}

inline PropensityModel propensity_from_json(const nlohmann::json& j) {
    PropensityModel p;
    p.kind = propensity_kind_from_string(j.at("kind").get<std::string>());
    p.treated_rate = j.at("treated_rate").get<double>();
    p.use_candidate_features = j.at("use_candidate_features").get<bool>();
    p.weights = j.at("weights").get<std::vector<double>>();
    p.clip = j.at("clip").get<double>();
    return p;
}

inline nlohmann::json normalization_to_json(const data::NormalizationStats& n) {
    return {{"x_mean", n.x_mean}, {"x_std", n.x_std},  {"y_mean", n.y_mean},
            {"y_std", n.y_std},   {"fitted", n.fitted}};
}

inline data::NormalizationStats normalization_from_json(const nlohmann::json& j) {
    data::NormalizationStats n;
    n.x_mean = j.at("x_mean").get<std::vector<double>>();
    n.x_std = j.at("x_std").get<std::vector<double>>();
    n.y_mean = j.at("y_mean").get<std::vector<double>>();
    n.y_std = j.at("y_std").get<std::vector<double>>();
    n.fitted = j.at("fitted").get<bool>();
    return n;
}

inline nlohmann::json objective_to_json(const ObjectiveSpec& s) {
    return {{"form", to_string(s.form)},
            {"lambda", s.lambda},
            {"reward_dim", s.reward_dim},
            {"cost_dim", s.cost_dim},
            {"aux_dim", s.aux_dim}};
}

inline ObjectiveSpec objective_from_json(const nlohmann::json& j) {
    ObjectiveSpec s;
    s.form = objective_form_from_string(j.at("form").get<std::string>());
    s.lambda = j.at("lambda").get<double>();
    s.reward_dim = j.at("reward_dim").get<std::string>();
    s.cost_dim = j.at("cost_dim").get<std::string>();
    s.aux_dim = j.at("aux_dim").get<std::string>();
    return s;
}

inline nlohmann::json ctpm_to_json(const CtpmModel& m) {
    return {{"architecture",
             {{"prior_hidden", m.arch.prior_hidden},
              {"embed_hidden", m.arch.embed_hidden},
              {"embed_dim", m.arch.embed_dim},
              {"policy_hidden", m.arch.policy_hidden},
              {"policy_family", to_string(m.arch.family)},
              {"bell_sharpness", m.arch.bell_sharpness},
              {"hidden_activation", to_string(m.arch.hidden_activation)}}},
            {"x_dim", m.prior_net.input_dim()},
            {"y_dim", m.candidate_embed.input_dim()},
            // flat order: prior, subject embed, candidate embed, policy nets;
            // within a net layer-major, weights before biases
            {"params", get_params(m)}};
}

inline CtpmModel ctpm_from_json(const nlohmann::json& j) {
    const auto& a = j.at("architecture");
    CtpmArchitecture arch;
    arch.prior_hidden = a.at("prior_hidden").get<std::vector<int>>();
    arch.embed_hidden = a.at("embed_hidden").get<std::vector<int>>();
    arch.embed_dim = a.at("embed_dim").get<int>();
    arch.policy_hidden = a.at("policy_hidden").get<std::vector<int>>();
    arch.family = policy_family_from_string(a.at("policy_family").get<std::string>());
    arch.bell_sharpness = a.at("bell_sharpness").get<double>();
    arch.hidden_activation =
        diffcore::activation_from_string(a.at("hidden_activation").get<std::string>());
    CtpmModel m = make_ctpm_model(arch, j.at("x_dim").get<int>(), j.at("y_dim").get<int>());
    const auto params = j.at("params").get<std::vector<double>>();
    set_params(m, params);
    return m;
}

}  // namespace detail

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    nlohmann::json j;
    j["format"] = kCheckpointFormat;
    j["version"] = kCheckpointVersion;
    if (ck.model_kind == "ctpm") {
        j["model"] = detail::ctpm_to_json(ck.ctpm);
    } else if (ck.model_kind == "simple_ct") {
        j["model"] = {{"weights", ck.simple_ct.weights}};
    } else if (ck.model_kind == "rlearner") {
        j["model"] = {{"dim", ck.rlearner.dim},
                      {"outcome_coef", ck.rlearner.outcome_coef},
                      {"effect_coef", ck.rlearner.effect_coef}};
    } else {
        throw ConfigError("unknown model kind '" + ck.model_kind + "'");
    }
    j["model"]["kind"] = ck.model_kind;
    j["normalization"] = detail::normalization_to_json(ck.normalization);
    j["propensity"] = detail::propensity_to_json(ck.propensity);
    j["objective"] = detail::objective_to_json(ck.objective);
    j["subject_features"] = ck.subject_features;
    j["candidate_features"] = ck.candidate_features;
    atomic_write_text(path, j.dump(2) + "\n");
}

inline Checkpoint load_checkpoint(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw DataError("cannot parse checkpoint " + path + ": " + e.what());
    }
    if (!j.contains("format") || j["format"] != kCheckpointFormat) {
        throw DataError("not a checkpoint file: " + path);
    }
    if (j.at("version").get<int>() != kCheckpointVersion) {
        throw DataError("unsupported checkpoint version in " + path);
    }
    Checkpoint ck;
    try {
        const auto& m = j.at("model");
        ck.model_kind = m.at("kind").get<std::string>();
        if (ck.model_kind == "ctpm") {
            ck.ctpm = detail::ctpm_from_json(m);
        } else if (ck.model_kind == "simple_ct") {
            ck.simple_ct.weights = m.at("weights").get<std::vector<double>>();
        } else if (ck.model_kind == "rlearner") {
            ck.rlearner.dim = m.at("dim").get<std::string>();
            ck.rlearner.outcome_coef = m.at("outcome_coef").get<std::vector<double>>();
            ck.rlearner.effect_coef = m.at("effect_coef").get<std::vector<double>>();
        } else {
            throw DataError("unknown model kind '" + ck.model_kind + "' in " + path);
        }
        ck.normalization = detail::normalization_from_json(j.at("normalization"));
        ck.propensity = detail::propensity_from_json(j.at("propensity"));
        ck.objective = detail::objective_from_json(j.at("objective"));
        ck.subject_features = j.at("subject_features").get<std::vector<std::string>>();
        ck.candidate_features = j.at("candidate_features").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed checkpoint " + path + ": " + e.what());
    }
    return ck;
}

}  // namespace ctpm
