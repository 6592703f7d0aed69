#include <catch2/catch_amalgamated.hpp>
#include <filesystem>

#include "ctpm/checkpoint.hpp"
#include "ctpm/synthetic.hpp"
#include "json.hpp"

using namespace ctpm;
namespace fs = std::filesystem;

namespace {

std::string tmp_path(const std::string& name) {
    return (fs::temp_directory_path() / name).string();
}

data::Dataset small_dataset() {
    data::SyntheticConfig gen;
    gen.n_records = 60;
    gen.seed = 3;
    return data::generate_synthetic(gen).dataset;
}

Checkpoint base_checkpoint() {
    Checkpoint ck;
    const auto ds = small_dataset();
    ck.normalization = data::fit_normalizer(ds);
    PropensityConfig pc;
    pc.kind = PropensityKind::Logistic;
    pc.iterations = 5;
    ck.propensity = fit_propensity(ds, pc);
    ck.objective.form = ObjectiveForm::QualityNetReward;
    ck.objective.lambda = 0.25;
    ck.subject_features = {"x0", "x1", "x2", "x3"};
    ck.candidate_features = {"y0", "y1", "y2", "y3"};
    return ck;
}

Checkpoint ctpm_fixture() {
    auto ck = base_checkpoint();
    ck.model_kind = "ctpm";
    CtpmArchitecture arch;
    arch.prior_hidden = {3};
    arch.embed_hidden = {4};
    arch.embed_dim = 2;
    arch.policy_hidden = {};
    arch.family = PolicyFamily::Beta;
    arch.bell_sharpness = 4.0;
    arch.hidden_activation = diffcore::activation_from_string("tanh");
    ck.ctpm = make_ctpm_model(arch, 4, 4);
    auto params = get_params(ck.ctpm);
    for (std::size_t i = 0; i < params.size(); ++i) {
        params[i] = 0.017 * static_cast<double>(i) - 0.31;
    }
    set_params(ck.ctpm, params);
    return ck;
}

}  // namespace

TEST_CASE("atomic write leaves no temp file and round-trips content") {
    const auto path = tmp_path("ctpm_atomic.txt");
    atomic_write_text(path, "alpha\nbeta\n");
    REQUIRE(read_text_file(path) == "alpha\nbeta\n");
    REQUIRE_FALSE(fs::exists(path + ".tmp"));
    REQUIRE_THROWS_AS(read_text_file(tmp_path("ctpm_missing_file.txt")), DataError);
}

TEST_CASE("ctpm checkpoint round-trips exactly") {
    const auto ck = ctpm_fixture();
    const auto path = tmp_path("ctpm_ck_full.json");
    save_checkpoint(ck, path);
    const auto back = load_checkpoint(path);

    REQUIRE(back.model_kind == "ctpm");
    REQUIRE(get_params(back.ctpm) == get_params(ck.ctpm));
    REQUIRE(back.ctpm.arch.prior_hidden == ck.ctpm.arch.prior_hidden);
    REQUIRE(back.ctpm.arch.embed_hidden == ck.ctpm.arch.embed_hidden);
    REQUIRE(back.ctpm.arch.embed_dim == ck.ctpm.arch.embed_dim);
    REQUIRE(back.ctpm.arch.family == ck.ctpm.arch.family);
    REQUIRE(back.ctpm.arch.bell_sharpness == ck.ctpm.arch.bell_sharpness);
    REQUIRE(back.normalization.x_mean == ck.normalization.x_mean);
    REQUIRE(back.normalization.x_std == ck.normalization.x_std);
    REQUIRE(back.normalization.y_mean == ck.normalization.y_mean);
    REQUIRE(back.normalization.y_std == ck.normalization.y_std);
    REQUIRE(back.normalization.fitted == ck.normalization.fitted);
    REQUIRE(back.propensity.kind == ck.propensity.kind);
    REQUIRE(back.propensity.weights == ck.propensity.weights);
    REQUIRE(back.propensity.treated_rate == ck.propensity.treated_rate);
    REQUIRE(back.propensity.clip == ck.propensity.clip);
    REQUIRE(back.objective.form == ck.objective.form);
    REQUIRE(back.objective.lambda == ck.objective.lambda);
    REQUIRE(back.subject_features == ck.subject_features);
    REQUIRE(back.candidate_features == ck.candidate_features);
}

TEST_CASE("save-load-save is byte identical") {
    const auto ck = ctpm_fixture();
    const auto p1 = tmp_path("ctpm_ck_a.json");
    const auto p2 = tmp_path("ctpm_ck_b.json");
    save_checkpoint(ck, p1);
    save_checkpoint(load_checkpoint(p1), p2);
    REQUIRE(read_text_file(p1) == read_text_file(p2));
}

TEST_CASE("simple_ct checkpoint round-trips") {
    auto ck = base_checkpoint();
    ck.model_kind = "simple_ct";
    ck.simple_ct.weights = {0.5, -0.25, 0.125, 1.0, -1.0, 0.0, 2.0, 0.75, 0.1};
    const auto path = tmp_path("ctpm_ck_sct.json");
    save_checkpoint(ck, path);
    const auto back = load_checkpoint(path);
    REQUIRE(back.model_kind == "simple_ct");
    REQUIRE(back.simple_ct.weights == ck.simple_ct.weights);
}

TEST_CASE("rlearner checkpoint round-trips") {
    auto ck = base_checkpoint();
    ck.model_kind = "rlearner";
    ck.rlearner.dim = "r";
    ck.rlearner.outcome_coef = {1.0, 2.0, -1.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0};
    ck.rlearner.effect_coef = {0.3, -0.7, 0.2, 0.0, 0.0, 0.4, 0.0, 0.0, 0.0};
    const auto path = tmp_path("ctpm_ck_rl.json");
    save_checkpoint(ck, path);
    const auto back = load_checkpoint(path);
    REQUIRE(back.model_kind == "rlearner");
    REQUIRE(back.rlearner.dim == "r");
    REQUIRE(back.rlearner.outcome_coef == ck.rlearner.outcome_coef);
    REQUIRE(back.rlearner.effect_coef == ck.rlearner.effect_coef);
}

TEST_CASE("unknown kind is rejected at save time") {
    auto ck = base_checkpoint();
    ck.model_kind = "mystery";
    REQUIRE_THROWS_AS(save_checkpoint(ck, tmp_path("ctpm_ck_bad.json")), ConfigError);
}

TEST_CASE("malformed checkpoint files raise DataError") {
    const auto garbage = tmp_path("ctpm_ck_garbage.json");
    atomic_write_text(garbage, "{not json");
    REQUIRE_THROWS_AS(load_checkpoint(garbage), DataError);

    const auto ck = ctpm_fixture();
    const auto good = tmp_path("ctpm_ck_good.json");
    save_checkpoint(ck, good);
    auto j = nlohmann::json::parse(read_text_file(good));

    auto write_variant = [&](const nlohmann::json& v) {
        const auto p = tmp_path("ctpm_ck_variant.json");
        atomic_write_text(p, v.dump(2));
        return p;
    };

    auto wrong_format = j;
    wrong_format["format"] = "other-format";
    REQUIRE_THROWS_AS(load_checkpoint(write_variant(wrong_format)), DataError);

    auto wrong_version = j;
    wrong_version["version"] = 99;
    REQUIRE_THROWS_AS(load_checkpoint(write_variant(wrong_version)), DataError);

    auto wrong_kind = j;
    wrong_kind["model"]["kind"] = "mystery";
    REQUIRE_THROWS_AS(load_checkpoint(write_variant(wrong_kind)), DataError);

    auto missing_prop = j;
    missing_prop.erase("propensity");
    REQUIRE_THROWS_AS(load_checkpoint(write_variant(missing_prop)), DataError);

    auto missing_params = j;
    missing_params["model"].erase("params");
    REQUIRE_THROWS_AS(load_checkpoint(write_variant(missing_params)), DataError);
}
