#include <sys/wait.h>

#include <catch2/catch_amalgamated.hpp>
#include <cstdlib>
#include <filesystem>
#include <string>

#include "ctpm/experiment.hpp"

using namespace ctpm;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path& work_dir() {
    static const fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "ctpm_cli_work";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

struct CliResult {
    int code = -1;
    std::string out;
    std::string err;
};

CliResult run_cli(const std::string& args) {
    const char* bin = std::getenv("CTPM_CLI");
    REQUIRE(bin != nullptr);
    const auto out_path = (work_dir() / "stdout.txt").string();
    const auto err_path = (work_dir() / "stderr.txt").string();
    const std::string cmd =
        "\"" + std::string(bin) + "\" " + args + " > \"" + out_path + "\" 2> \"" + err_path + "\"";
    const int rc = std::system(cmd.c_str());
    CliResult res;
    res.code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    res.out = read_text_file(out_path);
    res.err = read_text_file(err_path);
    return res;
}

std::string write_config(const std::string& name, const json& j) {
    const auto path = (work_dir() / name).string();
    atomic_write_text(path, j.dump(2));
    return path;
}

json base_config(const std::string& run_name) {
    return {
        {"run_name", run_name},
        {"output_dir", (work_dir() / "runs").string()},
        {"seed", 11},
        {"data", {{"source", "synthetic"}, {"synthetic", {{"n_records", 400}}}}},
        {"model",
         {{"kind", "ctpm"},
          {"embed_dim", 2},
          {"policy_family", "sigmoid_bell"},
          {"bell_sharpness", 4.0}}},
        {"training", {{"iterations", 40}, {"restarts", 2}, {"learning_rate", 0.05}}},
        {"propensity", {{"kind", "logistic"}, {"iterations", 30}}},
        {"evaluation", {{"grid_percent", 10}, {"null_band_draws", 3}}},
    };
}

fs::path run_path(const std::string& run_name) { return work_dir() / "runs" / run_name; }

std::size_t count_lines(const std::string& text) {
    std::size_t n = 0;
    for (char ch : text) n += ch == '\n' ? 1 : 0;
    return n;
}

// One synth + one train, shared by the cases below.
struct Pipeline {
    std::string synth_config, train_config;
    int synth_code = -1, train_code = -1;
};

const Pipeline& pipeline() {
    static const Pipeline p = [] {
        Pipeline pl;
        auto synth_cfg = base_config("synth01");
        pl.synth_config = write_config("synth.json", synth_cfg);
        pl.synth_code = run_cli("synth \"" + pl.synth_config + "\"").code;
        auto train_cfg = base_config("t1");
        pl.train_config = write_config("train.json", train_cfg);
        pl.train_code = run_cli("train \"" + pl.train_config + "\"").code;
        return pl;
    }();
    return p;
}

}  // namespace

TEST_CASE("synth writes the dataset, ground truth, and manifest") {
    REQUIRE(pipeline().synth_code == 0);
    const auto dir = run_path("synth01");
    REQUIRE(fs::exists(dir / "data.csv"));
    REQUIRE(fs::exists(dir / "truth.json"));
    REQUIRE(fs::exists(dir / "manifest.json"));
    REQUIRE(count_lines(read_text_file((dir / "data.csv").string())) == 401);

    const auto manifest = json::parse(read_text_file((dir / "manifest.json").string()));
    REQUIRE(manifest.at("command") == "synth");
    REQUIRE(manifest.at("files") ==
            json::array({"data.csv", "manifest.json", "truth.json"}));
}

TEST_CASE("train writes a loadable checkpoint, history, and report") {
    REQUIRE(pipeline().train_code == 0);
    const auto dir = run_path("t1");
    const auto ck = load_checkpoint((dir / "checkpoint.json").string());
    REQUIRE(ck.model_kind == "ctpm");
    REQUIRE(ck.subject_features == std::vector<std::string>{"x0", "x1", "x2", "x3"});
    REQUIRE(ck.normalization.fitted);
    REQUIRE(ck.propensity.kind == PropensityKind::Logistic);

    const auto history = read_text_file((dir / "history.csv").string());
    REQUIRE(history.rfind("restart,iteration,train_loss,val_loss\n", 0) == 0);
    REQUIRE(count_lines(history) == 1 + 2 * 40);

    const auto report = json::parse(read_text_file((dir / "train_report.json").string()));
    REQUIRE(report.at("model_kind") == "ctpm");
    REQUIRE(report.at("restarts").size() == 2);
    const int best = report.at("best_restart").get<int>();
    REQUIRE((best == 0 || best == 1));
    for (const auto& r : report.at("restarts")) REQUIRE_FALSE(r.at("aborted").get<bool>());
}

TEST_CASE("retraining the same config is byte-identical") {
    REQUIRE(pipeline().train_code == 0);
    auto cfg = base_config("t2");
    const auto path = write_config("train2.json", cfg);
    REQUIRE(run_cli("train \"" + path + "\"").code == 0);
    for (const std::string name : {"checkpoint.json", "history.csv", "train_report.json",
                                   "manifest.json"}) {
        REQUIRE(read_text_file((run_path("t1") / name).string()) ==
                read_text_file((run_path("t2") / name).string()));
    }
}

TEST_CASE("eval uses the run checkpoint by default and adds the random row") {
    REQUIRE(pipeline().train_code == 0);
    REQUIRE(run_cli("eval \"" + pipeline().train_config + "\"").code == 0);
    const auto dir = run_path("t1");
    for (const std::string name : {"report.json", "report.txt", "atetp_ctpm.csv",
                                   "cost_ctpm.csv", "atetp_random.csv", "cost_random.csv",
                                   "atetp_ctpm.svg", "cost_random.svg"}) {
        REQUIRE(fs::exists(dir / name));
    }
    const auto report = json::parse(read_text_file((dir / "report.json").string()));
    REQUIRE(report.at("rows").size() == 2);
    REQUIRE(report.at("null_band").at("draws") == 3);
    std::vector<std::string> names;
    for (const auto& row : report.at("rows")) names.push_back(row.at("name"));
    REQUIRE(std::count(names.begin(), names.end(), "ctpm") == 1);
    REQUIRE(std::count(names.begin(), names.end(), "random") == 1);
    // sorted by a-AUC descending
    std::vector<double> aucs;
    for (const auto& row : report.at("rows")) aucs.push_back(row.at("a_auc"));
    REQUIRE(std::is_sorted(aucs.rbegin(), aucs.rend()));

    const auto text = read_text_file((dir / "report.txt").string());
    REQUIRE(text.find("null band") != std::string::npos);
}

TEST_CASE("eval disambiguates duplicate checkpoint kinds") {
    REQUIRE(pipeline().train_code == 0);
    const auto ck_path = (run_path("t1") / "checkpoint.json").string();
    auto cfg = base_config("eval_dup");
    const auto path = write_config("eval_dup.json", cfg);
    REQUIRE(run_cli("eval \"" + path + "\" --checkpoint \"" + ck_path + "\" --checkpoint \"" +
                    ck_path + "\"")
                .code == 0);
    const auto report =
        json::parse(read_text_file((run_path("eval_dup") / "report.json").string()));
    std::vector<std::string> names;
    for (const auto& row : report.at("rows")) names.push_back(row.at("name"));
    REQUIRE(std::count(names.begin(), names.end(), "ctpm") == 1);
    REQUIRE(std::count(names.begin(), names.end(), "ctpm-2") == 1);
    REQUIRE(std::count(names.begin(), names.end(), "random") == 1);
}

TEST_CASE("predict scores an input table with the trained checkpoint") {
    REQUIRE(pipeline().synth_code == 0);
    REQUIRE(pipeline().train_code == 0);
    const auto input = (run_path("synth01") / "data.csv").string();
    REQUIRE(run_cli("predict \"" + pipeline().train_config + "\" --input \"" + input + "\"")
                .code == 0);
    const auto text = read_text_file((run_path("t1") / "predictions.csv").string());
    REQUIRE(text.rfind("subject_id,candidate_id,score,optimal_intensity\n", 0) == 0);
    REQUIRE(count_lines(text) == 401);

    // every optimal intensity is a valid dose
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        const auto pos = line.rfind(',');
        const double popt = std::stod(line.substr(pos + 1));
        REQUIRE(popt >= 0.0);
        REQUIRE(popt <= 1.0);
    }
}

TEST_CASE("predict refuses a non-ctpm checkpoint") {
    Checkpoint ck;
    ck.model_kind = "simple_ct";
    ck.simple_ct.weights = std::vector<double>(9, 0.1);
    ck.normalization.fitted = false;
    ck.subject_features = {"x0", "x1", "x2", "x3"};
    ck.candidate_features = {"y0", "y1", "y2", "y3"};
    const auto ck_path = (work_dir() / "sct_ck.json").string();
    save_checkpoint(ck, ck_path);
    const auto input = (run_path("synth01") / "data.csv").string();
    const auto res = run_cli("predict \"" + pipeline().train_config + "\" --checkpoint \"" +
                             ck_path + "\" --input \"" + input + "\"");
    REQUIRE(res.code == 2);
    REQUIRE(res.err.find("config error:") != std::string::npos);
}

TEST_CASE("config problems exit 2") {
    const auto res = run_cli("train \"" + (work_dir() / "missing.json").string() + "\"");
    REQUIRE(res.code == 2);
    REQUIRE(res.err.find("config error:") != std::string::npos);

    const auto bad = write_config("bad_key.json", {{"run_nam", "x"}});
    REQUIRE(run_cli("train \"" + bad + "\"").code == 2);
}

TEST_CASE("data problems exit 3") {
    json cfg = base_config("missing_file");
    cfg["data"] = {{"source", "file"},
                   {"file",
                    {{"path", (work_dir() / "nope.csv").string()},
                     {"subject_features", {"x0"}},
                     {"candidate_features", {"y0"}},
                     {"treatment", "T"},
                     {"intensity", "P"},
                     {"outcomes", {{"r", "r"}, {"c", "c"}, {"q", "q"}}}}}};
    const auto path = write_config("missing_file.json", cfg);
    const auto res = run_cli("train \"" + path + "\"");
    REQUIRE(res.code == 3);
    REQUIRE(res.err.find("data error:") != std::string::npos);
}

TEST_CASE("numeric degeneracy exits 4") {
    REQUIRE(pipeline().train_code == 0);
    // a table whose reward never moves: the cost-curve normalization is undefined
    data::SyntheticConfig gen;
    gen.n_records = 80;
    gen.seed = 11;
    auto ds = data::generate_synthetic(gen).dataset;
    for (auto& rec : ds.records) rec.outcomes["r"] = 0.0;
    const auto csv = (work_dir() / "zero_reward.csv").string();
    data::save_table(ds, csv, data::synthetic_schema(4, 4));

    json cfg = base_config("zero_reward");
    cfg["data"] = {{"source", "file"},
                   {"split", {{"train", 0.5}, {"validation", 0.1}, {"test", 0.4}}},
                   {"file",
                    {{"path", csv},
                     {"subject_features", {"x0", "x1", "x2", "x3"}},
                     {"candidate_features", {"y0", "y1", "y2", "y3"}},
                     {"treatment", "T"},
                     {"intensity", "P"},
                     {"outcomes", {{"r", "r"}, {"c", "c"}, {"q", "q"}}}}}};
    cfg["propensity"] = {{"kind", "constant"}};
    const auto path = write_config("zero_reward.json", cfg);
    const auto ck_path = (run_path("t1") / "checkpoint.json").string();
    const auto res = run_cli("eval \"" + path + "\" --checkpoint \"" + ck_path + "\"");
    REQUIRE(res.code == 4);
    REQUIRE(res.err.find("numeric error:") != std::string::npos);
}

TEST_CASE("usage mistakes fail without touching the pipeline") {
    REQUIRE(run_cli("").code != 0);
    REQUIRE(run_cli("conjure \"" + pipeline().train_config + "\"").code != 0);
    REQUIRE(run_cli("predict \"" + pipeline().train_config + "\"").code != 0);
}
