#include <catch2/catch_amalgamated.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "ctpm/dataset.hpp"

using namespace ctpm;
using namespace ctpm::data;

namespace {

std::filesystem::path temp_file(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "ctpm_dataset_test";
    std::filesystem::create_directories(dir);
    return dir / name;
}

void write_file(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

TableSchema two_by_one_schema() {
    TableSchema s;
    s.subject_features = {"x0", "x1"};
    s.candidate_features = {"y0"};
    s.outcomes = {{"r", "reward"}};
    return s;
}

Dataset tiny_dataset(std::size_t n) {
    Dataset ds;
    ds.subject_feature_names = {"x0", "x1"};
    ds.candidate_feature_names = {"y0"};
    ds.outcome_names = {"r"};
    for (std::size_t i = 0; i < n; ++i) {
        MatchRecord rec;
        rec.subject_id = "s" + std::to_string(i);
        rec.candidate_id = "c" + std::to_string(i);
        rec.x = {static_cast<double>(i), static_cast<double>(i % 3)};
        rec.y = {static_cast<double>(2 * i)};
        rec.treatment = static_cast<int>(i % 2);
        rec.intensity = static_cast<double>(i) / static_cast<double>(n);
        rec.outcomes["r"] = static_cast<double>(i);
        ds.records.push_back(std::move(rec));
    }
    return ds;
}

}  // namespace

TEST_CASE("load_table parses a well-formed file") {
    const auto p = temp_file("ok.csv");
    write_file(p,
               "subject_id,candidate_id,x0,x1,y0,T,P,reward\n"
               "a,b,1.5,-2,0.25,1,0.5,10\n"
               "c,d,0,3.25,-1,0,0.75,-2\n");
    const auto ds = load_table(p.string(), two_by_one_schema());
    REQUIRE(ds.size() == 2);
    REQUIRE(ds.records[0].subject_id == "a");
    REQUIRE(ds.records[0].x == std::vector<double>{1.5, -2.0});
    REQUIRE(ds.records[0].y == std::vector<double>{0.25});
    REQUIRE(ds.records[0].treatment == 1);
    REQUIRE(ds.records[0].intensity == 0.5);
    REQUIRE(ds.records[0].outcome("r") == 10.0);
    REQUIRE(ds.records[1].treatment == 0);
    REQUIRE(ds.treated_count() == 1);
    REQUIRE(ds.subject_feature_names == std::vector<std::string>{"x0", "x1"});
}

TEST_CASE("load_table errors carry the row number") {
    const auto p = temp_file("badT.csv");
    write_file(p,
               "subject_id,candidate_id,x0,x1,y0,T,P,reward\n"
               "a,b,1,2,3,1,0.5,1\n"
               "c,d,1,2,3,2,0.5,1\n");
    try {
        load_table(p.string(), two_by_one_schema());
        FAIL("expected DataError");
    } catch (const DataError& e) {
        REQUIRE(std::string(e.what()).find("row 3") != std::string::npos);
    }
}

TEST_CASE("intensity is clamped only within tolerance") {
    const auto p = temp_file("clampP.csv");
    write_file(p,
               "subject_id,candidate_id,x0,x1,y0,T,P,reward\n"
               "a,b,1,2,3,1,1.0000000000000002,1\n");
    const auto ds = load_table(p.string(), two_by_one_schema());
    REQUIRE(ds.records[0].intensity == 1.0);

    const auto q = temp_file("badP.csv");
    write_file(q,
               "subject_id,candidate_id,x0,x1,y0,T,P,reward\n"
               "a,b,1,2,3,1,1.5,1\n");
    REQUIRE_THROWS_AS(load_table(q.string(), two_by_one_schema()), DataError);
}

TEST_CASE("missing columns and empty files are rejected") {
    const auto p = temp_file("missing.csv");
    write_file(p, "subject_id,candidate_id,x0,y0,T,P,reward\na,b,1,2,1,0.5,1\n");
    REQUIRE_THROWS_AS(load_table(p.string(), two_by_one_schema()), DataError);

    const auto q = temp_file("headeronly.csv");
    write_file(q, "subject_id,candidate_id,x0,x1,y0,T,P,reward\n");
    REQUIRE_THROWS_AS(load_table(q.string(), two_by_one_schema()), DataError);

    REQUIRE_THROWS_AS(load_table(temp_file("nope.csv").string(), two_by_one_schema()),
                      DataError);
}

TEST_CASE("save and load round-trip preserves every value bit") {
    auto ds = tiny_dataset(7);
    ds.records[3].x[0] = 1.0 / 3.0;
    ds.records[5].outcomes["r"] = -1e-17;
    const auto p = temp_file("roundtrip.csv");
    save_table(ds, p.string(), two_by_one_schema());
    const auto back = load_table(p.string(), two_by_one_schema());
    REQUIRE(back.size() == ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        REQUIRE(back.records[i].x == ds.records[i].x);
        REQUIRE(back.records[i].y == ds.records[i].y);
        REQUIRE(back.records[i].intensity == ds.records[i].intensity);
        REQUIRE(back.records[i].outcome("r") == ds.records[i].outcome("r"));
    }
}

TEST_CASE("split respects ratios and is a deterministic partition") {
    const auto ds = tiny_dataset(10);
    const auto s1 = split(ds, {0.6, 0.2, 0.2}, 42);
    REQUIRE(s1.validation.size() == 2);
    REQUIRE(s1.test.size() == 2);
    REQUIRE(s1.train.size() == 6);

    std::set<std::string> ids;
    for (const auto* part : {&s1.train, &s1.validation, &s1.test}) {
        for (const auto& r : part->records) ids.insert(r.subject_id);
    }
    REQUIRE(ids.size() == 10);

    const auto s2 = split(ds, {0.6, 0.2, 0.2}, 42);
    for (std::size_t i = 0; i < s1.train.size(); ++i) {
        REQUIRE(s1.train.records[i].subject_id == s2.train.records[i].subject_id);
    }
    const auto s3 = split(ds, {0.6, 0.2, 0.2}, 43);
    bool same = true;
    for (std::size_t i = 0; i < s1.train.size(); ++i) {
        same = same && s1.train.records[i].subject_id == s3.train.records[i].subject_id;
    }
    REQUIRE_FALSE(same);

    REQUIRE_THROWS_AS(split(ds, {0.5, 0.2, 0.2}, 1), ConfigError);
    REQUIRE_THROWS_AS(split(ds, {1.0, 0.0, 0.0}, 1), ConfigError);
}

TEST_CASE("normalizer gives the train split zero mean and unit variance") {
    const auto ds = tiny_dataset(50);
    const auto splits = split(ds, {}, 9);
    const auto stats = fit_normalizer(splits.train);
    const auto train = apply_normalizer(stats, splits.train);
    const std::size_t n = train.size();
    double mean = 0.0, var = 0.0;
    for (const auto& r : train.records) mean += r.x[0];
    mean /= static_cast<double>(n);
    for (const auto& r : train.records) var += (r.x[0] - mean) * (r.x[0] - mean);
    var /= static_cast<double>(n);
    REQUIRE(mean == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(var == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("zero-variance feature normalizes to zero") {
    Dataset ds = tiny_dataset(5);
    for (auto& r : ds.records) r.x[1] = 7.0;
    const auto stats = fit_normalizer(ds);
    const auto out = apply_normalizer(stats, ds);
    for (const auto& r : out.records) REQUIRE(r.x[1] == 0.0);
}

TEST_CASE("treatment can be derived from the train intensity median") {
    Dataset ds = tiny_dataset(9);
    for (auto& r : ds.records) r.treatment = -1;
    Splits splits;
    splits.train = ds;
    splits.validation = ds;
    splits.test = ds;
    derive_treatment_from_median(splits);
    const double med = train_intensity_median(ds);
    for (const auto& r : splits.test.records) {
        REQUIRE(r.treatment == (r.intensity > med ? 1 : 0));
    }
    // both cohorts must be nonempty afterwards
    REQUIRE(splits.train.treated_count() > 0);
    REQUIRE(splits.train.treated_count() < splits.train.size());
}

TEST_CASE("subsampling keeps every nonzero-outcome record") {
    Dataset ds = tiny_dataset(40);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        ds.records[i].outcomes["r"] = (i % 4 == 0) ? 1.5 : 0.0;
    }
    const auto kept_all = subsample_zero_outcome(ds, "r", 1.0, 3);
    REQUIRE(kept_all.size() == ds.size());
    const auto kept_half = subsample_zero_outcome(ds, "r", 0.5, 3);
    REQUIRE(kept_half.size() > 10);
    REQUIRE(kept_half.size() < 40);
    std::size_t nonzero = 0;
    for (const auto& r : kept_half.records) nonzero += r.outcome("r") != 0.0;
    REQUIRE(nonzero == 10);  // every nonzero survives
    // deterministic per seed
    const auto again = subsample_zero_outcome(ds, "r", 0.5, 3);
    REQUIRE(again.size() == kept_half.size());
    REQUIRE_THROWS_AS(subsample_zero_outcome(ds, "r", 0.0, 3), Error);
}

TEST_CASE("shuffle_records is a seeded permutation") {
    auto a = tiny_dataset(12);
    auto b = tiny_dataset(12);
    auto c = tiny_dataset(12);
    shuffle_records(a, 5);
    shuffle_records(b, 5);
    shuffle_records(c, 6);
    REQUIRE(a.size() == 12);
    for (std::size_t i = 0; i < 12; ++i) {
        REQUIRE(a.records[i].subject_id == b.records[i].subject_id);
    }
    std::set<std::string> ids;
    for (const auto& r : c.records) ids.insert(r.subject_id);
    REQUIRE(ids.size() == 12);
}

TEST_CASE("format_value survives a parse round-trip") {
    for (double v : {1.0 / 3.0, -1e-17, 12345.678901234567, 0.1}) {
        REQUIRE(std::stod(format_value(v)) == v);
    }
}

TEST_CASE("outcome lookup names the missing dimension") {
    MatchRecord rec;
    rec.outcomes["r"] = 1.0;
    REQUIRE_THROWS_AS(rec.outcome("c"), DataError);
}
