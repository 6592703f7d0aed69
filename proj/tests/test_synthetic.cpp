#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <filesystem>

#include "ctpm/synthetic.hpp"

using namespace ctpm;
using namespace ctpm::data;

TEST_CASE("generation is deterministic per seed") {
    SyntheticConfig cfg;
    cfg.n_records = 200;
    cfg.seed = 31;
    const auto a = generate_synthetic(cfg);
    const auto b = generate_synthetic(cfg);
    REQUIRE(a.dataset.size() == 200);
    for (std::size_t i = 0; i < 200; ++i) {
        REQUIRE(a.dataset.records[i].x == b.dataset.records[i].x);
        REQUIRE(a.dataset.records[i].intensity == b.dataset.records[i].intensity);
        REQUIRE(a.dataset.records[i].treatment == b.dataset.records[i].treatment);
        REQUIRE(a.dataset.records[i].outcome("r") == b.dataset.records[i].outcome("r"));
        REQUIRE(a.truth.pstar[i] == b.truth.pstar[i]);
    }
    cfg.seed = 32;
    const auto c = generate_synthetic(cfg);
    REQUIRE(c.dataset.records[0].x != a.dataset.records[0].x);
}

TEST_CASE("planted structure matches its closed form") {
    SyntheticConfig cfg;
    cfg.n_records = 64;
    cfg.seed = 5;
    const auto res = generate_synthetic(cfg);
    for (std::size_t i = 0; i < res.dataset.size(); ++i) {
        const auto& rec = res.dataset.records[i];
        const double pstar = sigmoid(1.2 * rec.x[0] + 0.9 * rec.y[0]);
        const double aff = sigmoid(1.8 * (rec.x[2] * rec.y[2] + rec.x[3] * rec.y[3]));
        REQUIRE(res.truth.pstar[i] == Catch::Approx(pstar).epsilon(1e-15));
        REQUIRE(res.truth.affinity[i] == Catch::Approx(aff).epsilon(1e-15));
        REQUIRE(res.truth.pstar[i] > 0.0);
        REQUIRE(res.truth.pstar[i] < 1.0);
    }
}

TEST_CASE("quality outcome is noiseless and cohort-determined") {
    SyntheticConfig cfg;
    cfg.n_records = 128;
    cfg.seed = 8;
    const auto res = generate_synthetic(cfg);
    for (const auto& rec : res.dataset.records) {
        const double expect =
            cfg.quality_base + (rec.treatment == 1 ? cfg.quality_lift : 0.0);
        REQUIRE(rec.outcome("q") == expect);
    }

    SECTION("gated lift follows its closed form and leaves the draw stream alone") {
        SyntheticConfig gated = cfg;
        gated.quality_gate = 0.9;
        const auto res2 = generate_synthetic(gated);
        for (std::size_t i = 0; i < res2.dataset.size(); ++i) {
            const auto& rec = res2.dataset.records[i];
            REQUIRE(rec.x == res.dataset.records[i].x);
            REQUIRE(rec.treatment == res.dataset.records[i].treatment);
            const double lift = gated.quality_lift + 0.9 * sigmoid(1.5 * rec.x[1]);
            const double expect = gated.quality_base + (rec.treatment == 1 ? lift : 0.0);
            REQUIRE(rec.outcome("q") == Catch::Approx(expect).epsilon(1e-15));
        }
    }
}

TEST_CASE("control cost carries only noise") {
    SyntheticConfig cfg;
    cfg.n_records = 300;
    cfg.seed = 10;
    cfg.noise_c = 0.0;
    const auto res = generate_synthetic(cfg);
    for (std::size_t i = 0; i < res.dataset.size(); ++i) {
        const auto& rec = res.dataset.records[i];
        if (rec.treatment == 0) {
            REQUIRE(rec.outcome("c") == 0.0);
        } else {
            REQUIRE(rec.outcome("c") ==
                    Catch::Approx(cfg.cost_base + cfg.cost_slope * rec.intensity)
                        .epsilon(1e-12));
            REQUIRE(res.truth.uplift_c[i] ==
                    Catch::Approx(rec.outcome("c")).epsilon(1e-12));
        }
    }
}

TEST_CASE("treated fraction tracks the configured rate") {
    SyntheticConfig cfg;
    cfg.n_records = 20000;
    cfg.treatment_rate = 0.3;
    cfg.seed = 77;
    const auto res = generate_synthetic(cfg);
    const double frac = static_cast<double>(res.dataset.treated_count()) /
                        static_cast<double>(res.dataset.size());
    REQUIRE(frac == Catch::Approx(0.3).margin(0.02));
}

TEST_CASE("config validation") {
    SyntheticConfig cfg;
    cfg.subject_dims = 3;
    REQUIRE_THROWS_AS(generate_synthetic(cfg), ConfigError);
    cfg = {};
    cfg.treatment_rate = 1.0;
    REQUIRE_THROWS_AS(generate_synthetic(cfg), ConfigError);
}

TEST_CASE("truth sidecar round-trips through json") {
    SyntheticConfig cfg;
    cfg.n_records = 50;
    cfg.seed = 3;
    const auto res = generate_synthetic(cfg);
    const auto path =
        (std::filesystem::temp_directory_path() / "ctpm_truth_test.json").string();
    save_truth(res.truth, path);
    const auto back = load_truth(path);
    REQUIRE(back.pstar == res.truth.pstar);
    REQUIRE(back.affinity == res.truth.affinity);
    REQUIRE(back.uplift_r == res.truth.uplift_r);
    REQUIRE(back.uplift_c == res.truth.uplift_c);
}

TEST_CASE("synthetic schema names line up with the generator") {
    const auto schema = synthetic_schema(4, 5);
    REQUIRE(schema.subject_features ==
            std::vector<std::string>{"x0", "x1", "x2", "x3"});
    REQUIRE(schema.candidate_features ==
            std::vector<std::string>{"y0", "y1", "y2", "y3", "y4"});
    REQUIRE(schema.outcomes.at("r") == "r");
    REQUIRE(schema.treatment == "T");
    REQUIRE(schema.intensity == "P");
}
