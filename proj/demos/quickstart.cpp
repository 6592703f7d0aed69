// Minimal end-to-end walkthrough: synthesize a matching dataset, train the
// CTPM estimator and the simple-CT baseline, then compare them on the held-out
// test split.
#include <cstdio>

#include "ctpm/baselines.hpp"
#include "ctpm/evaluation.hpp"
#include "ctpm/synthetic.hpp"
#include "ctpm/train.hpp"

int main() {
    using namespace ctpm;

    data::SyntheticConfig gen;
    gen.n_records = 4000;
    gen.seed = 7;
    auto synth = data::generate_synthetic(gen);
    std::printf("generated %zu records (%zu treated)\n", synth.dataset.size(),
                synth.dataset.treated_count());

    auto splits = data::split(synth.dataset, {}, gen.seed);
    const auto stats = data::fit_normalizer(splits.train);
    const auto train = data::apply_normalizer(stats, splits.train);
    const auto val = data::apply_normalizer(stats, splits.validation);
    const auto test = data::apply_normalizer(stats, splits.test);

    PropensityConfig pcfg;  // constant propensity: treatment was randomized
    const auto prop = fit_propensity(train, pcfg);
    std::printf("propensity (constant): %.3f\n", prop.treated_rate);

    ObjectiveSpec objective;  // quality_net_reward with defaults
    TrainConfig tcfg;
    tcfg.iterations = 120;
    tcfg.restarts = 2;
    tcfg.seed = gen.seed;

    CtpmArchitecture arch;
    CtpmModel model = make_ctpm_model(arch, static_cast<int>(gen.subject_dims),
                                      static_cast<int>(gen.candidate_dims));
    auto fit = train_ctpm(model, train, val, prop, objective, tcfg);
    std::printf("ctpm: best restart %zu, validation loss %.5f\n", fit.best_restart,
                fit.best_val_loss);

    SimpleCtModel sct = make_simple_ct(static_cast<int>(gen.subject_dims),
                                       static_cast<int>(gen.candidate_dims));
    auto sct_fit = train_simple_ct(sct, train, val, prop, objective, tcfg);
    std::printf("simple_ct: best restart %zu, validation loss %.5f\n", sct_fit.best_restart,
                sct_fit.best_val_loss);

    std::vector<eval::NamedScores> rows;
    rows.push_back({"ctpm", {}});
    rows.push_back({"simple_ct", {}});
    for (const auto& rec : test.records) {
        rows[0].scores.push_back(score_record(model, rec, ScoreMode::ObservedIntensity));
        rows[1].scores.push_back(sct.score(rec));
    }

    eval::CurveOptions opt;
    opt.tie_seed = gen.seed;
    const auto report = eval::evaluate_all(rows, test, prop, objective, opt, gen.seed);
    std::printf("\n%-12s %10s %10s\n", "model", "a-AUC", "c-AUC");
    for (const auto& row : report.rows) {
        std::printf("%-12s %10.4f %10.4f\n", row.name.c_str(), row.a_auc, row.c_auc);
    }
    return 0;
}
