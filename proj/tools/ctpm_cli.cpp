// Command-line front end: synth | train | eval | predict, each driven by a
// JSON experiment config.
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ctpm/experiment.hpp"

int main(int argc, char** argv) {
    CLI::App app{"continuous-treatment policy matching"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> checkpoints;
    std::string checkpoint_path;
    std::string input_path;
    std::string output_path;

    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    synth->add_option("config", config_path, "experiment config (json)")->required();

    auto* train = app.add_subcommand("train", "train a model and write a checkpoint");
    train->add_option("config", config_path, "experiment config (json)")->required();

    auto* eval = app.add_subcommand("eval", "evaluate checkpoints on the test split");
    eval->add_option("config", config_path, "experiment config (json)")->required();
    eval->add_option("--checkpoint", checkpoints, "checkpoint file (repeatable)");

    auto* predict = app.add_subcommand("predict", "score a table with a ctpm checkpoint");
    predict->add_option("config", config_path, "experiment config (json)")->required();
    predict->add_option("--checkpoint", checkpoint_path, "ctpm checkpoint file");
    predict->add_option("--input", input_path, "input table (csv)")->required();
    predict->add_option("--output", output_path, "output path (default <run dir>/predictions.csv)");

    CLI11_PARSE(app, argc, argv);

    try {
        const ctpm::ExperimentConfig config = ctpm::load_config(config_path);
        if (synth->parsed()) {
            ctpm::cmd_synth(config);
        } else if (train->parsed()) {
            ctpm::cmd_train(config);
        } else if (eval->parsed()) {
            ctpm::cmd_eval(config, checkpoints);
        } else {
            ctpm::cmd_predict(config, checkpoint_path, input_path, output_path);
        }
    } catch (const ctpm::ConfigError& e) {
        std::cerr << "config error: " << e.what() << std::endl;
        return 2;
    } catch (const ctpm::DataError& e) {
        std::cerr << "data error: " << e.what() << std::endl;
        return 3;
    } catch (const ctpm::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << std::endl;
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }
    return 0;
}
