// Command line front end: `run` executes a config across methods and
// seeds, `selftest` runs the seeded oracle suites, `gen-data` emits a
// synthetic dataset CSV.
//
// Exit codes: 0 success, 1 configuration/parse error, 2 runtime or numeric
// error, 3 selftest failure.

#include <exception>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "deepccg/errors.hpp"
#include "deepccg/experiment.hpp"
#include "deepccg/selftest.hpp"
#include "deepccg/stream.hpp"

namespace {

int run_command(const std::string& config_path, const std::string& out_dir,
                std::uint64_t seed_offset) {
    const deepccg::ExperimentConfig config = deepccg::load_config_file(config_path);
    const auto report = deepccg::run_experiment(config, out_dir, seed_offset, std::cout);
    std::cout << report.rows.size() << " runs written to " << out_dir << "\n";
    return 0;
}

int selftest_command(const std::string& suite) {
    const auto report = deepccg::run_selftest(suite);
    deepccg::print_report(report, std::cout);
    return report.all_passed() ? 0 : 3;
}

int gendata_command(const std::string& config_path, const std::string& out_path) {
    std::ifstream in(config_path, std::ios::binary);
    if (!in) throw deepccg::ConfigError("cannot open config file '" + config_path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    const auto [spec, seed] = deepccg::parse_gendata_config(buf.str());
    const auto data = deepccg::synth_gaussian_dataset(spec, seed);

    std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + out_path + "'");
    deepccg::write_csv_dataset(out, data);
    std::cout << data.size() << " examples written to " << out_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DeepCCG continual learning experiments"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out", suite, gendata_out;
    std::uint64_t seed_offset = 0;

    CLI::App* run = app.add_subcommand("run", "execute the experiment described by a config file");
    run->add_option("config", config_path, "JSON experiment config")->required();
    run->add_option("--out-dir", out_dir, "output directory for CSV files");
    run->add_option("--seed-offset", seed_offset, "added to every configured seed");

    CLI::App* selftest = app.add_subcommand("selftest", "run a seeded verification suite");
    selftest
        ->add_option("suite", suite,
                     "posterior|predictive|gradient|selection|shift|reservoir|all")
        ->required();

    CLI::App* gendata = app.add_subcommand("gen-data", "write a synthetic dataset CSV");
    gendata->add_option("synth-config", config_path, "JSON synth spec (+ optional seed)")
        ->required();
    gendata->add_option("out", gendata_out, "destination CSV path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (run->parsed()) return run_command(config_path, out_dir, seed_offset);
        if (selftest->parsed()) return selftest_command(suite);
        if (gendata->parsed()) return gendata_command(config_path, gendata_out);
    } catch (const deepccg::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const deepccg::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
