// Command-line front end: run one experiment, run the preset suite, or
// inspect a resolved configuration.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "sflsim/config.hpp"
#include "sflsim/dataset.hpp"
#include "sflsim/errors.hpp"
#include "sflsim/harness.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::string preset;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int rounds = -1;
};

sflsim::ExperimentConfig resolve_config(const CommonArgs& args) {
    if (args.config_path.empty() == args.preset.empty())
        throw sflsim::config_error("give exactly one of --config or --preset");
    sflsim::ExperimentConfig cfg = args.config_path.empty()
                                       ? sflsim::preset_config(args.preset)
                                       : sflsim::parse_config_file(args.config_path);
    if (args.seed_set) cfg.seed = args.seed;
    if (args.rounds >= 0) cfg.rounds = args.rounds;
    if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
    cfg.validate();
    return cfg;
}

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "experiment config file (key = value sections)");
    cmd->add_option("--preset", args.preset, "bundled preset name (see --list)");
    cmd->add_option("--out", args.out_dir, "output directory for CSV/plot data");
    cmd->add_option("--rounds", args.rounds, "override the round count");
    auto* seed = cmd->add_option("--seed", args.seed, "override the master seed");
    seed->each([&args](const std::string&) { args.seed_set = true; });
}

int cmd_run(const CommonArgs& args) {
    const auto cfg = resolve_config(args);
    std::cerr << "running " << cfg.name << " (seed " << cfg.seed << ", " << cfg.rounds
              << " rounds)\n";
    const auto log = sflsim::run_experiment(cfg);
    sflsim::write_outputs(cfg, log);
    if (!log.records.empty()) {
        const auto& last = log.records.back();
        std::cout << "final round " << last.round << ": pta=" << last.pta << " bta=" << last.bta
                  << "\n";
    }
    std::cout << "fingerprint " << log.fingerprint << "\n";
    return 0;
}

int cmd_suite(const std::vector<std::string>& names, const CommonArgs& args) {
    std::vector<sflsim::ExperimentConfig> grid;
    for (const auto& name : names) {
        auto cfg = sflsim::preset_config(name);
        if (args.seed_set) cfg.seed = args.seed;
        if (args.rounds >= 0) cfg.rounds = args.rounds;
        if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
        cfg.validate();
        grid.push_back(std::move(cfg));
    }
    const auto report = sflsim::run_suite(grid);
    for (std::size_t i = 0; i < report.entries.size(); ++i)
        sflsim::write_outputs(grid[i], report.entries[i].log);
    const std::string text = sflsim::format_suite_report(report);
    std::cout << text;
    if (!args.out_dir.empty()) {
        std::ofstream f(std::filesystem::path(args.out_dir) / "suite-report.csv");
        f << text;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"SCAFFOLD federated-learning backdoor simulator"};
    app.require_subcommand(1);

    CommonArgs run_args;
    auto* run = app.add_subcommand("run", "run one experiment");
    add_common(run, run_args);

    CommonArgs suite_args;
    std::vector<std::string> suite_names;
    bool suite_all = false;
    auto* suite = app.add_subcommand("suite", "run a grid of presets and compare");
    suite->add_option("--preset", suite_names, "preset names to include")->take_all();
    suite->add_flag("--all", suite_all, "run the full bundled grid");
    suite->add_option("--out", suite_args.out_dir, "output directory");
    suite->add_option("--rounds", suite_args.rounds, "override the round count");
    auto* sseed = suite->add_option("--seed", suite_args.seed, "override the master seed");
    sseed->each([&suite_args](const std::string&) { suite_args.seed_set = true; });

    CommonArgs inspect_args;
    bool list_presets = false;
    auto* inspect = app.add_subcommand("inspect", "print the fully resolved configuration");
    add_common(inspect, inspect_args);
    inspect->add_flag("--list", list_presets, "list bundled preset names");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(run_args);
        if (suite->parsed()) {
            if (suite_all) suite_names = sflsim::preset_names();
            if (suite_names.empty())
                throw sflsim::config_error("suite needs --preset names or --all");
            return cmd_suite(suite_names, suite_args);
        }
        if (inspect->parsed()) {
            if (list_presets) {
                for (const auto& n : sflsim::preset_names()) std::cout << n << "\n";
                return 0;
            }
            const auto cfg = resolve_config(inspect_args);
            std::cout << cfg.echo();
            std::cout << "# fingerprint " << cfg.fingerprint() << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
