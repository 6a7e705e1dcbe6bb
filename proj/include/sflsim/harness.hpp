#pragma once

#include <string>
#include <vector>

#include "sflsim/config.hpp"
#include "sflsim/fl.hpp"

namespace sflsim {

struct MetricsLog {
    std::vector<RoundRecord> records;
    std::string fingerprint;
    std::string name;
};

// Full seeded round loop per the config: data, partition, clients, attacker,
// defenses, metrics. Deterministic for a fixed config.
MetricsLog run_experiment(const ExperimentConfig& cfg);

// CSV with header round,pta,bta,update_norm,defense_rejects,attacker_active
// (UTF-8, LF). Doubles are written with max precision and round-trip exactly.
void write_metrics(const MetricsLog& log, const std::string& path);
MetricsLog read_metrics_csv(const std::string& path);

// Per-curve "<round> <value>" series next to the CSV: <prefix>pta.dat and
// <prefix>bta.dat.
void emit_plot_data(const MetricsLog& log, const std::string& prefix);

// Writes metrics CSV, plot data and fingerprint under cfg.out_dir.
void write_outputs(const ExperimentConfig& cfg, const MetricsLog& log);

struct SuiteEntry {
    std::string name;
    MetricsLog log;
};

// Aligned multi-run comparison: BTA/PTA curves over identical rounds plus a
// checkpoint summary at {end of attack, +10, +20, final}.
struct SuiteReport {
    std::vector<SuiteEntry> entries;
    std::vector<int> checkpoints;

    double bta_at(std::size_t entry, int round) const;
    double pta_at(std::size_t entry, int round) const;
};

SuiteReport run_suite(const std::vector<ExperimentConfig>& grid);
std::string format_suite_report(const SuiteReport& report);

} // namespace sflsim
