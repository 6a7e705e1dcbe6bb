#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sflsim/attack.hpp"
#include "sflsim/defense.hpp"
#include "sflsim/fl.hpp"

namespace sflsim {

// Fully resolved experiment description. Parsed from flat key=value text
// with [section] headers; every field has a default so a minimal config is
// enough to run.
struct ExperimentConfig {
    // [experiment]
    std::string name = "experiment";
    std::string dataset = "synth-mnist"; // synth-mnist|synth-cifar|mnist|cifar10|cifar100
    std::string data_dir = "data";
    int train_size = 4000; // cap / synthetic size; 0 = use everything
    int test_size = 1000;
    int clients = 20;
    double participation = 0.5;
    int rounds = 60;
    int shards = 200;
    std::uint64_t seed = 1;
    std::string out_dir;
    std::string aggregation = "scaffold"; // scaffold|fedavg
    double server_lr = 1.0;

    // [local]
    double local_lr = 0.05;
    int local_epochs = 2;
    int local_batch = 32;
    std::string c_update = "steps";  // steps|clients
    std::string c_option = "drift";  // drift|server-grad

    // [attack]
    std::string attack_kind = "none"; // none|blackbox|neurotoxin|badsfl
    int attacker_client = 0;
    int window_start = 10;
    int window_end = 40;
    double poison_lr = 0.1;
    int attack_epochs = 2;
    int attack_batch = 32;
    double attack_momentum = 0.0;
    double attack_weight_decay = 0.0;
    int future_rounds = 10; // j
    int agg_size = 0;       // n; 0 = participants per round
    double neurotoxin_topk = 0.05;
    std::string supplement = "oracle"; // oracle|gan|none
    int supplement_per_class = 60;
    int supplement_holdout = 600;
    int gan_epochs = 2;
    double gan_lr = 0.001;
    double confidence_floor = 0.6;

    // [trigger]
    std::string trigger_kind = "label_flip"; // label_flip|pattern|feature
    int src_class = 5;
    int target_class = 2;
    double poison_ratio = 0.1;
    int pattern_size = 4;
    std::string feature_predicate = "dominant_green";
    double feature_margin = 0.1;

    // [defense]
    std::string defense_enabled = "none"; // none|all|comma list
    double clip_bound = 0.0;              // 0 = warmup median
    double noise_sigma = 0.001;
    double prune_fraction = 0.2;
    double anomaly_threshold = 0.0;
    int warmup_rounds = 5;

    void validate() const;

    // Canonical text with every resolved value; stable field order.
    std::string echo() const;
    // Hash of the echo (the seed is part of it), as fixed-width hex.
    std::string fingerprint() const;

    TriggerSpec trigger_spec() const;
    AttackConfig attack_config() const; // agg_size resolved by the harness
    DefenseConfig defense_config() const;
};

// Parses config text; unknown keys and malformed values name the key and
// line. Values present in the text override the defaults.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);

// Bundled experiment grid.
std::vector<std::string> preset_names();
std::string preset_text(const std::string& name);
ExperimentConfig preset_config(const std::string& name);

} // namespace sflsim
