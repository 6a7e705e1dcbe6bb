#include "sflsim/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <sstream>
#include <thread>

#include "sflsim/attack.hpp"
#include "sflsim/defense.hpp"
#include "sflsim/errors.hpp"
#include "sflsim/partition.hpp"
#include "sflsim/trigger.hpp"

namespace sflsim {

namespace {

struct DataBundle {
    LabeledDataset train;
    LabeledDataset test;
    LabeledDataset holdout; // oracle supplementation pool, disjoint from train/test
};

LabeledDataset cap_size(LabeledDataset ds, int cap, std::uint64_t seed) {
    if (cap <= 0 || ds.size() <= static_cast<std::size_t>(cap)) return ds;
    // Seeded uniform subset, original order preserved.
    Rng rng(seed);
    auto keep = rng.sample_without_replacement(static_cast<int>(ds.size()), cap);
    std::sort(keep.begin(), keep.end());
    return ds.subset(keep);
}

DataBundle load_data(const ExperimentConfig& cfg) {
    namespace fs = std::filesystem;
    DataBundle d;
    const std::uint64_t s = cfg.seed;
    if (cfg.dataset == "synth-mnist" || cfg.dataset == "synth-cifar") {
        const bool digits = cfg.dataset == "synth-mnist";
        const int train_n = cfg.train_size > 0 ? cfg.train_size : 4000;
        const int test_n = cfg.test_size > 0 ? cfg.test_size : 1000;
        const auto gen = [&](int n, std::uint64_t k) {
            return digits ? synth_digits(n, derive_seed(s, k, 0, seed_purpose::kData))
                          : synth_shapes(n, derive_seed(s, k, 0, seed_purpose::kData));
        };
        d.train = gen(train_n, 1);
        d.test = gen(test_n, 2);
        if (cfg.supplement_holdout > 0) d.holdout = gen(cfg.supplement_holdout, 3);
        return d;
    }

    const fs::path dir(cfg.data_dir);
    if (cfg.dataset == "mnist") {
        d.train = load_mnist((dir / "train-images-idx3-ubyte").string(),
                             (dir / "train-labels-idx1-ubyte").string());
        d.test = load_mnist((dir / "t10k-images-idx3-ubyte").string(),
                            (dir / "t10k-labels-idx1-ubyte").string());
    } else if (cfg.dataset == "cifar10") {
        std::vector<std::string> files;
        for (int i = 1; i <= 5; ++i)
            files.push_back((dir / ("data_batch_" + std::to_string(i) + ".bin")).string());
        d.train = load_cifar10(files);
        d.test = load_cifar10({(dir / "test_batch.bin").string()});
    } else if (cfg.dataset == "cifar100") {
        d.train = load_cifar100((dir / "train.bin").string());
        d.test = load_cifar100((dir / "test.bin").string());
    } else {
        throw config_error("unknown dataset " + cfg.dataset);
    }
    d.train = cap_size(std::move(d.train), cfg.train_size, derive_seed(s, 4, 0, seed_purpose::kData));
    d.test = cap_size(std::move(d.test), cfg.test_size, derive_seed(s, 5, 0, seed_purpose::kData));
    if (cfg.supplement_holdout > 0 &&
        d.train.size() > static_cast<std::size_t>(cfg.supplement_holdout)) {
        // Reserve the tail of the (capped) train split as the oracle pool.
        const auto cut = d.train.size() - static_cast<std::size_t>(cfg.supplement_holdout);
        std::vector<int> head(cut), tail(static_cast<std::size_t>(cfg.supplement_holdout));
        std::iota(head.begin(), head.end(), 0);
        std::iota(tail.begin(), tail.end(), static_cast<int>(cut));
        d.holdout = d.train.subset(tail);
        d.train = d.train.subset(head);
    }
    return d;
}

ModelSpec model_for(const LabeledDataset& train) {
    if (train.shape == Shape3{1, 28, 28}) return mnist_convnet();
    if (train.shape == Shape3{3, 32, 32}) return cifar_cnn(train.num_classes);
    throw config_error("no model for image shape " + train.shape.str());
}

} // namespace

MetricsLog run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    MetricsLog log;
    log.fingerprint = cfg.fingerprint();
    log.name = cfg.name;
    if (cfg.rounds == 0) return log;

    const DataBundle data = load_data(cfg);
    const ModelSpec spec = model_for(data.train);

    const TriggerSpec trigger = cfg.trigger_spec();
    trigger.validate(data.test.shape, data.test.num_classes);
    const LabeledDataset backdoor_test = make_backdoor_testset(data.test, trigger);

    // Clients own label-sorted shards of the training split.
    const PartitionPlan plan = partition_noniid(
        data.train, cfg.clients, cfg.shards, derive_seed(cfg.seed, 0, 0, seed_purpose::kSampling));
    std::vector<ClientState> clients;
    clients.reserve(static_cast<std::size_t>(cfg.clients));
    for (int i = 0; i < cfg.clients; ++i) {
        ClientState c;
        c.id = i;
        c.dataset = data.train.subset(plan.client_indices(i));
        clients.push_back(std::move(c));
    }

    ServerState server;
    server.w = init_params(spec, derive_seed(cfg.seed, 0, 0, seed_purpose::kInit));
    server.c = pv::zeros_like(server.w);
    server.eta_g = cfg.server_lr;

    RoundOptions ropts;
    ropts.participation = cfg.participation;
    ropts.fedavg = cfg.aggregation == "fedavg";
    ropts.local.lr = cfg.local_lr;
    ropts.local.epochs = cfg.local_epochs;
    ropts.local.batch_size = cfg.local_batch;
    ropts.local.denominator =
        cfg.c_update == "clients" ? CVarDenominator::Clients : CVarDenominator::Steps;
    ropts.local.option =
        cfg.c_option == "server-grad" ? CVarOption::GradientAtServer : CVarOption::Drift;
    ropts.local.total_clients = cfg.clients;
    const std::uint64_t master = cfg.seed;
    ropts.local_seed = [master](int client_id, int round) {
        return derive_seed(master, static_cast<std::uint64_t>(client_id) + 1,
                           static_cast<std::uint64_t>(round), seed_purpose::kBatching);
    };
    ropts.clean_test = &data.test;
    ropts.backdoor_test = backdoor_test.empty() ? nullptr : &backdoor_test;
    const unsigned hw = std::thread::hardware_concurrency();
    ropts.train_workers = static_cast<int>(hw == 0 ? 1 : hw);

    RoundHooks hooks;
    std::unique_ptr<Attacker> attacker;
    const int participants = std::max(1, static_cast<int>(std::lround(cfg.participation *
                                                                      cfg.clients)));
    if (cfg.attack_kind != "none") {
        AttackConfig acfg = cfg.attack_config();
        if (acfg.agg_size == 0) acfg.agg_size = participants;
        attacker = std::make_unique<Attacker>(
            cfg.attacker_client, clients[static_cast<std::size_t>(cfg.attacker_client)].dataset,
            acfg, spec, derive_seed(cfg.seed, 99, 0, seed_purpose::kPoison));
        if (!data.holdout.empty()) attacker->set_oracle_holdout(&data.holdout);
        attacker->observe_global(server.w);

        hooks.attacker_id = cfg.attacker_client;
        hooks.attacker_scheduled = [a = attacker.get()](int round) {
            return a->config().scheduled(round);
        };
        const bool fedavg = ropts.fedavg;
        hooks.attacker_update = [a = attacker.get(), &clients, fedavg](
                                    int round, const ParamVector& w, const ParamVector& c) {
            UpdatePair up = a->update(round, w, c, clients[static_cast<std::size_t>(a->id())].c_i);
            if (fedavg) up.delta_c = pv::zeros_like(up.delta_w);
            return up;
        };
    }

    std::unique_ptr<DefensePipeline> defense;
    const DefenseConfig dcfg = cfg.defense_config();
    if (dcfg.any()) {
        defense = std::make_unique<DefensePipeline>(dcfg, derive_seed(cfg.seed, 7, 0,
                                                                      seed_purpose::kDefense));
        hooks.defense_updates = [d = defense.get()](std::vector<UpdatePair>& ups,
                                                    std::vector<int>& ids, int round,
                                                    const ParamVector& w, RoundRecord& rec) {
            d->apply_to_updates(ups, ids, round, w, rec);
        };
        hooks.defense_global = [d = defense.get()](ParamVector& w, RoundRecord& rec) {
            d->apply_to_global(w, rec);
        };
    }

    Rng sampling_rng(derive_seed(cfg.seed, 1, 0, seed_purpose::kSampling));
    for (int r = 1; r <= cfg.rounds; ++r) {
        RoundRecord rec = run_round(server, clients, spec, ropts, hooks, sampling_rng);
        if (attacker) attacker->observe_global(server.w);
        log.records.push_back(std::move(rec));
    }
    return log;
}

void write_metrics(const MetricsLog& log, const std::string& path) {
    std::ofstream f(path, std::ios::binary); // binary keeps LF endings everywhere
    if (!f) throw format_error("cannot write " + path);
    f << "round,pta,bta,update_norm,defense_rejects,attacker_active\n";
    char buf[160];
    for (const auto& r : log.records) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%d,%d\n", r.round, r.pta, r.bta,
                      r.update_norm, r.defense_rejects, r.attacker_active ? 1 : 0);
        f << buf;
    }
}

MetricsLog read_metrics_csv(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw format_error("cannot open " + path);
    MetricsLog log;
    std::string line;
    if (!std::getline(f, line)) throw format_error(path + ": empty file", 0);
    if (line == "round,pta,bta,update_norm,defense_rejects,attacker_active\r" ||
        line == "round,pta,bta,update_norm,defense_rejects,attacker_active") {
    } else {
        throw format_error(path + ": unexpected CSV header", 0);
    }
    long long offset = static_cast<long long>(line.size()) + 1;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        RoundRecord r;
        int active = 0;
        if (std::sscanf(line.c_str(), "%d,%lg,%lg,%lg,%d,%d", &r.round, &r.pta, &r.bta,
                        &r.update_norm, &r.defense_rejects, &active) != 6)
            throw format_error(path + ": malformed CSV row", offset);
        r.attacker_active = active != 0;
        log.records.push_back(r);
        offset += static_cast<long long>(line.size()) + 1;
    }
    return log;
}

void emit_plot_data(const MetricsLog& log, const std::string& prefix) {
    const auto write_curve = [&](const std::string& path, double RoundRecord::*field) {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw format_error("cannot write " + path);
        char buf[80];
        for (const auto& r : log.records) {
            std::snprintf(buf, sizeof buf, "%d %.17g\n", r.round, r.*field);
            f << buf;
        }
    };
    write_curve(prefix + "pta.dat", &RoundRecord::pta);
    write_curve(prefix + "bta.dat", &RoundRecord::bta);
}

void write_outputs(const ExperimentConfig& cfg, const MetricsLog& log) {
    if (cfg.out_dir.empty()) return;
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    const fs::path dir(cfg.out_dir);
    write_metrics(log, (dir / (cfg.name + ".csv")).string());
    emit_plot_data(log, (dir / (cfg.name + "-")).string());
    std::ofstream fp(dir / (cfg.name + ".fingerprint"));
    fp << log.fingerprint << "\n";
}

double SuiteReport::bta_at(std::size_t entry, int round) const {
    for (const auto& r : entries.at(entry).log.records)
        if (r.round == round) return r.bta;
    throw error("suite report: no record for round " + std::to_string(round));
}

double SuiteReport::pta_at(std::size_t entry, int round) const {
    for (const auto& r : entries.at(entry).log.records)
        if (r.round == round) return r.pta;
    throw error("suite report: no record for round " + std::to_string(round));
}

SuiteReport run_suite(const std::vector<ExperimentConfig>& grid) {
    if (grid.empty()) throw error("run_suite: empty grid");
    SuiteReport rep;
    for (const auto& cfg : grid) {
        SuiteEntry e;
        e.name = cfg.name;
        e.log = run_experiment(cfg);
        rep.entries.push_back(std::move(e));
    }
    // Checkpoints relative to the first config's attack window.
    const auto& ref = grid.front();
    const int end = ref.attack_kind != "none" ? ref.window_end : ref.rounds;
    for (int cp : {end, end + 10, end + 20, ref.rounds}) {
        cp = std::min(cp, ref.rounds);
        if (cp >= 1 && (rep.checkpoints.empty() || rep.checkpoints.back() != cp))
            rep.checkpoints.push_back(cp);
    }
    return rep;
}

std::string format_suite_report(const SuiteReport& rep) {
    std::ostringstream o;
    o << "run";
    for (int cp : rep.checkpoints) o << ",bta@" << cp;
    for (int cp : rep.checkpoints) o << ",pta@" << cp;
    o << "\n";
    for (std::size_t e = 0; e < rep.entries.size(); ++e) {
        o << rep.entries[e].name;
        char buf[32];
        for (int cp : rep.checkpoints) {
            std::snprintf(buf, sizeof buf, ",%.4f", rep.bta_at(e, cp));
            o << buf;
        }
        for (int cp : rep.checkpoints) {
            std::snprintf(buf, sizeof buf, ",%.4f", rep.pta_at(e, cp));
            o << buf;
        }
        o << "\n";
    }
    return o.str();
}

} // namespace sflsim
