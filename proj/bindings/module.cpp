// Python bindings for the main operations: datasets and triggers, the
// SCAFFOLD round machinery, attack formulas, defenses, and the experiment
// harness.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sflsim/attack.hpp"
#include "sflsim/config.hpp"
#include "sflsim/dataset.hpp"
#include "sflsim/defense.hpp"
#include "sflsim/gan.hpp"
#include "sflsim/harness.hpp"
#include "sflsim/partition.hpp"
#include "sflsim/trigger.hpp"

namespace py = pybind11;
using namespace sflsim;

namespace {

py::array_t<float> dataset_images(const LabeledDataset& ds) {
    const auto n = static_cast<py::ssize_t>(ds.size());
    py::array_t<float> arr({n, static_cast<py::ssize_t>(ds.shape.c),
                            static_cast<py::ssize_t>(ds.shape.h),
                            static_cast<py::ssize_t>(ds.shape.w)});
    std::copy(ds.pixels.begin(), ds.pixels.end(), arr.mutable_data());
    return arr;
}

py::dict record_dict(const RoundRecord& r) {
    py::dict d;
    d["round"] = r.round;
    d["pta"] = r.pta;
    d["bta"] = r.bta;
    d["update_norm"] = r.update_norm;
    d["defense_rejects"] = r.defense_rejects;
    d["attacker_active"] = r.attacker_active;
    d["selected"] = r.selected;
    return d;
}

TriggerSpec trigger_from_kwargs(const std::string& kind, int src_class, int target_class,
                                double poison_ratio, int pattern_size) {
    TriggerSpec t;
    if (kind == "label_flip")
        t.kind = TriggerKind::LabelFlip;
    else if (kind == "pattern")
        t.kind = TriggerKind::Pattern;
    else if (kind == "feature")
        t.kind = TriggerKind::Feature;
    else
        throw error("unknown trigger kind: " + kind);
    t.src_class = src_class;
    t.target_class = target_class;
    t.poison_ratio = poison_ratio;
    t.pattern_size = pattern_size;
    return t;
}

} // namespace

PYBIND11_MODULE(_sflsim, m) {
    m.doc() = "SCAFFOLD federated-learning backdoor simulator (C++ core)";

    py::register_exception<error>(m, "SflsimError");

    py::class_<LabeledDataset>(m, "LabeledDataset")
        .def_property_readonly("labels", [](const LabeledDataset& ds) { return ds.labels; })
        .def_property_readonly("images", &dataset_images)
        .def_property_readonly("num_classes",
                               [](const LabeledDataset& ds) { return ds.num_classes; })
        .def("__len__", [](const LabeledDataset& ds) { return ds.size(); })
        .def("label_histogram", &LabeledDataset::label_histogram);

    m.def("synth_digits", &synth_digits, py::arg("count"), py::arg("seed"),
          "procedural 28x28 digit dataset");
    m.def("synth_shapes", &synth_shapes, py::arg("count"), py::arg("seed"),
          "procedural 32x32x3 shape dataset");
    m.def("load_mnist", &load_mnist, py::arg("images_path"), py::arg("labels_path"));
    m.def("load_cifar10", &load_cifar10, py::arg("batch_files"));
    m.def("write_idx", &write_idx, py::arg("dataset"), py::arg("images_path"),
          py::arg("labels_path"));

    m.def(
        "partition_noniid",
        [](const LabeledDataset& ds, int clients, int shards, std::uint64_t seed) {
            const auto plan = partition_noniid(ds, clients, shards, seed);
            std::vector<std::vector<int>> out;
            for (int c = 0; c < clients; ++c) out.push_back(plan.client_indices(c));
            return out;
        },
        py::arg("dataset"), py::arg("num_clients"), py::arg("num_shards"), py::arg("seed"),
        "per-client sample indices under label-sorted shard partitioning");

    m.def(
        "apply_label_flip",
        [](const LabeledDataset& ds, int src, int dst) { return apply_label_flip(ds, src, dst); },
        py::arg("dataset"), py::arg("src_class"), py::arg("dst_class"));

    m.def(
        "make_backdoor_testset",
        [](const LabeledDataset& test, const std::string& kind, int src_class, int target_class,
           double poison_ratio, int pattern_size) {
            return make_backdoor_testset(
                test, trigger_from_kwargs(kind, src_class, target_class, poison_ratio,
                                          pattern_size));
        },
        py::arg("test"), py::arg("kind"), py::arg("src_class") = 0, py::arg("target_class") = 0,
        py::arg("poison_ratio") = 0.1, py::arg("pattern_size") = 4);

    m.def("predict_future_global", &predict_future_global, py::arg("w_p"), py::arg("w_g"),
          py::arg("c"), py::arg("n"), py::arg("eta_l"), py::arg("j"));
    m.def("neurotoxin_mask", &neurotoxin_mask, py::arg("benign_direction"),
          py::arg("topk_fraction"));
    m.def(
        "neurotoxin_project",
        [](const ParamVector& update, const std::vector<int>& mask) {
            std::vector<std::uint8_t> m8(mask.begin(), mask.end());
            return neurotoxin_project(update, m8);
        },
        py::arg("update"), py::arg("mask"));
    m.def("attacker_delta_c",
          [](const ParamVector& w_g, const ParamVector& w_p, const ParamVector& c, double lr,
             int steps) {
              return attacker_delta_c(w_g, w_p, c, lr, steps, CVarDenominator::Steps, 0);
          },
          py::arg("w_g"), py::arg("w_p"), py::arg("c"), py::arg("lr"), py::arg("steps"));

    m.def(
        "clip_and_noise",
        [](const ParamVector& u, double bound, double sigma, std::uint64_t seed) {
            Rng rng(seed);
            return clip_and_noise(u, bound, sigma, rng);
        },
        py::arg("update"), py::arg("bound"), py::arg("sigma"), py::arg("seed") = 0);
    m.def("prune_magnitude", &prune_magnitude, py::arg("values"), py::arg("fraction"));
    m.def("cosine_similarity", &cosine_similarity, py::arg("a"), py::arg("b"));

    m.def("preset_names", &preset_names);
    m.def("preset_text", &preset_text, py::arg("name"));
    m.def(
        "inspect_config",
        [](const std::string& text) { return parse_config(text).echo(); }, py::arg("text"),
        "parse config text and return the fully resolved echo");

    m.def(
        "run_experiment",
        [](const std::string& config_text, std::optional<std::uint64_t> seed,
           std::optional<int> rounds, const std::string& out_dir) {
            ExperimentConfig cfg = parse_config(config_text);
            if (seed) cfg.seed = *seed;
            if (rounds) cfg.rounds = *rounds;
            if (!out_dir.empty()) cfg.out_dir = out_dir;
            cfg.validate();
            const MetricsLog log = run_experiment(cfg);
            write_outputs(cfg, log);
            py::list rows;
            for (const auto& r : log.records) rows.append(record_dict(r));
            py::dict out;
            out["name"] = log.name;
            out["fingerprint"] = log.fingerprint;
            out["records"] = rows;
            return out;
        },
        py::arg("config_text"), py::arg("seed") = py::none(), py::arg("rounds") = py::none(),
        py::arg("out_dir") = std::string(),
        "run one experiment from config text; returns records and fingerprint");

    m.def(
        "run_preset",
        [](const std::string& name, std::optional<std::uint64_t> seed, std::optional<int> rounds,
           const std::string& out_dir) {
            ExperimentConfig cfg = preset_config(name);
            if (seed) cfg.seed = *seed;
            if (rounds) cfg.rounds = *rounds;
            if (!out_dir.empty()) cfg.out_dir = out_dir;
            cfg.validate();
            const MetricsLog log = run_experiment(cfg);
            write_outputs(cfg, log);
            py::list rows;
            for (const auto& r : log.records) rows.append(record_dict(r));
            py::dict out;
            out["name"] = log.name;
            out["fingerprint"] = log.fingerprint;
            out["records"] = rows;
            return out;
        },
        py::arg("name"), py::arg("seed") = py::none(), py::arg("rounds") = py::none(),
        py::arg("out_dir") = std::string());
}
