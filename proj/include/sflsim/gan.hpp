#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sflsim/dataset.hpp"
#include "sflsim/model.hpp"
#include "sflsim/param_vector.hpp"

namespace sflsim {

// Generator/discriminator pair. The discriminator reuses the classifier's
// feature extractor (re-seeded from the newest global model every round)
// with a fresh single-score head.
struct GanState {
    ModelState generator;
    ModelState discriminator;
    int noise_dim = 0;
    std::vector<int> target_classes;
};

// Discriminator spec: the classifier with its class head replaced by a
// 1-output dense head.
ModelSpec discriminator_spec(const ModelSpec& classifier);

// Copies the shared feature parameters bit-exactly out of w_g and gives the
// head a fresh seeded init.
ModelState init_discriminator_from_global(const ParamVector& w_g, const ModelSpec& classifier,
                                          std::uint64_t head_seed);

struct GanTrainOpts {
    double lr = 0.001;
    double beta1 = 0.5;
    double beta2 = 0.999;
    int batch_size = 32;
    std::uint64_t seed = 0;
};

// Alternating one D step / one G step per minibatch; non-saturating
// generator loss. Returns the mean D and G losses of the final epoch.
struct GanLosses {
    double d_loss = 0.0;
    double g_loss = 0.0;
};
GanLosses train_gan(GanState& gan, const LabeledDataset& attacker_data, int epochs,
                    const GanTrainOpts& opts);

// Runs the generator on seeded noise; outputs stay in [0,1] by construction.
LabeledDataset generate_images(const GanState& gan, int count, std::uint64_t seed);

enum class SupplementMode { Gan, Oracle };

// Source of synthetic samples for classes the attacker lacks. Oracle mode
// draws real held-out samples and is the default for attack-effect tests;
// GAN mode labels generated samples with the attacker's copy of the global
// classifier.
struct Supplementer {
    SupplementMode mode = SupplementMode::Oracle;
    std::vector<int> target_classes;

    GanState* gan = nullptr;
    const ModelSpec* classifier_spec = nullptr; // gan mode labeling
    const ParamVector* classifier_params = nullptr;
    double confidence_floor = 0.6;

    const LabeledDataset* holdout = nullptr; // oracle mode
};

struct SupplementResult {
    LabeledDataset d_f;
    bool shortfall = false;
    std::vector<int> achieved; // per target class, aligned with target_classes
};

SupplementResult generate_supplement(const Supplementer& supp, int count_per_class,
                                     std::uint64_t seed);

// Binary PPM grid of the first rows*cols images (grayscale replicated to
// RGB), for qualitative inspection of generated samples.
void write_sample_grid(const LabeledDataset& ds, int rows, int cols, const std::string& path);

} // namespace sflsim
