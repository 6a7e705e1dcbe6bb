#pragma once

#include <cstdint>
#include <vector>

#include "sflsim/dataset.hpp"
#include "sflsim/fl.hpp"
#include "sflsim/gan.hpp"
#include "sflsim/trigger.hpp"

namespace sflsim {

enum class AttackKind { Blackbox, Neurotoxin, BadSfl };

struct AttackConfig {
    AttackKind kind = AttackKind::BadSfl;
    TriggerSpec trigger;
    int window_start = 10;
    int window_end = 40;

    double poison_lr = 0.1;
    int epochs = 2; // E_attack
    int batch_size = 32;
    double momentum = 0.0;
    double weight_decay = 0.0;

    int future_rounds = 10;    // j
    int agg_size = 0;          // n; 0 means |S^t| supplied by the harness
    double neurotoxin_topk = 0.05;

    CVarDenominator denominator = CVarDenominator::Steps;
    int total_clients = 0; // K, used with the Clients denominator

    // Supplementation (BadSFL only).
    SupplementMode supplement_mode = SupplementMode::Oracle;
    int supplement_per_class = 500;
    int gan_epochs = 2;
    GanTrainOpts gan_opts;
    double confidence_floor = 0.6;
    bool strict_gan = false; // abort instead of downgrading to oracle on GAN failure

    bool scheduled(int round) const { return round >= window_start && round <= window_end; }
    void validate() const;
};

// Eq. of the anticipated global model: (w_p + w_g*(n-1))/n - eta_l*c*j.
ParamVector predict_future_global(const ParamVector& w_p, const ParamVector& w_g,
                                  const ParamVector& c, int n, double eta_l, int j);

// Combined backdoor objective: CE at w_p plus CE at the anticipated model.
// The gradient flows through both terms; the second contributes with the
// affine factor 1/n.
double badsfl_objective(const ModelSpec& spec, const ParamVector& w_p, const Batch& batch,
                        const ParamVector& w_g, const ParamVector& c, int n, double eta_l, int j,
                        ParamVector* grad = nullptr);

// Forbidden-coordinate mask: true on the top-ceil(fraction*d) coordinates of
// |direction| (ties by lowest index).
std::vector<std::uint8_t> neurotoxin_mask(const ParamVector& benign_direction,
                                          double topk_fraction);

// Zeroes masked coordinates, leaves the rest untouched.
ParamVector neurotoxin_project(const ParamVector& update, const std::vector<std::uint8_t>& mask);

// Control-variate upload consistent with the drift rule: (w_g - w_p)/(D*lr) - c.
ParamVector attacker_delta_c(const ParamVector& w_g, const ParamVector& w_p, const ParamVector& c,
                             double lr, int steps_taken, CVarDenominator denom, int total_clients);

// The adversary. Owns its poisoned data pipeline and crafts protocol-shaped
// updates; outside its window the harness trains it like any benign client.
class Attacker {
  public:
    Attacker(int client_id, LabeledDataset own_data, AttackConfig cfg, ModelSpec classifier_spec,
             std::uint64_t seed);

    // Oracle supplementation source (held-out samples of absent classes).
    void set_oracle_holdout(const LabeledDataset* holdout);

    int id() const { return id_; }
    const AttackConfig& config() const { return cfg_; }
    const std::vector<int>& target_classes() const { return target_classes_; }
    const LabeledDataset& own_data() const { return own_data_; }
    const GanState* gan() const { return gan_ready_ ? &gan_ : nullptr; }
    bool last_supplement_shortfall() const { return supplement_shortfall_; }

    // Tracks consecutive global models for the Neurotoxin direction.
    void observe_global(const ParamVector& w_g);

    // Crafts this round's (delta_w, delta_c); c_i (the attacker's stored
    // control variate) is advanced by delta_c to stay protocol-consistent.
    UpdatePair update(int round, const ParamVector& w_g, const ParamVector& c, ParamVector& c_i);

    // Exposed for tests: the exact training sets used in the last update.
    const LabeledDataset& last_d_c() const { return d_c_; }
    const LabeledDataset& last_d_p() const { return d_p_; }

  private:
    UpdatePair blackbox_update(int round, const ParamVector& w_g, const ParamVector& c,
                               ParamVector& c_i, bool project);
    UpdatePair badsfl_update(int round, const ParamVector& w_g, const ParamVector& c,
                             ParamVector& c_i);
    void refresh_supplement(int round, const ParamVector& w_g);
    LabeledDataset build_d_p(const LabeledDataset& d_c, int round);
    UpdatePair finish(const ParamVector& w_g, const ParamVector& w_p, const ParamVector& c,
                      ParamVector& c_i, int steps);

    int id_;
    LabeledDataset own_data_;
    AttackConfig cfg_;
    ModelSpec spec_;
    std::uint64_t seed_;
    std::vector<int> target_classes_;

    const LabeledDataset* oracle_holdout_ = nullptr;
    GanState gan_;
    bool gan_ready_ = false;
    bool supplement_shortfall_ = false;

    LabeledDataset d_c_;
    LabeledDataset d_p_;

    ParamVector prev_global_, last_global_;
    bool have_prev_ = false;
};

} // namespace sflsim
