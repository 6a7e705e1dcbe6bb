#pragma once

#include <cstdint>
#include <vector>

#include "sflsim/fl.hpp"
#include "sflsim/param_vector.hpp"
#include "sflsim/rng.hpp"

namespace sflsim {

// Server-side defense stages, applied in declared order:
// anomaly filter -> clip+noise on per-client updates -> aggregate -> prune
// the global model.
struct DefenseConfig {
    bool anomaly = false;
    bool clip_noise = false;
    bool prune = false;

    double clip_bound = 0.0; // 0 = calibrate from a clean warmup window
    double noise_sigma = 0.001;
    double prune_fraction = 0.2;
    double anomaly_threshold = 0.0;
    int warmup_rounds = 5;

    bool any() const { return anomaly || clip_noise || prune; }
    void validate() const;
};

// L2 clip to bound, then i.i.d. Gaussian noise with std sigma per coordinate.
ParamVector clip_and_noise(const ParamVector& update, double bound, double sigma, Rng& rng);

// Zeroes the floor(fraction*d) smallest-magnitude coordinates; ties keep the
// lowest index.
ParamVector prune_magnitude(const ParamVector& v, double fraction);

double cosine_similarity(const ParamVector& a, const ParamVector& b);

struct AnomalyReport {
    std::vector<int> accepted_ids;
    std::vector<int> rejected_ids;
    std::vector<double> cosines;
};

// Accepts update i iff cos(delta_w_i, reference) >= threshold. A zero or
// absent reference falls back to the mean of the updates.
AnomalyReport anomaly_filter(const std::vector<UpdatePair>& updates, const std::vector<int>& ids,
                             const ParamVector& reference, double threshold);

// Stateful pipeline bound into fl-core's round hooks. Collects benign update
// norms during the warmup window and freezes clip_bound at their median.
class DefensePipeline {
  public:
    DefensePipeline(DefenseConfig cfg, std::uint64_t noise_seed_base);

    void apply_to_updates(std::vector<UpdatePair>& updates, std::vector<int>& ids, int round,
                          const ParamVector& w, RoundRecord& rec);
    void apply_to_global(ParamVector& w, RoundRecord& rec);

    double effective_clip_bound() const { return clip_bound_; }
    const DefenseConfig& config() const { return cfg_; }

  private:
    DefenseConfig cfg_;
    std::uint64_t noise_seed_base_;
    double clip_bound_ = 0.0;
    bool bound_frozen_ = false;
    std::vector<double> warmup_norms_;
};

} // namespace sflsim
