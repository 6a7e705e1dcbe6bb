#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "sflsim/dataset.hpp"
#include "sflsim/model.hpp"
#include "sflsim/param_vector.hpp"
#include "sflsim/rng.hpp"

namespace sflsim {

// Which count sits in the denominator of the drift-based control-variate
// update (w_t - w_i) / (D * lr): the number of local gradient steps actually
// taken, or the literal client count.
enum class CVarDenominator { Steps, Clients };

// The two local control-variate update rules: (i) full gradient at the
// server model, (ii) the drift formula.
enum class CVarOption { GradientAtServer, Drift };

struct ServerState {
    int round = 0;
    ParamVector w;
    ParamVector c; // starts at zero
    double eta_g = 1.0;
};

struct ClientState {
    int id = 0;
    LabeledDataset dataset;
    ParamVector c_i; // starts at zero, kept parameter-sized
};

struct UpdatePair {
    ParamVector delta_w;
    ParamVector delta_c;
    int steps_taken = 0;
};

struct LocalOpts {
    double lr = 0.01;
    int epochs = 1;
    int batch_size = 32;
    CVarDenominator denominator = CVarDenominator::Steps;
    CVarOption option = CVarOption::Drift;
    int total_clients = 0; // K, required when denominator == Clients
};

// Per-round metrics row.
struct RoundRecord {
    int round = 0;
    std::vector<int> selected;
    double pta = 0.0;
    double bta = 0.0;
    double update_norm = 0.0;
    int defense_rejects = 0;
    bool attacker_active = false;
    std::vector<int> rejected_ids;
    int clip_events = 0;
    std::uint64_t noise_seed = 0;
    bool pruned = false;
};

// Uniform sample without replacement, |S| = round(fraction*K), returned in
// ascending id order.
std::vector<int> sample_clients(int total, double fraction, Rng& rng);

// Corrected-gradient descent core shared by the NN path and synthetic
// problems: w <- w - lr * (g + (c - c_i)). The correction is formed as a
// difference first so c_i == c reproduces plain SGD bit-exactly.
using GradInto = std::function<void(const ParamVector& w, int step, ParamVector& grad_out)>;
ParamVector corrected_descent(ParamVector w, const ParamVector& c_i, const ParamVector& c,
                              double lr, int nsteps, const GradInto& grad);

// Control-variate bookkeeping given the finished local model; updates c_i in
// place and returns (delta_w, delta_c). full_grad_at_server supplies option
// (i)'s gradient and may be empty when option (ii) is configured.
UpdatePair finish_local_update(ParamVector& c_i, const ParamVector& w_t,
                               const ParamVector& w_final, const ParamVector& c, double lr,
                               int steps_taken, const LocalOpts& opts,
                               const std::function<ParamVector(const ParamVector&)>&
                                   full_grad_at_server = {});

// E epochs of seeded minibatch SCAFFOLD training on the client's dataset.
UpdatePair local_update_scaffold(ClientState& client, const ModelSpec& spec,
                                 const ParamVector& w_t, const ParamVector& c,
                                 const LocalOpts& opts, std::uint64_t shuffle_seed);

// FedAvg baseline: the same path with zero control variates and delta_c = 0.
UpdatePair local_update_fedavg(ClientState& client, const ModelSpec& spec, const ParamVector& w_t,
                               const LocalOpts& opts, std::uint64_t shuffle_seed);

// w <- w + eta_g * mean(delta_w); c <- c + (1/K) * sum(delta_c). Updates are
// folded in the order given; callers pass ascending client id.
void server_aggregate(ServerState& server, const std::vector<UpdatePair>& updates, int total_clients);

// Fraction of argmax-correct predictions; ties resolve to the lowest class
// index. Empty test set has no defined accuracy.
std::optional<double> evaluate(const ModelSpec& spec, const ParamVector& params,
                               const LabeledDataset& testset);

// Hooks that run_round uses to reach the attacker and defense modules
// without depending on them.
struct RoundHooks {
    int attacker_id = -1;
    std::function<bool(int round)> attacker_scheduled; // window test
    std::function<UpdatePair(int round, const ParamVector& w, const ParamVector& c)> attacker_update;
    // May drop or transform updates; annotates the record.
    std::function<void(std::vector<UpdatePair>& updates, std::vector<int>& ids, int round,
                       const ParamVector& w, RoundRecord& rec)>
        defense_updates;
    // Post-aggregation transform of the global model (pruning).
    std::function<void(ParamVector& w, RoundRecord& rec)> defense_global;
};

struct RoundOptions {
    double participation = 0.5;
    bool fedavg = false;
    LocalOpts local;
    std::function<std::uint64_t(int client_id, int round)> local_seed;
    const LabeledDataset* clean_test = nullptr;
    const LabeledDataset* backdoor_test = nullptr;
    int train_workers = 1;
};

// One communication round: sample, local updates (attacker's crafted update
// replacing its benign one when scheduled), defense, aggregate, evaluate.
RoundRecord run_round(ServerState& server, std::vector<ClientState>& clients,
                      const ModelSpec& spec, const RoundOptions& opts, const RoundHooks& hooks,
                      Rng& sampling_rng);

} // namespace sflsim
