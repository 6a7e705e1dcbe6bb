#include "sflsim/fl.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numeric>

#include "sflsim/errors.hpp"
#include "sflsim/nn.hpp"

namespace sflsim {

std::vector<int> sample_clients(int total, double fraction, Rng& rng) {
    if (fraction <= 0.0 || fraction > 1.0) throw error("participation fraction must lie in (0,1]");
    const int k = static_cast<int>(std::lround(fraction * total));
    auto ids = rng.sample_without_replacement(total, std::max(1, k));
    std::sort(ids.begin(), ids.end());
    return ids;
}

ParamVector corrected_descent(ParamVector w, const ParamVector& c_i, const ParamVector& c,
                              double lr, int nsteps, const GradInto& grad) {
    pv::check_same_length(w, c_i);
    pv::check_same_length(w, c);
    ParamVector g(w.size());
    for (int step = 0; step < nsteps; ++step) {
        grad(w, step, g);
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * (g[i] + (c[i] - c_i[i]));
    }
    return w;
}

UpdatePair finish_local_update(ParamVector& c_i, const ParamVector& w_t,
                               const ParamVector& w_final, const ParamVector& c, double lr,
                               int steps_taken, const LocalOpts& opts,
                               const std::function<ParamVector(const ParamVector&)>&
                                   full_grad_at_server) {
    if (steps_taken < 1) throw error("local update took zero steps");
    UpdatePair up;
    up.steps_taken = steps_taken;
    up.delta_w = pv::sub(w_final, w_t);
    if (!pv::all_finite(up.delta_w)) throw numeric_error("non-finite local model update");

    ParamVector c_new;
    if (opts.option == CVarOption::GradientAtServer) {
        if (!full_grad_at_server) throw error("option (i) requires a full-gradient callback");
        c_new = full_grad_at_server(w_t);
    } else {
        const int denom =
            opts.denominator == CVarDenominator::Steps ? steps_taken : opts.total_clients;
        if (denom < 1) throw error("control-variate denominator must be positive");
        const double scale = 1.0 / (denom * lr);
        // c_i - c + (w_t - w_final)/(denom*lr)
        c_new = c_i;
        for (std::size_t i = 0; i < c_new.size(); ++i)
            c_new[i] += (w_t[i] - w_final[i]) * scale - c[i];
    }
    up.delta_c = pv::sub(c_new, c_i);
    c_i = std::move(c_new);
    return up;
}

namespace {

// Precomputed epoch/batch schedule; one shuffled pass per epoch.
std::vector<std::vector<int>> batch_schedule(std::size_t n, int epochs, int batch_size,
                                             std::uint64_t seed) {
    std::vector<std::vector<int>> batches;
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    for (int e = 0; e < epochs; ++e) {
        rng.shuffle(order);
        for (std::size_t at = 0; at < n; at += static_cast<std::size_t>(batch_size)) {
            const std::size_t end = std::min(n, at + static_cast<std::size_t>(batch_size));
            batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(at),
                                 order.begin() + static_cast<std::ptrdiff_t>(end));
        }
    }
    return batches;
}

} // namespace

UpdatePair local_update_scaffold(ClientState& client, const ModelSpec& spec,
                                 const ParamVector& w_t, const ParamVector& c,
                                 const LocalOpts& opts, std::uint64_t shuffle_seed) {
    if (client.dataset.empty()) throw error("client " + std::to_string(client.id) + " has no data");
    if (opts.epochs < 1) throw error("local update needs at least one epoch");
    if (client.c_i.empty()) client.c_i = pv::zeros_like(w_t);
    pv::check_same_length(client.c_i, w_t);

    const auto schedule =
        batch_schedule(client.dataset.size(), opts.epochs, opts.batch_size, shuffle_seed);
    Trainer trainer(spec);
    Batch batch;
    const GradInto grad = [&](const ParamVector& w, int step, ParamVector& g) {
        const auto& idx = schedule[static_cast<std::size_t>(step)];
        fill_batch(client.dataset, idx, 0, idx.size(), batch);
        trainer.gradient(w, batch, g);
    };
    const int steps = static_cast<int>(schedule.size());
    ParamVector w_final = corrected_descent(w_t, client.c_i, c, opts.lr, steps, grad);

    const auto full_grad = [&](const ParamVector& w) {
        Batch full = make_batch(client.dataset, 0, client.dataset.size());
        return backward(spec, w, full);
    };
    return finish_local_update(client.c_i, w_t, w_final, c, opts.lr, steps, opts,
                               opts.option == CVarOption::GradientAtServer
                                   ? std::function<ParamVector(const ParamVector&)>(full_grad)
                                   : std::function<ParamVector(const ParamVector&)>());
}

UpdatePair local_update_fedavg(ClientState& client, const ModelSpec& spec, const ParamVector& w_t,
                               const LocalOpts& opts, std::uint64_t shuffle_seed) {
    const ParamVector zero = pv::zeros_like(w_t);
    ParamVector saved_ci = client.c_i;
    client.c_i = zero;
    LocalOpts o = opts;
    o.option = CVarOption::Drift;
    UpdatePair up = local_update_scaffold(client, spec, w_t, zero, o, shuffle_seed);
    client.c_i = std::move(saved_ci); // FedAvg keeps no control state
    up.delta_c = zero;
    return up;
}

void server_aggregate(ServerState& server, const std::vector<UpdatePair>& updates,
                      int total_clients) {
    if (updates.empty()) throw error("server_aggregate needs at least one update");
    if (total_clients < 1) throw error("total client count must be positive");
    for (const auto& u : updates) {
        pv::check_same_length(u.delta_w, server.w);
        pv::check_same_length(u.delta_c, server.c);
    }
    const double wscale = server.eta_g / static_cast<double>(updates.size());
    const double cscale = 1.0 / static_cast<double>(total_clients);
    for (const auto& u : updates) {
        pv::axpy(server.w, wscale, u.delta_w);
        pv::axpy(server.c, cscale, u.delta_c);
    }
}

std::optional<double> evaluate(const ModelSpec& spec, const ParamVector& params,
                               const LabeledDataset& testset) {
    if (testset.empty()) return std::nullopt;
    const int k = spec.output().count();
    constexpr std::size_t kChunk = 256;
    Workspace ws;
    Batch batch;
    std::vector<int> order(testset.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t correct = 0;
    for (std::size_t at = 0; at < testset.size(); at += kChunk) {
        const std::size_t end = std::min(testset.size(), at + kChunk);
        fill_batch(testset, order, at, end, batch);
        const auto& logits = forward_pass(spec, params, batch, ws);
        for (int s = 0; s < batch.n; ++s) {
            const double* row = logits.data() + static_cast<std::size_t>(s) * k;
            int arg = 0;
            for (int j = 1; j < k; ++j)
                if (row[j] > row[arg]) arg = j; // strict: ties keep lowest index
            if (arg == batch.y[static_cast<std::size_t>(s)]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(testset.size());
}

RoundRecord run_round(ServerState& server, std::vector<ClientState>& clients,
                      const ModelSpec& spec, const RoundOptions& opts, const RoundHooks& hooks,
                      Rng& sampling_rng) {
    const int round = server.round + 1;
    RoundRecord rec;
    rec.round = round;

    std::vector<int> selected =
        sample_clients(static_cast<int>(clients.size()), opts.participation, sampling_rng);

    const bool attack_now = hooks.attacker_id >= 0 && hooks.attacker_scheduled &&
                            hooks.attacker_scheduled(round) && hooks.attacker_update;
    if (attack_now &&
        std::find(selected.begin(), selected.end(), hooks.attacker_id) == selected.end()) {
        // The attacker is forcibly included during its window; the slot of
        // the last sampled benign client is handed over so |S| is unchanged.
        selected.back() = hooks.attacker_id;
        std::sort(selected.begin(), selected.end());
    }
    rec.selected = selected;
    rec.attacker_active = attack_now;

    // Local updates; clients are independent so they may fan out to worker
    // threads, results are folded in ascending id order regardless.
    std::vector<UpdatePair> updates(selected.size());
    const auto train_one = [&](std::size_t slot) {
        const int id = selected[slot];
        ClientState& cl = clients[static_cast<std::size_t>(id)];
        if (attack_now && id == hooks.attacker_id) {
            updates[slot] = hooks.attacker_update(round, server.w, server.c);
        } else {
            const std::uint64_t seed = opts.local_seed ? opts.local_seed(id, round) : 0;
            updates[slot] = opts.fedavg
                                ? local_update_fedavg(cl, spec, server.w, opts.local, seed)
                                : local_update_scaffold(cl, spec, server.w, server.c, opts.local,
                                                        seed);
        }
    };
    if (opts.train_workers > 1 && selected.size() > 1) {
        std::vector<std::future<void>> futs;
        futs.reserve(selected.size());
        for (std::size_t i = 0; i < selected.size(); ++i)
            futs.push_back(std::async(std::launch::async, train_one, i));
        for (auto& f : futs) f.get();
    } else {
        for (std::size_t i = 0; i < selected.size(); ++i) train_one(i);
    }

    std::vector<int> ids = selected;
    if (hooks.defense_updates) hooks.defense_updates(updates, ids, round, server.w, rec);

    if (!updates.empty()) {
        const ParamVector w_before = server.w;
        server_aggregate(server, updates, static_cast<int>(clients.size()));
        rec.update_norm = pv::l2_norm(pv::sub(server.w, w_before));
        if (!pv::all_finite(server.w)) throw numeric_error("non-finite global model after round " +
                                                           std::to_string(round));
    }
    if (hooks.defense_global) hooks.defense_global(server.w, rec);

    server.round = round;
    if (opts.clean_test) rec.pta = evaluate(spec, server.w, *opts.clean_test).value_or(0.0);
    if (opts.backdoor_test) rec.bta = evaluate(spec, server.w, *opts.backdoor_test).value_or(0.0);
    return rec;
}

} // namespace sflsim
