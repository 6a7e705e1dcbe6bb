#include "sflsim/attack.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sflsim/errors.hpp"
#include "sflsim/nn.hpp"

namespace sflsim {

void AttackConfig::validate() const {
    if (window_start > window_end) throw error("attack window start exceeds end");
    if (future_rounds < 0) throw error("future round count j must be non-negative");
    if (agg_size < 0) throw error("aggregation size n must be >= 1 (or 0 for auto)");
    if (neurotoxin_topk <= 0.0 || neurotoxin_topk >= 1.0)
        throw error("neurotoxin top-k fraction must lie in (0,1)");
    if (poison_lr < 0.0) throw error("negative poison learning rate");
    if (epochs < 0) throw error("negative attack epoch count");
}

ParamVector predict_future_global(const ParamVector& w_p, const ParamVector& w_g,
                                  const ParamVector& c, int n, double eta_l, int j) {
    pv::check_same_length(w_p, w_g);
    pv::check_same_length(w_p, c);
    if (n < 1) throw error("predict_future_global: n must be >= 1");
    ParamVector out(w_p.size());
    const double inv_n = 1.0 / static_cast<double>(n);
    const double shift = eta_l * static_cast<double>(j);
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = (w_p[i] + w_g[i] * (n - 1)) * inv_n - shift * c[i];
    return out;
}

double badsfl_objective(const ModelSpec& spec, const ParamVector& w_p, const Batch& batch,
                        const ParamVector& w_g, const ParamVector& c, int n, double eta_l, int j,
                        ParamVector* grad) {
    const ParamVector anticipated = predict_future_global(w_p, w_g, c, n, eta_l, j);
    const int k = spec.output().count();

    Workspace ws;
    std::vector<double> dlogits;
    const auto& logits_now = forward_pass(spec, w_p, batch, ws);
    const double loss_now = cross_entropy(logits_now, batch.n, k, batch.y, grad ? &dlogits : nullptr);
    if (grad) {
        grad->assign(w_p.size(), 0.0);
        backward_pass(spec, w_p, batch, ws, dlogits, *grad);
    }

    const auto& logits_ahead = forward_pass(spec, anticipated, batch, ws);
    const double loss_ahead =
        cross_entropy(logits_ahead, batch.n, k, batch.y, grad ? &dlogits : nullptr);
    if (grad) {
        // d(anticipated)/d(w_p) = 1/n, so the second term's parameter
        // gradient arrives scaled by 1/n.
        ParamVector g2(w_p.size(), 0.0);
        backward_pass(spec, anticipated, batch, ws, dlogits, g2);
        pv::axpy(*grad, 1.0 / static_cast<double>(n), g2);
    }
    return loss_now + loss_ahead;
}

std::vector<std::uint8_t> neurotoxin_mask(const ParamVector& benign_direction,
                                          double topk_fraction) {
    if (topk_fraction <= 0.0 || topk_fraction >= 1.0)
        throw error("neurotoxin top-k fraction must lie in (0,1)");
    const std::size_t d = benign_direction.size();
    const auto k = static_cast<std::size_t>(
        std::ceil(topk_fraction * static_cast<double>(d)));
    std::vector<std::size_t> idx(d);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        const double ma = std::abs(benign_direction[a]), mb = std::abs(benign_direction[b]);
        return ma != mb ? ma > mb : a < b;
    });
    std::vector<std::uint8_t> mask(d, 0);
    for (std::size_t i = 0; i < std::min(k, d); ++i) mask[idx[i]] = 1;
    return mask;
}

ParamVector neurotoxin_project(const ParamVector& update, const std::vector<std::uint8_t>& mask) {
    if (update.size() != mask.size()) throw shape_error("mask length mismatch");
    ParamVector out = update;
    for (std::size_t i = 0; i < out.size(); ++i)
        if (mask[i]) out[i] = 0.0;
    return out;
}

ParamVector attacker_delta_c(const ParamVector& w_g, const ParamVector& w_p, const ParamVector& c,
                             double lr, int steps_taken, CVarDenominator denom,
                             int total_clients) {
    pv::check_same_length(w_g, w_p);
    pv::check_same_length(w_g, c);
    const int d = denom == CVarDenominator::Steps ? steps_taken : total_clients;
    if (d < 1) throw error("attacker_delta_c: denominator must be positive");
    if (lr <= 0.0) throw error("attacker_delta_c: lr must be positive");
    const double scale = 1.0 / (d * lr);
    ParamVector out(w_g.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (w_g[i] - w_p[i]) * scale - c[i];
    return out;
}

Attacker::Attacker(int client_id, LabeledDataset own_data, AttackConfig cfg,
                   ModelSpec classifier_spec, std::uint64_t seed)
    : id_(client_id), own_data_(std::move(own_data)), cfg_(cfg), spec_(std::move(classifier_spec)),
      seed_(seed) {
    cfg_.validate();
    // Classes absent from the attacker's shard are the supplementation targets.
    std::vector<bool> present(static_cast<std::size_t>(own_data_.num_classes), false);
    for (int l : own_data_.labels) present[static_cast<std::size_t>(l)] = true;
    for (int cl = 0; cl < own_data_.num_classes; ++cl)
        if (!present[static_cast<std::size_t>(cl)]) target_classes_.push_back(cl);

    if (cfg_.kind == AttackKind::BadSfl && cfg_.supplement_mode == SupplementMode::Gan) {
        const ModelSpec gspec = own_data_.shape.h == 28 ? mnist_generator() : cifar_generator();
        gan_.generator = make_model(gspec, derive_seed(seed_, 0, 0, seed_purpose::kGan));
        gan_.generator.reset_optimizer(OptKind::Adam);
        gan_.noise_dim = gspec.input.c;
        gan_.target_classes = target_classes_;
    }
}

void Attacker::set_oracle_holdout(const LabeledDataset* holdout) { oracle_holdout_ = holdout; }

void Attacker::observe_global(const ParamVector& w_g) {
    if (!last_global_.empty()) {
        prev_global_ = std::move(last_global_);
        have_prev_ = true;
    }
    last_global_ = w_g;
}

void Attacker::refresh_supplement(int round, const ParamVector& w_g) {
    supplement_shortfall_ = false;
    if (cfg_.kind != AttackKind::BadSfl || target_classes_.empty()) {
        d_c_ = own_data_;
        return;
    }

    Supplementer supp;
    supp.target_classes = target_classes_;
    supp.confidence_floor = cfg_.confidence_floor;

    bool use_gan = cfg_.supplement_mode == SupplementMode::Gan;
    if (use_gan) {
        // Step 1 of every attack round: re-seed the discriminator from the
        // newest global model, then resume generator training against it.
        gan_.discriminator = init_discriminator_from_global(
            w_g, spec_, derive_seed(seed_, static_cast<std::uint64_t>(round), 1, seed_purpose::kGan));
        gan_ready_ = true;
        try {
            GanTrainOpts opts = cfg_.gan_opts;
            opts.seed = derive_seed(seed_, static_cast<std::uint64_t>(round), 2, seed_purpose::kGan);
            train_gan(gan_, own_data_, cfg_.gan_epochs, opts);
        } catch (const numeric_error&) {
            if (cfg_.strict_gan) throw;
            use_gan = false; // downgrade to oracle below
        }
    }

    if (use_gan) {
        supp.mode = SupplementMode::Gan;
        supp.gan = &gan_;
        supp.classifier_spec = &spec_;
        supp.classifier_params = &w_g;
    } else {
        supp.mode = SupplementMode::Oracle;
        supp.holdout = oracle_holdout_;
        if (!oracle_holdout_) {
            d_c_ = own_data_; // no supplementation source available
            return;
        }
    }

    const auto res = generate_supplement(
        supp, cfg_.supplement_per_class,
        derive_seed(seed_, static_cast<std::uint64_t>(round), 3, seed_purpose::kGan));
    supplement_shortfall_ = res.shortfall;
    d_c_ = own_data_;
    if (!res.d_f.empty()) {
        LabeledDataset d_f = res.d_f;
        d_f.num_classes = own_data_.num_classes;
        d_c_.append(d_f);
    }
}

LabeledDataset Attacker::build_d_p(const LabeledDataset& d_c, int round) {
    Rng rng(derive_seed(seed_, static_cast<std::uint64_t>(round), 0, seed_purpose::kPoison));
    auto res = build_poisoned_dataset(d_c, cfg_.trigger, rng);
    return std::move(res.d_p);
}

UpdatePair Attacker::finish(const ParamVector& w_g, const ParamVector& w_p, const ParamVector& c,
                            ParamVector& c_i, int steps) {
    UpdatePair up;
    up.steps_taken = steps;
    up.delta_w = pv::sub(w_p, w_g);
    if (!pv::all_finite(up.delta_w)) throw numeric_error("attacker produced a non-finite update");
    up.delta_c =
        attacker_delta_c(w_g, w_p, c, cfg_.poison_lr, steps, cfg_.denominator, cfg_.total_clients);
    if (c_i.empty()) c_i = pv::zeros_like(w_g);
    pv::add_inplace(c_i, up.delta_c);
    return up;
}

UpdatePair Attacker::blackbox_update(int round, const ParamVector& w_g, const ParamVector& c,
                                     ParamVector& c_i, bool project) {
    d_c_ = own_data_;
    d_p_ = build_d_p(d_c_, round);
    if (d_p_.empty()) throw error("attacker has no poisoned data");

    std::vector<std::uint8_t> mask;
    if (project) {
        // Forbidden coordinates carry most of the observed benign movement.
        const ParamVector direction =
            have_prev_ ? pv::sub(last_global_, prev_global_) : ParamVector(w_g.size(), 0.0);
        mask = neurotoxin_mask(direction, cfg_.neurotoxin_topk);
    }

    ModelState model;
    model.spec = spec_;
    model.params = w_g;
    model.reset_optimizer(OptKind::Sgd);

    Trainer trainer(spec_);
    ParamVector grad(w_g.size());
    Batch batch;
    Rng order_rng(derive_seed(seed_, static_cast<std::uint64_t>(round), 1, seed_purpose::kPoison));
    std::vector<int> order(d_p_.size());
    std::iota(order.begin(), order.end(), 0);
    int steps = 0;
    for (int e = 0; e < cfg_.epochs; ++e) {
        order_rng.shuffle(order);
        for (std::size_t at = 0; at < d_p_.size();
             at += static_cast<std::size_t>(cfg_.batch_size)) {
            const std::size_t end =
                std::min(d_p_.size(), at + static_cast<std::size_t>(cfg_.batch_size));
            fill_batch(d_p_, order, at, end, batch);
            trainer.gradient(model.params, batch, grad);
            if (project) {
                for (std::size_t i = 0; i < grad.size(); ++i)
                    if (mask[i]) grad[i] = 0.0;
            }
            sgd_step(model, grad, cfg_.poison_lr, cfg_.momentum, cfg_.weight_decay);
            ++steps;
        }
    }
    if (steps == 0) {
        // Zero epochs: the crafted model equals the download.
        return finish(w_g, w_g, c, c_i, std::max(1, steps));
    }

    ParamVector w_p = model.params;
    if (project) {
        // Exact zeros on the masked coordinates regardless of optimizer state.
        const ParamVector delta = neurotoxin_project(pv::sub(w_p, w_g), mask);
        w_p = pv::add(w_g, delta);
        for (std::size_t i = 0; i < w_p.size(); ++i)
            if (mask[i]) w_p[i] = w_g[i];
    }
    return finish(w_g, w_p, c, c_i, steps);
}

UpdatePair Attacker::badsfl_update(int round, const ParamVector& w_g, const ParamVector& c,
                                   ParamVector& c_i) {
    refresh_supplement(round, w_g);
    d_p_ = build_d_p(d_c_, round);
    if (d_p_.empty()) throw error("attacker has no poisoned data");

    const int n = cfg_.agg_size >= 1 ? cfg_.agg_size : 1;

    ModelState model;
    model.spec = spec_;
    model.params = w_g;
    model.reset_optimizer(OptKind::Sgd);

    ParamVector grad(w_g.size());
    Batch batch;
    Rng order_rng(derive_seed(seed_, static_cast<std::uint64_t>(round), 1, seed_purpose::kPoison));
    std::vector<int> order(d_p_.size());
    std::iota(order.begin(), order.end(), 0);
    int steps = 0;
    for (int e = 0; e < cfg_.epochs; ++e) {
        order_rng.shuffle(order);
        for (std::size_t at = 0; at < d_p_.size();
             at += static_cast<std::size_t>(cfg_.batch_size)) {
            const std::size_t end =
                std::min(d_p_.size(), at + static_cast<std::size_t>(cfg_.batch_size));
            fill_batch(d_p_, order, at, end, batch);
            badsfl_objective(spec_, model.params, batch, w_g, c, n, cfg_.poison_lr,
                             cfg_.future_rounds, &grad);
            sgd_step(model, grad, cfg_.poison_lr, cfg_.momentum, cfg_.weight_decay);
            ++steps;
        }
    }
    if (steps == 0) return finish(w_g, w_g, c, c_i, 1);
    return finish(w_g, model.params, c, c_i, steps);
}

UpdatePair Attacker::update(int round, const ParamVector& w_g, const ParamVector& c,
                            ParamVector& c_i) {
    switch (cfg_.kind) {
    case AttackKind::Blackbox:
        return blackbox_update(round, w_g, c, c_i, false);
    case AttackKind::Neurotoxin:
        return blackbox_update(round, w_g, c, c_i, true);
    case AttackKind::BadSfl:
        return badsfl_update(round, w_g, c, c_i);
    }
    throw error("unknown attack kind");
}

} // namespace sflsim
