#include "sflsim/defense.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sflsim/errors.hpp"

namespace sflsim {

void DefenseConfig::validate() const {
    if (clip_bound < 0.0 || noise_sigma < 0.0) throw error("defense: negative clip/noise parameter");
    if (prune_fraction < 0.0 || prune_fraction >= 1.0)
        throw error("defense: prune fraction must lie in [0,1)");
    if (anomaly_threshold < -1.0 || anomaly_threshold > 1.0)
        throw error("defense: anomaly threshold must lie in [-1,1]");
    if (warmup_rounds < 0) throw error("defense: negative warmup");
}

ParamVector clip_and_noise(const ParamVector& update, double bound, double sigma, Rng& rng) {
    if (bound <= 0.0) throw error("clip_and_noise: bound must be positive");
    ParamVector out = update;
    const double norm = pv::l2_norm(out);
    if (norm > bound) pv::scale_inplace(out, bound / norm);
    if (sigma > 0.0)
        for (double& v : out) v += sigma * rng.normal();
    return out;
}

ParamVector prune_magnitude(const ParamVector& v, double fraction) {
    if (fraction < 0.0 || fraction >= 1.0) throw error("prune fraction must lie in [0,1)");
    const auto d = v.size();
    const auto kill = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(d)));
    if (kill == 0) return v;

    std::vector<std::size_t> idx(d);
    std::iota(idx.begin(), idx.end(), 0);
    // Sort by |value|, ties by lowest index; stable ordering fixed fully.
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        const double ma = std::abs(v[a]), mb = std::abs(v[b]);
        return ma != mb ? ma < mb : a < b;
    });
    ParamVector out = v;
    for (std::size_t i = 0; i < kill; ++i) out[idx[i]] = 0.0;
    return out;
}

double cosine_similarity(const ParamVector& a, const ParamVector& b) {
    const double na = pv::l2_norm(a), nb = pv::l2_norm(b);
    if (na == 0.0 || nb == 0.0) return 0.0; // zero-norm input has no direction
    return pv::dot(a, b) / (na * nb);
}

AnomalyReport anomaly_filter(const std::vector<UpdatePair>& updates, const std::vector<int>& ids,
                             const ParamVector& reference, double threshold) {
    if (updates.size() != ids.size()) throw error("anomaly_filter: id/update count mismatch");
    AnomalyReport rep;
    if (updates.empty()) return rep;

    ParamVector ref = reference;
    if (ref.empty() || pv::l2_norm(ref) == 0.0) {
        ref = pv::zeros_like(updates.front().delta_w);
        for (const auto& u : updates) pv::add_inplace(ref, u.delta_w);
        pv::scale_inplace(ref, 1.0 / static_cast<double>(updates.size()));
    }
    for (std::size_t i = 0; i < updates.size(); ++i) {
        const double cs = cosine_similarity(updates[i].delta_w, ref);
        rep.cosines.push_back(cs);
        if (cs >= threshold)
            rep.accepted_ids.push_back(ids[i]);
        else
            rep.rejected_ids.push_back(ids[i]);
    }
    return rep;
}

DefensePipeline::DefensePipeline(DefenseConfig cfg, std::uint64_t noise_seed_base)
    : cfg_(cfg), noise_seed_base_(noise_seed_base) {
    cfg_.validate();
    if (cfg_.clip_bound > 0.0) {
        clip_bound_ = cfg_.clip_bound;
        bound_frozen_ = true;
    }
}

void DefensePipeline::apply_to_updates(std::vector<UpdatePair>& updates, std::vector<int>& ids,
                                       int round, const ParamVector& /*w*/, RoundRecord& rec) {
    if (cfg_.anomaly && !updates.empty()) {
        const auto rep = anomaly_filter(updates, ids, {}, cfg_.anomaly_threshold);
        if (!rep.rejected_ids.empty()) {
            std::vector<UpdatePair> kept;
            std::vector<int> kept_ids;
            for (std::size_t i = 0; i < ids.size(); ++i) {
                if (std::find(rep.rejected_ids.begin(), rep.rejected_ids.end(), ids[i]) ==
                    rep.rejected_ids.end()) {
                    kept.push_back(std::move(updates[i]));
                    kept_ids.push_back(ids[i]);
                }
            }
            updates = std::move(kept);
            ids = std::move(kept_ids);
            rec.rejected_ids = rep.rejected_ids;
            rec.defense_rejects = static_cast<int>(rep.rejected_ids.size());
        }
    }

    if (!cfg_.clip_noise) return;

    if (!bound_frozen_) {
        if (round <= cfg_.warmup_rounds) {
            for (const auto& u : updates) warmup_norms_.push_back(pv::l2_norm(u.delta_w));
            if (round == cfg_.warmup_rounds && !warmup_norms_.empty()) {
                // median of the warmup norms
                std::sort(warmup_norms_.begin(), warmup_norms_.end());
                const std::size_t m = warmup_norms_.size() / 2;
                clip_bound_ = warmup_norms_.size() % 2 == 1
                                  ? warmup_norms_[m]
                                  : 0.5 * (warmup_norms_[m - 1] + warmup_norms_[m]);
                bound_frozen_ = true;
            }
            return; // no clipping during calibration
        }
        // warmup never observed updates; fall back to the current round
        for (const auto& u : updates) warmup_norms_.push_back(pv::l2_norm(u.delta_w));
        std::sort(warmup_norms_.begin(), warmup_norms_.end());
        clip_bound_ = warmup_norms_[warmup_norms_.size() / 2];
        bound_frozen_ = true;
    }
    if (clip_bound_ <= 0.0) return;

    const std::uint64_t seed = derive_seed(noise_seed_base_, static_cast<std::uint64_t>(round), 0,
                                           seed_purpose::kDefense);
    Rng rng(seed);
    rec.noise_seed = seed;
    for (auto& u : updates) {
        if (pv::l2_norm(u.delta_w) > clip_bound_) ++rec.clip_events;
        u.delta_w = clip_and_noise(u.delta_w, clip_bound_, cfg_.noise_sigma, rng);
    }
}

void DefensePipeline::apply_to_global(ParamVector& w, RoundRecord& rec) {
    if (!cfg_.prune) return;
    w = prune_magnitude(w, cfg_.prune_fraction);
    rec.pruned = true;
}

} // namespace sflsim
