#include "sflsim/trigger.hpp"

#include <algorithm>
#include <cmath>

#include "sflsim/errors.hpp"

namespace sflsim {

bool FeaturePredicate::matches(const LabeledDataset& ds, int index) const {
    if (curated_indices)
        return std::find(curated_indices->begin(), curated_indices->end(), index) !=
               curated_indices->end();
    if (id == "never") return false;
    if (id == "dominant_green") {
        if (ds.shape.c != 3) return false;
        const float* img = ds.image(static_cast<std::size_t>(index));
        const int plane = ds.shape.h * ds.shape.w;
        double mean[3] = {0, 0, 0};
        for (int c = 0; c < 3; ++c) {
            double s = 0;
            for (int i = 0; i < plane; ++i) s += img[c * plane + i];
            mean[c] = s / plane;
        }
        return mean[1] - std::max(mean[0], mean[2]) > margin;
    }
    throw error("unknown feature predicate: " + id);
}

void TriggerSpec::validate(const Shape3& image_shape, int num_classes) const {
    if (target_class < 0 || target_class >= num_classes)
        throw error("trigger target class out of range");
    switch (kind) {
    case TriggerKind::LabelFlip:
        if (src_class < 0 || src_class >= num_classes) throw error("flip source class out of range");
        if (src_class == target_class) throw error("label flip needs src != dst");
        break;
    case TriggerKind::Pattern:
        if (pattern_size < 1 || pattern_size > image_shape.h || pattern_size > image_shape.w)
            throw error("pattern mask does not fit inside image bounds");
        if (poison_ratio <= 0.0 || poison_ratio > 1.0)
            throw error("poison ratio must lie in (0,1]");
        break;
    case TriggerKind::Feature:
        if (src_class < 0 || src_class >= num_classes)
            throw error("feature source class out of range");
        if (poison_ratio <= 0.0 || poison_ratio > 1.0)
            throw error("poison ratio must lie in (0,1]");
        break;
    }
}

std::vector<std::pair<int, int>> pattern_mask_offsets(int size) {
    // Right triangle filling the box's bottom-right half (hypotenuse from
    // top-right to bottom-left).
    std::vector<std::pair<int, int>> offs;
    for (int dy = 0; dy < size; ++dy)
        for (int dx = 0; dx < size; ++dx)
            if (dy + dx >= size - 1) offs.emplace_back(dy, dx);
    return offs;
}

namespace {

void stamp_pattern(float* img, const Shape3& shape, int size) {
    const int y0 = shape.h - size;
    const int x0 = shape.w - size;
    for (const auto& [dy, dx] : pattern_mask_offsets(size))
        for (int c = 0; c < shape.c; ++c)
            img[(c * shape.h + y0 + dy) * shape.w + x0 + dx] = 1.0f;
}

} // namespace

LabeledDataset apply_label_flip(const LabeledDataset& ds, int src_class, int dst_class) {
    if (src_class == dst_class) throw error("label flip needs src != dst");
    if (src_class < 0 || src_class >= ds.num_classes || dst_class < 0 ||
        dst_class >= ds.num_classes)
        throw error("label flip class out of range");
    LabeledDataset out = ds;
    for (auto& l : out.labels)
        if (l == src_class) l = dst_class;
    return out;
}

PatternSplit apply_pattern_trigger(const LabeledDataset& ds, const TriggerSpec& spec, Rng& rng) {
    if (spec.kind != TriggerKind::Pattern)
        throw error("apply_pattern_trigger requires a pattern spec");
    spec.validate(ds.shape, ds.num_classes);

    std::vector<int> candidates;
    for (std::size_t i = 0; i < ds.size(); ++i)
        if (ds.labels[i] != spec.target_class) candidates.push_back(static_cast<int>(i));

    const auto want = static_cast<std::size_t>(
        std::floor(spec.poison_ratio * static_cast<double>(ds.size())));
    const std::size_t take = std::min(want, candidates.size());

    const auto picks = rng.sample_without_replacement(static_cast<int>(candidates.size()),
                                                      static_cast<int>(take));
    std::vector<int> chosen;
    chosen.reserve(take);
    for (int p : picks) chosen.push_back(candidates[static_cast<std::size_t>(p)]);
    std::sort(chosen.begin(), chosen.end());

    PatternSplit split;
    split.poisoned = ds.subset(chosen);
    for (std::size_t s = 0; s < split.poisoned.size(); ++s) {
        stamp_pattern(split.poisoned.image(s), ds.shape, spec.pattern_size);
        split.poisoned.labels[s] = spec.target_class;
    }
    std::vector<int> rest;
    std::size_t ci = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (ci < chosen.size() && chosen[ci] == static_cast<int>(i)) {
            ++ci;
            continue;
        }
        rest.push_back(static_cast<int>(i));
    }
    split.remainder = ds.subset(rest);
    split.poisoned_indices = std::move(chosen);
    return split;
}

std::vector<int> select_feature_samples(const LabeledDataset& ds, const FeaturePredicate& pred,
                                        int source_class) {
    std::vector<int> out;
    for (std::size_t i = 0; i < ds.size(); ++i)
        if (ds.labels[i] == source_class && pred.matches(ds, static_cast<int>(i)))
            out.push_back(static_cast<int>(i));
    return out;
}

PoisonResult build_poisoned_dataset(const LabeledDataset& d_c, const TriggerSpec& spec, Rng& rng) {
    PoisonResult res;
    if (d_c.empty()) {
        res.d_p = d_c;
        return res;
    }
    spec.validate(d_c.shape, d_c.num_classes);

    switch (spec.kind) {
    case TriggerKind::LabelFlip: {
        // Whole source class flipped in place; the flipped samples are also
        // appended as D_b, so they carry double weight during training.
        LabeledDataset flipped = apply_label_flip(d_c, spec.src_class, spec.target_class);
        std::vector<int> src_idx;
        for (std::size_t i = 0; i < d_c.size(); ++i)
            if (d_c.labels[i] == spec.src_class) src_idx.push_back(static_cast<int>(i));
        res.d_p = flipped;
        res.d_p.append(flipped.subset(src_idx));
        res.backdoor_count = src_idx.size();
        break;
    }
    case TriggerKind::Pattern: {
        TriggerSpec s = spec;
        PatternSplit split = apply_pattern_trigger(d_c, s, rng);
        res.d_p = d_c;
        res.d_p.append(split.poisoned);
        res.backdoor_count = split.poisoned.size();
        const auto want = static_cast<std::size_t>(
            std::floor(spec.poison_ratio * static_cast<double>(d_c.size())));
        res.shortfall = res.backdoor_count < want;
        break;
    }
    case TriggerKind::Feature: {
        const auto candidates = select_feature_samples(d_c, spec.predicate, spec.src_class);
        const auto want = static_cast<std::size_t>(
            std::floor(spec.poison_ratio * static_cast<double>(d_c.size())));
        const std::size_t take = std::min(want, candidates.size());
        const auto picks = rng.sample_without_replacement(static_cast<int>(candidates.size()),
                                                          static_cast<int>(take));
        std::vector<int> chosen;
        for (int p : picks) chosen.push_back(candidates[static_cast<std::size_t>(p)]);
        std::sort(chosen.begin(), chosen.end());

        // Relabel in place, then append copies of the relabeled samples.
        res.d_p = d_c;
        for (int i : chosen) res.d_p.labels[static_cast<std::size_t>(i)] = spec.target_class;
        res.d_p.append(res.d_p.subset(chosen));
        res.backdoor_count = chosen.size();
        res.shortfall = take < want;
        break;
    }
    }
    return res;
}

LabeledDataset make_backdoor_testset(const LabeledDataset& clean_test, const TriggerSpec& spec) {
    LabeledDataset out;
    out.shape = clean_test.shape;
    out.num_classes = clean_test.num_classes;
    if (clean_test.empty()) return out;
    spec.validate(clean_test.shape, clean_test.num_classes);

    switch (spec.kind) {
    case TriggerKind::LabelFlip:
        for (std::size_t i = 0; i < clean_test.size(); ++i)
            if (clean_test.labels[i] == spec.src_class) {
                out.push_back(clean_test.image(i), spec.target_class);
            }
        break;
    case TriggerKind::Pattern:
        for (std::size_t i = 0; i < clean_test.size(); ++i) {
            if (clean_test.labels[i] == spec.target_class) continue;
            out.push_back(clean_test.image(i), spec.target_class);
            stamp_pattern(out.image(out.size() - 1), out.shape, spec.pattern_size);
        }
        break;
    case TriggerKind::Feature:
        for (int i : select_feature_samples(clean_test, spec.predicate, spec.src_class)) {
            if (clean_test.labels[static_cast<std::size_t>(i)] == spec.target_class) continue;
            out.push_back(clean_test.image(static_cast<std::size_t>(i)), spec.target_class);
        }
        break;
    }
    return out;
}

} // namespace sflsim
