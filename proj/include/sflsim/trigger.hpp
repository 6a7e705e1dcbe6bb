#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sflsim/dataset.hpp"
#include "sflsim/rng.hpp"

namespace sflsim {

enum class TriggerKind { LabelFlip, Pattern, Feature };

// Deterministic image predicate used by feature triggers. The default rule
// flags samples whose green channel mean dominates red and blue; an explicit
// curated index list can stand in for it.
struct FeaturePredicate {
    std::string id = "dominant_green";
    double margin = 0.1;
    std::optional<std::vector<int>> curated_indices;

    bool matches(const LabeledDataset& ds, int index) const;
};

// Declarative description of one backdoor.
struct TriggerSpec {
    TriggerKind kind = TriggerKind::LabelFlip;
    int src_class = 0;    // label_flip source; feature source class
    int target_class = 0; // label after poisoning
    double poison_ratio = 1.0;
    int pattern_size = 4; // pattern trigger mask box (right triangle)
    FeaturePredicate predicate;

    void validate(const Shape3& image_shape, int num_classes) const;
};

// The bottom-right right-triangle mask: offsets (dy,dx) measured from the
// top-left of a size x size box anchored at the image's bottom-right corner.
std::vector<std::pair<int, int>> pattern_mask_offsets(int size);

// In-place label flip: images untouched, every src label becomes dst.
LabeledDataset apply_label_flip(const LabeledDataset& ds, int src_class, int dst_class);

// Stamps the mask onto a poison_ratio fraction of samples (excluding ones
// already labeled target) and relabels them. Returns the poisoned subset and
// the untouched remainder.
struct PatternSplit {
    LabeledDataset poisoned;  // D_b
    LabeledDataset remainder; // untouched samples
    std::vector<int> poisoned_indices;
};
PatternSplit apply_pattern_trigger(const LabeledDataset& ds, const TriggerSpec& spec, Rng& rng);

// All and only src-class indices satisfying the predicate.
std::vector<int> select_feature_samples(const LabeledDataset& ds, const FeaturePredicate& pred,
                                        int source_class);

// Builds the attacker's training set D_p from D_c per trigger kind. The
// backdoor slice D_b is appended to D_c; flip and feature kinds relabel the
// affected samples inside D_c as well (the clean-labeled originals must not
// survive or they would cancel the trigger).
struct PoisonResult {
    LabeledDataset d_p;
    std::size_t backdoor_count = 0;
    bool shortfall = false; // feature predicate matched fewer than requested
};
PoisonResult build_poisoned_dataset(const LabeledDataset& d_c, const TriggerSpec& spec, Rng& rng);

// Evaluation set for backdoor task accuracy. Samples whose true label
// already equals the target are excluded so BTA measures caused
// misclassification only.
LabeledDataset make_backdoor_testset(const LabeledDataset& clean_test, const TriggerSpec& spec);

} // namespace sflsim
