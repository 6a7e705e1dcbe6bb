#pragma once

#include <cstdint>
#include <vector>

#include "sflsim/dataset.hpp"

namespace sflsim {

// Label-sorted shard partition. Shards are contiguous index ranges of the
// label-sorted dataset; each shard belongs to exactly one client.
struct PartitionPlan {
    // shards[s] = sample indices (into the original dataset) of shard s.
    std::vector<std::vector<int>> shards;
    // assignments[client] = shard indices owned by that client.
    std::vector<std::vector<int>> assignments;

    std::vector<int> client_indices(int client) const;
    int num_clients() const { return static_cast<int>(assignments.size()); }
};

// Sorts by label (stable), slices into num_shards contiguous shards, deals a
// seeded random shard permutation to clients round-robin.
PartitionPlan partition_noniid(const LabeledDataset& ds, int num_clients, int num_shards,
                               std::uint64_t seed);

} // namespace sflsim
