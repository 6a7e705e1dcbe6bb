#include "sflsim/partition.hpp"

#include <algorithm>
#include <numeric>

#include "sflsim/errors.hpp"
#include "sflsim/rng.hpp"

namespace sflsim {

std::vector<int> PartitionPlan::client_indices(int client) const {
    std::vector<int> out;
    for (int s : assignments.at(static_cast<std::size_t>(client)))
        for (int i : shards[static_cast<std::size_t>(s)]) out.push_back(i);
    return out;
}

PartitionPlan partition_noniid(const LabeledDataset& ds, int num_clients, int num_shards,
                               std::uint64_t seed) {
    const int n = static_cast<int>(ds.size());
    if (num_clients < 1) throw error("partition_noniid: need at least one client");
    if (num_shards < 1 || num_shards > n)
        throw error("partition_noniid: num_shards must lie in [1, dataset size]");

    // Stable label sort keeps intra-class order deterministic.
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return ds.labels[static_cast<std::size_t>(a)] < ds.labels[static_cast<std::size_t>(b)];
    });

    PartitionPlan plan;
    plan.shards.resize(static_cast<std::size_t>(num_shards));
    // Contiguous slices; first (n % num_shards) shards get one extra sample.
    const int base = n / num_shards;
    const int extra = n % num_shards;
    std::size_t pos = 0;
    for (int s = 0; s < num_shards; ++s) {
        const int len = base + (s < extra ? 1 : 0);
        auto& shard = plan.shards[static_cast<std::size_t>(s)];
        shard.assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                     order.begin() + static_cast<std::ptrdiff_t>(pos + len));
        pos += static_cast<std::size_t>(len);
    }

    std::vector<int> perm(static_cast<std::size_t>(num_shards));
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(seed);
    rng.shuffle(perm);

    // Deal like cards: the round-robin order also places any remainder.
    plan.assignments.resize(static_cast<std::size_t>(num_clients));
    for (int s = 0; s < num_shards; ++s)
        plan.assignments[static_cast<std::size_t>(s % num_clients)].push_back(
            perm[static_cast<std::size_t>(s)]);
    return plan;
}

} // namespace sflsim
