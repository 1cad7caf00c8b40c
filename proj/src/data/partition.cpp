#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <tuple>
#include <unordered_map>

#include "chem/chem.hpp"
#include "common/errors.hpp"
#include "data/data.hpp"
#include "num/rng.hpp"

namespace fedsilo::data {

std::vector<std::size_t> largest_remainder_counts(std::size_t n,
                                                  const std::vector<double>& fractions) {
    if (fractions.empty()) throw StructuralError("need at least one fraction");
    double sum = 0.0;
    for (double f : fractions) {
        if (f < 0.0) throw StructuralError("fractions must be non-negative");
        sum += f;
    }
    if (std::fabs(sum - 1.0) > 1e-9) throw StructuralError("fractions must sum to 1");

    std::vector<std::size_t> counts(fractions.size());
    std::vector<double> remainders(fractions.size());
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < fractions.size(); ++i) {
        const double quota = double(n) * fractions[i];
        counts[i] = std::size_t(std::floor(quota));
        remainders[i] = quota - double(counts[i]);
        assigned += counts[i];
    }
    std::vector<std::size_t> order(fractions.size());
    std::iota(order.begin(), order.end(), 0);
    // Ties fall back to the lower index because stable_sort keeps input order.
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b]; });
    for (std::size_t i = 0; assigned < n; ++i, ++assigned) counts[order[i % order.size()]] += 1;
    return counts;
}

SplitSizes split_sizes(std::size_t n) {
    auto counts = largest_remainder_counts(n, {0.70, 0.15, 0.15});
    // Minimum-one guarantee: fill train, then val, then test, borrowing one
    // from the currently largest split as long as the donor keeps at least
    // one (2 samples -> 1/1/0, 3 -> 1/1/1).
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (counts[i] > 0) continue;
        std::size_t donor = 0;
        for (std::size_t j = 1; j < counts.size(); ++j)
            if (counts[j] > counts[donor]) donor = j;
        if (counts[donor] >= 2) {
            counts[donor] -= 1;
            counts[i] += 1;
        }
    }
    return {counts[0], counts[1], counts[2]};
}

Splits split_indices(std::size_t n, std::uint64_t seed) {
    if (n == 0) throw StructuralError("cannot split an empty dataset");
    num::CounterRng rng = num::CounterRng::keyed(seed, "train-val-test");
    std::vector<std::size_t> order = num::shuffled_indices(rng, n);
    const SplitSizes sizes = split_sizes(n);
    Splits s;
    s.train.assign(order.begin(), order.begin() + sizes.train);
    s.val.assign(order.begin() + sizes.train, order.begin() + sizes.train + sizes.val);
    s.test.assign(order.begin() + sizes.train + sizes.val, order.end());
    return s;
}

namespace {

// Canonical sample order: stable content key so downstream shuffles do not
// depend on the incoming row order.
std::vector<std::size_t> canonical_order(const std::vector<ActivitySample>& samples) {
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& x = samples[a];
        const auto& y = samples[b];
        return std::tie(x.solute_smiles, x.solvent_smiles, x.temperature_k, x.ln_gamma_inf) <
               std::tie(y.solute_smiles, y.solvent_smiles, y.temperature_k, y.ln_gamma_inf);
    });
    return order;
}

std::vector<std::size_t> canonical_shuffled(const std::vector<ActivitySample>& samples,
                                            num::CounterRng& rng) {
    const std::vector<std::size_t> canonical = canonical_order(samples);
    const std::vector<std::size_t> perm = num::shuffled_indices(rng, canonical.size());
    std::vector<std::size_t> out(canonical.size());
    for (std::size_t i = 0; i < canonical.size(); ++i) out[i] = canonical[perm[i]];
    return out;
}

ActivityClient make_activity_client(std::uint32_t id, const std::vector<ActivitySample>& all,
                                    std::vector<std::size_t> member_indices,
                                    std::uint64_t split_seed) {
    // Materialize members in ascending source order so the client's sample
    // list is independent of assignment order.
    std::sort(member_indices.begin(), member_indices.end());
    ActivityClient c;
    c.client_id = id;
    c.samples.reserve(member_indices.size());
    for (std::size_t i : member_indices) c.samples.push_back(all[i]);
    c.splits = split_train_val_test(c.samples, split_seed);
    return c;
}

} // namespace

Splits split_train_val_test(const std::vector<ActivitySample>& samples, std::uint64_t seed) {
    if (samples.empty()) throw StructuralError("cannot split an empty dataset");
    num::CounterRng rng = num::CounterRng::keyed(seed, "train-val-test");
    const std::vector<std::size_t> canonical = canonical_order(samples);
    const std::vector<std::size_t> perm = num::shuffled_indices(rng, canonical.size());
    const SplitSizes sizes = split_sizes(samples.size());
    Splits s;
    for (std::size_t i = 0; i < canonical.size(); ++i) {
        const std::size_t idx = canonical[perm[i]];
        if (i < sizes.train)
            s.train.push_back(idx);
        else if (i < sizes.train + sizes.val)
            s.val.push_back(idx);
        else
            s.test.push_back(idx);
    }
    return s;
}

std::vector<ActivityClient> partition_even_random(const std::vector<ActivitySample>& samples,
                                                  std::size_t k_clients, std::uint64_t seed) {
    if (k_clients < 1) throw PartitionError("need at least one client");
    if (samples.size() < k_clients)
        throw PartitionError("fewer samples (" + std::to_string(samples.size()) +
                             ") than clients (" + std::to_string(k_clients) + ")");

    num::CounterRng rng = num::CounterRng::keyed(seed, "even-random-partition");
    const std::vector<std::size_t> order = canonical_shuffled(samples, rng);
    const std::vector<std::size_t> block_sizes = largest_remainder_counts(
        samples.size(), std::vector<double>(k_clients, 1.0 / double(k_clients)));

    num::CounterRng split_seeds = num::CounterRng::keyed(seed, "client-split");
    std::vector<ActivityClient> clients;
    clients.reserve(k_clients);
    std::size_t cursor = 0;
    for (std::size_t k = 0; k < k_clients; ++k) {
        std::vector<std::size_t> members(order.begin() + cursor,
                                         order.begin() + cursor + block_sizes[k]);
        cursor += block_sizes[k];
        clients.push_back(make_activity_client(std::uint32_t(k + 1), samples,
                                               std::move(members), split_seeds.bits(k)));
    }
    return clients;
}

std::array<std::size_t, 4> uneven_scaffold_targets(std::size_t n,
                                                   const std::array<double, 4>& fractions) {
    const auto counts =
        largest_remainder_counts(n, {fractions[0], fractions[1], fractions[2], fractions[3]});
    return {counts[0], counts[1], counts[2], counts[3]};
}

std::vector<ActivityClient> partition_uneven_scaffold(const std::vector<ActivitySample>& samples,
                                                      std::uint64_t seed,
                                                      const std::array<double, 4>& fractions) {
    if (samples.size() < 4) throw PartitionError("too few samples for four clients");
    const std::array<std::size_t, 4> targets = uneven_scaffold_targets(samples.size(), fractions);

    // Scaffold of the solvent decides the group; cache per unique solvent.
    std::unordered_map<std::string, chem::ScaffoldKey> cache;
    std::vector<std::size_t> acyclic;
    std::map<std::string, std::vector<std::size_t>> cyclic_groups;
    for (std::size_t i : canonical_order(samples)) {
        const std::string& solvent = samples[i].solvent_smiles;
        auto it = cache.find(solvent);
        if (it == cache.end())
            it = cache.emplace(solvent, chem::scaffold_key(chem::parse_smiles(solvent))).first;
        if (it->second.is_acyclic)
            acyclic.push_back(i);
        else
            cyclic_groups[it->second.key].push_back(i);
    }

    if (acyclic.size() < targets[0] + targets[1])
        throw PartitionError("acyclic solvent group (" + std::to_string(acyclic.size()) +
                             " samples) cannot fill clients 1 and 2 (" +
                             std::to_string(targets[0] + targets[1]) + " needed)");

    // Clients 1 and 2 share the acyclic group in proportion to their target
    // fractions; any surplus over the exact targets is carried pro rata.
    {
        num::CounterRng acyclic_rng = num::CounterRng::keyed(seed, "scaffold-acyclic");
        const std::vector<std::size_t> perm = num::shuffled_indices(acyclic_rng, acyclic.size());
        std::vector<std::size_t> shuffled(acyclic.size());
        for (std::size_t i = 0; i < perm.size(); ++i) shuffled[i] = acyclic[perm[i]];
        acyclic = std::move(shuffled);
    }
    const double f12 = fractions[0] + fractions[1];
    const auto share = largest_remainder_counts(
        acyclic.size(), {fractions[0] / f12, fractions[1] / f12});

    std::array<std::vector<std::size_t>, 4> members;
    members[0].assign(acyclic.begin(), acyclic.begin() + share[0]);
    members[1].assign(acyclic.begin() + share[0], acyclic.end());

    // Remaining scaffold groups go whole to client 3 or 4, biggest group
    // first, always to the client currently further below its target.
    std::vector<const std::pair<const std::string, std::vector<std::size_t>>*> groups;
    groups.reserve(cyclic_groups.size());
    for (const auto& g : cyclic_groups) groups.push_back(&g);
    std::stable_sort(groups.begin(), groups.end(), [](const auto* a, const auto* b) {
        return a->second.size() > b->second.size(); // ties keep key order
    });
    for (const auto* g : groups) {
        const auto deficit = [&](std::size_t c) {
            return double(targets[c]) - double(members[c].size());
        };
        const std::size_t pick = deficit(2) >= deficit(3) ? 2 : 3;
        members[pick].insert(members[pick].end(), g->second.begin(), g->second.end());
    }

    num::CounterRng split_seeds = num::CounterRng::keyed(seed, "client-split");
    std::vector<ActivityClient> clients;
    clients.reserve(4);
    for (std::size_t k = 0; k < 4; ++k)
        clients.push_back(make_activity_client(std::uint32_t(k + 1), samples,
                                               std::move(members[k]), split_seeds.bits(k)));
    return clients;
}

std::vector<TrajectoryClient> partition_by_condition(
    std::vector<std::pair<double, std::vector<colsim::Trajectory>>> sets,
    double target_vapor_rate, std::uint64_t seed) {
    if (sets.empty()) throw PartitionError("need at least one operating condition");
    std::stable_sort(sets.begin(), sets.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t i = 0; i + 1 < sets.size(); ++i)
        if (sets[i].first == sets[i + 1].first)
            throw PartitionError("duplicate operating condition V=" +
                                 std::to_string(sets[i].first));

    num::CounterRng split_seeds = num::CounterRng::keyed(seed, "client-split");
    std::vector<TrajectoryClient> clients;
    clients.reserve(sets.size());
    for (std::size_t k = 0; k < sets.size(); ++k) {
        if (sets[k].second.empty())
            throw PartitionError("no trajectories for condition V=" +
                                 std::to_string(sets[k].first));
        TrajectoryClient c;
        c.client_id = std::uint32_t(k + 1);
        c.vapor_rate = sets[k].first;
        c.is_target = sets[k].first == target_vapor_rate;
        c.trajectories = std::move(sets[k].second);
        c.splits = split_indices(c.trajectories.size(), split_seeds.bits(k));
        clients.push_back(std::move(c));
    }
    return clients;
}

} // namespace fedsilo::data
