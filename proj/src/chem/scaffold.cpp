#include <algorithm>
#include <cctype>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "chem/chem.hpp"

namespace fedsilo::chem {

namespace {

char order_char(BondOrder o) {
    switch (o) {
    case BondOrder::Single: return '-';
    case BondOrder::Double: return '=';
    case BondOrder::Triple: return '#';
    case BondOrder::Aromatic: return ':';
    }
    return '-';
}

struct PrunedGraph {
    std::vector<std::string> labels; // element, lowercase when aromatic
    std::vector<std::tuple<std::uint32_t, std::uint32_t, char>> bonds;

    std::size_t size() const { return labels.size(); }
};

// Iteratively strips non-ring atoms of degree <= 1; what survives is the
// ring systems plus any chains that connect them.
PrunedGraph murcko_prune(const MolecularGraph& g) {
    const std::size_t n = g.atoms.size();
    std::vector<bool> alive(n, true);
    std::vector<bool> in_ring(n, false);
    for (const Bond& b : g.bonds)
        if (b.in_ring) in_ring[b.a] = in_ring[b.b] = true;

    bool changed = true;
    while (changed) {
        changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            if (!alive[i] || in_ring[i]) continue;
            std::size_t deg = 0;
            for (const Bond& b : g.bonds) {
                if (!alive[b.a] || !alive[b.b]) continue;
                if (b.a == i || b.b == i) ++deg;
            }
            if (deg <= 1) {
                alive[i] = false;
                changed = true;
            }
        }
    }

    PrunedGraph out;
    std::vector<std::uint32_t> remap(n, UINT32_MAX);
    for (std::size_t i = 0; i < n; ++i) {
        if (!alive[i]) continue;
        remap[i] = static_cast<std::uint32_t>(out.labels.size());
        std::string label = g.atoms[i].element;
        if (g.atoms[i].aromatic)
            for (char& c : label) c = char(std::tolower((unsigned char)c));
        out.labels.push_back(std::move(label));
    }
    for (const Bond& b : g.bonds)
        if (alive[b.a] && alive[b.b])
            out.bonds.emplace_back(remap[b.a], remap[b.b], order_char(b.order));
    return out;
}

struct Canonicalizer {
    const PrunedGraph& g;
    std::vector<std::vector<std::pair<std::uint32_t, char>>> adj; // (peer, order char)

    explicit Canonicalizer(const PrunedGraph& graph) : g(graph), adj(graph.size()) {
        for (const auto& [a, b, c] : g.bonds) {
            adj[a].push_back({b, c});
            adj[b].push_back({a, c});
        }
    }

    // Refines class labels to a fixed point: each round keys every atom by
    // (own class, sorted multiset of (bond, neighbor class)) and renumbers
    // the keys in sorted order. n rounds suffice for the partition to settle.
    std::vector<int> refine(std::vector<std::string> seed) const {
        const std::size_t n = g.size();
        std::vector<int> cls(n, 0);
        {
            std::map<std::string, int> ids;
            for (const auto& s : seed) ids.emplace(s, 0);
            int next = 0;
            for (auto& [k, v] : ids) v = next++;
            for (std::size_t i = 0; i < n; ++i) cls[i] = ids[seed[i]];
        }
        for (std::size_t round = 0; round < n; ++round) {
            std::vector<std::string> sig(n);
            for (std::size_t i = 0; i < n; ++i) {
                std::vector<std::string> parts;
                parts.reserve(adj[i].size());
                for (auto [peer, oc] : adj[i])
                    parts.push_back(std::string(1, oc) + std::to_string(cls[peer]));
                std::sort(parts.begin(), parts.end());
                std::string s = std::to_string(cls[i]);
                for (const auto& p : parts) s += "|" + p;
                sig[i] = std::move(s);
            }
            std::map<std::string, int> ids;
            for (const auto& s : sig) ids.emplace(s, 0);
            int next = 0;
            for (auto& [k, v] : ids) v = next++;
            std::vector<int> fresh(n);
            for (std::size_t i = 0; i < n; ++i) fresh[i] = ids[sig[i]];
            if (fresh == cls) break;
            cls = std::move(fresh);
        }
        return cls;
    }

    std::string serialize(const std::vector<int>& order_of) const {
        const std::size_t n = g.size();
        std::vector<std::uint32_t> at(n);
        for (std::size_t i = 0; i < n; ++i) at[order_of[i]] = std::uint32_t(i);
        std::string key;
        for (std::size_t pos = 0; pos < n; ++pos) {
            if (pos) key += '.';
            key += g.labels[at[pos]];
        }
        std::vector<std::string> bonds;
        bonds.reserve(g.bonds.size());
        for (const auto& [a, b, c] : g.bonds) {
            int pa = order_of[a], pb = order_of[b];
            if (pa > pb) std::swap(pa, pb);
            bonds.push_back(std::to_string(pa) + c + std::to_string(pb));
        }
        std::sort(bonds.begin(), bonds.end());
        key += '|';
        for (std::size_t i = 0; i < bonds.size(); ++i) {
            if (i) key += ',';
            key += bonds[i];
        }
        return key;
    }

    // Turns a class assignment into a canonical string. When classes still
    // tie after refinement, each member of the first tied class is
    // individualized in turn and the lexicographically smallest result wins.
    std::string canonical_from(const std::vector<int>& cls) const {
        const std::size_t n = g.size();
        std::vector<std::vector<std::uint32_t>> members(n);
        for (std::size_t i = 0; i < n; ++i) members[cls[i]].push_back(std::uint32_t(i));

        int tied = -1;
        for (std::size_t c = 0; c < n; ++c)
            if (members[c].size() > 1) {
                tied = int(c);
                break;
            }
        if (tied == -1) {
            std::vector<int> order_of(n);
            for (std::size_t i = 0; i < n; ++i) order_of[i] = cls[i];
            return serialize(order_of);
        }

        std::string best;
        for (std::uint32_t pick : members[tied]) {
            std::vector<std::string> seed(n);
            for (std::size_t i = 0; i < n; ++i) seed[i] = "c" + std::to_string(cls[i]);
            seed[pick] = "a" + seed[pick]; // sorts ahead of every untouched class
            std::string candidate = canonical_from(refine(std::move(seed)));
            if (best.empty() || candidate < best) best = std::move(candidate);
        }
        return best;
    }

    std::string run() const {
        std::vector<std::string> seed(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) seed[i] = g.labels[i];
        return canonical_from(refine(std::move(seed)));
    }
};

} // namespace

ScaffoldKey scaffold_key(const MolecularGraph& g) {
    PrunedGraph pruned = murcko_prune(g);
    if (pruned.size() == 0) return {"ACYCLIC", true};
    return {Canonicalizer(pruned).run(), false};
}

} // namespace fedsilo::chem
