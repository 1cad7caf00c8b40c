#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "num/tensor.hpp"

namespace fedsilo::chem {

enum class BondOrder : std::uint8_t { Single, Double, Triple, Aromatic };

struct Atom {
    std::string element;   // C, N, O, S, F, Cl, Br, I, P
    bool aromatic = false; // written lowercase
    int formal_charge = 0;
    int implicit_h = 0;
};

struct Bond {
    std::uint32_t a = 0, b = 0;
    BondOrder order = BondOrder::Single;
    bool in_ring = false; // lies on some cycle
};

struct MolecularGraph {
    std::vector<Atom> atoms;
    std::vector<Bond> bonds;

    std::size_t degree(std::size_t atom) const;
    bool atom_in_ring(std::size_t atom) const;
};

// Parses the supported SMILES subset: organic-subset atoms (aromatic
// lowercase), bonds - = # : (plus / and \ read as single), branches,
// ring closures 1-9 and %nn, bracket atoms with explicit H and charge.
// Stereo markers are accepted and discarded. Throws ParseError carrying the
// character offset of the offending token.
MolecularGraph parse_smiles(std::string_view s);

// Node feature layout: element one-hot (9) | degree one-hot 0-4 (5) |
// aromatic (1) | formal charge (1) | implicit-H one-hot 0-4 (5) | in-ring (1).
// Edge feature layout: order one-hot (4) | in-ring (1). Each bond appears
// once in edge_list as an undirected pair.
inline constexpr std::size_t kNodeFeatureDim = 22;
inline constexpr std::size_t kEdgeFeatureDim = 5;

struct FeaturizedMolecule {
    num::Tensor node_features; // num_atoms x kNodeFeatureDim
    std::vector<std::pair<std::uint32_t, std::uint32_t>> edge_list;
    num::Tensor edge_features; // num_bonds x kEdgeFeatureDim
};

FeaturizedMolecule featurize(const MolecularGraph& g);

struct ScaffoldKey {
    std::string key;
    bool is_acyclic = false;
};

// Murcko-style scaffold: iteratively delete non-ring atoms of degree <= 1.
// An empty remainder keys as "ACYCLIC"; otherwise the pruned graph is
// serialized under a canonical atom order (iterative neighborhood refinement
// with individualization on ties), so the key is invariant to the atom
// ordering of the input.
ScaffoldKey scaffold_key(const MolecularGraph& g);

} // namespace fedsilo::chem
