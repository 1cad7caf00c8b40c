#include <algorithm>
#include <array>

#include "chem/chem.hpp"
#include "common/errors.hpp"

namespace fedsilo::chem {

namespace {

constexpr std::array<const char*, 9> kElements = {"C", "N", "O", "S", "F", "Cl", "Br", "I", "P"};

std::size_t element_index(const std::string& element) {
    for (std::size_t i = 0; i < kElements.size(); ++i)
        if (element == kElements[i]) return i;
    throw StructuralError("featurize: element outside the supported set: " + element);
}

} // namespace

FeaturizedMolecule featurize(const MolecularGraph& g) {
    const std::size_t n = g.atoms.size();
    num::Tensor nodes = num::Tensor::zeros({n, kNodeFeatureDim});
    for (std::size_t i = 0; i < n; ++i) {
        const Atom& a = g.atoms[i];
        double* f = nodes.data.data() + i * kNodeFeatureDim;
        f[element_index(a.element)] = 1.0;
        f[9 + std::min<std::size_t>(g.degree(i), 4)] = 1.0;
        f[14] = a.aromatic ? 1.0 : 0.0;
        f[15] = double(a.formal_charge);
        f[16 + std::min(a.implicit_h, 4)] = 1.0;
        f[21] = g.atom_in_ring(i) ? 1.0 : 0.0;
    }

    FeaturizedMolecule out;
    out.node_features = std::move(nodes);
    out.edge_list.reserve(g.bonds.size());
    out.edge_features = num::Tensor::zeros({g.bonds.size(), kEdgeFeatureDim});
    for (std::size_t bi = 0; bi < g.bonds.size(); ++bi) {
        const Bond& b = g.bonds[bi];
        out.edge_list.emplace_back(b.a, b.b);
        double* f = out.edge_features.data.data() + bi * kEdgeFeatureDim;
        f[std::size_t(b.order)] = 1.0;
        f[4] = b.in_ring ? 1.0 : 0.0;
    }
    return out;
}

} // namespace fedsilo::chem
