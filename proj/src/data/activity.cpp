#include "data/data.hpp"

#include <array>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "chem/chem.hpp"
#include "common/errors.hpp"
#include "num/rng.hpp"

namespace fedsilo::data {

namespace {

std::string chain(std::size_t n) { return std::string(n, 'C'); }

// The label mimics how infinite-dilution activity coefficients actually
// arise: a size contrast, a crude polarity contrast, and a cohesion-parameter
// mismatch built from functional-group contributions (three channels in the
// spirit of dispersion / polar / hydrogen-bonding solubility parameters).
// Each atom is binned into one of the group types below; a molecule's
// cohesion vector is the per-heavy-atom average of its groups' pull
// constants. Identical solute and solvent therefore give exactly zero.
enum GroupType : std::size_t {
    kCAliphatic = 0,
    kCAromatic,
    kCCarbonyl,
    kCNitrile,
    kOHydroxyl,
    kOEther,
    kOCarbonyl,
    kOAromatic,
    kNAmine,
    kNAmide,
    kNNitrile,
    kNAromatic,
    kSulfur,
    kFluorine,
    kChlorine,
    kHeavyHalogen,
    kOtherGroup,
    kGroupCount
};

struct CohesionPull {
    double dispersion = 0.0;
    double polar = 0.0;
    double hbond = 0.0;
    double donor = 0.0;    // hydrogen-bond donor strength
    double acceptor = 0.0; // hydrogen-bond acceptor strength
};

// Fixed per-group pull constants. The exact numbers are arbitrary but frozen:
// hydroxyl, amine and amide groups carry the strong hydrogen-bonding pulls,
// carbonyls and nitriles the polar ones, halogens and rings the dispersive.
// Donor/acceptor feed the signed association cross term below.
constexpr std::array<CohesionPull, kGroupCount> kGroupPull = {{
    {0.30, 0.00, 0.00, 0.00, 0.00}, // aliphatic C
    {0.60, 0.20, 0.00, 0.00, 0.00}, // aromatic C
    {0.35, 0.55, 0.10, 0.00, 0.00}, // carbonyl C
    {0.35, 0.60, 0.05, 0.00, 0.00}, // nitrile C
    {0.20, 0.50, 1.00, 1.00, 0.60}, // hydroxyl O
    {0.25, 0.45, 0.15, 0.00, 0.55}, // ether O
    {0.20, 0.60, 0.20, 0.00, 0.90}, // carbonyl O
    {0.30, 0.75, 0.15, 0.00, 0.40}, // aromatic O
    {0.25, 0.45, 0.70, 0.55, 0.80}, // amine N
    {0.25, 0.70, 0.90, 0.80, 0.70}, // amide N
    {0.25, 0.65, 0.10, 0.00, 0.60}, // nitrile N
    {0.35, 0.85, 0.30, 0.00, 0.85}, // aromatic N
    {0.65, 0.35, 0.05, 0.00, 0.00}, // S
    {0.15, 0.40, 0.00, 0.00, 0.25}, // F
    {0.40, 0.35, 0.05, 0.00, 0.00}, // Cl
    {0.55, 0.30, 0.05, 0.00, 0.00}, // Br, I
    {0.35, 0.25, 0.10, 0.00, 0.10}, // anything else
}};

GroupType classify_atom(const chem::MolecularGraph& mol, std::size_t i) {
    const chem::Atom& a = mol.atoms[i];
    bool double_o = false, double_any = false, triple_n = false, carbonyl_neighbor = false;
    for (const auto& b : mol.bonds) {
        if (b.a != i && b.b != i) continue;
        const std::size_t other = b.a == i ? b.b : b.a;
        if (b.order == chem::BondOrder::Double) {
            double_any = true;
            if (mol.atoms[other].element == "O") double_o = true;
        }
        if (b.order == chem::BondOrder::Triple && mol.atoms[other].element == "N")
            triple_n = true;
        if (mol.atoms[other].element == "C") {
            for (const auto& b2 : mol.bonds)
                if ((b2.a == other || b2.b == other) && b2.order == chem::BondOrder::Double &&
                    mol.atoms[b2.a == other ? b2.b : b2.a].element == "O")
                    carbonyl_neighbor = true;
        }
    }
    if (a.element == "C") {
        if (a.aromatic) return kCAromatic;
        if (double_o) return kCCarbonyl;
        if (triple_n) return kCNitrile;
        return kCAliphatic;
    }
    if (a.element == "O") {
        if (a.aromatic) return kOAromatic;
        if (double_any) return kOCarbonyl;
        if (a.implicit_h > 0) return kOHydroxyl;
        return kOEther;
    }
    if (a.element == "N") {
        if (a.aromatic) return kNAromatic;
        for (const auto& b : mol.bonds)
            if ((b.a == i || b.b == i) && b.order == chem::BondOrder::Triple) return kNNitrile;
        if (carbonyl_neighbor) return kNAmide;
        return kNAmine;
    }
    if (a.element == "S") return kSulfur;
    if (a.element == "F") return kFluorine;
    if (a.element == "Cl") return kChlorine;
    if (a.element == "Br" || a.element == "I") return kHeavyHalogen;
    return kOtherGroup;
}

struct MoleculeTraits {
    double polarity = 0.0;
    double heavy_atoms = 0.0;
    CohesionPull cohesion; // per-heavy-atom average of the group pulls
};

MoleculeTraits traits_of(const chem::MolecularGraph& mol) {
    MoleculeTraits t;
    t.heavy_atoms = double(mol.atoms.size());
    double hetero = 0.0;
    for (const auto& a : mol.atoms)
        if (a.element == "O" || a.element == "N") hetero += 1.0;
    t.polarity = hetero / t.heavy_atoms;
    for (std::size_t i = 0; i < mol.atoms.size(); ++i) {
        const CohesionPull& g = kGroupPull[classify_atom(mol, i)];
        t.cohesion.dispersion += g.dispersion;
        t.cohesion.polar += g.polar;
        t.cohesion.hbond += g.hbond;
        t.cohesion.donor += g.donor;
        t.cohesion.acceptor += g.acceptor;
    }
    t.cohesion.dispersion /= t.heavy_atoms;
    t.cohesion.polar /= t.heavy_atoms;
    t.cohesion.hbond /= t.heavy_atoms;
    t.cohesion.donor /= t.heavy_atoms;
    t.cohesion.acceptor /= t.heavy_atoms;
    return t;
}

double surrogate_label(const MoleculeTraits& solute, const MoleculeTraits& solvent,
                       double temperature_k) {
    const double inv_t = 300.0 / temperature_k;
    const double dp = solute.polarity - solvent.polarity;
    const double ds = solute.heavy_atoms - solvent.heavy_atoms;
    const double dd = solute.cohesion.dispersion - solvent.cohesion.dispersion;
    const double dpol = solute.cohesion.polar - solvent.cohesion.polar;
    const double dh = solute.cohesion.hbond - solvent.cohesion.hbond;
    // Mismatch scales with solute size (more contacts) and cools with T,
    // as in regular-solution theory.
    const double mismatch = dd * dd + dpol * dpol + dh * dh;
    // Signed acidity/basicity cross term: a donor dissolved in an acceptor
    // associates (lowers the coefficient), a donor stranded in a non-acceptor
    // raises it. Same form as the MOSCED-style (a1-a2)(b1-b2) contribution.
    const double assoc = (solute.cohesion.donor - solvent.cohesion.donor) *
                         (solute.cohesion.acceptor - solvent.cohesion.acceptor);
    return 1.5 * dp * dp * solute.heavy_atoms + 0.02 * ds * ds * inv_t +
           2.0 * solute.heavy_atoms * (mismatch + assoc) * inv_t;
}

std::vector<std::string> build_corpus() {
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    auto add = [&](std::string s) {
        if (seen.insert(s).second) out.push_back(std::move(s));
    };

    const std::vector<std::string> branched = {
        "CC(C)C",      "CC(C)CC",       "CC(C)(C)C",    "CCC(C)CC",   "CC(C)CCC",
        "CC(C)(C)CC",  "CCC(C)(C)CC",   "CC(C)CC(C)C",  "CC(C)C(C)C", "CCC(CC)CC",
        "CCCC(C)CC",   "CCC(C)CCC",     "CC(C)CCCC",    "CC(C)(C)CCC", "CCCC(C)C",
        "CCCCC(C)C",   "CCC(CC)CCC",    "CC(C)(C)C(C)(C)C", "CCCC(CC)CC", "CC(C)CCC(C)C"};

    // Alkanes: linear and branched.
    for (std::size_t n = 1; n <= 14; ++n) add(chain(n));
    for (const auto& b : branched) add(b);

    // Alcohols and diols.
    for (std::size_t n = 1; n <= 12; ++n) add(chain(n) + "O");
    for (const auto& b : branched) add(b + "O");
    for (std::size_t n = 1; n <= 8; ++n) add("CC(O)" + chain(n));
    for (std::size_t n = 2; n <= 8; ++n) add("O" + chain(n) + "O");

    // Ethers and glymes.
    for (std::size_t i = 1; i <= 5; ++i)
        for (std::size_t j = i; j <= 8; ++j) add(chain(i) + "O" + chain(j));
    add("COCCOC");
    add("CCOCCOCC");
    add("COCCOCCOC");

    // Ketones and aldehydes.
    for (std::size_t i = 1; i <= 4; ++i)
        for (std::size_t j = i; j <= 8; ++j) add(chain(i) + "C(=O)" + chain(j));
    for (std::size_t n = 1; n <= 8; ++n) add(chain(n) + "C=O");

    // Carboxylic acids and esters.
    for (std::size_t n = 0; n <= 11; ++n) add(chain(n) + "C(=O)O");
    for (std::size_t b = 0; b < 8; ++b) add(branched[b] + "C(=O)O");
    for (std::size_t i = 0; i <= 5; ++i)
        for (std::size_t j = 1; j <= 8; ++j) add(chain(i) + "C(=O)O" + chain(j));

    // Amines and amides.
    for (std::size_t n = 1; n <= 10; ++n) add(chain(n) + "N");
    for (std::size_t i = 1; i <= 3; ++i)
        for (std::size_t j = i; j <= 4; ++j) add(chain(i) + "N" + chain(j));
    add("CN(C)C");
    add("CCN(CC)CC");
    add("CCCN(C)C");
    for (std::size_t b = 0; b < 8; ++b) add(branched[b] + "N");
    add("NC=O");
    add("CC(=O)N");
    add("CC(=O)NC");
    add("CC(=O)N(C)C");
    add("CCC(=O)N");
    add("CCC(=O)NC");

    // Nitriles.
    for (std::size_t n = 1; n <= 8; ++n) add(chain(n) + "C#N");

    // Halides.
    for (const char* x : {"F", "Cl", "Br", "I"})
        for (std::size_t n = 1; n <= 10; ++n) add(chain(n) + x);
    for (std::size_t b = 0; b < 8; ++b) add(branched[b] + "Cl");
    for (std::size_t n = 1; n <= 5; ++n) add("Cl" + chain(n) + "Cl");
    add("FC(F)F");
    add("FC(F)(F)F");
    add("FCC(F)(F)F");
    add("FC(F)(F)C(F)(F)F");
    add("OC(=O)C(F)(F)F");
    add("OCC(F)(F)F");

    // Alkenes and alkynes.
    for (std::size_t n = 0; n <= 7; ++n) add("C=C" + chain(n));
    for (std::size_t i = 1; i <= 3; ++i)
        for (std::size_t j = i; j <= 4; ++j) add(chain(i) + "C=C" + chain(j));
    add("OCC=C");
    add("CC=CCO");
    add("CC(=C)CO");
    add("OC(=O)C=C");
    add("CC=CC(=O)O");
    for (std::size_t n = 0; n <= 6; ++n) add("C#C" + chain(n));

    // Sulfur species.
    for (std::size_t n = 1; n <= 6; ++n) add(chain(n) + "S");
    for (std::size_t i = 1; i <= 3; ++i)
        for (std::size_t j = i; j <= 4; ++j) add(chain(i) + "S" + chain(j));
    add("CS(=O)C");

    // Mixed-function odds and ends.
    add("OCC(O)CO");
    add("NCCO");
    add("OCCN(C)C");
    add("CC(O)C(=O)O");
    add("NCC(=O)O");
    add("COCC(=O)O");
    add("CC(Cl)C(=O)O");
    add("CC(=O)CC(=O)C");
    add("OCCOCCO");
    add("CC(C)(O)C");
    add("COC(C)(C)C");
    add("CCOC(=O)CC(=O)OCC");

    // Benzenes with alkyl chains and common substituents.
    for (std::size_t n = 0; n <= 10; ++n) add(chain(n) + "c1ccccc1");
    for (const char* x : {"F", "Cl", "Br", "I"}) add(std::string(x) + "c1ccccc1");
    for (const char* x : {"F", "Cl", "Br"}) add(std::string(x) + "c1ccc(" + x + ")cc1");
    add("Clc1ccccc1Cl");
    add("Clc1cccc(Cl)c1");
    add("Oc1ccccc1");
    add("Cc1ccc(O)cc1");
    add("Cc1cccc(O)c1");
    add("Cc1ccccc1O");
    add("COc1ccccc1");
    add("CCOc1ccccc1");
    add("COc1ccc(C)cc1");
    add("Oc1ccc(Cl)cc1");
    add("OCc1ccccc1");
    add("OCCc1ccccc1");
    add("Nc1ccccc1");
    add("CNc1ccccc1");
    add("CN(C)c1ccccc1");
    add("Cc1ccc(N)cc1");
    add("OC(=O)c1ccccc1");
    add("COC(=O)c1ccccc1");
    add("CCOC(=O)c1ccccc1");
    add("CC(=O)c1ccccc1");
    add("CC(=O)OCc1ccccc1");
    add("O=Cc1ccccc1");
    add("N#Cc1ccccc1");
    add("C=Cc1ccccc1");
    add("Cc1ccccc1C");
    add("Cc1cccc(C)c1");
    add("Cc1ccc(C)cc1");
    add("Cc1ccc(Cl)cc1");
    add("Cc1ccc(Br)cc1");
    add("CCc1ccc(C)cc1");
    add("CCc1ccc(CC)cc1");
    add("Cc1ccc(C(C)C)cc1");

    // Fused and heteroaromatic rings.
    add("c1ccc2ccccc2c1");
    add("Cc1ccc2ccccc2c1");
    add("Cc1cccc2ccccc12");
    add("c1ccncc1");
    add("Cc1ccncc1");
    add("Cc1cccnc1");
    add("Cc1ccccn1");
    add("CCc1ccncc1");
    add("Cc1ccnc(C)c1");
    add("c1cnccn1");
    add("c1ccoc1");
    add("Cc1ccco1");
    add("CCc1ccco1");
    add("c1ccsc1");
    add("Cc1cccs1");
    add("Cn1cccc1");
    add("c1ccc2ncccc2c1");
    add("c1ccc(-c2ccccc2)cc1");

    // Saturated rings (n=6 gives C1CCCCC1).
    for (std::size_t n = 3; n <= 8; ++n) add("C1" + chain(n - 1) + "1");
    add("CC1CCCC1");
    add("CC1CCCCC1");
    add("CCC1CCCCC1");
    add("CC1CCC(C)CC1");
    add("CC1CCCC(C)C1");
    add("OC1CCCCC1");
    add("O=C1CCCCC1");
    add("NC1CCCCC1");
    add("O=C1CCCC1");
    add("ClC1CCCCC1");
    add("OC1CCCC1");
    add("C1CCOC1");
    add("CC1CCCO1");
    add("C1CCOCC1");
    add("O1CCOCC1");
    add("C1CCNCC1");
    add("CN1CCCCC1");
    add("C1CCNC1");
    add("O1CCNCC1");
    add("C1CCC2CCCCC2C1");
    add("c1ccc2c(c1)CCCC2");

    return out;
}

} // namespace

const std::vector<std::string>& builtin_molecule_corpus() {
    static const std::vector<std::string> corpus = build_corpus();
    return corpus;
}

double synthetic_activity_label(const std::string& solute_smiles,
                                const std::string& solvent_smiles, double temperature_k) {
    if (!(temperature_k > 0.0)) throw StructuralError("temperature must be positive");
    const MoleculeTraits u = traits_of(chem::parse_smiles(solute_smiles));
    const MoleculeTraits v = traits_of(chem::parse_smiles(solvent_smiles));
    return surrogate_label(u, v, temperature_k);
}

std::vector<ActivitySample> generate_synthetic_activity(std::uint64_t seed,
                                                        std::size_t n_samples) {
    if (n_samples == 0) throw StructuralError("need at least one sample");
    const auto& corpus = builtin_molecule_corpus();
    std::vector<MoleculeTraits> traits;
    traits.reserve(corpus.size());
    for (const auto& s : corpus) traits.push_back(traits_of(chem::parse_smiles(s)));

    num::CounterRng pick = num::CounterRng::keyed(seed, "synthetic-activity-pick");
    num::CounterRng temp = num::CounterRng::keyed(seed, "synthetic-activity-temp");
    num::CounterRng noise = num::CounterRng::keyed(seed, "synthetic-activity-noise");

    std::vector<ActivitySample> out;
    out.reserve(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) {
        const std::size_t u = pick.below(2 * i, corpus.size());
        const std::size_t v = pick.below(2 * i + 1, corpus.size());
        ActivitySample s;
        s.solute_smiles = corpus[u];
        s.solvent_smiles = corpus[v];
        s.temperature_k = temp.uniform(i, 280.0, 360.0);
        s.ln_gamma_inf =
            surrogate_label(traits[u], traits[v], s.temperature_k) + 0.05 * noise.gaussian(i);
        out.push_back(std::move(s));
    }
    return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size();
}

} // namespace

IngestResult ingest_activity_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open '" + path + "'");

    std::string header;
    if (!std::getline(f, header) || header.empty())
        throw ConfigError("activity csv '" + path + "' is empty");
    if (!header.empty() && header.back() == '\r') header.pop_back();

    const std::vector<std::string> columns = split_csv_line(header);
    auto column_of = [&](const std::string& name) {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i] == name) return i;
        throw ConfigError("activity csv '" + path + "' missing column '" + name + "'");
    };
    const std::size_t c_solute = column_of("solute_smiles");
    const std::size_t c_solvent = column_of("solvent_smiles");
    const std::size_t c_temp = column_of("temperature_K");
    const std::size_t c_label = column_of("ln_gamma_inf");

    IngestResult result;
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(f, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto reject = [&](std::string reason) {
            result.rejected.push_back({line_no, std::move(reason)});
        };

        const std::vector<std::string> cells = split_csv_line(line);
        if (cells.size() != columns.size()) {
            reject("expected " + std::to_string(columns.size()) + " fields, got " +
                   std::to_string(cells.size()));
            continue;
        }
        ActivitySample s;
        s.solute_smiles = cells[c_solute];
        s.solvent_smiles = cells[c_solvent];
        if (!parse_double(cells[c_temp], s.temperature_k)) {
            reject("unparsable temperature '" + cells[c_temp] + "'");
            continue;
        }
        if (!(s.temperature_k > 0.0)) {
            reject("temperature must be positive");
            continue;
        }
        if (!parse_double(cells[c_label], s.ln_gamma_inf)) {
            reject("unparsable label '" + cells[c_label] + "'");
            continue;
        }
        try {
            chem::parse_smiles(s.solute_smiles);
        } catch (const ParseError& e) {
            reject("solute: " + std::string(e.what()));
            continue;
        }
        try {
            chem::parse_smiles(s.solvent_smiles);
        } catch (const ParseError& e) {
            reject("solvent: " + std::string(e.what()));
            continue;
        }
        result.samples.push_back(std::move(s));
    }
    return result;
}

void write_activity_csv(const std::string& path, const std::vector<ActivitySample>& samples) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f << "solute_smiles,solvent_smiles,temperature_K,ln_gamma_inf\n";
    char buf[32];
    for (const auto& s : samples) {
        f << s.solute_smiles << ',' << s.solvent_smiles << ',';
        std::snprintf(buf, sizeof buf, "%.17g", s.temperature_k);
        f << buf << ',';
        std::snprintf(buf, sizeof buf, "%.17g", s.ln_gamma_inf);
        f << buf << '\n';
    }
    if (!f) throw IoError("failed while writing '" + path + "'");
}

} // namespace fedsilo::data
