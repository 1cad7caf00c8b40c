#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <tuple>

#include "chem/chem.hpp"
#include "common/errors.hpp"

namespace fedsilo::chem {

namespace {

constexpr int kUnspecified = -1; // bond order not written

struct RawBond {
    std::uint32_t a, b;
    int order; // kUnspecified or BondOrder value
};

struct RawAtom {
    std::string element;
    bool aromatic;
    int formal_charge;
    int explicit_h;  // only meaningful when bracketed
    bool bracketed;  // bracket atoms carry their own H count
    std::size_t offset;
};

bool is_upper_symbol(char c) {
    return c == 'C' || c == 'N' || c == 'O' || c == 'S' || c == 'F' || c == 'I' || c == 'P' ||
           c == 'B';
}

bool is_aromatic_symbol(char c) {
    return c == 'c' || c == 'n' || c == 'o' || c == 's' || c == 'p';
}

// Allowed total valences per element, smallest first.
const std::vector<int>& valences_for(const std::string& element) {
    static const std::map<std::string, std::vector<int>> table = {
        {"C", {4}}, {"N", {3}}, {"O", {2}},          {"S", {2, 4, 6}}, {"F", {1}},
        {"Cl", {1}}, {"Br", {1}}, {"I", {1}},        {"P", {3, 5}},
    };
    return table.at(element);
}

int order_value(BondOrder o) {
    switch (o) {
    case BondOrder::Single: return 1;
    case BondOrder::Double: return 2;
    case BondOrder::Triple: return 3;
    case BondOrder::Aromatic: return 1; // sigma framework only
    }
    return 1;
}

class Parser {
public:
    explicit Parser(std::string_view s) : s_(s) {}

    MolecularGraph run() {
        parse_chain();
        finish_checks();
        MolecularGraph g = assemble();
        perceive_rings(g);
        resolve_default_bonds(g);
        check_aromatic_atoms(g);
        assign_hydrogens(g);
        return g;
    }

private:
    [[noreturn]] void fail(const std::string& what, std::size_t offset) const {
        throw ParseError(what, offset);
    }

    char peek() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }

    void parse_chain() {
        while (pos_ < s_.size()) {
            const char c = s_[pos_];
            if (c == '(') {
                if (prev_ < 0) fail("branch with no preceding atom", pos_);
                if (pending_ != kUnspecified) fail("bond symbol before branch", pos_);
                branch_stack_.push_back({prev_, pos_});
                ++pos_;
            } else if (c == ')') {
                if (branch_stack_.empty()) fail("unbalanced parentheses", pos_);
                if (pending_ != kUnspecified) fail("dangling bond symbol", pos_);
                prev_ = branch_stack_.back().first;
                branch_stack_.pop_back();
                ++pos_;
            } else if (c == '-' || c == '=' || c == '#' || c == ':' || c == '/' || c == '\\') {
                if (prev_ < 0) fail("bond with no preceding atom", pos_);
                if (pending_ != kUnspecified) fail("duplicate bond symbol", pos_);
                pending_ = bond_code(c);
                ++pos_;
            } else if (c >= '1' && c <= '9') {
                handle_ring(c - '0', pos_);
                ++pos_;
            } else if (c == '%') {
                if (pos_ + 2 >= s_.size() || !std::isdigit((unsigned char)s_[pos_ + 1]) ||
                    !std::isdigit((unsigned char)s_[pos_ + 2]))
                    fail("malformed two-digit ring closure", pos_);
                handle_ring((s_[pos_ + 1] - '0') * 10 + (s_[pos_ + 2] - '0'), pos_);
                pos_ += 3;
            } else if (c == '[') {
                add_atom(parse_bracket_atom());
            } else if (std::isalpha((unsigned char)c)) {
                add_atom(parse_plain_atom());
            } else {
                fail("unexpected character", pos_);
            }
        }
    }

    static int bond_code(char c) {
        switch (c) {
        case '=': return int(BondOrder::Double);
        case '#': return int(BondOrder::Triple);
        case ':': return int(BondOrder::Aromatic);
        default: return int(BondOrder::Single); // '-', '/', '\\'
        }
    }

    RawAtom parse_plain_atom() {
        const std::size_t at = pos_;
        const char c = s_[pos_];
        std::string element;
        bool aromatic = false;
        if ((c == 'C' && pos_ + 1 < s_.size() && s_[pos_ + 1] == 'l') ||
            (c == 'B' && pos_ + 1 < s_.size() && s_[pos_ + 1] == 'r')) {
            element = s_.substr(pos_, 2);
            pos_ += 2;
        } else if (is_upper_symbol(c) && c != 'B') {
            element = std::string(1, c);
            ++pos_;
        } else if (is_aromatic_symbol(c)) {
            element = std::string(1, char(std::toupper((unsigned char)c)));
            aromatic = true;
            ++pos_;
        } else {
            fail("unknown element", at);
        }
        return {element, aromatic, 0, 0, false, at};
    }

    RawAtom parse_bracket_atom() {
        const std::size_t open = pos_;
        ++pos_; // '['
        if (pos_ < s_.size() && std::isdigit((unsigned char)peek()))
            fail("unsupported isotope", pos_);

        RawAtom atom = parse_bracket_element(open);
        atom.bracketed = true;
        atom.offset = open;

        while (peek() == '@') ++pos_; // chirality accepted and discarded

        if (peek() == 'H') {
            ++pos_;
            atom.explicit_h = 1;
            if (std::isdigit((unsigned char)peek())) {
                atom.explicit_h = peek() - '0';
                ++pos_;
            }
        }
        if (peek() == '+' || peek() == '-') {
            const int sign = peek() == '+' ? 1 : -1;
            ++pos_;
            int magnitude = 1;
            if (std::isdigit((unsigned char)peek())) {
                magnitude = peek() - '0';
                ++pos_;
            } else {
                while (peek() == (sign > 0 ? '+' : '-')) {
                    ++magnitude;
                    ++pos_;
                }
            }
            atom.formal_charge = sign * magnitude;
        }
        if (peek() != ']') fail("unterminated bracket atom", open);
        ++pos_;
        return atom;
    }

    RawAtom parse_bracket_element(std::size_t open) {
        const std::size_t at = pos_;
        if (pos_ >= s_.size()) fail("unterminated bracket atom", open);
        const char c = s_[pos_];
        if ((c == 'C' && pos_ + 1 < s_.size() && s_[pos_ + 1] == 'l') ||
            (c == 'B' && pos_ + 1 < s_.size() && s_[pos_ + 1] == 'r')) {
            std::string e = std::string(s_.substr(pos_, 2));
            pos_ += 2;
            return {e, false, 0, 0, true, at};
        }
        if (is_upper_symbol(c) && c != 'B') {
            ++pos_;
            return {std::string(1, c), false, 0, 0, true, at};
        }
        if (is_aromatic_symbol(c)) {
            ++pos_;
            return {std::string(1, char(std::toupper((unsigned char)c))), true, 0, 0, true, at};
        }
        fail("unknown element", at);
    }

    void add_atom(RawAtom atom) {
        const std::uint32_t idx = static_cast<std::uint32_t>(atoms_.size());
        atoms_.push_back(std::move(atom));
        if (prev_ >= 0) bonds_.push_back({std::uint32_t(prev_), idx, pending_});
        pending_ = kUnspecified;
        prev_ = int(idx);
    }

    void handle_ring(int number, std::size_t offset) {
        if (prev_ < 0) fail("ring closure with no preceding atom", offset);
        auto it = open_rings_.find(number);
        if (it == open_rings_.end()) {
            open_rings_[number] = {std::uint32_t(prev_), offset, pending_};
            pending_ = kUnspecified;
            return;
        }
        const std::uint32_t other = std::get<0>(it->second);
        const int other_order = std::get<2>(it->second);
        open_rings_.erase(it);
        if (other == std::uint32_t(prev_)) fail("ring bond to self", offset);
        int order = kUnspecified;
        if (pending_ != kUnspecified && other_order != kUnspecified && pending_ != other_order)
            fail("conflicting ring bond order", offset);
        if (pending_ != kUnspecified) order = pending_;
        else if (other_order != kUnspecified) order = other_order;
        for (const RawBond& b : bonds_)
            if ((b.a == other && b.b == std::uint32_t(prev_)) ||
                (b.b == other && b.a == std::uint32_t(prev_)))
                fail("duplicate bond", offset);
        bonds_.push_back({other, std::uint32_t(prev_), order});
        pending_ = kUnspecified;
    }

    void finish_checks() {
        if (!open_rings_.empty()) {
            auto worst = std::min_element(
                open_rings_.begin(), open_rings_.end(),
                [](const auto& x, const auto& y) { return std::get<1>(x.second) < std::get<1>(y.second); });
            fail("unclosed ring bond " + std::to_string(worst->first),
                 std::get<1>(worst->second));
        }
        if (!branch_stack_.empty()) fail("unbalanced parentheses", branch_stack_.back().second);
        if (pending_ != kUnspecified) fail("dangling bond symbol", s_.size());
        if (atoms_.empty()) fail("empty input", 0);
    }

    MolecularGraph assemble() const {
        MolecularGraph g;
        g.atoms.reserve(atoms_.size());
        for (const RawAtom& a : atoms_)
            g.atoms.push_back({a.element, a.aromatic, a.formal_charge, a.explicit_h});
        g.bonds.reserve(bonds_.size());
        for (const RawBond& b : bonds_) {
            BondOrder o = b.order == kUnspecified ? BondOrder::Single : BondOrder(b.order);
            g.bonds.push_back({b.a, b.b, o, false});
        }
        return g;
    }

    // Marks in_ring on every bond that lies on a cycle (i.e. is not a bridge).
    void perceive_rings(MolecularGraph& g) const {
        const std::size_t n = g.atoms.size();
        std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> adj(n); // (peer, bond)
        for (std::uint32_t bi = 0; bi < g.bonds.size(); ++bi) {
            adj[g.bonds[bi].a].push_back({g.bonds[bi].b, bi});
            adj[g.bonds[bi].b].push_back({g.bonds[bi].a, bi});
        }
        std::vector<int> entry(n, -1), low(n, 0);
        int timer = 0;
        // Iterative bridge search; everything not a bridge sits on a cycle.
        struct Frame {
            std::uint32_t node;
            std::uint32_t via_bond;
            std::size_t next_child;
        };
        for (std::uint32_t root = 0; root < n; ++root) {
            if (entry[root] != -1) continue;
            std::vector<Frame> stack{{root, UINT32_MAX, 0}};
            entry[root] = low[root] = timer++;
            while (!stack.empty()) {
                Frame& f = stack.back();
                if (f.next_child < adj[f.node].size()) {
                    auto [peer, bond] = adj[f.node][f.next_child++];
                    if (bond == f.via_bond) continue;
                    if (entry[peer] == -1) {
                        entry[peer] = low[peer] = timer++;
                        stack.push_back({peer, bond, 0});
                    } else {
                        low[f.node] = std::min(low[f.node], entry[peer]);
                        g.bonds[bond].in_ring = true; // back edge closes a cycle
                    }
                } else {
                    const Frame done = f;
                    stack.pop_back();
                    if (!stack.empty()) {
                        Frame& parent = stack.back();
                        low[parent.node] = std::min(low[parent.node], low[done.node]);
                        if (low[done.node] <= entry[parent.node])
                            g.bonds[done.via_bond].in_ring = true;
                    }
                }
            }
        }
    }

    // A bond written without a symbol is aromatic only when both endpoints are
    // aromatic and the bond closes a ring; the biphenyl linker stays single.
    void resolve_default_bonds(MolecularGraph& g) const {
        for (std::size_t bi = 0; bi < bonds_.size(); ++bi) {
            if (bonds_[bi].order != kUnspecified) continue;
            Bond& b = g.bonds[bi];
            if (g.atoms[b.a].aromatic && g.atoms[b.b].aromatic && b.in_ring)
                b.order = BondOrder::Aromatic;
        }
    }

    void check_aromatic_atoms(const MolecularGraph& g) const {
        std::vector<int> aromatic_ring_bonds(g.atoms.size(), 0);
        for (const Bond& b : g.bonds) {
            if (b.order == BondOrder::Aromatic && b.in_ring) {
                ++aromatic_ring_bonds[b.a];
                ++aromatic_ring_bonds[b.b];
            }
        }
        for (std::size_t i = 0; i < g.atoms.size(); ++i)
            if (g.atoms[i].aromatic && aromatic_ring_bonds[i] < 2)
                fail("aromatic atom outside an aromatic ring", atoms_[i].offset);
    }

    // Implicit hydrogens by standard valences. Bracket atoms keep their
    // written H count. Aromatic bonds count 1.5 toward valence for C/N/P and
    // 1.0 for O/S (the heteroatom lone pair supplies the pi contribution);
    // the sigma framework alone decides valence violations on aromatics.
    void assign_hydrogens(MolecularGraph& g) const {
        for (std::size_t i = 0; i < g.atoms.size(); ++i) {
            if (atoms_[i].bracketed) continue;
            Atom& a = g.atoms[i];
            double sum = 0.0;
            int sigma = 0;
            bool touches_aromatic = a.aromatic;
            for (const Bond& b : g.bonds) {
                if (b.a != i && b.b != i) continue;
                sigma += order_value(b.order);
                if (b.order == BondOrder::Aromatic) {
                    touches_aromatic = true;
                    sum += (a.element == "O" || a.element == "S") ? 1.0 : 1.5;
                } else {
                    sum += order_value(b.order);
                }
            }
            const int needed = int(std::ceil(sum));
            const auto& allowed = valences_for(a.element);
            int chosen = -1;
            for (int v : allowed)
                if (v >= needed) {
                    chosen = v;
                    break;
                }
            if (chosen == -1) {
                if (touches_aromatic && sigma <= allowed.back()) {
                    a.implicit_h = 0;
                    continue;
                }
                fail("valence violation", atoms_[i].offset);
            }
            a.implicit_h = chosen - needed;
        }
    }

    std::string_view s_;
    std::size_t pos_ = 0;
    int prev_ = -1;
    int pending_ = kUnspecified;
    std::vector<std::pair<int, std::size_t>> branch_stack_; // (prev atom, '(' offset)
    std::map<int, std::tuple<std::uint32_t, std::size_t, int>> open_rings_;
    std::vector<RawAtom> atoms_;
    std::vector<RawBond> bonds_;
};

} // namespace

std::size_t MolecularGraph::degree(std::size_t atom) const {
    std::size_t d = 0;
    for (const Bond& b : bonds)
        if (b.a == atom || b.b == atom) ++d;
    return d;
}

bool MolecularGraph::atom_in_ring(std::size_t atom) const {
    for (const Bond& b : bonds)
        if (b.in_ring && (b.a == atom || b.b == atom)) return true;
    return false;
}

MolecularGraph parse_smiles(std::string_view s) { return Parser(s).run(); }

} // namespace fedsilo::chem
