#pragma once

#include <cctype>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "molq/graph.hpp"

namespace molq {

// SMILES subset: organic-subset atoms B C N O P S F Cl Br I, aromatic
// lowercase c n o s, bracket atoms with explicit H count and charge,
// branches, ring closures 1-9, bond symbols - = #. No stereochemistry,
// isotopes, wildcards, or disconnected components.

namespace detail {

struct ParserState {
    std::string_view text;
    std::size_t pos = 0;

    bool done() const { return pos >= text.size(); }
    char peek() const { return text[pos]; }
    char take() { return text[pos++]; }

    [[noreturn]] void fail(const std::string& what) const {
        throw SyntaxError("SMILES: " + what + " at position " + std::to_string(pos));
    }
};

struct PendingRing {
    int atom;
    std::optional<BondOrder> order;
};

inline std::optional<Element> organic_element(ParserState& st) {
    char c = st.peek();
    switch (c) {
        case 'C':
            ++st.pos;
            if (!st.done() && st.peek() == 'l') {
                ++st.pos;
                return Element::Cl;
            }
            return Element::C;
        case 'B':
            ++st.pos;
            if (!st.done() && st.peek() == 'r') {
                ++st.pos;
                return Element::Br;
            }
            return Element::B;
        case 'N': ++st.pos; return Element::N;
        case 'O': ++st.pos; return Element::O;
        case 'P': ++st.pos; return Element::P;
        case 'S': ++st.pos; return Element::S;
        case 'F': ++st.pos; return Element::F;
        case 'I': ++st.pos; return Element::I;
        default: return std::nullopt;
    }
}

inline std::optional<Element> aromatic_element(char c) {
    switch (c) {
        case 'c': return Element::C;
        case 'n': return Element::N;
        case 'o': return Element::O;
        case 's': return Element::S;
        default: return std::nullopt;
    }
}

inline Atom parse_bracket(ParserState& st) {
    // '[' already consumed
    Atom atom;
    if (st.done()) st.fail("unterminated bracket atom");
    if (auto ar = aromatic_element(st.peek())) {
        atom.element = *ar;
        atom.aromatic = true;
        ++st.pos;
    } else if (auto el = organic_element(st)) {
        atom.element = *el;
    } else {
        st.fail(std::string("unknown element '") + st.peek() + "' in bracket");
    }
    if (!st.done() && st.peek() == 'H') {
        ++st.pos;
        int h = 1;
        if (!st.done() && std::isdigit(static_cast<unsigned char>(st.peek())))
            h = st.take() - '0';
        atom.hydrogens = h;
    }
    if (!st.done() && (st.peek() == '+' || st.peek() == '-')) {
        const int sign = st.take() == '+' ? 1 : -1;
        int magnitude = 1;
        if (!st.done() && std::isdigit(static_cast<unsigned char>(st.peek()))) {
            magnitude = st.take() - '0';
        } else {
            while (!st.done() && st.peek() == (sign > 0 ? '+' : '-')) {
                ++st.pos;
                ++magnitude;
            }
        }
        atom.formal_charge = sign * magnitude;
    }
    if (st.done() || st.take() != ']') st.fail("expected ']'");
    return atom;
}

}  // namespace detail

inline MolGraph parse_smiles(const std::string& text) {
    if (text.empty()) throw SyntaxError("SMILES: empty input");
    detail::ParserState st{text};

    MolGraph g;
    std::vector<bool> explicit_h;  // bracket atoms keep their H count as written
    std::vector<int> branch_stack;
    std::map<char, detail::PendingRing> open_rings;
    std::set<std::pair<int, int>> seen_bonds;
    int prev = -1;
    std::optional<BondOrder> pending;

    auto add_bond = [&](int i, int j, std::optional<BondOrder> order_a,
                        std::optional<BondOrder> order_b = std::nullopt) {
        if (i == j) st.fail("ring closure bonds an atom to itself");
        BondOrder order;
        if (order_a && order_b) {
            if (*order_a != *order_b) st.fail("conflicting bond orders at ring closure");
            order = *order_a;
        } else if (order_a || order_b) {
            order = order_a ? *order_a : *order_b;
        } else {
            order = (g.atoms[i].aromatic && g.atoms[j].aromatic) ? BondOrder::Aromatic
                                                                 : BondOrder::Single;
        }
        auto key = std::minmax(i, j);
        if (!seen_bonds.insert({key.first, key.second}).second) st.fail("duplicate bond");
        g.bonds.push_back({key.first, key.second, order});
    };

    auto add_atom = [&](Atom atom, bool bracket) {
        if (g.atom_count() == kMaxAtoms)
            throw SizeError("SMILES: more than " + std::to_string(kMaxAtoms) + " atoms");
        const int idx = g.atom_count();
        g.atoms.push_back(atom);
        explicit_h.push_back(bracket);
        if (prev >= 0) {
            add_bond(prev, idx, pending);
            pending.reset();
        }
        prev = idx;
    };

    while (!st.done()) {
        const char c = st.peek();
        if (c == '[') {
            ++st.pos;
            add_atom(detail::parse_bracket(st), true);
        } else if (auto ar = detail::aromatic_element(c)) {
            ++st.pos;
            Atom atom;
            atom.element = *ar;
            atom.aromatic = true;
            add_atom(atom, false);
        } else if (std::isupper(static_cast<unsigned char>(c))) {
            auto el = detail::organic_element(st);
            if (!el) st.fail(std::string("unknown symbol '") + c + "'");
            Atom atom;
            atom.element = *el;
            add_atom(atom, false);
        } else if (c == '-' || c == '=' || c == '#') {
            ++st.pos;
            if (pending) st.fail("two consecutive bond symbols");
            pending = c == '-' ? BondOrder::Single : (c == '=' ? BondOrder::Double : BondOrder::Triple);
        } else if (c >= '1' && c <= '9') {
            ++st.pos;
            if (prev < 0) st.fail("ring closure digit before any atom");
            auto it = open_rings.find(c);
            if (it == open_rings.end()) {
                open_rings.emplace(c, detail::PendingRing{prev, pending});
            } else {
                add_bond(it->second.atom, prev, it->second.order, pending);
                open_rings.erase(it);
            }
            pending.reset();
        } else if (c == '(') {
            ++st.pos;
            if (prev < 0) st.fail("branch before any atom");
            if (pending) st.fail("bond symbol before '('");
            branch_stack.push_back(prev);
        } else if (c == ')') {
            ++st.pos;
            if (branch_stack.empty()) st.fail("unmatched ')'");
            if (pending) st.fail("dangling bond symbol before ')'");
            prev = branch_stack.back();
            branch_stack.pop_back();
        } else {
            st.fail(std::string("unknown symbol '") + c + "'");
        }
    }

    if (!branch_stack.empty()) st.fail("unclosed '('");
    if (pending) st.fail("dangling bond symbol at end of input");
    if (!open_rings.empty()) st.fail("unmatched ring closure");
    if (g.atoms.empty()) throw SyntaxError("SMILES: no atoms");

    // Valence check over heavy-atom bonds, then implicit hydrogens from the
    // deficit against the smallest typical valence that fits.
    for (int i = 0; i < g.atom_count(); ++i) {
        const double sum = g.bond_order_sum(i);
        if (sum > max_valence(g.atoms[i].element) + 1e-9)
            throw ValenceError("SMILES: bond-order sum " + std::to_string(sum) + " exceeds valence of " +
                               symbol(g.atoms[i].element) + " at atom " + std::to_string(i));
        if (!explicit_h[i]) {
            int h = 0;
            for (int v : valence_list(g.atoms[i].element)) {
                if (v + 1e-9 >= sum) {
                    h = static_cast<int>(std::floor(v - sum + 1e-9));
                    break;
                }
            }
            g.atoms[i].hydrogens = h;
        }
    }
    return g;
}

}  // namespace molq
