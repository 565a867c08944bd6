#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "molq/errors.hpp"

namespace molq {

enum class Element : std::uint8_t { C, N, O, F, P, S, Cl, Br, I, B, Other };

inline const char* symbol(Element e) {
    switch (e) {
        case Element::C: return "C";
        case Element::N: return "N";
        case Element::O: return "O";
        case Element::F: return "F";
        case Element::P: return "P";
        case Element::S: return "S";
        case Element::Cl: return "Cl";
        case Element::Br: return "Br";
        case Element::I: return "I";
        case Element::B: return "B";
        case Element::Other: return "*";
    }
    return "?";
}

/// Hard valence ceiling used to reject impossible bond patterns.
inline double max_valence(Element e) {
    switch (e) {
        case Element::C: return 4;
        case Element::N: return 3;
        case Element::O: return 2;
        case Element::F:
        case Element::Cl:
        case Element::Br:
        case Element::I: return 1;
        case Element::S: return 6;
        case Element::P: return 5;
        case Element::B: return 3;
        case Element::Other: return 8;
    }
    return 8;
}

/// Typical valences, smallest first; implicit hydrogens fill up to the
/// smallest value that accommodates the bond-order sum.
inline const std::vector<int>& valence_list(Element e) {
    static const std::vector<int> vB{3}, vC{4}, vN{3}, vO{2}, vP{3, 5}, vS{2, 4, 6}, vHal{1}, vOther{};
    switch (e) {
        case Element::B: return vB;
        case Element::C: return vC;
        case Element::N: return vN;
        case Element::O: return vO;
        case Element::P: return vP;
        case Element::S: return vS;
        case Element::F:
        case Element::Cl:
        case Element::Br:
        case Element::I: return vHal;
        case Element::Other: return vOther;
    }
    return vOther;
}

enum class BondOrder : std::uint8_t { Single, Double, Triple, Aromatic };

inline double order_value(BondOrder o) {
    switch (o) {
        case BondOrder::Single: return 1.0;
        case BondOrder::Double: return 2.0;
        case BondOrder::Triple: return 3.0;
        case BondOrder::Aromatic: return 1.5;  // aromatic bonds count 1.5 toward valence
    }
    return 1.0;
}

struct Atom {
    Element element = Element::C;
    int formal_charge = 0;
    bool aromatic = false;
    int hydrogens = 0;  // attached hydrogens, resolved at parse time
};

struct Bond {
    int i = 0;
    int j = 0;
    BondOrder order = BondOrder::Single;
};

inline constexpr int kMaxAtoms = 75;

struct MolGraph {
    std::vector<Atom> atoms;
    std::vector<Bond> bonds;

    int atom_count() const { return static_cast<int>(atoms.size()); }
    int bond_count() const { return static_cast<int>(bonds.size()); }

    int heavy_degree(int idx) const {
        int d = 0;
        for (const auto& b : bonds)
            if (b.i == idx || b.j == idx) ++d;
        return d;
    }

    double bond_order_sum(int idx) const {
        double s = 0.0;
        for (const auto& b : bonds)
            if (b.i == idx || b.j == idx) s += order_value(b.order);
        return s;
    }
};

/// Ring membership per atom: an atom is in a ring iff it touches a bond that
/// lies on some cycle, i.e. a non-bridge edge (Tarjan lowlink).
inline std::vector<bool> ring_membership(const MolGraph& g) {
    const int n = g.atom_count();
    std::vector<std::vector<std::pair<int, int>>> adj(n);  // (neighbor, bond index)
    for (int bi = 0; bi < g.bond_count(); ++bi) {
        adj[g.bonds[bi].i].push_back({g.bonds[bi].j, bi});
        adj[g.bonds[bi].j].push_back({g.bonds[bi].i, bi});
    }
    std::vector<int> disc(n, -1), low(n, 0);
    std::vector<bool> bridge(g.bond_count(), false);
    int timer = 0;

    // Iterative DFS; the stack frame remembers which adjacency entry to resume at.
    struct Frame {
        int v;
        int parent_edge;
        std::size_t next;
    };
    for (int root = 0; root < n; ++root) {
        if (disc[root] != -1) continue;
        std::vector<Frame> stack{{root, -1, 0}};
        disc[root] = low[root] = timer++;
        while (!stack.empty()) {
            Frame& f = stack.back();
            if (f.next < adj[f.v].size()) {
                auto [to, edge] = adj[f.v][f.next++];
                if (edge == f.parent_edge) continue;
                if (disc[to] == -1) {
                    disc[to] = low[to] = timer++;
                    stack.push_back({to, edge, 0});
                } else {
                    low[f.v] = std::min(low[f.v], disc[to]);
                }
            } else {
                stack.pop_back();
                if (!stack.empty()) {
                    Frame& p = stack.back();
                    low[p.v] = std::min(low[p.v], low[f.v]);
                    if (low[f.v] > disc[p.v]) bridge[f.parent_edge] = true;
                }
            }
        }
    }

    std::vector<bool> in_ring(n, false);
    for (int bi = 0; bi < g.bond_count(); ++bi) {
        if (!bridge[bi]) {
            in_ring[g.bonds[bi].i] = true;
            in_ring[g.bonds[bi].j] = true;
        }
    }
    return in_ring;
}

}  // namespace molq
