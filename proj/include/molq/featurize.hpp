#pragma once

#include <algorithm>
#include <vector>

#include "molq/graph.hpp"

namespace molq {

inline constexpr int kFeatInp = 28;

// Node feature row layout (28 columns):
//   [0..9]   element one-hot {C,N,O,F,P,S,Cl,Br,I,other}
//   [10..15] heavy-atom degree one-hot 0..5 (6+ clamps to 5)
//   [16..20] formal charge one-hot -2..+2 (clamped)
//   [21]     aromatic flag
//   [22]     ring-membership flag
//   [23..27] hydrogen count one-hot 0..4 (5+ clamps to 4)

inline int element_slot(Element e) {
    switch (e) {
        case Element::C: return 0;
        case Element::N: return 1;
        case Element::O: return 2;
        case Element::F: return 3;
        case Element::P: return 4;
        case Element::S: return 5;
        case Element::Cl: return 6;
        case Element::Br: return 7;
        case Element::I: return 8;
        default: return 9;
    }
}

/// Padded numeric encoding of a molecular graph: node features X, symmetric
/// adjacency A with unit self-loops on real nodes, and a {0,1} node mask.
struct GraphTensor {
    std::vector<double> x;     // kMaxAtoms x kFeatInp, row-major
    std::vector<double> adj;   // kMaxAtoms x kMaxAtoms
    std::vector<double> mask;  // kMaxAtoms

    GraphTensor()
        : x(static_cast<std::size_t>(kMaxAtoms) * kFeatInp, 0.0),
          adj(static_cast<std::size_t>(kMaxAtoms) * kMaxAtoms, 0.0),
          mask(kMaxAtoms, 0.0) {}

    double& x_at(int i, int j) { return x[static_cast<std::size_t>(i) * kFeatInp + j]; }
    double x_at(int i, int j) const { return x[static_cast<std::size_t>(i) * kFeatInp + j]; }
    double& a_at(int i, int j) { return adj[static_cast<std::size_t>(i) * kMaxAtoms + j]; }
    double a_at(int i, int j) const { return adj[static_cast<std::size_t>(i) * kMaxAtoms + j]; }

    int real_count() const {
        int n = 0;
        for (double m : mask) n += m != 0.0 ? 1 : 0;
        return n;
    }
};

inline GraphTensor featurize(const MolGraph& g) {
    GraphTensor gt;
    const int n = g.atom_count();
    const auto in_ring = ring_membership(g);
    for (int i = 0; i < n; ++i) {
        const Atom& a = g.atoms[i];
        gt.x_at(i, element_slot(a.element)) = 1.0;
        gt.x_at(i, 10 + std::min(g.heavy_degree(i), 5)) = 1.0;
        gt.x_at(i, 16 + std::clamp(a.formal_charge, -2, 2) + 2) = 1.0;
        if (a.aromatic) gt.x_at(i, 21) = 1.0;
        if (in_ring[i]) gt.x_at(i, 22) = 1.0;
        gt.x_at(i, 23 + std::min(a.hydrogens, 4)) = 1.0;
        gt.a_at(i, i) = 1.0;
        gt.mask[i] = 1.0;
    }
    for (const auto& b : g.bonds) {
        gt.a_at(b.i, b.j) = 1.0;
        gt.a_at(b.j, b.i) = 1.0;
    }
    return gt;
}

/// Reorders the padded tensor by `perm` (perm[i] = source index of new row i),
/// permuting X rows, A rows and columns, and the mask together.
inline GraphTensor permute_nodes(const GraphTensor& gt, const std::vector<int>& perm) {
    GraphTensor out;
    for (int i = 0; i < kMaxAtoms; ++i) {
        const int src = perm[i];
        out.mask[i] = gt.mask[src];
        for (int j = 0; j < kFeatInp; ++j) out.x_at(i, j) = gt.x_at(src, j);
        for (int j = 0; j < kMaxAtoms; ++j) out.a_at(i, j) = gt.a_at(src, perm[j]);
    }
    return out;
}

/// Dense form restricted to the real nodes (gathered in mask order). The
/// model runs on this; zero-padded rows never contribute, so dropping them
/// is exact and much cheaper than carrying 75x75 matrices around.
struct CompactGraph {
    int n = 0;
    std::vector<double> x;    // n x kFeatInp
    std::vector<double> adj;  // n x n, self-loops included
};

inline CompactGraph compact(const GraphTensor& gt) {
    CompactGraph cg;
    std::vector<int> real;
    for (int i = 0; i < kMaxAtoms; ++i)
        if (gt.mask[i] != 0.0) real.push_back(i);
    cg.n = static_cast<int>(real.size());
    cg.x.resize(static_cast<std::size_t>(cg.n) * kFeatInp);
    cg.adj.resize(static_cast<std::size_t>(cg.n) * cg.n);
    for (int i = 0; i < cg.n; ++i) {
        for (int j = 0; j < kFeatInp; ++j)
            cg.x[static_cast<std::size_t>(i) * kFeatInp + j] = gt.x_at(real[i], j);
        for (int j = 0; j < cg.n; ++j)
            cg.adj[static_cast<std::size_t>(i) * cg.n + j] = gt.a_at(real[i], real[j]);
    }
    return cg;
}

}  // namespace molq
