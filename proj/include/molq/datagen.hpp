#pragma once

#include <algorithm>
#include <array>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "molq/dataset.hpp"
#include "molq/graph.hpp"
#include "molq/rng.hpp"
#include "molq/smiles.hpp"

namespace molq {

/// Deterministic atom-contribution target standing in for an analytic
/// property: sum of per-element terms plus aromatic and bond counts.
inline double surrogate_property(const MolGraph& g) {
    auto contribution = [](Element e) {
        switch (e) {
            case Element::C: return 0.2;
            case Element::N: return -0.3;
            case Element::O: return -0.4;
            case Element::F: return 0.1;
            case Element::P: return 0.2;
            case Element::S: return 0.4;
            case Element::Cl: return 0.6;
            case Element::Br: return 0.8;
            case Element::I: return 1.0;
            default: return 0.0;
        }
    };
    double v = 0.0;
    int aromatic = 0;
    for (const auto& a : g.atoms) {
        v += contribution(a.element);
        if (a.aromatic) ++aromatic;
    }
    return v + 0.1 * aromatic + 0.05 * g.bond_count();
}

/// label = clean_label + N(0, sigma^2); sigma = 0 leaves labels untouched.
inline void inject_noise(std::vector<LabeledRecord>& records, double sigma, Rng& rng) {
    if (sigma == 0.0) return;
    for (auto& r : records) r.label = r.clean_label + sigma * rng.normal();
}

/// Marks a seeded random floor(fraction*n) subset as corrupted: label := 0.
inline void inject_corruption(std::vector<LabeledRecord>& records, double fraction, Rng& rng) {
    const auto n = records.size();
    const auto k = static_cast<std::size_t>(fraction * static_cast<double>(n));
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    for (std::size_t i = 0; i < k; ++i) {
        auto& r = records[order[i]];
        r.label = 0.0;
        r.corrupted = true;
    }
}

/// Binary labels: 1 if clean_label > threshold, each flipped independently
/// with probability flip_rate.
inline void make_class_labels(std::vector<LabeledRecord>& records, double threshold,
                              double flip_rate, Rng& rng) {
    for (auto& r : records) {
        int label = r.clean_label > threshold ? 1 : 0;
        if (rng.uniform() < flip_rate) label = 1 - label;
        r.label = label;
    }
}

namespace detail {

struct GrownMol {
    std::vector<Element> elements;
    std::vector<int> free_valence;
    std::vector<Bond> bonds;

    std::vector<std::vector<std::pair<int, int>>> adjacency() const {
        std::vector<std::vector<std::pair<int, int>>> adj(elements.size());
        for (int bi = 0; bi < static_cast<int>(bonds.size()); ++bi) {
            adj[bonds[bi].i].push_back({bonds[bi].j, bi});
            adj[bonds[bi].j].push_back({bonds[bi].i, bi});
        }
        return adj;
    }
};

inline Element sample_element(Rng& rng) {
    const double u = rng.uniform();
    if (u < 0.62) return Element::C;
    if (u < 0.74) return Element::N;
    if (u < 0.86) return Element::O;
    if (u < 0.91) return Element::F;
    if (u < 0.95) return Element::S;
    if (u < 0.98) return Element::Cl;
    if (u < 0.99) return Element::Br;
    return Element::P;
}

inline int growth_valence(Element e) {
    switch (e) {
        case Element::C: return 4;
        case Element::N: return 3;
        case Element::O: return 2;
        case Element::S: return 2;
        case Element::P: return 3;
        default: return 1;  // halogens terminate chains
    }
}

inline GrownMol grow_molecule(int target_atoms, Rng& rng) {
    GrownMol mol;
    Element first = sample_element(rng);
    if (target_atoms > 1) {
        int guard = 0;
        while (growth_valence(first) < 2 && guard++ < 100) first = sample_element(rng);
    }
    mol.elements.push_back(first);
    mol.free_valence.push_back(growth_valence(first));

    while (static_cast<int>(mol.elements.size()) < target_atoms) {
        std::vector<int> parents;
        for (int i = 0; i < static_cast<int>(mol.elements.size()); ++i)
            if (mol.free_valence[i] >= 1) parents.push_back(i);
        if (parents.empty()) break;
        const int parent = parents[rng.index(parents.size())];

        Element e = sample_element(rng);
        // keep at least one growth point open while atoms remain to place
        const bool last = static_cast<int>(mol.elements.size()) == target_atoms - 1;
        if (!last) {
            int guard = 0;
            while (growth_valence(e) < 2 && mol.free_valence[parent] < 2 && guard++ < 10)
                e = sample_element(rng);
        }
        const int child = static_cast<int>(mol.elements.size());
        mol.elements.push_back(e);
        mol.free_valence.push_back(growth_valence(e));

        BondOrder order = BondOrder::Single;
        if (mol.free_valence[parent] >= 2 && mol.free_valence[child] >= 2 && rng.uniform() < 0.12)
            order = BondOrder::Double;
        const int cost = order == BondOrder::Double ? 2 : 1;
        mol.free_valence[parent] -= cost;
        mol.free_valence[child] -= cost;
        mol.bonds.push_back({parent, child, order});
    }

    // optional single ring closure between valence-free atoms at distance >= 2
    if (mol.elements.size() >= 3 && rng.uniform() < 0.35) {
        auto adj = mol.adjacency();
        std::vector<std::pair<int, int>> candidates;
        for (int i = 0; i < static_cast<int>(mol.elements.size()); ++i) {
            if (mol.free_valence[i] < 1) continue;
            for (int j = i + 1; j < static_cast<int>(mol.elements.size()); ++j) {
                if (mol.free_valence[j] < 1) continue;
                bool bonded = false;
                for (auto [to, bi] : adj[i]) bonded = bonded || to == j;
                if (!bonded) candidates.push_back({i, j});
            }
        }
        if (!candidates.empty()) {
            auto [i, j] = candidates[rng.index(candidates.size())];
            mol.free_valence[i] -= 1;
            mol.free_valence[j] -= 1;
            mol.bonds.push_back({i, j, BondOrder::Single});
        }
    }
    return mol;
}

/// Serializes the grown graph as SMILES via a DFS spanning tree from `root`;
/// non-tree edges become ring-closure digits. `visit_order[k]` is the
/// original atom index written at position k.
inline std::string write_smiles(const GrownMol& mol, int root, std::vector<int>* visit_order = nullptr) {
    const int n = static_cast<int>(mol.elements.size());
    auto adj = mol.adjacency();
    std::vector<bool> seen(n, false), edge_in_tree(mol.bonds.size(), false);
    std::vector<std::vector<int>> children(n);
    std::vector<int> parent_edge(n, -1);

    std::vector<int> stack{root};
    seen[root] = true;
    std::vector<int> dfs_order;
    while (!stack.empty()) {
        int v = stack.back();
        stack.pop_back();
        dfs_order.push_back(v);
        for (auto [to, bi] : adj[v]) {
            if (!seen[to]) {
                seen[to] = true;
                edge_in_tree[bi] = true;
                parent_edge[to] = bi;
                children[v].push_back(to);
                stack.push_back(to);
            }
        }
    }

    // assign closure digits to non-tree edges
    std::vector<std::vector<std::pair<int, BondOrder>>> closures(n);
    int digit = 1;
    for (int bi = 0; bi < static_cast<int>(mol.bonds.size()); ++bi) {
        if (edge_in_tree[bi]) continue;
        closures[mol.bonds[bi].i].push_back({digit, mol.bonds[bi].order});
        closures[mol.bonds[bi].j].push_back({digit, mol.bonds[bi].order});
        ++digit;
    }

    std::string out;
    std::set<int> opened;
    auto bond_symbol = [](BondOrder o) -> const char* {
        switch (o) {
            case BondOrder::Double: return "=";
            case BondOrder::Triple: return "#";
            default: return "";
        }
    };

    std::function<void(int)> emit = [&](int v) {
        if (visit_order != nullptr) visit_order->push_back(v);
        out += symbol(mol.elements[v]);
        for (auto [d, order] : closures[v]) {
            if (opened.insert(d).second) out += bond_symbol(order);
            out += static_cast<char>('0' + d);
        }
        for (std::size_t c = 0; c < children[v].size(); ++c) {
            const int child = children[v][c];
            const std::string sym = bond_symbol(mol.bonds[parent_edge[child]].order);
            if (c + 1 < children[v].size()) {
                out += "(" + sym;
                emit(child);
                out += ")";
            } else {
                out += sym;
                emit(child);
            }
        }
    };
    emit(root);
    return out;
}

}  // namespace detail

/// n random valence-respecting SMILES over the organic subset, built by
/// branched-chain growth with an optional single ring closure. Duplicate
/// strings are re-rolled (bounded retries) to keep the corpus distinct.
inline std::vector<std::string> generate_molecules(int n, Rng& rng, int max_atoms) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    long attempts_left = 40L * n + 100;
    while (static_cast<int>(out.size()) < n && attempts_left-- > 0) {
        const int lo = std::min(4, max_atoms);
        const int target = max_atoms <= 1 ? 1 : lo + static_cast<int>(rng.index(max_atoms - lo + 1));
        auto mol = detail::grow_molecule(target, rng);
        auto smiles = detail::write_smiles(mol, 0);
        if (seen.insert(smiles).second) out.push_back(std::move(smiles));
    }
    while (static_cast<int>(out.size()) < n)  // retry budget exhausted: allow repeats
        out.push_back(out[out.size() % std::max<std::size_t>(seen.size(), 1)]);
    return out;
}

/// Generated corpus with clean surrogate labels; label == clean_label until a
/// noise/corruption/classification transform is applied.
inline std::vector<LabeledRecord> build_corpus(int n, std::uint64_t seed, int max_atoms) {
    Rng rng(derive_seed(seed, 0xda7a));
    auto smiles = generate_molecules(n, rng, max_atoms);
    std::vector<LabeledRecord> records(smiles.size());
    for (std::size_t i = 0; i < smiles.size(); ++i) {
        records[i].id = static_cast<int>(i);
        records[i].smiles = smiles[i];
        records[i].clean_label = surrogate_property(parse_smiles(smiles[i]));
        records[i].label = records[i].clean_label;
    }
    return records;
}

/// Median of clean labels; default classification threshold.
inline double median_clean_label(const std::vector<LabeledRecord>& records) {
    std::vector<double> v;
    v.reserve(records.size());
    for (const auto& r : records) v.push_back(r.clean_label);
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace molq
