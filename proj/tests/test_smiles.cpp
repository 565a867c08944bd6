#include <catch2/catch_amalgamated.hpp>

#include <numeric>
#include <set>

#include "molq/datagen.hpp"
#include "molq/dataset.hpp"
#include "molq/featurize.hpp"
#include "molq/rng.hpp"
#include "molq/smiles.hpp"

using namespace molq;

TEST_CASE("ethanol: atoms, bonds, implicit hydrogens") {
    auto g = parse_smiles("CCO");
    REQUIRE(g.atom_count() == 3);
    CHECK(g.atoms[0].element == Element::C);
    CHECK(g.atoms[1].element == Element::C);
    CHECK(g.atoms[2].element == Element::O);
    REQUIRE(g.bond_count() == 2);
    CHECK(g.bonds[0].order == BondOrder::Single);
    CHECK(g.bonds[1].order == BondOrder::Single);
    CHECK(g.atoms[0].hydrogens == 3);
    CHECK(g.atoms[1].hydrogens == 2);
    CHECK(g.atoms[2].hydrogens == 1);
}

TEST_CASE("benzene: one aromatic ring") {
    auto g = parse_smiles("c1ccccc1");
    REQUIRE(g.atom_count() == 6);
    REQUIRE(g.bond_count() == 6);
    for (const auto& a : g.atoms) {
        CHECK(a.element == Element::C);
        CHECK(a.aromatic);
        CHECK(a.hydrogens == 1);
    }
    for (const auto& b : g.bonds) CHECK(b.order == BondOrder::Aromatic);
    auto rings = ring_membership(g);
    for (bool r : rings) CHECK(r);
}

TEST_CASE("branching: isobutane center has degree 3") {
    auto g = parse_smiles("CC(C)C");
    REQUIRE(g.atom_count() == 4);
    CHECK(g.heavy_degree(1) == 3);
    CHECK(g.atoms[1].hydrogens == 1);
}

TEST_CASE("bond symbols, rings, brackets") {
    auto co2 = parse_smiles("O=C=O");
    CHECK(co2.atoms[1].hydrogens == 0);
    CHECK(co2.bond_order_sum(1) == Catch::Approx(4.0));

    auto hcn = parse_smiles("C#N");
    CHECK(hcn.atoms[0].hydrogens == 1);
    CHECK(hcn.atoms[1].hydrogens == 0);

    auto ring = parse_smiles("C1CCC1");
    CHECK(ring.bond_count() == 4);
    auto flags = ring_membership(ring);
    CHECK(std::count(flags.begin(), flags.end(), true) == 4);

    auto ammonium = parse_smiles("[NH4+]");
    CHECK(ammonium.atoms[0].formal_charge == 1);
    CHECK(ammonium.atoms[0].hydrogens == 4);

    auto oxide = parse_smiles("[O-]");
    CHECK(oxide.atoms[0].formal_charge == -1);

    auto doubly = parse_smiles("[O-2]");
    CHECK(doubly.atoms[0].formal_charge == -2);

    auto ring_double = parse_smiles("C=1CCCC=1");
    CHECK(ring_double.bonds.back().order == BondOrder::Double);

    auto chloride = parse_smiles("ClCBr");
    CHECK(chloride.atoms[0].element == Element::Cl);
    CHECK(chloride.atoms[2].element == Element::Br);
}

TEST_CASE("parse errors") {
    CHECK_THROWS_AS(parse_smiles("C1CC"), SyntaxError);   // unmatched ring closure
    CHECK_THROWS_AS(parse_smiles("CC("), SyntaxError);    // unclosed branch
    CHECK_THROWS_AS(parse_smiles("CC)"), SyntaxError);    // unmatched ')'
    CHECK_THROWS_AS(parse_smiles("(C)"), SyntaxError);    // branch before any atom
    CHECK_THROWS_AS(parse_smiles("C="), SyntaxError);     // dangling bond
    CHECK_THROWS_AS(parse_smiles("C=#C"), SyntaxError);   // doubled bond symbol
    CHECK_THROWS_AS(parse_smiles("X"), SyntaxError);      // unknown element
    CHECK_THROWS_AS(parse_smiles("%11CC"), SyntaxError);  // two-digit closures unsupported
    CHECK_THROWS_AS(parse_smiles("C11"), SyntaxError);    // self closure
    CHECK_THROWS_AS(parse_smiles("C1C1"), SyntaxError);   // duplicate bond
    CHECK_THROWS_AS(parse_smiles("C=1CCCC-1"), SyntaxError);  // conflicting ring bond order
    CHECK_THROWS_AS(parse_smiles(""), SyntaxError);
    CHECK_THROWS_AS(parse_smiles("[C"), SyntaxError);
    CHECK_THROWS_AS(parse_smiles("CC.CC"), SyntaxError);  // disconnected components unsupported

    CHECK_THROWS_AS(parse_smiles("C(C)(C)(C)(C)C"), ValenceError);
    CHECK_THROWS_AS(parse_smiles("O(C)(C)C"), ValenceError);
    CHECK_THROWS_AS(parse_smiles("N(=O)=O"), ValenceError);  // sum 4 > 3 in this subset

    std::string big(kMaxAtoms + 1, 'C');
    CHECK_THROWS_AS(parse_smiles(big), SizeError);
    std::string max(kMaxAtoms, 'C');
    CHECK_NOTHROW(parse_smiles(max));
}

TEST_CASE("featurize: ethanol feature rows against the layout") {
    auto gt = featurize(parse_smiles("CCO"));

    // atom 0: carbon, degree 1, charge 0, 3 hydrogens
    std::set<int> expected{0, 10 + 1, 16 + 2, 23 + 3};
    for (int j = 0; j < kFeatInp; ++j)
        CHECK(gt.x_at(0, j) == (expected.count(j) ? 1.0 : 0.0));

    // atom 2: oxygen, degree 1, charge 0, 1 hydrogen
    std::set<int> expected_o{2, 10 + 1, 16 + 2, 23 + 1};
    for (int j = 0; j < kFeatInp; ++j)
        CHECK(gt.x_at(2, j) == (expected_o.count(j) ? 1.0 : 0.0));

    // chain adjacency with self-loops
    const double a[3][3] = {{1, 1, 0}, {1, 1, 1}, {0, 1, 1}};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) CHECK(gt.a_at(i, j) == a[i][j]);

    for (int i = 0; i < kMaxAtoms; ++i) CHECK(gt.mask[i] == (i < 3 ? 1.0 : 0.0));

    // padding stays zero
    for (int i = 3; i < kMaxAtoms; ++i) {
        for (int j = 0; j < kFeatInp; ++j) CHECK(gt.x_at(i, j) == 0.0);
        for (int j = 0; j < kMaxAtoms; ++j) {
            CHECK(gt.a_at(i, j) == 0.0);
            CHECK(gt.a_at(j, i) == 0.0);
        }
    }
}

TEST_CASE("featurize: aromatic and ring flags") {
    auto gt = featurize(parse_smiles("c1ccccc1"));
    for (int i = 0; i < 6; ++i) {
        CHECK(gt.x_at(i, 21) == 1.0);
        CHECK(gt.x_at(i, 22) == 1.0);
        CHECK(gt.x_at(i, 10 + 2) == 1.0);
    }
    auto chain = featurize(parse_smiles("CCO"));
    for (int i = 0; i < 3; ++i) {
        CHECK(chain.x_at(i, 21) == 0.0);
        CHECK(chain.x_at(i, 22) == 0.0);
    }
}

TEST_CASE("featurize is deterministic") {
    auto a = featurize(parse_smiles("CC(=O)NC1CC1"));
    auto b = featurize(parse_smiles("CC(=O)NC1CC1"));
    CHECK(a.x == b.x);
    CHECK(a.adj == b.adj);
    CHECK(a.mask == b.mask);
}

TEST_CASE("relabeling equivariance: rewritten SMILES permute the tensor") {
    Rng rng(2024);
    for (int trial = 0; trial < 50; ++trial) {
        auto mol = detail::grow_molecule(4 + static_cast<int>(rng.index(16)), rng);
        const int n = static_cast<int>(mol.elements.size());

        std::vector<int> order_a, order_b;
        auto s_a = detail::write_smiles(mol, 0, &order_a);
        auto s_b = detail::write_smiles(mol, static_cast<int>(rng.index(n)), &order_b);

        auto gt_a = featurize(parse_smiles(s_a));
        auto gt_b = featurize(parse_smiles(s_b));

        // position of each original atom in writing order A
        std::vector<int> pos_a(n);
        for (int k = 0; k < n; ++k) pos_a[order_a[k]] = k;
        std::vector<int> perm(kMaxAtoms);
        std::iota(perm.begin(), perm.end(), 0);
        for (int k = 0; k < n; ++k) perm[k] = pos_a[order_b[k]];

        auto permuted = permute_nodes(gt_a, perm);
        REQUIRE(permuted.x == gt_b.x);
        REQUIRE(permuted.adj == gt_b.adj);
        REQUIRE(permuted.mask == gt_b.mask);
    }
}

TEST_CASE("dataset file round trip with comments") {
    std::vector<LabeledRecord> records;
    for (int i = 0; i < 5; ++i) {
        LabeledRecord r;
        r.id = i;
        r.smiles = "CC" + std::string(i, 'C');
        r.label = 0.125 * i - 1.0;
        r.clean_label = r.label;
        records.push_back(r);
    }
    const std::string path = "dataset_roundtrip.tsv";
    write_dataset(path, records, "test corpus");
    auto back = read_dataset(path);
    REQUIRE(back.size() == records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        CHECK(back[i].smiles == records[i].smiles);
        CHECK(back[i].label == records[i].label);
        CHECK(back[i].id == static_cast<int>(i));
    }
    std::remove(path.c_str());

    CHECK_THROWS_AS(read_dataset("no_such_file.tsv"), IoError);
}

TEST_CASE("sidecar round trip") {
    std::vector<LabeledRecord> records(3);
    for (int i = 0; i < 3; ++i) {
        records[i].id = i;
        records[i].smiles = "C";
        records[i].clean_label = 0.3 * i;
    }
    records[1].corrupted = true;
    records[1].label = 0.0;
    const std::string path = "sidecar_roundtrip.csv";
    write_sidecar(path, records);

    std::vector<LabeledRecord> fresh(3);
    for (int i = 0; i < 3; ++i) fresh[i].id = i;
    read_sidecar(path, fresh);
    CHECK(fresh[1].corrupted);
    CHECK_FALSE(fresh[0].corrupted);
    CHECK(fresh[2].clean_label == records[2].clean_label);
    std::remove(path.c_str());
}
