#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <numeric>

#include "molq/checkpoint.hpp"
#include "molq/datagen.hpp"
#include "molq/featurize.hpp"
#include "molq/model.hpp"
#include "molq/smiles.hpp"

using namespace molq;

namespace {

TensorPtr random_tensor(int r, int c, Rng& rng, double scale = 1.0, bool rg = false) {
    auto t = tensor(r, c, rg);
    for (auto& v : t->value) v = scale * rng.uniform(-1.0, 1.0);
    return t;
}

TensorPtr ones(int r, int c) {
    auto t = tensor(r, c);
    std::fill(t->value.begin(), t->value.end(), 1.0);
    return t;
}

// Brute-force evaluation of the K-head attention update with explicit loops,
// independent of the tensor-op implementation.
std::vector<double> reference_attention(const TensorPtr& h, const LayerParams& layer,
                                        const TensorPtr& adj) {
    const int n = h->rows, f = h->cols;
    const int k_heads = static_cast<int>(layer.heads.size());
    std::vector<double> concat(static_cast<std::size_t>(n) * k_heads * f, 0.0);
    for (int k = 0; k < k_heads; ++k) {
        std::vector<double> p(static_cast<std::size_t>(n) * f, 0.0);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < f; ++j)
                for (int q = 0; q < f; ++q) p[i * f + j] += h->at(i, q) * layer.heads[k].w->at(q, j);
        for (int i = 0; i < n; ++i) {
            std::vector<double> agg(f, 0.0);
            for (int j = 0; j < n; ++j) {
                if (adj->at(i, j) == 0.0) continue;
                double score = 0.0;
                for (int a = 0; a < f; ++a)
                    for (int b = 0; b < f; ++b)
                        score += p[i * f + a] * layer.heads[k].c->at(a, b) * p[j * f + b];
                const double alpha = std::tanh(score) * adj->at(i, j);
                for (int a = 0; a < f; ++a) agg[a] += alpha * p[j * f + a];
            }
            for (int a = 0; a < f; ++a)
                concat[static_cast<std::size_t>(i) * k_heads * f + k * f + a] = std::max(0.0, agg[a]);
        }
    }
    std::vector<double> out(static_cast<std::size_t>(n) * f, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < f; ++j)
            for (int q = 0; q < k_heads * f; ++q)
                out[i * f + j] += concat[static_cast<std::size_t>(i) * k_heads * f + q] * layer.w_o->at(q, j);
    return out;
}

EncodedMol encode_smiles(const std::string& s) { return encode(featurize(parse_smiles(s))); }

}  // namespace

TEST_CASE("gcn_plain basics") {
    Rng rng(1);
    auto h = random_tensor(3, 4, rng);
    auto a_id = identity(3);
    auto w_id = identity(4);

    auto out = gcn_plain(h, w_id, a_id);
    for (int i = 0; i < h->size(); ++i)
        CHECK(out->value[i] == std::max(0.0, h->value[i]));

    auto zero = tensor(3, 4);
    auto out0 = gcn_plain(zero, random_tensor(4, 4, rng), a_id);
    for (double v : out0->value) CHECK(v == 0.0);

    // 3-node chain with self-loops, one-hot node features, W = I:
    // middle row aggregates all three rows.
    auto chain = tensor(3, 3, {1, 1, 0, 1, 1, 1, 0, 1, 1});
    auto onehot = identity(3);
    auto res = gcn_plain(onehot, identity(3), chain);
    CHECK(res->at(1, 0) == 1.0);
    CHECK(res->at(1, 1) == 1.0);
    CHECK(res->at(1, 2) == 1.0);
    CHECK(res->at(0, 2) == 0.0);
}

TEST_CASE("attention coefficients: zero form, range, symmetry") {
    Rng rng(2);
    auto h = random_tensor(3, 4, rng);
    auto adj = tensor(3, 3, {1, 1, 0, 1, 1, 1, 0, 1, 1});
    auto w = random_tensor(4, 4, rng);

    auto alpha0 = attention_coefficients(h, w, tensor(4, 4), adj);
    for (double v : alpha0->value) CHECK(v == 0.0);

    auto single = attention_coefficients(random_tensor(1, 4, rng, 3.0), w, random_tensor(4, 4, rng), ones(1, 1));
    REQUIRE(single->size() == 1);
    CHECK(std::abs(single->value[0]) <= 1.0);

    // symmetric bilinear form => symmetric coefficients
    auto c_sym = tensor(4, 4);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j <= i; ++j) {
            double v = rng.uniform(-1, 1);
            c_sym->at(i, j) = v;
            c_sym->at(j, i) = v;
        }
    auto two = random_tensor(2, 4, rng);
    auto alpha = attention_coefficients(two, w, c_sym, ones(2, 2));
    CHECK(alpha->at(0, 1) == Catch::Approx(alpha->at(1, 0)).margin(1e-14));

    for (double v : attention_coefficients(h, w, random_tensor(4, 4, rng, 2.0), adj)->value) {
        CHECK(v <= 1.0);
        CHECK(v >= -1.0);
    }
}

TEST_CASE("gcn_attention with alpha forced to 1 and W_O = I reduces to gcn_plain") {
    Rng rng(3);
    auto h = random_tensor(3, 4, rng);
    auto adj = tensor(3, 3, {1, 1, 0, 1, 1, 1, 0, 1, 1});

    LayerParams layer;
    layer.heads.push_back({random_tensor(4, 4, rng), random_tensor(4, 4, rng)});
    layer.w_o = identity(4);

    std::vector<TensorPtr> alpha_override{adj};
    auto attn = gcn_attention(h, layer, adj, nullptr, &alpha_override);
    auto plain = gcn_plain(h, layer.heads[0].w, adj);
    for (int i = 0; i < attn->size(); ++i)
        CHECK(attn->value[i] == Catch::Approx(plain->value[i]).margin(1e-12));
}

TEST_CASE("isolated node output depends only on its own features") {
    Rng rng(4);
    LayerParams layer;
    for (int k = 0; k < 2; ++k)
        layer.heads.push_back({random_tensor(4, 4, rng), random_tensor(4, 4, rng)});
    layer.w_o = random_tensor(8, 4, rng);

    auto adj = identity(2);  // two isolated nodes, self-loops only
    auto h1 = random_tensor(2, 4, rng);
    auto h2 = tensor(2, 4);
    h2->value = h1->value;
    for (int j = 0; j < 4; ++j) h2->at(1, j) = rng.uniform(-2, 2);  // disturb the other node

    auto o1 = gcn_attention(h1, layer, adj);
    auto o2 = gcn_attention(h2, layer, adj);
    for (int j = 0; j < 4; ++j) CHECK(o1->at(0, j) == Catch::Approx(o2->at(0, j)).margin(1e-14));
}

TEST_CASE("gcn_attention matches brute-force evaluation on a 3-node path") {
    Rng rng(5);
    auto h = random_tensor(3, 2, rng);
    auto adj = tensor(3, 3, {1, 1, 0, 1, 1, 1, 0, 1, 1});
    LayerParams layer;
    for (int k = 0; k < 2; ++k)
        layer.heads.push_back({random_tensor(2, 2, rng), random_tensor(2, 2, rng)});
    layer.w_o = random_tensor(4, 2, rng);

    auto got = gcn_attention(h, layer, adj);
    auto want = reference_attention(h, layer, adj);
    REQUIRE(got->value.size() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i)
        CHECK(got->value[i] == Catch::Approx(want[i]).margin(1e-12));
}

TEST_CASE("gated skip: saturated, closed, and neutral gates") {
    Rng rng(6);
    auto h_prev = random_tensor(3, 4, rng);
    auto h_tilde = random_tensor(3, 4, rng);

    LayerParams layer;
    layer.u_r1 = tensor(4, 4);
    layer.u_r2 = tensor(4, 4);
    layer.b_r = tensor(1, 4);

    std::fill(layer.b_r->value.begin(), layer.b_r->value.end(), 50.0);
    auto open = gated_skip(h_prev, h_tilde, layer);
    for (int i = 0; i < open->size(); ++i)
        CHECK(open->value[i] == Catch::Approx(h_tilde->value[i]).margin(1e-9));

    std::fill(layer.b_r->value.begin(), layer.b_r->value.end(), -50.0);
    auto closed = gated_skip(h_prev, h_tilde, layer);
    for (int i = 0; i < closed->size(); ++i)
        CHECK(closed->value[i] == Catch::Approx(h_prev->value[i]).margin(1e-9));

    std::fill(layer.b_r->value.begin(), layer.b_r->value.end(), 0.0);
    auto half = gated_skip(h_prev, h_tilde, layer);
    for (int i = 0; i < half->size(); ++i)
        CHECK(half->value[i] == Catch::Approx(0.5 * (h_prev->value[i] + h_tilde->value[i])).margin(1e-12));

    CHECK_THROWS_AS(gated_skip(h_prev, tensor(2, 4), layer), ShapeError);
}

TEST_CASE("concrete dropout: off-switch, expectation, determinism, gradient") {
    Rng rng(7);
    auto h = random_tensor(5, 8, rng);

    auto rho_off = scalar(-50.0);
    Rng stream(1);
    auto kept = concrete_dropout(h, rho_off, kConcreteTemperature, stream);
    for (int i = 0; i < h->size(); ++i)
        CHECK(kept->value[i] == Catch::Approx(h->value[i]).margin(1e-9));

    // E[z] = 1 - p within Monte-Carlo error
    const double p = 0.3;
    auto rho = scalar(std::log(p / (1 - p)));
    auto one_cell = ones(1, 1);
    Rng mc(12345);
    double mean_z = 0.0;
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) {
        auto out = concrete_dropout(one_cell, rho, kConcreteTemperature, mc);
        mean_z += out->value[0] * (1 - p);  // out = z/(1-p)
    }
    mean_z /= draws;
    CHECK(mean_z == Catch::Approx(1 - p).margin(0.01));

    // identical seeds give bit-identical outputs
    Rng s1(99), s2(99);
    auto a = concrete_dropout(h, rho, kConcreteTemperature, s1);
    auto b = concrete_dropout(h, rho, kConcreteTemperature, s2);
    CHECK(a->value == b->value);

    // differentiable in rho under a fixed draw stream
    auto rho_g = scalar(std::log(0.2 / 0.8), true);
    auto build = [&](Tape* t) {
        Rng fixed(4242);
        auto dropped = concrete_dropout(h, rho_g, kConcreteTemperature, fixed, t);
        return sum_all(hadamard(dropped, dropped, t), t);
    };
    Tape tape;
    auto loss = build(&tape);
    rho_g->zero_grad();
    tape.backward(loss);
    std::vector<double> analytic = rho_g->grad;
    auto f = [&]() { return build(nullptr)->value[0]; };
    CHECK(finite_diff_check(f, rho_g, analytic, 1e-6) < 1e-6);
}

TEST_CASE("readout: single atom, permutation invariance, zero case") {
    Rng rng(8);
    auto mlp_w = random_tensor(4, 6, rng);
    auto mlp_b = random_tensor(1, 6, rng);

    auto row = random_tensor(1, 4, rng);
    auto zg = readout(row, ones(1, 1), mlp_w, mlp_b);
    for (int j = 0; j < 6; ++j) {
        double pre = mlp_b->value[j];
        for (int q = 0; q < 4; ++q) pre += row->value[q] * mlp_w->at(q, j);
        CHECK(zg->value[j] == Catch::Approx(std::max(0.0, pre)).margin(1e-14));
    }

    auto h = random_tensor(5, 4, rng);
    auto perm = tensor(5, 4);
    const int order[5] = {3, 0, 4, 2, 1};
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 4; ++j) perm->at(i, j) = h->at(order[i], j);
    auto za = readout(h, ones(5, 1), mlp_w, mlp_b);
    auto zb = readout(perm, ones(5, 1), mlp_w, mlp_b);
    for (int j = 0; j < 6; ++j) CHECK(za->value[j] == Catch::Approx(zb->value[j]).margin(1e-12));

    auto zero_out = readout(tensor(5, 4), ones(5, 1), mlp_w, tensor(1, 6));
    for (double v : zero_out->value) CHECK(v == 0.0);
}

TEST_CASE("forward: shapes and reproducibility") {
    auto params = init_model(Task::Regression, 17);
    auto mol = encode_smiles("CC(=O)NC1CC1");

    auto d1 = forward(mol, params, Mode::Deterministic, nullptr);
    auto d2 = forward(mol, params, Mode::Deterministic, nullptr);
    REQUIRE(d1->rows == 1);
    REQUIRE(d1->cols == 2);
    CHECK(d1->value == d2->value);

    Rng r1(777), r2(777);
    auto s1 = forward(mol, params, Mode::Stochastic, &r1);
    auto s2 = forward(mol, params, Mode::Stochastic, &r2);
    CHECK(s1->value == s2->value);

    Rng r3(778);
    auto s3 = forward(mol, params, Mode::Stochastic, &r3);
    CHECK(s1->value != s3->value);
}

TEST_CASE("with all dropout logits at -50 stochastic matches deterministic") {
    auto params = init_model(Task::Regression, 18);
    for (auto& [name, t] : params.tensors())
        if (name.find("rho") != std::string::npos) t->value[0] = -50.0;
    auto mol = encode_smiles("CCOC(=O)C1CCC1N");
    auto det = forward(mol, params, Mode::Deterministic, nullptr);
    Rng rng(5);
    auto sto = forward(mol, params, Mode::Stochastic, &rng);
    for (int i = 0; i < det->size(); ++i)
        CHECK(sto->value[i] == Catch::Approx(det->value[i]).margin(1e-9));
}

TEST_CASE("node permutation invariance of the full forward pass") {
    auto params = init_model(Task::Regression, 19);
    Rng rng(55);
    for (int trial = 0; trial < 20; ++trial) {
        auto mol_graph = detail::grow_molecule(4 + static_cast<int>(rng.index(18)), rng);
        auto gt = featurize(parse_smiles(detail::write_smiles(mol_graph, 0)));

        std::vector<int> perm(kMaxAtoms);
        std::iota(perm.begin(), perm.end(), 0);
        for (int i = kMaxAtoms - 1; i > 0; --i)
            std::swap(perm[i], perm[rng.index(static_cast<std::size_t>(i) + 1)]);
        auto permuted = permute_nodes(gt, perm);

        auto a = forward(gt, params, Mode::Deterministic, nullptr);
        auto b = forward(permuted, params, Mode::Deterministic, nullptr);
        CHECK(std::abs(a->value[0] - b->value[0]) < 1e-9);
        CHECK(std::abs(a->value[1] - b->value[1]) < 1e-9);
    }
}

TEST_CASE("padding placement is neutral") {
    auto params = init_model(Task::Classification, 20);
    auto gt = featurize(parse_smiles("CCO"));

    // scatter the three real atoms into high padded slots
    std::vector<int> perm(kMaxAtoms);
    std::iota(perm.begin(), perm.end(), 0);
    std::swap(perm[0], perm[10]);
    std::swap(perm[1], perm[40]);
    std::swap(perm[2], perm[74]);
    auto scattered = permute_nodes(gt, perm);

    auto a = forward(gt, params, Mode::Deterministic, nullptr);
    auto b = forward(scattered, params, Mode::Deterministic, nullptr);
    CHECK(a->value == b->value);
}

TEST_CASE("full-model gradients match finite differences") {
    auto params = init_model(Task::Regression, 21);
    auto mol = encode_smiles("CC(C)CC1=CC=CC1");

    auto loss_of = [&](Tape* tape, Mode mode, Rng* rng) {
        auto out = forward(mol, params, mode, rng, tape);
        return sum_all(hadamard(out, out, tape), tape);
    };

    // Probed tensors aggregate many paths before any dropout column, keeping
    // analytic entries clear of the finite-difference noise floor.
    const std::vector<TensorPtr> probes = {params.w_in, params.layers[0].heads[1].w,
                                           params.layers[1].heads[2].c,
                                           params.layers[2].heads[0].c, params.layers[0].rho};
    for (const auto& theta : probes) {
        SECTION("deterministic theta " + shape_str(*theta)) {
            Tape tape;
            auto loss = loss_of(&tape, Mode::Deterministic, nullptr);
            for (auto& [n, t] : params.tensors()) t->zero_grad();
            tape.backward(loss);
            theta->ensure_grad();
            std::vector<double> analytic = theta->grad;
            auto f = [&]() { return loss_of(nullptr, Mode::Deterministic, nullptr)->value[0]; };
            CHECK(finite_diff_check(f, theta, analytic, 1e-6) < 1e-4);
        }
        SECTION("stochastic theta " + shape_str(*theta)) {
            Tape tape;
            Rng rng(31);
            auto loss = loss_of(&tape, Mode::Stochastic, &rng);
            for (auto& [n, t] : params.tensors()) t->zero_grad();
            tape.backward(loss);
            theta->ensure_grad();
            std::vector<double> analytic = theta->grad;
            auto f = [&]() {
                Rng reseeded(31);
                return loss_of(nullptr, Mode::Stochastic, &reseeded)->value[0];
            };
            CHECK(finite_diff_check(f, theta, analytic, 1e-6) < 1e-4);
        }
    }
}

TEST_CASE("checkpoint round trip preserves every value") {
    auto params = init_model(Task::Classification, 22);
    const std::string path = "ckpt_roundtrip.txt";
    save_checkpoint(path, params);
    auto loaded = load_checkpoint(path);
    CHECK(loaded.task == Task::Classification);
    auto a = params.tensors();
    auto b = loaded.tensors();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].first == b[i].first);
        CHECK(a[i].second->value == b[i].second->value);
    }
    std::remove(path.c_str());
}

TEST_CASE("checkpoint rejects foreign and truncated files") {
    {
        auto f = open_out("bad_header.txt");
        f << "something else\n";
    }
    CHECK_THROWS_AS(load_checkpoint("bad_header.txt"), IoError);
    std::remove("bad_header.txt");

    auto params = init_model(Task::Regression, 23);
    save_checkpoint("full.txt", params);
    {
        auto in = open_in("full.txt");
        std::string line;
        auto out = open_out("truncated.txt");
        for (int i = 0; i < 10 && std::getline(in, line); ++i) out << line << "\n";
    }
    CHECK_THROWS_AS(load_checkpoint("truncated.txt"), IoError);
    std::remove("full.txt");
    std::remove("truncated.txt");

    CHECK_THROWS_AS(load_checkpoint("missing_ckpt.txt"), IoError);
}
