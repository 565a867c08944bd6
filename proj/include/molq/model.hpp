#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "molq/dataset.hpp"
#include "molq/featurize.hpp"
#include "molq/rng.hpp"
#include "molq/tensor.hpp"

namespace molq {

inline constexpr int kNodeDim = 32;        // F, node feature width inside the conv stack
inline constexpr int kHeads = 4;           // K, self-attention heads per layer
inline constexpr int kConvLayers = 3;      // L, augmented graph convolution layers
inline constexpr int kGraphDim = 256;      // d_G, readout width
inline constexpr int kHeadHidden = 256;    // hidden width of the property head
inline constexpr int kOutDim = 2;          // [y_hat, log sigma^2] or two class logits
inline constexpr double kConcreteTemperature = 0.1;

struct AttentionHead {
    TensorPtr w;  // F x F node projection
    TensorPtr c;  // F x F bilinear attention form
};

/// One augmented graph convolution layer: K attention heads, their output
/// projection, gate parameters, and the layer's learnable dropout logit.
struct LayerParams {
    std::vector<AttentionHead> heads;
    TensorPtr w_o;   // K*F x F
    TensorPtr u_r1;  // F x F, gate weight on the layer input
    TensorPtr u_r2;  // F x F, gate weight on the attention output
    TensorPtr b_r;   // 1 x F
    TensorPtr rho;   // 1 x 1 dropout logit, p = sigmoid(rho)
};

struct ModelParams {
    Task task = Task::Regression;

    TensorPtr w_in;  // kFeatInp x F input projection, no bias
    std::vector<LayerParams> layers;

    TensorPtr mlp1_w;  // F x d_G readout transform
    TensorPtr mlp1_b;  // 1 x d_G
    TensorPtr mlp1_rho;

    TensorPtr head1_w;  // d_G x 256
    TensorPtr head1_b;  // 1 x 256
    TensorPtr head1_rho;

    TensorPtr head2_w;  // 256 x kOutDim
    TensorPtr head2_b;  // 1 x kOutDim
    TensorPtr head2_rho;

    /// All trainable tensors in a stable order (checkpoint, Adam and
    /// gradient-clip order).
    std::vector<std::pair<std::string, TensorPtr>> tensors() const {
        std::vector<std::pair<std::string, TensorPtr>> out;
        out.emplace_back("w_in", w_in);
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const std::string p = "layer" + std::to_string(l) + ".";
            for (std::size_t k = 0; k < layers[l].heads.size(); ++k) {
                out.emplace_back(p + "head" + std::to_string(k) + ".w", layers[l].heads[k].w);
                out.emplace_back(p + "head" + std::to_string(k) + ".c", layers[l].heads[k].c);
            }
            out.emplace_back(p + "w_o", layers[l].w_o);
            out.emplace_back(p + "u_r1", layers[l].u_r1);
            out.emplace_back(p + "u_r2", layers[l].u_r2);
            out.emplace_back(p + "b_r", layers[l].b_r);
            out.emplace_back(p + "rho", layers[l].rho);
        }
        out.emplace_back("mlp1.w", mlp1_w);
        out.emplace_back("mlp1.b", mlp1_b);
        out.emplace_back("mlp1.rho", mlp1_rho);
        out.emplace_back("head1.w", head1_w);
        out.emplace_back("head1.b", head1_b);
        out.emplace_back("head1.rho", head1_rho);
        out.emplace_back("head2.w", head2_w);
        out.emplace_back("head2.b", head2_b);
        out.emplace_back("head2.rho", head2_rho);
        return out;
    }

    ModelParams clone() const {
        ModelParams c;
        c.task = task;
        auto copy = [](const TensorPtr& t) {
            auto n = tensor(t->rows, t->cols, t->requires_grad);
            n->value = t->value;
            return n;
        };
        c.w_in = copy(w_in);
        for (const auto& l : layers) {
            LayerParams lp;
            for (const auto& h : l.heads) lp.heads.push_back({copy(h.w), copy(h.c)});
            lp.w_o = copy(l.w_o);
            lp.u_r1 = copy(l.u_r1);
            lp.u_r2 = copy(l.u_r2);
            lp.b_r = copy(l.b_r);
            lp.rho = copy(l.rho);
            c.layers.push_back(std::move(lp));
        }
        c.mlp1_w = copy(mlp1_w);
        c.mlp1_b = copy(mlp1_b);
        c.mlp1_rho = copy(mlp1_rho);
        c.head1_w = copy(head1_w);
        c.head1_b = copy(head1_b);
        c.head1_rho = copy(head1_rho);
        c.head2_w = copy(head2_w);
        c.head2_b = copy(head2_b);
        c.head2_rho = copy(head2_rho);
        return c;
    }
};

namespace detail {

inline TensorPtr glorot(int rows, int cols, Rng& rng) {
    auto t = tensor(rows, cols, true);
    const double bound = std::sqrt(6.0 / (rows + cols));
    for (auto& v : t->value) v = rng.uniform(-bound, bound);
    return t;
}

inline TensorPtr zeros_param(int rows, int cols) { return tensor(rows, cols, true); }

inline TensorPtr dropout_logit(Rng& rng) {
    // start with p in [0.05, 0.1]
    const double p = rng.uniform(0.05, 0.1);
    auto t = tensor(1, 1, true);
    t->value[0] = std::log(p / (1.0 - p));
    return t;
}

}  // namespace detail

inline ModelParams init_model(Task task, std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0x1417));
    ModelParams p;
    p.task = task;
    p.w_in = detail::glorot(kFeatInp, kNodeDim, rng);
    for (int l = 0; l < kConvLayers; ++l) {
        LayerParams lp;
        for (int k = 0; k < kHeads; ++k)
            lp.heads.push_back({detail::glorot(kNodeDim, kNodeDim, rng), detail::glorot(kNodeDim, kNodeDim, rng)});
        lp.w_o = detail::glorot(kHeads * kNodeDim, kNodeDim, rng);
        lp.u_r1 = detail::glorot(kNodeDim, kNodeDim, rng);
        lp.u_r2 = detail::glorot(kNodeDim, kNodeDim, rng);
        lp.b_r = detail::zeros_param(1, kNodeDim);
        lp.rho = detail::dropout_logit(rng);
        p.layers.push_back(std::move(lp));
    }
    p.mlp1_w = detail::glorot(kNodeDim, kGraphDim, rng);
    p.mlp1_b = detail::zeros_param(1, kGraphDim);
    p.mlp1_rho = detail::dropout_logit(rng);
    p.head1_w = detail::glorot(kGraphDim, kHeadHidden, rng);
    p.head1_b = detail::zeros_param(1, kHeadHidden);
    p.head1_rho = detail::dropout_logit(rng);
    p.head2_w = detail::glorot(kHeadHidden, kOutDim, rng);
    p.head2_b = detail::zeros_param(1, kOutDim);  // keeps s0 = 0: unit initial variance
    p.head2_rho = detail::dropout_logit(rng);
    return p;
}

// ---- layer operations -------------------------------------------------------

/// Plain graph convolution, kept as the baseline op: ReLU(A H W).
inline TensorPtr gcn_plain(const TensorPtr& h, const TensorPtr& w, const TensorPtr& adj,
                           Tape* tape = nullptr) {
    return relu(matmul(matmul(adj, h, tape), w, tape), tape);
}

/// Attention coefficients from an already-projected node matrix P = H W_k:
/// alpha[i][j] = tanh(P_i C (P_j)^T) on edges of adj, 0 elsewhere.
inline TensorPtr attention_from_projection(const TensorPtr& p, const TensorPtr& c,
                                           const TensorPtr& adj, Tape* tape = nullptr) {
    auto scores = matmul(matmul(p, c, tape), transpose(p, tape), tape);
    return hadamard(tanh_ew(scores, tape), adj, tape);
}

inline TensorPtr attention_coefficients(const TensorPtr& h, const TensorPtr& w_k,
                                        const TensorPtr& c_k, const TensorPtr& adj,
                                        Tape* tape = nullptr) {
    return attention_from_projection(matmul(h, w_k, tape), c_k, adj, tape);
}

/// K-head self-attention update: per head ReLU((alpha ⊙ A) P_k), heads
/// concatenated column-wise and projected by W_O. `alpha_override` replaces
/// the computed coefficients (test hook).
inline TensorPtr gcn_attention(const TensorPtr& h, const LayerParams& layer, const TensorPtr& adj,
                               Tape* tape = nullptr,
                               const std::vector<TensorPtr>* alpha_override = nullptr) {
    std::vector<TensorPtr> heads;
    heads.reserve(layer.heads.size());
    for (std::size_t k = 0; k < layer.heads.size(); ++k) {
        auto p = matmul(h, layer.heads[k].w, tape);
        auto alpha = alpha_override != nullptr ? (*alpha_override)[k]
                                               : attention_from_projection(p, layer.heads[k].c, adj, tape);
        heads.push_back(relu(matmul(alpha, p, tape), tape));
    }
    return matmul(concat_cols(heads, tape), layer.w_o, tape);
}

/// Gated skip connection: r = sigmoid(H U1 + H~ U2 + b_r), convex mix of the
/// layer input and the attention output.
inline TensorPtr gated_skip(const TensorPtr& h_prev, const TensorPtr& h_tilde,
                            const LayerParams& layer, Tape* tape = nullptr) {
    if (h_prev->rows != h_tilde->rows || h_prev->cols != h_tilde->cols)
        throw ShapeError("gated_skip: " + shape_str(*h_prev) + " vs " + shape_str(*h_tilde));
    auto ones_col = tensor(h_prev->rows, 1);
    std::fill(ones_col->value.begin(), ones_col->value.end(), 1.0);
    auto bias = matmul(ones_col, layer.b_r, tape);
    auto r = sigmoid(add(add(matmul(h_prev, layer.u_r1, tape), matmul(h_tilde, layer.u_r2, tape), tape),
                         bias, tape),
                     tape);
    auto keep_new = hadamard(r, h_tilde, tape);
    auto keep_old = hadamard(sub(scalar(1.0), r, tape), h_prev, tape);
    return add(keep_new, keep_old, tape);
}

/// Concrete dropout on feature columns: one relaxed Bernoulli draw per
/// column, shared across nodes, with inverse-keep rescaling. Differentiable
/// in the logit rho.
inline TensorPtr concrete_dropout(const TensorPtr& h, const TensorPtr& rho, double temperature,
                                  Rng& rng, Tape* tape = nullptr) {
    const int cols = h->cols;
    auto logit_u = tensor(1, cols);
    for (int j = 0; j < cols; ++j) {
        const double u = rng.uniform_open();
        logit_u->value[j] = std::log(u) - std::log1p(-u);
    }
    auto ones_row = tensor(1, cols);
    std::fill(ones_row->value.begin(), ones_row->value.end(), 1.0);

    auto rho_row = matmul(rho, ones_row, tape);
    auto z = sub(scalar(1.0), sigmoid(scale(add(rho_row, logit_u, tape), 1.0 / temperature, tape), tape), tape);

    auto keep = sub(scalar(1.0), sigmoid(rho, tape), tape);          // 1 - p
    auto inv_keep = exp_ew(scale(log_ew(keep, tape), -1.0, tape), tape);  // 1 / (1 - p)

    TensorPtr z_full = z;
    if (h->rows > 1) {
        auto ones_col = tensor(h->rows, 1);
        std::fill(ones_col->value.begin(), ones_col->value.end(), 1.0);
        z_full = matmul(ones_col, z, tape);
    }
    return hadamard(hadamard(h, z_full, tape), inv_keep, tape);
}

/// Readout: z_G = sum over real nodes of MLP1(H_v); permutation invariant.
inline TensorPtr readout(const TensorPtr& h, const TensorPtr& node_mask, const TensorPtr& mlp1_w,
                         const TensorPtr& mlp1_b, Tape* tape = nullptr) {
    auto ones_col = tensor(h->rows, 1);
    std::fill(ones_col->value.begin(), ones_col->value.end(), 1.0);
    auto bias = matmul(ones_col, mlp1_b, tape);
    auto z = relu(add(matmul(h, mlp1_w, tape), bias, tape), tape);
    return sum_rows_masked(z, node_mask, tape);
}

// ---- full forward pass ------------------------------------------------------

enum class Mode { Stochastic, Deterministic };

/// Reusable constant tensors for one molecule, shaped for the compact model.
struct EncodedMol {
    int n = 0;
    TensorPtr x;     // n x kFeatInp
    TensorPtr adj;   // n x n with self-loops
    TensorPtr ones;  // n x 1
};

inline EncodedMol encode(const CompactGraph& cg) {
    EncodedMol em;
    em.n = cg.n;
    em.x = tensor(cg.n, kFeatInp);
    em.x->value = cg.x;
    em.adj = tensor(cg.n, cg.n);
    em.adj->value = cg.adj;
    em.ones = tensor(cg.n, 1);
    std::fill(em.ones->value.begin(), em.ones->value.end(), 1.0);
    return em;
}

inline EncodedMol encode(const GraphTensor& gt) { return encode(compact(gt)); }

/// Full model: input projection, three (attention -> gate -> dropout) blocks,
/// readout, and the two-layer property head with dropout around each head
/// layer input. Output is 1x2: [y_hat, log sigma^2] for regression, two
/// logits for classification. Deterministic mode runs with dropout off and
/// no keep-rescaling.
inline TensorPtr forward(const EncodedMol& mol, const ModelParams& params, Mode mode, Rng* rng,
                         Tape* tape = nullptr) {
    const bool stochastic = mode == Mode::Stochastic;
    auto drop = [&](const TensorPtr& t, const TensorPtr& rho) {
        return stochastic ? concrete_dropout(t, rho, kConcreteTemperature, *rng, tape) : t;
    };

    auto h = matmul(mol.x, params.w_in, tape);
    for (const auto& layer : params.layers) {
        auto h_tilde = gcn_attention(h, layer, mol.adj, tape);
        h = drop(gated_skip(h, h_tilde, layer, tape), layer.rho);
    }

    auto ones_col = mol.ones;
    auto bias1 = matmul(ones_col, params.mlp1_b, tape);
    auto per_node = drop(relu(add(matmul(h, params.mlp1_w, tape), bias1, tape), tape), params.mlp1_rho);
    auto z_g = sum_rows_masked(per_node, ones_col, tape);

    auto head_in = drop(z_g, params.head1_rho);
    auto hidden = relu(add(matmul(head_in, params.head1_w, tape), params.head1_b, tape), tape);
    auto hidden_dropped = drop(hidden, params.head2_rho);
    return add(matmul(hidden_dropped, params.head2_w, tape), params.head2_b, tape);
}

inline TensorPtr forward(const GraphTensor& gt, const ModelParams& params, Mode mode, Rng* rng,
                         Tape* tape = nullptr) {
    return forward(encode(gt), params, mode, rng, tape);
}

}  // namespace molq
