#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "molq/model.hpp"
#include "molq/rng.hpp"
#include "molq/tensor.hpp"

namespace molq {

/// Per-sample decomposition of predictive variance. Regression keeps scalar
/// components; classification keeps per-class diagonals plus full 2x2
/// matrices, with the scalar summaries being the matrix traces (for a binary
/// head the trace is exactly twice either diagonal entry). The additive
/// identity total = aleatoric + epistemic holds exactly by construction.
struct UncertaintyReport {
    Task task = Task::Regression;
    int samples = 0;

    double mean = 0.0;  // predictive mean (regression) or positive-class probability
    double aleatoric = 0.0;
    double epistemic = 0.0;
    double total = 0.0;

    std::array<double, 2> class_mean{};
    std::array<double, 2> aleatoric_diag{};
    std::array<double, 2> epistemic_diag{};
    std::array<double, 2> total_diag{};
    std::array<std::array<double, 2>, 2> aleatoric_mat{};
    std::array<std::array<double, 2>, 2> epistemic_mat{};

    std::vector<std::array<double, 2>> raw;  // optional per-sample outputs
};

namespace detail {

/// Population variance (1/T) sum y^2 - mean^2, clamped at zero against
/// floating-point cancellation. Shared by every estimator that needs the
/// epistemic spread so identical streams reduce identically.
inline double population_variance(const std::vector<double>& ys) {
    double sum = 0.0, sum_sq = 0.0;
    for (double y : ys) {
        sum += y;
        sum_sq += y * y;
    }
    const double n = static_cast<double>(ys.size());
    const double mean = sum / n;
    const double var = sum_sq / n - mean * mean;
    return var > 0.0 ? var : 0.0;
}

}  // namespace detail

/// Homoscedastic predictive variance: known sigma^2 plus the Monte-Carlo
/// spread of the sampled means.
inline double homoscedastic_variance(const std::vector<double>& samples, double sigma_sq) {
    if (samples.size() < 2) throw TooFewSamplesError("homoscedastic_variance: need at least 2 samples");
    return sigma_sq + detail::population_variance(samples);
}

/// Reduces T heteroscedastic samples [y_hat_t, s_t] (s = log sigma^2) to the
/// regression decomposition: epistemic is the spread of the means, aleatoric
/// the mean of the predicted variances.
inline UncertaintyReport reduce_regression(const std::vector<std::array<double, 2>>& samples,
                                           bool keep_raw = false) {
    if (samples.size() < 2) throw TooFewSamplesError("reduce_regression: need at least 2 samples");
    UncertaintyReport rep;
    rep.task = Task::Regression;
    rep.samples = static_cast<int>(samples.size());

    std::vector<double> means;
    means.reserve(samples.size());
    double mean_sum = 0.0, var_sum = 0.0;
    for (const auto& s : samples) {
        means.push_back(s[0]);
        mean_sum += s[0];
        var_sum += std::exp(s[1]);
    }
    const double n = static_cast<double>(samples.size());
    rep.mean = mean_sum / n;
    rep.epistemic = detail::population_variance(means);
    rep.aleatoric = var_sum / n;
    rep.total = rep.aleatoric + rep.epistemic;
    if (keep_raw) rep.raw = samples;
    return rep;
}

/// Reduces T sampled class-probability rows to the classification
/// decomposition: epistemic (1/T) sum (y_t - y_bar)(y_t - y_bar)^T and
/// aleatoric (1/T) sum (diag(y_t) - y_t y_t^T).
inline UncertaintyReport reduce_classification(const std::vector<std::array<double, 2>>& samples,
                                               bool keep_raw = false) {
    if (samples.size() < 2) throw TooFewSamplesError("reduce_classification: need at least 2 samples");
    UncertaintyReport rep;
    rep.task = Task::Classification;
    rep.samples = static_cast<int>(samples.size());

    const double n = static_cast<double>(samples.size());
    for (const auto& p : samples) {
        rep.class_mean[0] += p[0];
        rep.class_mean[1] += p[1];
    }
    rep.class_mean[0] /= n;
    rep.class_mean[1] /= n;

    for (const auto& p : samples) {
        for (int a = 0; a < 2; ++a) {
            for (int b = 0; b < 2; ++b) {
                rep.epistemic_mat[a][b] += (p[a] - rep.class_mean[a]) * (p[b] - rep.class_mean[b]) / n;
                const double diag = a == b ? p[a] : 0.0;
                rep.aleatoric_mat[a][b] += (diag - p[a] * p[b]) / n;
            }
        }
    }
    for (int a = 0; a < 2; ++a) {
        rep.aleatoric_diag[a] = rep.aleatoric_mat[a][a];
        rep.epistemic_diag[a] = rep.epistemic_mat[a][a];
        rep.total_diag[a] = rep.aleatoric_diag[a] + rep.epistemic_diag[a];
    }
    rep.mean = rep.class_mean[1];
    rep.aleatoric = rep.aleatoric_diag[0] + rep.aleatoric_diag[1];
    rep.epistemic = rep.epistemic_diag[0] + rep.epistemic_diag[1];
    rep.total = rep.aleatoric + rep.epistemic;
    if (keep_raw) rep.raw = samples;
    return rep;
}

/// T stochastic forward passes with independent seeded streams, reduced to
/// the regression report.
inline UncertaintyReport mc_predict_regression(const ModelParams& params, const EncodedMol& mol,
                                               int t_samples, std::uint64_t seed,
                                               bool keep_raw = false) {
    if (params.task != Task::Regression)
        throw TaskMismatchError("mc_predict_regression: checkpoint is " + task_name(params.task));
    if (t_samples < 2) throw TooFewSamplesError("mc_predict_regression: T must be >= 2");
    std::vector<std::array<double, 2>> samples;
    samples.reserve(t_samples);
    for (int t = 0; t < t_samples; ++t) {
        Rng rng(derive_seed(seed, 0x5a11, static_cast<std::uint64_t>(t)));
        auto out = forward(mol, params, Mode::Stochastic, &rng);
        samples.push_back({out->value[0], out->value[1]});
    }
    return reduce_regression(samples, keep_raw);
}

inline UncertaintyReport mc_predict_classification(const ModelParams& params, const EncodedMol& mol,
                                                   int t_samples, std::uint64_t seed,
                                                   bool keep_raw = false) {
    if (params.task != Task::Classification)
        throw TaskMismatchError("mc_predict_classification: checkpoint is " + task_name(params.task));
    if (t_samples < 2) throw TooFewSamplesError("mc_predict_classification: T must be >= 2");
    std::vector<std::array<double, 2>> samples;
    samples.reserve(t_samples);
    for (int t = 0; t < t_samples; ++t) {
        Rng rng(derive_seed(seed, 0x5a11, static_cast<std::uint64_t>(t)));
        auto logits = forward(mol, params, Mode::Stochastic, &rng);
        auto probs = softmax_rows(logits);
        samples.push_back({probs->value[0], probs->value[1]});
    }
    return reduce_classification(samples, keep_raw);
}

inline UncertaintyReport mc_predict(const ModelParams& params, const EncodedMol& mol, int t_samples,
                                    std::uint64_t seed, bool keep_raw = false) {
    return params.task == Task::Regression
               ? mc_predict_regression(params, mol, t_samples, seed, keep_raw)
               : mc_predict_classification(params, mol, t_samples, seed, keep_raw);
}

// ---- training objectives ----------------------------------------------------

/// Heteroscedastic Gaussian NLL for one sample (up to constants):
/// 0.5 exp(-s)(y - y_hat)^2 + 0.5 s, built on the tape from the 1x2 output.
inline TensorPtr loss_regression_sample(const TensorPtr& out, double label, Tape* tape) {
    auto y_hat = matmul(out, tensor(2, 1, {1, 0}), tape);
    auto s = matmul(out, tensor(2, 1, {0, 1}), tape);
    auto diff = sub(y_hat, scalar(label), tape);
    auto err = hadamard(hadamard(diff, diff, tape), exp_ew(scale(s, -1.0, tape), tape), tape);
    return scale(add(err, s, tape), 0.5, tape);
}

/// Cross-entropy of softmax(logits) against a one-hot binary label, in the
/// log-sum-exp form: log sum_j exp(z_j) - z_label.
inline TensorPtr loss_classification_sample(const TensorPtr& logits, int label, Tape* tape) {
    const double shift = std::max(logits->value[0], logits->value[1]);
    auto shifted = sub(logits, scalar(shift), tape);
    auto lse = add(log_ew(sum_all(exp_ew(shifted, tape), tape), tape), scalar(shift), tape);
    auto pick = tensor(2, 1);
    pick->value[label == 0 ? 0 : 1] = 1.0;
    return sub(lse, matmul(logits, pick, tape), tape);
}

inline TensorPtr loss_sample(Task task, const TensorPtr& out, double label, Tape* tape) {
    return task == Task::Regression ? loss_regression_sample(out, label, tape)
                                    : loss_classification_sample(out, static_cast<int>(label), tape);
}

/// Value-only losses for validation bookkeeping.
inline double loss_regression_value(double y_hat, double s, double label) {
    const double d = label - y_hat;
    return 0.5 * std::exp(-s) * d * d + 0.5 * s;
}

inline double loss_classification_value(double logit0, double logit1, int label) {
    const double shift = std::max(logit0, logit1);
    const double lse = shift + std::log(std::exp(logit0 - shift) + std::exp(logit1 - shift));
    return lse - (label == 0 ? logit0 : logit1);
}

// ---- variational regularizer ------------------------------------------------

/// One dropout-bearing group: the weights tied to a dropout logit and the
/// input width entering the entropy term.
struct RegularizerGroup {
    std::vector<TensorPtr> weights;
    TensorPtr rho;
    int input_width;
};

inline std::vector<RegularizerGroup> regularizer_groups(const ModelParams& params) {
    std::vector<RegularizerGroup> groups;
    for (const auto& layer : params.layers) {
        RegularizerGroup g;
        for (const auto& h : layer.heads) {
            g.weights.push_back(h.w);
            g.weights.push_back(h.c);
        }
        g.weights.push_back(layer.w_o);
        g.weights.push_back(layer.u_r1);
        g.weights.push_back(layer.u_r2);
        g.weights.push_back(layer.b_r);
        g.rho = layer.rho;
        g.input_width = kNodeDim;
        groups.push_back(std::move(g));
    }
    groups.push_back({{params.mlp1_w, params.mlp1_b}, params.mlp1_rho, kNodeDim});
    groups.push_back({{params.head1_w, params.head1_b}, params.head1_rho, kGraphDim});
    groups.push_back({{params.head2_w, params.head2_b}, params.head2_rho, kHeadHidden});
    return groups;
}

/// Variational regularizer over dropout-bearing layers:
///   l^2 ||W||^2 / (2 M (1-p)) + (K_in / M) (p log p + (1-p) log(1-p)),
/// differentiable in both the weights and the dropout logits.
inline TensorPtr variational_regularizer(const ModelParams& params, int dataset_size,
                                         double length_scale, Tape* tape) {
    const double m = static_cast<double>(dataset_size);
    TensorPtr total = scalar(0.0);
    for (const auto& g : regularizer_groups(params)) {
        auto p = sigmoid(g.rho, tape);
        auto one_minus_p = sub(scalar(1.0), p, tape);

        TensorPtr sum_sq = scalar(0.0);
        for (const auto& w : g.weights)
            sum_sq = add(sum_sq, sum_all(hadamard(w, w, tape), tape), tape);
        auto inv_keep = exp_ew(scale(log_ew(one_minus_p, tape), -1.0, tape), tape);
        auto weight_term =
            hadamard(scale(sum_sq, length_scale * length_scale / (2.0 * m), tape), inv_keep, tape);

        auto entropy = add(hadamard(p, log_ew(p, tape), tape),
                           hadamard(one_minus_p, log_ew(one_minus_p, tape), tape), tape);
        auto entropy_term = scale(entropy, static_cast<double>(g.input_width) / m, tape);

        total = add(total, add(weight_term, entropy_term, tape), tape);
    }
    return total;
}

}  // namespace molq
