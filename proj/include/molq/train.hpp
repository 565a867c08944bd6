#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "molq/dataset.hpp"
#include "molq/featurize.hpp"
#include "molq/model.hpp"
#include "molq/optim.hpp"
#include "molq/smiles.hpp"
#include "molq/threadpool.hpp"
#include "molq/uncertainty.hpp"

namespace molq {

struct TrainConfig {
    Task task = Task::Regression;
    int epochs = 100;
    int batch_size = 100;
    double lr0 = 1e-3;
    int lr_half_every = 10;
    double split_train = 0.72;
    double split_valid = 0.08;
    double split_test = 0.2;
    std::uint64_t seed = 42;
    int t_samples = 20;  // MC samples at prediction time
    double length_scale = 1e-4;
    AdamConfig adam;
    double clip_norm = 5.0;
    int threads = 0;                 // 0 = hardware concurrency
    bool valid_stochastic = false;   // validation runs deterministic by default

    void validate() const {
        if (epochs < 1 || batch_size < 1)
            throw Error("config: epochs and batch size must be >= 1");
        if (std::abs(split_train + split_valid + split_test - 1.0) > 1e-9)
            throw Error("config: split ratios must sum to 1");
        if (lr0 <= 0 || length_scale <= 0) throw Error("config: lr0 and length scale must be > 0");
        if (t_samples < 2) throw Error("config: T must be >= 2");
    }
};

// Plain-text `key = value` config mirror.

inline void save_config(const std::string& path, const TrainConfig& c) {
    auto f = open_out(path);
    f << "task = " << task_name(c.task) << "\n";
    f << "epochs = " << c.epochs << "\n";
    f << "batch-size = " << c.batch_size << "\n";
    f << "lr0 = " << fmt_double(c.lr0) << "\n";
    f << "lr-half-every = " << c.lr_half_every << "\n";
    f << "split = " << fmt_double(c.split_train) << ',' << fmt_double(c.split_valid) << ','
      << fmt_double(c.split_test) << "\n";
    f << "seed = " << c.seed << "\n";
    f << "t-samples = " << c.t_samples << "\n";
    f << "length-scale = " << fmt_double(c.length_scale) << "\n";
    f << "adam-beta1 = " << fmt_double(c.adam.beta1) << "\n";
    f << "adam-beta2 = " << fmt_double(c.adam.beta2) << "\n";
    f << "adam-eps = " << fmt_double(c.adam.eps) << "\n";
    f << "clip-norm = " << fmt_double(c.clip_norm) << "\n";
    f << "threads = " << c.threads << "\n";
    f << "valid-mode = " << (c.valid_stochastic ? "stochastic" : "deterministic") << "\n";
}

inline TrainConfig load_config(const std::string& path) {
    auto f = open_in(path);
    TrainConfig c;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw IoError(path + ":" + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(t.substr(0, eq));
        const std::string val = trim(t.substr(eq + 1));
        const std::string ctx = path + ":" + std::to_string(lineno);
        if (key == "task") c.task = parse_task(val);
        else if (key == "epochs") c.epochs = static_cast<int>(parse_double(val, ctx));
        else if (key == "batch-size") c.batch_size = static_cast<int>(parse_double(val, ctx));
        else if (key == "lr0") c.lr0 = parse_double(val, ctx);
        else if (key == "lr-half-every") c.lr_half_every = static_cast<int>(parse_double(val, ctx));
        else if (key == "split") {
            auto parts = split(val, ',');
            if (parts.size() != 3) throw IoError(ctx + ": split needs three ratios");
            c.split_train = parse_double(trim(parts[0]), ctx);
            c.split_valid = parse_double(trim(parts[1]), ctx);
            c.split_test = parse_double(trim(parts[2]), ctx);
        } else if (key == "seed") c.seed = static_cast<std::uint64_t>(parse_double(val, ctx));
        else if (key == "t-samples") c.t_samples = static_cast<int>(parse_double(val, ctx));
        else if (key == "length-scale") c.length_scale = parse_double(val, ctx);
        else if (key == "adam-beta1") c.adam.beta1 = parse_double(val, ctx);
        else if (key == "adam-beta2") c.adam.beta2 = parse_double(val, ctx);
        else if (key == "adam-eps") c.adam.eps = parse_double(val, ctx);
        else if (key == "clip-norm") c.clip_norm = parse_double(val, ctx);
        else if (key == "threads") c.threads = static_cast<int>(parse_double(val, ctx));
        else if (key == "valid-mode") c.valid_stochastic = val == "stochastic";
        else throw IoError(ctx + ": unknown key '" + key + "'");
    }
    return c;
}

// ---- dataset splitting ------------------------------------------------------

struct SplitIndices {
    std::vector<int> train;
    std::vector<int> valid;
    std::vector<int> test;
};

/// Seeded shuffle, then floor(ratio*n) sizes with the remainder going to the
/// training partition. Partitions are disjoint and exhaustive.
inline SplitIndices split_dataset(int n, double r_train, double r_valid, double r_test,
                                  std::uint64_t seed) {
    if (n < 10) throw TooSmallError("split_dataset: need at least 10 records, got " + std::to_string(n));
    if (std::abs(r_train + r_valid + r_test - 1.0) > 1e-9)
        throw Error("split_dataset: ratios must sum to 1");
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    Rng rng(derive_seed(seed, 0x5b11));
    for (int i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);

    const int n_valid = static_cast<int>(r_valid * n);
    const int n_test = static_cast<int>(r_test * n);
    const int n_train = n - n_valid - n_test;  // floor(r_train*n) plus the remainder

    SplitIndices s;
    s.train.assign(order.begin(), order.begin() + n_train);
    s.valid.assign(order.begin() + n_train, order.begin() + n_train + n_valid);
    s.test.assign(order.begin() + n_train + n_valid, order.end());
    return s;
}

inline SplitIndices split_dataset(const std::vector<LabeledRecord>& records, const TrainConfig& cfg) {
    return split_dataset(static_cast<int>(records.size()), cfg.split_train, cfg.split_valid,
                         cfg.split_test, cfg.seed);
}

// ---- training loop ----------------------------------------------------------

struct EpochStats {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double valid_loss = 0.0;
    double valid_metric = 0.0;  // RMSE for regression, accuracy for classification
};

struct FitResult {
    ModelParams final_params;
    ModelParams best_params;
    int best_epoch = -1;
    std::vector<EpochStats> history;
    SplitIndices split;
};

inline void write_history(const std::string& path, const std::vector<EpochStats>& history) {
    auto f = open_out(path);
    f << "epoch,lr,train_loss,valid_loss,valid_metric\n";
    for (const auto& e : history)
        f << e.epoch << ',' << fmt_double(e.lr) << ',' << fmt_double(e.train_loss) << ','
          << fmt_double(e.valid_loss) << ',' << fmt_double(e.valid_metric) << '\n';
}

namespace detail {

struct ValidScore {
    double loss = 0.0;
    double metric = 0.0;
};

inline ValidScore evaluate_split(const ModelParams& params, const std::vector<EncodedMol>& mols,
                                 const std::vector<double>& labels, const std::vector<int>& idx,
                                 const TrainConfig& cfg, ThreadPool& pool) {
    if (idx.empty()) return {};
    std::vector<std::array<double, 2>> outs(idx.size());
    pool.parallel_for(static_cast<int>(idx.size()), [&](int i) {
        if (cfg.valid_stochastic) {
            // fixed-T MC mean of the raw outputs
            std::array<double, 2> acc{0.0, 0.0};
            for (int t = 0; t < cfg.t_samples; ++t) {
                Rng rng(derive_seed(cfg.seed, 0xa11d, static_cast<std::uint64_t>(idx[i]), t));
                auto out = forward(mols[idx[i]], params, Mode::Stochastic, &rng);
                acc[0] += out->value[0];
                acc[1] += out->value[1];
            }
            outs[i] = {acc[0] / cfg.t_samples, acc[1] / cfg.t_samples};
        } else {
            auto out = forward(mols[idx[i]], params, Mode::Deterministic, nullptr);
            outs[i] = {out->value[0], out->value[1]};
        }
    });
    ValidScore score;
    double metric_acc = 0.0;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const double label = labels[idx[i]];
        if (cfg.task == Task::Regression) {
            score.loss += loss_regression_value(outs[i][0], outs[i][1], label);
            const double d = outs[i][0] - label;
            metric_acc += d * d;
        } else {
            score.loss += loss_classification_value(outs[i][0], outs[i][1], static_cast<int>(label));
            const int pred = outs[i][1] > outs[i][0] ? 1 : 0;
            metric_acc += pred == static_cast<int>(label) ? 1.0 : 0.0;
        }
    }
    const double n = static_cast<double>(idx.size());
    score.loss /= n;
    score.metric = cfg.task == Task::Regression ? std::sqrt(metric_acc / n) : metric_acc / n;
    return score;
}

}  // namespace detail

/// Full training protocol: seeded split, Adam with the step-decay schedule,
/// stochastic forwards with the variational regularizer, per-epoch
/// train/validation logging, and best-validation checkpointing. Per-molecule
/// passes within a batch run in parallel; gradients reduce in molecule order,
/// so results do not depend on the thread count.
inline FitResult fit(const TrainConfig& cfg, const std::vector<LabeledRecord>& records) {
    cfg.validate();

    std::vector<EncodedMol> mols;
    std::vector<double> labels;
    mols.reserve(records.size());
    labels.reserve(records.size());
    for (const auto& r : records) {
        mols.push_back(encode(featurize(parse_smiles(r.smiles))));
        labels.push_back(r.label);
    }

    FitResult result;
    result.split = split_dataset(records, cfg);
    const auto& train_idx = result.split.train;
    const int m_train = static_cast<int>(train_idx.size());

    ModelParams params = init_model(cfg.task, cfg.seed);
    auto named = params.tensors();
    AdamState adam = AdamState::init(named);
    ThreadPool pool(cfg.threads);

    constexpr int kChunk = 32;  // per-molecule gradient slots reduced in order
    std::vector<GradMap> slots(kChunk);
    std::vector<double> slot_losses(kChunk, 0.0);

    double best_valid = std::numeric_limits<double>::infinity();
    std::vector<int> order = train_idx;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = lr_at(cfg.lr0, epoch, cfg.lr_half_every);

        Rng shuffle_rng(derive_seed(cfg.seed, 0xba7c4, static_cast<std::uint64_t>(epoch)));
        for (int i = m_train; i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.index(i)]);

        double epoch_loss = 0.0;
        int batch_count = 0;
        for (int start = 0; start < m_train; start += cfg.batch_size, ++batch_count) {
            const int b = std::min(cfg.batch_size, m_train - start);
            GradVecs grads = zero_grads(named);
            double data_loss = 0.0;

            for (int chunk = 0; chunk < b; chunk += kChunk) {
                const int c = std::min(kChunk, b - chunk);
                pool.parallel_for(c, [&](int i) {
                    const int pos = start + chunk + i;
                    const int mol_idx = order[pos];
                    Rng rng(derive_seed(cfg.seed, 0x7121,
                                        (static_cast<std::uint64_t>(epoch) << 32) |
                                            static_cast<std::uint64_t>(pos)));
                    Tape tape;
                    auto out = forward(mols[mol_idx], params, Mode::Stochastic, &rng, &tape);
                    auto loss = loss_sample(cfg.task, out, labels[mol_idx], &tape);
                    slot_losses[i] = loss->value[0];
                    auto scaled = scale(loss, 1.0 / b, &tape);
                    zero_grad_map(slots[i]);
                    tape.backward(scaled, &slots[i]);
                });
                for (int i = 0; i < c; ++i) {
                    data_loss += slot_losses[i];
                    for (std::size_t t = 0; t < named.size(); ++t) {
                        auto it = slots[i].find(named[t].second.get());
                        if (it == slots[i].end()) continue;
                        auto& dst = grads[t];
                        const auto& src = it->second;
                        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
                    }
                }
            }
            data_loss /= b;

            Tape reg_tape;
            auto reg = variational_regularizer(params, m_train, cfg.length_scale, &reg_tape);
            GradMap reg_grads;
            reg_tape.backward(reg, &reg_grads);
            for (std::size_t t = 0; t < named.size(); ++t) {
                auto it = reg_grads.find(named[t].second.get());
                if (it == reg_grads.end()) continue;
                for (std::size_t j = 0; j < grads[t].size(); ++j) grads[t][j] += it->second[j];
            }

            const double objective = data_loss + reg->value[0];
            if (!std::isfinite(objective))
                throw NonFiniteLossError("non-finite loss in epoch " + std::to_string(epoch) +
                                             ", batch " + std::to_string(batch_count),
                                         batch_count);

            clip_global_norm(grads, cfg.clip_norm);
            adam_step(named, grads, adam, lr, cfg.adam);
            for (const auto& [name, t] : named)
                for (double v : t->value)
                    if (!std::isfinite(v))
                        throw NonFiniteLossError("non-finite parameter '" + name + "' after epoch " +
                                                     std::to_string(epoch) + ", batch " +
                                                     std::to_string(batch_count),
                                                 batch_count);
            epoch_loss += objective;
        }

        auto valid = detail::evaluate_split(params, mols, labels, result.split.valid, cfg, pool);
        EpochStats stats;
        stats.epoch = epoch;
        stats.lr = lr;
        stats.train_loss = epoch_loss / std::max(batch_count, 1);
        stats.valid_loss = valid.loss;
        stats.valid_metric = valid.metric;
        result.history.push_back(stats);

        if (!result.split.valid.empty() && valid.loss < best_valid) {
            best_valid = valid.loss;
            result.best_params = params.clone();
            result.best_epoch = epoch;
        }
    }

    result.final_params = params.clone();
    if (result.best_epoch < 0) {  // no validation split: final weights are the best we have
        result.best_params = params.clone();
        result.best_epoch = cfg.epochs - 1;
    }
    return result;
}

}  // namespace molq
