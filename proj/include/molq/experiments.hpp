#pragma once

#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "molq/checkpoint.hpp"
#include "molq/datagen.hpp"
#include "molq/metrics.hpp"
#include "molq/train.hpp"

namespace molq {

using ordered_json = nlohmann::ordered_json;

struct ReportRow {
    int id = 0;
    std::string smiles;
    double label = 0.0;
    UncertaintyReport rep;
};

/// MC predictions for the selected records, in index order; per-record
/// sample streams derive from (seed, record id).
inline std::vector<ReportRow> predict_records(const ModelParams& params,
                                              const std::vector<LabeledRecord>& records,
                                              const std::vector<int>& idx, int t_samples,
                                              std::uint64_t seed, ThreadPool& pool) {
    std::vector<ReportRow> rows(idx.size());
    std::vector<EncodedMol> mols(idx.size());
    pool.parallel_for(static_cast<int>(idx.size()), [&](int i) {
        const auto& rec = records[idx[i]];
        mols[i] = encode(featurize(parse_smiles(rec.smiles)));
        rows[i].id = rec.id;
        rows[i].smiles = rec.smiles;
        rows[i].label = rec.label;
        rows[i].rep = mc_predict(params, mols[i], t_samples,
                                 derive_seed(seed, 0x9ced, static_cast<std::uint64_t>(rec.id)));
    });
    return rows;
}

/// Per-sample report CSV:
///   regression:     id,smiles,label,pred_mean,aleatoric,epistemic,total
///   classification: id,smiles,label,p_positive,aleatoric,epistemic,total
inline void write_report_csv(const std::string& path, Task task, const std::vector<ReportRow>& rows) {
    auto f = open_out(path);
    f << "id,smiles,label," << (task == Task::Regression ? "pred_mean" : "p_positive")
      << ",aleatoric,epistemic,total\n";
    for (const auto& r : rows)
        f << r.id << ',' << r.smiles << ',' << fmt_double(r.label) << ',' << fmt_double(r.rep.mean)
          << ',' << fmt_double(r.rep.aleatoric) << ',' << fmt_double(r.rep.epistemic) << ','
          << fmt_double(r.rep.total) << '\n';
}

inline void write_histogram_csv(const std::string& path, const std::vector<ReportRow>& rows,
                                double width) {
    auto f = open_out(path);
    f << "kind,bin_lo,bin_hi,count\n";
    const std::pair<const char*, double UncertaintyReport::*> kinds[] = {
        {"aleatoric", &UncertaintyReport::aleatoric},
        {"epistemic", &UncertaintyReport::epistemic},
        {"total", &UncertaintyReport::total},
    };
    for (const auto& [name, member] : kinds) {
        std::vector<double> values;
        values.reserve(rows.size());
        for (const auto& r : rows) values.push_back(r.rep.*member);
        for (const auto& bin : histogram(values, width))
            f << name << ',' << fmt_double(bin.lo) << ',' << fmt_double(bin.hi) << ',' << bin.count
              << '\n';
    }
}

struct ExperimentConfig {
    int n = 2500;
    int max_atoms = 24;
    std::string out_dir;
    TrainConfig train;

    std::vector<double> sigmas{0.0, 0.5, 1.0};     // noise experiment
    std::vector<std::string> sigma_labels;          // directory names; defaults to fmt_double
    double corrupt_frac = 0.05;                     // corruption experiment
    double threshold = std::numeric_limits<double>::quiet_NaN();  // NaN: corpus median
    double flip_rate = 0.2;                         // classification experiment
};

namespace detail {

inline ordered_json config_echo(const ExperimentConfig& cfg) {
    ordered_json j;
    j["n"] = cfg.n;
    j["max_atoms"] = cfg.max_atoms;
    j["epochs"] = cfg.train.epochs;
    j["batch_size"] = cfg.train.batch_size;
    j["lr0"] = cfg.train.lr0;
    j["lr_half_every"] = cfg.train.lr_half_every;
    j["split"] = {cfg.train.split_train, cfg.train.split_valid, cfg.train.split_test};
    j["t_samples"] = cfg.train.t_samples;
    j["length_scale"] = cfg.train.length_scale;
    j["clip_norm"] = cfg.train.clip_norm;
    return j;
}

inline void write_level_files(const std::string& dir, const std::vector<LabeledRecord>& records,
                              const std::string& comment, const FitResult& fit_result) {
    std::filesystem::create_directories(dir);
    write_dataset(dir + "/dataset.tsv", records, comment);
    write_sidecar(dir + "/sidecar.csv", records);
    write_history(dir + "/history.csv", fit_result.history);
    save_checkpoint(dir + "/checkpoint.txt", fit_result.best_params);
}

inline double mean_of(const std::vector<ReportRow>& rows, double UncertaintyReport::*member) {
    if (rows.empty()) return 0.0;
    double s = 0.0;
    for (const auto& r : rows) s += r.rep.*member;
    return s / static_cast<double>(rows.size());
}

}  // namespace detail

// ---- experiment 1: label noise vs uncertainty --------------------------------

struct NoiseLevelSummary {
    std::string label;
    double sigma = 0.0;
    int n_test = 0;
    double mean_aleatoric = 0.0;
    double mean_epistemic = 0.0;
    double mean_total = 0.0;
};

struct NoiseExperiment {
    std::vector<NoiseLevelSummary> levels;
};

/// Trains one model per noise level on a shared clean corpus with Gaussian
/// label noise injected at that level, and reports test-set uncertainty
/// means and histograms per level.
inline NoiseExperiment run_noise_experiment(const ExperimentConfig& cfg) {
    auto clean = build_corpus(cfg.n, cfg.train.seed, cfg.max_atoms);
    NoiseExperiment result;
    std::filesystem::create_directories(cfg.out_dir);

    for (std::size_t k = 0; k < cfg.sigmas.size(); ++k) {
        const double sigma = cfg.sigmas[k];
        const std::string label =
            k < cfg.sigma_labels.size() ? cfg.sigma_labels[k] : fmt_double(sigma);

        auto records = clean;
        Rng noise_rng(derive_seed(cfg.train.seed, 0x012e, k));
        inject_noise(records, sigma, noise_rng);

        TrainConfig tc = cfg.train;
        tc.task = Task::Regression;
        auto fit_result = fit(tc, records);

        ThreadPool pool(tc.threads);
        auto rows = predict_records(fit_result.best_params, records, fit_result.split.test,
                                    tc.t_samples, tc.seed, pool);

        const std::string dir = cfg.out_dir + "/sigma_" + label;
        detail::write_level_files(dir, records,
                                  "molgraph-uq noise corpus sigma=" + fmt_double(sigma), fit_result);
        write_report_csv(dir + "/report.csv", Task::Regression, rows);
        write_histogram_csv(dir + "/histogram.csv", rows, 0.05);

        NoiseLevelSummary s;
        s.label = label;
        s.sigma = sigma;
        s.n_test = static_cast<int>(rows.size());
        s.mean_aleatoric = detail::mean_of(rows, &UncertaintyReport::aleatoric);
        s.mean_epistemic = detail::mean_of(rows, &UncertaintyReport::epistemic);
        s.mean_total = detail::mean_of(rows, &UncertaintyReport::total);
        result.levels.push_back(std::move(s));
    }

    ordered_json j;
    j["experiment"] = "noise";
    j["config"] = detail::config_echo(cfg);
    j["config"]["sigmas"] = cfg.sigmas;
    j["seed"] = cfg.train.seed;
    j["summaries"] = ordered_json::array();
    for (const auto& s : result.levels) {
        ordered_json e;
        e["sigma"] = s.sigma;
        e["label"] = s.label;
        e["n_test"] = s.n_test;
        e["mean_aleatoric"] = s.mean_aleatoric;
        e["mean_epistemic"] = s.mean_epistemic;
        e["mean_total"] = s.mean_total;
        j["summaries"].push_back(e);
    }
    auto f = open_out(cfg.out_dir + "/summary.json");
    f << j.dump(2) << "\n";
    return result;
}

// ---- experiment 2: corrupted-label detection ---------------------------------

struct CorruptionExperiment {
    std::optional<double> auc;  // aleatoric rank vs corrupted flag
    double mean_aleatoric_corrupted = std::numeric_limits<double>::quiet_NaN();
    double mean_aleatoric_clean = std::numeric_limits<double>::quiet_NaN();
    double aleatoric_threshold = 0.0;  // (1 - corrupt_frac) quantile over the ranked pool
    int n_corrupted = 0;
    int n_clean = 0;
};

/// Trains on a corpus with a random fraction of zeroed labels, then ranks the
/// fitted training molecules by aleatoric uncertainty. Random corruption
/// carries no input-side signal, so held-out molecules cannot be flagged;
/// the audit runs over the data the model was fitted on, which is where
/// mislabeled records live.
inline CorruptionExperiment run_corruption_experiment(const ExperimentConfig& cfg) {
    auto records = build_corpus(cfg.n, cfg.train.seed, cfg.max_atoms);
    Rng corrupt_rng(derive_seed(cfg.train.seed, 0xc0bb, 1));
    inject_corruption(records, cfg.corrupt_frac, corrupt_rng);

    TrainConfig tc = cfg.train;
    tc.task = Task::Regression;
    auto fit_result = fit(tc, records);

    ThreadPool pool(tc.threads);
    auto rows = predict_records(fit_result.best_params, records, fit_result.split.train,
                                tc.t_samples, tc.seed, pool);

    std::filesystem::create_directories(cfg.out_dir);
    detail::write_level_files(cfg.out_dir, records,
                              "molgraph-uq corruption corpus frac=" + fmt_double(cfg.corrupt_frac),
                              fit_result);
    write_report_csv(cfg.out_dir + "/report.csv", Task::Regression, rows);

    CorruptionExperiment result;
    std::vector<double> scores;
    std::vector<bool> flags;
    double sum_corrupt = 0.0, sum_clean = 0.0;
    for (const auto& r : rows) {
        const bool corrupted = records[r.id].corrupted;
        scores.push_back(r.rep.aleatoric);
        flags.push_back(corrupted);
        if (corrupted) {
            sum_corrupt += r.rep.aleatoric;
            ++result.n_corrupted;
        } else {
            sum_clean += r.rep.aleatoric;
            ++result.n_clean;
        }
    }
    result.auc = roc_auc(scores, flags);
    if (result.n_corrupted > 0) result.mean_aleatoric_corrupted = sum_corrupt / result.n_corrupted;
    if (result.n_clean > 0) result.mean_aleatoric_clean = sum_clean / result.n_clean;
    result.aleatoric_threshold = quantile(scores, 1.0 - cfg.corrupt_frac);

    ordered_json j;
    j["experiment"] = "corruption";
    j["config"] = detail::config_echo(cfg);
    j["config"]["corrupt_frac"] = cfg.corrupt_frac;
    j["seed"] = cfg.train.seed;
    ordered_json s;
    s["n_ranked"] = result.n_corrupted + result.n_clean;
    s["n_corrupted"] = result.n_corrupted;
    if (result.auc)
        s["auc_aleatoric"] = *result.auc;
    else
        s["auc_aleatoric"] = nullptr;
    s["mean_aleatoric_corrupted"] =
        result.n_corrupted > 0 ? ordered_json(result.mean_aleatoric_corrupted) : ordered_json(nullptr);
    s["mean_aleatoric_clean"] =
        result.n_clean > 0 ? ordered_json(result.mean_aleatoric_clean) : ordered_json(nullptr);
    s["aleatoric_quantile_threshold"] = result.aleatoric_threshold;
    j["summaries"] = ordered_json::array({s});
    auto f = open_out(cfg.out_dir + "/summary.json");
    f << j.dump(2) << "\n";
    return result;
}

// ---- experiment 3: uncertainty as a confidence indicator ---------------------

struct ConfidenceBinStat {
    int bin = 0;
    double lo = 0.0;
    double hi = 0.0;
    long count = 0;
    std::optional<double> accuracy;
};

struct DecileStat {
    int decile = 0;
    long count = 0;
    double mean_total = 0.0;
};

struct ConfidenceExperiment {
    double threshold_used = 0.0;
    std::vector<ConfidenceBinStat> bins;  // five ranges (0,0.1] .. (0.4,0.5]
    std::vector<DecileStat> deciles;      // mean total uncertainty per probability decile
    int max_total_decile = -1;
};

/// Trains the binary classifier on threshold-plus-flips labels and reports
/// test accuracy per total-uncertainty bin together with the
/// probability-vs-uncertainty scatter data.
inline ConfidenceExperiment run_confidence_experiment(const ExperimentConfig& cfg) {
    auto records = build_corpus(cfg.n, cfg.train.seed, cfg.max_atoms);
    ConfidenceExperiment result;
    result.threshold_used =
        std::isnan(cfg.threshold) ? median_clean_label(records) : cfg.threshold;
    Rng flip_rng(derive_seed(cfg.train.seed, 0xf11b, 2));
    make_class_labels(records, result.threshold_used, cfg.flip_rate, flip_rng);

    TrainConfig tc = cfg.train;
    tc.task = Task::Classification;
    auto fit_result = fit(tc, records);

    ThreadPool pool(tc.threads);
    auto rows = predict_records(fit_result.best_params, records, fit_result.split.test,
                                tc.t_samples, tc.seed, pool);

    std::filesystem::create_directories(cfg.out_dir);
    detail::write_level_files(cfg.out_dir, records,
                              "molgraph-uq classification corpus threshold=" +
                                  fmt_double(result.threshold_used) +
                                  " flip_rate=" + fmt_double(cfg.flip_rate),
                              fit_result);
    write_report_csv(cfg.out_dir + "/report.csv", Task::Classification, rows);

    {
        auto f = open_out(cfg.out_dir + "/scatter.csv");
        f << "id,p_positive,aleatoric,epistemic,total\n";
        for (const auto& r : rows)
            f << r.id << ',' << fmt_double(r.rep.mean) << ',' << fmt_double(r.rep.aleatoric) << ','
              << fmt_double(r.rep.epistemic) << ',' << fmt_double(r.rep.total) << '\n';
    }

    // five accuracy bins over total uncertainty
    result.bins.resize(5);
    std::vector<long> correct(5, 0);
    for (int b = 0; b < 5; ++b) {
        result.bins[b].bin = b + 1;
        result.bins[b].lo = 0.1 * b;
        result.bins[b].hi = 0.1 * (b + 1);
    }
    for (const auto& r : rows) {
        const int b = confidence_bin(r.rep.total);
        const int pred = r.rep.mean > 0.5 ? 1 : 0;
        result.bins[b].count += 1;
        if (pred == static_cast<int>(r.label)) correct[b] += 1;
    }
    for (int b = 0; b < 5; ++b)
        if (result.bins[b].count > 0)
            result.bins[b].accuracy =
                static_cast<double>(correct[b]) / static_cast<double>(result.bins[b].count);

    {
        auto f = open_out(cfg.out_dir + "/bins.csv");
        f << "bin,lo,hi,count,accuracy\n";
        for (const auto& b : result.bins) {
            f << b.bin << ',' << fmt_double(b.lo) << ',' << fmt_double(b.hi) << ',' << b.count << ',';
            if (b.accuracy)
                f << fmt_double(*b.accuracy);
            else
                f << "n/a";
            f << '\n';
        }
    }

    // mean total uncertainty per predicted-probability decile
    result.deciles.resize(10);
    for (int d = 0; d < 10; ++d) result.deciles[d].decile = d;
    for (const auto& r : rows) {
        auto& dec = result.deciles[probability_decile(r.rep.mean)];
        dec.count += 1;
        dec.mean_total += r.rep.total;
    }
    double best = -1.0;
    for (auto& d : result.deciles) {
        if (d.count > 0) d.mean_total /= static_cast<double>(d.count);
        if (d.count > 0 && d.mean_total > best) {
            best = d.mean_total;
            result.max_total_decile = d.decile;
        }
    }

    ordered_json j;
    j["experiment"] = "confidence";
    j["config"] = detail::config_echo(cfg);
    j["config"]["flip_rate"] = cfg.flip_rate;
    j["config"]["threshold"] = result.threshold_used;
    j["seed"] = cfg.train.seed;
    ordered_json bins = ordered_json::array();
    for (const auto& b : result.bins) {
        ordered_json e;
        e["bin"] = b.bin;
        e["lo"] = b.lo;
        e["hi"] = b.hi;
        e["count"] = b.count;
        e["accuracy"] = b.accuracy ? ordered_json(*b.accuracy) : ordered_json(nullptr);
        bins.push_back(e);
    }
    ordered_json deciles = ordered_json::array();
    for (const auto& d : result.deciles) {
        ordered_json e;
        e["decile"] = d.decile;
        e["count"] = d.count;
        e["mean_total"] = d.count > 0 ? ordered_json(d.mean_total) : ordered_json(nullptr);
        deciles.push_back(e);
    }
    ordered_json s;
    s["bins"] = bins;
    s["deciles"] = deciles;
    s["max_total_decile"] = result.max_total_decile;
    j["summaries"] = ordered_json::array({s});
    auto f = open_out(cfg.out_dir + "/summary.json");
    f << j.dump(2) << "\n";
    return result;
}

}  // namespace molq
