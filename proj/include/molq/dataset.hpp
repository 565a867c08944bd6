#pragma once

#include <string>
#include <vector>

#include "molq/io.hpp"

namespace molq {

enum class Task { Regression, Classification };

inline std::string task_name(Task t) { return t == Task::Regression ? "regression" : "classification"; }

inline Task parse_task(const std::string& s) {
    if (s == "regression") return Task::Regression;
    if (s == "classification") return Task::Classification;
    throw IoError("unknown task '" + s + "'");
}

/// One dataset row. `label` is what the model trains on; `clean_label` is the
/// pre-noise ground truth and `corrupted` marks records whose label was
/// zeroed by the corruption generator.
struct LabeledRecord {
    int id = 0;
    std::string smiles;
    double label = 0.0;
    double clean_label = 0.0;
    bool corrupted = false;
};

// Dataset file: one `<SMILES><TAB><label>` per line, '#' lines ignored.

inline void write_dataset(const std::string& path, const std::vector<LabeledRecord>& records,
                          const std::string& comment = "") {
    auto f = open_out(path);
    if (!comment.empty()) f << "# " << comment << "\n";
    for (const auto& r : records) f << r.smiles << '\t' << fmt_double(r.label) << '\n';
}

inline std::vector<LabeledRecord> read_dataset(const std::string& path) {
    auto f = open_in(path);
    std::vector<LabeledRecord> records;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        auto fields = split(t, '\t');
        if (fields.size() != 2)
            throw IoError(path + ":" + std::to_string(lineno) + ": expected <SMILES><TAB><label>");
        LabeledRecord r;
        r.id = static_cast<int>(records.size());
        r.smiles = fields[0];
        r.label = parse_double(fields[1], path + ":" + std::to_string(lineno));
        r.clean_label = r.label;
        records.push_back(std::move(r));
    }
    return records;
}

// Sidecar: per-record ground truth for evaluation, CSV `id,clean_label,corrupted`.

inline void write_sidecar(const std::string& path, const std::vector<LabeledRecord>& records) {
    auto f = open_out(path);
    f << "id,clean_label,corrupted\n";
    for (const auto& r : records)
        f << r.id << ',' << fmt_double(r.clean_label) << ',' << (r.corrupted ? 1 : 0) << '\n';
}

inline void read_sidecar(const std::string& path, std::vector<LabeledRecord>& records) {
    auto f = open_in(path);
    std::string line;
    if (!std::getline(f, line)) throw IoError(path + ": empty sidecar");
    int lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty()) continue;
        auto fields = split(t, ',');
        if (fields.size() != 3) throw IoError(path + ":" + std::to_string(lineno) + ": bad sidecar row");
        int id = static_cast<int>(parse_double(fields[0], path));
        if (id < 0 || id >= static_cast<int>(records.size()))
            throw IoError(path + ":" + std::to_string(lineno) + ": id out of range");
        records[id].clean_label = parse_double(fields[1], path);
        records[id].corrupted = fields[2] == "1";
    }
}

}  // namespace molq
