#pragma once

#include <string>

#include "molq/io.hpp"
#include "molq/model.hpp"

namespace molq {

// Checkpoint: self-describing UTF-8 text. Header line
//   molgraph-uq-ckpt v1 task=<regression|classification>
// then per tensor a `name rows cols` line followed by row-major values,
// one row per line.

inline void save_checkpoint(const std::string& path, const ModelParams& params) {
    auto f = open_out(path);
    f << "molgraph-uq-ckpt v1 task=" << task_name(params.task) << "\n";
    for (const auto& [name, t] : params.tensors()) {
        f << name << ' ' << t->rows << ' ' << t->cols << "\n";
        for (int i = 0; i < t->rows; ++i) {
            for (int j = 0; j < t->cols; ++j) {
                if (j > 0) f << ' ';
                f << fmt_double(t->at(i, j));
            }
            f << "\n";
        }
    }
}

inline ModelParams load_checkpoint(const std::string& path) {
    auto f = open_in(path);
    std::string header;
    if (!std::getline(f, header)) throw IoError(path + ": empty checkpoint");
    const std::string magic = "molgraph-uq-ckpt v1 task=";
    if (header.rfind(magic, 0) != 0) throw IoError(path + ": not a molgraph-uq checkpoint");
    const Task task = parse_task(trim(header.substr(magic.size())));

    ModelParams params = init_model(task, 0);
    auto named = params.tensors();
    for (auto& [name, t] : named) {
        std::string got_name;
        int rows = 0, cols = 0;
        if (!(f >> got_name >> rows >> cols)) throw IoError(path + ": truncated checkpoint");
        if (got_name != name)
            throw IoError(path + ": expected tensor '" + name + "', found '" + got_name + "'");
        if (rows != t->rows || cols != t->cols)
            throw IoError(path + ": tensor '" + name + "' has shape " + std::to_string(rows) + "x" +
                          std::to_string(cols) + ", expected " + shape_str(*t));
        for (auto& v : t->value)
            if (!(f >> v)) throw IoError(path + ": truncated values for tensor '" + name + "'");
    }
    std::string extra;
    if (f >> extra) throw IoError(path + ": trailing content after tensors");
    return params;
}

}  // namespace molq
