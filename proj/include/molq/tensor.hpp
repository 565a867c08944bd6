#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "molq/errors.hpp"

namespace molq {

struct Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

/// Dense row-major matrix of doubles. Gradients live in `grad` once a
/// backward pass (or an external gradient sink) touches the tensor.
class Tape;

struct Tensor {
    int rows = 0;
    int cols = 0;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    bool on_tape = false;          // produced by a recorded op
    const Tape* owner = nullptr;   // tape that recorded it

    Tensor(int r, int c, bool rg = false) : rows(r), cols(c), value(static_cast<std::size_t>(r) * c, 0.0), requires_grad(rg) {}

    int size() const { return rows * cols; }
    double& at(int i, int j) { return value[static_cast<std::size_t>(i) * cols + j]; }
    double at(int i, int j) const { return value[static_cast<std::size_t>(i) * cols + j]; }
    bool is_scalar() const { return rows == 1 && cols == 1; }

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
    void zero_grad() {
        if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
    }
};

inline TensorPtr tensor(int rows, int cols, bool requires_grad = false) {
    return std::make_shared<Tensor>(rows, cols, requires_grad);
}

inline TensorPtr tensor(int rows, int cols, std::initializer_list<double> vals, bool requires_grad = false) {
    auto t = tensor(rows, cols, requires_grad);
    if (static_cast<int>(vals.size()) != rows * cols)
        throw ShapeError("tensor literal: " + std::to_string(vals.size()) + " values for " +
                         std::to_string(rows) + "x" + std::to_string(cols));
    std::copy(vals.begin(), vals.end(), t->value.begin());
    return t;
}

inline TensorPtr scalar(double v, bool requires_grad = false) {
    auto t = tensor(1, 1, requires_grad);
    t->value[0] = v;
    return t;
}

inline TensorPtr identity(int n) {
    auto t = tensor(n, n);
    for (int i = 0; i < n; ++i) t->at(i, i) = 1.0;
    return t;
}

inline bool needs_grad(const Tensor& t) { return t.requires_grad || t.on_tape; }

inline std::string shape_str(const Tensor& t) {
    return "(" + std::to_string(t.rows) + "x" + std::to_string(t.cols) + ")";
}

/// Gradients of leaf tensors, keyed by tensor identity. Used when several
/// threads differentiate through the same (read-only) parameters.
using GradMap = std::unordered_map<const Tensor*, std::vector<double>>;

/// Zeroes a GradMap in place, keeping its buffers allocated for reuse.
inline void zero_grad_map(GradMap& m) {
    for (auto& [t, buf] : m) std::fill(buf.begin(), buf.end(), 0.0);
}

namespace detail {

// C (n x m) = A (n x k) * B (k x m)
inline void mm_nn(const double* a, const double* b, double* c, int n, int k, int m) {
    std::fill(c, c + static_cast<std::size_t>(n) * m, 0.0);
    for (int i = 0; i < n; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        double* crow = c + static_cast<std::size_t>(i) * m;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b + static_cast<std::size_t>(p) * m;
            for (int j = 0; j < m; ++j) crow[j] += av * brow[j];
        }
    }
}

// C (n x m) += A (n x k) * B (k x m)
inline void mm_nn_acc(const double* a, const double* b, double* c, int n, int k, int m) {
    for (int i = 0; i < n; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        double* crow = c + static_cast<std::size_t>(i) * m;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b + static_cast<std::size_t>(p) * m;
            for (int j = 0; j < m; ++j) crow[j] += av * brow[j];
        }
    }
}

// C (n x m) += A (n x k) * B^T, B stored (m x k)
inline void mm_nt_acc(const double* a, const double* b, double* c, int n, int k, int m) {
    for (int i = 0; i < n; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        double* crow = c + static_cast<std::size_t>(i) * m;
        for (int j = 0; j < m; ++j) {
            const double* brow = b + static_cast<std::size_t>(j) * k;
            double s = 0.0;
            for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
            crow[j] += s;
        }
    }
}

// C (k x m) += A^T * B, A stored (n x k), B stored (n x m)
inline void mm_tn_acc(const double* a, const double* b, double* c, int n, int k, int m) {
    for (int i = 0; i < n; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        const double* brow = b + static_cast<std::size_t>(i) * m;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            double* crow = c + static_cast<std::size_t>(p) * m;
            for (int j = 0; j < m; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace detail

/// Records the operations of one forward pass, in execution order, and
/// replays their adjoints in reverse. A tape and its intermediate tensors
/// belong to one thread; leaf gradients can be routed to an external GradMap
/// so parameter tensors may be shared read-only across tapes.
class Tape {
public:
    Tape() { entries_.reserve(192); }

    void record(TensorPtr out, std::function<void(Tape&)> back) {
        out->on_tape = true;
        out->owner = this;
        out->ensure_grad();
        entries_.push_back(Entry{std::move(out), std::move(back)});
    }

    bool produced(const Tensor* t) const { return t->on_tape && t->owner == this; }
    std::size_t size() const { return entries_.size(); }

    void clear() {
        entries_.clear();
        sink_ = nullptr;
    }

    /// Reverse accumulation from a scalar loss. Leaf gradients are added to
    /// each leaf's own `grad` buffer, or to `sink` when given.
    void backward(const TensorPtr& loss, GradMap* sink = nullptr) {
        if (!loss->is_scalar())
            throw NotScalarError("backward: loss must be 1x1, got " + shape_str(*loss));
        if (!produced(loss.get()))
            throw DetachedError("backward: loss was not produced on this tape");
        sink_ = sink;
        loss->ensure_grad();
        loss->grad[0] += 1.0;
        for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->back(*this);
        sink_ = nullptr;
    }

    /// Gradient buffer for an op input: intermediates own theirs, leaves may
    /// be redirected to the external sink.
    std::vector<double>& grad_buf(Tensor& t) {
        if (!t.on_tape && sink_ != nullptr) {
            auto& buf = (*sink_)[&t];
            if (buf.size() != t.value.size()) buf.assign(t.value.size(), 0.0);
            return buf;
        }
        t.ensure_grad();
        return t.grad;
    }

private:
    struct Entry {
        TensorPtr out;
        std::function<void(Tape&)> back;
    };
    std::vector<Entry> entries_;
    GradMap* sink_ = nullptr;
};

namespace detail {

inline bool want_tape(const Tape* tape, const Tensor& a) { return tape != nullptr && needs_grad(a); }
inline bool want_tape(const Tape* tape, const Tensor& a, const Tensor& b) {
    return tape != nullptr && (needs_grad(a) || needs_grad(b));
}

enum class EwKind { Equal, BroadcastA, BroadcastB };  // which side is the 1x1 scalar

inline EwKind ew_kind(const char* op, const Tensor& a, const Tensor& b) {
    if (a.rows == b.rows && a.cols == b.cols) return EwKind::Equal;
    if (a.is_scalar()) return EwKind::BroadcastA;
    if (b.is_scalar()) return EwKind::BroadcastB;
    throw ShapeError(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                     " neither match nor broadcast");
}

}  // namespace detail

// ---- primitives -----------------------------------------------------------

inline TensorPtr matmul(const TensorPtr& a, const TensorPtr& b, Tape* tape = nullptr) {
    if (a->cols != b->rows)
        throw ShapeError("matmul: " + shape_str(*a) + " * " + shape_str(*b));
    auto out = tensor(a->rows, b->cols);
    detail::mm_nn(a->value.data(), b->value.data(), out->value.data(), a->rows, a->cols, b->cols);
    if (detail::want_tape(tape, *a, *b)) {
        const bool ga = needs_grad(*a), gb = needs_grad(*b);
        tape->record(out, [=](Tape& t) {
            if (ga)
                detail::mm_nt_acc(out->grad.data(), b->value.data(), t.grad_buf(*a).data(),
                                  a->rows, b->cols, a->cols);
            if (gb)
                detail::mm_tn_acc(a->value.data(), out->grad.data(), t.grad_buf(*b).data(),
                                  a->rows, a->cols, b->cols);
        });
    }
    return out;
}

inline TensorPtr add(const TensorPtr& a, const TensorPtr& b, Tape* tape = nullptr) {
    auto kind = detail::ew_kind("add", *a, *b);
    using detail::EwKind;
    auto out = tensor(kind == EwKind::BroadcastA ? b->rows : a->rows,
                      kind == EwKind::BroadcastA ? b->cols : a->cols);
    const int n = out->size();
    for (int i = 0; i < n; ++i) {
        double av = kind == EwKind::BroadcastA ? a->value[0] : a->value[i];
        double bv = kind == EwKind::BroadcastB ? b->value[0] : b->value[i];
        out->value[i] = av + bv;
    }
    if (detail::want_tape(tape, *a, *b)) {
        const bool ga = needs_grad(*a), gb = needs_grad(*b);
        tape->record(out, [=](Tape& t) {
            if (ga) {
                auto& da = t.grad_buf(*a);
                if (kind == EwKind::BroadcastA)
                    for (int i = 0; i < n; ++i) da[0] += out->grad[i];
                else
                    for (int i = 0; i < n; ++i) da[i] += out->grad[i];
            }
            if (gb) {
                auto& db = t.grad_buf(*b);
                if (kind == EwKind::BroadcastB)
                    for (int i = 0; i < n; ++i) db[0] += out->grad[i];
                else
                    for (int i = 0; i < n; ++i) db[i] += out->grad[i];
            }
        });
    }
    return out;
}

inline TensorPtr sub(const TensorPtr& a, const TensorPtr& b, Tape* tape = nullptr) {
    auto kind = detail::ew_kind("sub", *a, *b);
    using detail::EwKind;
    auto out = tensor(kind == EwKind::BroadcastA ? b->rows : a->rows,
                      kind == EwKind::BroadcastA ? b->cols : a->cols);
    const int n = out->size();
    for (int i = 0; i < n; ++i) {
        double av = kind == EwKind::BroadcastA ? a->value[0] : a->value[i];
        double bv = kind == EwKind::BroadcastB ? b->value[0] : b->value[i];
        out->value[i] = av - bv;
    }
    if (detail::want_tape(tape, *a, *b)) {
        const bool ga = needs_grad(*a), gb = needs_grad(*b);
        tape->record(out, [=](Tape& t) {
            if (ga) {
                auto& da = t.grad_buf(*a);
                if (kind == EwKind::BroadcastA)
                    for (int i = 0; i < n; ++i) da[0] += out->grad[i];
                else
                    for (int i = 0; i < n; ++i) da[i] += out->grad[i];
            }
            if (gb) {
                auto& db = t.grad_buf(*b);
                if (kind == EwKind::BroadcastB)
                    for (int i = 0; i < n; ++i) db[0] -= out->grad[i];
                else
                    for (int i = 0; i < n; ++i) db[i] -= out->grad[i];
            }
        });
    }
    return out;
}

inline TensorPtr hadamard(const TensorPtr& a, const TensorPtr& b, Tape* tape = nullptr) {
    auto kind = detail::ew_kind("hadamard", *a, *b);
    using detail::EwKind;
    auto out = tensor(kind == EwKind::BroadcastA ? b->rows : a->rows,
                      kind == EwKind::BroadcastA ? b->cols : a->cols);
    const int n = out->size();
    for (int i = 0; i < n; ++i) {
        double av = kind == EwKind::BroadcastA ? a->value[0] : a->value[i];
        double bv = kind == EwKind::BroadcastB ? b->value[0] : b->value[i];
        out->value[i] = av * bv;
    }
    if (detail::want_tape(tape, *a, *b)) {
        const bool ga = needs_grad(*a), gb = needs_grad(*b);
        tape->record(out, [=](Tape& t) {
            if (ga) {
                auto& da = t.grad_buf(*a);
                if (kind == EwKind::BroadcastA)
                    for (int i = 0; i < n; ++i) da[0] += out->grad[i] * b->value[i];
                else if (kind == EwKind::BroadcastB)
                    for (int i = 0; i < n; ++i) da[i] += out->grad[i] * b->value[0];
                else
                    for (int i = 0; i < n; ++i) da[i] += out->grad[i] * b->value[i];
            }
            if (gb) {
                auto& db = t.grad_buf(*b);
                if (kind == EwKind::BroadcastB)
                    for (int i = 0; i < n; ++i) db[0] += out->grad[i] * a->value[i];
                else if (kind == EwKind::BroadcastA)
                    for (int i = 0; i < n; ++i) db[i] += out->grad[i] * a->value[0];
                else
                    for (int i = 0; i < n; ++i) db[i] += out->grad[i] * a->value[i];
            }
        });
    }
    return out;
}

inline TensorPtr concat_cols(const std::vector<TensorPtr>& parts, Tape* tape = nullptr) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    int rows = parts[0]->rows, cols = 0;
    bool track = false;
    for (const auto& p : parts) {
        if (p->rows != rows)
            throw ShapeError("concat_cols: row mismatch " + shape_str(*parts[0]) + " vs " + shape_str(*p));
        cols += p->cols;
        track = track || needs_grad(*p);
    }
    auto out = tensor(rows, cols);
    int off = 0;
    for (const auto& p : parts) {
        for (int i = 0; i < rows; ++i)
            std::copy_n(p->value.begin() + static_cast<std::size_t>(i) * p->cols, p->cols,
                        out->value.begin() + static_cast<std::size_t>(i) * cols + off);
        off += p->cols;
    }
    if (tape != nullptr && track) {
        tape->record(out, [out, parts, rows, cols](Tape& t) {
            int o = 0;
            for (const auto& p : parts) {
                if (needs_grad(*p)) {
                    auto& dp = t.grad_buf(*p);
                    for (int i = 0; i < rows; ++i)
                        for (int j = 0; j < p->cols; ++j)
                            dp[static_cast<std::size_t>(i) * p->cols + j] +=
                                out->grad[static_cast<std::size_t>(i) * cols + o + j];
                }
                o += p->cols;
            }
        });
    }
    return out;
}

inline TensorPtr transpose(const TensorPtr& a, Tape* tape = nullptr) {
    auto out = tensor(a->cols, a->rows);
    for (int i = 0; i < a->rows; ++i)
        for (int j = 0; j < a->cols; ++j) out->at(j, i) = a->at(i, j);
    if (detail::want_tape(tape, *a)) {
        tape->record(out, [=](Tape& t) {
            auto& da = t.grad_buf(*a);
            for (int i = 0; i < a->rows; ++i)
                for (int j = 0; j < a->cols; ++j)
                    da[static_cast<std::size_t>(i) * a->cols + j] +=
                        out->grad[static_cast<std::size_t>(j) * a->rows + i];
        });
    }
    return out;
}

namespace detail {

template <typename Fwd, typename Bwd>
TensorPtr unary_ew(const TensorPtr& a, Tape* tape, Fwd fwd, Bwd dvalue) {
    auto out = tensor(a->rows, a->cols);
    const int n = out->size();
    for (int i = 0; i < n; ++i) out->value[i] = fwd(a->value[i]);
    if (want_tape(tape, *a)) {
        tape->record(out, [=](Tape& t) {
            auto& da = t.grad_buf(*a);
            for (int i = 0; i < n; ++i) da[i] += out->grad[i] * dvalue(a->value[i], out->value[i]);
        });
    }
    return out;
}

}  // namespace detail

inline TensorPtr relu(const TensorPtr& a, Tape* tape = nullptr) {
    return detail::unary_ew(
        a, tape, [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline TensorPtr tanh_ew(const TensorPtr& a, Tape* tape = nullptr) {
    return detail::unary_ew(
        a, tape, [](double x) { return std::tanh(x); },
        [](double, double y) { return 1.0 - y * y; });
}

inline TensorPtr sigmoid(const TensorPtr& a, Tape* tape = nullptr) {
    return detail::unary_ew(
        a, tape,
        [](double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
        [](double, double y) { return y * (1.0 - y); });
}

inline TensorPtr exp_ew(const TensorPtr& a, Tape* tape = nullptr) {
    return detail::unary_ew(
        a, tape, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline TensorPtr log_ew(const TensorPtr& a, Tape* tape = nullptr) {
    return detail::unary_ew(
        a, tape, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

inline TensorPtr softmax_rows(const TensorPtr& a, Tape* tape = nullptr) {
    auto out = tensor(a->rows, a->cols);
    for (int i = 0; i < a->rows; ++i) {
        double mx = a->at(i, 0);
        for (int j = 1; j < a->cols; ++j) mx = std::max(mx, a->at(i, j));
        double sum = 0.0;
        for (int j = 0; j < a->cols; ++j) {
            double e = std::exp(a->at(i, j) - mx);
            out->at(i, j) = e;
            sum += e;
        }
        for (int j = 0; j < a->cols; ++j) out->at(i, j) /= sum;
    }
    if (detail::want_tape(tape, *a)) {
        tape->record(out, [=](Tape& t) {
            auto& da = t.grad_buf(*a);
            for (int i = 0; i < a->rows; ++i) {
                double dot = 0.0;
                for (int j = 0; j < a->cols; ++j)
                    dot += out->grad[static_cast<std::size_t>(i) * a->cols + j] * out->at(i, j);
                for (int j = 0; j < a->cols; ++j) {
                    std::size_t idx = static_cast<std::size_t>(i) * a->cols + j;
                    da[idx] += out->at(i, j) * (out->grad[idx] - dot);
                }
            }
        });
    }
    return out;
}

inline TensorPtr sum_all(const TensorPtr& a, Tape* tape = nullptr) {
    auto out = tensor(1, 1);
    double s = 0.0;
    for (double v : a->value) s += v;
    out->value[0] = s;
    if (detail::want_tape(tape, *a)) {
        tape->record(out, [=](Tape& t) {
            auto& da = t.grad_buf(*a);
            const double g = out->grad[0];
            for (auto& d : da) d += g;
        });
    }
    return out;
}

/// Weighted row sum: out(1 x cols) = sum_i mask[i] * a[i, :]. The mask is
/// data, not a differentiable input.
inline TensorPtr sum_rows_masked(const TensorPtr& a, const TensorPtr& mask, Tape* tape = nullptr) {
    if (mask->cols != 1 || mask->rows != a->rows)
        throw ShapeError("sum_rows_masked: mask " + shape_str(*mask) + " for " + shape_str(*a));
    auto out = tensor(1, a->cols);
    for (int i = 0; i < a->rows; ++i) {
        const double m = mask->value[i];
        if (m == 0.0) continue;
        for (int j = 0; j < a->cols; ++j) out->value[j] += m * a->at(i, j);
    }
    if (detail::want_tape(tape, *a)) {
        tape->record(out, [=](Tape& t) {
            auto& da = t.grad_buf(*a);
            for (int i = 0; i < a->rows; ++i) {
                const double m = mask->value[i];
                if (m == 0.0) continue;
                for (int j = 0; j < a->cols; ++j)
                    da[static_cast<std::size_t>(i) * a->cols + j] += m * out->grad[j];
            }
        });
    }
    return out;
}

inline TensorPtr scale(const TensorPtr& a, double c, Tape* tape = nullptr) {
    return detail::unary_ew(
        a, tape, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

// ---- verification helper ----------------------------------------------------

/// Max relative error between an analytic gradient and central finite
/// differences of `f` over every entry of `theta`. `f` must re-evaluate the
/// scalar under test from theta's current values (reseeding any stochastic
/// draws so both sides see the same stream). Entries of `theta` are perturbed
/// in place and restored.
inline double finite_diff_check(const std::function<double()>& f, const TensorPtr& theta,
                                std::span<const double> analytic, double h) {
    double worst = 0.0;
    for (int i = 0; i < theta->size(); ++i) {
        const double saved = theta->value[i];
        theta->value[i] = saved + h;
        const double up = f();
        theta->value[i] = saved - h;
        const double down = f();
        theta->value[i] = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double rel = std::abs(analytic[i] - numeric) / (std::abs(analytic[i]) + 1e-8);
        worst = std::max(worst, rel);
    }
    return worst;
}

}  // namespace molq
