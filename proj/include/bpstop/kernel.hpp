#pragma once

#include <bpstop/error.hpp>
#include <bpstop/model.hpp>
#include <bpstop/state_space.hpp>

#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <span>
#include <vector>

namespace bpstop {

// Row of a transition kernel: dense probabilities over ordinals [lo, lo + p.size())
// plus the mass that left the state space.
struct KernelRow {
    std::size_t lo = 0;
    std::vector<double> p;
    double overflow = 0.0;

    double at(std::size_t j) const { return (j >= lo && j < lo + p.size()) ? p[j - lo] : 0.0; }
    double sum() const {
        double s = overflow;
        for (double v : p) s += v;
        return s;
    }
};

// t-step transition probabilities P(t, x, y) of the free process over a capped
// state space. The overflow sentinel is absorbing and is not stored as a row.
class TransitionKernel {
public:
    TransitionKernel(std::shared_ptr<const StateSpace> space, int t, std::vector<KernelRow> rows)
        : space_(std::move(space)), t_(t), rows_(std::move(rows)) {
        if (rows_.size() != space_->size()) throw PreconditionError("kernel needs one row per state");
    }

    const StateSpace& space() const noexcept { return *space_; }
    std::shared_ptr<const StateSpace> space_ptr() const noexcept { return space_; }
    int steps() const noexcept { return t_; }
    std::size_t size() const noexcept { return rows_.size(); }

    const KernelRow& row(std::size_t i) const { return rows_.at(i); }
    double prob(std::size_t from, std::size_t to) const {
        if (from == space_->overflow()) return to == space_->overflow() ? 1.0 : 0.0;
        return to == space_->overflow() ? rows_.at(from).overflow : rows_.at(from).at(to);
    }
    double overflow_mass(std::size_t from) const { return rows_.at(from).overflow; }

    // (P v)(i) = sum_j P(i,j) v(j) + P(i,overflow) v_overflow
    std::vector<double> apply(std::span<const double> v, double v_overflow = 0.0) const {
        std::vector<double> out(rows_.size(), 0.0);
        for (std::size_t i = 0; i < rows_.size(); ++i) {
            const KernelRow& r = rows_[i];
            double acc = r.overflow * v_overflow;
            const double* vp = v.data() + r.lo;
            for (std::size_t j = 0; j < r.p.size(); ++j) acc += r.p[j] * vp[j];
            out[i] = acc;
        }
        return out;
    }

    // (pi P)(j); pi_overflow is carried through and updated in place.
    std::vector<double> apply_left(std::span<const double> pi, double& pi_overflow) const {
        std::vector<double> out(rows_.size(), 0.0);
        double ov = pi_overflow;
        for (std::size_t i = 0; i < rows_.size(); ++i) {
            const double w = pi[i];
            if (w == 0.0) continue;
            const KernelRow& r = rows_[i];
            for (std::size_t j = 0; j < r.p.size(); ++j) out[r.lo + j] += w * r.p[j];
            ov += w * r.overflow;
        }
        pi_overflow = ov;
        return out;
    }

    double max_row_defect() const {
        double worst = 0.0;
        for (const auto& r : rows_) worst = std::max(worst, std::abs(r.sum() - 1.0));
        return worst;
    }

private:
    std::shared_ptr<const StateSpace> space_;
    int t_;
    std::vector<KernelRow> rows_;
};

namespace detail {

inline KernelRow trim_row(std::vector<double>& scratch, double overflow) {
    KernelRow row;
    row.overflow = overflow;
    std::size_t lo = scratch.size();
    std::size_t hi = 0;
    for (std::size_t j = 0; j < scratch.size(); ++j) {
        if (scratch[j] < std::numeric_limits<double>::min()) scratch[j] = 0.0;
        if (scratch[j] != 0.0) {
            lo = std::min(lo, j);
            hi = j + 1;
        }
    }
    if (lo < hi) {
        row.lo = lo;
        row.p.assign(scratch.begin() + static_cast<std::ptrdiff_t>(lo), scratch.begin() + static_cast<std::ptrdiff_t>(hi));
    }
    std::fill(scratch.begin(), scratch.end(), 0.0);
    return row;
}

}  // namespace detail

// One-step kernel: the row of state x is the convolution of x_i copies of each
// type's law. Built by adding one particle at a time to an earlier row.
inline TransitionKernel one_step_kernel(const BranchingModel& model, std::shared_ptr<const StateSpace> space) {
    const StateSpace& sp = *space;
    const std::size_t k = sp.types();
    if (model.type_count() != k) throw PreconditionError("model dimension does not match state space");
    const long long cap = sp.cap();

    std::vector<KernelRow> rows(sp.size());
    std::vector<double> scratch(sp.size(), 0.0);
    std::vector<int> z(k);

    rows[0].lo = 0;
    rows[0].p = {1.0};
    for (std::size_t idx = 1; idx < sp.size(); ++idx) {
        const PopulationState& x = sp.state(idx);
        std::size_t type = 0;
        while (x[type] == 0) ++type;
        std::vector<int> pred(x.counts().begin(), x.counts().end());
        --pred[type];
        const KernelRow& base = rows[sp.index(std::span<const int>(pred))];
        const OffspringLaw& law = model.law(type);

        double overflow = base.overflow;
        for (std::size_t j = 0; j < base.p.size(); ++j) {
            const double w = base.p[j];
            if (w == 0.0) continue;
            const PopulationState& y = sp.state(base.lo + j);
            const long long ytot = y.total();
            for (const Atom& a : law.atoms()) {
                const long long ztot = ytot + a.offspring.total();
                if (ztot > cap) {
                    overflow += w * a.p;
                    continue;
                }
                for (std::size_t c = 0; c < k; ++c) z[c] = y[c] + a.offspring[c];
                scratch[sp.index(std::span<const int>(z))] += w * a.p;
            }
        }
        rows[idx] = detail::trim_row(scratch, overflow);
    }
    return TransitionKernel(std::move(space), 1, std::move(rows));
}

inline TransitionKernel one_step_kernel(const BranchingModel& model, const StateSpace& space) {
    return one_step_kernel(model, std::make_shared<const StateSpace>(space));
}

// a then b: (a o b)(x, y) = sum_g a(x, g) b(g, y), overflow absorbing.
inline TransitionKernel compose(const TransitionKernel& a, const TransitionKernel& b) {
    if (a.size() != b.size()) throw PreconditionError("kernels live on different state spaces");
    const std::size_t n = a.size();
    std::vector<KernelRow> rows(n);
    std::vector<double> scratch(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const KernelRow& ra = a.row(i);
        double overflow = ra.overflow;
        for (std::size_t j = 0; j < ra.p.size(); ++j) {
            const double w = ra.p[j];
            if (w == 0.0) continue;
            const KernelRow& rb = b.row(ra.lo + j);
            for (std::size_t m = 0; m < rb.p.size(); ++m) scratch[rb.lo + m] += w * rb.p[m];
            overflow += w * rb.overflow;
        }
        rows[i] = detail::trim_row(scratch, overflow);
    }
    return TransitionKernel(a.space_ptr(), a.steps() + b.steps(), std::move(rows));
}

// P(t) by repeated composition with the one-step kernel.
inline TransitionKernel t_step_kernel(const TransitionKernel& kernel, int t) {
    if (t < 1) throw PreconditionError("t must be at least 1");
    TransitionKernel out = kernel;
    for (int s = 1; s < t; ++s) out = compose(out, kernel);
    return out;
}

}  // namespace bpstop
