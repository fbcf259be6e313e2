#pragma once

#include <bpstop/csv.hpp>
#include <bpstop/error.hpp>
#include <bpstop/kernel.hpp>
#include <bpstop/linalg.hpp>
#include <bpstop/model.hpp>
#include <bpstop/spectral.hpp>
#include <bpstop/state_space.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

namespace bpstop {

namespace detail {

inline std::vector<std::size_t> stop_ordinals(const StateSpace& space, const StoppingSet& s) {
    if (s.dimension() != space.types()) throw PreconditionError("stopping set dimension does not match the model");
    std::vector<std::size_t> out;
    for (const auto& m : s.members()) {
        auto idx = space.find(m);
        if (!idx) throw PreconditionError("stopping state " + m.str() + " exceeds the cap");
        out.push_back(*idx);
    }
    return out;
}

inline std::vector<char> stop_mask(const StateSpace& space, const StoppingSet& s) {
    std::vector<char> mask(space.size(), 0);
    for (std::size_t i : stop_ordinals(space, s)) mask[i] = 1;
    return mask;
}

inline std::size_t member_index(const StoppingSet& s, const PopulationState& r) {
    const auto& m = s.members();
    auto it = std::lower_bound(m.begin(), m.end(), r);
    if (it == m.end() || !(*it == r)) throw PreconditionError("target " + r.str() + " is not in the stopping set");
    return static_cast<std::size_t>(it - m.begin());
}

inline void require_start(const StateSpace& space, const StoppingSet& s, const PopulationState& n) {
    if (n.dimension() != space.types()) throw PreconditionError("start state has the wrong dimension");
    if (n.is_zero()) throw PreconditionError("start state is the zero state");
    if (s.contains(n)) throw PreconditionError("start state " + n.str() + " lies in the stopping set");
    if (!space.contains(n)) throw PreconditionError("start state " + n.str() + " exceeds the cap");
}

}  // namespace detail

// Stopped chain: rows of S and of the zero state become self-loops.
inline TransitionKernel stopped_kernel(const TransitionKernel& kernel, const StoppingSet& s) {
    const StateSpace& space = kernel.space();
    const auto mask = detail::stop_mask(space, s);
    std::vector<KernelRow> rows;
    rows.reserve(kernel.size());
    for (std::size_t i = 0; i < kernel.size(); ++i) {
        if (mask[i] || i == space.zero_index()) {
            KernelRow r;
            r.lo = i;
            r.p = {1.0};
            rows.push_back(std::move(r));
        } else {
            rows.push_back(kernel.row(i));
        }
    }
    return TransitionKernel(kernel.space_ptr(), kernel.steps(), std::move(rows));
}

// P~(t, alpha, r): probability of sitting at r at time t while avoiding S at
// times 1..t-1. Stored as columns over all start ordinals.
class RestrictedKernel {
public:
    RestrictedKernel(StoppingSet s, int t_max, std::vector<std::vector<Vector>> columns)
        : s_(std::move(s)), t_max_(t_max), columns_(std::move(columns)) {}

    const StoppingSet& stopping_set() const noexcept { return s_; }
    int t_max() const noexcept { return t_max_; }

    // t in 1..t_max, r_index into stopping_set().members()
    const Vector& column(int t, std::size_t r_index) const { return columns_.at(static_cast<std::size_t>(t - 1)).at(r_index); }
    double value(int t, std::size_t from, std::size_t r_index) const { return column(t, r_index).at(from); }

private:
    StoppingSet s_;
    int t_max_;
    std::vector<std::vector<Vector>> columns_;  // [t-1][r]
};

// Recursion route: P~(1) = P(1); P~(t, a, r) = sum_{b not in S} P(1, a, b) P~(t-1, b, r).
inline RestrictedKernel restricted_kernel(const TransitionKernel& kernel, const StoppingSet& s, int t_max) {
    if (t_max < 1) throw PreconditionError("t_max must be at least 1");
    const StateSpace& space = kernel.space();
    const auto targets = detail::stop_ordinals(space, s);
    const auto mask = detail::stop_mask(space, s);
    std::vector<std::vector<Vector>> cols(static_cast<std::size_t>(t_max));
    for (std::size_t r = 0; r < targets.size(); ++r) {
        Vector e(space.size(), 0.0);
        e[targets[r]] = 1.0;
        Vector col = kernel.apply(e);
        cols[0].push_back(col);
        for (int t = 2; t <= t_max; ++t) {
            for (std::size_t i = 0; i < col.size(); ++i)
                if (mask[i]) col[i] = 0.0;
            col = kernel.apply(col);
            cols[static_cast<std::size_t>(t - 1)].push_back(col);
        }
    }
    return RestrictedKernel(s, t_max, std::move(cols));
}

// Free-process columns P(l, ., alpha) for alpha in S, l = 1..t_max.
class FreeColumns {
public:
    FreeColumns(StoppingSet s, std::vector<std::vector<Vector>> columns)
        : s_(std::move(s)), columns_(std::move(columns)) {}

    const StoppingSet& stopping_set() const noexcept { return s_; }
    int t_max() const noexcept { return static_cast<int>(columns_.size()); }
    const Vector& column(int l, std::size_t alpha_index) const {
        return columns_.at(static_cast<std::size_t>(l - 1)).at(alpha_index);
    }

private:
    StoppingSet s_;
    std::vector<std::vector<Vector>> columns_;
};

inline FreeColumns free_columns(const TransitionKernel& kernel, const StoppingSet& s, int t_max) {
    if (t_max < 1) throw PreconditionError("t_max must be at least 1");
    const StateSpace& space = kernel.space();
    const auto targets = detail::stop_ordinals(space, s);
    std::vector<std::vector<Vector>> cols(static_cast<std::size_t>(t_max));
    for (std::size_t a = 0; a < targets.size(); ++a) {
        Vector col(space.size(), 0.0);
        col[targets[a]] = 1.0;
        for (int l = 1; l <= t_max; ++l) {
            col = kernel.apply(col);
            cols[static_cast<std::size_t>(l - 1)].push_back(col);
        }
    }
    return FreeColumns(s, std::move(cols));
}

// Last-visit route: P~(l, n, r) = P(l, n, r) - sum_{a in S} sum_{i<l} P(l-i, n, a) P~(i, a, r).
// Uses only free-process columns and its own earlier output.
inline RestrictedKernel restricted_kernel_inclusion_exclusion(const TransitionKernel& kernel, const StoppingSet& s,
                                                              int t_max) {
    const FreeColumns free = free_columns(kernel, s, t_max);
    const auto targets = detail::stop_ordinals(kernel.space(), s);
    const std::size_t n = kernel.size();
    std::vector<std::vector<Vector>> cols(static_cast<std::size_t>(t_max), std::vector<Vector>(targets.size()));
    for (std::size_t r = 0; r < targets.size(); ++r) {
        for (int l = 1; l <= t_max; ++l) {
            Vector col = free.column(l, r);
            for (std::size_t a = 0; a < targets.size(); ++a) {
                for (int i = 1; i < l; ++i) {
                    const double w = cols[static_cast<std::size_t>(i - 1)][r][targets[a]];
                    if (w == 0.0) continue;
                    const Vector& f = free.column(l - i, a);
                    for (std::size_t x = 0; x < n; ++x) col[x] -= f[x] * w;
                }
            }
            cols[static_cast<std::size_t>(l - 1)][r] = std::move(col);
        }
    }
    return RestrictedKernel(s, t_max, std::move(cols));
}

// c_{ar}(t, l) for 1 <= l <= t <= t_max, and the limits c_{ar} = lim_t c_{ar}(t, l).
class StopCoefficients {
public:
    StopCoefficients(StoppingSet s, int t_max, std::vector<std::vector<std::vector<double>>> table, Matrix limits,
                     Matrix limit_bounds)
        : s_(std::move(s)),
          t_max_(t_max),
          table_(std::move(table)),
          limits_(std::move(limits)),
          limit_bounds_(std::move(limit_bounds)) {}

    const StoppingSet& stopping_set() const noexcept { return s_; }
    int t_max() const noexcept { return t_max_; }

    // alpha, r index into stopping_set().members(); 1 <= l <= t <= t_max
    double at(std::size_t alpha, std::size_t r, int t, int l) const {
        if (l < 1 || l > t || t > t_max_) throw PreconditionError("coefficient index out of range");
        return table_[alpha * s_.size() + r][static_cast<std::size_t>(t - 1)][static_cast<std::size_t>(l - 1)];
    }
    double limit(std::size_t alpha, std::size_t r) const { return limits_(alpha, r); }
    // Upper bound on |limit(alpha, r) - c_{ar}|; infinite when no subcritical mean matrix was supplied.
    double limit_bound(std::size_t alpha, std::size_t r) const { return limit_bounds_(alpha, r); }

private:
    StoppingSet s_;
    int t_max_;
    std::vector<std::vector<std::vector<double>>> table_;  // [alpha*|S|+r][t-1][l-1]
    Matrix limits_;
    Matrix limit_bounds_;
};

namespace detail {

// g = (I - A)^{-1} 1, the expected total progeny per type; requires delta < 1.
inline Vector progeny(const Matrix& A) {
    const std::size_t k = A.rows();
    Matrix M = Matrix::identity(k);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) M(i, j) -= A(i, j);
    Vector g = solve(M, Vector(k, 1.0));
    for (double v : g)
        if (!(v >= 0.0) || !std::isfinite(v)) throw PreconditionError("mean matrix is not subcritical");
    return g;
}

inline double state_dot(const PopulationState& x, std::span<const double> w) {
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) s += x[i] * w[i];
    return s;
}

}  // namespace detail

// Triangular table by the shift rule c(t+1, l+1) = c(t, l), the first column
// c(t+1, 1) = [a == r] - sum_{l=1}^{t} P~(l, a, r) and c(1, 1) = [a == r].
// With a subcritical mean matrix the limits carry the tail bound
// sum_{u > t_max} P~(u, a, r) <= a^T A^{t_max+1} (I - A)^{-1} 1.
inline StopCoefficients stop_coefficients(const RestrictedKernel& restricted, const StateSpace& space, int t_max,
                                          const Matrix* mean_matrix = nullptr) {
    if (t_max < 1 || t_max > restricted.t_max()) throw PreconditionError("restricted kernel does not cover t_max");
    const StoppingSet& s = restricted.stopping_set();
    const auto ord = detail::stop_ordinals(space, s);
    const std::size_t m = s.size();

    Vector tail_weight;
    if (mean_matrix) {
        Vector w = detail::progeny(*mean_matrix);
        for (int u = 0; u <= t_max; ++u) w = *mean_matrix * w;
        tail_weight = std::move(w);
    }

    std::vector<std::vector<std::vector<double>>> table(m * m);
    Matrix limits(m, m);
    Matrix bounds(m, m, std::numeric_limits<double>::infinity());
    for (std::size_t a = 0; a < m; ++a) {
        for (std::size_t r = 0; r < m; ++r) {
            const double kron = a == r ? 1.0 : 0.0;
            auto& tri = table[a * m + r];
            tri.resize(static_cast<std::size_t>(t_max));
            tri[0] = {kron};
            double partial = 0.0;
            for (int t = 1; t < t_max; ++t) {
                partial += restricted.value(t, ord[a], r);
                auto& next = tri[static_cast<std::size_t>(t)];
                next.resize(static_cast<std::size_t>(t + 1));
                next[0] = kron - partial;
                for (int l = 1; l <= t; ++l) next[static_cast<std::size_t>(l)] = tri[static_cast<std::size_t>(t - 1)][static_cast<std::size_t>(l - 1)];
            }
            partial += restricted.value(t_max, ord[a], r);
            limits(a, r) = kron - partial;
            if (mean_matrix) bounds(a, r) = detail::state_dot(s.members()[a], tail_weight);
        }
    }
    return StopCoefficients(s, t_max, std::move(table), std::move(limits), std::move(bounds));
}

enum class AbsorptionMethod { direct, formula, restricted_sum, series };

inline const char* to_string(AbsorptionMethod m) {
    switch (m) {
        case AbsorptionMethod::direct: return "direct";
        case AbsorptionMethod::formula: return "formula";
        case AbsorptionMethod::restricted_sum: return "restricted_sum";
        case AbsorptionMethod::series: return "series";
    }
    return "?";
}

// q^n_r(t) for every start ordinal and t = 1..t_max, with the probability of
// having left the cap by time t as an error bound.
struct AbsorptionTable {
    PopulationState r;
    AbsorptionMethod method = AbsorptionMethod::direct;
    std::vector<Vector> q;         // [t-1][ordinal]
    std::vector<Vector> overflow;  // [t-1][ordinal]

    int t_max() const { return static_cast<int>(q.size()); }
    double at(int t, std::size_t ordinal) const { return q.at(static_cast<std::size_t>(t - 1)).at(ordinal); }
};

// P(stopped chain has reached the overflow sentinel by t), t = 1..t_max.
inline std::vector<Vector> overflow_exposure(const TransitionKernel& stopped, int t_max) {
    std::vector<Vector> out;
    Vector u(stopped.size(), 0.0);
    for (int t = 1; t <= t_max; ++t) {
        u = stopped.apply(u, 1.0);
        out.push_back(u);
    }
    return out;
}

// Direct route: iterate the stopped chain backwards from the indicator of r.
inline AbsorptionTable absorption_direct(const TransitionKernel& kernel, const StoppingSet& s,
                                         const PopulationState& r, int t_max) {
    detail::member_index(s, r);
    const TransitionKernel stopped = stopped_kernel(kernel, s);
    AbsorptionTable tab{r, AbsorptionMethod::direct, {}, overflow_exposure(stopped, t_max)};
    Vector v(kernel.size(), 0.0);
    v[kernel.space().index(r)] = 1.0;
    for (int t = 1; t <= t_max; ++t) {
        v = stopped.apply(v);
        tab.q.push_back(v);
    }
    return tab;
}

// q^n_r(t) = sum_{l <= t} P~(l, n, r).
inline AbsorptionTable absorption_restricted_sum(const RestrictedKernel& restricted, const PopulationState& r,
                                                 std::vector<Vector> overflow = {}) {
    const std::size_t ri = detail::member_index(restricted.stopping_set(), r);
    AbsorptionTable tab{r, AbsorptionMethod::restricted_sum, {}, std::move(overflow)};
    Vector acc(restricted.column(1, ri).size(), 0.0);
    for (int t = 1; t <= restricted.t_max(); ++t) {
        const Vector& c = restricted.column(t, ri);
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += c[i];
        tab.q.push_back(acc);
    }
    return tab;
}

// q^n_r(t) = sum_{a in S} sum_{l=1}^{t} c_{ar}(t, l) P(l, n, a).
inline AbsorptionTable absorption_formula(const FreeColumns& free, const StopCoefficients& coeffs,
                                          const PopulationState& r, std::vector<Vector> overflow = {}) {
    const StoppingSet& s = coeffs.stopping_set();
    const std::size_t ri = detail::member_index(s, r);
    const int t_max = std::min(coeffs.t_max(), free.t_max());
    AbsorptionTable tab{r, AbsorptionMethod::formula, {}, std::move(overflow)};
    const std::size_t n = free.column(1, 0).size();
    for (int t = 1; t <= t_max; ++t) {
        Vector q(n, 0.0);
        for (std::size_t a = 0; a < s.size(); ++a)
            for (int l = 1; l <= t; ++l) {
                const double c = coeffs.at(a, ri, t, l);
                if (c == 0.0) continue;
                const Vector& col = free.column(l, a);
                for (std::size_t x = 0; x < n; ++x) q[x] += c * col[x];
            }
        tab.q.push_back(std::move(q));
    }
    return tab;
}

struct AbsorptionValue {
    double q = 0.0;
    double overflow_bound = 0.0;
};

inline AbsorptionValue absorb_direct(const TransitionKernel& kernel, const StoppingSet& s, const PopulationState& n,
                                     const PopulationState& r, int t) {
    detail::require_start(kernel.space(), s, n);
    if (t < 1) throw PreconditionError("t must be at least 1");
    const auto tab = absorption_direct(kernel, s, r, t);
    const std::size_t i = kernel.space().index(n);
    return {tab.at(t, i), tab.overflow.back()[i]};
}

inline AbsorptionValue absorb_via_formula(const TransitionKernel& kernel, const StopCoefficients& coeffs,
                                          const PopulationState& n, const PopulationState& r, int t) {
    const StoppingSet& s = coeffs.stopping_set();
    detail::require_start(kernel.space(), s, n);
    if (t < 1 || t > coeffs.t_max()) throw PreconditionError("t outside the coefficient table");
    const auto free = free_columns(kernel, s, t);
    const std::size_t ri = detail::member_index(s, r);
    const std::size_t i = kernel.space().index(n);
    double q = 0.0;
    for (std::size_t a = 0; a < s.size(); ++a)
        for (int l = 1; l <= t; ++l) q += coeffs.at(a, ri, t, l) * free.column(l, a)[i];
    const auto ov = overflow_exposure(stopped_kernel(kernel, s), t);
    return {q, ov.back()[i]};
}

// Third route: sum_{l <= t} P~(l, n, r).
inline AbsorptionValue absorb_restricted_sum(const TransitionKernel& kernel, const StoppingSet& s,
                                             const PopulationState& n, const PopulationState& r, int t) {
    detail::require_start(kernel.space(), s, n);
    if (t < 1) throw PreconditionError("t must be at least 1");
    const auto rk = restricted_kernel(kernel, s, t);
    const auto tab = absorption_restricted_sum(rk, r);
    const std::size_t i = kernel.space().index(n);
    const auto ov = overflow_exposure(stopped_kernel(kernel, s), t);
    return {tab.at(t, i), ov.back()[i]};
}

// Limiting absorption probabilities q^n_r for every ordinal by the series
// sum_l sum_a c_{ar} P(l, n, a).
struct LimitingAbsorption {
    PopulationState r;
    Vector q;               // per ordinal
    Vector series_bound;    // truncation of the l-series and of the c limits
    Vector overflow_bound;  // probability of leaving the cap
    Vector c_limits;        // c_{ar}, a over S
    int terms = 0;
    int coefficient_terms = 0;

    double bound(std::size_t i) const { return series_bound[i]; }
};

inline LimitingAbsorption limiting_absorption_all(const TransitionKernel& kernel, const StoppingSet& s,
                                                  const Matrix& mean_matrix, const SpectralSummary& summary,
                                                  const PopulationState& r, double tol,
                                                  std::span<const std::size_t> starts = {}, int max_terms = 100000) {
    if (!(summary.delta < 1.0) || !summary.subcritical()) {
        throw PreconditionError("limiting absorption needs a subcritical model (delta = " +
                                std::to_string(summary.delta) + ")");
    }
    if (!(tol > 0.0)) throw PreconditionError("tol must be positive");
    const StateSpace& space = kernel.space();
    const auto ord = detail::stop_ordinals(space, s);
    const auto mask = detail::stop_mask(space, s);
    const std::size_t ri = detail::member_index(s, r);
    const std::size_t n = kernel.size();
    const Matrix& A = mean_matrix;
    const Vector g = detail::progeny(A);

    std::vector<std::size_t> watch(starts.begin(), starts.end());
    if (watch.empty())
        for (std::size_t i = 0; i < n; ++i) watch.push_back(i);

    // expected number of visits to S (at times >= 1) is at most n^T A g
    const Vector Ag = A * g;
    double max_visits = 0.0;
    for (std::size_t i : watch) max_visits = std::max(max_visits, detail::state_dot(space.state(i), Ag));
    const double c_tol = 0.5 * tol / (static_cast<double>(s.size()) * std::max(1.0, max_visits));

    LimitingAbsorption out;
    out.r = r;

    // c_{ar} = [a == r] - sum_u P~(u, a, r), iterated until the tail bound drops below c_tol
    Vector col(n, 0.0);
    col[ord[ri]] = 1.0;
    col = kernel.apply(col);
    Vector sums(s.size(), 0.0);
    Vector w = A * g;  // A^{u+1} g after u terms
    double worst_c = 0.0;
    int u = 0;
    for (; u < max_terms; ++u) {
        for (std::size_t a = 0; a < s.size(); ++a) sums[a] += col[ord[a]];
        w = A * w;
        worst_c = 0.0;
        for (std::size_t a = 0; a < s.size(); ++a)
            worst_c = std::max(worst_c, detail::state_dot(s.members()[a], w));
        if (worst_c < c_tol) break;
        for (std::size_t i = 0; i < n; ++i)
            if (mask[i]) col[i] = 0.0;
        col = kernel.apply(col);
    }
    if (worst_c >= c_tol) throw NumericalError("stop coefficient series did not reach tolerance");
    out.coefficient_terms = u + 1;
    out.c_limits.resize(s.size());
    for (std::size_t a = 0; a < s.size(); ++a) out.c_limits[a] = (a == ri ? 1.0 : 0.0) - sums[a];

    // series over l, columns P(l, ., a) propagated together with the overflow exposure
    const TransitionKernel stopped = stopped_kernel(kernel, s);
    std::vector<Vector> cols(s.size(), Vector(n, 0.0));
    for (std::size_t a = 0; a < s.size(); ++a) cols[a][ord[a]] = 1.0;
    out.q.assign(n, 0.0);
    Vector exposure(n, 0.0);
    Vector tail = A * g;  // A^{L+1} g after L terms
    Vector alive = g;     // A^L g; bounds the mass still alive at L
    int l = 0;
    double worst = std::numeric_limits<double>::infinity();
    while (l < max_terms) {
        ++l;
        for (std::size_t a = 0; a < s.size(); ++a) {
            cols[a] = kernel.apply(cols[a]);
            const double c = out.c_limits[a];
            for (std::size_t i = 0; i < n; ++i) out.q[i] += c * cols[a][i];
        }
        exposure = stopped.apply(exposure, 1.0);
        alive = tail;
        tail = A * tail;
        worst = 0.0;
        for (std::size_t i : watch) worst = std::max(worst, detail::state_dot(space.state(i), tail));
        if (worst < 0.5 * tol) break;
    }
    if (worst >= 0.5 * tol) throw NumericalError("absorption series did not reach tolerance");
    out.terms = l;

    out.series_bound.assign(n, 0.0);
    out.overflow_bound.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const PopulationState& x = space.state(i);
        out.series_bound[i] = detail::state_dot(x, tail) + static_cast<double>(s.size()) * worst_c * detail::state_dot(x, Ag);
        out.overflow_bound[i] = exposure[i] + detail::state_dot(x, alive);
    }
    return out;
}

struct LimitValue {
    double q = 0.0;
    double bound = 0.0;
    double overflow_bound = 0.0;
    int terms = 0;
};

inline LimitValue limiting_absorption(const TransitionKernel& kernel, const StoppingSet& s, const Matrix& mean_matrix,
                                      const SpectralSummary& summary, const PopulationState& n,
                                      const PopulationState& r, double tol) {
    detail::require_start(kernel.space(), s, n);
    const std::size_t i = kernel.space().index(n);
    const std::size_t starts[] = {i};
    const auto lim = limiting_absorption_all(kernel, s, mean_matrix, summary, r, tol, starts);
    return {lim.q[i], lim.series_bound[i], lim.overflow_bound[i], lim.terms};
}

// CSV: n,r,t,method,q,overflow_bound. Start states in S and the zero state are skipped.
inline void write_csv(std::ostream& os, const AbsorptionTable& tab, const StateSpace& space, const StoppingSet& s,
                      bool header = true) {
    CsvWriter csv(os);
    if (header) csv.row("n", "r", "t", "method", "q", "overflow_bound");
    for (std::size_t i = 0; i < space.size(); ++i) {
        const PopulationState& n = space.state(i);
        if (n.is_zero() || s.contains(n)) continue;
        for (int t = 1; t <= tab.t_max(); ++t) {
            const double ov = tab.overflow.empty() ? 0.0 : tab.overflow[static_cast<std::size_t>(t - 1)][i];
            csv.row(n.str(), tab.r.str(), t, to_string(tab.method), tab.at(t, i), ov);
        }
    }
}

}  // namespace bpstop
