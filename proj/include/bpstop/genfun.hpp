#pragma once

#include <bpstop/csv.hpp>
#include <bpstop/error.hpp>
#include <bpstop/kernel.hpp>
#include <bpstop/linalg.hpp>
#include <bpstop/model.hpp>
#include <bpstop/pgf.hpp>
#include <bpstop/spectral.hpp>

#include <algorithm>
#include <cmath>
#include <ostream>
#include <vector>

namespace bpstop {

// Deterministic s-grid: a Kronecker lattice frac(m * sqrt(p_j)) with m = 1..points,
// followed (optionally) by the corners {0, 0.5, 0.9}^k.
inline std::vector<Vector> make_s_grid(std::size_t k, std::size_t points, bool corners = true) {
    static constexpr double kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};
    std::vector<Vector> grid;
    for (std::size_t m = 1; m <= points; ++m) {
        Vector s(k);
        for (std::size_t j = 0; j < k; ++j) {
            const double alpha = std::sqrt(kPrimes[j % 16]) + static_cast<double>(j / 16);
            const double x = static_cast<double>(m) * alpha;
            s[j] = x - std::floor(x);
        }
        grid.push_back(std::move(s));
    }
    if (corners) {
        static constexpr double kCorner[] = {0.0, 0.5, 0.9};
        std::size_t total = 1;
        for (std::size_t j = 0; j < k; ++j) total *= 3;
        for (std::size_t c = 0; c < total; ++c) {
            Vector s(k);
            std::size_t code = c;
            for (std::size_t j = 0; j < k; ++j) {
                s[j] = kCorner[code % 3];
                code /= 3;
            }
            grid.push_back(std::move(s));
        }
    }
    return grid;
}

struct RatioRow {
    int t = 0;
    std::size_t s_index = 0;
    std::size_t type = 0;  // 0-based
    double value = 0.0;
    double target = 0.0;
    double abs_error = 0.0;
};

struct RatioTable {
    std::vector<RatioRow> rows;
    double worst_at_t_max = 0.0;
};

namespace detail {

template <typename Normalizer>
RatioTable ratio_table(const BranchingModel& model, const std::vector<Vector>& s_grid, int t_max, Normalizer norm,
                       const Vector& targets) {
    if (t_max < 1) throw PreconditionError("t_max must be at least 1");
    const std::size_t k = model.type_count();
    RatioTable out;
    for (std::size_t si = 0; si < s_grid.size(); ++si) {
        const Vector& s = s_grid[si];
        detail::require_cube(s, k, "grid point");
        if (std::all_of(s.begin(), s.end(), [](double x) { return x == 1.0; })) {
            throw PreconditionError("s = 1 is excluded from the ratio limit");
        }
        Vector R(k);
        for (std::size_t i = 0; i < k; ++i) R[i] = 1.0 - s[i];
        for (int t = 1; t <= t_max; ++t) {
            R = eval_complement(model, R);
            const double d = norm(R);
            if (!(d > 0.0)) throw PreconditionError("reference survival R^k(t,s) vanished; degenerate s");
            for (std::size_t i = 0; i < k; ++i) {
                const double v = R[i] / d;
                const double e = std::abs(v - targets[i]);
                out.rows.push_back({t, si, i, v, targets[i], e});
                if (t == t_max) out.worst_at_t_max = std::max(out.worst_at_t_max, e);
            }
        }
    }
    return out;
}

}  // namespace detail

// R^i(t, s) / (f_k R^k(t, s)) against nu_i, as the ratio-limit statement reads.
// k_ref is 1-based.
inline RatioTable ratio_limit(const BranchingModel& model, const SpectralSummary& summary, std::size_t k_ref,
                              const std::vector<Vector>& s_grid, int t_max) {
    if (k_ref < 1 || k_ref > model.type_count()) throw PreconditionError("reference type out of range");
    const double fk = summary.f[k_ref - 1];
    return detail::ratio_table(
        model, s_grid, t_max, [&](const Vector& R) { return fk * R[k_ref - 1]; }, summary.nu);
}

// R^i(t, s) / sum_k nu_k R^k(t, s) against f_i. Since R(t+1) ~ A R(t), the
// survival vector aligns with the right eigenvector f; this is the form that
// converges for every indecomposable noncyclic subcritical model.
inline RatioTable ratio_limit_normalized(const BranchingModel& model, const SpectralSummary& summary,
                                         const std::vector<Vector>& s_grid, int t_max) {
    return detail::ratio_table(
        model, s_grid, t_max, [&](const Vector& R) { return dot(summary.nu, R); }, summary.f);
}

inline void write_csv(std::ostream& os, const RatioTable& tab, const std::vector<Vector>& s_grid, bool header = true) {
    CsvWriter csv(os);
    if (header) csv.row("t", "s", "value", "target", "abs_error");
    for (const auto& r : tab.rows) {
        std::string s = "[";
        const Vector& v = s_grid[r.s_index];
        for (std::size_t j = 0; j < v.size(); ++j) s += (j ? "," : "") + format_double(v[j]);
        s += "];i=" + std::to_string(r.type + 1);
        csv.row(r.t, s, r.value, r.target, r.abs_error);
    }
}

// Largest negative part of A(1 - s) - (1 - h(s)) over the grid.
inline double mean_dominance(const BranchingModel& model, const Matrix& A, const std::vector<Vector>& s_grid) {
    double worst = 0.0;
    for (const Vector& s : s_grid) {
        detail::require_cube(s, model.type_count(), "grid point");
        Vector r(s.size());
        for (std::size_t j = 0; j < s.size(); ++j) r[j] = 1.0 - s[j];
        const Vector lhs = A * r;
        const Vector rhs = eval_complement(model, r);
        for (std::size_t i = 0; i < lhs.size(); ++i) worst = std::max(worst, rhs[i] - lhs[i]);
    }
    return worst;
}

// For every type j some type i produces exactly one type-j child with positive probability.
inline bool single_offspring_condition(const BranchingModel& model) {
    const std::size_t k = model.type_count();
    for (std::size_t j = 1; j <= k; ++j) {
        const PopulationState e = unit_state(j, k);
        bool found = false;
        for (const auto& law : model.laws())
            for (const auto& a : law.atoms()) found = found || a.offspring == e;
        if (!found) return false;
    }
    return true;
}

// Conditional law of the population at time t given non-extinction, started
// from one type-j particle, over the nonzero states of the capped space.
struct YaglomData {
    int t = 0;
    std::size_t source = 0;  // 1-based type
    std::vector<PopulationState> support;
    Vector p_star;
    double deficit = 0.0;          // overflow mass / (1 - P(t, E(j), 0)); never renormalized away
    double survival = 0.0;         // 1 - P(t, E(j), 0)
    double snapshot_distance = 0.0;  // total variation against the t-5 conditional law

    double mass_of(const PopulationState& k) const {
        auto it = std::lower_bound(support.begin(), support.end(), k);
        if (it == support.end() || !(*it == k)) return 0.0;
        return p_star[static_cast<std::size_t>(it - support.begin())];
    }
    Vector mean() const {
        Vector m(support.empty() ? 0 : support.front().dimension(), 0.0);
        for (std::size_t i = 0; i < support.size(); ++i)
            for (std::size_t j = 0; j < m.size(); ++j) m[j] += support[i][j] * p_star[i];
        return m;
    }
};

namespace detail {

inline Vector conditional_law(const Vector& pi, double overflow, double& survival, double& deficit) {
    // summed over surviving states; 1 - pi[0] would cancel catastrophically
    survival = overflow;
    for (std::size_t i = 1; i < pi.size(); ++i) survival += pi[i];
    Vector p(pi.size() - 1);
    if (!(survival > 0.0)) throw NumericalError("population extinct with probability one at the horizon");
    for (std::size_t i = 1; i < pi.size(); ++i) p[i - 1] = pi[i] / survival;
    deficit = overflow / survival;
    return p;
}

}  // namespace detail

// Rejects caps whose deficit reaches 0.01.
inline YaglomData yaglom(const BranchingModel& model, const TransitionKernel& kernel, const SpectralSummary& summary,
                         std::size_t j, int t) {
    const std::size_t k = model.type_count();
    if (j < 1 || j > k) throw PreconditionError("source type " + std::to_string(j) + " out of range");
    if (!summary.subcritical()) throw PreconditionError("Yaglom limit needs a subcritical model");
    if (t < 1) throw PreconditionError("horizon must be positive");
    const StateSpace& space = kernel.space();

    Vector pi(space.size(), 0.0);
    pi[space.index(unit_state(j, k))] = 1.0;
    double ov = 0.0;
    Vector earlier;
    double earlier_ov = 0.0;
    for (int step = 1; step <= t; ++step) {
        pi = kernel.apply_left(pi, ov);
        if (step == t - 5) {
            earlier = pi;
            earlier_ov = ov;
        }
    }

    YaglomData y;
    y.t = t;
    y.source = j;
    y.support.assign(space.states().begin() + 1, space.states().end());
    y.p_star = detail::conditional_law(pi, ov, y.survival, y.deficit);
    if (y.deficit >= 0.01) {
        throw PreconditionError("cap too small for the Yaglom law: deficit " + format_double(y.deficit));
    }
    if (!earlier.empty()) {
        double s0 = 0.0;
        double d0 = 0.0;
        Vector p0 = detail::conditional_law(earlier, earlier_ov, s0, d0);
        double tv = 0.0;
        for (std::size_t i = 0; i < p0.size(); ++i) tv += std::abs(p0[i] - y.p_star[i]);
        y.snapshot_distance = 0.5 * tv;
    }
    return y;
}

inline double total_variation(const YaglomData& a, const YaglomData& b) {
    if (a.support != b.support) throw PreconditionError("Yaglom laws live on different supports");
    double tv = 0.0;
    for (std::size_t i = 0; i < a.p_star.size(); ++i) tv += std::abs(a.p_star[i] - b.p_star[i]);
    return 0.5 * tv;
}

// h*(s) = sum_k p*_k s^k over the truncated support.
inline double eval_h_star(const YaglomData& y, std::span<const double> s) {
    double acc = 0.0;
    for (std::size_t i = 0; i < y.support.size(); ++i) {
        double term = y.p_star[i];
        for (std::size_t j = 0; j < s.size(); ++j)
            if (y.support[i][j] > 0) term *= std::pow(s[j], y.support[i][j]);
        acc += term;
    }
    return acc;
}

struct YaglomResidual {
    double max_residual = 0.0;
    double h_star_at_zero = 0.0;
    double h_star_at_one = 0.0;
    std::vector<double> residuals;  // per grid point
};

// |1 - h*(h(s)) - delta (1 - h*(s))| over the grid.
inline YaglomResidual yaglom_residual(const BranchingModel& model, const YaglomData& y, const SpectralSummary& summary,
                                      const std::vector<Vector>& s_grid) {
    const std::size_t k = model.type_count();
    YaglomResidual out;
    out.h_star_at_zero = eval_h_star(y, Vector(k, 0.0));
    out.h_star_at_one = eval_h_star(y, Vector(k, 1.0));
    for (const Vector& s : s_grid) {
        detail::require_cube(s, k, "grid point");
        const Vector hs = eval_h(model, s);
        const double lhs = 1.0 - eval_h_star(y, hs);
        const double rhs = summary.delta * (1.0 - eval_h_star(y, s));
        const double r = std::abs(lhs - rhs);
        out.residuals.push_back(r);
        out.max_residual = std::max(out.max_residual, r);
    }
    return out;
}

}  // namespace bpstop
