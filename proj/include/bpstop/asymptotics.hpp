#pragma once

#include <bpstop/absorption.hpp>
#include <bpstop/csv.hpp>
#include <bpstop/error.hpp>
#include <bpstop/kernel.hpp>
#include <bpstop/linalg.hpp>
#include <bpstop/model.hpp>
#include <bpstop/spectral.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <vector>

namespace bpstop {

inline constexpr int kDefaultLowerTruncation = -60;
inline constexpr int kDefaultUpperTruncation = 200;

struct HjValue {
    double value = 0.0;
    double tail_bound = 0.0;  // bounds the omitted terms plus the boundary term at lower_truncation
};

// H_j(x) = sum_L delta^{j(L+x)} exp(-aK delta^{L+x}), truncated to L in [lo, hi].
inline HjValue eval_Hj(double x, int j, double delta, double aK, int lo = kDefaultLowerTruncation,
                       int hi = kDefaultUpperTruncation) {
    if (!(delta > 0.0 && delta < 1.0)) throw PreconditionError("delta must lie in (0,1)");
    if (!(aK > 0.0)) throw PreconditionError("(a,K) must be positive; the lower tail diverges otherwise");
    if (j < 1) throw PreconditionError("basis index j must be at least 1");
    if (!(lo < 0 && hi > 0)) throw PreconditionError("truncation must satisfy lo < 0 < hi");

    const double ld = std::log(delta);
    auto term = [&](int L) {
        const double z = (static_cast<double>(L) + x) * ld;  // log y, y = delta^{L+x}
        return std::exp(static_cast<double>(j) * z - aK * std::exp(z));
    };

    HjValue out;
    for (int L = hi; L >= lo; --L) out.value += term(L);

    // upper tail: terms below delta^{j(L+x)}, geometric with ratio delta^j
    const double dj = std::pow(delta, j);
    const double upper = std::exp(static_cast<double>(j) * (static_cast<double>(hi + 1) + x) * ld) / (1.0 - dj);

    // lower tail from L = lo downwards: successive ratios
    // delta^{-j} exp(-aK y_L (1/delta - 1)) shrink as y_L grows
    const double y_lo = std::exp((static_cast<double>(lo) + x) * ld);
    const double log_ratio = -static_cast<double>(j) * ld - aK * y_lo * (1.0 / delta - 1.0);
    double lower = std::numeric_limits<double>::infinity();
    if (log_ratio < 0.0) lower = term(lo) / (1.0 - std::exp(log_ratio));
    out.tail_bound = upper + lower;
    return out;
}

// Direction a, survival constants K, their pairing (a, K), r0 and fitted amplitudes.
struct CyclicModel {
    double delta = 0.0;
    Vector a;
    Vector K;
    double aK = 0.0;
    long long r0 = 0;
    Vector amplitudes;
    int lower_truncation = kDefaultLowerTruncation;
    int upper_truncation = kDefaultUpperTruncation;

    HjValue basis(int j, double x) const { return eval_Hj(x, j, delta, aK, lower_truncation, upper_truncation); }

    // sum_j c_j H_j(x); amplitudes are a least-squares surrogate, not closed-form constants
    double H(double x) const {
        double s = 0.0;
        for (std::size_t j = 0; j < amplitudes.size(); ++j) s += amplitudes[j] * basis(static_cast<int>(j + 1), x).value;
        return s;
    }
};

inline CyclicModel build_cyclic_model(const SpectralSummary& summary, const Vector& a, const StoppingSet& s,
                                      int lo = kDefaultLowerTruncation, int hi = kDefaultUpperTruncation) {
    if (summary.K.size() != a.size()) throw PreconditionError("direction and survival constants differ in length");
    double sum = 0.0;
    for (double v : a) {
        if (v < 0.0) throw PreconditionError("direction a must be nonnegative");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-12) throw PreconditionError("direction a must sum to 1");
    CyclicModel m;
    m.delta = summary.delta;
    m.a = a;
    m.K = summary.K;
    m.aK = dot(a, summary.K);
    if (!(m.aK > 0.0)) throw PreconditionError("(a,K) is not positive");
    m.r0 = s.r0();
    m.lower_truncation = lo;
    m.upper_truncation = hi;
    return m;
}

// log_delta(nbar) = ln(nbar) / ln(delta), fractional part in [0, 1).
inline double log_delta_fraction(double nbar, double delta) {
    const double v = std::log(nbar) / std::log(delta);
    double f = v - std::floor(v);
    if (f >= 1.0) f = 0.0;
    return f;
}

// round(nbar * a) with largest-remainder correction so the total is exactly nbar.
inline PopulationState state_along(const Vector& a, long long nbar) {
    const std::size_t k = a.size();
    std::vector<int> counts(k);
    std::vector<std::pair<double, std::size_t>> rem;
    long long used = 0;
    for (std::size_t i = 0; i < k; ++i) {
        const double exact = a[i] * static_cast<double>(nbar);
        counts[i] = static_cast<int>(std::floor(exact));
        used += counts[i];
        rem.emplace_back(exact - std::floor(exact), i);
    }
    std::stable_sort(rem.begin(), rem.end(), [](const auto& x, const auto& y) { return x.first > y.first; });
    for (std::size_t r = 0; used < nbar; ++r, ++used) ++counts[rem[r % k].second];
    return PopulationState(std::move(counts));
}

// Geometric grid of totals between lo and hi, rounded and deduplicated.
inline std::vector<long long> geometric_grid(long long lo, long long hi, int points) {
    if (lo < 1 || hi < lo || points < 1) throw PreconditionError("bad grid specification");
    std::vector<long long> out;
    for (int i = 0; i < points; ++i) {
        const double f = points == 1 ? 0.0 : static_cast<double>(i) / (points - 1);
        out.push_back(std::llround(static_cast<double>(lo) * std::pow(static_cast<double>(hi) / lo, f)));
    }
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

struct ProbeRow {
    PopulationState n;
    long long nbar = 0;
    double x = 0.0;  // frac(log_delta nbar)
    double q = 0.0;
    double overflow_bound = 0.0;
    double series_bound = 0.0;
    PopulationState partner;  // total round(nbar / delta) along a
    double partner_q = 0.0;
    double defect = 0.0;  // |q - partner_q|
};

struct ProbeReport {
    std::vector<ProbeRow> rows;
    double theta = 0.0;  // smallest q over the probe
    bool pre_asymptotic = false;
};

inline constexpr double kProbeOverflowLimit = 0.05;
inline constexpr long long kPreAsymptoticTotal = 20;

namespace detail {

inline PopulationState start_along(const Vector& a, long long nbar, const StoppingSet& s) {
    PopulationState n = state_along(a, nbar);
    while (n.is_zero() || s.contains(n)) n = state_along(a, ++nbar);
    return n;
}

}  // namespace detail

// q^n_r along the direction a for each total in the grid, with the
// self-similarity defect against the start one period further out.
inline ProbeReport periodicity_probe(const TransitionKernel& kernel, const StoppingSet& s, const PopulationState& r,
                                     const Vector& a, const std::vector<long long>& nbar_grid, const Matrix& mean_matrix,
                                     const SpectralSummary& summary, double tol = 1e-10) {
    if (nbar_grid.empty()) throw PreconditionError("empty probe grid");
    if (a.size() != kernel.space().types()) throw PreconditionError("direction has the wrong dimension");
    const StateSpace& space = kernel.space();
    ProbeReport rep;
    std::vector<std::size_t> starts;
    for (long long nb : nbar_grid) {
        ProbeRow row;
        row.n = detail::start_along(a, nb, s);
        row.nbar = row.n.total();
        row.partner = detail::start_along(a, std::llround(static_cast<double>(row.nbar) / summary.delta), s);
        if (!space.contains(row.partner)) {
            throw CapacityError("cap " + std::to_string(space.cap()) + " below probe total " +
                                std::to_string(row.partner.total()));
        }
        row.x = log_delta_fraction(static_cast<double>(row.nbar), summary.delta);
        starts.push_back(space.index(row.n));
        starts.push_back(space.index(row.partner));
        rep.pre_asymptotic = rep.pre_asymptotic || row.nbar < kPreAsymptoticTotal;
        rep.rows.push_back(std::move(row));
    }
    const auto lim = limiting_absorption_all(kernel, s, mean_matrix, summary, r, tol, starts);
    rep.theta = std::numeric_limits<double>::infinity();
    for (auto& row : rep.rows) {
        const std::size_t i = space.index(row.n);
        const std::size_t ip = space.index(row.partner);
        row.q = lim.q[i];
        row.series_bound = lim.series_bound[i];
        row.overflow_bound = std::max(lim.overflow_bound[i], lim.overflow_bound[ip]);
        row.partner_q = lim.q[ip];
        row.defect = std::abs(row.q - row.partner_q);
        if (row.overflow_bound > kProbeOverflowLimit) {
            throw CapacityError("cap too small: overflow bound " + format_double(row.overflow_bound) + " at " +
                                row.n.str());
        }
        rep.theta = std::min(rep.theta, row.q);
    }
    return rep;
}

inline void write_csv(std::ostream& os, const ProbeReport& rep, bool header = true) {
    CsvWriter csv(os);
    if (header) csv.row("n", "nbar", "x_frac", "q", "overflow_bound", "self_similarity_defect");
    for (const auto& r : rep.rows) csv.row(r.n.str(), r.nbar, r.x, r.q, r.overflow_bound, r.defect);
}

struct AmplitudeFit {
    Vector c;
    double rms_residual = 0.0;
    double min_pivot_ratio = 0.0;  // smallest / largest Cholesky pivot of the Gram matrix
    bool rank_deficient = false;
};

inline constexpr double kRidge = 1e-12;
inline constexpr double kRankThreshold = 1e-13;

// Least squares for q ~ sum_j c_j H_j(x), j = 1..r0, via ridge-regularized
// normal equations solved by Cholesky in extended precision.
inline AmplitudeFit fit_cyclic_amplitudes(const std::vector<std::pair<double, double>>& points,
                                          const CyclicModel& model) {
    const std::size_t r0 = static_cast<std::size_t>(model.r0);
    if (r0 < 1) throw PreconditionError("r0 must be at least 1");
    if (points.size() < 2 * r0) throw PreconditionError("need at least 2*r0 probe rows to fit amplitudes");
    double xmin = points.front().first;
    double xmax = xmin;
    for (const auto& p : points) {
        xmin = std::min(xmin, p.first);
        xmax = std::max(xmax, p.first);
    }
    if (xmax - xmin < 1e-9) throw NumericalError("rank deficient fit: probe x-values are clustered at one point");

    std::vector<Vector> design;
    for (const auto& p : points) {
        Vector row(r0);
        for (std::size_t j = 0; j < r0; ++j) row[j] = model.basis(static_cast<int>(j + 1), p.first).value;
        design.push_back(std::move(row));
    }
    std::vector<std::vector<long double>> G(r0, std::vector<long double>(r0, 0.0L));
    std::vector<long double> rhs(r0, 0.0L);
    for (std::size_t m = 0; m < points.size(); ++m) {
        for (std::size_t i = 0; i < r0; ++i) {
            rhs[i] += static_cast<long double>(design[m][i]) * points[m].second;
            for (std::size_t j = 0; j < r0; ++j) G[i][j] += static_cast<long double>(design[m][i]) * design[m][j];
        }
    }
    for (std::size_t i = 0; i < r0; ++i) G[i][i] += kRidge;

    // Cholesky G = L L^T
    std::vector<std::vector<long double>> L(r0, std::vector<long double>(r0, 0.0L));
    long double pmin = std::numeric_limits<long double>::infinity();
    long double pmax = 0.0L;
    for (std::size_t i = 0; i < r0; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            long double sum = G[i][j];
            for (std::size_t k = 0; k < j; ++k) sum -= L[i][k] * L[j][k];
            if (i == j) {
                if (!(sum > 0.0L)) throw NumericalError("rank deficient fit: Gram matrix not positive definite");
                L[i][i] = std::sqrt(sum);
                pmin = std::min(pmin, sum);
                pmax = std::max(pmax, sum);
            } else {
                L[i][j] = sum / L[j][j];
            }
        }
    }
    std::vector<long double> y(r0);
    for (std::size_t i = 0; i < r0; ++i) {
        long double s = rhs[i];
        for (std::size_t k = 0; k < i; ++k) s -= L[i][k] * y[k];
        y[i] = s / L[i][i];
    }
    std::vector<long double> c(r0);
    for (std::size_t i = r0; i-- > 0;) {
        long double s = y[i];
        for (std::size_t k = i + 1; k < r0; ++k) s -= L[k][i] * c[k];
        c[i] = s / L[i][i];
    }

    AmplitudeFit fit;
    fit.c.assign(c.begin(), c.end());
    double ss = 0.0;
    for (std::size_t m = 0; m < points.size(); ++m) {
        double pred = 0.0;
        for (std::size_t j = 0; j < r0; ++j) pred += fit.c[j] * design[m][j];
        ss += (points[m].second - pred) * (points[m].second - pred);
    }
    fit.rms_residual = std::sqrt(ss / static_cast<double>(points.size()));
    fit.min_pivot_ratio = static_cast<double>(pmin / pmax);
    fit.rank_deficient = fit.min_pivot_ratio < kRankThreshold;
    return fit;
}

inline AmplitudeFit fit_cyclic_amplitudes(const ProbeReport& probe, const CyclicModel& model) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& r : probe.rows) pts.emplace_back(r.x, r.q);
    return fit_cyclic_amplitudes(pts, model);
}

}  // namespace bpstop
