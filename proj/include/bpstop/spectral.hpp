#pragma once

#include <bpstop/error.hpp>
#include <bpstop/linalg.hpp>
#include <bpstop/model.hpp>
#include <bpstop/pgf.hpp>

#include <json.hpp>

#include <cmath>
#include <numeric>
#include <optional>
#include <queue>
#include <string>
#include <vector>

namespace bpstop {

inline constexpr double kEdgeTolerance = 1e-12;
inline constexpr double kCriticalBand = 1e-9;

// First and second factorial moments of the one-step offspring law.
// A(i, j): mean number of type-j children of a type-i particle.
// B[i](j, k): E[c_j c_k - [j == k] c_j] for a type-i particle.
struct MomentData {
    Matrix A;
    std::vector<Matrix> B;
};

inline Matrix first_moments(const BranchingModel& model) {
    const std::size_t k = model.type_count();
    Matrix A(k, k);
    for (std::size_t i = 0; i < k; ++i)
        for (const Atom& a : model.law(i).atoms())
            for (std::size_t j = 0; j < k; ++j) A(i, j) += a.p * a.offspring[j];
    return A;
}

inline std::vector<Matrix> second_moments(const BranchingModel& model) {
    const std::size_t k = model.type_count();
    std::vector<Matrix> B(k, Matrix(k, k));
    for (std::size_t i = 0; i < k; ++i)
        for (const Atom& a : model.law(i).atoms())
            for (std::size_t j = 0; j < k; ++j)
                for (std::size_t m = 0; m < k; ++m) {
                    const double cj = a.offspring[j];
                    const double cm = a.offspring[m];
                    B[i](j, m) += a.p * (cj * cm - (j == m ? cj : 0.0));
                }
    return B;
}

inline MomentData moments(const BranchingModel& model) { return {first_moments(model), second_moments(model)}; }

// t-fold application of the mean operator to each indicator function,
// A_{t+1}(., D) = A A_t(., D). Agrees with matrix_power(A, t).
inline Matrix iterate_moment_operator(const Matrix& A, int t) {
    const std::size_t k = A.rows();
    Matrix out(k, k);
    for (std::size_t d = 0; d < k; ++d) {
        Vector col(k, 0.0);
        col[d] = 1.0;
        for (int s = 0; s < t; ++s) col = A * col;
        for (std::size_t i = 0; i < k; ++i) out(i, d) = col[i];
    }
    return out;
}

enum class Criticality { subcritical, critical, supercritical, boundary };

inline const char* to_string(Criticality c) {
    switch (c) {
        case Criticality::subcritical: return "subcritical";
        case Criticality::critical: return "critical";
        case Criticality::supercritical: return "supercritical";
        case Criticality::boundary: return "boundary";
    }
    return "?";
}

struct Classification {
    bool indecomposable = false;
    int period = 0;  // 0 when the type graph has no cycle
    double delta = 0.0;
    Criticality criticality = Criticality::subcritical;
    std::optional<double> b_form;  // sum_i f_i B^i_jk nu_j nu_k, when delta is within the critical band

    bool noncyclic() const { return indecomposable && period == 1; }
    // indecomposable, noncyclic and subcritical
    bool condition1() const { return noncyclic() && criticality == Criticality::subcritical; }
};

namespace detail {

inline std::vector<std::vector<std::size_t>> type_graph(const Matrix& A, double tol, bool reversed) {
    const std::size_t k = A.rows();
    std::vector<std::vector<std::size_t>> adj(k);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j)
            if (A(i, j) > tol) {
                if (reversed)
                    adj[j].push_back(i);
                else
                    adj[i].push_back(j);
            }
    return adj;
}

inline std::vector<int> bfs_levels(const std::vector<std::vector<std::size_t>>& adj, std::size_t root) {
    std::vector<int> level(adj.size(), -1);
    std::queue<std::size_t> q;
    level[root] = 0;
    q.push(root);
    while (!q.empty()) {
        const std::size_t u = q.front();
        q.pop();
        for (std::size_t v : adj[u])
            if (level[v] < 0) {
                level[v] = level[u] + 1;
                q.push(v);
            }
    }
    return level;
}

// Largest eigenvalue of a nonnegative matrix by power iteration on A + I,
// which is primitive whenever A is irreducible.
inline double spectral_radius(const Matrix& A, int max_iter = 200000) {
    const std::size_t k = A.rows();
    Vector x(k, 1.0 / static_cast<double>(k));
    double lambda = 0.0;
    for (int it = 0; it < max_iter; ++it) {
        Vector y = A * x;
        for (std::size_t i = 0; i < k; ++i) y[i] += x[i];
        const double s = std::accumulate(y.begin(), y.end(), 0.0);
        const double next = s;  // ||x||_1 == 1
        for (double& v : y) v /= s;
        const double change = std::abs(next - lambda);
        lambda = next;
        x = std::move(y);
        if (it > 2 && change <= 4e-16 * std::max(1.0, lambda)) break;
    }
    return lambda - 1.0;
}

struct PerronVectors {
    double delta = 0.0;
    Vector f;
    Vector nu;
    int iterations = 0;
};

inline Vector power_iterate(const Matrix& M, double tol, int max_iter, int& used) {
    const std::size_t k = M.rows();
    Vector x(k, 1.0 / static_cast<double>(k));
    double lambda = -1.0;
    for (int it = 1; it <= max_iter; ++it) {
        Vector y = M * x;
        const double s = std::accumulate(y.begin(), y.end(), 0.0);
        if (!(s > 0.0)) throw NumericalError("power iteration collapsed to zero");
        double change = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            y[i] /= s;
            change = std::max(change, std::abs(y[i] - x[i]));
        }
        const double dl = std::abs(s - lambda);
        lambda = s;
        x = std::move(y);
        used = it;
        if (dl < tol * std::max(1.0, lambda) && change < tol) return x;
    }
    throw NumericalError("power iteration did not converge in " + std::to_string(max_iter) + " iterations");
}

inline PerronVectors perron_vectors(const Matrix& A, double tol, int max_iter) {
    PerronVectors pv;
    int used_right = 0;
    int used_left = 0;
    pv.f = power_iterate(A, tol, max_iter, used_right);
    pv.nu = power_iterate(A.transpose(), tol, max_iter, used_left);
    pv.iterations = std::max(used_right, used_left);

    const double nu_sum = std::accumulate(pv.nu.begin(), pv.nu.end(), 0.0);
    for (double& v : pv.nu) v /= nu_sum;
    const double fnu = dot(pv.f, pv.nu);
    for (double& v : pv.f) v /= fnu;
    Vector Af = A * pv.f;
    pv.delta = dot(pv.nu, Af) / dot(pv.nu, pv.f);
    return pv;
}

}  // namespace detail

// Type graph structure and Perron root classification.
inline Classification classify(const MomentData& m, double tol = kEdgeTolerance) {
    const Matrix& A = m.A;
    const std::size_t k = A.rows();
    Classification c;

    auto fwd = detail::type_graph(A, tol, false);
    auto rev = detail::type_graph(A, tol, true);
    auto lf = detail::bfs_levels(fwd, 0);
    auto lr = detail::bfs_levels(rev, 0);
    c.indecomposable = true;
    for (std::size_t i = 0; i < k; ++i) c.indecomposable = c.indecomposable && lf[i] >= 0 && lr[i] >= 0;

    // gcd of level differences over all edges inside the class of type 0
    int g = 0;
    for (std::size_t u = 0; u < k; ++u) {
        if (lf[u] < 0 || lr[u] < 0) continue;
        for (std::size_t v : fwd[u]) {
            if (lf[v] < 0 || lr[v] < 0) continue;
            g = std::gcd(g, std::abs(lf[u] + 1 - lf[v]));
        }
    }
    c.period = g;

    c.delta = detail::spectral_radius(A);
    if (std::abs(c.delta - 1.0) <= kCriticalBand) {
        c.criticality = Criticality::boundary;
        if (c.noncyclic()) {
            auto pv = detail::perron_vectors(A, 1e-15, 1'000'000);
            double form = 0.0;
            for (std::size_t i = 0; i < k; ++i)
                for (std::size_t j = 0; j < k; ++j)
                    for (std::size_t l = 0; l < k; ++l) form += pv.f[i] * m.B[i](j, l) * pv.nu[j] * pv.nu[l];
            c.b_form = form;
            if (form > 0.0) c.criticality = Criticality::critical;
        }
    } else {
        c.criticality = c.delta < 1.0 ? Criticality::subcritical : Criticality::supercritical;
    }
    return c;
}

// Perron root, right eigenvector f and left eigenvector nu of the mean matrix,
// with sum(nu) = 1 and sum(f * nu) = 1.
struct SpectralSummary {
    double delta = 0.0;
    Vector f;
    Vector nu;
    bool indecomposable = false;
    int period = 0;
    Criticality criticality = Criticality::subcritical;
    double residual_right = 0.0;  // ||A f - delta f||_inf
    double residual_left = 0.0;   // ||nu A - delta nu||_inf
    int iterations = 0;
    Vector K;  // survival constants, filled by attach_survival_constants

    bool subcritical() const { return criticality == Criticality::subcritical; }
};

inline SpectralSummary perron_triple(const MomentData& m, double tol = 1e-15, int max_iter = 1'000'000) {
    const Classification c = classify(m);
    if (!c.indecomposable) throw PreconditionError("mean matrix is decomposable; no Perron triple");
    if (c.period != 1) {
        throw PreconditionError("mean matrix is cyclic with period " + std::to_string(c.period) +
                                "; power iteration does not converge");
    }
    auto pv = detail::perron_vectors(m.A, tol, max_iter);
    SpectralSummary s;
    s.delta = pv.delta;
    s.f = std::move(pv.f);
    s.nu = std::move(pv.nu);
    s.indecomposable = c.indecomposable;
    s.period = c.period;
    s.criticality = c.criticality;
    s.iterations = pv.iterations;

    Vector Af = m.A * s.f;
    Vector nuA = left_multiply(s.nu, m.A);
    for (std::size_t i = 0; i < Af.size(); ++i) {
        s.residual_right = std::max(s.residual_right, std::abs(Af[i] - s.delta * s.f[i]));
        s.residual_left = std::max(s.residual_left, std::abs(nuA[i] - s.delta * s.nu[i]));
    }
    return s;
}

// e(t) = max_ij |(A^t)_ij delta^-t - f_i nu_j| for t = 0..t_max.
inline Vector moment_asymptotics(const MomentData& m, const SpectralSummary& s, int t_max) {
    const std::size_t k = m.A.rows();
    const Matrix M = m.A.scaled(1.0 / s.delta);
    Matrix P = Matrix::identity(k);
    Vector e;
    for (int t = 0; t <= t_max; ++t) {
        double worst = 0.0;
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < k; ++j) worst = std::max(worst, std::abs(P(i, j) - s.f[i] * s.nu[j]));
        e.push_back(worst);
        P = P * M;
    }
    return e;
}

struct SurvivalConstant {
    double K = 0.0;
    Vector estimates;  // Q_j(l) delta^-l, l = 1..l_max
    Vector ratios;     // Q_j(l+1) / Q_j(l), l = 1..l_max-1
};

inline int default_survival_horizon(double delta) {
    return std::clamp(static_cast<int>(std::ceil(32.0 / -std::log(delta))), 10, 100000);
}

// K_j from 1 - P(l, E(j), 0) = K_j delta^l (1 + o(1)); j is 1-based.
inline SurvivalConstant survival_constant(const BranchingModel& model, const SpectralSummary& s, std::size_t j,
                                          int l_max) {
    if (j < 1 || j > model.type_count()) throw PreconditionError("type index " + std::to_string(j) + " out of range");
    if (!s.subcritical()) throw PreconditionError("survival constant needs a subcritical model");
    if (l_max < 1) throw PreconditionError("l_max must be positive");
    SurvivalConstant out;
    Vector q(model.type_count(), 1.0);
    double prev = 1.0;
    for (int l = 1; l <= l_max; ++l) {
        q = eval_complement(model, q);
        const double qj = q[j - 1];
        out.estimates.push_back(qj * std::pow(s.delta, -l));
        if (l > 1) out.ratios.push_back(qj / prev);
        prev = qj;
    }
    out.K = out.estimates.back();
    if (!(out.K > 0.0)) throw NumericalError("survival constant is not positive");
    return out;
}

inline void attach_survival_constants(const BranchingModel& model, SpectralSummary& s, int l_max = 0) {
    if (l_max <= 0) l_max = default_survival_horizon(s.delta);
    s.K.clear();
    for (std::size_t j = 1; j <= model.type_count(); ++j) s.K.push_back(survival_constant(model, s, j, l_max).K);
}

inline nlohmann::json to_json(const Classification& c, const SpectralSummary* s) {
    nlohmann::json j;
    j["delta"] = s ? s->delta : c.delta;
    j["period"] = c.period;
    j["flags"] = {{"indecomposable", c.indecomposable},
                  {"noncyclic", c.noncyclic()},
                  {"criticality", to_string(c.criticality)},
                  {"condition1", c.condition1()}};
    if (c.b_form) j["b_form"] = *c.b_form;
    if (s) {
        j["f"] = s->f;
        j["nu"] = s->nu;
        j["residuals"] = {{"right", s->residual_right}, {"left", s->residual_left}};
        j["K"] = s->K;
    }
    return j;
}

}  // namespace bpstop
