#pragma once

#include <bpstop/error.hpp>
#include <bpstop/linalg.hpp>
#include <bpstop/model.hpp>

#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace bpstop {

namespace detail {

inline void require_cube(std::span<const double> s, std::size_t k, const char* what) {
    if (s.size() != k) {
        throw PreconditionError(std::string(what) + " has " + std::to_string(s.size()) + " components, expected " +
                                std::to_string(k));
    }
    for (double x : s) {
        if (!(x >= 0.0 && x <= 1.0)) throw PreconditionError(std::string(what) + " must lie in [0,1]^k");
    }
}

}  // namespace detail

// Offspring generating map h_i(s) = sum_atoms p * prod_j s_j^{c_j}.
inline Vector eval_h(const BranchingModel& model, std::span<const double> s) {
    detail::require_cube(s, model.type_count(), "argument s");
    Vector out(model.type_count(), 0.0);
    for (std::size_t i = 0; i < model.type_count(); ++i) {
        double acc = 0.0;
        for (const Atom& a : model.law(i).atoms()) {
            double term = a.p;
            for (std::size_t j = 0; j < s.size(); ++j) {
                if (a.offspring[j] > 0) term *= std::pow(s[j], a.offspring[j]);
            }
            acc += term;
        }
        out[i] = acc;
    }
    return out;
}

// 1 - h(1 - r), evaluated without cancellation so that tiny survival
// probabilities keep full relative precision.
inline Vector eval_complement(const BranchingModel& model, std::span<const double> r) {
    detail::require_cube(r, model.type_count(), "argument 1-s");
    Vector log_keep(r.size());
    for (std::size_t j = 0; j < r.size(); ++j) log_keep[j] = std::log1p(-r[j]);
    Vector out(model.type_count(), 0.0);
    for (std::size_t i = 0; i < model.type_count(); ++i) {
        double acc = 0.0;
        for (const Atom& a : model.law(i).atoms()) {
            double e = 0.0;
            for (std::size_t j = 0; j < r.size(); ++j) {
                if (a.offspring[j] > 0) e += a.offspring[j] * log_keep[j];
            }
            acc += a.p * -std::expm1(e);
        }
        out[i] = std::min(1.0, std::max(0.0, acc));
    }
    return out;
}

struct GenFunEvaluation {
    int t = 0;
    Vector s;
    Vector h;  // h(t, s)
    Vector R;  // 1 - h(t, s), iterated in complement form
    Vector Q;  // R(t, 0)
};

// t-fold composition h(t, s) together with R(t, s) and Q(t).
inline GenFunEvaluation iterate_h(const BranchingModel& model, int t, std::span<const double> s) {
    if (t < 0) throw PreconditionError("t must be nonnegative");
    detail::require_cube(s, model.type_count(), "argument s");
    const std::size_t k = model.type_count();
    GenFunEvaluation ev;
    ev.t = t;
    ev.s.assign(s.begin(), s.end());
    ev.h = ev.s;
    ev.R.resize(k);
    for (std::size_t i = 0; i < k; ++i) ev.R[i] = 1.0 - s[i];
    ev.Q.assign(k, 1.0);
    for (int step = 0; step < t; ++step) {
        ev.h = eval_h(model, ev.h);
        ev.R = eval_complement(model, ev.R);
        ev.Q = eval_complement(model, ev.Q);
    }
    return ev;
}

// Q(1..t_max): survival probabilities 1 - h_i(l, 0) for each l.
// Q(t) = R(t, 0) for t = 0..t_max, indexed by t.
inline std::vector<Vector> survival_sequence(const BranchingModel& model, int t_max) {
    Vector q(model.type_count(), 1.0);
    std::vector<Vector> out{q};
    for (int l = 1; l <= t_max; ++l) {
        q = eval_complement(model, q);
        out.push_back(q);
    }
    return out;
}

}  // namespace bpstop
