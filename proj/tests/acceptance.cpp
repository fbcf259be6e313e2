// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
#include "common.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <string>

using namespace bpstop;
using namespace bpstop::testing;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) pass = false;
        if (!detail.empty()) detail += "; ";
        detail += what + (ok ? "" : " [violated]");
    }
};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Vector random_point(std::mt19937_64& rng, std::size_t k) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Vector s(k);
    for (double& v : s) v = u(rng);
    return s;
}

struct Case {
    BranchingModel model;
    StoppingSet s;
};

std::vector<Case> both_models() { return {{m1(), s1()}, {m2(), s2()}}; }

// three routes to q^n_r(t) on every start state of the capped space
Outcome three_routes() {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    double formula = 0.0, restricted = 0.0;
    const int T = 20;
    for (const Case& c : both_models()) {
        const auto sp = space(c.model.type_count(), 60);
        const TransitionKernel k = one_step_kernel(c.model, sp);
        const PopulationState r = c.s.members().front();
        const auto rk = restricted_kernel(k, c.s, T);
        const auto d = absorption_direct(k, c.s, r, T);
        const auto f = absorption_formula(free_columns(k, c.s, T), stop_coefficients(rk, *sp, T), r);
        const auto rs = absorption_restricted_sum(rk, r);
        for (std::size_t i = 1; i < sp->size(); ++i) {
            if (c.s.contains(sp->state(i))) continue;
            for (int t = 1; t <= T; ++t) {
                formula = std::max(formula, std::abs(f.at(t, i) - d.at(t, i)));
                restricted = std::max(restricted, std::abs(rs.at(t, i) - d.at(t, i)));
            }
        }
    }
    const double secs = seconds_since(t0);
    o.require(formula <= 1e-10, "max |formula - direct| = " + fmt(formula));
    o.require(restricted <= 1e-12, "max |restricted sum - direct| = " + fmt(restricted));
    o.require(secs < 10.0, "runtime " + fmt(secs) + " s");
    return o;
}

Outcome inclusion_exclusion() {
    Outcome o;
    double worst = 0.0;
    for (const Case& c : both_models()) {
        const auto sp = space(c.model.type_count(), 60);
        const TransitionKernel k = one_step_kernel(c.model, sp);
        const auto a = restricted_kernel(k, c.s, 12);
        const auto b = restricted_kernel_inclusion_exclusion(k, c.s, 12);
        for (int l = 1; l <= 12; ++l)
            for (std::size_t r = 0; r < c.s.size(); ++r)
                for (std::size_t i = 0; i < sp->size(); ++i)
                    worst = std::max(worst, std::abs(a.value(l, i, r) - b.value(l, i, r)));
    }
    o.require(worst <= 1e-12, "max deviation over l <= 12 = " + fmt(worst));
    return o;
}

Outcome semigroups() {
    Outcome o;
    double ck = 0.0, fe = 0.0;
    std::mt19937_64 rng(3);
    for (const Case& c : both_models()) {
        const auto sp = space(c.model.type_count(), 30);
        const TransitionKernel p = one_step_kernel(c.model, sp);
        std::vector<TransitionKernel> powers{p};
        for (int t = 2; t <= 8; ++t) powers.push_back(compose(powers.back(), p));
        for (int t = 1; t <= 4; ++t)
            for (int tau = 1; t + tau <= 8; ++tau) {
                const TransitionKernel lhs = compose(powers[t - 1], powers[tau - 1]);
                const TransitionKernel& rhs = powers[t + tau - 1];
                for (std::size_t i = 0; i < sp->size(); ++i)
                    for (std::size_t j = 0; j <= sp->size(); ++j)
                        ck = std::max(ck, std::abs(lhs.prob(i, j) - rhs.prob(i, j)));
            }
        for (int rep = 0; rep < 20; ++rep) {
            const Vector s = random_point(rng, c.model.type_count());
            for (int t = 1; t <= 8; ++t)
                for (int tau = 1; tau <= 8; ++tau) {
                    const Vector a = iterate_h(c.model, t + tau, s).h;
                    const Vector b = iterate_h(c.model, t, iterate_h(c.model, tau, s).h).h;
                    for (std::size_t i = 0; i < a.size(); ++i) fe = std::max(fe, std::abs(a[i] - b[i]));
                }
        }
    }
    o.require(ck <= 1e-12, "kernel composition residual " + fmt(ck));
    o.require(fe <= 1e-12, "functional equation residual " + fmt(fe));
    return o;
}

Outcome spectral_m2() {
    Outcome o;
    const SpectralSummary s = perron_triple(moments(m2()));
    const double dev = std::max({std::abs(s.delta - 0.6), std::abs(s.nu[0] - 2.0 / 3), std::abs(s.nu[1] - 1.0 / 3),
                                 std::abs(s.f[0] - 9.0 / 8), std::abs(s.f[1] - 3.0 / 4)});
    o.require(dev <= 1e-9, "delta, nu, f within " + fmt(dev) + " of (0.6, (2/3,1/3), (9/8,3/4))");
    o.require(s.residual_right <= 1e-10 && s.residual_left <= 1e-10,
              "residuals " + fmt(s.residual_right) + ", " + fmt(s.residual_left));
    return o;
}

Outcome moment_limit() {
    Outcome o;
    const MomentData md = moments(m2());
    const Vector e = moment_asymptotics(md, perron_triple(md), 40);
    double worst = 0.0;
    for (int t = 5; t <= 25; ++t) worst = std::max(worst, std::abs(e[t + 1] / e[t] - 1.0 / 3));
    o.require(e[40] <= 1e-6, "e(40) = " + fmt(e[40]));
    o.require(worst <= 0.05, "max |e(t+1)/e(t) - 1/3| = " + fmt(worst));
    return o;
}

Outcome survival_constant_m1() {
    Outcome o;
    const BranchingModel m = m1();
    const SurvivalConstant k = survival_constant(m, perron_triple(moments(m)), 1, 100);
    double worst = 0.0;
    for (int l = 50; l < 100; ++l) worst = std::max(worst, std::abs(k.ratios[static_cast<std::size_t>(l - 1)] - 0.6));
    const double drift = std::abs(k.estimates[59] - k.estimates[79]);
    o.require(worst <= 1e-6, "max ratio deviation for l >= 50 = " + fmt(worst));
    o.require(drift <= 1e-8, "|K(60) - K(80)| = " + fmt(drift));
    o.require(k.K > 0.0, "K = " + fmt(k.K));
    return o;
}

Outcome survival_inequalities() {
    Outcome o;
    std::mt19937_64 rng(7);
    double worst = 0.0, dominance = 0.0;
    for (const Case& c : both_models()) {
        const std::size_t k = c.model.type_count();
        const auto Q = survival_sequence(c.model, 30);
        std::vector<Vector> pts;
        for (int rep = 0; rep < 1000; ++rep) {
            const Vector s = random_point(rng, k);
            pts.push_back(s);
            Vector r(k);
            for (std::size_t i = 0; i < k; ++i) r[i] = 1.0 - s[i];
            for (std::size_t t = 1; t <= 30; ++t) {
                r = eval_complement(c.model, r);
                for (std::size_t i = 0; i < k; ++i) {
                    worst = std::max(worst, -r[i]);
                    worst = std::max(worst, r[i] - Q[t][i]);
                    worst = std::max(worst, std::abs(r[i]) - 2 * Q[t][i]);
                }
            }
        }
        dominance = std::max(dominance, mean_dominance(c.model, first_moments(c.model), pts));
    }
    o.require(worst <= 1e-12, "worst violation of 0 <= R <= Q, |R| <= 2Q: " + fmt(worst));
    o.require(dominance <= 1e-12, "worst violation of A(1-s) >= 1-h(s): " + fmt(dominance));
    return o;
}

Outcome ratio_limit_m2() {
    Outcome o;
    const BranchingModel m = m2();
    const SpectralSummary s = perron_triple(moments(m));
    const auto grid = make_s_grid(2, 25, false);
    double literal = 0.0;
    for (std::size_t k = 1; k <= 2; ++k) literal = std::max(literal, ratio_limit(m, s, k, grid, 40).worst_at_t_max);
    o.require(literal <= 1e-4, "max |R^i/(f_k R^k) - nu_i| = " + fmt(literal));
    const double normalized = ratio_limit_normalized(m, s, grid, 40).worst_at_t_max;
    o.detail += "; diagnostic: max |R^i/(nu.R) - f_i| = " + fmt(normalized) +
                " (the literal ratio tends to f_i/f_k^2, not nu_i)";
    return o;
}

Outcome yaglom_limit() {
    Outcome o;
    {
        const BranchingModel m = m1();
        SpectralSummary s = perron_triple(moments(m));
        attach_survival_constants(m, s);
        const YaglomData y = yaglom(m, one_step_kernel(m, space(1, 400)), s, 1, 60);
        const auto res = yaglom_residual(m, y, s, make_s_grid(1, 50));
        o.require(res.max_residual <= 1e-3, "M1 functional equation residual " + fmt(res.max_residual));
        o.require(y.mean()[0] > 0.0, "M1 mean " + fmt(y.mean()[0]));
        o.detail += "; M1 p*_(1) = " + fmt(y.mass_of(PopulationState{1})) +
                    " (no atom has a single child, positivity not claimed)";
    }
    {
        const BranchingModel m = m2();
        SpectralSummary s = perron_triple(moments(m));
        attach_survival_constants(m, s);
        const TransitionKernel k = one_step_kernel(m, space(2, 60));
        const YaglomData a = yaglom(m, k, s, 1, 60);
        const YaglomData b = yaglom(m, k, s, 2, 60);
        const double tv = total_variation(a, b);
        o.require(single_offspring_condition(m), "M2 has single-offspring atoms");
        o.require(tv <= 1e-3, "M2 source TV " + fmt(tv));
        const double e1 = a.mass_of(PopulationState{1, 0}), e2 = a.mass_of(PopulationState{0, 1});
        o.require(e1 > 0.0 && e2 > 0.0, "M2 p*_E(1) = " + fmt(e1) + ", p*_E(2) = " + fmt(e2));
        const Vector mean = a.mean();
        o.require(mean[0] > 0.0 && mean[1] > 0.0, "M2 mean (" + fmt(mean[0]) + ", " + fmt(mean[1]) + ")");
    }
    return o;
}

Outcome monte_carlo() {
    Outcome o;
    const long long reps = 100000;
    const int repetitions = 100;
    struct Estimator {
        std::string name;
        double exact;
        std::function<Estimate(std::uint64_t)> run;
    };
    std::vector<Estimator> ests;
    {
        const auto sp = space(1, 200);
        const double q = absorb_direct(one_step_kernel(m1(), sp), s1(), PopulationState{3}, PopulationState{2}, 5).q;
        ests.push_back({"M1 absorption n=(3), t=5", q, [](std::uint64_t seed) {
                            return estimate_absorption(PopulationState{3}, PopulationState{2}, s1(), m1(), 5, reps, seed);
                        }});
    }
    {
        const auto sp = space(2, 70);
        const double q = absorb_direct(one_step_kernel(m2(), sp), s2(), PopulationState{1, 1}, PopulationState{1, 0}, 5).q;
        ests.push_back({"M2 absorption n=(1,1), t=5", q, [](std::uint64_t seed) {
                            return estimate_absorption(PopulationState{1, 1}, PopulationState{1, 0}, s2(), m2(), 5, reps,
                                                       seed);
                        }});
    }
    {
        const auto sp = space(2, 30);
        const TransitionKernel k = one_step_kernel(m2(), sp);
        const PopulationState from{2, 1}, to{0, 1};
        ests.push_back({"M2 one-step probability (2,1)->(0,1)", k.prob(sp->index(from), sp->index(to)),
                        [from, to](std::uint64_t seed) {
                            return estimate_step_probability(
                                from, m2(), [&](const PopulationState& x) { return x == to; }, reps, seed);
                        }});
        const Matrix A = first_moments(m2());
        ests.push_back({"M2 one-step mean type-1 count from (2,1)", 2 * A(0, 0) + A(1, 0), [from](std::uint64_t seed) {
                            return estimate_step_mean(
                                from, m2(), [](const PopulationState& x) { return static_cast<long long>(x[0]); }, reps,
                                seed);
                        }});
    }
    {
        const BranchingModel m = m2();
        SpectralSummary s = perron_triple(moments(m));
        attach_survival_constants(m, s);
        const YaglomData y = yaglom(m, one_step_kernel(m, space(2, 40)), s, 1, 5);
        ests.push_back({"M2 survival to t=5 from E(1)", y.survival, [](std::uint64_t seed) {
                            return estimate_yaglom(1, m2(), 5, reps, seed).survival;
                        }});
    }
    for (std::size_t e = 0; e < ests.size(); ++e) {
        int inside = 0;
        for (int rep = 0; rep < repetitions; ++rep) {
            const Estimate est = ests[e].run(1000003ULL * (e + 1) + static_cast<std::uint64_t>(rep));
            if (std::abs(est.value - ests[e].exact) <= 4 * est.std_error) ++inside;
        }
        o.require(inside >= 99, ests[e].name + ": " + std::to_string(inside) + "/100 within 4 sigma");
    }
    // same seed, different worker counts
    bool exact = true;
    const Estimate base = estimate_absorption(PopulationState{1, 1}, PopulationState{1, 0}, s2(), m2(), 8, 50000, 11, 1);
    const auto y1 = estimate_yaglom(1, m2(), 6, 50000, 12, 1);
    for (int w : {2, 3, 8}) {
        const Estimate e = estimate_absorption(PopulationState{1, 1}, PopulationState{1, 0}, s2(), m2(), 8, 50000, 11, w);
        const auto y = estimate_yaglom(1, m2(), 6, 50000, 12, w);
        exact = exact && e.value == base.value && e.std_error == base.std_error && y.counts == y1.counts;
    }
    o.require(exact, "bit-exact across 1, 2, 3, 8 workers");
    // replaying a stream step by step: the first visit to S ends the trajectory
    bool first_entry = true;
    const OffspringSampler sampler(m2());
    const StoppingSet s({PopulationState{1, 0}, PopulationState{0, 2}});
    for (std::uint64_t i = 0; i < 2000; ++i) {
        Xoshiro256 a = Xoshiro256::stream(5, i), b = Xoshiro256::stream(5, i);
        const auto out = run_stopped(PopulationState{2, 1}, s, sampler, 30, a);
        PopulationState cur{2, 1};
        int hit = 0;
        for (int t = 1; t <= 30 && !cur.is_zero(); ++t) {
            cur = step(cur, sampler, b);
            if (s.contains(cur)) {
                hit = t;
                break;
            }
        }
        if (out.status == TrajectoryStatus::stopped_in_S) first_entry = first_entry && out.steps == hit;
        else first_entry = first_entry && hit == 0;
    }
    o.require(first_entry, "trajectories end at their first entry into S");
    return o;
}

struct ProbeRun {
    ProbeReport report;
    double seconds = 0.0;
};

ProbeRun probe_m1(int cap) {
    const auto t0 = std::chrono::steady_clock::now();
    const BranchingModel m = m1();
    SpectralSummary s = perron_triple(moments(m));
    attach_survival_constants(m, s);
    const TransitionKernel k = one_step_kernel(m, space(1, cap));
    ProbeRun run;
    run.report = periodicity_probe(k, s1(), PopulationState{2}, {1.0}, geometric_grid(100, 500, 8), first_moments(m), s,
                                   1e-10);
    run.seconds = seconds_since(t0);
    return run;
}

Outcome periodicity(const ProbeRun& run) {
    Outcome o;
    double worst = 0.0, rise = 0.0, overflow = 0.0;
    const auto& rows = run.report.rows;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        worst = std::max(worst, rows[i].defect);
        overflow = std::max(overflow, rows[i].overflow_bound);
        if (i > 0) rise = std::max(rise, rows[i].defect - rows[i - 1].defect);
    }
    o.require(worst <= 0.02, "max self-similarity defect " + fmt(worst));
    o.require(rise <= 0.005, "largest increase between rows " + fmt(rise));
    o.require(run.seconds < 60.0, "runtime " + fmt(run.seconds) + " s");
    o.detail += "; max overflow bound " + fmt(overflow);
    return o;
}

Outcome lower_bound(const ProbeRun& big) {
    Outcome o;
    const ProbeRun small = probe_m1(2000);
    const double a = small.report.theta, b = big.report.theta;
    o.require(b > 0.0, "theta = " + fmt(b));
    o.require(std::abs(a - b) <= 0.1 * b, "theta at cap 2000 = " + fmt(a) + ", cap 4000 = " + fmt(b));
    return o;
}

Outcome hj_machinery() {
    Outcome o;
    const BranchingModel m = m1();
    SpectralSummary s = perron_triple(moments(m));
    attach_survival_constants(m, s);
    const CyclicModel cm = build_cyclic_model(s, {1.0}, s1());
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int violations = 0;
    for (int rep = 0; rep < 100; ++rep) {
        const double x = u(rng);
        for (int j = 1; j <= cm.r0; ++j) {
            const HjValue a = cm.basis(j, x), b = cm.basis(j, x + 1.0);
            if (std::abs(a.value - b.value) > a.tail_bound + b.tail_bound + 1e-15 * a.value) ++violations;
        }
    }
    o.require(violations == 0, "period defect within tail bound at 100 random x (" + std::to_string(violations) +
                                   " violations)");
    CyclicModel syn;
    syn.delta = 0.3;
    syn.aK = 1.0;
    syn.r0 = 2;
    std::vector<std::pair<double, double>> pts;
    for (int i = 0; i < 40; ++i) {
        const double x = (i + 0.5) / 40.0;
        pts.emplace_back(x, 0.2 * syn.basis(1, x).value + 0.05 * syn.basis(2, x).value);
    }
    const AmplitudeFit fit = fit_cyclic_amplitudes(pts, syn);
    const double err = std::max(std::abs(fit.c[0] - 0.2), std::abs(fit.c[1] - 0.05));
    o.require(err <= 1e-6 && !fit.rank_deficient, "synthetic amplitudes recovered within " + fmt(err));
    return o;
}

}  // namespace

int main() {
    int failed = 0;
    auto report = [&](int id, const std::string& name, const std::function<Outcome()>& body) {
        Outcome o;
        try {
            o = body();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        if (!o.pass) ++failed;
        std::printf("%s %d %s: %s\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str());
        std::fflush(stdout);
    };
    report(1, "three-route stopping probability", three_routes);
    report(2, "inclusion-exclusion identity", inclusion_exclusion);
    report(3, "Chapman-Kolmogorov and functional equation", semigroups);
    report(4, "Perron triple of M2", spectral_m2);
    report(5, "moment asymptotics", moment_limit);
    report(6, "survival constant", survival_constant_m1);
    report(7, "survival inequalities", survival_inequalities);
    report(8, "ratio limit", ratio_limit_m2);
    report(9, "Yaglom limit", yaglom_limit);
    report(10, "Monte Carlo consistency", monte_carlo);
    ProbeRun big;
    report(11, "periodicity probe", [&] {
        big = probe_m1(4000);
        return periodicity(big);
    });
    report(12, "positive lower bound", [&] { return lower_bound(big); });
    report(13, "H_j machinery", hj_machinery);
    std::printf("%d of 13 criteria failed\n", failed);
    return failed == 0 ? 0 : 1;
}
