#include "common.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

using namespace bpstop;
using namespace bpstop::testing;

namespace {

Vector random_point(std::mt19937_64& rng, std::size_t k) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Vector s(k);
    for (double& v : s) v = u(rng);
    return s;
}

}  // namespace

TEST(EvalH, Endpoints) {
    EXPECT_NEAR(eval_h(m1(), Vector{0.0})[0], 0.7, 1e-15);
    EXPECT_EQ(eval_h(m1(), Vector{1.0})[0], 1.0);
    EXPECT_NEAR(eval_h(m1(), Vector{0.5})[0], 0.775, 1e-15);
    const Vector h = eval_h(m2(), Vector{0.0, 1.0});
    EXPECT_NEAR(h[1], 0.6, 1e-15);
    const Vector one = eval_h(m2(), Vector{1.0, 1.0});
    EXPECT_EQ(one[0], 1.0);
    EXPECT_EQ(one[1], 1.0);
}

TEST(EvalH, Errors) {
    EXPECT_THROW(eval_h(m1(), Vector{1.5}), PreconditionError);
    EXPECT_THROW(eval_h(m1(), Vector{-0.1}), PreconditionError);
    EXPECT_THROW(eval_h(m2(), Vector{0.5}), PreconditionError);
}

TEST(IterateH, ZeroStepsIsIdentity) {
    const Vector s{0.25, 0.8};
    const auto e = iterate_h(m2(), 0, s);
    EXPECT_EQ(e.h, s);
    EXPECT_NEAR(e.R[0], 0.75, 1e-15);
}

TEST(IterateH, AgainstOracle) {
    const auto a = iterate_h(m2(), 2, Vector{0.3, 0.7});
    EXPECT_NEAR(a.h[0], 0.8219968, 1e-15);
    EXPECT_NEAR(a.h[1], 0.8912, 1e-15);
    const auto b = iterate_h(m2(), 5, Vector{0.0, 0.0});
    EXPECT_NEAR(b.h[0], 0.9475517688447317, 1e-15);
    EXPECT_NEAR(b.h[1], 0.9643758157119999, 1e-15);
    EXPECT_NEAR(iterate_h(m1(), 2, Vector{0.0}).h[0], 0.847, 1e-15);
}

TEST(IterateH, Semigroup) {
    std::mt19937_64 rng(11);
    for (int rep = 0; rep < 20; ++rep) {
        for (const BranchingModel& m : {m1(), m2()}) {
            const Vector s = random_point(rng, m.type_count());
            const int t = 1 + rep % 8;
            const int tau = 1 + (rep * 5) % 8;
            const Vector lhs = iterate_h(m, t + tau, s).h;
            const Vector rhs = iterate_h(m, t, iterate_h(m, tau, s).h).h;
            for (std::size_t i = 0; i < lhs.size(); ++i) EXPECT_NEAR(lhs[i], rhs[i], 1e-12);
        }
    }
}

TEST(IterateH, ComplementAgreesWithDirect) {
    std::mt19937_64 rng(12);
    for (int rep = 0; rep < 50; ++rep) {
        const Vector s = random_point(rng, 2);
        const auto e = iterate_h(m2(), 1 + rep % 10, s);
        for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(e.R[i], 1.0 - e.h[i], 1e-14);
    }
}

TEST(IterateH, ExtinctionMatchesKernel) {
    const BranchingModel m = m2();
    const auto sp = space(2, 80);
    const TransitionKernel k = one_step_kernel(m, sp);
    Vector col(sp->size(), 0.0);
    col[0] = 1.0;
    // totals stay below 2^6 = 64, inside the cap
    for (int t = 1; t <= 6; ++t) {
        col = k.apply(col);
        const Vector h = iterate_h(m, t, Vector{0.0, 0.0}).h;
        for (std::size_t i = 1; i <= 2; ++i) EXPECT_NEAR(col[sp->index(unit_state(i, 2))], h[i - 1], 1e-14);
    }
}

TEST(Survival, Inequality7And8) {
    std::mt19937_64 rng(13);
    for (const BranchingModel& m : {m1(), m2()}) {
        const std::size_t k = m.type_count();
        const auto Q = survival_sequence(m, 30);
        for (int rep = 0; rep < 1000; ++rep) {
            const Vector s = random_point(rng, k);
            Vector r(k);
            for (std::size_t i = 0; i < k; ++i) r[i] = 1.0 - s[i];
            for (int t = 1; t <= 30; ++t) {
                r = eval_complement(m, r);
                for (std::size_t i = 0; i < k; ++i) {
                    EXPECT_GE(r[i], -1e-12);
                    EXPECT_LE(r[i], Q[static_cast<std::size_t>(t)][i] + 1e-12);
                    EXPECT_LE(std::abs(r[i]), 2 * Q[static_cast<std::size_t>(t)][i] + 1e-12);
                }
            }
        }
    }
}

TEST(Survival, MonotoneToZero) {
    const auto Q = survival_sequence(m2(), 60);
    for (std::size_t t = 1; t < Q.size(); ++t)
        for (std::size_t i = 0; i < 2; ++i) EXPECT_LT(Q[t][i], Q[t - 1][i]);
    EXPECT_LT(Q.back()[0], 1e-12);
}

TEST(MeanDominance, HandValueAndGrid) {
    // M1 at s = 0: A * 1 - (1 - h(0)) = 0.6 - 0.3
    const Matrix A1 = first_moments(m1());
    const Vector lhs = A1 * Vector{1.0};
    EXPECT_NEAR(lhs[0] - eval_complement(m1(), Vector{1.0})[0], 0.3, 1e-15);
    EXPECT_EQ(mean_dominance(m1(), A1, {Vector{1.0}}), 0.0);
    std::mt19937_64 rng(14);
    std::vector<Vector> grid;
    for (int i = 0; i < 1000; ++i) grid.push_back(random_point(rng, 2));
    EXPECT_LE(mean_dominance(m2(), first_moments(m2()), grid), 1e-12);
}

TEST(Grid, Deterministic) {
    const auto a = make_s_grid(2, 25);
    const auto b = make_s_grid(2, 25);
    EXPECT_EQ(a, b);
    EXPECT_EQ(a.size(), 25u + 9u);
    for (const auto& s : a)
        for (double v : s) {
            EXPECT_GE(v, 0.0);
            EXPECT_LT(v, 1.0);
        }
}

TEST(RatioLimit, ScalarIdentity) {
    const SpectralSummary s = summary_of(m1());
    const auto tab = ratio_limit(m1(), s, 1, make_s_grid(1, 10), 20);
    for (const auto& row : tab.rows) EXPECT_NEAR(row.value, 1.0, 1e-12);
}

TEST(RatioLimit, NormalizedFormConverges) {
    const SpectralSummary s = summary_of(m2());
    const auto grid = make_s_grid(2, 16);
    const auto tab = ratio_limit_normalized(m2(), s, grid, 40);
    EXPECT_LE(tab.worst_at_t_max, 1e-8);
}

TEST(RatioLimit, LiteralFormTendsToEigenfunctionRatio) {
    // survival vectors align with f, so R^i / (f_k R^k) -> f_i / f_k^2, which equals
    // nu_i only when f is proportional to nu
    const SpectralSummary s = summary_of(m2());
    const auto grid = std::vector<Vector>{{0.0, 0.0}};
    const auto tab = ratio_limit(m2(), s, 1, grid, 40);
    for (const auto& row : tab.rows) {
        if (row.t != 40) continue;
        EXPECT_NEAR(row.value, s.f[row.type] / (s.f[0] * s.f[0]), 1e-8);
    }
    EXPECT_GT(tab.worst_at_t_max, 0.2);
}

TEST(RatioLimit, Errors) {
    const SpectralSummary s = summary_of(m2());
    EXPECT_THROW(ratio_limit(m2(), s, 1, {Vector{1.0, 1.0}}, 5), PreconditionError);
    EXPECT_THROW(ratio_limit(m2(), s, 3, {Vector{0.0, 0.0}}, 5), PreconditionError);
}

TEST(RatioLimit, CsvColumns) {
    const SpectralSummary s = summary_of(m2());
    const auto grid = std::vector<Vector>{{0.0, 0.5}};
    std::ostringstream os;
    write_csv(os, ratio_limit_normalized(m2(), s, grid, 1), grid);
    EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "t,s,value,target,abs_error");
}

TEST(SingleOffspringCondition, Models) {
    EXPECT_FALSE(single_offspring_condition(m1()));
    EXPECT_TRUE(single_offspring_condition(m2()));
}

TEST(Yaglom, M1ResidualAndSupport) {
    const BranchingModel m = m1();
    const SpectralSummary s = summary_of(m);
    const TransitionKernel k = one_step_kernel(m, space(1, 400));
    const YaglomData y = yaglom(m, k, s, 1, 60);
    const auto res = yaglom_residual(m, y, s, make_s_grid(1, 50));
    EXPECT_LT(res.max_residual, 1e-3);
    EXPECT_EQ(res.h_star_at_zero, 0.0);
    EXPECT_NEAR(res.h_star_at_one, 1.0 - y.deficit, 1e-12);
    // every total is even and no atom has a single child, so p*_1 vanishes
    EXPECT_EQ(y.mass_of(PopulationState{1}), 0.0);
    EXPECT_GT(y.mass_of(PopulationState{2}), 0.0);
    EXPECT_GT(y.mean()[0], 0.0);
    EXPECT_LT(y.deficit, 0.01);
}

TEST(Yaglom, ResidualShrinksWithHorizon) {
    const BranchingModel m = m2();
    const SpectralSummary s = summary_of(m);
    const TransitionKernel k = one_step_kernel(m, space(2, 40));
    const auto grid = make_s_grid(2, 25);
    const double r5 = yaglom_residual(m, yaglom(m, k, s, 1, 5), s, grid).max_residual;
    const double r15 = yaglom_residual(m, yaglom(m, k, s, 1, 15), s, grid).max_residual;
    EXPECT_LT(r15, r5);
}

TEST(Yaglom, M2SourceIndependenceAndPositivity) {
    const BranchingModel m = m2();
    const SpectralSummary s = summary_of(m);
    const TransitionKernel k = one_step_kernel(m, space(2, 60));
    const YaglomData a = yaglom(m, k, s, 1, 60);
    const YaglomData b = yaglom(m, k, s, 2, 60);
    EXPECT_LT(total_variation(a, b), 1e-3);
    EXPECT_GT(a.mass_of(PopulationState{1, 0}), 0.0);
    EXPECT_GT(a.mass_of(PopulationState{0, 1}), 0.0);
    EXPECT_LT(a.snapshot_distance, 1e-6);
}

TEST(Yaglom, RelabelingInvariance) {
    const BranchingModel swapped(
        {"T2", "T1"}, {OffspringLaw({{PopulationState{0, 0}, 0.6}, {PopulationState{0, 1}, 0.4}}),
                       OffspringLaw({{PopulationState{0, 0}, 0.5}, {PopulationState{1, 0}, 0.3}, {PopulationState{0, 2}, 0.2}})});
    const auto sp = space(2, 40);
    const YaglomData a = yaglom(m2(), one_step_kernel(m2(), sp), summary_of(m2()), 1, 40);
    const YaglomData b = yaglom(swapped, one_step_kernel(swapped, sp), summary_of(swapped), 2, 40);
    double tv = 0.0;
    for (std::size_t i = 0; i < a.support.size(); ++i) {
        const PopulationState& x = a.support[i];
        tv += std::abs(a.p_star[i] - b.mass_of(PopulationState{x[1], x[0]}));
    }
    EXPECT_LT(0.5 * tv, 1e-6);
}

TEST(Yaglom, Errors) {
    const BranchingModel m = m2();
    const SpectralSummary s = summary_of(m);
    const TransitionKernel small = one_step_kernel(m, space(2, 3));
    EXPECT_THROW(yaglom(m, small, s, 1, 40), PreconditionError);  // deficit too large
    const TransitionKernel k = one_step_kernel(m, space(2, 20));
    EXPECT_THROW(yaglom(m, k, s, 3, 10), PreconditionError);
    const BranchingModel sup = load_file("supercritical.json").model;
    EXPECT_THROW(yaglom(sup, one_step_kernel(sup, space(1, 20)), perron_triple(moments(sup)), 1, 5), PreconditionError);
}
