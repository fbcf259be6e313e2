#include "common.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

using namespace bpstop;
using namespace bpstop::testing;

TEST(Hj, PeriodWithinTailBound) {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (double delta : {0.3, 0.6, 0.9}) {
        for (int j = 1; j <= 3; ++j) {
            for (int rep = 0; rep < 30; ++rep) {
                const double x = u(rng);
                const HjValue a = eval_Hj(x, j, delta, 0.8);
                const HjValue b = eval_Hj(x + 1.0, j, delta, 0.8);
                EXPECT_LE(std::abs(a.value - b.value), a.tail_bound + b.tail_bound + 1e-15 * a.value);
                EXPECT_GT(a.value, 0.0);
            }
        }
    }
}

TEST(Hj, WideTruncationAgrees) {
    const HjValue a = eval_Hj(0.37, 2, 0.5, 1.3);
    const HjValue b = eval_Hj(0.37, 2, 0.5, 1.3, -200, 1000);
    EXPECT_NEAR(a.value, b.value, a.tail_bound + 1e-15);
    EXPECT_LT(a.tail_bound, 1e-15);
}

TEST(Hj, Errors) {
    EXPECT_THROW(eval_Hj(0.1, 1, 1.0, 1.0), PreconditionError);
    EXPECT_THROW(eval_Hj(0.1, 1, 0.5, 0.0), PreconditionError);
    EXPECT_THROW(eval_Hj(0.1, 0, 0.5, 1.0), PreconditionError);
    EXPECT_THROW(eval_Hj(0.1, 1, 0.5, 1.0, 5, 10), PreconditionError);
}

TEST(Hj, TooShortLowerTruncationReportsInfiniteBound) {
    const HjValue v = eval_Hj(0.0, 1, 0.5, 1e-6, -2, 50);
    EXPECT_TRUE(std::isinf(v.tail_bound));
}

TEST(Direction, LargestRemainder) {
    for (long long nbar : {1LL, 7LL, 100LL, 333LL}) {
        const PopulationState n = state_along({0.2, 0.5, 0.3}, nbar);
        EXPECT_EQ(n.total(), nbar);
        EXPECT_LE(std::abs(n[1] - 0.5 * nbar), 1.0);
    }
    EXPECT_EQ(state_along({1.0}, 42), PopulationState{42});
}

TEST(Direction, LogFraction) {
    for (double nbar : {1.0, 2.0, 100.0, 1e6}) {
        const double x = log_delta_fraction(nbar, 0.6);
        EXPECT_GE(x, 0.0);
        EXPECT_LT(x, 1.0);
    }
    // nbar and nbar / delta share the fractional part
    EXPECT_NEAR(log_delta_fraction(100.0, 0.5), log_delta_fraction(200.0, 0.5), 1e-12);
}

TEST(Direction, GeometricGrid) {
    const auto g = geometric_grid(100, 500, 5);
    EXPECT_EQ(g.front(), 100);
    EXPECT_EQ(g.back(), 500);
    EXPECT_TRUE(std::is_sorted(g.begin(), g.end()));
    EXPECT_THROW(geometric_grid(0, 5, 3), PreconditionError);
}

TEST(CyclicModel, Build) {
    const SpectralSummary s = summary_of(m2());
    const CyclicModel cm = build_cyclic_model(s, {0.5, 0.5}, StoppingSet({PopulationState{1, 0}, PopulationState{1, 2}}));
    EXPECT_EQ(cm.r0, 3);
    EXPECT_NEAR(cm.aK, 0.5 * (s.K[0] + s.K[1]), 1e-15);
    EXPECT_THROW(build_cyclic_model(s, {0.7, 0.7}, s2()), PreconditionError);
    EXPECT_THROW(build_cyclic_model(s, {-0.5, 1.5}, s2()), PreconditionError);
    EXPECT_THROW(build_cyclic_model(s, {1.0}, s2()), PreconditionError);
}

TEST(AmplitudeFit, SyntheticRecovery) {
    CyclicModel cm;
    cm.delta = 0.3;
    cm.aK = 1.0;
    cm.r0 = 2;
    const double c1 = 0.2, c2 = 0.05;
    std::vector<std::pair<double, double>> pts;
    for (int i = 0; i < 40; ++i) {
        const double x = (i + 0.5) / 40.0;
        pts.emplace_back(x, c1 * cm.basis(1, x).value + c2 * cm.basis(2, x).value);
    }
    const AmplitudeFit fit = fit_cyclic_amplitudes(pts, cm);
    EXPECT_NEAR(fit.c[0], c1, 1e-6);
    EXPECT_NEAR(fit.c[1], c2, 1e-6);
    EXPECT_FALSE(fit.rank_deficient);
    EXPECT_LT(fit.rms_residual, 1e-9);
}

TEST(AmplitudeFit, Degenerate) {
    CyclicModel cm;
    cm.delta = 0.3;
    cm.aK = 1.0;
    cm.r0 = 2;
    EXPECT_THROW(fit_cyclic_amplitudes({{0.1, 1.0}, {0.2, 1.0}, {0.3, 1.0}}, cm), PreconditionError);
    EXPECT_THROW(fit_cyclic_amplitudes({{0.4, 1.0}, {0.4, 1.0}, {0.4, 1.0}, {0.4, 1.0}}, cm), NumericalError);
}

TEST(Probe, M1SelfSimilarity) {
    const BranchingModel m = m1();
    const SpectralSummary s = summary_of(m);
    const TransitionKernel k = one_step_kernel(m, space(1, 1200));
    const ProbeReport rep =
        periodicity_probe(k, s1(), PopulationState{2}, {1.0}, geometric_grid(100, 300, 4), first_moments(m), s, 1e-10);
    ASSERT_EQ(rep.rows.size(), 4u);
    EXPECT_FALSE(rep.pre_asymptotic);
    EXPECT_GT(rep.theta, 0.0);
    for (const auto& r : rep.rows) {
        EXPECT_LE(r.defect, 0.02);
        EXPECT_LT(r.overflow_bound, 1e-6);
        EXPECT_EQ(r.partner.total(), std::llround(r.nbar / s.delta));
    }
    std::ostringstream os;
    write_csv(os, rep);
    EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "n,nbar,x_frac,q,overflow_bound,self_similarity_defect");
}

TEST(Probe, StartsInStoppingSetAreBumped) {
    const BranchingModel m = m1();
    const SpectralSummary s = summary_of(m);
    const TransitionKernel k = one_step_kernel(m, space(1, 60));
    const ProbeReport rep =
        periodicity_probe(k, s1(), PopulationState{2}, {1.0}, {2}, first_moments(m), s, 1e-10);
    EXPECT_EQ(rep.rows.front().nbar, 3);
    EXPECT_TRUE(rep.pre_asymptotic);
}

TEST(Probe, CapTooSmall) {
    const BranchingModel m = m1();
    const SpectralSummary s = summary_of(m);
    const TransitionKernel k = one_step_kernel(m, space(1, 150));
    EXPECT_THROW(periodicity_probe(k, s1(), PopulationState{2}, {1.0}, {100}, first_moments(m), s, 1e-10),
                 CapacityError);
}

TEST(Probe, MonteCarloCrossCheck) {
    // the long-horizon absorption frequency from 100 particles
    const BranchingModel m = m1();
    const SpectralSummary s = summary_of(m);
    const TransitionKernel k = one_step_kernel(m, space(1, 700));
    const ProbeReport rep =
        periodicity_probe(k, s1(), PopulationState{2}, {1.0}, {100}, first_moments(m), s, 1e-10);
    const Estimate e = estimate_absorption(PopulationState{100}, PopulationState{2}, s1(), m, 200, 20000, 8);
    EXPECT_NEAR(e.value, rep.rows.front().q, 4 * e.std_error);
}
