#pragma once

#include <bpstop/error.hpp>
#include <bpstop/genfun.hpp>
#include <bpstop/model.hpp>
#include <bpstop/random.hpp>
#include <bpstop/state.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <thread>
#include <vector>

namespace bpstop {

inline constexpr long long kExplosionLimit = 10'000'000;

// Per-type alias tables over the atoms of each offspring law.
class OffspringSampler {
public:
    explicit OffspringSampler(BranchingModel model) : model_(std::move(model)) {
        for (const auto& law : model_.laws()) {
            std::vector<double> w;
            for (const auto& a : law.atoms()) w.push_back(a.p);
            tables_.emplace_back(w);
        }
    }

    const BranchingModel& model() const noexcept { return model_; }

    template <typename Rng>
    const PopulationState& draw(std::size_t type, Rng& rng) const {
        return model_.law(type).atoms()[tables_[type].sample(rng)].offspring;
    }

private:
    BranchingModel model_;
    std::vector<AliasTable> tables_;
};

// Every particle draws an independent offspring vector; the results are summed.
template <typename Rng>
PopulationState step(const PopulationState& state, const OffspringSampler& sampler, Rng& rng) {
    const std::size_t k = state.dimension();
    std::vector<int> next(k, 0);
    for (std::size_t i = 0; i < k; ++i) {
        for (int p = 0; p < state[i]; ++p) {
            const PopulationState& child = sampler.draw(i, rng);
            for (std::size_t j = 0; j < k; ++j) next[j] += child[j];
        }
    }
    return PopulationState(std::move(next));
}

enum class TrajectoryStatus { absorbed_at_zero, stopped_in_S, alive_at_horizon, exploded };

inline const char* to_string(TrajectoryStatus s) {
    switch (s) {
        case TrajectoryStatus::absorbed_at_zero: return "absorbed_at_zero";
        case TrajectoryStatus::stopped_in_S: return "stopped_in_S";
        case TrajectoryStatus::alive_at_horizon: return "alive_at_horizon";
        case TrajectoryStatus::exploded: return "exploded";
    }
    return "?";
}

struct TrajectoryOutcome {
    TrajectoryStatus status = TrajectoryStatus::alive_at_horizon;
    PopulationState state;
    int steps = 0;
};

// Simulates until the first entry into S, extinction, or the horizon.
template <typename Rng>
TrajectoryOutcome run_stopped(const PopulationState& n, const StoppingSet& s, const OffspringSampler& sampler,
                              int t_max, Rng& rng) {
    if (n.is_zero()) throw PreconditionError("start state is the zero state");
    if (s.contains(n)) throw PreconditionError("start state " + n.str() + " lies in the stopping set");
    if (t_max < 0) throw PreconditionError("horizon must be nonnegative");
    PopulationState cur = n;
    for (int t = 1; t <= t_max; ++t) {
        cur = step(cur, sampler, rng);
        if (cur.is_zero()) return {TrajectoryStatus::absorbed_at_zero, cur, t};
        if (s.contains(cur)) return {TrajectoryStatus::stopped_in_S, cur, t};
        if (cur.total() > kExplosionLimit) return {TrajectoryStatus::exploded, cur, t};
    }
    return {TrajectoryStatus::alive_at_horizon, cur, t_max};
}

struct Estimate {
    double value = 0.0;
    double std_error = 0.0;
    long long reps = 0;
    std::uint64_t seed = 0;
    bool degenerate_stderr = false;  // reps == 1: stderr set to 0 by convention
};

namespace detail {

// Runs body(i, rng) for i in [0, reps) over `workers` threads. Trajectory i
// always uses stream (seed, i), and results are reduced as integers, so the
// totals do not depend on the worker count.
template <typename Acc, typename Body>
Acc parallel_trajectories(long long reps, std::uint64_t seed, int workers, Body body) {
    if (reps < 1) throw PreconditionError("reps must be at least 1");
    workers = std::max(1, std::min<int>(workers, static_cast<int>(std::min<long long>(reps, 1024))));
    std::vector<Acc> partial(static_cast<std::size_t>(workers));
    auto run = [&](int w) {
        const long long lo = reps * w / workers;
        const long long hi = reps * (w + 1) / workers;
        Acc& acc = partial[static_cast<std::size_t>(w)];
        for (long long i = lo; i < hi; ++i) {
            Xoshiro256 rng = Xoshiro256::stream(seed, static_cast<std::uint64_t>(i));
            body(acc, rng);
        }
    };
    if (workers == 1) {
        run(0);
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(run, w);
        for (auto& th : pool) th.join();
    }
    Acc total{};
    for (auto& p : partial) total += p;
    return total;
}

struct Counts {
    long long hits = 0;
    long long sum = 0;
    long long sum_sq = 0;
    long long n = 0;
    Counts& operator+=(const Counts& o) {
        hits += o.hits;
        sum += o.sum;
        sum_sq += o.sum_sq;
        n += o.n;
        return *this;
    }
};

inline Estimate bernoulli(long long hits, long long reps, std::uint64_t seed) {
    Estimate e;
    e.value = static_cast<double>(hits) / static_cast<double>(reps);
    e.reps = reps;
    e.seed = seed;
    if (reps == 1) {
        e.degenerate_stderr = true;
        e.std_error = 0.0;
    } else {
        e.std_error = std::sqrt(e.value * (1.0 - e.value) / static_cast<double>(reps));
    }
    return e;
}

}  // namespace detail

// Fraction of trajectories stopped at r by time t.
inline Estimate estimate_absorption(const PopulationState& n, const PopulationState& r, const StoppingSet& s,
                                    const BranchingModel& model, int t, long long reps, std::uint64_t seed,
                                    int workers = 1) {
    if (!s.contains(r)) throw PreconditionError("target " + r.str() + " is not in the stopping set");
    if (n.is_zero() || s.contains(n)) throw PreconditionError("start state must be nonzero and outside S");
    const OffspringSampler sampler(model);
    const auto c = detail::parallel_trajectories<detail::Counts>(reps, seed, workers, [&](detail::Counts& acc, Xoshiro256& rng) {
        const auto out = run_stopped(n, s, sampler, t, rng);
        if (out.status == TrajectoryStatus::stopped_in_S && out.state == r) ++acc.hits;
    });
    return detail::bernoulli(c.hits, reps, seed);
}

// P(next state satisfies pred) from a fixed state, one step.
inline Estimate estimate_step_probability(const PopulationState& from, const BranchingModel& model,
                                          const std::function<bool(const PopulationState&)>& pred, long long reps,
                                          std::uint64_t seed, int workers = 1) {
    const OffspringSampler sampler(model);
    const auto c = detail::parallel_trajectories<detail::Counts>(reps, seed, workers, [&](detail::Counts& acc, Xoshiro256& rng) {
        if (pred(step(from, sampler, rng))) ++acc.hits;
    });
    return detail::bernoulli(c.hits, reps, seed);
}

// Sample mean of an integer statistic of the next state, with its standard error.
inline Estimate estimate_step_mean(const PopulationState& from, const BranchingModel& model,
                                   const std::function<long long(const PopulationState&)>& stat, long long reps,
                                   std::uint64_t seed, int workers = 1) {
    const OffspringSampler sampler(model);
    const auto c = detail::parallel_trajectories<detail::Counts>(reps, seed, workers, [&](detail::Counts& acc, Xoshiro256& rng) {
        const long long v = stat(step(from, sampler, rng));
        acc.sum += v;
        acc.sum_sq += v * v;
        ++acc.n;
    });
    Estimate e;
    e.reps = reps;
    e.seed = seed;
    const double nn = static_cast<double>(reps);
    e.value = static_cast<double>(c.sum) / nn;
    if (reps > 1) {
        const double var = (static_cast<double>(c.sum_sq) - nn * e.value * e.value) / (nn - 1.0);
        e.std_error = std::sqrt(std::max(0.0, var) / nn);
    } else {
        e.degenerate_stderr = true;
    }
    return e;
}

// Empirical law of the population at time t given non-extinction, from one type-j particle.
struct EmpiricalYaglom {
    int t = 0;
    long long reps = 0;
    long long survivors = 0;
    std::map<PopulationState, long long> counts;
    Estimate survival;  // frequency of the conditioning event

    double probability(const PopulationState& k) const {
        auto it = counts.find(k);
        return (it == counts.end() || survivors == 0) ? 0.0 : static_cast<double>(it->second) / static_cast<double>(survivors);
    }
};

inline EmpiricalYaglom estimate_yaglom(std::size_t j, const BranchingModel& model, int t, long long reps,
                                       std::uint64_t seed, int workers = 1) {
    const std::size_t k = model.type_count();
    const PopulationState start = unit_state(j, k);
    if (t < 0) throw PreconditionError("horizon must be nonnegative");
    const OffspringSampler sampler(model);
    struct Acc {
        std::map<PopulationState, long long> counts;
        long long survivors = 0;
        Acc& operator+=(const Acc& o) {
            for (const auto& [s, c] : o.counts) counts[s] += c;
            survivors += o.survivors;
            return *this;
        }
    };
    Acc acc = detail::parallel_trajectories<Acc>(reps, seed, workers, [&](Acc& a, Xoshiro256& rng) {
        PopulationState cur = start;
        for (int step_no = 0; step_no < t && !cur.is_zero(); ++step_no) {
            cur = step(cur, sampler, rng);
            if (cur.total() > kExplosionLimit) break;
        }
        if (!cur.is_zero()) {
            ++a.counts[cur];
            ++a.survivors;
        }
    });
    EmpiricalYaglom out;
    out.t = t;
    out.reps = reps;
    out.survivors = acc.survivors;
    out.counts = std::move(acc.counts);
    out.survival = detail::bernoulli(acc.survivors, reps, seed);
    return out;
}

// Total variation between the empirical conditional law and an exact one.
inline double total_variation(const EmpiricalYaglom& emp, const YaglomData& exact) {
    double tv = 0.0;
    double covered = 0.0;
    for (std::size_t i = 0; i < exact.support.size(); ++i) {
        const double pe = emp.probability(exact.support[i]);
        covered += pe;
        tv += std::abs(pe - exact.p_star[i]);
    }
    tv += std::max(0.0, 1.0 - covered);  // empirical mass outside the exact support
    return 0.5 * tv;
}

}  // namespace bpstop
