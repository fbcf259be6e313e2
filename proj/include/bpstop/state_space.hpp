#pragma once

#include <bpstop/error.hpp>
#include <bpstop/state.hpp>

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace bpstop {

inline constexpr std::size_t kDefaultStateLimit = 2'000'000;

// All population vectors with k entries and total <= cap, in lexicographic
// order. Ordinal size() is the overflow sentinel that absorbs every path whose
// total leaves the cap.
class StateSpace {
public:
    StateSpace(std::size_t types, int cap, std::size_t limit = kDefaultStateLimit) : k_(types), cap_(cap) {
        if (types < 1) throw PreconditionError("state space needs at least one type");
        if (cap < 0) throw PreconditionError("cap must be nonnegative");

        // count_[m][b] = number of vectors of length m with total <= b = C(b+m, m)
        count_.assign(k_ + 1, std::vector<std::uint64_t>(static_cast<std::size_t>(cap_) + 1, 0));
        constexpr std::uint64_t sat = std::numeric_limits<std::uint64_t>::max() / 4;
        for (std::size_t b = 0; b <= static_cast<std::size_t>(cap_); ++b) count_[0][b] = 1;
        for (std::size_t m = 1; m <= k_; ++m) {
            std::uint64_t run = 0;
            for (std::size_t b = 0; b <= static_cast<std::size_t>(cap_); ++b) {
                run = std::min(sat, run + count_[m - 1][b]);
                count_[m][b] = run;
            }
        }
        const std::uint64_t n = count_[k_][static_cast<std::size_t>(cap_)];
        if (n > limit) {
            throw CapacityError("state space with " + std::to_string(types) + " types and cap " + std::to_string(cap) +
                                " has " + std::to_string(n) + " states, limit is " + std::to_string(limit));
        }

        states_.reserve(static_cast<std::size_t>(n));
        std::vector<int> cur(k_, 0);
        enumerate(cur, 0, cap_);
    }

    std::size_t types() const noexcept { return k_; }
    int cap() const noexcept { return cap_; }
    std::size_t size() const noexcept { return states_.size(); }
    std::size_t overflow() const noexcept { return states_.size(); }
    std::size_t zero_index() const noexcept { return 0; }

    const PopulationState& state(std::size_t ordinal) const { return states_.at(ordinal); }
    const std::vector<PopulationState>& states() const noexcept { return states_; }

    bool contains(const PopulationState& s) const { return s.dimension() == k_ && s.total() <= cap_; }

    // Lexicographic rank; state must lie in the space.
    std::size_t index(std::span<const int> x) const {
        std::size_t rank = 0;
        long long budget = cap_;
        for (std::size_t p = 0; p < k_; ++p) {
            const std::size_t m = k_ - p - 1;
            const int v = x[p];
            if (v > 0) {
                // vectors agreeing on the prefix with a smaller entry at p:
                // sum_{u=budget-v+1}^{budget} C(u+m, m) = C(budget+m+1, m+1) - C(budget-v+m+1, m+1)
                rank += count_[m + 1][static_cast<std::size_t>(budget)];
                if (budget - v >= 0) rank -= count_[m + 1][static_cast<std::size_t>(budget - v)];
            }
            budget -= v;
        }
        return rank;
    }

    std::size_t index(const PopulationState& s) const {
        if (!contains(s)) throw PreconditionError("state " + s.str() + " outside the state space");
        return index(s.counts());
    }

    std::optional<std::size_t> find(const PopulationState& s) const {
        if (!contains(s)) return std::nullopt;
        return index(s.counts());
    }

private:
    void enumerate(std::vector<int>& cur, std::size_t pos, int budget) {
        if (pos == k_) {
            states_.emplace_back(cur);
            return;
        }
        for (int v = 0; v <= budget; ++v) {
            cur[pos] = v;
            enumerate(cur, pos + 1, budget - v);
        }
        cur[pos] = 0;
    }

    std::size_t k_;
    int cap_;
    std::vector<std::vector<std::uint64_t>> count_;
    std::vector<PopulationState> states_;
};

inline StateSpace enumerate_states(std::size_t types, int cap, std::size_t limit = kDefaultStateLimit) {
    return StateSpace(types, cap, limit);
}

}  // namespace bpstop
