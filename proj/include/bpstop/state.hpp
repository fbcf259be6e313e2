#pragma once

#include <bpstop/error.hpp>

#include <compare>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace bpstop {

// Vector of particle counts, one entry per type. The zero state is the
// all-zero vector; unit states carry a single particle.
class PopulationState {
public:
    PopulationState() = default;

    explicit PopulationState(std::vector<int> counts) : counts_(std::move(counts)) {
        for (int c : counts_) {
            if (c < 0) throw ValidationError("population counts must be nonnegative");
        }
    }

    PopulationState(std::initializer_list<int> counts) : PopulationState(std::vector<int>(counts)) {}

    static PopulationState zero(std::size_t types) { return PopulationState(std::vector<int>(types, 0)); }

    std::size_t dimension() const noexcept { return counts_.size(); }
    int operator[](std::size_t i) const { return counts_[i]; }
    std::span<const int> counts() const noexcept { return counts_; }

    long long total() const noexcept { return std::accumulate(counts_.begin(), counts_.end(), 0LL); }
    bool is_zero() const noexcept { return total() == 0; }

    PopulationState operator+(const PopulationState& other) const {
        if (other.dimension() != dimension()) throw PreconditionError("dimension mismatch in state addition");
        std::vector<int> out(counts_);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += other.counts_[i];
        return PopulationState(std::move(out));
    }

    friend bool operator==(const PopulationState&, const PopulationState&) = default;
    friend auto operator<=>(const PopulationState& a, const PopulationState& b) { return a.counts_ <=> b.counts_; }

    // "[2,0]"
    std::string str() const {
        std::string out = "[";
        for (std::size_t i = 0; i < counts_.size(); ++i) {
            if (i) out += ',';
            out += std::to_string(counts_[i]);
        }
        out += ']';
        return out;
    }

private:
    std::vector<int> counts_;
};

inline std::ostream& operator<<(std::ostream& os, const PopulationState& s) { return os << s.str(); }

// Single particle of type i (1-based) among k types.
inline PopulationState unit_state(std::size_t i, std::size_t k) {
    if (i < 1 || i > k) {
        throw PreconditionError("type index " + std::to_string(i) + " out of range 1.." + std::to_string(k));
    }
    std::vector<int> counts(k, 0);
    counts[i - 1] = 1;
    return PopulationState(std::move(counts));
}

// Parses "[2,0]" or "2,0".
inline PopulationState parse_state(const std::string& text) {
    std::string body = text;
    if (!body.empty() && body.front() == '[') body.erase(body.begin());
    if (!body.empty() && body.back() == ']') body.pop_back();
    std::vector<int> counts;
    std::stringstream ss(body);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            int v = std::stoi(item, &used);
            if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
            counts.push_back(v);
        } catch (const std::logic_error&) {
            throw ParseError("bad state literal '" + text + "'");
        }
    }
    if (counts.empty()) throw ParseError("empty state literal '" + text + "'");
    return PopulationState(std::move(counts));
}

}  // namespace bpstop
