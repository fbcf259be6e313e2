#pragma once

#include <bpstop/error.hpp>
#include <bpstop/state.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace bpstop {

inline constexpr double kProbabilityTolerance = 1e-12;

struct Atom {
    PopulationState offspring;
    double p = 0.0;

    friend bool operator==(const Atom&, const Atom&) = default;
};

// One-step reproduction law of a single particle. Atoms are kept sorted
// lexicographically by offspring vector; mass is validated, never renormalized.
class OffspringLaw {
public:
    OffspringLaw() = default;

    explicit OffspringLaw(std::vector<Atom> atoms) : atoms_(std::move(atoms)) {
        if (atoms_.empty()) throw ValidationError("offspring law has no atoms");
        std::sort(atoms_.begin(), atoms_.end(),
                  [](const Atom& a, const Atom& b) { return a.offspring < b.offspring; });
        const std::size_t dim = atoms_.front().offspring.dimension();
        double sum = 0.0;
        for (std::size_t i = 0; i < atoms_.size(); ++i) {
            const Atom& a = atoms_[i];
            if (a.offspring.dimension() != dim) throw ValidationError("offspring vectors differ in length");
            if (!(a.p > 0.0) || a.p > 1.0) {
                throw ValidationError("atom " + a.offspring.str() + " has probability outside (0,1]");
            }
            if (i > 0 && atoms_[i - 1].offspring == a.offspring) {
                throw ValidationError("duplicate offspring state " + a.offspring.str());
            }
            sum += a.p;
        }
        if (std::abs(sum - 1.0) > kProbabilityTolerance) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.15g", sum);
            throw ValidationError(std::string("law sums to ") + buf);
        }
    }

    const std::vector<Atom>& atoms() const noexcept { return atoms_; }
    std::size_t dimension() const noexcept { return atoms_.empty() ? 0 : atoms_.front().offspring.dimension(); }
    double total_mass() const {
        double s = 0.0;
        for (const auto& a : atoms_) s += a.p;
        return s;
    }

    friend bool operator==(const OffspringLaw&, const OffspringLaw&) = default;

private:
    std::vector<Atom> atoms_;
};

// Finite-type branching model: one offspring law per type.
class BranchingModel {
public:
    BranchingModel() = default;

    BranchingModel(std::vector<std::string> type_names, std::vector<OffspringLaw> laws)
        : names_(std::move(type_names)), laws_(std::move(laws)) {
        if (names_.empty()) throw ValidationError("model has no types");
        if (names_.size() != laws_.size()) {
            throw ValidationError("number of laws (" + std::to_string(laws_.size()) + ") differs from number of types (" +
                                  std::to_string(names_.size()) + ")");
        }
        for (std::size_t i = 0; i < laws_.size(); ++i) {
            if (laws_[i].dimension() != names_.size()) {
                throw ValidationError("law for type " + std::to_string(i + 1) + " has offspring vectors of length " +
                                      std::to_string(laws_[i].dimension()) + ", expected " +
                                      std::to_string(names_.size()));
            }
        }
    }

    std::size_t type_count() const noexcept { return names_.size(); }
    const std::vector<std::string>& type_names() const noexcept { return names_; }
    const std::vector<OffspringLaw>& laws() const noexcept { return laws_; }
    // 0-based
    const OffspringLaw& law(std::size_t i) const { return laws_.at(i); }

    friend bool operator==(const BranchingModel&, const BranchingModel&) = default;

private:
    std::vector<std::string> names_;
    std::vector<OffspringLaw> laws_;
};

// Finite set of absorbing population vectors; never contains the zero state.
class StoppingSet {
public:
    StoppingSet() = default;

    explicit StoppingSet(std::vector<PopulationState> members) : members_(std::move(members)) {
        if (members_.empty()) throw ValidationError("stopping set is empty");
        std::sort(members_.begin(), members_.end());
        members_.erase(std::unique(members_.begin(), members_.end()), members_.end());
        const std::size_t dim = members_.front().dimension();
        for (const auto& m : members_) {
            if (m.dimension() != dim) throw ValidationError("stopping set members differ in length");
            if (m.is_zero()) throw ValidationError("zero state in stopping set");
        }
    }

    StoppingSet(std::initializer_list<PopulationState> members)
        : StoppingSet(std::vector<PopulationState>(members)) {}

    const std::vector<PopulationState>& members() const noexcept { return members_; }
    std::size_t size() const noexcept { return members_.size(); }
    std::size_t dimension() const noexcept { return members_.empty() ? 0 : members_.front().dimension(); }

    bool contains(const PopulationState& s) const { return std::binary_search(members_.begin(), members_.end(), s); }

    // Largest total over members.
    long long r0() const {
        long long best = 0;
        for (const auto& m : members_) best = std::max(best, m.total());
        return best;
    }

private:
    std::vector<PopulationState> members_;
};

struct LoadedModel {
    BranchingModel model;
    std::optional<StoppingSet> stopping_set;
};

namespace detail {

inline std::pair<int, int> line_column(const std::string& text, std::size_t byte) {
    int line = 1;
    int col = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

inline PopulationState counts_from_json(const nlohmann::json& j, const std::string& where) {
    if (!j.is_array()) throw ParseError(where + ": expected an array of counts");
    std::vector<int> counts;
    for (const auto& v : j) {
        if (!v.is_number_integer()) throw ParseError(where + ": counts must be integers");
        long long c = v.get<long long>();
        if (c < 0 || c > 1'000'000) throw ParseError(where + ": count " + std::to_string(c) + " out of range");
        counts.push_back(static_cast<int>(c));
    }
    return PopulationState(std::move(counts));
}

inline void reject_unknown_keys(const nlohmann::json& obj, std::initializer_list<const char*> allowed,
                                const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* k : allowed) known = known || it.key() == k;
        if (!known) throw ParseError(where + ": unknown field '" + it.key() + "'");
    }
}

}  // namespace detail

// Parses and validates a model file (JSON syntax; see README for the schema).
inline LoadedModel load_model(const std::string& text) {
    nlohmann::json root;
    try {
        root = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        auto [line, col] = detail::line_column(text, e.byte > 0 ? e.byte - 1 : 0);
        throw ParseError("malformed JSON", line, col);
    }
    if (!root.is_object()) throw ParseError("top level must be an object");
    detail::reject_unknown_keys(root, {"version", "types", "offspring", "stopping_set"}, "model");

    if (!root.contains("version") || !root["version"].is_number_integer() || root["version"].get<int>() != 1) {
        throw ParseError("field 'version' must be the integer 1");
    }
    if (!root.contains("types") || !root["types"].is_array()) throw ParseError("field 'types' must be a list of names");
    std::vector<std::string> names;
    for (const auto& n : root["types"]) {
        if (!n.is_string()) throw ParseError("field 'types' must contain strings");
        names.push_back(n.get<std::string>());
    }
    if (!root.contains("offspring") || !root["offspring"].is_array()) {
        throw ParseError("field 'offspring' must be a list with one entry per type");
    }
    const auto& off = root["offspring"];
    if (off.size() != names.size()) {
        throw ValidationError("number of laws (" + std::to_string(off.size()) + ") differs from number of types (" +
                              std::to_string(names.size()) + ")");
    }
    std::vector<OffspringLaw> laws;
    for (std::size_t i = 0; i < off.size(); ++i) {
        const std::string where = "offspring[" + std::to_string(i) + "]";
        if (!off[i].is_array()) throw ParseError(where + ": expected a list of atoms");
        std::vector<Atom> atoms;
        for (std::size_t a = 0; a < off[i].size(); ++a) {
            const auto& atom = off[i][a];
            const std::string aw = where + "[" + std::to_string(a) + "]";
            if (!atom.is_object()) throw ParseError(aw + ": expected {counts, p}");
            detail::reject_unknown_keys(atom, {"counts", "p"}, aw);
            if (!atom.contains("counts")) throw ParseError(aw + ": missing 'counts'");
            if (!atom.contains("p") || !atom["p"].is_number()) throw ParseError(aw + ": missing numeric 'p'");
            PopulationState counts = detail::counts_from_json(atom["counts"], aw + ".counts");
            if (counts.dimension() != names.size()) {
                throw ValidationError(aw + ": offspring vector has length " + std::to_string(counts.dimension()) +
                                      ", expected " + std::to_string(names.size()));
            }
            atoms.push_back({std::move(counts), atom["p"].get<double>()});
        }
        try {
            laws.emplace_back(std::move(atoms));
        } catch (const ValidationError& e) {
            // "law sums to X" becomes "law for type N sums to X"
            std::string msg = e.what();
            const std::string who = "law for type " + std::to_string(i + 1);
            if (msg.rfind("law ", 0) == 0) throw ValidationError(who + msg.substr(3));
            throw ValidationError(who + ": " + msg);
        }
    }

    LoadedModel out{BranchingModel(std::move(names), std::move(laws)), std::nullopt};
    if (root.contains("stopping_set")) {
        const auto& ss = root["stopping_set"];
        if (!ss.is_array()) throw ParseError("field 'stopping_set' must be a list of count vectors");
        std::vector<PopulationState> members;
        for (std::size_t i = 0; i < ss.size(); ++i) {
            auto m = detail::counts_from_json(ss[i], "stopping_set[" + std::to_string(i) + "]");
            if (m.dimension() != out.model.type_count()) {
                throw ValidationError("stopping_set[" + std::to_string(i) + "] has wrong length");
            }
            members.push_back(std::move(m));
        }
        out.stopping_set = StoppingSet(std::move(members));
    }
    return out;
}

// Canonical JSON text; load_model(serialize_model(m)) reproduces m exactly.
inline std::string serialize_model(const BranchingModel& model, const std::optional<StoppingSet>& s = std::nullopt) {
    nlohmann::json root;
    root["version"] = 1;
    root["types"] = model.type_names();
    nlohmann::json off = nlohmann::json::array();
    for (const auto& law : model.laws()) {
        nlohmann::json atoms = nlohmann::json::array();
        for (const auto& a : law.atoms()) {
            atoms.push_back({{"counts", std::vector<int>(a.offspring.counts().begin(), a.offspring.counts().end())},
                             {"p", a.p}});
        }
        off.push_back(std::move(atoms));
    }
    root["offspring"] = std::move(off);
    if (s) {
        nlohmann::json members = nlohmann::json::array();
        for (const auto& m : s->members()) members.push_back(std::vector<int>(m.counts().begin(), m.counts().end()));
        root["stopping_set"] = std::move(members);
    }
    return root.dump(2);
}

}  // namespace bpstop
