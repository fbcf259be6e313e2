#pragma once

#include <bpstop/csv.hpp>
#include <bpstop/error.hpp>
#include <bpstop/model.hpp>
#include <bpstop/spectral.hpp>
#include <bpstop/state.hpp>

#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace bpstop {

enum class CheckKind { structural, condition };

struct ValidationCheck {
    std::string name;
    CheckKind kind = CheckKind::structural;
    bool passed = false;
    std::string detail;
};

struct ValidationReport {
    std::vector<ValidationCheck> checks;

    bool structural_ok() const {
        for (const auto& c : checks)
            if (c.kind == CheckKind::structural && !c.passed) return false;
        return true;
    }
    bool all_passed() const {
        for (const auto& c : checks)
            if (!c.passed) return false;
        return true;
    }
    const ValidationCheck* find(const std::string& name) const {
        for (const auto& c : checks)
            if (c.name == name) return &c;
        return nullptr;
    }
};

// Takes raw stopping-set members so that a forbidden zero state can be
// reported instead of rejected at construction.
inline ValidationReport validate_model(const BranchingModel& model,
                                       const std::optional<std::vector<PopulationState>>& stop_members = std::nullopt) {
    ValidationReport rep;
    const std::size_t k = model.type_count();
    auto add = [&](std::string name, CheckKind kind, bool ok, std::string detail) {
        rep.checks.push_back({std::move(name), kind, ok, std::move(detail)});
    };

    add("law count matches type count", CheckKind::structural, model.laws().size() == k,
        std::to_string(model.laws().size()) + " laws for " + std::to_string(k) + " types");

    bool dims = true;
    bool mass = true;
    std::string mass_detail = "all laws sum to 1";
    for (std::size_t i = 0; i < model.laws().size(); ++i) {
        const auto& law = model.law(i);
        for (const auto& a : law.atoms()) dims = dims && a.offspring.dimension() == k;
        if (std::abs(law.total_mass() - 1.0) > kProbabilityTolerance) {
            mass = false;
            mass_detail = "law for type " + std::to_string(i + 1) + " sums to " + format_double(law.total_mass());
        }
    }
    add("offspring dimension", CheckKind::structural, dims, "offspring vectors have length " + std::to_string(k));
    add("probability mass", CheckKind::structural, mass, mass_detail);

    if (stop_members) {
        bool nonempty = !stop_members->empty();
        add("stopping set nonempty", CheckKind::structural, nonempty, nonempty ? "" : "stopping set is empty");
        bool zero = false;
        bool sdims = true;
        for (const auto& m : *stop_members) {
            zero = zero || m.is_zero();
            sdims = sdims && m.dimension() == k;
        }
        add("zero state not in stopping set", CheckKind::structural, !zero, zero ? "zero state in stopping set" : "");
        add("stopping set dimension", CheckKind::structural, sdims,
            sdims ? "" : "stopping-set member has the wrong dimension");
    }

    if (dims) {
        const Classification c = classify(moments(model));
        add("indecomposable", CheckKind::condition, c.indecomposable, "");
        add("noncyclic", CheckKind::condition, c.noncyclic(), "period " + std::to_string(c.period));
        add("subcritical", CheckKind::condition, c.criticality == Criticality::subcritical,
            std::string("delta = ") + format_double(c.delta) + " (" + to_string(c.criticality) + ")");
    }
    return rep;
}

}  // namespace bpstop
