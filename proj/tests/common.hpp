#pragma once

#include <bpstop/bpstop.hpp>

#include <fstream>
#include <memory>
#include <sstream>
#include <string>

namespace bpstop::testing {

inline std::string model_path(const std::string& name) { return std::string(BPSTOP_MODELS) + "/" + name; }

inline LoadedModel load_file(const std::string& name) {
    std::ifstream in(model_path(name));
    std::ostringstream ss;
    ss << in.rdbuf();
    return load_model(ss.str());
}

inline BranchingModel m1() {
    return BranchingModel({"T1"}, {OffspringLaw({{PopulationState{0}, 0.7}, {PopulationState{2}, 0.3}})});
}

inline BranchingModel m2() {
    return BranchingModel({"T1", "T2"},
                          {OffspringLaw({{PopulationState{0, 0}, 0.5}, {PopulationState{0, 1}, 0.3}, {PopulationState{2, 0}, 0.2}}),
                           OffspringLaw({{PopulationState{0, 0}, 0.6}, {PopulationState{1, 0}, 0.4}})});
}

inline StoppingSet s1() { return StoppingSet({PopulationState{2}}); }
inline StoppingSet s2() { return StoppingSet({PopulationState{1, 0}}); }

inline std::shared_ptr<const StateSpace> space(std::size_t k, int cap) { return std::make_shared<const StateSpace>(k, cap); }

inline SpectralSummary summary_of(const BranchingModel& m) {
    SpectralSummary s = perron_triple(moments(m));
    attach_survival_constants(m, s);
    return s;
}

}  // namespace bpstop::testing
