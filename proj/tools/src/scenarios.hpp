#pragma once

#include "specshape/tools/experiment.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace specshape::tools::detail {

struct ScenarioDef {
    std::string name;
    nlohmann::json defaults;
    std::vector<std::string> metric_columns;
    std::vector<std::string> flag_columns;
    std::vector<std::pair<std::string, double>> minimums;  // field -> smallest allowed value
    std::function<void(const nlohmann::json& params, std::uint64_t seed, SeedRun& run)> body;
};

/// Every scenario except verify-all, in documentation order.
const std::vector<ScenarioDef>& scenario_defs();
const ScenarioDef& find_scenario(const std::string& name);

}  // namespace specshape::tools::detail
