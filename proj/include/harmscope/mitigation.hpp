#pragma once

#include "harmscope/audit_classification.hpp"

#include <compare>
#include <cstddef>
#include <map>
#include <string>

namespace harmscope::mitigation {

struct DeltaKey {
    std::string model_id;
    std::string added_attribute;
    std::string evaluated_attribute;
    Metric metric = Metric::acc;

    auto operator<=>(const DeltaKey&) const = default;
};

/// Signed change in significant cells after an intervention, summed over
/// datasets: +1 per dataset where a disparity appeared, -1 where one vanished.
struct DeltaMatrix {
    std::map<DeltaKey, int> cells;
    std::size_t dataset_count = 0;
};

/// Differences two grids over the same key set. Skipped cells must be skipped
/// in both and contribute nothing.
///
/// Throws ComparisonError listing every key present (or skipped) on one side only.
DeltaMatrix significance_delta(const audit::SignificanceGrid& before,
                               const audit::SignificanceGrid& after,
                               const std::string& added_attribute);

}  // namespace harmscope::mitigation
