#include "harmscope/mitigation.hpp"

#include "harmscope/error.hpp"

#include <set>
#include <vector>

namespace harmscope::mitigation {

namespace {

std::string describe(const audit::CellKey& k) {
    return k.model_id + "/" + k.dataset_id + "/" + k.attribute + "/" + std::string(to_string(k.metric));
}

}  // namespace

DeltaMatrix significance_delta(const audit::SignificanceGrid& before,
                               const audit::SignificanceGrid& after,
                               const std::string& added_attribute) {
    std::vector<std::string> problems;
    for (const auto& [key, _] : before.cells)
        if (!after.cells.contains(key)) problems.push_back("only in before: " + describe(key));
    for (const auto& [key, _] : after.cells)
        if (!before.cells.contains(key)) problems.push_back("only in after: " + describe(key));
    for (const auto& [key, cell] : before.cells) {
        auto it = after.cells.find(key);
        if (it != after.cells.end() && cell.skipped() != it->second.skipped())
            problems.push_back("skipped on one side only: " + describe(key));
    }
    if (!problems.empty()) {
        std::string msg = "grids are not comparable";
        for (const auto& p : problems) msg += "\n  " + p;
        throw ComparisonError(msg);
    }

    DeltaMatrix out;
    std::set<std::string> datasets;
    for (const auto& [key, cell] : before.cells) {
        datasets.insert(key.dataset_id);
        const auto& other = after.cells.at(key);
        const int change = cell.skipped() ? 0 : int(other.significant) - int(cell.significant);
        out.cells[{key.model_id, added_attribute, key.attribute, key.metric}] += change;
    }
    out.dataset_count = datasets.size();
    return out;
}

}  // namespace harmscope::mitigation
