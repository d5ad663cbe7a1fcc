#pragma once

// Significance flags reported for the Xu_interpretable depression model over
// four datasets, without and with first-gen status among the model inputs.

#include "harmscope/audit_classification.hpp"

#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

namespace xu {

inline const std::vector<std::string> kAttributes{"First-gen College Student", "Gender", "Immigration Status",
                                                  "Race", "Sexual Orientation"};
inline const std::vector<std::string> kDatasets{"DS1", "DS2", "DS3", "DS4"};
inline constexpr const char* kModel = "Xu_interpretable";

using Flag = std::tuple<std::string, harmscope::Metric, std::string>;  // attribute, metric, dataset

inline harmscope::audit::SignificanceGrid grid(const std::set<Flag>& significant) {
    using harmscope::Metric;
    harmscope::audit::SignificanceGrid g;
    for (const auto& ds : kDatasets)
        for (const auto& attr : kAttributes)
            for (Metric m : {Metric::acc, Metric::fnr, Metric::fpr}) {
                harmscope::audit::GridCell cell;
                cell.significant = significant.contains({attr, m, ds});
                cell.raw_p = cell.significant ? 0.001 : 0.5;
                cell.family_size = 15;
                g.cells[{kModel, ds, attr, m}] = cell;
            }
    return g;
}

inline harmscope::audit::SignificanceGrid before() {
    return grid({{"First-gen College Student", harmscope::Metric::fnr, "DS3"}});
}

inline harmscope::audit::SignificanceGrid after() {
    return grid({{"Gender", harmscope::Metric::acc, "DS4"}, {"Gender", harmscope::Metric::fpr, "DS4"}});
}

/// Same key set as before()/after(), each cell significant with probability 0.3.
inline harmscope::audit::SignificanceGrid random_grid(std::mt19937_64& rng) {
    std::bernoulli_distribution coin(0.3);
    auto g = before();
    for (auto& [_, cell] : g.cells) cell.significant = coin(rng);
    return g;
}

}  // namespace xu
