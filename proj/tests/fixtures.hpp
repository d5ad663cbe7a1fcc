#pragma once

#include "harmscope/core.hpp"

#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace fixture {

inline harmscope::PredictionRecord cls(std::string subject, int truth, int prediction,
                                       std::string dataset = "DS1", std::string model = "m") {
    harmscope::PredictionRecord r;
    r.subject_id = std::move(subject);
    r.dataset_id = std::move(dataset);
    r.model_id = std::move(model);
    r.task = harmscope::TaskKind::classification;
    r.truth = truth;
    r.prediction = prediction;
    return r;
}

inline harmscope::PredictionRecord reg(std::string subject, double truth, double prediction,
                                       std::size_t observation = 0, std::string dimension = "score") {
    harmscope::PredictionRecord r;
    r.subject_id = std::move(subject);
    r.dataset_id = "DS1";
    r.model_id = "m";
    r.task = harmscope::TaskKind::regression;
    r.dimension = std::move(dimension);
    r.truth = truth;
    r.prediction = prediction;
    r.observation = observation;
    return r;
}

/// Binary attribute `attr` with levels {yes, no}, "yes" protected.
inline harmscope::CohortTable binary_cohort(const std::string& attr,
                                            const std::map<std::string, std::string>& levels) {
    std::map<std::string, std::map<std::string, std::string>> entries;
    for (const auto& [s, l] : levels) entries[s][attr] = l;
    return harmscope::CohortTable({{attr, {"yes", "no"}, "yes", harmscope::AttributeKind::binary}},
                                  std::move(entries));
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("harmscope_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace fixture
