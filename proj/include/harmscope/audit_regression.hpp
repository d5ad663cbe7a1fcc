#pragma once

#include "harmscope/core.hpp"
#include "harmscope/mixed_model.hpp"

#include <compare>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace harmscope::audit {

struct GroupErrorRow {
    std::string level;
    std::size_t n_individuals = 0;
    std::size_t n_observations = 0;
    double mse = 0.0;
    double mean_residual = 0.0;  // mean of truth - prediction
};

struct GroupErrorStats {
    std::string factor;
    std::vector<GroupErrorRow> rows;  // one per observed level, sorted by level
    std::size_t excluded_observations = 0;  // no level for the factor
};

/// Per-level MSE and mean residual (truth - prediction). Observations without
/// a level for the factor are counted in excluded_observations.
GroupErrorStats group_error_stats(std::span<const PredictionRecord> records, std::string_view factor,
                                  const CohortTable& cohort);

/// "***" for p < 0.001, "**" for p < 0.01, "*" for p < 0.05, "" otherwise.
std::string significance_stars(double p);

/// Reference level for a factor: spec override, else the cohort's designated
/// reference for categorical attributes, else the lexicographically smallest
/// observed level. Throws InputError if an override names an unobserved level.
std::string resolve_reference(std::string_view factor, const std::set<std::string>& observed,
                              const CohortTable& cohort, const AuditSpec& spec);

struct RegressionBlockKey {
    std::string model_id;
    std::string dataset_id;
    std::string dimension;
    std::string factor;

    auto operator<=>(const RegressionBlockKey&) const = default;
};

struct RegressionBlock {
    std::string reference_level;
    std::optional<lmm::LMMFit> fit;
    std::optional<std::string> error;  // design or fit failure for this block only
    GroupErrorStats stats;
};

struct RegressionAuditReport {
    std::map<RegressionBlockKey, RegressionBlock> blocks;
    std::vector<std::string> warnings;
};

/// One random-intercept fit per (model, dataset, dimension, factor) on the
/// residuals, plus per-level error statistics. A failing block records its
/// error and does not stop the others.
///
/// Throws AuditError when there are no regression records to audit.
RegressionAuditReport run_regression_audit(std::span<const PredictionRecord> records,
                                           const std::vector<std::string>& factors,
                                           const CohortTable& cohort, const AuditSpec& spec,
                                           const lmm::FitOptions& fit_options = {});

}  // namespace harmscope::audit
