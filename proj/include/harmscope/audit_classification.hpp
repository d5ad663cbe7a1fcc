#pragma once

#include "harmscope/core.hpp"

#include <compare>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace harmscope::audit {

/// One subject's reduced outcome: value = 1 iff the prediction matched the truth.
struct CorrectnessEntry {
    std::string subject_id;
    int value = 0;
    int truth = 0;
    bool protected_group = false;
};

struct CorrectnessVector {
    std::string attribute;
    std::vector<CorrectnessEntry> entries;  // sorted by subject_id
    std::vector<std::string> excluded;      // subjects without a level for the attribute

    std::vector<double> values(bool protected_group) const;
    std::size_t count(bool protected_group, int value) const;
};

/// Builds the per-subject correctness vector for one model x dataset slice.
/// Repeated observations of a subject collapse to the majority outcome
/// (ties -> 0) and the majority truth label (ties -> 1).
///
/// Throws InputError if the attribute is not a binary cohort attribute or a
/// record is not a classification record.
CorrectnessVector correctness_vector(std::span<const PredictionRecord> records,
                                     const std::string& attribute, const CohortTable& cohort);

/// acc keeps everything, fnr keeps truth-positive subjects, fpr truth-negative.
CorrectnessVector subset_for_metric(const CorrectnessVector& v, Metric metric);

// ----------------------------------------------------------------------------
// Significance grid
// ----------------------------------------------------------------------------

struct CellKey {
    std::string model_id;
    std::string dataset_id;
    std::string attribute;
    Metric metric = Metric::acc;

    auto operator<=>(const CellKey&) const = default;
};

struct GridCell {
    std::optional<std::string> skipped_reason;
    double raw_p = 1.0;
    double u_statistic = 0.0;
    double z_score = 0.0;
    std::size_t n_protected = 0;
    std::size_t n_unprotected = 0;
    std::size_t rank = 0;  // within its correction family
    std::size_t family_size = 0;
    double threshold = 0.0;
    bool significant = false;

    bool skipped() const { return skipped_reason.has_value(); }
};

struct SignificanceGrid {
    std::map<CellKey, GridCell> cells;
    CorrectionMode correction_mode = CorrectionMode::paper_variant;
    CorrectionFamily correction_family = CorrectionFamily::per_dataset_all_tests;
    double fdr_q = 0.05;
    double alpha_cap = 0.05;
    std::vector<std::string> warnings;
};

/// Tests protected vs unprotected correctness for every (model, dataset,
/// binary attribute, metric), then applies the configured correction within
/// each family. Cells whose groups fall below spec.min_group_size are kept
/// with a skip reason.
///
/// Throws AuditError when no cell is testable.
SignificanceGrid run_classification_audit(std::span<const PredictionRecord> records,
                                          const CohortTable& cohort, const AuditSpec& spec);

/// (TPR + TNR) / 2 over observations. Throws InputError if a class is absent.
double balanced_accuracy(std::span<const PredictionRecord> records);

}  // namespace harmscope::audit
