#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace harmscope {

// ============================================================================
// Vocabulary
// ============================================================================

enum class TaskKind { classification, regression };

enum class Metric { acc, fnr, fpr, mse };

enum class CorrectionMode { paper_variant, bh_step_up };

enum class CorrectionFamily { per_dataset_all_tests, per_dataset_per_metric, none };

std::string_view to_string(TaskKind kind);
std::string_view to_string(Metric metric);
std::string_view to_string(CorrectionMode mode);
std::string_view to_string(CorrectionFamily family);

// Inverse of to_string; throw InputError on unknown names.
Metric parse_metric(std::string_view name);
CorrectionMode parse_correction_mode(std::string_view name);
CorrectionFamily parse_correction_family(std::string_view name);

// ============================================================================
// Records
// ============================================================================

/// One scored observation. `observation` disambiguates repeated measurements
/// of the same subject under the same (dataset, model, task, dimension).
struct PredictionRecord {
    std::string subject_id;
    std::string dataset_id;
    std::string model_id;
    TaskKind task = TaskKind::classification;
    std::string dimension;  // regression only, e.g. "emotional"
    double truth = 0.0;
    double prediction = 0.0;
    std::map<std::string, std::string> context;  // per-observation context levels
    std::size_t observation = 0;
    std::size_t source_row = 0;  // 1-based line in the originating file, 0 if synthetic
};

enum class AttributeKind { binary, categorical };

/// Levels of one attribute. For binary attributes `designated` is the
/// protected level; for categorical factors it is the reference level.
struct AttributeSchema {
    std::string name;
    std::vector<std::string> levels;
    std::string designated;
    AttributeKind kind = AttributeKind::binary;

    bool has_level(std::string_view level) const;
};

class CohortTable {
public:
    CohortTable() = default;

    /// Checks the schema invariants (2 levels for binary, >= 2 for categorical,
    /// designated level present) and that every entry uses a declared level.
    /// Throws InputError otherwise.
    CohortTable(std::vector<AttributeSchema> schema,
                std::map<std::string, std::map<std::string, std::string>> entries);

    const std::vector<AttributeSchema>& schema() const noexcept { return schema_; }
    const std::map<std::string, std::map<std::string, std::string>>& entries() const noexcept {
        return entries_;
    }

    const AttributeSchema* find_attribute(std::string_view name) const;
    bool has_subject(std::string_view subject_id) const;

    /// Level of `attribute` for `subject_id`, or nullopt when the subject is
    /// unknown or the cell is blank.
    std::optional<std::string> level_of(std::string_view subject_id,
                                        std::string_view attribute) const;

private:
    std::vector<AttributeSchema> schema_;
    std::map<std::string, std::map<std::string, std::string>> entries_;
};

/// Looks the factor up in the record's context first, then in the cohort.
std::optional<std::string> factor_level(const PredictionRecord& record,
                                        std::string_view factor,
                                        const CohortTable& cohort);

// ============================================================================
// Audit configuration
// ============================================================================

struct AuditSpec {
    std::vector<Metric> metrics{Metric::acc, Metric::fnr, Metric::fpr};
    double fdr_q = 0.05;
    CorrectionMode correction_mode = CorrectionMode::paper_variant;
    CorrectionFamily correction_family = CorrectionFamily::per_dataset_all_tests;
    double alpha_cap = 0.05;
    std::map<std::string, std::string> reference_overrides;
    int min_group_size = 2;
    double truth_min = 1.0;  // regression truth range, inclusive
    double truth_max = 5.0;

    /// Throws InputError if any field is out of its domain.
    void validate() const;
};

// ============================================================================
// Validation
// ============================================================================

struct SkippedGroup {
    std::string model_id;
    std::string dataset_id;
    std::string attribute;
    std::string level;
    std::size_t size = 0;

    auto operator<=>(const SkippedGroup&) const = default;
};

struct ValidationReport {
    bool ok = true;
    std::vector<std::string> errors;            // hard violations, sorted
    std::vector<std::string> missing_subjects;  // absent from the cohort, sorted
    std::vector<SkippedGroup> skipped_groups;   // below min_group_size, sorted
    std::vector<std::string> warnings;          // sorted
};

ValidationReport validate_inputs(std::span<const PredictionRecord> records,
                                 const CohortTable& cohort,
                                 const AuditSpec& spec);

// ============================================================================
// Score binarization
// ============================================================================

struct ClassificationLabelRule {
    enum class Direction { geq_is_positive, leq_is_positive };

    double cutoff = 13.0;  // BDI-II: >= 13 means at least mild symptoms
    Direction direction = Direction::geq_is_positive;
};

std::vector<int> binarize_scores(std::span<const double> scores,
                                 const ClassificationLabelRule& rule = {});

}  // namespace harmscope
