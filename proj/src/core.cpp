#include "harmscope/core.hpp"

#include "harmscope/error.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <tuple>

namespace harmscope {

std::string_view to_string(TaskKind kind) {
    return kind == TaskKind::classification ? "cls" : "reg";
}

std::string_view to_string(Metric metric) {
    switch (metric) {
        case Metric::acc: return "acc";
        case Metric::fnr: return "fnr";
        case Metric::fpr: return "fpr";
        case Metric::mse: return "mse";
    }
    return "?";
}

std::string_view to_string(CorrectionMode mode) {
    return mode == CorrectionMode::paper_variant ? "paper_variant" : "bh_step_up";
}

std::string_view to_string(CorrectionFamily family) {
    switch (family) {
        case CorrectionFamily::per_dataset_all_tests: return "per_dataset_all_tests";
        case CorrectionFamily::per_dataset_per_metric: return "per_dataset_per_metric";
        case CorrectionFamily::none: return "none";
    }
    return "?";
}

Metric parse_metric(std::string_view name) {
    // Accept the long names used in configs as well as the table abbreviations.
    if (name == "acc" || name == "acc_disparity") return Metric::acc;
    if (name == "fnr" || name == "fnr_disparity") return Metric::fnr;
    if (name == "fpr" || name == "fpr_disparity") return Metric::fpr;
    if (name == "mse" || name == "mse_disparity") return Metric::mse;
    throw InputError("unknown metric: " + std::string(name));
}

CorrectionMode parse_correction_mode(std::string_view name) {
    if (name == "paper_variant") return CorrectionMode::paper_variant;
    if (name == "bh_step_up") return CorrectionMode::bh_step_up;
    throw InputError("unknown correction mode: " + std::string(name));
}

CorrectionFamily parse_correction_family(std::string_view name) {
    if (name == "per_dataset_all_tests") return CorrectionFamily::per_dataset_all_tests;
    if (name == "per_dataset_per_metric") return CorrectionFamily::per_dataset_per_metric;
    if (name == "none") return CorrectionFamily::none;
    throw InputError("unknown correction family: " + std::string(name));
}

// ----------------------------------------------------------------------------
// CohortTable
// ----------------------------------------------------------------------------

bool AttributeSchema::has_level(std::string_view level) const {
    return std::find(levels.begin(), levels.end(), level) != levels.end();
}

CohortTable::CohortTable(std::vector<AttributeSchema> schema,
                         std::map<std::string, std::map<std::string, std::string>> entries)
    : schema_(std::move(schema)), entries_(std::move(entries)) {
    std::set<std::string> names;
    for (const auto& attr : schema_) {
        if (attr.name.empty()) throw InputError("attribute with empty name");
        if (!names.insert(attr.name).second)
            throw InputError("attribute declared twice: " + attr.name);
        std::set<std::string> distinct(attr.levels.begin(), attr.levels.end());
        if (distinct.size() != attr.levels.size())
            throw InputError("attribute " + attr.name + " lists a level twice");
        if (attr.kind == AttributeKind::binary && attr.levels.size() != 2)
            throw InputError("binary attribute " + attr.name + " must have exactly 2 levels");
        if (attr.kind == AttributeKind::categorical && attr.levels.size() < 2)
            throw InputError("categorical attribute " + attr.name + " needs at least 2 levels");
        if (!attr.has_level(attr.designated))
            throw InputError("attribute " + attr.name + ": designated level '" + attr.designated +
                             "' is not among its levels");
    }
    for (const auto& [subject, row] : entries_) {
        for (const auto& [attr_name, level] : row) {
            const AttributeSchema* attr = find_attribute(attr_name);
            if (attr == nullptr)
                throw InputError("subject " + subject + " has undeclared attribute " + attr_name);
            if (!level.empty() && !attr->has_level(level))
                throw InputError("subject " + subject + ": unknown level '" + level +
                                 "' for attribute " + attr_name);
        }
    }
}

const AttributeSchema* CohortTable::find_attribute(std::string_view name) const {
    for (const auto& attr : schema_)
        if (attr.name == name) return &attr;
    return nullptr;
}

bool CohortTable::has_subject(std::string_view subject_id) const {
    return entries_.find(std::string(subject_id)) != entries_.end();
}

std::optional<std::string> CohortTable::level_of(std::string_view subject_id,
                                                 std::string_view attribute) const {
    auto row = entries_.find(std::string(subject_id));
    if (row == entries_.end()) return std::nullopt;
    auto cell = row->second.find(std::string(attribute));
    if (cell == row->second.end() || cell->second.empty()) return std::nullopt;
    return cell->second;
}

std::optional<std::string> factor_level(const PredictionRecord& record,
                                        std::string_view factor,
                                        const CohortTable& cohort) {
    auto it = record.context.find(std::string(factor));
    if (it != record.context.end() && !it->second.empty()) return it->second;
    return cohort.level_of(record.subject_id, factor);
}

// ----------------------------------------------------------------------------
// AuditSpec
// ----------------------------------------------------------------------------

void AuditSpec::validate() const {
    if (!(fdr_q > 0.0 && fdr_q < 1.0)) throw InputError("fdr_q must lie in (0, 1)");
    if (!(alpha_cap > 0.0 && alpha_cap <= 1.0)) throw InputError("alpha_cap must lie in (0, 1]");
    if (min_group_size < 1) throw InputError("min_group_size must be >= 1");
    if (metrics.empty()) throw InputError("no metrics requested");
    if (!(truth_min <= truth_max)) throw InputError("truth range is empty");
}

// ----------------------------------------------------------------------------
// validate_inputs
// ----------------------------------------------------------------------------

namespace {

std::string where(const PredictionRecord& r) {
    std::ostringstream os;
    if (r.source_row > 0)
        os << "row " << r.source_row;
    else
        os << "record " << r.subject_id << "/" << r.dataset_id << "/" << r.model_id;
    return os.str();
}

}  // namespace

ValidationReport validate_inputs(std::span<const PredictionRecord> records,
                                 const CohortTable& cohort,
                                 const AuditSpec& spec) {
    ValidationReport report;
    if (records.empty()) {
        report.ok = false;
        report.errors.push_back("no observations");
        return report;
    }
    try {
        spec.validate();
    } catch (const InputError& e) {
        report.errors.push_back(std::string("audit spec: ") + e.what());
    }

    using Key = std::tuple<std::string, std::string, std::string, TaskKind, std::string, std::size_t>;
    std::set<Key> seen;
    std::set<std::string> missing;
    // (model, dataset) -> subjects observed there
    std::map<std::pair<std::string, std::string>, std::set<std::string>> subjects_by_cell;

    for (const auto& r : records) {
        if (!std::isfinite(r.truth) || !std::isfinite(r.prediction)) {
            report.errors.push_back(where(r) + ": non-finite value");
        } else if (r.task == TaskKind::classification) {
            auto binary = [](double v) { return v == 0.0 || v == 1.0; };
            if (!binary(r.truth) || !binary(r.prediction))
                report.errors.push_back(where(r) + ": classification values must be 0 or 1");
        } else if (r.truth < spec.truth_min || r.truth > spec.truth_max) {
            std::ostringstream os;
            os << where(r) << ": regression truth " << r.truth << " outside [" << spec.truth_min
               << ", " << spec.truth_max << "]";
            report.errors.push_back(os.str());
        }
        Key key{r.subject_id, r.dataset_id, r.model_id, r.task, r.dimension, r.observation};
        if (!seen.insert(key).second) report.errors.push_back(where(r) + ": duplicate observation key");
        if (!cohort.has_subject(r.subject_id)) missing.insert(r.subject_id);
        subjects_by_cell[{r.model_id, r.dataset_id}].insert(r.subject_id);
    }

    for (const auto& [subject, row] : cohort.entries()) {
        for (const auto& [attr_name, level] : row) {
            const AttributeSchema* attr = cohort.find_attribute(attr_name);
            if (attr == nullptr || (!level.empty() && !attr->has_level(level)))
                report.errors.push_back("cohort subject " + subject + ": invalid level for " + attr_name);
        }
    }

    report.missing_subjects.assign(missing.begin(), missing.end());
    for (const auto& s : report.missing_subjects)
        report.errors.push_back("subject missing from cohort: " + s);

    for (const auto& [cell, subjects] : subjects_by_cell) {
        for (const auto& attr : cohort.schema()) {
            std::map<std::string, std::size_t> sizes;
            for (const auto& level : attr.levels) sizes[level] = 0;
            std::size_t blanks = 0;
            for (const auto& s : subjects) {
                if (!cohort.has_subject(s)) continue;
                if (auto level = cohort.level_of(s, attr.name))
                    ++sizes[*level];
                else
                    ++blanks;
            }
            for (const auto& [level, n] : sizes) {
                if (n < static_cast<std::size_t>(spec.min_group_size))
                    report.skipped_groups.push_back({cell.first, cell.second, attr.name, level, n});
            }
            if (blanks > 0) {
                report.warnings.push_back(cell.first + "/" + cell.second + ": " + std::to_string(blanks) +
                                          " subject(s) without a level for " + attr.name);
            }
        }
    }
    for (const auto& g : report.skipped_groups) {
        report.warnings.push_back(g.model_id + "/" + g.dataset_id + ": group " + g.attribute + "=" +
                                  g.level + " has " + std::to_string(g.size) + " subject(s), skipped");
    }

    std::sort(report.errors.begin(), report.errors.end());
    std::sort(report.skipped_groups.begin(), report.skipped_groups.end());
    std::sort(report.warnings.begin(), report.warnings.end());
    report.ok = report.errors.empty();
    return report;
}

// ----------------------------------------------------------------------------
// binarize_scores
// ----------------------------------------------------------------------------

std::vector<int> binarize_scores(std::span<const double> scores, const ClassificationLabelRule& rule) {
    std::vector<int> labels;
    labels.reserve(scores.size());
    for (double s : scores) {
        if (!std::isfinite(s)) throw InputError("binarize_scores: non-finite score");
        const bool positive = rule.direction == ClassificationLabelRule::Direction::geq_is_positive
                                  ? s >= rule.cutoff
                                  : s <= rule.cutoff;
        labels.push_back(positive ? 1 : 0);
    }
    return labels;
}

}  // namespace harmscope
