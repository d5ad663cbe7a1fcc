#include "harmscope/audit_classification.hpp"

#include "harmscope/error.hpp"
#include "harmscope/parallel.hpp"
#include "harmscope/stats.hpp"

#include <algorithm>
#include <set>
#include <tuple>

namespace harmscope::audit {

std::vector<double> CorrectnessVector::values(bool protected_group) const {
    std::vector<double> out;
    for (const auto& e : entries)
        if (e.protected_group == protected_group) out.push_back(static_cast<double>(e.value));
    return out;
}

std::size_t CorrectnessVector::count(bool protected_group, int value) const {
    return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [&](const auto& e) {
        return e.protected_group == protected_group && e.value == value;
    }));
}

CorrectnessVector correctness_vector(std::span<const PredictionRecord> records,
                                     const std::string& attribute, const CohortTable& cohort) {
    const AttributeSchema* schema = cohort.find_attribute(attribute);
    if (schema == nullptr || schema->kind != AttributeKind::binary)
        throw InputError("correctness_vector: " + attribute + " is not a binary cohort attribute");

    struct Tally {
        int correct = 0;
        int positive = 0;
        int total = 0;
    };
    std::map<std::string, Tally> tallies;
    for (const auto& r : records) {
        if (r.task != TaskKind::classification)
            throw InputError("correctness_vector: regression record for subject " + r.subject_id);
        auto& t = tallies[r.subject_id];
        t.correct += r.prediction == r.truth ? 1 : 0;
        t.positive += r.truth == 1.0 ? 1 : 0;
        ++t.total;
    }

    CorrectnessVector v;
    v.attribute = attribute;
    for (const auto& [subject, t] : tallies) {
        auto level = cohort.level_of(subject, attribute);
        if (!level) {
            v.excluded.push_back(subject);
            continue;
        }
        CorrectnessEntry e;
        e.subject_id = subject;
        e.value = 2 * t.correct > t.total ? 1 : 0;
        e.truth = 2 * t.positive >= t.total ? 1 : 0;
        e.protected_group = *level == schema->designated;
        v.entries.push_back(std::move(e));
    }
    return v;
}

CorrectnessVector subset_for_metric(const CorrectnessVector& v, Metric metric) {
    if (metric == Metric::acc) return v;
    if (metric == Metric::mse) throw InputError("mse is not a classification metric");
    CorrectnessVector out;
    out.attribute = v.attribute;
    out.excluded = v.excluded;
    const int keep = metric == Metric::fnr ? 1 : 0;
    for (const auto& e : v.entries)
        if (e.truth == keep) out.entries.push_back(e);
    return out;
}

namespace {

using Slice = std::pair<std::string, std::string>;  // (model, dataset)

std::vector<std::pair<CellKey, GridCell>> test_slice(const Slice& slice,
                                                     std::span<const PredictionRecord> records,
                                                     const CohortTable& cohort, const AuditSpec& spec,
                                                     std::vector<std::string>& warnings) {
    std::vector<std::pair<CellKey, GridCell>> cells;
    const auto min_size = static_cast<std::size_t>(spec.min_group_size);
    for (const auto& attr : cohort.schema()) {
        if (attr.kind != AttributeKind::binary) continue;
        const auto full = correctness_vector(records, attr.name, cohort);
        for (const auto& subject : full.excluded)
            warnings.push_back(slice.first + "/" + slice.second + ": subject " + subject +
                               " has no level for " + attr.name + ", excluded");
        for (Metric metric : spec.metrics) {
            const auto sub = subset_for_metric(full, metric);
            const auto prot = sub.values(true);
            const auto unprot = sub.values(false);
            GridCell cell;
            cell.n_protected = prot.size();
            cell.n_unprotected = unprot.size();
            if (prot.size() < min_size || unprot.size() < min_size) {
                cell.skipped_reason = "group below min_group_size (protected " +
                                      std::to_string(prot.size()) + ", unprotected " +
                                      std::to_string(unprot.size()) + ")";
            } else {
                const auto test = stats::mann_whitney_u(prot, unprot);
                cell.raw_p = test.p_two_sided;
                cell.u_statistic = test.u_statistic;
                cell.z_score = test.z_score;
            }
            cells.emplace_back(CellKey{slice.first, slice.second, attr.name, metric}, std::move(cell));
        }
    }
    return cells;
}

void apply_correction(std::vector<GridCell*>& family, const AuditSpec& spec) {
    if (family.empty()) return;
    if (spec.correction_family == CorrectionFamily::none) {
        for (auto* cell : family) {
            cell->rank = 1;
            cell->family_size = 1;
            cell->threshold = spec.alpha_cap;
            cell->significant = cell->raw_p < spec.alpha_cap;
        }
        return;
    }
    std::vector<double> pvals;
    for (const auto* cell : family) pvals.push_back(cell->raw_p);
    const auto outcome = stats::correct_pvalues(pvals, spec.fdr_q, spec.correction_mode, spec.alpha_cap);
    for (std::size_t i = 0; i < family.size(); ++i) {
        family[i]->rank = outcome.entries[i].rank;
        family[i]->family_size = family.size();
        family[i]->threshold = outcome.entries[i].threshold;
        family[i]->significant = outcome.entries[i].significant;
    }
}

}  // namespace

SignificanceGrid run_classification_audit(std::span<const PredictionRecord> records,
                                          const CohortTable& cohort, const AuditSpec& spec) {
    spec.validate();
    for (Metric m : spec.metrics)
        if (m == Metric::mse) throw InputError("mse_disparity is a regression metric");

    std::map<Slice, std::vector<PredictionRecord>> slices;
    for (const auto& r : records) {
        if (r.task != TaskKind::classification) continue;
        slices[{r.model_id, r.dataset_id}].push_back(r);
    }

    std::vector<Slice> keys;
    for (const auto& [k, _] : slices) keys.push_back(k);
    std::vector<std::vector<std::pair<CellKey, GridCell>>> results(keys.size());
    std::vector<std::vector<std::string>> slice_warnings(keys.size());
    parallel_for(keys.size(), [&](std::size_t i) {
        results[i] = test_slice(keys[i], slices.at(keys[i]), cohort, spec, slice_warnings[i]);
    });

    SignificanceGrid grid;
    grid.correction_mode = spec.correction_mode;
    grid.correction_family = spec.correction_family;
    grid.fdr_q = spec.fdr_q;
    grid.alpha_cap = spec.alpha_cap;
    for (std::size_t i = 0; i < keys.size(); ++i) {
        for (auto& [key, cell] : results[i]) grid.cells.emplace(key, std::move(cell));
        for (auto& w : slice_warnings[i]) grid.warnings.push_back(std::move(w));
    }

    // Families are visited in key order, so ranks are independent of scheduling.
    std::map<std::tuple<std::string, std::string, int>, std::vector<GridCell*>> families;
    std::size_t testable = 0;
    for (auto& [key, cell] : grid.cells) {
        if (cell.skipped()) {
            grid.warnings.push_back(key.model_id + "/" + key.dataset_id + "/" + key.attribute + "/" +
                                    std::string(to_string(key.metric)) + ": skipped, " +
                                    *cell.skipped_reason);
            continue;
        }
        ++testable;
        int bucket = 0;
        if (spec.correction_family == CorrectionFamily::per_dataset_per_metric)
            bucket = static_cast<int>(key.metric);
        families[{key.model_id, key.dataset_id, bucket}].push_back(&cell);
    }
    if (testable == 0) throw AuditError("no testable cells: every group is empty or below min_group_size");

    for (auto& [_, family] : families) apply_correction(family, spec);
    std::sort(grid.warnings.begin(), grid.warnings.end());
    return grid;
}

double balanced_accuracy(std::span<const PredictionRecord> records) {
    std::size_t pos = 0, neg = 0, tp = 0, tn = 0;
    for (const auto& r : records) {
        if (r.task != TaskKind::classification)
            throw InputError("balanced_accuracy: regression record for subject " + r.subject_id);
        if (r.truth == 1.0) {
            ++pos;
            tp += r.prediction == 1.0 ? 1 : 0;
        } else {
            ++neg;
            tn += r.prediction == 0.0 ? 1 : 0;
        }
    }
    if (pos == 0 || neg == 0)
        throw InputError("balanced_accuracy undefined: only one ground-truth class present");
    return 0.5 * (static_cast<double>(tp) / static_cast<double>(pos) +
                  static_cast<double>(tn) / static_cast<double>(neg));
}

}  // namespace harmscope::audit
