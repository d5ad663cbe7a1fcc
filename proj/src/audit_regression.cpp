#include "harmscope/audit_regression.hpp"

#include "harmscope/error.hpp"
#include "harmscope/parallel.hpp"

#include <algorithm>
#include <tuple>

namespace harmscope::audit {

GroupErrorStats group_error_stats(std::span<const PredictionRecord> records, std::string_view factor,
                                  const CohortTable& cohort) {
    struct Acc {
        std::set<std::string> subjects;
        std::size_t n = 0;
        double sum_sq = 0.0;
        double sum = 0.0;
    };
    std::map<std::string, Acc> by_level;
    GroupErrorStats out;
    out.factor = std::string(factor);
    for (const auto& r : records) {
        auto level = factor_level(r, factor, cohort);
        if (!level) {
            ++out.excluded_observations;
            continue;
        }
        const double residual = r.truth - r.prediction;
        auto& acc = by_level[*level];
        acc.subjects.insert(r.subject_id);
        ++acc.n;
        acc.sum += residual;
        acc.sum_sq += residual * residual;
    }
    for (const auto& [level, acc] : by_level) {
        const double n = static_cast<double>(acc.n);
        out.rows.push_back({level, acc.subjects.size(), acc.n, acc.sum_sq / n, acc.sum / n});
    }
    return out;
}

std::string significance_stars(double p) {
    if (p < 0.001) return "***";
    if (p < 0.01) return "**";
    if (p < 0.05) return "*";
    return "";
}

std::string resolve_reference(std::string_view factor, const std::set<std::string>& observed,
                              const CohortTable& cohort, const AuditSpec& spec) {
    if (observed.empty()) throw InputError("factor " + std::string(factor) + " has no observed levels");
    if (auto it = spec.reference_overrides.find(std::string(factor)); it != spec.reference_overrides.end()) {
        if (!observed.contains(it->second))
            throw InputError("reference override '" + it->second + "' for " + std::string(factor) +
                             " is not an observed level");
        return it->second;
    }
    if (const auto* attr = cohort.find_attribute(factor);
        attr != nullptr && attr->kind == AttributeKind::categorical && observed.contains(attr->designated))
        return attr->designated;
    return *observed.begin();
}

RegressionAuditReport run_regression_audit(std::span<const PredictionRecord> records,
                                           const std::vector<std::string>& factors,
                                           const CohortTable& cohort, const AuditSpec& spec,
                                           const lmm::FitOptions& fit_options) {
    spec.validate();
    if (factors.empty()) throw InputError("no factors given for the regression audit");

    std::map<std::tuple<std::string, std::string, std::string>, std::vector<PredictionRecord>> slices;
    for (const auto& r : records)
        if (r.task == TaskKind::regression) slices[{r.model_id, r.dataset_id, r.dimension}].push_back(r);
    if (slices.empty()) throw AuditError("no regression records to audit");

    std::vector<RegressionBlockKey> keys;
    std::vector<const std::vector<PredictionRecord>*> inputs;
    for (const auto& [slice, recs] : slices) {
        for (const auto& factor : factors) {
            keys.push_back({std::get<0>(slice), std::get<1>(slice), std::get<2>(slice), factor});
            inputs.push_back(&recs);
        }
    }

    std::vector<RegressionBlock> blocks(keys.size());
    std::vector<std::vector<std::string>> block_warnings(keys.size());
    parallel_for(keys.size(), [&](std::size_t i) {
        const auto& key = keys[i];
        const auto& recs = *inputs[i];
        auto& block = blocks[i];
        const std::string label = key.model_id + "/" + key.dataset_id + "/" + key.dimension + "/" + key.factor;

        block.stats = group_error_stats(recs, key.factor, cohort);
        if (block.stats.excluded_observations > 0)
            block_warnings[i].push_back(label + ": " + std::to_string(block.stats.excluded_observations) +
                                        " observation(s) without a level, excluded");

        std::vector<PredictionRecord> usable;
        std::set<std::string> observed;
        for (const auto& r : recs) {
            if (auto level = factor_level(r, key.factor, cohort)) {
                usable.push_back(r);
                observed.insert(*level);
            }
        }
        try {
            if (observed.size() < 2)
                throw DesignError("factor " + key.factor + " has fewer than 2 observed levels");
            block.reference_level = resolve_reference(key.factor, observed, cohort, spec);
            const auto design = lmm::build_design(usable, key.factor, cohort, block.reference_level);
            block.fit = lmm::fit_reml(design, fit_options);
            if (block.fit->boundary == lmm::Boundary::lower)
                block_warnings[i].push_back(label + ": between-subject variance estimated at 0");
            if (block.fit->degenerate)
                block_warnings[i].push_back(label + ": degenerate fit, no within-subject variation");
        } catch (const Error& e) {
            block.error = e.what();
            block_warnings[i].push_back(label + ": " + e.what());
        }
    });

    RegressionAuditReport report;
    for (std::size_t i = 0; i < keys.size(); ++i) {
        report.blocks.emplace(keys[i], std::move(blocks[i]));
        for (auto& w : block_warnings[i]) report.warnings.push_back(std::move(w));
    }
    std::sort(report.warnings.begin(), report.warnings.end());
    return report;
}

}  // namespace harmscope::audit
