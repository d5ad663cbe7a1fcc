#include "harmscope/audit_regression.hpp"
#include "harmscope/error.hpp"
#include "harmscope/synth.hpp"

#include "fixtures.hpp"

#include <gtest/gtest.h>

using namespace harmscope;
using namespace harmscope::audit;

namespace {

synth::SynthData cohort_data(std::uint64_t seed, synth::FactorScope scope = synth::FactorScope::observation) {
    synth::SynthSpec spec;
    spec.kind = synth::SynthKind::lmm_cohort;
    spec.seed = seed;
    spec.n_subjects = 30;
    spec.obs_per_subject = 4;
    spec.levels = {"Cooler", "Warmer", "Neutral"};
    spec.effects = {0.0, 0.4, -0.2};
    spec.factor = "temp";
    spec.scope = scope;
    return synth::synthesize(spec);
}

}  // namespace

TEST(GroupStats, MseDecomposesIntoBiasAndSpread) {
    const auto data = cohort_data(1);
    const auto stats = group_error_stats(data.records, "temp", data.cohort);
    ASSERT_EQ(stats.rows.size(), 3u);
    EXPECT_EQ(stats.excluded_observations, 0u);
    std::size_t total = 0;
    for (const auto& row : stats.rows) {
        double sum = 0.0, sq_dev = 0.0;
        std::vector<double> res;
        for (const auto& r : data.records)
            if (r.context.at("temp") == row.level) res.push_back(r.truth - r.prediction);
        for (double v : res) sum += v;
        const double mean = sum / static_cast<double>(res.size());
        for (double v : res) sq_dev += (v - mean) * (v - mean);
        EXPECT_NEAR(row.mean_residual, mean, 1e-12);
        EXPECT_NEAR(row.mse, mean * mean + sq_dev / static_cast<double>(res.size()), 1e-12);
        EXPECT_EQ(row.n_observations, res.size());
        total += row.n_observations;
    }
    EXPECT_EQ(total, data.records.size());
}

TEST(GroupStats, PooledMseIsObservationWeighted) {
    const auto data = cohort_data(2);
    const auto stats = group_error_stats(data.records, "temp", data.cohort);
    double weighted = 0.0, direct = 0.0;
    std::size_t n = 0;
    for (const auto& row : stats.rows) {
        weighted += row.mse * static_cast<double>(row.n_observations);
        n += row.n_observations;
    }
    for (const auto& r : data.records) direct += (r.truth - r.prediction) * (r.truth - r.prediction);
    EXPECT_NEAR(weighted / static_cast<double>(n), direct / static_cast<double>(data.records.size()), 1e-12);
}

TEST(GroupStats, MissingLevelsAreCounted) {
    auto data = cohort_data(3);
    data.records[0].context.clear();
    data.records[5].context.clear();
    EXPECT_EQ(group_error_stats(data.records, "temp", data.cohort).excluded_observations, 2u);
}

TEST(Stars, Thresholds) {
    EXPECT_EQ(significance_stars(0.0005), "***");
    EXPECT_EQ(significance_stars(0.001), "**");
    EXPECT_EQ(significance_stars(0.009), "**");
    EXPECT_EQ(significance_stars(0.01), "*");
    EXPECT_EQ(significance_stars(0.049), "*");
    EXPECT_EQ(significance_stars(0.05), "");
}

TEST(Reference, Precedence) {
    CohortTable cohort({{"room", {"R1", "R40", "R7"}, "R40", AttributeKind::categorical},
                        {"sex", {"Male", "Female"}, "Male", AttributeKind::binary}},
                       {});
    AuditSpec spec;
    const std::set<std::string> rooms{"R1", "R40", "R7"};
    EXPECT_EQ(resolve_reference("room", rooms, cohort, spec), "R40");
    EXPECT_EQ(resolve_reference("sex", {"Female", "Male"}, cohort, spec), "Female");
    EXPECT_EQ(resolve_reference("context_only", {"b", "a"}, cohort, spec), "a");
    spec.reference_overrides["room"] = "R7";
    EXPECT_EQ(resolve_reference("room", rooms, cohort, spec), "R7");
    spec.reference_overrides["room"] = "R99";
    EXPECT_THROW(resolve_reference("room", rooms, cohort, spec), InputError);
}

TEST(RegressionAudit, FitsEveryBlock) {
    const auto data = cohort_data(4);
    AuditSpec spec;
    spec.reference_overrides["temp"] = "Cooler";
    const auto rep = run_regression_audit(data.records, {"temp"}, data.cohort, spec);
    ASSERT_EQ(rep.blocks.size(), 1u);
    const auto& block = rep.blocks.begin()->second;
    EXPECT_EQ(block.reference_level, "Cooler");
    ASSERT_TRUE(block.fit.has_value());
    EXPECT_NE(block.fit->find("T.Warmer"), nullptr);
    EXPECT_NE(block.fit->find("T.Neutral"), nullptr);
    EXPECT_EQ(block.stats.rows.size(), 3u);
}

TEST(RegressionAudit, FailingBlockDoesNotStopOthers) {
    auto data = cohort_data(5);
    auto extra = data.records;
    for (auto& r : extra) {
        r.dimension = "other";
        r.context["temp"] = "Cooler";  // single level -> DesignError for this block
    }
    data.records.insert(data.records.end(), extra.begin(), extra.end());
    const auto rep = run_regression_audit(data.records, {"temp"}, data.cohort, AuditSpec{});
    ASSERT_EQ(rep.blocks.size(), 2u);
    const auto& bad = rep.blocks.at({"synthetic", "DS1", "other", "temp"});
    EXPECT_TRUE(bad.error.has_value());
    EXPECT_FALSE(bad.fit.has_value());
    EXPECT_TRUE(rep.blocks.at({"synthetic", "DS1", "score", "temp"}).fit.has_value());
    EXPECT_FALSE(rep.warnings.empty());
}

TEST(RegressionAudit, SubjectLevelFactorFromCohort) {
    const auto data = cohort_data(6, synth::FactorScope::subject);
    const auto rep = run_regression_audit(data.records, {"temp"}, data.cohort, AuditSpec{});
    const auto& block = rep.blocks.begin()->second;
    EXPECT_EQ(block.reference_level, "Cooler");  // cohort designated reference
    ASSERT_TRUE(block.fit.has_value());
}

TEST(RegressionAudit, InputErrors) {
    const auto data = cohort_data(7);
    EXPECT_THROW(run_regression_audit(data.records, {}, data.cohort, AuditSpec{}), InputError);
    std::vector<PredictionRecord> cls{fixture::cls("a", 1, 1)};
    EXPECT_THROW(run_regression_audit(cls, {"temp"}, data.cohort, AuditSpec{}), AuditError);
}

TEST(RegressionAudit, Deterministic) {
    const auto data = cohort_data(8);
    const auto a = run_regression_audit(data.records, {"temp"}, data.cohort, AuditSpec{});
    const auto b = run_regression_audit(data.records, {"temp"}, data.cohort, AuditSpec{});
    const auto& fa = *a.blocks.begin()->second.fit;
    const auto& fb = *b.blocks.begin()->second.fit;
    EXPECT_EQ(fa.sigma_u_sq, fb.sigma_u_sq);
    for (std::size_t k = 0; k < fa.coefficients.size(); ++k)
        EXPECT_EQ(fa.coefficients[k].estimate, fb.coefficients[k].estimate);
}
