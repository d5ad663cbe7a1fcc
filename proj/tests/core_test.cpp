#include "harmscope/core.hpp"
#include "harmscope/error.hpp"
#include "harmscope/parallel.hpp"

#include "fixtures.hpp"

#include <gtest/gtest.h>

#include <atomic>
#include <stdexcept>

using namespace harmscope;

TEST(Vocabulary, NamesRoundTrip) {
    for (Metric m : {Metric::acc, Metric::fnr, Metric::fpr, Metric::mse})
        EXPECT_EQ(parse_metric(to_string(m)), m);
    EXPECT_EQ(parse_metric("fnr_disparity"), Metric::fnr);
    for (auto mode : {CorrectionMode::paper_variant, CorrectionMode::bh_step_up})
        EXPECT_EQ(parse_correction_mode(to_string(mode)), mode);
    for (auto f : {CorrectionFamily::per_dataset_all_tests, CorrectionFamily::per_dataset_per_metric,
                   CorrectionFamily::none})
        EXPECT_EQ(parse_correction_family(to_string(f)), f);
    EXPECT_EQ(to_string(TaskKind::classification), "cls");
    EXPECT_EQ(to_string(TaskKind::regression), "reg");
    EXPECT_THROW(parse_metric("auc"), InputError);
    EXPECT_THROW(parse_correction_mode("bonferroni"), InputError);
}

TEST(CohortTableTest, EnforcesSchemaInvariants) {
    using K = AttributeKind;
    EXPECT_THROW(CohortTable({{"g", {"a"}, "a", K::binary}}, {}), InputError);
    EXPECT_THROW(CohortTable({{"g", {"a", "b", "c"}, "a", K::binary}}, {}), InputError);
    EXPECT_THROW(CohortTable({{"g", {"a"}, "a", K::categorical}}, {}), InputError);
    EXPECT_THROW(CohortTable({{"g", {"a", "b"}, "z", K::binary}}, {}), InputError);
    EXPECT_THROW(CohortTable({{"g", {"a", "a"}, "a", K::binary}}, {}), InputError);
    EXPECT_THROW(CohortTable({{"g", {"a", "b"}, "a", K::binary}, {"g", {"a", "b"}, "a", K::binary}}, {}),
                 InputError);
    EXPECT_THROW(CohortTable({{"g", {"a", "b"}, "a", K::binary}}, {{"s1", {{"g", "c"}}}}), InputError);
    EXPECT_THROW(CohortTable({{"g", {"a", "b"}, "a", K::binary}}, {{"s1", {{"h", "a"}}}}), InputError);
}

TEST(CohortTableTest, LookupAndBlankCells) {
    const auto cohort = fixture::binary_cohort("fg", {{"s1", "yes"}, {"s2", ""}});
    EXPECT_TRUE(cohort.has_subject("s1"));
    EXPECT_FALSE(cohort.has_subject("s3"));
    EXPECT_EQ(cohort.level_of("s1", "fg"), "yes");
    EXPECT_EQ(cohort.level_of("s2", "fg"), std::nullopt);
    EXPECT_EQ(cohort.level_of("s3", "fg"), std::nullopt);
    ASSERT_NE(cohort.find_attribute("fg"), nullptr);
    EXPECT_EQ(cohort.find_attribute("other"), nullptr);
}

TEST(FactorLevel, ContextWinsOverCohort) {
    const auto cohort = fixture::binary_cohort("fg", {{"s1", "yes"}});
    auto r = fixture::cls("s1", 1, 1);
    EXPECT_EQ(factor_level(r, "fg", cohort), "yes");
    r.context["fg"] = "no";
    EXPECT_EQ(factor_level(r, "fg", cohort), "no");
    r.context["room"] = "R40";
    EXPECT_EQ(factor_level(r, "room", cohort), "R40");
    EXPECT_EQ(factor_level(r, "missing", cohort), std::nullopt);
}

TEST(AuditSpecTest, Domains) {
    AuditSpec spec;
    EXPECT_NO_THROW(spec.validate());
    spec.fdr_q = 1.0;
    EXPECT_THROW(spec.validate(), InputError);
    spec = {};
    spec.alpha_cap = 0.0;
    EXPECT_THROW(spec.validate(), InputError);
    spec = {};
    spec.min_group_size = 0;
    EXPECT_THROW(spec.validate(), InputError);
    spec = {};
    spec.metrics.clear();
    EXPECT_THROW(spec.validate(), InputError);
    spec = {};
    spec.truth_min = 6;
    EXPECT_THROW(spec.validate(), InputError);
}

TEST(ValidateInputs, EmptyInput) {
    const auto v = validate_inputs({}, CohortTable{}, AuditSpec{});
    EXPECT_FALSE(v.ok);
    EXPECT_EQ(v.errors, std::vector<std::string>{"no observations"});
}

TEST(ValidateInputs, MissingSubjectIsHardError) {
    const auto cohort = fixture::binary_cohort("fg", {{"a", "yes"}, {"b", "yes"}, {"c", "no"}, {"d", "no"}});
    std::vector<PredictionRecord> recs{fixture::cls("a", 1, 1), fixture::cls("b", 0, 1), fixture::cls("c", 1, 0),
                                       fixture::cls("d", 0, 0), fixture::cls("zz", 1, 1)};
    const auto v = validate_inputs(recs, cohort, AuditSpec{});
    EXPECT_FALSE(v.ok);
    EXPECT_EQ(v.missing_subjects, std::vector<std::string>{"zz"});
}

TEST(ValidateInputs, ValueRangesAndDuplicates) {
    const auto cohort = fixture::binary_cohort("fg", {{"a", "yes"}, {"b", "no"}});
    std::vector<PredictionRecord> recs{fixture::cls("a", 2, 1), fixture::cls("b", 1, 1), fixture::cls("b", 1, 0),
                                       fixture::reg("a", 7.0, 1.0)};
    const auto v = validate_inputs(recs, cohort, AuditSpec{});
    EXPECT_FALSE(v.ok);
    ASSERT_EQ(v.errors.size(), 3u);
    auto has = [&](std::string_view s) {
        return std::any_of(v.errors.begin(), v.errors.end(),
                           [&](const std::string& e) { return e.find(s) != std::string::npos; });
    };
    EXPECT_TRUE(has("0 or 1"));
    EXPECT_TRUE(has("duplicate"));
    EXPECT_TRUE(has("outside [1, 5]"));

    std::vector<PredictionRecord> nonfinite{fixture::reg("a", 3.0, std::nan(""))};
    EXPECT_FALSE(validate_inputs(nonfinite, cohort, AuditSpec{}).ok);
}

TEST(ValidateInputs, SmallGroupsBecomeWarnings) {
    const auto cohort = fixture::binary_cohort("fg", {{"a", "yes"}, {"b", "no"}, {"c", "no"}, {"d", ""}});
    std::vector<PredictionRecord> recs{fixture::cls("a", 1, 1), fixture::cls("b", 0, 0), fixture::cls("c", 1, 0),
                                       fixture::cls("d", 1, 0)};
    const auto v = validate_inputs(recs, cohort, AuditSpec{});
    EXPECT_TRUE(v.ok);
    ASSERT_EQ(v.skipped_groups.size(), 1u);
    EXPECT_EQ(v.skipped_groups[0].level, "yes");
    EXPECT_EQ(v.skipped_groups[0].size, 1u);
    EXPECT_EQ(v.warnings.size(), 2u);  // the skip and the blank subject
    EXPECT_TRUE(std::is_sorted(v.warnings.begin(), v.warnings.end()));
}

TEST(Binarize, CutoffDirection) {
    const std::vector<double> scores{0, 12.9, 13, 40};
    EXPECT_EQ(binarize_scores(scores), (std::vector<int>{0, 0, 1, 1}));
    ClassificationLabelRule leq{5.0, ClassificationLabelRule::Direction::leq_is_positive};
    EXPECT_EQ(binarize_scores(scores, leq), (std::vector<int>{1, 0, 0, 0}));
    const std::vector<double> bad{1.0, std::numeric_limits<double>::infinity()};
    EXPECT_THROW(binarize_scores(bad), InputError);
}

TEST(ParallelFor, EachIndexOnceAndLowestErrorWins) {
    std::vector<std::atomic<int>> hits(1000);
    parallel_for(hits.size(), [&](std::size_t i) { ++hits[i]; }, 8);
    for (const auto& h : hits) ASSERT_EQ(h.load(), 1);

    for (int rep = 0; rep < 20; ++rep) {
        try {
            parallel_for(
                200,
                [](std::size_t i) {
                    if (i % 50 == 7) throw std::runtime_error(std::to_string(i));
                },
                8);
            FAIL() << "expected a throw";
        } catch (const std::runtime_error& e) {
            ASSERT_STREQ(e.what(), "7");
        }
    }
}
