#include "harmscope/error.hpp"
#include "harmscope/io.hpp"
#include "harmscope/synth.hpp"

#include "fixtures.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace harmscope;
using namespace harmscope::synth;

TEST(Rng, ReferenceValues) {
    // splitmix64 seeded with 0: the first outputs of the reference generator.
    CounterRng rng(0);
    EXPECT_EQ(rng.next_u64(), 0xE220A8397B1DCDAFULL);
    EXPECT_EQ(rng.next_u64(), 0x6E789E6AA1B965F4ULL);
    EXPECT_EQ(rng.next_u64(), 0x06C45D188009454FULL);
    EXPECT_EQ(rng.counter(), 3u);
}

TEST(Rng, RangesAndMoments) {
    CounterRng rng(42);
    double sum = 0.0, sum_sq = 0.0;
    std::set<std::int64_t> seen;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        const auto k = rng.uniform_int(1, 5);
        ASSERT_GE(k, 1);
        ASSERT_LE(k, 5);
        seen.insert(k);
        const double z = rng.normal();
        sum += z;
        sum_sq += z * z;
    }
    EXPECT_EQ(seen.size(), 5u);
    EXPECT_NEAR(sum / n, 0.0, 0.01);
    EXPECT_NEAR(sum_sq / n, 1.0, 0.02);
}

TEST(Appendix, TwentySubjectsSixProtected) {
    const auto data = synthesize(SynthSpec{});
    EXPECT_EQ(data.records.size(), 20u);
    EXPECT_EQ(data.cohort.entries().size(), 20u);
    std::size_t prot = 0;
    for (const auto& [s, row] : data.cohort.entries()) prot += row.at("first_gen") == "protected";
    EXPECT_EQ(prot, 6u);
    const auto v = validate_inputs(data.records, data.cohort, AuditSpec{});
    EXPECT_TRUE(v.ok);
    EXPECT_TRUE(v.warnings.empty());
}

TEST(Appendix, SeedOnlyChangesRowOrder) {
    SynthSpec a, b;
    b.seed = 12345;
    const auto da = synthesize(a);
    const auto db = synthesize(b);
    auto key = [](const PredictionRecord& r) { return std::tuple(r.subject_id, r.truth, r.prediction); };
    std::multiset<std::tuple<std::string, double, double>> sa, sb;
    for (const auto& r : da.records) sa.insert(key(r));
    for (const auto& r : db.records) sb.insert(key(r));
    EXPECT_EQ(sa, sb);
    EXPECT_NE(io::format_predictions(da.records), io::format_predictions(db.records));
}

TEST(Generate, IdenticalSpecsGiveIdenticalBytes) {
    SynthSpec spec;
    spec.kind = SynthKind::lmm_cohort;
    spec.seed = 77;
    const auto d1 = fixture::temp_dir("synth1");
    const auto d2 = fixture::temp_dir("synth2");
    const auto f1 = generate(spec, d1);
    const auto f2 = generate(spec, d2);
    EXPECT_EQ(io::read_file(f1.predictions), io::read_file(f2.predictions));
    EXPECT_EQ(io::read_file(f1.cohort), io::read_file(f2.cohort));
    EXPECT_EQ(f1.predictions.filename(), "preds.csv");
    EXPECT_EQ(f1.cohort.filename(), "cohort.csv");
}

TEST(Generate, UnwritableDirectory) {
    const auto dir = fixture::temp_dir("synth_blocked");
    io::write_file(dir / "file", "x");
    EXPECT_THROW(generate(SynthSpec{}, dir / "file" / "sub"), IoError);
}

TEST(LmmCohort, ZeroBetweenVarianceGivesSigmaESqOverK) {
    SynthSpec spec;
    spec.kind = SynthKind::lmm_cohort;
    spec.n_subjects = 500;
    spec.obs_per_subject = 4;
    spec.sigma_u_sq = 0.0;
    spec.sigma_e_sq = 2.0;
    spec.effects = {0.0, 0.0};
    spec.seed = 3;
    const auto data = synthesize(spec);
    std::map<std::string, std::pair<double, int>> sums;
    for (const auto& r : data.records) {
        auto& [s, n] = sums[r.subject_id];
        s += r.truth - r.prediction;
        ++n;
    }
    std::vector<double> means;
    for (const auto& [_, sn] : sums) means.push_back(sn.first / sn.second);
    double mean = 0.0;
    for (double m : means) mean += m;
    mean /= static_cast<double>(means.size());
    double var = 0.0;
    for (double m : means) var += (m - mean) * (m - mean);
    var /= static_cast<double>(means.size() - 1);
    EXPECT_NEAR(var, 2.0 / 4.0, 0.1);
}

TEST(LmmCohort, TruthInRangeAndFactorPlacement) {
    SynthSpec spec;
    spec.kind = SynthKind::lmm_cohort;
    spec.levels = {"a", "b", "c"};
    spec.effects = {0, 1, 2};
    const auto subj = synthesize(spec);
    for (const auto& r : subj.records) {
        ASSERT_GE(r.truth, 1.0);
        ASSERT_LE(r.truth, 5.0);
        ASSERT_TRUE(r.context.empty());
    }
    EXPECT_EQ(subj.cohort.schema().at(0).kind, AttributeKind::categorical);
    EXPECT_EQ(subj.cohort.level_of("s01", "group"), "a");
    EXPECT_EQ(subj.cohort.level_of("s02", "group"), "b");

    spec.scope = FactorScope::observation;
    const auto obs = synthesize(spec);
    EXPECT_TRUE(obs.cohort.schema().empty());
    for (const auto& r : obs.records) ASSERT_TRUE(r.context.contains("group"));
}

TEST(LmmCohort, InvalidSpecs) {
    SynthSpec spec;
    spec.kind = SynthKind::lmm_cohort;
    spec.effects = {0.0};
    EXPECT_THROW(synthesize(spec), InputError);
    spec.effects = {0.0, 1.0};
    spec.sigma_u_sq = -1;
    EXPECT_THROW(synthesize(spec), InputError);
    spec.sigma_u_sq = 1;
    spec.n_subjects = 0;
    EXPECT_THROW(synthesize(spec), InputError);
}
