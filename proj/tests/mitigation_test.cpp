#include "harmscope/error.hpp"
#include "harmscope/mitigation.hpp"

#include "xu_flags.hpp"

#include <gtest/gtest.h>

using namespace harmscope;
using harmscope::mitigation::DeltaMatrix;
using harmscope::mitigation::significance_delta;

namespace {

const std::string kFirstGen = "First-gen College Student";

int cell(const DeltaMatrix& d, const std::string& evaluated, Metric m) {
    return d.cells.at({xu::kModel, kFirstGen, evaluated, m});
}

}  // namespace

TEST(Delta, AddingFirstGenToXuInterpretable) {
    const auto d = significance_delta(xu::before(), xu::after(), kFirstGen);
    EXPECT_EQ(d.dataset_count, 4u);
    EXPECT_EQ(d.cells.size(), 15u);
    EXPECT_EQ(cell(d, kFirstGen, Metric::fnr), -1);
    EXPECT_EQ(cell(d, "Gender", Metric::acc), 1);
    EXPECT_EQ(cell(d, "Gender", Metric::fpr), 1);
    int nonzero = 0;
    for (const auto& [_, v] : d.cells) nonzero += v != 0;
    EXPECT_EQ(nonzero, 3);
    // The rest of the first-gen row is unchanged.
    EXPECT_EQ(cell(d, kFirstGen, Metric::acc), 0);
    EXPECT_EQ(cell(d, kFirstGen, Metric::fpr), 0);
}

TEST(Delta, SelfComparisonIsZero) {
    const auto g = xu::after();
    for (const auto& [_, v] : significance_delta(g, g, kFirstGen).cells) EXPECT_EQ(v, 0);
}

TEST(Delta, AntisymmetricAndAdditive) {
    std::mt19937_64 rng(17);
    for (int rep = 0; rep < 200; ++rep) {
        const auto a = xu::random_grid(rng);
        const auto b = xu::random_grid(rng);
        const auto c = xu::random_grid(rng);
        const auto ab = significance_delta(a, b, "x");
        const auto ba = significance_delta(b, a, "x");
        const auto bc = significance_delta(b, c, "x");
        const auto ac = significance_delta(a, c, "x");
        for (const auto& [key, v] : ab.cells) {
            ASSERT_EQ(v, -ba.cells.at(key));
            ASSERT_EQ(v + bc.cells.at(key), ac.cells.at(key));
            ASSERT_LE(std::abs(v), 4);
        }
    }
}

TEST(Delta, KeyMismatchIsReported) {
    auto before = xu::before();
    auto after = xu::after();
    after.cells.erase(after.cells.begin());
    try {
        significance_delta(before, after, kFirstGen);
        FAIL() << "expected ComparisonError";
    } catch (const ComparisonError& e) {
        EXPECT_NE(std::string(e.what()).find("only in before"), std::string::npos);
    }
}

TEST(Delta, SkippedCellsMustMatch) {
    auto before = xu::before();
    auto after = xu::before();
    before.cells.begin()->second.skipped_reason = "small";
    EXPECT_THROW(significance_delta(before, after, kFirstGen), ComparisonError);
    after.cells.begin()->second.skipped_reason = "small";
    after.cells.begin()->second.significant = true;
    const auto d = significance_delta(before, after, kFirstGen);
    for (const auto& [_, v] : d.cells) EXPECT_EQ(v, 0);
}
