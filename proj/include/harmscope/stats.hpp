#pragma once

#include "harmscope/core.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace harmscope::stats {

/// Upper tail of the standard normal, 1 - Phi(z).
double normal_sf(double z);

/// 2 * Phi(-|z|), clipped to [0, 1].
double two_sided_normal_p(double z);

struct TestOutcome {
    double u_statistic = 0.0;  // U of the first sample: #(x > y) + 0.5 * #(x == y)
    double z_score = 0.0;
    double p_two_sided = 1.0;
    std::size_t n1 = 0;
    std::size_t n2 = 0;
    bool degenerate = false;  // every pooled value tied; z = 0, p = 1
};

/// Two-sided Mann-Whitney U test with midranks, tie-corrected variance and a
/// 0.5 continuity correction toward the mean (never past it). Normal
/// approximation at every sample size.
///
/// Throws InputError on an empty sample or a non-finite value.
TestOutcome mann_whitney_u(std::span<const double> x, std::span<const double> y);

struct CorrectedPValue {
    std::size_t rank = 0;    // 1-based position among ascending p-values
    double threshold = 0.0;  // (rank / m) * q
    bool significant = false;
};

struct CorrectionOutcome {
    CorrectionMode mode = CorrectionMode::paper_variant;
    std::vector<CorrectedPValue> entries;  // in input order
};

/// Multiple-comparison correction over one family of p-values.
///
/// paper_variant: significant iff p < (rank/m) * q and p < alpha_cap.
/// bh_step_up:    the k smallest p-values are significant, where k is the
///                largest rank with p_(k) <= (k/m) * q.
///
/// Equal p-values are ranked by input position.
CorrectionOutcome correct_pvalues(std::span<const double> pvals, double q,
                                  CorrectionMode mode = CorrectionMode::paper_variant,
                                  double alpha_cap = 0.05);

}  // namespace harmscope::stats
