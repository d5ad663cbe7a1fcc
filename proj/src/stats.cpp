#include "harmscope/stats.hpp"

#include "harmscope/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace harmscope::stats {

double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

double two_sided_normal_p(double z) {
    const double p = std::erfc(std::abs(z) / std::sqrt(2.0));
    return std::clamp(p, 0.0, 1.0);
}

TestOutcome mann_whitney_u(std::span<const double> x, std::span<const double> y) {
    if (x.empty() || y.empty()) throw InputError("mann_whitney_u: empty sample");
    auto finite = [](double v) { return std::isfinite(v); };
    if (!std::all_of(x.begin(), x.end(), finite) || !std::all_of(y.begin(), y.end(), finite))
        throw InputError("mann_whitney_u: non-finite value");

    const std::size_t n1 = x.size();
    const std::size_t n2 = y.size();
    const std::size_t n = n1 + n2;

    // Pool with a membership flag, sort, and assign midranks per tie run.
    std::vector<std::pair<double, bool>> pooled;
    pooled.reserve(n);
    for (double v : x) pooled.emplace_back(v, true);
    for (double v : y) pooled.emplace_back(v, false);
    std::sort(pooled.begin(), pooled.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    double rank_sum_x = 0.0;
    double tie_term = 0.0;  // sum over tie groups of t^3 - t
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && pooled[j].first == pooled[i].first) ++j;
        const double t = static_cast<double>(j - i);
        const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
        for (std::size_t k = i; k < j; ++k)
            if (pooled[k].second) rank_sum_x += midrank;
        tie_term += t * t * t - t;
        i = j;
    }

    const double dn1 = static_cast<double>(n1);
    const double dn2 = static_cast<double>(n2);
    const double dn = static_cast<double>(n);

    TestOutcome out;
    out.n1 = n1;
    out.n2 = n2;
    out.u_statistic = rank_sum_x - dn1 * (dn1 + 1.0) / 2.0;

    const double mean = dn1 * dn2 / 2.0;
    const double variance = (dn1 * dn2 / 12.0) * ((dn + 1.0) - tie_term / (dn * (dn - 1.0)));
    if (!(variance > 0.0)) {
        out.degenerate = true;
        out.z_score = 0.0;
        out.p_two_sided = 1.0;
        return out;
    }

    const double diff = out.u_statistic - mean;
    const double corrected = std::max(std::abs(diff) - 0.5, 0.0);
    out.z_score = std::copysign(corrected, diff) / std::sqrt(variance);
    if (corrected == 0.0) out.z_score = 0.0;  // drop the sign of zero
    out.p_two_sided = two_sided_normal_p(out.z_score);
    return out;
}

CorrectionOutcome correct_pvalues(std::span<const double> pvals, double q, CorrectionMode mode,
                                  double alpha_cap) {
    if (!(q > 0.0 && q < 1.0)) throw InputError("correct_pvalues: q must lie in (0, 1)");
    for (double p : pvals)
        if (!(p >= 0.0 && p <= 1.0)) throw InputError("correct_pvalues: p-value outside [0, 1]");

    const std::size_t m = pvals.size();
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return pvals[a] < pvals[b]; });

    CorrectionOutcome out;
    out.mode = mode;
    out.entries.resize(m);
    const double dm = static_cast<double>(m);
    for (std::size_t r = 0; r < m; ++r) {
        auto& e = out.entries[order[r]];
        e.rank = r + 1;
        e.threshold = static_cast<double>(r + 1) / dm * q;
    }

    if (mode == CorrectionMode::paper_variant) {
        for (std::size_t i = 0; i < m; ++i) {
            auto& e = out.entries[i];
            e.significant = pvals[i] < e.threshold && pvals[i] < alpha_cap;
        }
    } else {
        std::size_t cutoff = 0;  // number of significant tests
        for (std::size_t r = m; r > 0; --r) {
            if (pvals[order[r - 1]] <= out.entries[order[r - 1]].threshold) {
                cutoff = r;
                break;
            }
        }
        for (std::size_t r = 0; r < cutoff; ++r) out.entries[order[r]].significant = true;
    }
    return out;
}

}  // namespace harmscope::stats
