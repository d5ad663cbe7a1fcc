#pragma once

#include "harmscope/core.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace harmscope::lmm {

/// Random-intercept design for one categorical factor:
///   response = Intercept + sum_k beta_k * [level == k] + u_subject + noise
/// with one dummy per non-reference level.
struct LMMDesign {
    std::string factor;
    std::vector<double> response;
    std::vector<std::string> factor_levels;
    std::vector<std::string> subject_ids;
    std::string reference_level;

    /// Non-reference levels in lexicographic order (one dummy each).
    std::vector<std::string> dummy_levels() const;
    /// "Intercept" followed by "T.<level>" per dummy.
    std::vector<std::string> terms() const;

    /// Throws InputError / DesignError when the invariants do not hold.
    void validate() const;
};

/// Residual design for `factor`: response_i = truth_i - prediction_i. Levels
/// come from the record context first, then from the cohort.
///
/// Throws InputError for classification records, a missing level, or a
/// reference level that never occurs; DesignError when fewer than two levels
/// are observed.
LMMDesign build_design(std::span<const PredictionRecord> records, std::string_view factor,
                       const CohortTable& cohort, std::string_view reference_level);

enum class Criterion { reml, ml };

struct FitOptions {
    double lambda_lower = 1e-10;
    double lambda_upper = 1e10;
    double tol = 1e-8;  // bracket width in log(lambda)
    int max_iter = 200;
    Criterion criterion = Criterion::reml;
    std::optional<double> fixed_lambda;  // skip optimization and use this ratio
};

struct Coefficient {
    std::string term;
    double estimate = 0.0;
    double std_error = 0.0;
    double z = 0.0;
    double p_two_sided = 1.0;
};

enum class Boundary { none, lower, upper };

struct LMMFit {
    std::vector<Coefficient> coefficients;
    double sigma_u_sq = 0.0;  // between-subject variance ("Group Var")
    double sigma_e_sq = 0.0;  // residual variance
    double lambda = 0.0;      // sigma_u_sq / sigma_e_sq
    double log_likelihood = 0.0;  // REML or ML log-likelihood at the optimum
    Criterion criterion = Criterion::reml;
    bool converged = false;
    Boundary boundary = Boundary::none;
    bool degenerate = false;  // optimum at the upper bound: no within-subject variation left
    std::size_t n_obs = 0;
    std::size_t n_subjects = 0;
    int iterations = 0;

    const Coefficient* find(std::string_view term) const;
};

/// The profiled objective, -2 * log-likelihood with beta and sigma_e^2
/// concentrated out, as a function of lambda = sigma_u^2 / sigma_e^2.
///
/// Per-subject sums are precomputed once, so an evaluation costs
/// O(n_obs * p + n_subjects * p^2). Cross-products are split into
/// within-subject and subject-mean parts, which keeps large-lambda
/// evaluations free of cancellation.
class ProfiledObjective {
public:
    ProfiledObjective(const LMMDesign& design, Criterion criterion);

    struct Evaluation {
        double objective = 0.0;
        double slope = 0.0;  // d objective / d log(lambda)
        double scale = 0.0;  // concentrated sigma_e^2
        Eigen::VectorXd beta;
        Eigen::MatrixXd a_inverse;  // (X' H^-1 X)^-1, H = I + lambda Z Z'
    };

    Evaluation evaluate(double lambda) const;
    double objective(double lambda) const { return evaluate(lambda).objective; }

    std::size_t n_obs() const noexcept { return n_obs_; }
    std::size_t n_subjects() const noexcept { return counts_.size(); }
    std::size_t n_params() const noexcept { return static_cast<std::size_t>(x_.cols()); }
    Criterion criterion() const noexcept { return criterion_; }

private:
    Criterion criterion_;
    std::size_t n_obs_ = 0;
    Eigen::MatrixXd x_;
    Eigen::VectorXd y_;
    std::vector<std::size_t> subject_of_;  // observation -> subject index
    std::vector<double> counts_;           // n_i
    Eigen::MatrixXd subject_x_sums_;       // row i = s_i' = 1' X_i
    Eigen::VectorXd subject_y_sums_;       // t_i
    Eigen::MatrixXd within_xx_;            // sum_i (X_i - mean)'(X_i - mean)
    Eigen::VectorXd within_xy_;
};

/// Fits the random-intercept model by maximizing the profiled (RE)ML
/// likelihood over log(lambda) within [lambda_lower, lambda_upper].
///
/// A coarse grid locates the basin; the score is then bisected until the
/// bracket is narrower than `tol`. An optimum pinned at lambda_lower is
/// reported as sigma_u_sq = 0 with Boundary::lower (and the fixed effects are
/// the OLS solution); one pinned at lambda_upper is flagged degenerate.
///
/// Throws DesignError for an invalid or rank-deficient design and FitError
/// when the search needs more than max_iter refinement steps.
LMMFit fit_reml(const LMMDesign& design, const FitOptions& options = {});

}  // namespace harmscope::lmm
