#include "harmscope/mixed_model.hpp"

#include "harmscope/error.hpp"
#include "harmscope/stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

namespace harmscope::lmm {

// ----------------------------------------------------------------------------
// Design
// ----------------------------------------------------------------------------

std::vector<std::string> LMMDesign::dummy_levels() const {
    std::set<std::string> levels(factor_levels.begin(), factor_levels.end());
    levels.erase(reference_level);
    return {levels.begin(), levels.end()};
}

std::vector<std::string> LMMDesign::terms() const {
    std::vector<std::string> out{"Intercept"};
    for (const auto& level : dummy_levels()) out.push_back("T." + level);
    return out;
}

void LMMDesign::validate() const {
    const std::size_t n = response.size();
    if (factor_levels.size() != n || subject_ids.size() != n)
        throw InputError("design vectors differ in length");
    if (n < 2) throw DesignError("design needs at least 2 observations");
    for (double v : response)
        if (!std::isfinite(v)) throw InputError("design response contains a non-finite value");
    std::set<std::string> subjects(subject_ids.begin(), subject_ids.end());
    if (subjects.size() < 2) throw DesignError("design needs at least 2 distinct subjects");
    if (std::find(factor_levels.begin(), factor_levels.end(), reference_level) == factor_levels.end())
        throw InputError("reference level '" + reference_level + "' does not occur in factor " + factor);
}

LMMDesign build_design(std::span<const PredictionRecord> records, std::string_view factor,
                       const CohortTable& cohort, std::string_view reference_level) {
    LMMDesign design;
    design.factor = std::string(factor);
    design.reference_level = std::string(reference_level);
    for (const auto& r : records) {
        if (r.task != TaskKind::regression)
            throw InputError("build_design: classification record for subject " + r.subject_id);
        auto level = factor_level(r, factor, cohort);
        if (!level) {
            std::ostringstream os;
            os << "no level for factor " << factor << " on subject " << r.subject_id;
            if (r.source_row > 0) os << " (row " << r.source_row << ")";
            throw InputError(os.str());
        }
        design.response.push_back(r.truth - r.prediction);
        design.factor_levels.push_back(*level);
        design.subject_ids.push_back(r.subject_id);
    }
    std::set<std::string> observed(design.factor_levels.begin(), design.factor_levels.end());
    if (observed.size() < 2)
        throw DesignError("factor " + design.factor + " has fewer than 2 observed levels");
    design.validate();
    return design;
}

const Coefficient* LMMFit::find(std::string_view term) const {
    for (const auto& c : coefficients)
        if (c.term == term) return &c;
    return nullptr;
}

// ----------------------------------------------------------------------------
// Profiled objective
// ----------------------------------------------------------------------------

ProfiledObjective::ProfiledObjective(const LMMDesign& design, Criterion criterion)
    : criterion_(criterion), n_obs_(design.response.size()) {
    const auto dummies = design.dummy_levels();
    const auto p = static_cast<Eigen::Index>(dummies.size() + 1);
    const auto n = static_cast<Eigen::Index>(n_obs_);

    std::map<std::string, std::size_t> subject_index;
    for (const auto& s : design.subject_ids) subject_index.emplace(s, 0);
    std::size_t next = 0;
    for (auto& [_, idx] : subject_index) idx = next++;
    const auto m = static_cast<Eigen::Index>(subject_index.size());

    x_ = Eigen::MatrixXd::Zero(n, p);
    y_ = Eigen::Map<const Eigen::VectorXd>(design.response.data(), n);
    subject_of_.resize(n_obs_);
    counts_.assign(subject_index.size(), 0.0);
    for (Eigen::Index i = 0; i < n; ++i) {
        x_(i, 0) = 1.0;
        auto it = std::lower_bound(dummies.begin(), dummies.end(), design.factor_levels[i]);
        if (it != dummies.end() && *it == design.factor_levels[i])
            x_(i, 1 + (it - dummies.begin())) = 1.0;
        subject_of_[i] = subject_index.at(design.subject_ids[i]);
        counts_[subject_of_[i]] += 1.0;
    }

    subject_x_sums_ = Eigen::MatrixXd::Zero(m, p);
    subject_y_sums_ = Eigen::VectorXd::Zero(m);
    for (Eigen::Index i = 0; i < n; ++i) {
        subject_x_sums_.row(subject_of_[i]) += x_.row(i);
        subject_y_sums_(subject_of_[i]) += y_(i);
    }

    // Center within subjects, then accumulate the within cross-products.
    Eigen::MatrixXd xc = x_;
    Eigen::VectorXd yc = y_;
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto s = subject_of_[i];
        xc.row(i) -= subject_x_sums_.row(s) / counts_[s];
        yc(i) -= subject_y_sums_(s) / counts_[s];
    }
    within_xx_ = xc.transpose() * xc;
    within_xy_ = xc.transpose() * yc;
}

ProfiledObjective::Evaluation ProfiledObjective::evaluate(double lambda) const {
    const auto m = static_cast<Eigen::Index>(counts_.size());
    const auto p = x_.cols();

    // X'H^-1 X = W + sum_i s_i s_i' / (n_i d_i), d_i = 1 + lambda n_i
    Eigen::MatrixXd a = within_xx_;
    Eigen::VectorXd b = within_xy_;
    std::vector<double> d(counts_.size());
    double log_det_h = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
        d[i] = 1.0 + lambda * counts_[i];
        log_det_h += std::log1p(lambda * counts_[i]);
        const double w = 1.0 / (counts_[i] * d[i]);
        a.noalias() += w * subject_x_sums_.row(i).transpose() * subject_x_sums_.row(i);
        b.noalias() += w * subject_y_sums_(i) * subject_x_sums_.row(i).transpose();
    }

    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) throw DesignError("X'V^-1X is not positive definite");

    Evaluation ev;
    ev.beta = llt.solve(b);
    ev.a_inverse = llt.solve(Eigen::MatrixXd::Identity(p, p));
    const Eigen::MatrixXd& lmat = llt.matrixL();
    double log_det_a = 0.0;
    for (Eigen::Index k = 0; k < p; ++k) log_det_a += 2.0 * std::log(lmat(k, k));

    // r'H^-1 r = sum_i [within SS of r_i + n_i rbar_i^2 / d_i]
    const Eigen::VectorXd r = y_ - x_ * ev.beta;
    std::vector<double> r_sum(counts_.size(), 0.0);
    for (std::size_t i = 0; i < n_obs_; ++i) r_sum[subject_of_[i]] += r(static_cast<Eigen::Index>(i));
    double quad = 0.0;
    for (std::size_t i = 0; i < n_obs_; ++i) {
        const auto s = subject_of_[i];
        const double dev = r(static_cast<Eigen::Index>(i)) - r_sum[s] / counts_[s];
        quad += dev * dev;
    }
    double score_sq = 0.0;   // sum_i (Z_i' H^-1 r)^2
    double trace_h = 0.0;    // tr(Z' H^-1 Z)
    double trace_fix = 0.0;  // sum_i s_i' A^-1 s_i / d_i^2
    for (Eigen::Index i = 0; i < m; ++i) {
        quad += r_sum[i] * r_sum[i] / (counts_[i] * d[i]);
        score_sq += (r_sum[i] / d[i]) * (r_sum[i] / d[i]);
        trace_h += counts_[i] / d[i];
        if (criterion_ == Criterion::reml) {
            const auto s = subject_x_sums_.row(i);
            trace_fix += s.dot(ev.a_inverse * s.transpose()) / (d[i] * d[i]);
        }
    }
    quad = std::max(quad, std::numeric_limits<double>::min());

    const double nu = criterion_ == Criterion::reml ? static_cast<double>(n_obs_) - static_cast<double>(p)
                                                    : static_cast<double>(n_obs_);
    ev.scale = quad / nu;
    const double log_2pi = std::log(2.0 * std::numbers::pi);
    ev.objective = nu * std::log(ev.scale) + log_det_h + nu * (1.0 + log_2pi);
    double gradient = trace_h - nu * score_sq / quad;
    if (criterion_ == Criterion::reml) {
        ev.objective += log_det_a;
        gradient -= trace_fix;
    }
    ev.slope = lambda * gradient;
    return ev;
}

// ----------------------------------------------------------------------------
// Fitting
// ----------------------------------------------------------------------------

namespace {

constexpr int kGridPoints = 81;

void check_rank(const LMMDesign& design, const ProfiledObjective& objective) {
    const auto terms = design.terms();
    const double n = static_cast<double>(objective.n_obs());
    const double p = static_cast<double>(objective.n_params());
    if (objective.criterion() == Criterion::reml ? n - p < 1.0 : n < 1.0)
        throw DesignError("factor " + design.factor + ": no residual degrees of freedom (" +
                          std::to_string(objective.n_obs()) + " observations, " +
                          std::to_string(objective.n_params()) + " fixed effects)");

    std::map<std::string, std::size_t> counts;
    for (const auto& level : design.factor_levels) ++counts[level];
    std::vector<std::string> empty;
    for (const auto& level : design.dummy_levels())
        if (counts[level] == 0) empty.push_back("T." + level);
    if (!empty.empty()) {
        std::string names;
        for (const auto& e : empty) names += (names.empty() ? "" : ", ") + e;
        throw DesignError("rank-deficient design, collinear terms: " + names);
    }
}

LMMFit assemble(const LMMDesign& design, const ProfiledObjective& objective, double lambda,
                Criterion criterion) {
    const auto ev = objective.evaluate(lambda);
    LMMFit fit;
    fit.criterion = criterion;
    fit.lambda = lambda;
    fit.sigma_e_sq = ev.scale;
    fit.sigma_u_sq = lambda * ev.scale;
    fit.log_likelihood = -0.5 * ev.objective;
    fit.n_obs = objective.n_obs();
    fit.n_subjects = objective.n_subjects();
    const auto terms = design.terms();
    for (std::size_t k = 0; k < terms.size(); ++k) {
        const auto kk = static_cast<Eigen::Index>(k);
        Coefficient c;
        c.term = terms[k];
        c.estimate = ev.beta(kk);
        c.std_error = std::sqrt(ev.scale * ev.a_inverse(kk, kk));
        c.z = c.estimate / c.std_error;
        c.p_two_sided = stats::two_sided_normal_p(c.z);
        fit.coefficients.push_back(std::move(c));
    }
    return fit;
}

}  // namespace

LMMFit fit_reml(const LMMDesign& design, const FitOptions& options) {
    design.validate();
    if (!(options.lambda_lower > 0.0 && options.lambda_lower <= options.lambda_upper))
        throw InputError("lambda bounds must satisfy 0 < lower <= upper");
    if (!(options.tol > 0.0)) throw InputError("tol must be positive");

    const ProfiledObjective objective(design, options.criterion);
    check_rank(design, objective);

    if (options.fixed_lambda) {
        if (!(*options.fixed_lambda >= 0.0)) throw InputError("fixed lambda must be >= 0");
        LMMFit fit = assemble(design, objective, *options.fixed_lambda, options.criterion);
        fit.converged = true;
        fit.boundary = *options.fixed_lambda == 0.0 ? Boundary::lower : Boundary::none;
        return fit;
    }

    const double t_min = std::log(options.lambda_lower);
    const double t_max = std::log(options.lambda_upper);
    auto f = [&](double t) { return objective.evaluate(std::exp(t)).objective; };
    auto slope = [&](double t) { return objective.evaluate(std::exp(t)).slope; };

    // Coarse scan to find the basin.
    const int points = t_max > t_min ? kGridPoints : 1;
    std::vector<double> grid(points), values(points);
    for (int i = 0; i < points; ++i) {
        grid[i] = points == 1 ? t_min : t_min + (t_max - t_min) * i / (points - 1);
        values[i] = f(grid[i]);
    }
    const int k = static_cast<int>(std::min_element(values.begin(), values.end()) - values.begin());
    double lo = grid[std::max(k - 1, 0)];
    double hi = grid[std::min(k + 1, points - 1)];

    double t_hat = grid[k];
    Boundary boundary = Boundary::none;
    int iterations = 0;
    auto give_up = [&](double best) {
        throw FitError("REML search did not converge within " + std::to_string(options.max_iter) +
                       " iterations", best, f(best));
    };

    if (points == 1) {
        boundary = Boundary::lower;
    } else if (k == 0 && slope(grid[0]) >= 0.0) {
        t_hat = t_min;
        boundary = Boundary::lower;
    } else if (k == points - 1 && slope(grid[points - 1]) <= 0.0) {
        t_hat = t_max;
        boundary = Boundary::upper;
    } else if (slope(lo) < 0.0 && slope(hi) > 0.0) {
        // Bisect the score.
        while (hi - lo >= options.tol) {
            if (++iterations > options.max_iter) give_up(0.5 * (lo + hi));
            const double mid = 0.5 * (lo + hi);
            (slope(mid) < 0.0 ? lo : hi) = mid;
        }
        t_hat = 0.5 * (lo + hi);
    } else {
        // Score signs disagree with the grid (flat or noisy basin): golden section on f.
        const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
        double c = hi - inv_phi * (hi - lo);
        double d = lo + inv_phi * (hi - lo);
        double fc = f(c), fd = f(d);
        while (hi - lo >= options.tol) {
            if (++iterations > options.max_iter) give_up(fc < fd ? c : d);
            if (fc < fd) {
                hi = d;
                d = c;
                fd = fc;
                c = hi - inv_phi * (hi - lo);
                fc = f(c);
            } else {
                lo = c;
                c = d;
                fc = fd;
                d = lo + inv_phi * (hi - lo);
                fd = f(d);
            }
        }
        t_hat = 0.5 * (lo + hi);
        if (t_hat - t_min < options.tol) boundary = Boundary::lower;
        if (t_max - t_hat < options.tol) boundary = Boundary::upper;
    }

    const double lambda = boundary == Boundary::lower ? 0.0 : std::exp(t_hat);
    LMMFit fit = assemble(design, objective, lambda, options.criterion);
    fit.converged = true;
    fit.boundary = boundary;
    fit.degenerate = boundary == Boundary::upper;
    fit.iterations = iterations;
    return fit;
}

}  // namespace harmscope::lmm
