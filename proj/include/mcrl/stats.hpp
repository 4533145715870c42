#pragma once

// Trend tests and regressions over per-trial series.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>

#include "mcrl/env.hpp"
#include "mcrl/error.hpp"

namespace mcrl::stats {

inline double normal_two_sided_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

// ---------------------------------------------------------------------------------------------
// Mann-Kendall

struct MannKendallResult {
    long long S = 0;
    double variance = 0.0;
    double z = 0.0;
    double p = 1.0;
    int n = 0;
};

inline long long mann_kendall_s(const std::vector<double>& x) {
    long long s = 0;
    for (std::size_t i = 0; i < x.size(); ++i)
        for (std::size_t j = i + 1; j < x.size(); ++j) s += (x[j] > x[i]) - (x[j] < x[i]);
    return s;
}

/// Variance of S under no trend, corrected for ties.
inline double mann_kendall_variance(const std::vector<double>& x) {
    const double n = static_cast<double>(x.size());
    double v = n * (n - 1.0) * (2.0 * n + 5.0);
    std::vector<double> sorted = x;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size();) {
        std::size_t j = i;
        while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
        const double t = static_cast<double>(j - i);
        v -= t * (t - 1.0) * (2.0 * t + 5.0);
        i = j;
    }
    return v / 18.0;
}

/// Two-sided test: tie-corrected variance, z with a +-1 continuity correction, normal p.
inline MannKendallResult mann_kendall(const std::vector<double>& x) {
    if (x.size() < 3) throw ValidationError("mann_kendall needs at least 3 values");
    MannKendallResult r;
    r.n = static_cast<int>(x.size());
    r.S = mann_kendall_s(x);
    r.variance = mann_kendall_variance(x);
    if (r.variance > 0.0) {
        const double sd = std::sqrt(r.variance);
        r.z = r.S > 0 ? (r.S - 1) / sd : r.S < 0 ? (r.S + 1) / sd : 0.0;
        r.p = normal_two_sided_p(r.z);
    }
    return r;
}

/// Exact permutation p-value P(|S| >= |S_obs|) over the distinct orderings of the observed
/// values. Factorial cost, so limited to short series.
inline double mann_kendall_exact_p(const std::vector<double>& x) {
    require(x.size() >= 3 && x.size() <= 10, "mann_kendall_exact_p supports 3..10 values");
    std::vector<double> perm = x;
    std::sort(perm.begin(), perm.end());
    long long total = 0, extreme = 0;
    const long long target = std::llabs(mann_kendall_s(x));
    // Ranks carry multiplicity; distinct orderings of a multiset are equiprobable under H0.
    do {
        ++total;
        if (std::llabs(mann_kendall_s(perm)) >= target) ++extreme;
    } while (std::next_permutation(perm.begin(), perm.end()));
    return static_cast<double>(extreme) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------------------------
// Logistic regression y ~ 1 + x

struct SeparationError : ValidationError {
    using ValidationError::ValidationError;
};

struct RegressionTerm {
    std::string name;
    double coef = 0.0;
    double std_err = 0.0;
    double stat = 0.0;  // z (logistic) or t (OLS)
    double p = 1.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
};

struct LogisticResult {
    std::vector<RegressionTerm> terms;  // intercept, slope
    double log_likelihood = 0.0;
    int iterations = 0;
    int n = 0;
};

inline double logistic_loglik(const std::vector<double>& x, const std::vector<int>& y, double b0, double b1) {
    double ll = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double eta = b0 + b1 * x[i];
        // ln sigma(eta) = -log1p(exp(-eta)), computed stably
        const double log_p = eta >= 0 ? -std::log1p(std::exp(-eta)) : eta - std::log1p(std::exp(eta));
        const double log_q = log_p - eta;
        ll += y[i] ? log_p : log_q;
    }
    return ll;
}

inline LogisticResult logistic_regression(const std::vector<double>& x, const std::vector<int>& y,
                                          double tol = 1e-8, int max_iter = 200) {
    require(x.size() == y.size() && !x.empty(), "logistic_regression: x and y must be non-empty and equal length");
    const auto ones = std::count(y.begin(), y.end(), 1);
    if (ones == 0 || ones == static_cast<long>(y.size()))
        throw SeparationError("logistic_regression: outcome is constant (complete separation)");
    // Complete separation along x: every success on one side of every failure.
    double min1 = INFINITY, max1 = -INFINITY, min0 = INFINITY, max0 = -INFINITY;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (y[i]) {
            min1 = std::min(min1, x[i]);
            max1 = std::max(max1, x[i]);
        } else {
            min0 = std::min(min0, x[i]);
            max0 = std::max(max0, x[i]);
        }
    }
    if (max0 < min1 || max1 < min0) throw SeparationError("logistic_regression: predictor separates the outcome perfectly");

    Eigen::Vector2d beta(0.0, 0.0);
    Eigen::Matrix2d info;
    LogisticResult r;
    r.n = static_cast<int>(x.size());
    for (r.iterations = 1; r.iterations <= max_iter; ++r.iterations) {
        Eigen::Vector2d grad = Eigen::Vector2d::Zero();
        info.setZero();
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double mu = 1.0 / (1.0 + std::exp(-(beta[0] + beta[1] * x[i])));
            const Eigen::Vector2d xi(1.0, x[i]);
            grad += (y[i] - mu) * xi;
            info += mu * (1.0 - mu) * xi * xi.transpose();
        }
        if (grad.norm() < tol) break;
        beta += info.ldlt().solve(grad);
        if (!beta.allFinite() || beta.cwiseAbs().maxCoeff() > 1e8)
            throw SeparationError("logistic_regression: coefficients diverged (quasi-separation)");
    }
    if (r.iterations > max_iter) throw NumericalError("logistic_regression: IRLS did not converge");
    const Eigen::Matrix2d cov = info.inverse();
    const char* names[2] = {"Intercept", "trial"};
    for (int k = 0; k < 2; ++k) {
        RegressionTerm t;
        t.name = names[k];
        t.coef = beta[k];
        t.std_err = std::sqrt(cov(k, k));
        t.stat = t.coef / t.std_err;
        t.p = normal_two_sided_p(t.stat);
        t.ci_lo = t.coef - 1.959963984540054 * t.std_err;
        t.ci_hi = t.coef + 1.959963984540054 * t.std_err;
        r.terms.push_back(t);
    }
    r.log_likelihood = logistic_loglik(x, y, beta[0], beta[1]);
    return r;
}

/// Adaptive flag against trial index, every participant's trials pooled into one fit.
inline LogisticResult pooled_logistic_trend(const std::vector<std::vector<int>>& flags_by_participant) {
    std::vector<double> x;
    std::vector<int> y;
    for (const auto& flags : flags_by_participant)
        for (std::size_t t = 0; t < flags.size(); ++t) {
            x.push_back(static_cast<double>(t + 1));
            y.push_back(flags[t]);
        }
    return logistic_regression(x, y);
}

struct ParticipantLogistic {
    std::size_t participant = 0;
    std::optional<LogisticResult> fit;
    std::string error;  // set when the participant's data are separated
};

/// One fit per participant; separated participants are reported rather than dropped.
inline std::vector<ParticipantLogistic> per_participant_logistic_trend(
    const std::vector<std::vector<int>>& flags_by_participant) {
    std::vector<ParticipantLogistic> out;
    for (std::size_t i = 0; i < flags_by_participant.size(); ++i) {
        ParticipantLogistic p;
        p.participant = i;
        std::vector<double> x;
        for (std::size_t t = 0; t < flags_by_participant[i].size(); ++t) x.push_back(static_cast<double>(t + 1));
        try {
            p.fit = logistic_regression(x, flags_by_participant[i]);
        } catch (const ValidationError& e) {
            p.error = e.what();
        }
        out.push_back(std::move(p));
    }
    return out;
}

// ---------------------------------------------------------------------------------------------
// Pooled OLS: proportion ~ label * trial

struct OlsResult {
    std::vector<RegressionTerm> terms;
    Eigen::MatrixXd design;
    Eigen::VectorXd response;
    Eigen::VectorXd residuals;
    double sigma2 = 0.0;
    int df = 0;
};

inline OlsResult ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::vector<std::string>& names) {
    require(X.rows() == y.size() && static_cast<std::size_t>(X.cols()) == names.size(), "ols: dimension mismatch");
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    if (qr.rank() < X.cols()) throw ValidationError("ols: design matrix is rank deficient");
    OlsResult r;
    r.design = X;
    r.response = y;
    const Eigen::VectorXd beta = qr.solve(y);
    r.residuals = y - X * beta;
    r.df = static_cast<int>(X.rows() - X.cols());
    r.sigma2 = r.df > 0 ? r.residuals.squaredNorm() / r.df : 0.0;
    const Eigen::MatrixXd cov = r.sigma2 * (X.transpose() * X).inverse();
    const double tcrit = r.df > 0 ? boost::math::quantile(boost::math::complement(boost::math::students_t(r.df), 0.025)) : 0.0;
    for (Eigen::Index k = 0; k < X.cols(); ++k) {
        RegressionTerm t;
        t.name = names[k];
        t.coef = beta[k];
        t.std_err = std::sqrt(std::max(0.0, cov(k, k)));
        if (t.std_err > 0.0 && r.df > 0) {
            t.stat = t.coef / t.std_err;
            t.p = 2.0 * boost::math::cdf(boost::math::complement(boost::math::students_t(r.df), std::abs(t.stat)));
        } else {
            t.stat = t.coef == 0.0 ? 0.0 : std::copysign(INFINITY, t.coef);
            t.p = t.coef == 0.0 ? 1.0 : 0.0;
        }
        t.ci_lo = t.coef - tcrit * t.std_err;
        t.ci_hi = t.coef + tcrit * t.std_err;
        r.terms.push_back(t);
    }
    return r;
}

/// Label dummies (first label is the reference), trial, and label x trial interactions.
inline OlsResult pooled_trend_regression(const std::map<std::string, std::vector<double>>& groups) {
    if (groups.size() < 2) throw ValidationError("pooled_trend_regression needs at least two labels");
    const std::size_t T = groups.begin()->second.size();
    for (const auto& [label, s] : groups)
        if (s.size() != T) throw ValidationError("pooled_trend_regression: label '" + label + "' has a different trial count");
    std::vector<std::string> labels;
    for (const auto& [label, s] : groups) labels.push_back(label);
    const std::size_t L = labels.size();
    const Eigen::Index cols = static_cast<Eigen::Index>(2 * L);
    Eigen::MatrixXd X = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(L * T), cols);
    Eigen::VectorXd y(static_cast<Eigen::Index>(L * T));
    std::vector<std::string> names{"Intercept"};
    for (std::size_t l = 1; l < L; ++l) names.push_back("label[" + labels[l] + "]");
    names.push_back("trial");
    for (std::size_t l = 1; l < L; ++l) names.push_back("label[" + labels[l] + "]:trial");
    Eigen::Index row = 0;
    for (std::size_t l = 0; l < L; ++l) {
        const auto& s = groups.at(labels[l]);
        for (std::size_t t = 0; t < T; ++t, ++row) {
            const double trial = static_cast<double>(t + 1);
            X(row, 0) = 1.0;
            X(row, static_cast<Eigen::Index>(L)) = trial;
            if (l > 0) {
                X(row, static_cast<Eigen::Index>(l)) = 1.0;
                X(row, static_cast<Eigen::Index>(L + l)) = trial;
            }
            y[row] = s[t];
        }
    }
    return ols(X, y, names);
}

// ---------------------------------------------------------------------------------------------
// Per-trial curves

inline constexpr double kZ95 = 1.959963984540054;

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

/// Normal-approximation interval for a proportion, clipped to [0, 1].
inline Interval proportion_ci(double p, std::size_t n) {
    if (n == 0) return {0.0, 0.0};
    const double half = kZ95 * std::sqrt(std::max(0.0, p * (1.0 - p)) / static_cast<double>(n));
    return {std::clamp(p - half, 0.0, 1.0), std::clamp(p + half, 0.0, 1.0)};
}

inline Interval mean_ci(double mean, double sample_var, std::size_t n) {
    if (n < 2) return {mean, mean};
    const double half = kZ95 * std::sqrt(sample_var / static_cast<double>(n));
    return {mean - half, mean + half};
}

struct CurveRow {
    int trial = 0;  // 1-based
    std::size_t n = 0;
    double mean_score = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    double adaptive_prop = 0.0;
    double adaptive_ci_lo = 0.0;
    double adaptive_ci_hi = 0.0;
};

/// Aggregates per-trial scores and adaptive flags; scores[r][t] / adaptive[r][t] for run r.
inline std::vector<CurveRow> curves(const std::vector<std::vector<double>>& scores,
                                    const std::vector<std::vector<int>>& adaptive) {
    require(scores.size() == adaptive.size() && !scores.empty(), "curves: need at least one run");
    std::size_t T = 0;
    for (const auto& s : scores) T = std::max(T, s.size());
    std::vector<CurveRow> rows;
    for (std::size_t t = 0; t < T; ++t) {
        CurveRow row;
        row.trial = static_cast<int>(t + 1);
        double sum = 0.0, sq = 0.0, hits = 0.0;
        for (std::size_t r = 0; r < scores.size(); ++r) {
            if (t >= scores[r].size()) continue;
            ++row.n;
            sum += scores[r][t];
            sq += scores[r][t] * scores[r][t];
            hits += adaptive[r][t];
        }
        const double n = static_cast<double>(row.n);
        row.mean_score = sum / n;
        const double var = row.n > 1 ? std::max(0.0, (sq - n * row.mean_score * row.mean_score) / (n - 1.0)) : 0.0;
        const Interval s = mean_ci(row.mean_score, var, row.n);
        row.ci_lo = s.lo;
        row.ci_hi = s.hi;
        row.adaptive_prop = hits / n;
        const Interval a = proportion_ci(row.adaptive_prop, row.n);
        row.adaptive_ci_lo = a.lo;
        row.adaptive_ci_hi = a.hi;
        rows.push_back(row);
    }
    return rows;
}

inline std::vector<CurveRow> curves(const std::vector<std::vector<TrialLog>>& participants) {
    std::vector<std::vector<double>> scores;
    std::vector<std::vector<int>> adaptive;
    for (const auto& logs : participants) {
        auto& s = scores.emplace_back();
        auto& a = adaptive.emplace_back();
        for (const auto& log : logs) {
            s.push_back(log.score);
            a.push_back(classify_adaptive(log) ? 1 : 0);
        }
    }
    return curves(scores, adaptive);
}

inline std::vector<double> adaptive_series(const std::vector<CurveRow>& rows) {
    std::vector<double> out;
    for (const auto& r : rows) out.push_back(r.adaptive_prop);
    return out;
}

/// Participants who revealed every node in their first trial form their own subgroup.
inline bool examined_all_nodes_first_trial(const std::vector<TrialLog>& logs) {
    return !logs.empty() && logs.front().clicks.size() == static_cast<std::size_t>(maze::kRevealable);
}

}  // namespace mcrl::stats
