#pragma once

#include <Eigen/Core>
#include <variant>

#include "copfrail/rng.hpp"

namespace copfrail {

// Unit-mean gamma frailty: w ~ gamma(shape 1/alpha, scale alpha), variance alpha.
// All operations act on the frailty (w) scale.
struct GammaMarginal {
    double alpha;  // variance of w

    explicit GammaMarginal(double a);
    double shape() const { return 1.0 / alpha; }
    double scale() const { return alpha; }
};

// Gaussian random effect: b ~ N(0, alpha); the frailty is w = exp(b).
// All operations act on the random-effect (b) scale.
struct GaussianMarginal {
    double alpha;  // variance of b

    explicit GaussianMarginal(double a);
    double frailty_mean() const;      // E(w) = exp(alpha/2)
    double frailty_variance() const;  // Var(w) = exp(alpha)(exp(alpha)-1)
};

using Marginal = std::variant<GammaMarginal, GaussianMarginal>;

double log_pdf(const Marginal& marg, double x);
double cdf(const Marginal& marg, double x);
double quantile(const Marginal& marg, double u);
double sample(const Marginal& marg, Rng& rng);

// Expected marginal log-likelihood for one gamma margin, given the E-step
// conditional expectations of log(w_ij) and w_ij over subjects.
double q4_gamma(double alpha_j, const Eigen::VectorXd& e_log_w, const Eigen::VectorXd& e_w);

// Gaussian-margin analogue: sufficient statistic is E[b_ij^2].
double q4_gaussian(double alpha_j, const Eigen::VectorXd& e_b2);

// Summaries one margin needs from the E-step.
struct MarginalSummaries {
    Eigen::VectorXd e_log_w;  // E[log w_ij], per subject (equals E[b_ij] on the b scale)
    Eigen::VectorXd e_w;      // E[w_ij]
    Eigen::VectorXd e_b2;     // E[(log w_ij)^2]
};

enum class MarginalFamily { Gamma, Gaussian };

// Stage-1 update: the unique maximizer of Q4 over alpha_j in (0, inf).
// Gaussian margins use the closed form; gamma margins a safeguarded Newton
// solve on log(alpha).
double maximize_q4(MarginalFamily family, const MarginalSummaries& summaries);

Marginal make_marginal(MarginalFamily family, double alpha);

}  // namespace copfrail
