#include "copfrail/marginals.hpp"

#include <cmath>
#include <string>

#include "copfrail/errors.hpp"
#include "copfrail/special.hpp"

namespace copfrail {

namespace {
constexpr double kLogTwoPi = 1.8378770664093454836;
}

GammaMarginal::GammaMarginal(double a) : alpha(a) {
    if (!(a > 0.0)) throw DomainError("gamma marginal requires alpha > 0");
}

GaussianMarginal::GaussianMarginal(double a) : alpha(a) {
    if (!(a > 0.0)) throw DomainError("Gaussian marginal requires alpha > 0");
}

double GaussianMarginal::frailty_mean() const { return std::exp(alpha / 2.0); }

double GaussianMarginal::frailty_variance() const { return std::exp(alpha) * (std::exp(alpha) - 1.0); }

double log_pdf(const Marginal& marg, double x) {
    if (const auto* g = std::get_if<GammaMarginal>(&marg)) {
        if (!(x > 0.0)) throw DomainError("gamma log_pdf requires w > 0");
        const double shape = g->shape();
        return (shape - 1.0) * std::log(x) - x / g->alpha - std::lgamma(shape) - shape * std::log(g->alpha);
    }
    const auto& n = std::get<GaussianMarginal>(marg);
    if (!std::isfinite(x)) throw DomainError("Gaussian log_pdf requires finite b");
    return -0.5 * (kLogTwoPi + std::log(n.alpha)) - x * x / (2.0 * n.alpha);
}

double cdf(const Marginal& marg, double x) {
    if (const auto* g = std::get_if<GammaMarginal>(&marg)) {
        if (!(x > 0.0)) throw DomainError("gamma cdf requires w > 0");
        return special::gamma_cdf(x, g->shape(), g->scale());
    }
    const auto& n = std::get<GaussianMarginal>(marg);
    if (!std::isfinite(x)) throw DomainError("Gaussian cdf requires finite b");
    return special::norm_cdf(x / std::sqrt(n.alpha));
}

double quantile(const Marginal& marg, double u) {
    if (!(u > 0.0 && u < 1.0)) throw DomainError("quantile requires u in (0,1)");
    if (const auto* g = std::get_if<GammaMarginal>(&marg)) {
        return special::gamma_quantile(u, g->shape(), g->scale());
    }
    const auto& n = std::get<GaussianMarginal>(marg);
    return std::sqrt(n.alpha) * special::norm_quantile(u);
}

double sample(const Marginal& marg, Rng& rng) {
    if (const auto* g = std::get_if<GammaMarginal>(&marg)) return rng.gamma(g->shape(), g->scale());
    return std::sqrt(std::get<GaussianMarginal>(marg).alpha) * rng.normal();
}

double q4_gamma(double alpha_j, const Eigen::VectorXd& e_log_w, const Eigen::VectorXd& e_w) {
    if (!(alpha_j > 0.0)) throw DomainError("q4_gamma requires alpha_j > 0");
    const double inv = 1.0 / alpha_j;
    const auto n = static_cast<double>(e_log_w.size());
    return (inv - 1.0) * e_log_w.sum() - inv * e_w.sum() - n * (std::lgamma(inv) + inv * std::log(alpha_j));
}

double q4_gaussian(double alpha_j, const Eigen::VectorXd& e_b2) {
    if (!(alpha_j > 0.0)) throw DomainError("q4_gaussian requires alpha_j > 0");
    const auto n = static_cast<double>(e_b2.size());
    return -e_b2.sum() / (2.0 * alpha_j) - 0.5 * n * (kLogTwoPi + std::log(alpha_j));
}

namespace {

// d Q4 / d alpha for the gamma margin is G(alpha) / alpha^2 with
//   G(alpha) = sum_i (E[w_i] - E[log w_i]) + n (digamma(1/alpha) + log alpha - 1).
// G decreases from a nonnegative value at 0+ to -inf, so the root is the
// unique maximizer. Solved by Newton on t = log alpha with a bisection bracket.
double solve_gamma_q4(const Eigen::VectorXd& e_log_w, const Eigen::VectorXd& e_w) {
    const auto n = static_cast<double>(e_log_w.size());
    const double stat = (e_w - e_log_w).sum();
    auto g = [&](double alpha) {
        return stat + n * (special::digamma(1.0 / alpha) + std::log(alpha) - 1.0);
    };
    auto g_prime_alpha = [&](double alpha) {
        return n * (-special::trigamma(1.0 / alpha) / (alpha * alpha) + 1.0 / alpha);
    };

    double lo = 1e-4, hi = 1e4;
    if (g(lo) <= 0.0) return lo;  // degenerate summaries push the maximizer to the floor
    if (g(hi) >= 0.0) {
        throw EstimationError("gamma Q4 maximizer exceeds alpha = 1e4 (last iterate " + std::to_string(hi) + ")");
    }

    double t = 0.0;  // log alpha, start at alpha = 1
    double alpha = 1.0;
    for (int iter = 0; iter < 200; ++iter) {
        const double val = g(alpha);
        if (std::abs(val) < 1e-8 * std::max(1.0, n)) return alpha;
        if (val > 0.0) {
            lo = std::max(lo, alpha);
        } else {
            hi = std::min(hi, alpha);
        }
        const double deriv_t = g_prime_alpha(alpha) * alpha;  // chain rule to the log scale
        double t_next = deriv_t != 0.0 ? t - val / deriv_t : t;
        if (!(std::exp(t_next) > lo && std::exp(t_next) < hi)) {
            t_next = 0.5 * (std::log(lo) + std::log(hi));  // bisection fallback
        }
        t = t_next;
        alpha = std::exp(t);
    }
    throw EstimationError("gamma Q4 maximization did not converge (last iterate " + std::to_string(alpha) + ")");
}

}  // namespace

double maximize_q4(MarginalFamily family, const MarginalSummaries& summaries) {
    if (family == MarginalFamily::Gaussian) {
        return summaries.e_b2.mean();
    }
    return solve_gamma_q4(summaries.e_log_w, summaries.e_w);
}

Marginal make_marginal(MarginalFamily family, double alpha) {
    if (family == MarginalFamily::Gamma) return GammaMarginal(alpha);
    return GaussianMarginal(alpha);
}

}  // namespace copfrail
