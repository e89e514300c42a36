#pragma once

#include <Eigen/Core>
#include <functional>
#include <vector>

#include "copfrail/event_data.hpp"

// Independent reference implementations used as test oracles. Everything here
// is written the straightforward O(n*k) way, deliberately sharing no code
// with the library's risk-set machinery.
namespace oracles {

// Knight's O(n log n) empirical Kendall tau.
double empirical_kendall_tau(std::vector<double> x, std::vector<double> y);

// Textbook Cox partial-likelihood Newton fit for one event type with
// per-subject multiplicative weights (frailty means). Breslow ties.
Eigen::VectorXd cox_newton(const copfrail::Dataset& d, int type, const Eigen::VectorXd& weights,
                           int max_iter = 50);

// Classical Breslow cumulative-hazard jumps at the distinct event times.
std::vector<double> breslow_jumps(const copfrail::Dataset& d, int type, const Eigen::VectorXd& weights,
                                  const Eigen::VectorXd& beta);

// Central-difference gradient and Hessian.
Eigen::VectorXd numeric_gradient(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                                 double rel_step = 1e-5);
Eigen::MatrixXd numeric_hessian(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                                double rel_step = 1e-4);

// Exact m=1 gamma-frailty marginal log-likelihood, by fixed-grid quadrature
// over log(w) (closed_form = true switches to the conjugate algebra).
struct M1Subject {
    int n_events;
    double x;            // scalar covariate
    double sum_log_jumps;
    double cum_baseline; // Lambda_0(tau_i)
};
double m1_marginal_loglik(const std::vector<M1Subject>& subjects, double beta, double alpha, bool closed_form);

// As above but parameterized by the full jump vector; event_jump_index[i]
// lists the jump indices of subject i's events and at_risk[i][l] tells
// whether subject i is at risk at jump l.
double m1_marginal_loglik_full(const std::vector<int>& n_events, const std::vector<double>& x,
                               const std::vector<std::vector<int>>& event_jump_index,
                               const std::vector<std::vector<bool>>& at_risk, const Eigen::VectorXd& jumps,
                               double beta, double alpha, bool closed_form);

// Kolmogorov-Smirnov distance between a sample and a cdf.
double ks_distance(std::vector<double> sample, const std::function<double(double)>& cdf);

// Multivariate normal log density with zero mean.
double mvn_log_pdf(const Eigen::VectorXd& x, const Eigen::MatrixXd& cov);

// 1-D grid search maximizer.
double grid_search_max(const std::function<double(double)>& f, double lo, double hi, int points);

}  // namespace oracles
