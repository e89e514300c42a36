#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "copfrail/copulas.hpp"
#include "copfrail/marginals.hpp"

namespace copfrail {

// The four model labels: copula family x marginal family.
//   Cg: Clayton + gamma frailty        CG: Clayton + Gaussian random effect
//   Gg: Gaussian + gamma frailty       GG: Gaussian + Gaussian random effect
struct ModelSpec {
    CopulaFamily copula;
    MarginalFamily margin;

    static ModelSpec from_label(const std::string& label);
    std::string label() const;
};

// Per-type nonparametric cumulative baseline: a right-continuous step function
// with jumps at the distinct observed event times.
struct Baseline {
    std::vector<double> times;       // distinct event times, ascending
    std::vector<double> jumps;       // nonnegative jump sizes
    std::vector<double> cumulative;  // prefix sums of jumps

    Baseline() = default;
    Baseline(std::vector<double> t, std::vector<double> j);
    void set_jumps(std::vector<double> j);

    // Lambda_0(t) = sum of jumps at times <= t.
    double cum_at(double t) const;
    double total_mass() const { return cumulative.empty() ? 0.0 : cumulative.back(); }
};

// The full unknown parameter set: regression coefficients, baselines,
// marginal variances, and the copula dependence parameters.
struct ParameterVector {
    std::vector<Eigen::VectorXd> beta;     // [type], each length p
    std::vector<Baseline> baseline;        // [type]
    std::vector<double> marginal_alphas;   // [type]
    Copula copula = ClaytonParam(0.0);
    MarginalFamily marginal_family = MarginalFamily::Gamma;

    int n_types() const { return static_cast<int>(beta.size()); }
    int n_covariates() const { return beta.empty() ? 0 : static_cast<int>(beta.front().size()); }
    std::vector<Marginal> margins() const;
};

// Names and values of the coordinates monitored for convergence and reported
// in traces: all beta, all marginal alphas, then the copula parameter(s).
// Baseline jumps are excluded.
std::vector<std::string> monitored_names(int m, int p, CopulaFamily copula);
Eigen::VectorXd monitored_values(const ParameterVector& params);

}  // namespace copfrail
