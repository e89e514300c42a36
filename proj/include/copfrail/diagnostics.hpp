#pragma once

#include <Eigen/Core>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "copfrail/event_data.hpp"
#include "copfrail/mcem.hpp"

namespace copfrail {

// Martingale residuals M_ij = n_ij - Lambda_0j(tau_i) E(w_ij) exp(x_i'beta_j)
// and the counting-process deviance transform, per (subject, type).
struct ResidualReport {
    Eigen::MatrixXd martingale;   // n x m
    Eigen::MatrixXd deviance;     // n x m
    Eigen::VectorXd sum_squares;  // per type, sum of squared deviance residuals
    double total = 0.0;
};

ResidualReport deviance_residuals(const FitResult& fit, const Dataset& d, const FrailtyDraws& draws);

// (t, Lambda_hat_0j(t)) pairs on the grid, optionally scaled by exp(x'beta_j)
// for a covariate profile.
struct IntensityCurve {
    std::string type_label;
    std::vector<double> times;
    std::vector<double> values;
};

std::vector<IntensityCurve> export_cumulative_intensity(
    const FitResult& fit, const Dataset& d, const std::vector<double>& grid,
    const std::optional<Eigen::VectorXd>& covariate_profile = std::nullopt);

struct RelativeRiskRow {
    std::string name;
    double beta = 0.0;
    double se = 0.0;
    double rr = 1.0;
    double ci_low = 0.0, ci_high = 0.0;
    double p_value = 1.0;
    bool has_se = false;
};

// RR = exp(beta), 95% Wald CI, two-sided normal p-value; CI and p-value are
// omitted when standard errors were withheld.
std::vector<RelativeRiskRow> relative_risks(const FitResult& fit);

void write_residuals_csv(std::ostream& out, const ResidualReport& report, const Dataset& d);
void write_curves_csv(std::ostream& out, const std::vector<IntensityCurve>& curves);

}  // namespace copfrail
