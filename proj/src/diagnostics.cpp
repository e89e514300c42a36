#include "copfrail/diagnostics.hpp"

#include <cmath>
#include <ostream>

#include "copfrail/errors.hpp"

namespace copfrail {

ResidualReport deviance_residuals(const FitResult& fit, const Dataset& d, const FrailtyDraws& draws) {
    const int n = d.n_subjects();
    const int m = d.n_types();
    ResidualReport report;
    report.martingale.resize(n, m);
    report.deviance.resize(n, m);
    report.sum_squares = Eigen::VectorXd::Zero(m);

    for (int i = 0; i < n; ++i) {
        const auto& subj = d.subjects[static_cast<std::size_t>(i)];
        for (int j = 0; j < m; ++j) {
            const double n_ij = subj.n_events(j);
            const double mu = fit.params.baseline[static_cast<std::size_t>(j)].cum_at(subj.censoring_time) *
                              draws.e_w(i, j) *
                              std::exp(subj.covariates.dot(fit.params.beta[static_cast<std::size_t>(j)]));
            const double mres = n_ij - mu;
            double inner = mres;
            if (n_ij > 0.0) {
                if (n_ij - mres <= 0.0) {
                    throw EstimationError("deviance residual undefined for subject " + subj.id +
                                          ": fitted event count is not positive");
                }
                inner += n_ij * std::log((n_ij - mres) / n_ij);
            }
            const double dres = (mres >= 0.0 ? 1.0 : -1.0) * std::sqrt(std::max(0.0, -2.0 * inner));
            report.martingale(i, j) = mres;
            report.deviance(i, j) = dres;
            report.sum_squares[j] += dres * dres;
        }
    }
    report.total = report.sum_squares.sum();
    return report;
}

std::vector<IntensityCurve> export_cumulative_intensity(const FitResult& fit, const Dataset& d,
                                                        const std::vector<double>& grid,
                                                        const std::optional<Eigen::VectorXd>& covariate_profile) {
    std::vector<IntensityCurve> curves;
    curves.reserve(fit.params.baseline.size());
    for (std::size_t j = 0; j < fit.params.baseline.size(); ++j) {
        double scale = 1.0;
        if (covariate_profile.has_value()) {
            scale = std::exp(covariate_profile->dot(fit.params.beta[j]));
        }
        IntensityCurve curve;
        curve.type_label = j < d.type_labels.size() ? d.type_labels[j] : std::to_string(j + 1);
        curve.times = grid;
        curve.values.reserve(grid.size());
        for (double t : grid) curve.values.push_back(scale * fit.params.baseline[j].cum_at(t));
        curves.push_back(std::move(curve));
    }
    return curves;
}

std::vector<RelativeRiskRow> relative_risks(const FitResult& fit) {
    std::vector<RelativeRiskRow> rows;
    const bool have_se = fit.std_errors.size() == fit.estimates.size();
    for (std::size_t k = 0; k < fit.param_names.size(); ++k) {
        if (fit.param_names[k].rfind("beta", 0) != 0) continue;
        RelativeRiskRow row;
        row.name = fit.param_names[k];
        row.beta = fit.estimates[static_cast<Eigen::Index>(k)];
        row.rr = std::exp(row.beta);
        const double se = have_se ? fit.std_errors[static_cast<Eigen::Index>(k)] : std::nan("");
        if (std::isfinite(se) && se > 0.0) {
            row.has_se = true;
            row.se = se;
            row.ci_low = std::exp(row.beta - 1.96 * se);
            row.ci_high = std::exp(row.beta + 1.96 * se);
            row.p_value = std::erfc(std::abs(row.beta / se) / std::sqrt(2.0));
        } else if (row.beta == 0.0) {
            row.p_value = 1.0;
        }
        rows.push_back(row);
    }
    return rows;
}

void write_residuals_csv(std::ostream& out, const ResidualReport& report, const Dataset& d) {
    out << "subject_id,event_type,martingale,deviance\n";
    for (int i = 0; i < d.n_subjects(); ++i) {
        for (int j = 0; j < d.n_types(); ++j) {
            out << d.subjects[static_cast<std::size_t>(i)].id << ',' << d.type_labels[static_cast<std::size_t>(j)]
                << ',' << report.martingale(i, j) << ',' << report.deviance(i, j) << "\n";
        }
    }
    for (int j = 0; j < d.n_types(); ++j) {
        out << "# sum_squared_deviance," << d.type_labels[static_cast<std::size_t>(j)] << ','
            << report.sum_squares[j] << "\n";
    }
    out << "# total_squared_deviance,," << report.total << "\n";
}

void write_curves_csv(std::ostream& out, const std::vector<IntensityCurve>& curves) {
    out << "event_type,time,cumulative_intensity\n";
    for (const auto& c : curves) {
        for (std::size_t k = 0; k < c.times.size(); ++k) {
            out << c.type_label << ',' << c.times[k] << ',' << c.values[k] << "\n";
        }
    }
}

}  // namespace copfrail
