#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "copfrail/event_data.hpp"
#include "copfrail/mcem.hpp"
#include "copfrail/model.hpp"
#include "copfrail/rng.hpp"

namespace copfrail {

// Study design: copula-dependent frailties, a Bernoulli(1/2) treatment
// covariate, censoring at min(Exp(censor_rate), admin_cutoff), and unit
// baseline intensities. Defaults are the strongest-dependence Cg setting.
struct SimConfig {
    int n_subjects = 200;
    int n_types = 3;
    ModelSpec model{CopulaFamily::Clayton, MarginalFamily::Gamma};
    std::vector<double> copula_truth{8.0};        // Clayton: {alpha_c}; Gaussian: {rho} or all m(m-1)/2
    std::vector<double> alpha_truth{1.0, 1.0, 1.0};
    std::vector<double> beta_truth{1.0, 0.8, 0.4};
    double censor_rate = 0.5;
    double admin_cutoff = 1.0;
    int n_replicates = 100;
    std::uint64_t seed = 12345;

    void validate() const;  // throws DomainError on inconsistent dimensions
    Copula copula() const;  // truth parameters as a copula object
    Eigen::VectorXd truth_monitored() const;  // aligned with monitored_names
};

// One dataset per the generation steps: frailty vector from the copula,
// treatment flip, censoring time, exponential gap times with hazard
// w_ij * exp(x_i beta_j), cumulative event times kept while below tau_i.
Dataset generate_dataset(const SimConfig& cfg, Rng& rng);

// Fraction of subjects with no events of any type.
double zero_event_fraction(const Dataset& d);

struct ReplicateOutcome {
    int replicate = 0;
    bool converged = false;
    bool failed = false;        // fit aborted with an error
    std::string message;
    int n_iterations = 0;
    double runtime_seconds = 0.0;
    double censoring_fraction = 0.0;
    Eigen::VectorXd estimates;
    Eigen::VectorXd std_errors;
};

struct StudyResult {
    std::vector<std::string> param_names;
    Eigen::VectorXd truth;
    Eigen::VectorXd mean;
    Eigen::VectorXd bias;
    Eigen::VectorXd variance;  // population variance over included replicates
    Eigen::VectorXd mse;
    Eigen::VectorXd cp;        // 95% Wald coverage among replicates with SEs
    int n_replicates = 0;
    int n_included = 0;
    int n_excluded = 0;
    double mean_censoring_fraction = 0.0;
    std::vector<ReplicateOutcome> replicates;
};

// Generates and fits n_replicates datasets in parallel, aggregating bias,
// variance, MSE, and coverage. Non-converged or failed replicates are
// excluded from the summaries but reported; more than 20% excluded is an
// error. progress, when given, receives one line per finished replicate.
StudyResult run_study(const SimConfig& cfg, const FitConfig& fit_cfg, std::ostream* progress = nullptr);

void write_study_csv(std::ostream& out, const StudyResult& result);
StudyResult read_study_csv(std::istream& in);

}  // namespace copfrail
