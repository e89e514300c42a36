#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "copfrail/errors.hpp"
#include "copfrail/event_data.hpp"
#include "copfrail/frailty_posterior.hpp"
#include "copfrail/model.hpp"

namespace copfrail {

// Booth-style stopping rule: relative change below delta2 (with the
// delta1-shifted denominator) for a run of consecutive iterations.
struct ConvergenceConfig {
    double delta1 = 0.01;
    double delta2 = 0.003;
    int consecutive_required = 3;
    int max_iter = 100;
};

struct ConvergenceDecision {
    bool converged = false;
    double last_criterion = 0.0;
    int streak = 0;
};

// history holds the monitored coordinate vectors of iterates 0..s.
ConvergenceDecision check_convergence(std::span<const Eigen::VectorXd> history, const ConvergenceConfig& cfg);

struct IterationRecord {
    Eigen::VectorXd monitored;   // coordinate values after this iteration's M-step
    double criterion = 0.0;      // stopping-rule value against the previous iterate
    double q_value = 0.0;        // MC estimate of Q at the updated parameters
    double q_change = 0.0;       // Q improvement across the M-step (same draws)
    double q_change_mc_se = 0.0;
    bool q_decrease_flagged = false;  // decrease beyond 3 MC standard errors
    double mean_acceptance = 0.0;
};

struct FitConfig {
    MHConfig mh;
    ConvergenceConfig convergence;
    int se_sample_multiplier = 4;  // n_s scaling for the SE-stage E-step
    bool compute_se = true;
    int threads = 0;  // 0 = all hardware threads
    std::uint64_t seed = 1;
};

struct FitResult {
    ParameterVector params;
    std::vector<std::string> param_names;  // monitored coordinates
    Eigen::VectorXd estimates;             // aligned with param_names
    Eigen::VectorXd std_errors;            // NaN entries where withheld
    Eigen::MatrixXd info_matrix;           // profiled observed information
    bool se_available = false;
    std::string se_note;

    Eigen::MatrixXd kendall_tau;  // 1x1 for Clayton, m x m pairwise for Gaussian
    std::vector<IterationRecord> trace;
    bool converged = false;
    int n_iterations = 0;
    double final_mean_score_norm = 0.0;
    bool acceptance_warning = false;

    FrailtyDraws final_draws;  // SE-stage E-step output at the estimate
};

// Thrown when an M-step fails; carries the trace recorded so far.
class FitError : public EstimationError {
public:
    FitError(const std::string& msg, std::vector<IterationRecord> trace_so_far)
        : EstimationError(msg), trace(std::move(trace_so_far)) {}
    std::vector<IterationRecord> trace;
};

// Expected partial log-likelihood for one event type, Breslow tie handling:
// each event contributes its own numerator, the log-denominator is weighted
// by the tie count.
double expected_partial_loglik(const Eigen::VectorXd& beta_j, const FrailtyDraws& draws, const Dataset& d,
                               const RiskSetIndex& risk, int type);

// Newton-Raphson maximizer of the expected partial likelihood, separable per
// type. Gradient tolerance 1e-8 (inf-norm), step-halving safeguard.
std::vector<Eigen::VectorXd> update_beta(const FrailtyDraws& draws, const Dataset& d, const RiskSetIndex& risk,
                                         const std::vector<Eigen::VectorXd>& init, int threads = 1);

// Breslow-type baseline update given the current regression coefficients.
std::vector<Baseline> update_baseline(const FrailtyDraws& draws, const Dataset& d, const RiskSetIndex& risk,
                                      const std::vector<Eigen::VectorXd>& beta);

// Two-stage variance/dependence update: Q4 per margin, then Q3 with margins
// fixed at the stage-1 estimates. Updates params in place.
void update_alpha(const FrailtyDraws& draws, ParameterVector& params, Q3MaximizeInfo* info = nullptr);

// Complete-data log-likelihood of retained draw q under params; the Monte
// Carlo average over q estimates Q.
double complete_loglik(const ParameterVector& params, const Dataset& d, const FrailtyDraws& draws, int q);

struct LouisResult {
    Eigen::MatrixXd information;  // profiled over baseline jumps; monitored-coordinate order
    Eigen::VectorXd std_errors;   // NaN where withheld
    bool positive_definite = false;
    std::string note;
    double mean_score_norm = 0.0;  // complete-data score average at the estimate
    Eigen::VectorXd mean_score;
};

// Louis identity: I = E[-d2L/dxi2 | D] - E[S S' | D], assembled from per-draw
// complete-data scores/Hessians over (beta, alpha, baseline jumps), then the
// jump block is profiled out by Schur complement.
LouisResult louis_information(const ParameterVector& params, const FrailtyDraws& draws, const Dataset& d,
                              const RiskSetIndex& risk, int threads = 1);

// Full MCEM driver: initialize, iterate E/M steps until convergence, then the
// SE-stage E-step and Louis information.
FitResult fit(const Dataset& d, const ModelSpec& model, const FitConfig& cfg);

// Structured text report (estimates, SEs, relative risks, Kendall's tau,
// convergence summary) and companion CSVs.
void write_fit_report(std::ostream& out, const FitResult& fit, const Dataset& d);
void write_baseline_csv(std::ostream& out, const FitResult& fit, const Dataset& d);
void write_trace_csv(std::ostream& out, const FitResult& fit);

}  // namespace copfrail
