#pragma once

#include <Eigen/Core>
#include <vector>

#include "copfrail/event_data.hpp"
#include "copfrail/model.hpp"
#include "copfrail/rng.hpp"

namespace copfrail {

// Chains run on the scale the margins are specified on: the frailty w for
// gamma margins, the random effect b = log w for Gaussian margins.
enum class FrailtyScale { W, B };

inline FrailtyScale scale_for(MarginalFamily family) {
    return family == MarginalFamily::Gamma ? FrailtyScale::W : FrailtyScale::B;
}

// Unnormalized conditional density of one subject's frailty vector given the
// data and current parameters; per-subject constants are cached so proposal
// evaluations stay cheap.
class ConditionalTarget {
public:
    ConditionalTarget(const SubjectData& subject, const ParameterVector& params);

    // Log target at a point on the modeling scale (w or b, matching scale()).
    // Returns -inf outside the support instead of throwing.
    double log_density(const Eigen::VectorXd& w_or_b) const;

    // Log target on the random-walk (log-frailty) scale, Jacobian included.
    double log_density_sampling(const Eigen::VectorXd& v) const;

    // Maps a sampling-scale state to the modeling scale.
    Eigen::VectorXd to_model_scale(const Eigen::VectorXd& v) const;

    FrailtyScale scale() const { return scale_; }
    int dim() const { return static_cast<int>(n_events_.size()); }

private:
    FrailtyScale scale_;
    Eigen::VectorXd n_events_;   // n_ij per type
    Eigen::VectorXd data_rate_;  // Lambda_0j(tau_i) exp(x_i' beta_j) per type
    std::vector<Marginal> margins_;
    const Copula* copula_;
    bool independence_;  // copula term identically zero
};

double log_target(const ConditionalTarget& t, const Eigen::VectorXd& w_or_b);

struct MHConfig {
    int n_burn = 500;
    int n_thin = 5;
    int n_s = 500;
    double step_scale = 0.5;
    double target_acceptance = 0.3;
    bool adapt_during_burnin = true;
};

// Persistent per-subject chain state; lets successive E-steps warm-start.
struct ChainState {
    Eigen::VectorXd v;  // sampling-scale position
    double step_scale = 0.0;
    bool initialized = false;
};

struct MHResult {
    Eigen::MatrixXd draws;   // n_s x m on the modeling scale
    double acceptance_rate;  // over post-burn-in proposals
    bool acceptance_warning; // rate outside [0.05, 0.95]
};

// Random-walk Metropolis-Hastings with joint proposals over all m components,
// burn-in, thinning, and burn-in-only step adaptation. Total proposals are
// exactly n_burn + n_thin * n_s.
MHResult mh_sample(const ConditionalTarget& target, const MHConfig& cfg, Rng& rng, ChainState* state = nullptr);

// E-step output: retained draws for every subject plus the conditional
// expectations consumed by the M-step.
struct FrailtyDraws {
    FrailtyScale scale = FrailtyScale::W;
    std::vector<Eigen::MatrixXd> draws;     // [subject], n_s x m on `scale`
    Eigen::VectorXd acceptance_rates;       // [subject]
    bool acceptance_warning = false;

    Eigen::MatrixXd e_w;                    // E(w_ij)
    Eigen::MatrixXd e_log_w;                // E(log w_ij)
    Eigen::MatrixXd e_b2;                   // E((log w_ij)^2)
    std::vector<Eigen::MatrixXd> e_scores;  // [subject], MC average of q q'

    int n_subjects() const { return static_cast<int>(draws.size()); }
    int n_s() const { return draws.empty() ? 0 : static_cast<int>(draws.front().rows()); }
    int n_types() const { return draws.empty() ? 0 : static_cast<int>(draws.front().cols()); }

    // Frailty-scale value of draw q for subject i (exponentiates on B scale).
    Eigen::VectorXd w_draw(int i, int q) const;
};

// Fills every expectation field from the stored draws; the margins are needed
// only for the normal-score outer products.
void summarize(FrailtyDraws& draws, std::span<const Marginal> margins);

}  // namespace copfrail
