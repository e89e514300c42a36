#pragma once

#include <Eigen/Core>
#include <span>
#include <variant>
#include <vector>

#include "copfrail/marginals.hpp"
#include "copfrail/rng.hpp"

namespace copfrail {

// Clayton dependence parameter; alpha_c = 0 is independence.
struct ClaytonParam {
    double alpha_c;

    explicit ClaytonParam(double a);
};

// Unit-diagonal symmetric positive-definite correlation matrix. Inverse,
// log-determinant, and Cholesky factor are cached at construction, so
// instances are cheap to evaluate against repeatedly.
class CorrelationMatrix {
public:
    explicit CorrelationMatrix(Eigen::MatrixXd R);
    static CorrelationMatrix identity(int m);
    static CorrelationMatrix exchangeable(int m, double rho);

    int dim() const { return static_cast<int>(matrix_.rows()); }
    const Eigen::MatrixXd& matrix() const { return matrix_; }
    const Eigen::MatrixXd& inverse() const { return inverse_; }
    double log_det() const { return log_det_; }
    const Eigen::MatrixXd& cholesky_factor() const { return chol_; }

private:
    Eigen::MatrixXd matrix_, inverse_, chol_;
    double log_det_ = 0.0;
};

using Copula = std::variant<ClaytonParam, CorrelationMatrix>;

enum class CopulaFamily { Clayton, Gaussian };

CopulaFamily family_of(const Copula& c);

// Normal scores q_j = Phi^{-1}(u_j), with u clamped away from {0,1} by 1e-12.
Eigen::VectorXd normal_scores(const Eigen::VectorXd& u);

// log copula densities at u in (0,1)^m. Clayton switches to the independence
// limit (0) below alpha_c = 1e-6.
double clayton_log_density(const ClaytonParam& p, const Eigen::VectorXd& u);
double gaussian_log_density(const CorrelationMatrix& R, const Eigen::VectorXd& u);
double copula_log_density(const Copula& c, const Eigen::VectorXd& u);

// Draws a uniform-margin vector from the copula. Clayton uses the
// Marshall-Olkin gamma-mixture construction, Gaussian a Cholesky transform.
Eigen::VectorXd copula_sample(const ClaytonParam& p, int m, Rng& rng);
Eigen::VectorXd copula_sample(const CorrelationMatrix& R, Rng& rng);
Eigen::VectorXd copula_sample(const Copula& c, int m, Rng& rng);

// Kendall's tau: alpha_c/(alpha_c+2) for Clayton; pairwise (2/pi) asin(rho_jk)
// for the Gaussian copula.
double kendalls_tau(const ClaytonParam& p);
Eigen::MatrixXd kendalls_tau(const CorrelationMatrix& R);

// Monte Carlo estimates of the expected copula log-likelihood Q3. draws[i] is
// the subject-i retained sample (n_s x m) on the marginal modeling scale;
// margins map each column to the uniform scale.
double q3_clayton(double alpha_c, std::span<const Eigen::MatrixXd> draws, std::span<const Marginal> margins);
double q3_gaussian(const CorrelationMatrix& R, std::span<const Eigen::MatrixXd> draws,
                   std::span<const Marginal> margins);

struct Q3MaximizeInfo {
    bool hit_cap = false;       // Clayton search capped at alpha_max
    bool pd_projected = false;  // Gaussian estimate needed an eigenvalue projection
};

// Stage-2 update: maximizes Q3 with the margins held fixed. Clayton is a 1-D
// search on [0, 50] (golden section plus Newton polish; estimates below 1e-4
// report as exact independence). Gaussian runs coordinate ascent over the
// pairwise correlations through Fisher-z, with a final PD projection.
Copula maximize_q3(CopulaFamily family, std::span<const Eigen::MatrixXd> draws, std::span<const Marginal> margins,
                   const Copula& init, Q3MaximizeInfo* info = nullptr);

}  // namespace copfrail
