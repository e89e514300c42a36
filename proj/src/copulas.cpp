#include "copfrail/copulas.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <string>

#include "copfrail/errors.hpp"
#include "copfrail/special.hpp"

namespace copfrail {

namespace {

constexpr double kClaytonIndependenceEps = 1e-6;
constexpr double kClaytonAlphaMax = 50.0;
constexpr double kUClamp = 1e-12;
constexpr double kMinEigenvalue = 1e-10;

void check_u(const Eigen::VectorXd& u) {
    for (Eigen::Index j = 0; j < u.size(); ++j) {
        if (!(u[j] > 0.0 && u[j] < 1.0)) {
            throw DomainError("copula density requires u in the open unit cube, got u[" + std::to_string(j) +
                              "] = " + std::to_string(u[j]));
        }
    }
}

// log(sum_j exp(alpha*a_j) - (m-1)) for a_j >= 0, stable for large alpha*a_j.
double log_clayton_t(double alpha, const Eigen::VectorXd& a) {
    const double big = alpha * a.maxCoeff();
    double s = 0.0;
    for (Eigen::Index j = 0; j < a.size(); ++j) s += std::exp(alpha * a[j] - big);
    s -= static_cast<double>(a.size() - 1) * std::exp(-big);
    return big + std::log(s);
}

}  // namespace

ClaytonParam::ClaytonParam(double a) : alpha_c(a) {
    if (!(a >= 0.0)) throw DomainError("Clayton copula requires alpha_c >= 0");
}

CorrelationMatrix::CorrelationMatrix(Eigen::MatrixXd R) : matrix_(std::move(R)) {
    const auto m = matrix_.rows();
    if (m != matrix_.cols() || m < 1) throw DomainError("correlation matrix must be square");
    for (Eigen::Index i = 0; i < m; ++i) {
        if (matrix_(i, i) != 1.0) throw DomainError("correlation matrix must have unit diagonal");
        for (Eigen::Index j = 0; j < i; ++j) {
            if (matrix_(i, j) != matrix_(j, i)) throw DomainError("correlation matrix must be symmetric");
        }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(matrix_);
    if (eig.eigenvalues().minCoeff() <= kMinEigenvalue) {
        throw DomainError("correlation matrix is not positive definite (min eigenvalue " +
                          std::to_string(eig.eigenvalues().minCoeff()) + ")");
    }
    Eigen::LLT<Eigen::MatrixXd> llt(matrix_);
    chol_ = llt.matrixL();
    inverse_ = llt.solve(Eigen::MatrixXd::Identity(m, m));
    log_det_ = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) log_det_ += 2.0 * std::log(chol_(i, i));
}

CorrelationMatrix CorrelationMatrix::identity(int m) {
    return CorrelationMatrix(Eigen::MatrixXd::Identity(m, m));
}

CorrelationMatrix CorrelationMatrix::exchangeable(int m, double rho) {
    Eigen::MatrixXd R = Eigen::MatrixXd::Constant(m, m, rho);
    R.diagonal().setOnes();
    return CorrelationMatrix(std::move(R));
}

CopulaFamily family_of(const Copula& c) {
    return std::holds_alternative<ClaytonParam>(c) ? CopulaFamily::Clayton : CopulaFamily::Gaussian;
}

Eigen::VectorXd normal_scores(const Eigen::VectorXd& u) {
    Eigen::VectorXd q(u.size());
    for (Eigen::Index j = 0; j < u.size(); ++j) {
        const double uj = std::clamp(u[j], kUClamp, 1.0 - kUClamp);
        q[j] = special::norm_quantile(uj);
    }
    return q;
}

double clayton_log_density(const ClaytonParam& p, const Eigen::VectorXd& u) {
    check_u(u);
    const double alpha = p.alpha_c;
    if (alpha < kClaytonIndependenceEps) return 0.0;
    const auto m = u.size();
    Eigen::VectorXd a = -u.array().log();
    double log_const = 0.0;
    for (Eigen::Index k = 1; k < m; ++k) log_const += std::log1p(static_cast<double>(k) * alpha);
    return log_const - (1.0 / alpha + static_cast<double>(m)) * log_clayton_t(alpha, a) + (alpha + 1.0) * a.sum();
}

double gaussian_log_density(const CorrelationMatrix& R, const Eigen::VectorXd& u) {
    check_u(u);
    if (u.size() != R.dim()) throw DomainError("u dimension does not match correlation matrix");
    const Eigen::VectorXd q = normal_scores(u);
    const double quad = q.dot((R.inverse() - Eigen::MatrixXd::Identity(R.dim(), R.dim())) * q);
    return -0.5 * R.log_det() - 0.5 * quad;
}

double copula_log_density(const Copula& c, const Eigen::VectorXd& u) {
    if (const auto* p = std::get_if<ClaytonParam>(&c)) return clayton_log_density(*p, u);
    return gaussian_log_density(std::get<CorrelationMatrix>(c), u);
}

Eigen::VectorXd copula_sample(const ClaytonParam& p, int m, Rng& rng) {
    Eigen::VectorXd u(m);
    if (p.alpha_c < kClaytonIndependenceEps) {
        for (int j = 0; j < m; ++j) u[j] = rng.uniform01();
        return u;
    }
    const double v = rng.gamma(1.0 / p.alpha_c, 1.0);
    for (int j = 0; j < m; ++j) {
        const double e = rng.exponential(1.0);
        u[j] = std::pow(1.0 + e / v, -1.0 / p.alpha_c);
    }
    return u;
}

Eigen::VectorXd copula_sample(const CorrelationMatrix& R, Rng& rng) {
    const int m = R.dim();
    Eigen::VectorXd z(m);
    for (int j = 0; j < m; ++j) z[j] = rng.normal();
    const Eigen::VectorXd corr = R.cholesky_factor() * z;
    Eigen::VectorXd u(m);
    for (int j = 0; j < m; ++j) u[j] = special::norm_cdf(corr[j]);
    return u;
}

Eigen::VectorXd copula_sample(const Copula& c, int m, Rng& rng) {
    if (const auto* p = std::get_if<ClaytonParam>(&c)) return copula_sample(*p, m, rng);
    return copula_sample(std::get<CorrelationMatrix>(c), rng);
}

double kendalls_tau(const ClaytonParam& p) { return p.alpha_c / (p.alpha_c + 2.0); }

Eigen::MatrixXd kendalls_tau(const CorrelationMatrix& R) {
    const int m = R.dim();
    Eigen::MatrixXd tau(m, m);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j) tau(i, j) = 2.0 / M_PI * std::asin(R.matrix()(i, j));
    }
    return tau;
}

namespace {

// Per-draw u values for one subject, clamped into the open cube.
Eigen::MatrixXd u_matrix(const Eigen::MatrixXd& draws, std::span<const Marginal> margins) {
    Eigen::MatrixXd u(draws.rows(), draws.cols());
    for (Eigen::Index j = 0; j < draws.cols(); ++j) {
        const Marginal& marg = margins[static_cast<std::size_t>(j)];
        for (Eigen::Index q = 0; q < draws.rows(); ++q) {
            u(q, j) = std::clamp(cdf(marg, draws(q, j)), kUClamp, 1.0 - kUClamp);
        }
    }
    return u;
}

// a = -log(u) per draw; sufficient input for Clayton Q3 at any alpha.
std::vector<Eigen::MatrixXd> neg_log_u(std::span<const Eigen::MatrixXd> draws, std::span<const Marginal> margins) {
    std::vector<Eigen::MatrixXd> a;
    a.reserve(draws.size());
    for (const auto& d : draws) a.push_back((-u_matrix(d, margins).array().log()).matrix());
    return a;
}

double q3_clayton_from_a(double alpha, const std::vector<Eigen::MatrixXd>& a) {
    const auto n = static_cast<double>(a.size());
    const auto m = a.front().cols();
    double total = 0.0;
    for (const auto& ai : a) {
        const auto n_s = ai.rows();
        double mean_log_t = 0.0;
        for (Eigen::Index q = 0; q < n_s; ++q) {
            mean_log_t += log_clayton_t(alpha, ai.row(q).transpose());
        }
        mean_log_t /= static_cast<double>(n_s);
        const double mean_sum_a = ai.sum() / static_cast<double>(n_s);
        total += -(1.0 / alpha + static_cast<double>(m)) * mean_log_t + (alpha + 1.0) * mean_sum_a;
    }
    double log_const = 0.0;
    for (Eigen::Index k = 1; k < m; ++k) log_const += std::log1p(static_cast<double>(k) * alpha);
    return total + n * log_const;
}

// Sum over subjects of the Monte Carlo average score outer products q q'.
Eigen::MatrixXd score_outer_sum(std::span<const Eigen::MatrixXd> draws, std::span<const Marginal> margins) {
    const auto m = draws.front().cols();
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(m, m);
    for (const auto& d : draws) {
        const Eigen::MatrixXd u = u_matrix(d, margins);
        Eigen::MatrixXd q(u.rows(), u.cols());
        for (Eigen::Index c = 0; c < u.cols(); ++c) {
            for (Eigen::Index r = 0; r < u.rows(); ++r) q(r, c) = special::norm_quantile(u(r, c));
        }
        s += q.transpose() * q / static_cast<double>(u.rows());
    }
    return s;
}

// Q3 for the Gaussian copula given the accumulated score outer products.
double q3_gaussian_from_s(const Eigen::MatrixXd& R_inv, double log_det, double n, const Eigen::MatrixXd& s) {
    const auto m = s.rows();
    return -0.5 * n * log_det - 0.5 * ((R_inv - Eigen::MatrixXd::Identity(m, m)) * s).trace();
}

struct GoldenResult {
    double x;
    double fx;
};

// Golden-section maximization on [lo, hi] for a unimodal objective.
GoldenResult golden_section(double lo, double hi, const std::function<double(double)>& f, int iters) {
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
    double f1 = f(x1), f2 = f(x2);
    for (int it = 0; it < iters; ++it) {
        if (f1 < f2) {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + gr * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - gr * (b - a);
            f1 = f(x1);
        }
    }
    const double x = 0.5 * (a + b);
    return {x, f(x)};
}

}  // namespace

double q3_clayton(double alpha_c, std::span<const Eigen::MatrixXd> draws, std::span<const Marginal> margins) {
    if (!(alpha_c > 0.0)) throw DomainError("q3_clayton requires alpha_c > 0");
    return q3_clayton_from_a(alpha_c, neg_log_u(draws, margins));
}

double q3_gaussian(const CorrelationMatrix& R, std::span<const Eigen::MatrixXd> draws,
                   std::span<const Marginal> margins) {
    const Eigen::MatrixXd s = score_outer_sum(draws, margins);
    return q3_gaussian_from_s(R.inverse(), R.log_det(), static_cast<double>(draws.size()), s);
}

namespace {

Copula maximize_q3_clayton(std::span<const Eigen::MatrixXd> draws, std::span<const Marginal> margins,
                           Q3MaximizeInfo* info) {
    const auto a = neg_log_u(draws, margins);
    auto f = [&](double alpha) { return q3_clayton_from_a(std::max(alpha, kClaytonIndependenceEps), a); };

    // Coarse geometric scan to bracket the optimum, then golden section.
    double best_x = kClaytonIndependenceEps;
    double best_f = f(best_x);
    std::vector<double> grid;
    for (double x = 0.01; x < kClaytonAlphaMax; x *= 1.6) grid.push_back(x);
    grid.push_back(kClaytonAlphaMax);
    double prev = kClaytonIndependenceEps;
    double lo = kClaytonIndependenceEps, hi = kClaytonAlphaMax;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        const double fx = f(grid[g]);
        if (fx > best_f) {
            best_f = fx;
            best_x = grid[g];
            lo = prev;
            hi = g + 1 < grid.size() ? grid[g + 1] : kClaytonAlphaMax;
        }
        prev = grid[g];
    }
    auto res = golden_section(lo, hi, f, 80);
    if (res.fx < best_f) res = {best_x, best_f};

    // Newton polish on the interior.
    double x = res.x;
    for (int it = 0; it < 20 && x > 1e-3 && x < kClaytonAlphaMax - 1e-6; ++it) {
        const double h = std::max(1e-6, 1e-5 * x);
        const double fp = (f(x + h) - f(x - h)) / (2.0 * h);
        const double fpp = (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
        if (!(fpp < 0.0)) break;
        const double step = fp / fpp;
        const double x_new = std::clamp(x - step, kClaytonIndependenceEps, kClaytonAlphaMax);
        if (std::abs(x_new - x) < 1e-10) {
            x = x_new;
            break;
        }
        if (f(x_new) < f(x)) break;
        x = x_new;
    }

    if (info && x >= kClaytonAlphaMax - 1e-6) info->hit_cap = true;
    if (x < 1e-4) x = 0.0;
    return ClaytonParam(x);
}

Copula maximize_q3_gaussian(std::span<const Eigen::MatrixXd> draws, std::span<const Marginal> margins,
                            const Copula& init, Q3MaximizeInfo* info) {
    const Eigen::MatrixXd s = score_outer_sum(draws, margins);
    const auto n = static_cast<double>(draws.size());
    const auto m = s.rows();

    Eigen::MatrixXd R = std::holds_alternative<CorrelationMatrix>(init)
                            ? std::get<CorrelationMatrix>(init).matrix()
                            : Eigen::MatrixXd::Identity(m, m);

    auto objective = [&](const Eigen::MatrixXd& cand) {
        Eigen::LLT<Eigen::MatrixXd> llt(cand);
        if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
        double log_det = 0.0;
        const Eigen::MatrixXd l = llt.matrixL();
        for (Eigen::Index i = 0; i < m; ++i) log_det += 2.0 * std::log(l(i, i));
        const Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(m, m));
        return q3_gaussian_from_s(inv, log_det, n, s);
    };

    const double z_max = std::atanh(0.999);
    for (int sweep = 0; sweep < 60; ++sweep) {
        double max_change = 0.0;
        for (Eigen::Index j = 0; j < m; ++j) {
            for (Eigen::Index k = j + 1; k < m; ++k) {
                auto coord = [&](double z) {
                    Eigen::MatrixXd cand = R;
                    cand(j, k) = cand(k, j) = std::tanh(z);
                    return objective(cand);
                };
                const auto res = golden_section(-z_max, z_max, coord, 60);
                const double rho = std::tanh(res.x);
                max_change = std::max(max_change, std::abs(rho - R(j, k)));
                R(j, k) = R(k, j) = rho;
            }
        }
        if (max_change < 1e-8) break;
    }

    // Positive-definiteness projection (eigenvalue clip, unit-diagonal rescale).
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(R);
    if (eig.eigenvalues().minCoeff() <= kMinEigenvalue) {
        const Eigen::VectorXd clipped = eig.eigenvalues().cwiseMax(1e-8);
        Eigen::MatrixXd proj = eig.eigenvectors() * clipped.asDiagonal() * eig.eigenvectors().transpose();
        const Eigen::VectorXd d = proj.diagonal().cwiseSqrt().cwiseInverse();
        R = d.asDiagonal() * proj * d.asDiagonal();
        R.diagonal().setOnes();
        R = 0.5 * (R + R.transpose()).eval();
        if (info) info->pd_projected = true;
    }
    return CorrelationMatrix(R);
}

}  // namespace

Copula maximize_q3(CopulaFamily family, std::span<const Eigen::MatrixXd> draws, std::span<const Marginal> margins,
                   const Copula& init, Q3MaximizeInfo* info) {
    if (draws.empty()) throw DomainError("maximize_q3 requires at least one subject");
    const auto m = draws.front().cols();
    if (m == 1) {
        // No dependence parameters in one dimension.
        if (family == CopulaFamily::Clayton) return ClaytonParam(0.0);
        return CorrelationMatrix::identity(1);
    }
    if (family == CopulaFamily::Clayton) return maximize_q3_clayton(draws, margins, info);
    return maximize_q3_gaussian(draws, margins, init, info);
}

}  // namespace copfrail
