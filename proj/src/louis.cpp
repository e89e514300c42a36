#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "copfrail/mcem.hpp"
#include "copfrail/parallel.hpp"
#include "copfrail/special.hpp"

namespace copfrail {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

struct FastMargin {
    bool is_gamma = true;
    double shape = 1.0, scale = 1.0, log_norm = 0.0;  // gamma
    double var = 1.0, log_norm_gauss = 0.0;           // gaussian

    static FastMargin make(MarginalFamily family, double alpha) {
        FastMargin fm;
        if (family == MarginalFamily::Gamma) {
            fm.is_gamma = true;
            fm.shape = 1.0 / alpha;
            fm.scale = alpha;
            fm.log_norm = -std::lgamma(fm.shape) - fm.shape * std::log(alpha);
        } else {
            fm.is_gamma = false;
            fm.var = alpha;
            fm.log_norm_gauss = -0.5 * (1.8378770664093454836 + std::log(alpha));
        }
        return fm;
    }

    double log_pdf(double x) const {
        if (is_gamma) return (shape - 1.0) * std::log(x) - x / scale + log_norm;
        return log_norm_gauss - x * x / (2.0 * var);
    }

    double cdf_u(double x) const {
        const double u = is_gamma ? special::gamma_cdf(x, shape, scale) : special::norm_cdf(x / std::sqrt(var));
        return std::clamp(u, 1e-12, 1.0 - 1e-12);
    }
};

struct FastCopula {
    bool clayton = true;
    bool indep = true;
    double alpha_c = 0.0;
    double log_const = 0.0;         // Clayton: sum log(1 + k alpha)
    Eigen::MatrixXd inv_minus_id;   // Gaussian: R^-1 - I
    double log_det = 0.0;

    static FastCopula make(const Copula& c, int m) {
        FastCopula fc;
        if (const auto* p = std::get_if<ClaytonParam>(&c)) {
            fc.clayton = true;
            fc.alpha_c = p->alpha_c;
            fc.indep = p->alpha_c < 1e-6 || m == 1;
            fc.log_const = 0.0;
            for (int k = 1; k < m; ++k) fc.log_const += std::log1p(k * p->alpha_c);
        } else {
            const auto& R = std::get<CorrelationMatrix>(c);
            fc.clayton = false;
            fc.indep = R.matrix().isIdentity(0.0);
            fc.inv_minus_id = R.inverse() - Eigen::MatrixXd::Identity(m, m);
            fc.log_det = R.log_det();
        }
        return fc;
    }

    double log_density(const Eigen::VectorXd& u) const {
        if (indep) return 0.0;
        const auto m = u.size();
        if (clayton) {
            Eigen::VectorXd a = -u.array().log();
            const double big = alpha_c * a.maxCoeff();
            double s = 0.0;
            for (Eigen::Index j = 0; j < m; ++j) s += std::exp(alpha_c * a[j] - big);
            s -= static_cast<double>(m - 1) * std::exp(-big);
            const double log_t = big + std::log(s);
            return log_const - (1.0 / alpha_c + static_cast<double>(m)) * log_t + (alpha_c + 1.0) * a.sum();
        }
        Eigen::VectorXd q(m);
        for (Eigen::Index j = 0; j < m; ++j) q[j] = special::norm_quantile(u[j]);
        return -0.5 * log_det - 0.5 * q.dot(inv_minus_id * q);
    }
};

// Finite-difference machinery over the alpha block (marginal variances plus
// copula coordinates) of log g(w_i | alpha). Every required offset point is
// prepared once; per-draw work is plain density evaluation.
class AlphaBlockFd {
public:
    AlphaBlockFd(const ParameterVector& params, int m) : m_(m), family_(params.marginal_family) {
        clayton_ = std::holds_alternative<ClaytonParam>(params.copula);
        n_copula_ = clayton_ ? (m_ > 1 ? 1 : 0) : m_ * (m_ - 1) / 2;
        dim_ = m_ + n_copula_;
        center_.resize(dim_);
        for (int j = 0; j < m_; ++j) center_[j] = params.marginal_alphas[static_cast<std::size_t>(j)];
        if (clayton_) {
            if (n_copula_ == 1) center_[m_] = std::get<ClaytonParam>(params.copula).alpha_c;
        } else {
            const auto& R = std::get<CorrelationMatrix>(params.copula).matrix();
            int idx = m_;
            for (int j = 0; j < m_; ++j) {
                for (int k = j + 1; k < m_; ++k) center_[idx++] = R(j, k);
            }
        }
        build_grid();
    }

    int dim() const { return dim_; }
    bool valid() const { return valid_; }

    // Adds the FD gradient into grad and the FD Hessian into hess for one
    // model-scale frailty value.
    void accumulate(const Eigen::VectorXd& x, Eigen::VectorXd& grad, Eigen::MatrixXd& hess,
                    std::vector<double>& phi_buf) const {
        for (std::size_t t = 0; t < points_.size(); ++t) phi_buf[t] = phi(points_[t], x);
        for (int k = 0; k < dim_; ++k) {
            const auto& sch = coord_[static_cast<std::size_t>(k)];
            if (sch.central) {
                grad[k] += (phi_buf[sch.plus] - phi_buf[sch.minus]) / (2.0 * sch.h);
                hess(k, k) += (phi_buf[sch.plus] - 2.0 * phi_buf[0] + phi_buf[sch.minus]) / (sch.h * sch.h);
            } else {
                grad[k] += (-3.0 * phi_buf[0] + 4.0 * phi_buf[sch.plus] - phi_buf[sch.plus2]) / (2.0 * sch.h);
                hess(k, k) += (phi_buf[0] - 2.0 * phi_buf[sch.plus] + phi_buf[sch.plus2]) / (sch.h * sch.h);
            }
        }
        for (const auto& pr : pairs_) {
            const double v = (phi_buf[pr.pp] - phi_buf[pr.pm] - phi_buf[pr.mp] + phi_buf[pr.mm]) / pr.denom;
            hess(pr.k, pr.l) += v;
            hess(pr.l, pr.k) += v;
        }
    }

    std::size_t n_points() const { return points_.size(); }

private:
    struct Point {
        std::vector<FastMargin> margins;
        FastCopula copula;
    };
    struct CoordScheme {
        bool central = true;
        double h = 0.0;
        int plus = 0, minus = 0, plus2 = 0;
    };
    struct PairScheme {
        int k, l;
        int pp, pm, mp, mm;
        double denom;
    };

    double phi(const Point& pt, const Eigen::VectorXd& x) const {
        double v = 0.0;
        Eigen::VectorXd u(m_);
        const bool need_u = !pt.copula.indep;
        for (int j = 0; j < m_; ++j) {
            v += pt.margins[static_cast<std::size_t>(j)].log_pdf(x[j]);
            if (need_u) u[j] = pt.margins[static_cast<std::size_t>(j)].cdf_u(x[j]);
        }
        if (need_u) v += pt.copula.log_density(u);
        return v;
    }

    bool try_make_point(const Eigen::VectorXd& a, Point& out) const {
        out.margins.clear();
        out.margins.reserve(static_cast<std::size_t>(m_));
        for (int j = 0; j < m_; ++j) {
            if (!(a[j] > 0.0)) return false;
            out.margins.push_back(FastMargin::make(family_, a[j]));
        }
        if (clayton_) {
            const double ac = n_copula_ == 1 ? a[m_] : 0.0;
            if (ac < 0.0) return false;
            out.copula = FastCopula::make(ClaytonParam(ac), m_);
        } else {
            Eigen::MatrixXd R = Eigen::MatrixXd::Identity(m_, m_);
            int idx = m_;
            for (int j = 0; j < m_; ++j) {
                for (int k = j + 1; k < m_; ++k) {
                    R(j, k) = R(k, j) = a[idx++];
                }
            }
            try {
                out.copula = FastCopula::make(CorrelationMatrix(R), m_);
            } catch (const DomainError&) {
                return false;
            }
        }
        return true;
    }

    int point_index(std::vector<int> key, const Eigen::VectorXd& offsets) {
        auto it = point_ids_.find(key);
        if (it != point_ids_.end()) return it->second;
        Point pt;
        if (!try_make_point(center_ + offsets, pt)) return -1;
        points_.push_back(std::move(pt));
        const int id = static_cast<int>(points_.size()) - 1;
        point_ids_.emplace(std::move(key), id);
        return id;
    }

    void build_grid() {
        for (double shrink : {1.0, 0.25, 0.0625}) {
            points_.clear();
            point_ids_.clear();
            coord_.assign(static_cast<std::size_t>(dim_), {});
            pairs_.clear();
            if (build_grid_once(shrink)) {
                valid_ = true;
                return;
            }
        }
        valid_ = false;
    }

    bool build_grid_once(double shrink) {
        Point centre;
        if (!try_make_point(center_, centre)) return false;
        points_.push_back(std::move(centre));
        point_ids_.emplace(std::vector<int>(static_cast<std::size_t>(dim_), 0), 0);

        std::vector<double> h(static_cast<std::size_t>(dim_));
        std::vector<bool> central(static_cast<std::size_t>(dim_));
        for (int k = 0; k < dim_; ++k) {
            const double a = center_[k];
            const bool is_clayton_coord = clayton_ && k >= m_;
            const bool is_rho = !clayton_ && k >= m_;
            double hk = 1e-3 * std::max(std::abs(a), 0.1) * shrink;
            bool cen = true;
            if (is_rho) {
                hk = std::min(hk, 0.5 * (0.9995 - std::abs(a)));
                hk = std::max(hk, 1e-7);
            } else if (is_clayton_coord) {
                if (a < 0.03) {
                    cen = false;
                    hk = std::max(0.005, a);
                }
            } else {
                if (a - hk <= 1e-8) cen = false;
            }
            h[static_cast<std::size_t>(k)] = hk;
            central[static_cast<std::size_t>(k)] = cen;
        }

        auto offset_key = [&](int k, int steps_k, int l, int steps_l) {
            std::vector<int> key(static_cast<std::size_t>(dim_), 0);
            key[static_cast<std::size_t>(k)] = steps_k;
            if (l >= 0) key[static_cast<std::size_t>(l)] = steps_l;
            return key;
        };
        auto offset_vec = [&](int k, int steps_k, int l, int steps_l) {
            Eigen::VectorXd v = Eigen::VectorXd::Zero(dim_);
            v[k] = steps_k * h[static_cast<std::size_t>(k)];
            if (l >= 0) v[l] = steps_l * h[static_cast<std::size_t>(l)];
            return v;
        };

        for (int k = 0; k < dim_; ++k) {
            CoordScheme sch;
            sch.central = central[static_cast<std::size_t>(k)];
            sch.h = h[static_cast<std::size_t>(k)];
            sch.plus = point_index(offset_key(k, 1, -1, 0), offset_vec(k, 1, -1, 0));
            if (sch.central) {
                sch.minus = point_index(offset_key(k, -1, -1, 0), offset_vec(k, -1, -1, 0));
                if (sch.plus < 0 || sch.minus < 0) return false;
            } else {
                sch.plus2 = point_index(offset_key(k, 2, -1, 0), offset_vec(k, 2, -1, 0));
                if (sch.plus < 0 || sch.plus2 < 0) return false;
            }
            coord_[static_cast<std::size_t>(k)] = sch;
        }

        for (int k = 0; k < dim_; ++k) {
            for (int l = k + 1; l < dim_; ++l) {
                PairScheme pr;
                pr.k = k;
                pr.l = l;
                const bool ck = central[static_cast<std::size_t>(k)];
                const bool cl = central[static_cast<std::size_t>(l)];
                const double hk = h[static_cast<std::size_t>(k)];
                const double hl = h[static_cast<std::size_t>(l)];
                const int sk_lo = ck ? -1 : 0;  // low step used in the difference
                const int sl_lo = cl ? -1 : 0;
                pr.pp = point_index(offset_key(k, 1, l, 1), offset_vec(k, 1, l, 1));
                pr.pm = point_index(offset_key(k, 1, l, sl_lo), offset_vec(k, 1, l, sl_lo));
                pr.mp = point_index(offset_key(k, sk_lo, l, 1), offset_vec(k, sk_lo, l, 1));
                pr.mm = point_index(offset_key(k, sk_lo, l, sl_lo), offset_vec(k, sk_lo, l, sl_lo));
                if (pr.pp < 0 || pr.pm < 0 || pr.mp < 0 || pr.mm < 0) return false;
                pr.denom = ((ck ? 2.0 : 1.0) * hk) * ((cl ? 2.0 : 1.0) * hl);
                pairs_.push_back(pr);
            }
        }
        return true;
    }

    int m_;
    MarginalFamily family_;
    bool clayton_ = true;
    int n_copula_ = 0;
    int dim_ = 0;
    Eigen::VectorXd center_;
    std::vector<Point> points_;
    std::map<std::vector<int>, int> point_ids_;
    std::vector<CoordScheme> coord_;
    std::vector<PairScheme> pairs_;
    bool valid_ = false;
};

}  // namespace

LouisResult louis_information(const ParameterVector& params, const FrailtyDraws& draws, const Dataset& d,
                              const RiskSetIndex& risk, int threads) {
    const int n = d.n_subjects();
    const int m = d.n_types();
    const int p = d.n_covariates;
    const int n_s = draws.n_s();
    const int n_monitored = static_cast<int>(
        monitored_names(m, p, std::holds_alternative<ClaytonParam>(params.copula) ? CopulaFamily::Clayton
                                                                                  : CopulaFamily::Gaussian)
            .size());

    LouisResult result;
    result.std_errors = Eigen::VectorXd::Constant(n_monitored, kNan);

    AlphaBlockFd fd(params, m);
    if (!fd.valid()) {
        result.note = "alpha-block differentiation failed near a parameter boundary; SEs withheld";
        return result;
    }
    const int d_alpha = fd.dim();

    // Active beta blocks: types with at least one observed event.
    std::vector<bool> beta_active(static_cast<std::size_t>(m));
    std::vector<int> beta_offset(static_cast<std::size_t>(m), -1);
    int d_beta = 0;
    for (int j = 0; j < m; ++j) {
        beta_active[static_cast<std::size_t>(j)] = !d.distinct_times[static_cast<std::size_t>(j)].empty() && p > 0;
        if (beta_active[static_cast<std::size_t>(j)]) {
            beta_offset[static_cast<std::size_t>(j)] = d_beta;
            d_beta += p;
        }
    }
    const int d_a = d_beta + d_alpha;

    std::vector<int> jump_offset(static_cast<std::size_t>(m), 0);
    int d_b = 0;
    for (int j = 0; j < m; ++j) {
        jump_offset[static_cast<std::size_t>(j)] = d_a + d_b;
        d_b += static_cast<int>(d.distinct_times[static_cast<std::size_t>(j)].size());
    }
    const int dim = d_a + d_b;

    // Per-subject constants.
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, std::max(p, 1));
    Eigen::MatrixXd exb(n, m), lam(n, m), c_rate(n, m), n_events(n, m);
    for (int i = 0; i < n; ++i) {
        const auto& subj = d.subjects[static_cast<std::size_t>(i)];
        if (p > 0) x.row(i).head(p) = subj.covariates.transpose();
        for (int j = 0; j < m; ++j) {
            exb(i, j) = std::exp(subj.covariates.dot(params.beta[static_cast<std::size_t>(j)]));
            lam(i, j) = params.baseline[static_cast<std::size_t>(j)].cum_at(subj.censoring_time);
            c_rate(i, j) = lam(i, j) * exb(i, j);
            n_events(i, j) = subj.n_events(j);
        }
    }

    // Expected complete-data Hessian, deterministic blocks.
    Eigen::MatrixXd neg_h = Eigen::MatrixXd::Zero(dim, dim);
    for (int j = 0; j < m; ++j) {
        if (beta_active[static_cast<std::size_t>(j)]) {
            const int off = beta_offset[static_cast<std::size_t>(j)];
            Eigen::MatrixXd blk = Eigen::MatrixXd::Zero(p, p);
            for (int i = 0; i < n; ++i) {
                blk += c_rate(i, j) * draws.e_w(i, j) * x.row(i).head(p).transpose() * x.row(i).head(p);
            }
            neg_h.block(off, off, p, p) = blk;
        }
        // beta-jump cross terms via one risk sweep.
        const auto& sizes = risk.risk_set_sizes[static_cast<std::size_t>(j)];
        const int k_j = static_cast<int>(sizes.size());
        if (k_j == 0) continue;
        const auto& ties = d.tie_counts[static_cast<std::size_t>(j)];
        const auto& jumps = params.baseline[static_cast<std::size_t>(j)].jumps;
        Eigen::VectorXd s_vec = Eigen::VectorXd::Zero(std::max(p, 1));
        int idx = 0;
        for (int l = k_j - 1; l >= 0; --l) {
            for (; idx < sizes[static_cast<std::size_t>(l)]; ++idx) {
                const int i = risk.by_tau_desc[static_cast<std::size_t>(idx)];
                if (p > 0) s_vec.head(p) += draws.e_w(i, j) * exb(i, j) * x.row(i).head(p).transpose();
            }
            const int col = jump_offset[static_cast<std::size_t>(j)] + l;
            if (beta_active[static_cast<std::size_t>(j)]) {
                neg_h.block(beta_offset[static_cast<std::size_t>(j)], col, p, 1) = s_vec.head(p);
                neg_h.block(col, beta_offset[static_cast<std::size_t>(j)], 1, p) = s_vec.head(p).transpose();
            }
            const double lj = jumps[static_cast<std::size_t>(l)];
            neg_h(col, col) = ties[static_cast<std::size_t>(l)] / (lj * lj);
        }
    }

    // Per-draw pass: one score row and one alpha-block Hessian per retained
    // draw, computed in parallel, then reduced in draw order.
    Eigen::MatrixXd score_rows(n_s, dim);
    Eigen::MatrixXd alpha_hess_rows(n_s, d_alpha * d_alpha);
    parallel_for(static_cast<std::size_t>(n_s), threads, [&](std::size_t qs) {
        const int q = static_cast<int>(qs);
        Eigen::VectorXd score = Eigen::VectorXd::Zero(dim);
        Eigen::VectorXd grad_i(d_alpha);
        Eigen::MatrixXd hess_i(d_alpha, d_alpha);
        Eigen::MatrixXd hess_sum = Eigen::MatrixXd::Zero(d_alpha, d_alpha);
        std::vector<double> phi_buf(fd.n_points());
        for (int i = 0; i < n; ++i) {
            const Eigen::VectorXd w = draws.w_draw(i, q);
            for (int j = 0; j < m; ++j) {
                if (beta_active[static_cast<std::size_t>(j)]) {
                    score.segment(beta_offset[static_cast<std::size_t>(j)], p) +=
                        (n_events(i, j) - c_rate(i, j) * w[j]) * x.row(i).head(p).transpose();
                }
            }
            grad_i.setZero();
            hess_i.setZero();
            const Eigen::VectorXd model_scale =
                draws.scale == FrailtyScale::W ? w : draws.draws[static_cast<std::size_t>(i)].row(q).transpose();
            fd.accumulate(model_scale, grad_i, hess_i, phi_buf);
            score.segment(d_beta, d_alpha) += grad_i;
            hess_sum += hess_i;
        }
        // Jump scores via risk sweeps with the draw-q frailties.
        for (int j = 0; j < m; ++j) {
            const auto& sizes = risk.risk_set_sizes[static_cast<std::size_t>(j)];
            const int k_j = static_cast<int>(sizes.size());
            if (k_j == 0) continue;
            const auto& ties = d.tie_counts[static_cast<std::size_t>(j)];
            const auto& jumps = params.baseline[static_cast<std::size_t>(j)].jumps;
            double s0 = 0.0;
            int idx = 0;
            for (int l = k_j - 1; l >= 0; --l) {
                for (; idx < sizes[static_cast<std::size_t>(l)]; ++idx) {
                    const int i = risk.by_tau_desc[static_cast<std::size_t>(idx)];
                    const double w_ij = draws.scale == FrailtyScale::W
                                            ? draws.draws[static_cast<std::size_t>(i)](q, j)
                                            : std::exp(draws.draws[static_cast<std::size_t>(i)](q, j));
                    s0 += w_ij * exb(i, j);
                }
                score[jump_offset[static_cast<std::size_t>(j)] + l] =
                    ties[static_cast<std::size_t>(l)] / jumps[static_cast<std::size_t>(l)] - s0;
            }
        }
        score_rows.row(q) = score.transpose();
        alpha_hess_rows.row(q) = Eigen::Map<const Eigen::VectorXd>(hess_sum.data(), d_alpha * d_alpha).transpose();
    });

    Eigen::MatrixXd m2 = Eigen::MatrixXd::Zero(dim, dim);
    m2.selfadjointView<Eigen::Lower>().rankUpdate(score_rows.transpose());
    m2 = m2.selfadjointView<Eigen::Lower>();
    const Eigen::VectorXd score_sum = score_rows.colwise().sum().transpose();
    const Eigen::VectorXd hess_flat = alpha_hess_rows.colwise().sum().transpose();
    const Eigen::MatrixXd alpha_hess_sum =
        Eigen::Map<const Eigen::MatrixXd>(hess_flat.data(), d_alpha, d_alpha);

    neg_h.block(d_beta, d_beta, d_alpha, d_alpha) = -alpha_hess_sum / static_cast<double>(n_s);

    Eigen::MatrixXd info = neg_h - m2 / static_cast<double>(n_s);
    result.mean_score = score_sum / static_cast<double>(n_s);
    result.mean_score_norm = result.mean_score.norm();

    // Profile out the baseline jumps by Schur complement.
    Eigen::MatrixXd info_a = info.topLeftCorner(d_a, d_a);
    if (d_b > 0) {
        Eigen::LDLT<Eigen::MatrixXd> ldlt(info.bottomRightCorner(d_b, d_b));
        if (ldlt.info() != Eigen::Success) {
            result.note = "baseline-jump information block is singular; SEs withheld";
            return result;
        }
        const Eigen::MatrixXd solved = ldlt.solve(info.bottomLeftCorner(d_b, d_a));
        info_a -= info.topRightCorner(d_a, d_b) * solved;
        if (!info_a.allFinite()) {
            result.note = "Schur complement produced non-finite values; SEs withheld";
            return result;
        }
    }
    result.information = info_a;

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (info_a + info_a.transpose()));
    if (eig.eigenvalues().minCoeff() <= 0.0) {
        result.note = "profiled information is not positive definite; SEs withheld";
        return result;
    }
    const Eigen::MatrixXd cov = info_a.ldlt().solve(Eigen::MatrixXd::Identity(d_a, d_a));

    // Map active-coordinate SEs back to the monitored layout.
    const int monitored_beta = m * p;
    for (int j = 0; j < m; ++j) {
        if (!beta_active[static_cast<std::size_t>(j)]) continue;
        for (int k = 0; k < p; ++k) {
            result.std_errors[j * p + k] =
                std::sqrt(std::max(0.0, cov(beta_offset[static_cast<std::size_t>(j)] + k,
                                            beta_offset[static_cast<std::size_t>(j)] + k)));
        }
    }
    for (int k = 0; k < d_alpha; ++k) {
        result.std_errors[monitored_beta + k] = std::sqrt(std::max(0.0, cov(d_beta + k, d_beta + k)));
    }
    result.positive_definite = true;
    return result;
}

}  // namespace copfrail
