#include "support/oracles.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace oracles {

namespace {

// Merge-sort inversion count for Knight's algorithm.
long long count_inversions(std::vector<double>& v, std::vector<double>& buf, std::size_t lo, std::size_t hi) {
    if (hi - lo < 2) return 0;
    const std::size_t mid = (lo + hi) / 2;
    long long inv = count_inversions(v, buf, lo, mid) + count_inversions(v, buf, mid, hi);
    std::size_t a = lo, b = mid, out = lo;
    while (a < mid && b < hi) {
        if (v[b] < v[a]) {
            inv += static_cast<long long>(mid - a);
            buf[out++] = v[b++];
        } else {
            buf[out++] = v[a++];
        }
    }
    while (a < mid) buf[out++] = v[a++];
    while (b < hi) buf[out++] = v[b++];
    std::copy(buf.begin() + static_cast<long>(lo), buf.begin() + static_cast<long>(hi),
              v.begin() + static_cast<long>(lo));
    return inv;
}

template <typename F>
long long tied_pairs(std::vector<double> v, F key) {
    std::sort(v.begin(), v.end());
    long long ties = 0;
    std::size_t run = 1;
    for (std::size_t i = 1; i <= v.size(); ++i) {
        if (i < v.size() && key(v[i]) == key(v[i - 1])) {
            ++run;
        } else {
            ties += static_cast<long long>(run) * (run - 1) / 2;
            run = 1;
        }
    }
    return ties;
}

}  // namespace

double empirical_kendall_tau(std::vector<double> x, std::vector<double> y) {
    const std::size_t n = x.size();
    if (y.size() != n || n < 2) throw std::invalid_argument("kendall tau needs two equal-length samples");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (x[a] != x[b]) return x[a] < x[b];
        return y[a] < y[b];
    });
    std::vector<double> y_sorted(n);
    for (std::size_t i = 0; i < n; ++i) y_sorted[i] = y[order[i]];

    const auto total = static_cast<long long>(n) * (n - 1) / 2;
    const long long ties_x = tied_pairs(x, [](double v) { return v; });
    const long long ties_y = tied_pairs(y, [](double v) { return v; });
    long long ties_xy = 0;
    {
        std::vector<std::pair<double, double>> pairs(n);
        for (std::size_t i = 0; i < n; ++i) pairs[i] = {x[i], y[i]};
        std::sort(pairs.begin(), pairs.end());
        std::size_t run = 1;
        for (std::size_t i = 1; i <= n; ++i) {
            if (i < n && pairs[i] == pairs[i - 1]) {
                ++run;
            } else {
                ties_xy += static_cast<long long>(run) * (run - 1) / 2;
                run = 1;
            }
        }
    }

    std::vector<double> buf(n);
    const long long swaps = count_inversions(y_sorted, buf, 0, n);
    // Knight: nc - nd = n0 - n1 - n2 + n3 - 2*swaps; tau-b normalization.
    const double nc_minus_nd = static_cast<double>(total - ties_x - ties_y + ties_xy - 2 * swaps);
    const double denom = std::sqrt(static_cast<double>(total - ties_x)) *
                         std::sqrt(static_cast<double>(total - ties_y));
    return nc_minus_nd / denom;
}

Eigen::VectorXd cox_newton(const copfrail::Dataset& d, int type, const Eigen::VectorXd& weights, int max_iter) {
    const int n = d.n_subjects();
    const int p = d.n_covariates;
    const auto& dt = d.distinct_times[static_cast<std::size_t>(type)];
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    for (int iter = 0; iter < max_iter; ++iter) {
        Eigen::VectorXd grad = Eigen::VectorXd::Zero(p);
        Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(p, p);
        for (std::size_t l = 0; l < dt.size(); ++l) {
            const double t = dt[l];
            double s0 = 0.0;
            Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
            Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(p, p);
            for (int i = 0; i < n; ++i) {
                const auto& subj = d.subjects[static_cast<std::size_t>(i)];
                if (subj.censoring_time < t) continue;
                const double theta = weights[i] * std::exp(subj.covariates.dot(beta));
                s0 += theta;
                s1 += theta * subj.covariates;
                s2 += theta * subj.covariates * subj.covariates.transpose();
            }
            double n_events_here = 0.0;
            for (int i = 0; i < n; ++i) {
                const auto& ev = d.subjects[static_cast<std::size_t>(i)].events[static_cast<std::size_t>(type)];
                for (double te : ev) {
                    if (te == t) {
                        grad += d.subjects[static_cast<std::size_t>(i)].covariates;
                        n_events_here += 1.0;
                    }
                }
            }
            grad -= n_events_here * s1 / s0;
            hess += n_events_here * (s2 / s0 - (s1 / s0) * (s1 / s0).transpose());
        }
        const Eigen::VectorXd step = hess.ldlt().solve(grad);
        beta += step;
        if (grad.lpNorm<Eigen::Infinity>() < 1e-10) break;
    }
    return beta;
}

std::vector<double> breslow_jumps(const copfrail::Dataset& d, int type, const Eigen::VectorXd& weights,
                                  const Eigen::VectorXd& beta) {
    const auto& dt = d.distinct_times[static_cast<std::size_t>(type)];
    std::vector<double> jumps(dt.size(), 0.0);
    for (std::size_t l = 0; l < dt.size(); ++l) {
        const double t = dt[l];
        double s0 = 0.0;
        double n_events_here = 0.0;
        for (int i = 0; i < d.n_subjects(); ++i) {
            const auto& subj = d.subjects[static_cast<std::size_t>(i)];
            if (subj.censoring_time >= t) s0 += weights[i] * std::exp(subj.covariates.dot(beta));
            for (double te : subj.events[static_cast<std::size_t>(type)]) {
                if (te == t) n_events_here += 1.0;
            }
        }
        jumps[l] = n_events_here / s0;
    }
    return jumps;
}

Eigen::VectorXd numeric_gradient(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                                 double rel_step) {
    Eigen::VectorXd g(x.size());
    Eigen::VectorXd xp = x;
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        const double h = rel_step * std::max(std::abs(x[k]), 0.1);
        xp[k] = x[k] + h;
        const double fp = f(xp);
        xp[k] = x[k] - h;
        const double fm = f(xp);
        xp[k] = x[k];
        g[k] = (fp - fm) / (2.0 * h);
    }
    return g;
}

Eigen::MatrixXd numeric_hessian(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                                double rel_step) {
    const Eigen::Index dim = x.size();
    Eigen::MatrixXd h_mat(dim, dim);
    Eigen::VectorXd step(dim);
    for (Eigen::Index k = 0; k < dim; ++k) step[k] = rel_step * std::max(std::abs(x[k]), 0.1);
    const double f0 = f(x);
    Eigen::VectorXd xp = x;
    for (Eigen::Index k = 0; k < dim; ++k) {
        xp[k] = x[k] + step[k];
        const double fp = f(xp);
        xp[k] = x[k] - step[k];
        const double fm = f(xp);
        xp[k] = x[k];
        h_mat(k, k) = (fp - 2.0 * f0 + fm) / (step[k] * step[k]);
    }
    for (Eigen::Index k = 0; k < dim; ++k) {
        for (Eigen::Index l = k + 1; l < dim; ++l) {
            xp[k] = x[k] + step[k];
            xp[l] = x[l] + step[l];
            const double fpp = f(xp);
            xp[l] = x[l] - step[l];
            const double fpm = f(xp);
            xp[k] = x[k] - step[k];
            const double fmm = f(xp);
            xp[l] = x[l] + step[l];
            const double fmp = f(xp);
            xp[k] = x[k];
            xp[l] = x[l];
            const double v = (fpp - fpm - fmp + fmm) / (4.0 * step[k] * step[l]);
            h_mat(k, l) = v;
            h_mat(l, k) = v;
        }
    }
    return h_mat;
}

namespace {

// log of integral over w of w^n exp(-c w) * gamma(1/alpha, alpha) density,
// fixed 720-point composite Gauss-Legendre grid on t = log w.
double m1_log_integral_quadrature(int n_events, double c, double alpha) {
    static const double gl_nodes[6] = {-0.9324695142031521, -0.6612093864662645, -0.2386191860831969,
                                       0.2386191860831969,  0.6612093864662645,  0.9324695142031521};
    static const double gl_weights[6] = {0.1713244923791704, 0.3607615730481386, 0.4679139345726910,
                                         0.4679139345726910, 0.3607615730481386, 0.1713244923791704};
    const double theta = 1.0 / alpha;
    const double log_norm = theta * std::log(theta) - std::lgamma(theta);
    const double t_lo = -35.0, t_hi = 9.0;
    const int panels = 120;
    const double width = (t_hi - t_lo) / panels;

    // integrand in t: exp((n + theta) t - (c + theta) e^t), log-scaled by peak
    const double t_peak = std::log((n_events + theta) / (c + theta));
    const double log_peak = (n_events + theta) * t_peak - (c + theta) * std::exp(t_peak);

    double sum = 0.0;
    for (int panel = 0; panel < panels; ++panel) {
        const double a = t_lo + panel * width;
        for (int g = 0; g < 6; ++g) {
            const double t = a + 0.5 * width * (gl_nodes[g] + 1.0);
            const double log_f = (n_events + theta) * t - (c + theta) * std::exp(t) - log_peak;
            sum += 0.5 * width * gl_weights[g] * std::exp(log_f);
        }
    }
    return log_norm + log_peak + std::log(sum);
}

double m1_log_integral_closed(int n_events, double c, double alpha) {
    const double theta = 1.0 / alpha;
    return theta * std::log(theta) - std::lgamma(theta) + std::lgamma(n_events + theta) -
           (n_events + theta) * std::log(c + theta);
}

}  // namespace

double m1_marginal_loglik(const std::vector<M1Subject>& subjects, double beta, double alpha, bool closed_form) {
    double total = 0.0;
    for (const auto& s : subjects) {
        const double exb = std::exp(s.x * beta);
        const double c = s.cum_baseline * exb;
        total += s.sum_log_jumps + s.n_events * s.x * beta;
        total += closed_form ? m1_log_integral_closed(s.n_events, c, alpha)
                             : m1_log_integral_quadrature(s.n_events, c, alpha);
    }
    return total;
}

double m1_marginal_loglik_full(const std::vector<int>& n_events, const std::vector<double>& x,
                               const std::vector<std::vector<int>>& event_jump_index,
                               const std::vector<std::vector<bool>>& at_risk, const Eigen::VectorXd& jumps,
                               double beta, double alpha, bool closed_form) {
    const std::size_t n = n_events.size();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double sum_log_jumps = 0.0;
        for (int l : event_jump_index[i]) sum_log_jumps += std::log(jumps[l]);
        double cum = 0.0;
        for (Eigen::Index l = 0; l < jumps.size(); ++l) {
            if (at_risk[i][static_cast<std::size_t>(l)]) cum += jumps[l];
        }
        const double c = cum * std::exp(x[i] * beta);
        total += sum_log_jumps + n_events[i] * x[i] * beta;
        total += closed_form ? m1_log_integral_closed(n_events[i], c, alpha)
                             : m1_log_integral_quadrature(n_events[i], c, alpha);
    }
    return total;
}

double ks_distance(std::vector<double> sample, const std::function<double(double)>& cdf) {
    std::sort(sample.begin(), sample.end());
    const auto n = static_cast<double>(sample.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const double f = cdf(sample[i]);
        worst = std::max(worst, std::abs(f - static_cast<double>(i) / n));
        worst = std::max(worst, std::abs(static_cast<double>(i + 1) / n - f));
    }
    return worst;
}

double mvn_log_pdf(const Eigen::VectorXd& x, const Eigen::MatrixXd& cov) {
    const Eigen::Index m = x.size();
    const Eigen::LLT<Eigen::MatrixXd> llt(cov);
    const Eigen::MatrixXd l = llt.matrixL();
    double log_det = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) log_det += 2.0 * std::log(l(i, i));
    const double quad = x.dot(llt.solve(x));
    return -0.5 * (static_cast<double>(m) * std::log(2.0 * M_PI) + log_det + quad);
}

double grid_search_max(const std::function<double(double)>& f, double lo, double hi, int points) {
    double best_x = lo, best_f = f(lo);
    for (int i = 1; i < points; ++i) {
        const double xx = lo + (hi - lo) * i / (points - 1);
        const double fx = f(xx);
        if (fx > best_f) {
            best_f = fx;
            best_x = xx;
        }
    }
    return best_x;
}

}  // namespace oracles
