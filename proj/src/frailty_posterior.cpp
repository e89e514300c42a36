#include "copfrail/frailty_posterior.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "copfrail/errors.hpp"
#include "copfrail/special.hpp"

namespace copfrail {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kUClamp = 1e-12;

bool copula_is_independence(const Copula& c) {
    if (const auto* p = std::get_if<ClaytonParam>(&c)) return p->alpha_c < 1e-6;
    const auto& R = std::get<CorrelationMatrix>(c);
    return R.dim() == 1 || R.matrix().isIdentity(0.0);
}
}  // namespace

ConditionalTarget::ConditionalTarget(const SubjectData& subject, const ParameterVector& params)
    : scale_(scale_for(params.marginal_family)),
      margins_(params.margins()),
      copula_(&params.copula),
      independence_(copula_is_independence(params.copula)) {
    const int m = params.n_types();
    n_events_.resize(m);
    data_rate_.resize(m);
    for (int j = 0; j < m; ++j) {
        n_events_[j] = subject.n_events(j);
        data_rate_[j] = params.baseline[static_cast<std::size_t>(j)].cum_at(subject.censoring_time) *
                        std::exp(subject.covariates.dot(params.beta[static_cast<std::size_t>(j)]));
    }
}

double ConditionalTarget::log_density(const Eigen::VectorXd& w_or_b) const {
    const int m = dim();
    double value = 0.0;
    Eigen::VectorXd u(m);
    for (int j = 0; j < m; ++j) {
        const double x = w_or_b[j];
        if (scale_ == FrailtyScale::W) {
            if (!(x > 0.0)) return kNegInf;
            value += n_events_[j] * std::log(x) - data_rate_[j] * x;
        } else {
            if (!std::isfinite(x)) return kNegInf;
            value += n_events_[j] * x - data_rate_[j] * std::exp(x);
        }
        value += log_pdf(margins_[static_cast<std::size_t>(j)], x);
        if (!independence_) {
            u[j] = std::clamp(cdf(margins_[static_cast<std::size_t>(j)], x), kUClamp, 1.0 - kUClamp);
        }
    }
    if (!independence_) value += copula_log_density(*copula_, u);
    return std::isfinite(value) ? value : kNegInf;
}

double ConditionalTarget::log_density_sampling(const Eigen::VectorXd& v) const {
    if (scale_ == FrailtyScale::B) return log_density(v);
    // w = exp(v); the Jacobian contributes sum_j v_j.
    return log_density(v.array().exp().matrix()) + v.sum();
}

Eigen::VectorXd ConditionalTarget::to_model_scale(const Eigen::VectorXd& v) const {
    if (scale_ == FrailtyScale::B) return v;
    return v.array().exp().matrix();
}

double log_target(const ConditionalTarget& t, const Eigen::VectorXd& w_or_b) { return t.log_density(w_or_b); }

MHResult mh_sample(const ConditionalTarget& target, const MHConfig& cfg, Rng& rng, ChainState* state) {
    if (cfg.n_s < 1 || cfg.n_thin < 1 || cfg.n_burn < 0) throw DomainError("invalid MH configuration");
    const int m = target.dim();

    Eigen::VectorXd v;
    double step = cfg.step_scale;
    if (state != nullptr && state->initialized) {
        v = state->v;
        if (state->step_scale > 0.0) step = state->step_scale;
    } else {
        v = Eigen::VectorXd::Zero(m);  // w = 1 / b = 0
    }
    double log_p = target.log_density_sampling(v);
    if (!std::isfinite(log_p)) {
        v.setZero();
        log_p = target.log_density_sampling(v);
    }

    const int total = cfg.n_burn + cfg.n_thin * cfg.n_s;
    MHResult result;
    result.draws.resize(cfg.n_s, m);

    constexpr int kAdaptBatch = 50;
    int batch_accepts = 0, batch_count = 0;
    long post_accepts = 0, post_count = 0;
    int retained = 0;
    Eigen::VectorXd proposal(m);

    for (int q = 0; q < total; ++q) {
        for (int j = 0; j < m; ++j) proposal[j] = v[j] + step * rng.normal();
        const double log_p_new = target.log_density_sampling(proposal);
        bool accept = false;
        if (log_p_new > log_p) {
            accept = true;
        } else if (std::isfinite(log_p_new)) {
            accept = std::log(rng.uniform01()) < log_p_new - log_p;
        }
        if (accept) {
            v = proposal;
            log_p = log_p_new;
        }

        if (q < cfg.n_burn) {
            if (cfg.adapt_during_burnin) {
                batch_accepts += accept ? 1 : 0;
                if (++batch_count == kAdaptBatch) {
                    const double rate = static_cast<double>(batch_accepts) / kAdaptBatch;
                    step *= std::exp(0.5 * (rate - cfg.target_acceptance));
                    step = std::clamp(step, 1e-3, 10.0);
                    batch_accepts = 0;
                    batch_count = 0;
                }
            }
        } else {
            post_accepts += accept ? 1 : 0;
            ++post_count;
            if ((q - cfg.n_burn + 1) % cfg.n_thin == 0) {
                result.draws.row(retained++) = target.to_model_scale(v).transpose();
            }
        }
    }

    result.acceptance_rate = post_count > 0 ? static_cast<double>(post_accepts) / static_cast<double>(post_count) : 0.0;
    result.acceptance_warning = result.acceptance_rate < 0.05 || result.acceptance_rate > 0.95;
    if (state != nullptr) {
        state->v = v;
        state->step_scale = step;
        state->initialized = true;
    }
    return result;
}

Eigen::VectorXd FrailtyDraws::w_draw(int i, int q) const {
    const Eigen::VectorXd row = draws[static_cast<std::size_t>(i)].row(q).transpose();
    if (scale == FrailtyScale::W) return row;
    return row.array().exp().matrix();
}

void summarize(FrailtyDraws& d, std::span<const Marginal> margins) {
    const int n = d.n_subjects();
    const int m = d.n_types();
    const int n_s = d.n_s();
    if (n == 0 || n_s == 0) throw DomainError("summarize requires at least one retained draw");

    d.e_w.resize(n, m);
    d.e_log_w.resize(n, m);
    d.e_b2.resize(n, m);
    d.e_scores.assign(static_cast<std::size_t>(n), Eigen::MatrixXd::Zero(m, m));

    for (int i = 0; i < n; ++i) {
        const Eigen::MatrixXd& x = d.draws[static_cast<std::size_t>(i)];
        Eigen::MatrixXd q_scores(n_s, m);
        for (int j = 0; j < m; ++j) {
            double sw = 0.0, slw = 0.0, sb2 = 0.0;
            for (int q = 0; q < n_s; ++q) {
                const double val = x(q, j);
                const double w = d.scale == FrailtyScale::W ? val : std::exp(val);
                const double b = d.scale == FrailtyScale::W ? std::log(val) : val;
                sw += w;
                slw += b;
                sb2 += b * b;
                const double u = std::clamp(cdf(margins[static_cast<std::size_t>(j)], val), 1e-12, 1.0 - 1e-12);
                q_scores(q, j) = special::norm_quantile(u);
            }
            d.e_w(i, j) = sw / n_s;
            d.e_log_w(i, j) = slw / n_s;
            d.e_b2(i, j) = sb2 / n_s;
        }
        d.e_scores[static_cast<std::size_t>(i)] = q_scores.transpose() * q_scores / static_cast<double>(n_s);
    }
}

}  // namespace copfrail
