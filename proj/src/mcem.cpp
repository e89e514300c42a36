#include "copfrail/mcem.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

#include "copfrail/parallel.hpp"
#include "copfrail/special.hpp"

namespace copfrail {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

// One sweep over the distinct event times of a type, largest time first, so
// risk-set sums grow by prefix extension. emit(l, s0, s1, s2) sees the sums
// over R(t_j(l)).
template <typename Emit>
void sweep_risk_sums(const RiskSetIndex& risk, int j, const Eigen::VectorXd& theta,
                     const Eigen::MatrixXd* x_rows, Emit&& emit) {
    const auto& sizes = risk.risk_set_sizes[static_cast<std::size_t>(j)];
    const int k = static_cast<int>(sizes.size());
    if (k == 0) return;
    const int p = x_rows ? static_cast<int>(x_rows->cols()) : 0;
    double s0 = 0.0;
    Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
    Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(p, p);
    int idx = 0;
    for (int l = k - 1; l >= 0; --l) {
        for (; idx < sizes[static_cast<std::size_t>(l)]; ++idx) {
            const int i = risk.by_tau_desc[static_cast<std::size_t>(idx)];
            const double t = theta[i];
            s0 += t;
            if (p > 0) {
                const auto xi = x_rows->row(i).transpose();
                s1 += t * xi;
                s2 += t * xi * xi.transpose();
            }
        }
        emit(l, s0, s1, s2);
    }
}

Eigen::MatrixXd covariate_rows(const Dataset& d) {
    Eigen::MatrixXd x(d.n_subjects(), d.n_covariates);
    for (int i = 0; i < d.n_subjects(); ++i) x.row(i) = d.subjects[static_cast<std::size_t>(i)].covariates.transpose();
    return x;
}

Eigen::VectorXd risk_weights(const Dataset& d, const Eigen::MatrixXd& e_w, const Eigen::MatrixXd& x,
                             const Eigen::VectorXd& beta_j, int j) {
    Eigen::VectorXd theta(d.n_subjects());
    for (int i = 0; i < d.n_subjects(); ++i) theta[i] = e_w(i, j) * std::exp(x.row(i).dot(beta_j));
    return theta;
}

struct PartialEval {
    double loglik = 0.0;
    Eigen::VectorXd grad;
    Eigen::MatrixXd neg_hess;  // positive semidefinite curvature
};

PartialEval eval_partial(const Dataset& d, const RiskSetIndex& risk, int j, const Eigen::MatrixXd& e_w,
                         const Eigen::MatrixXd& e_log_w, const Eigen::MatrixXd& x, const Eigen::VectorXd& beta_j,
                         bool with_derivatives) {
    const int p = d.n_covariates;
    PartialEval out;
    out.grad = Eigen::VectorXd::Zero(p);
    out.neg_hess = Eigen::MatrixXd::Zero(p, p);
    const Eigen::VectorXd theta = risk_weights(d, e_w, x, beta_j, j);
    const auto& ties = d.tie_counts[static_cast<std::size_t>(j)];
    const auto& events = d.event_subjects[static_cast<std::size_t>(j)];
    sweep_risk_sums(risk, j, theta, with_derivatives ? &x : nullptr,
                    [&](int l, double s0, const Eigen::VectorXd& s1, const Eigen::MatrixXd& s2) {
                        if (s0 <= 0.0) throw EstimationError("empty risk set at a type-" + std::to_string(j + 1) +
                                                             " event time");
                        const double n_l = ties[static_cast<std::size_t>(l)];
                        out.loglik -= n_l * std::log(s0);
                        for (int i : events[static_cast<std::size_t>(l)]) {
                            out.loglik += x.row(i).dot(beta_j) + e_log_w(i, j);
                            if (with_derivatives) out.grad += x.row(i).transpose();
                        }
                        if (with_derivatives) {
                            const Eigen::VectorXd sbar = s1 / s0;
                            out.grad -= n_l * sbar;
                            out.neg_hess += n_l * (s2 / s0 - sbar * sbar.transpose());
                        }
                    });
    return out;
}

}  // namespace

double expected_partial_loglik(const Eigen::VectorXd& beta_j, const FrailtyDraws& draws, const Dataset& d,
                               const RiskSetIndex& risk, int type) {
    const Eigen::MatrixXd x = covariate_rows(d);
    return eval_partial(d, risk, type, draws.e_w, draws.e_log_w, x, beta_j, false).loglik;
}

namespace {

Eigen::VectorXd newton_beta(const Dataset& d, const RiskSetIndex& risk, int j, const FrailtyDraws& draws,
                            const Eigen::MatrixXd& x, Eigen::VectorXd beta) {
    constexpr double kGradTol = 1e-8;
    constexpr int kMaxIter = 100;
    PartialEval cur = eval_partial(d, risk, j, draws.e_w, draws.e_log_w, x, beta, true);
    for (int iter = 0; iter < kMaxIter; ++iter) {
        if (cur.grad.lpNorm<Eigen::Infinity>() < kGradTol) return beta;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(cur.neg_hess);
        Eigen::VectorXd step = ldlt.solve(cur.grad);
        if (ldlt.info() != Eigen::Success || !step.allFinite()) {
            int worst = 0;
            cur.neg_hess.diagonal().minCoeff(&worst);
            throw EstimationError("singular Hessian while updating beta for type " + std::to_string(j + 1) +
                                  "; covariate x" + std::to_string(worst + 1) + " carries no information");
        }
        double scale = 1.0;
        Eigen::VectorXd cand;
        PartialEval next;
        bool improved = false;
        for (int h = 0; h < 40; ++h) {
            cand = beta + scale * step;
            next = eval_partial(d, risk, j, draws.e_w, draws.e_log_w, x, cand, true);
            if (next.loglik >= cur.loglik - 1e-12) {
                improved = true;
                break;
            }
            scale *= 0.5;
        }
        if (!improved) return beta;  // flat to machine precision
        beta = cand;
        cur = next;
        if (beta.lpNorm<Eigen::Infinity>() > 30.0) {
            int worst = 0;
            beta.cwiseAbs().maxCoeff(&worst);
            throw EstimationError("beta estimate diverging for type " + std::to_string(j + 1) + "; covariate x" +
                                  std::to_string(worst + 1) + " appears to separate the events");
        }
    }
    throw EstimationError("beta update did not converge for type " + std::to_string(j + 1));
}

}  // namespace

std::vector<Eigen::VectorXd> update_beta(const FrailtyDraws& draws, const Dataset& d, const RiskSetIndex& risk,
                                         const std::vector<Eigen::VectorXd>& init, int threads) {
    const int m = d.n_types();
    const Eigen::MatrixXd x = covariate_rows(d);
    std::vector<Eigen::VectorXd> beta(init.begin(), init.end());
    parallel_for(static_cast<std::size_t>(m), threads, [&](std::size_t j) {
        if (d.distinct_times[j].empty() || d.n_covariates == 0) return;  // nothing to estimate
        beta[j] = newton_beta(d, risk, static_cast<int>(j), draws, x, beta[j]);
    });
    return beta;
}

std::vector<Baseline> update_baseline(const FrailtyDraws& draws, const Dataset& d, const RiskSetIndex& risk,
                                      const std::vector<Eigen::VectorXd>& beta) {
    const int m = d.n_types();
    const Eigen::MatrixXd x = covariate_rows(d);
    std::vector<Baseline> out;
    out.reserve(static_cast<std::size_t>(m));
    for (int j = 0; j < m; ++j) {
        const auto& dt = d.distinct_times[static_cast<std::size_t>(j)];
        std::vector<double> jumps(dt.size(), 0.0);
        const Eigen::VectorXd theta = risk_weights(d, draws.e_w, x, beta[static_cast<std::size_t>(j)], j);
        const auto& ties = d.tie_counts[static_cast<std::size_t>(j)];
        sweep_risk_sums(risk, j, theta, nullptr,
                        [&](int l, double s0, const Eigen::VectorXd&, const Eigen::MatrixXd&) {
                            jumps[static_cast<std::size_t>(l)] = ties[static_cast<std::size_t>(l)] / s0;
                        });
        out.emplace_back(dt, std::move(jumps));
    }
    return out;
}

void update_alpha(const FrailtyDraws& draws, ParameterVector& params, Q3MaximizeInfo* info) {
    const int m = params.n_types();
    for (int j = 0; j < m; ++j) {
        MarginalSummaries s;
        s.e_log_w = draws.e_log_w.col(j);
        s.e_w = draws.e_w.col(j);
        s.e_b2 = draws.e_b2.col(j);
        params.marginal_alphas[static_cast<std::size_t>(j)] = maximize_q4(params.marginal_family, s);
    }
    const auto margins = params.margins();
    params.copula = maximize_q3(family_of(params.copula), draws.draws, margins, params.copula, info);
}

ConvergenceDecision check_convergence(std::span<const Eigen::VectorXd> history, const ConvergenceConfig& cfg) {
    ConvergenceDecision decision;
    if (history.size() < 2) return decision;
    auto criterion = [&](std::size_t s) {
        const Eigen::VectorXd& cur = history[s];
        const Eigen::VectorXd& prev = history[s - 1];
        double worst = 0.0;
        for (Eigen::Index dcoord = 0; dcoord < cur.size(); ++dcoord) {
            const double num = cur[dcoord] - prev[dcoord];
            if (num == 0.0) continue;
            const double den = prev[dcoord] - cfg.delta1;
            worst = den == 0.0 ? std::numeric_limits<double>::infinity()
                               : std::max(worst, std::abs(num / den));
        }
        return worst;
    };
    decision.last_criterion = criterion(history.size() - 1);
    for (std::size_t s = history.size() - 1; s >= 1; --s) {
        if (criterion(s) < cfg.delta2) {
            ++decision.streak;
        } else {
            break;
        }
        if (s == 1) break;
    }
    decision.converged = decision.streak >= cfg.consecutive_required;
    return decision;
}

double complete_loglik(const ParameterVector& params, const Dataset& d, const FrailtyDraws& draws, int q) {
    const int n = d.n_subjects();
    const int m = d.n_types();
    const auto margins = params.margins();
    const bool indep = [&] {
        if (const auto* cp = std::get_if<ClaytonParam>(&params.copula)) return cp->alpha_c < 1e-6;
        return std::get<CorrelationMatrix>(params.copula).matrix().isIdentity(0.0);
    }();

    double total = 0.0;
    Eigen::VectorXd u(m);
    for (int i = 0; i < n; ++i) {
        const auto& subj = d.subjects[static_cast<std::size_t>(i)];
        for (int j = 0; j < m; ++j) {
            const auto& bl = params.baseline[static_cast<std::size_t>(j)];
            const double val = draws.draws[static_cast<std::size_t>(i)](q, j);
            const double w = draws.scale == FrailtyScale::W ? val : std::exp(val);
            const double b = draws.scale == FrailtyScale::W ? std::log(val) : val;
            const double xb = subj.covariates.dot(params.beta[static_cast<std::size_t>(j)]);
            for (double t : subj.events[static_cast<std::size_t>(j)]) {
                const auto& times = bl.times;
                const auto it = std::lower_bound(times.begin(), times.end(), t);
                const double jump = (it != times.end() && *it == t)
                                        ? bl.jumps[static_cast<std::size_t>(it - times.begin())]
                                        : 0.0;
                total += std::log(jump);
            }
            total += subj.n_events(j) * (b + xb) - bl.cum_at(subj.censoring_time) * w * std::exp(xb);
            total += log_pdf(margins[static_cast<std::size_t>(j)], val);
            if (!indep) u[j] = std::clamp(cdf(margins[static_cast<std::size_t>(j)], val), 1e-12, 1.0 - 1e-12);
        }
        if (!indep) total += copula_log_density(params.copula, u);
    }
    return total;
}

namespace {

// Per-draw complete log-likelihood; mean estimates Q.
Eigen::VectorXd per_draw_loglik(const ParameterVector& params, const Dataset& d, const FrailtyDraws& draws,
                                int threads) {
    const int n_s = draws.n_s();
    Eigen::VectorXd vals(n_s);
    parallel_for(static_cast<std::size_t>(n_s), threads,
                 [&](std::size_t q) { vals[static_cast<Eigen::Index>(q)] = complete_loglik(params, d, draws, static_cast<int>(q)); });
    return vals;
}

Eigen::MatrixXd kendall_report(const Copula& copula) {
    if (const auto* cp = std::get_if<ClaytonParam>(&copula)) {
        Eigen::MatrixXd tau(1, 1);
        tau(0, 0) = kendalls_tau(*cp);
        return tau;
    }
    return kendalls_tau(std::get<CorrelationMatrix>(copula));
}

}  // namespace

FitResult fit(const Dataset& d, const ModelSpec& model, const FitConfig& cfg) {
    const int n = d.n_subjects();
    const int m = d.n_types();
    const int p = d.n_covariates;
    if (n < 1) throw DomainError("fit requires at least one subject");
    const int threads = resolve_threads(cfg.threads);
    const RiskSetIndex risk = build_risk_sets(d);

    ParameterVector params;
    params.marginal_family = model.margin;
    params.beta.assign(static_cast<std::size_t>(m), Eigen::VectorXd::Zero(p));
    params.marginal_alphas.assign(static_cast<std::size_t>(m), 1.0);
    if (model.copula == CopulaFamily::Clayton) {
        params.copula = ClaytonParam(0.0);
    } else {
        params.copula = CorrelationMatrix::identity(m);
    }

    // Frailty-free start: unit frailties reduce the M-step to Cox + Breslow.
    FrailtyDraws unit;
    unit.scale = scale_for(model.margin);
    unit.draws.assign(static_cast<std::size_t>(n),
                      unit.scale == FrailtyScale::W ? Eigen::MatrixXd::Ones(1, m) : Eigen::MatrixXd::Zero(1, m));
    unit.acceptance_rates = Eigen::VectorXd::Ones(n);
    summarize(unit, params.margins());
    params.beta = update_beta(unit, d, risk, params.beta, threads);
    for (auto& b : update_baseline(unit, d, risk, params.beta)) params.baseline.push_back(std::move(b));

    std::vector<Rng> subject_rngs;
    subject_rngs.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) subject_rngs.push_back(Rng::stream(cfg.seed, static_cast<std::uint64_t>(i)));
    std::vector<ChainState> states(static_cast<std::size_t>(n));

    auto run_estep = [&](int ns_multiplier) {
        FrailtyDraws out;
        out.scale = scale_for(model.margin);
        out.draws.resize(static_cast<std::size_t>(n));
        out.acceptance_rates.resize(n);
        MHConfig mh = cfg.mh;
        mh.n_s *= ns_multiplier;
        parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t i) {
            ConditionalTarget target(d.subjects[i], params);
            const MHResult res = mh_sample(target, mh, subject_rngs[i], &states[i]);
            out.draws[i] = res.draws;
            out.acceptance_rates[static_cast<Eigen::Index>(i)] = res.acceptance_rate;
        });
        summarize(out, params.margins());
        out.acceptance_warning = (out.acceptance_rates.array() < 0.05).any() ||
                                 (out.acceptance_rates.array() > 0.95).any();
        return out;
    };

    FitResult result;
    result.param_names = monitored_names(m, p, model.copula);
    std::vector<Eigen::VectorXd> history;
    history.push_back(monitored_values(params));

    FrailtyDraws draws;
    bool converged = false;
    int iterations = 0;
    for (int s = 1; s <= cfg.convergence.max_iter; ++s) {
        draws = run_estep(1);
        IterationRecord rec;
        rec.mean_acceptance = draws.acceptance_rates.mean();
        try {
            const Eigen::VectorXd q_before = per_draw_loglik(params, d, draws, threads);
            ParameterVector next = params;
            next.beta = update_beta(draws, d, risk, params.beta, threads);
            next.baseline = update_baseline(draws, d, risk, next.beta);
            update_alpha(draws, next);
            const Eigen::VectorXd q_after = per_draw_loglik(next, d, draws, threads);
            const Eigen::VectorXd delta = q_after - q_before;
            const int n_s = draws.n_s();
            rec.q_value = q_after.mean();
            rec.q_change = delta.mean();
            const double sd = n_s > 1 ? std::sqrt((delta.array() - delta.mean()).square().sum() / (n_s - 1)) : 0.0;
            rec.q_change_mc_se = sd / std::sqrt(static_cast<double>(n_s));
            rec.q_decrease_flagged = rec.q_change < -3.0 * rec.q_change_mc_se && rec.q_change < 0.0;
            params = std::move(next);
        } catch (const EstimationError& e) {
            throw FitError(std::string("M-step failed at iteration ") + std::to_string(s) + ": " + e.what(),
                           result.trace);
        }
        history.push_back(monitored_values(params));
        rec.monitored = history.back();
        const ConvergenceDecision decision = check_convergence(history, cfg.convergence);
        rec.criterion = decision.last_criterion;
        result.trace.push_back(std::move(rec));
        iterations = s;
        if (decision.converged) {
            converged = true;
            break;
        }
    }

    result.converged = converged;
    result.n_iterations = iterations;
    result.params = params;
    result.estimates = monitored_values(params);
    result.kendall_tau = kendall_report(params.copula);

    // SE-stage E-step at the estimate with a larger retained sample.
    FrailtyDraws se_draws = run_estep(cfg.compute_se ? cfg.se_sample_multiplier : 1);
    result.acceptance_warning = se_draws.acceptance_warning ||
                                std::any_of(result.trace.begin(), result.trace.end(),
                                            [](const IterationRecord& r) { return r.mean_acceptance < 0.05 || r.mean_acceptance > 0.95; });
    if (cfg.compute_se) {
        const LouisResult louis = louis_information(params, se_draws, d, risk, threads);
        result.info_matrix = louis.information;
        result.std_errors = louis.std_errors;
        result.se_available = louis.positive_definite;
        result.se_note = louis.note;
        result.final_mean_score_norm = louis.mean_score_norm;
    } else {
        result.std_errors = Eigen::VectorXd::Constant(result.estimates.size(), kNan);
        result.se_note = "standard errors not requested";
    }
    result.final_draws = std::move(se_draws);
    return result;
}

void write_fit_report(std::ostream& out, const FitResult& fit, const Dataset& d) {
    out << "model fit report\n";
    out << "================\n";
    out << "subjects: " << d.n_subjects() << "\n";
    out << "event types:";
    for (const auto& label : d.type_labels) out << ' ' << label;
    out << "\n";
    out << "converged: " << (fit.converged ? "yes" : "no") << " after " << fit.n_iterations << " iterations\n";
    if (!fit.se_available && !fit.se_note.empty()) out << "standard errors: " << fit.se_note << "\n";
    out << "\nparameter            estimate          se          rr     p-value\n";
    const bool have_se = fit.std_errors.size() == fit.estimates.size();
    for (std::size_t k = 0; k < fit.param_names.size(); ++k) {
        const double est = fit.estimates[static_cast<Eigen::Index>(k)];
        const double se = have_se ? fit.std_errors[static_cast<Eigen::Index>(k)] : kNan;
        out << fit.param_names[k];
        for (std::size_t pad = fit.param_names[k].size(); pad < 16; ++pad) out << ' ';
        char buf[160];
        const bool is_beta = fit.param_names[k].rfind("beta", 0) == 0;
        if (std::isfinite(se)) {
            const double z = se > 0.0 ? est / se : 0.0;
            const double pval = se > 0.0 ? std::erfc(std::abs(z) / std::sqrt(2.0)) : 1.0;
            if (is_beta) {
                std::snprintf(buf, sizeof(buf), "%12.4f%12.4f%12.4f%12.4f", est, se, std::exp(est), pval);
            } else {
                std::snprintf(buf, sizeof(buf), "%12.4f%12.4f%12s%12.4f", est, se, "", pval);
            }
        } else {
            std::snprintf(buf, sizeof(buf), "%12.4f%12s%12s%12s", est, "--", is_beta ? "" : "--", "--");
            if (is_beta) std::snprintf(buf, sizeof(buf), "%12.4f%12s%12.4f%12s", est, "--", std::exp(est), "--");
        }
        out << buf << "\n";
    }
    out << "\nkendall tau:\n";
    if (fit.kendall_tau.rows() == 1) {
        out << "  " << fit.kendall_tau(0, 0) << "\n";
    } else {
        for (Eigen::Index j = 0; j < fit.kendall_tau.rows(); ++j) {
            out << " ";
            for (Eigen::Index k = 0; k < fit.kendall_tau.cols(); ++k) out << ' ' << fit.kendall_tau(j, k);
            out << "\n";
        }
    }
    out << "\nconvergence trace (criterion per iteration):\n";
    for (std::size_t s = 0; s < fit.trace.size(); ++s) {
        out << "  iter " << s + 1 << ": criterion " << fit.trace[s].criterion << ", Q " << fit.trace[s].q_value
            << ", acceptance " << fit.trace[s].mean_acceptance;
        if (fit.trace[s].q_decrease_flagged) out << "  [Q decrease beyond MC noise]";
        out << "\n";
    }
}

void write_baseline_csv(std::ostream& out, const FitResult& fit, const Dataset& d) {
    out << "event_type,time,jump,cumulative\n";
    for (int j = 0; j < d.n_types(); ++j) {
        const Baseline& bl = fit.params.baseline[static_cast<std::size_t>(j)];
        for (std::size_t l = 0; l < bl.times.size(); ++l) {
            out << d.type_labels[static_cast<std::size_t>(j)] << ',' << bl.times[l] << ',' << bl.jumps[l] << ','
                << bl.cumulative[l] << "\n";
        }
    }
}

void write_trace_csv(std::ostream& out, const FitResult& fit) {
    out << "iteration";
    for (const auto& name : fit.param_names) out << ',' << name;
    out << ",criterion,q_value,q_change,mean_acceptance\n";
    for (std::size_t s = 0; s < fit.trace.size(); ++s) {
        const auto& rec = fit.trace[s];
        out << s + 1;
        for (Eigen::Index k = 0; k < rec.monitored.size(); ++k) out << ',' << rec.monitored[k];
        out << ',' << rec.criterion << ',' << rec.q_value << ',' << rec.q_change << ',' << rec.mean_acceptance << "\n";
    }
}

}  // namespace copfrail
