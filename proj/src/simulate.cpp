#include "copfrail/simulate.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <mutex>
#include <ostream>
#include <sstream>

#include "copfrail/errors.hpp"
#include "copfrail/parallel.hpp"
#include "copfrail/special.hpp"

namespace copfrail {

void SimConfig::validate() const {
    if (n_subjects < 1) throw DomainError("simulation requires n_subjects >= 1");
    if (n_types < 1) throw DomainError("simulation requires n_types >= 1");
    if (static_cast<int>(alpha_truth.size()) != n_types) throw DomainError("alpha_truth length must equal n_types");
    if (static_cast<int>(beta_truth.size()) != n_types) throw DomainError("beta_truth length must equal n_types");
    for (double a : alpha_truth) {
        if (!(a > 0.0)) throw DomainError("alpha_truth entries must be positive");
    }
    if (!(censor_rate > 0.0)) throw DomainError("censor_rate must be positive");
    if (!(admin_cutoff > 0.0)) throw DomainError("admin_cutoff must be positive");
    copula();  // dimension / parameter checks
}

Copula SimConfig::copula() const {
    if (model.copula == CopulaFamily::Clayton) {
        if (copula_truth.size() != 1) throw DomainError("Clayton copula_truth must hold exactly one parameter");
        return ClaytonParam(copula_truth.front());
    }
    const std::size_t n_pairs = static_cast<std::size_t>(n_types) * (n_types - 1) / 2;
    if (copula_truth.size() == 1) {
        return CorrelationMatrix::exchangeable(n_types, copula_truth.front());
    }
    if (copula_truth.size() != n_pairs) {
        throw DomainError("Gaussian copula_truth must hold one shared rho or all m(m-1)/2 correlations");
    }
    Eigen::MatrixXd R = Eigen::MatrixXd::Identity(n_types, n_types);
    std::size_t idx = 0;
    for (int j = 0; j < n_types; ++j) {
        for (int k = j + 1; k < n_types; ++k) R(j, k) = R(k, j) = copula_truth[idx++];
    }
    return CorrelationMatrix(R);
}

Eigen::VectorXd SimConfig::truth_monitored() const {
    std::vector<double> vals(beta_truth.begin(), beta_truth.end());
    vals.insert(vals.end(), alpha_truth.begin(), alpha_truth.end());
    if (model.copula == CopulaFamily::Clayton) {
        vals.push_back(copula_truth.front());
    } else {
        const auto& R = std::get<CorrelationMatrix>(copula()).matrix();
        for (int j = 0; j < n_types; ++j) {
            for (int k = j + 1; k < n_types; ++k) vals.push_back(R(j, k));
        }
    }
    return Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

Dataset generate_dataset(const SimConfig& cfg, Rng& rng) {
    cfg.validate();
    const int n = cfg.n_subjects;
    const int m = cfg.n_types;
    const Copula cop = cfg.copula();

    Dataset d;
    d.n_covariates = 1;
    d.type_labels.resize(static_cast<std::size_t>(m));
    for (int j = 0; j < m; ++j) d.type_labels[static_cast<std::size_t>(j)] = std::to_string(j + 1);
    d.subjects.reserve(static_cast<std::size_t>(n));

    for (int i = 1; i <= n; ++i) {
        const Eigen::VectorXd u = copula_sample(cop, m, rng);
        Eigen::VectorXd w(m);
        for (int j = 0; j < m; ++j) {
            const double alpha = cfg.alpha_truth[static_cast<std::size_t>(j)];
            if (cfg.model.margin == MarginalFamily::Gamma) {
                w[j] = special::gamma_quantile(u[j], 1.0 / alpha, alpha);
            } else {
                w[j] = std::exp(std::sqrt(alpha) * special::norm_quantile(u[j]));
            }
        }
        const double x = rng.bernoulli(0.5) ? 1.0 : 0.0;
        const double tau = std::min(rng.exponential(cfg.censor_rate), cfg.admin_cutoff);

        SubjectData subj;
        subj.id = std::to_string(i);
        subj.covariates = Eigen::VectorXd::Constant(1, x);
        subj.censoring_time = tau;
        subj.events.resize(static_cast<std::size_t>(m));
        for (int j = 0; j < m; ++j) {
            const double hazard = w[j] * std::exp(x * cfg.beta_truth[static_cast<std::size_t>(j)]);
            double t = rng.exponential(hazard);
            while (t < tau) {
                subj.events[static_cast<std::size_t>(j)].push_back(t);
                t += rng.exponential(hazard);
            }
        }
        d.subjects.push_back(std::move(subj));
    }
    d.finalize();
    return d;
}

double zero_event_fraction(const Dataset& d) {
    int zero = 0;
    for (const auto& s : d.subjects) {
        if (s.total_events() == 0) ++zero;
    }
    return static_cast<double>(zero) / static_cast<double>(d.n_subjects());
}

StudyResult run_study(const SimConfig& cfg, const FitConfig& fit_cfg, std::ostream* progress) {
    cfg.validate();
    if (cfg.n_replicates < 1) throw StudyError("study requires at least one replicate");

    StudyResult result;
    result.param_names = monitored_names(cfg.n_types, 1, cfg.model.copula);
    result.truth = cfg.truth_monitored();
    result.n_replicates = cfg.n_replicates;
    result.replicates.resize(static_cast<std::size_t>(cfg.n_replicates));

    std::mutex progress_mutex;
    FitConfig rep_cfg = fit_cfg;
    rep_cfg.threads = 1;  // parallelism lives across replicates

    parallel_for(static_cast<std::size_t>(cfg.n_replicates), fit_cfg.threads, [&](std::size_t r) {
        ReplicateOutcome& out = result.replicates[r];
        out.replicate = static_cast<int>(r);
        const auto t0 = std::chrono::steady_clock::now();
        Rng rng = Rng::stream(cfg.seed, r);
        const Dataset data = generate_dataset(cfg, rng);
        out.censoring_fraction = zero_event_fraction(data);
        try {
            FitConfig one = rep_cfg;
            one.seed = cfg.seed ^ (0x5851f42d4c957f2dULL + r);
            const FitResult fit_result = fit(data, cfg.model, one);
            out.converged = fit_result.converged;
            out.n_iterations = fit_result.n_iterations;
            out.estimates = fit_result.estimates;
            out.std_errors = fit_result.std_errors;
        } catch (const std::exception& e) {
            out.failed = true;
            out.message = e.what();
        }
        out.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (progress != nullptr) {
            std::lock_guard<std::mutex> lock(progress_mutex);
            *progress << "replicate " << r + 1 << "/" << cfg.n_replicates << ": "
                      << (out.failed ? "failed" : out.converged ? "converged" : "not converged") << " ("
                      << out.n_iterations << " iterations, " << out.runtime_seconds << " s)\n";
        }
    });

    const auto d = static_cast<Eigen::Index>(result.param_names.size());
    result.mean = Eigen::VectorXd::Zero(d);
    result.bias = Eigen::VectorXd::Zero(d);
    result.variance = Eigen::VectorXd::Zero(d);
    result.mse = Eigen::VectorXd::Zero(d);
    result.cp = Eigen::VectorXd::Zero(d);

    int included = 0;
    double censor_sum = 0.0;
    for (const auto& rep : result.replicates) {
        censor_sum += rep.censoring_fraction;
        if (!rep.failed && rep.converged) ++included;
    }
    result.n_included = included;
    result.n_excluded = cfg.n_replicates - included;
    result.mean_censoring_fraction = censor_sum / cfg.n_replicates;
    if (result.n_excluded > 0.2 * cfg.n_replicates) {
        throw StudyError("more than 20% of replicates failed to converge (" + std::to_string(result.n_excluded) +
                         " of " + std::to_string(cfg.n_replicates) + ")");
    }

    Eigen::VectorXi cp_den = Eigen::VectorXi::Zero(d);
    for (const auto& rep : result.replicates) {
        if (rep.failed || !rep.converged) continue;
        result.mean += rep.estimates;
        for (Eigen::Index k = 0; k < d; ++k) {
            const double se = rep.std_errors.size() == d ? rep.std_errors[k] : std::nan("");
            if (std::isfinite(se)) {
                ++cp_den[k];
                if (std::abs(rep.estimates[k] - result.truth[k]) <= 1.96 * se) result.cp[k] += 1.0;
            }
        }
    }
    result.mean /= included;
    result.bias = result.mean - result.truth;
    for (const auto& rep : result.replicates) {
        if (rep.failed || !rep.converged) continue;
        result.variance += (rep.estimates - result.mean).cwiseAbs2();
        result.mse += (rep.estimates - result.truth).cwiseAbs2();
    }
    result.variance /= included;
    result.mse /= included;
    for (Eigen::Index k = 0; k < d; ++k) {
        result.cp[k] = cp_den[k] > 0 ? result.cp[k] / cp_den[k] : std::nan("");
    }
    return result;
}

void write_study_csv(std::ostream& out, const StudyResult& result) {
    out << "# replicates=" << result.n_replicates << " included=" << result.n_included
        << " excluded=" << result.n_excluded << " mean_censoring=" << result.mean_censoring_fraction << "\n";
    out << "parameter,truth,mean,bias,var,mse,cp\n";
    for (std::size_t k = 0; k < result.param_names.size(); ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        out << result.param_names[k] << ',' << result.truth[i] << ',' << result.mean[i] << ',' << result.bias[i]
            << ',' << result.variance[i] << ',' << result.mse[i] << ',' << result.cp[i] << "\n";
    }
}

StudyResult read_study_csv(std::istream& in) {
    StudyResult result;
    std::string line;
    std::vector<std::array<double, 6>> rows;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (line.rfind("parameter,", 0) == 0) continue;
        std::stringstream ss(line);
        std::string field;
        std::getline(ss, field, ',');
        result.param_names.push_back(field);
        std::array<double, 6> row{};
        for (auto& v : row) {
            std::getline(ss, field, ',');
            v = std::strtod(field.c_str(), nullptr);
        }
        rows.push_back(row);
    }
    const auto d = static_cast<Eigen::Index>(rows.size());
    result.truth.resize(d);
    result.mean.resize(d);
    result.bias.resize(d);
    result.variance.resize(d);
    result.mse.resize(d);
    result.cp.resize(d);
    for (Eigen::Index k = 0; k < d; ++k) {
        const auto& row = rows[static_cast<std::size_t>(k)];
        result.truth[k] = row[0];
        result.mean[k] = row[1];
        result.bias[k] = row[2];
        result.variance[k] = row[3];
        result.mse[k] = row[4];
        result.cp[k] = row[5];
    }
    return result;
}

}  // namespace copfrail
