#include "copfrail/model.hpp"

#include <algorithm>
#include <numeric>

#include "copfrail/errors.hpp"

namespace copfrail {

ModelSpec ModelSpec::from_label(const std::string& label) {
    if (label == "Cg") return {CopulaFamily::Clayton, MarginalFamily::Gamma};
    if (label == "CG") return {CopulaFamily::Clayton, MarginalFamily::Gaussian};
    if (label == "Gg") return {CopulaFamily::Gaussian, MarginalFamily::Gamma};
    if (label == "GG") return {CopulaFamily::Gaussian, MarginalFamily::Gaussian};
    throw DomainError("unknown model label '" + label + "' (expected Cg, CG, Gg, or GG)");
}

std::string ModelSpec::label() const {
    std::string s;
    s += copula == CopulaFamily::Clayton ? 'C' : 'G';
    s += margin == MarginalFamily::Gamma ? 'g' : 'G';
    return s;
}

Baseline::Baseline(std::vector<double> t, std::vector<double> j) : times(std::move(t)) {
    set_jumps(std::move(j));
}

void Baseline::set_jumps(std::vector<double> j) {
    if (j.size() != times.size()) throw DomainError("baseline jumps must align with distinct times");
    for (double v : j) {
        if (!(v >= 0.0)) throw DomainError("baseline jumps must be nonnegative");
    }
    jumps = std::move(j);
    cumulative.resize(jumps.size());
    std::partial_sum(jumps.begin(), jumps.end(), cumulative.begin());
}

double Baseline::cum_at(double t) const {
    const auto it = std::upper_bound(times.begin(), times.end(), t);
    if (it == times.begin()) return 0.0;
    return cumulative[static_cast<std::size_t>(it - times.begin()) - 1];
}

std::vector<Marginal> ParameterVector::margins() const {
    std::vector<Marginal> out;
    out.reserve(marginal_alphas.size());
    for (double a : marginal_alphas) out.push_back(make_marginal(marginal_family, a));
    return out;
}

std::vector<std::string> monitored_names(int m, int p, CopulaFamily copula) {
    std::vector<std::string> names;
    for (int j = 1; j <= m; ++j) {
        if (p == 1) {
            names.push_back("beta_" + std::to_string(j));
        } else {
            for (int k = 1; k <= p; ++k) names.push_back("beta_" + std::to_string(j) + "_" + std::to_string(k));
        }
    }
    for (int j = 1; j <= m; ++j) names.push_back("alpha_" + std::to_string(j));
    if (copula == CopulaFamily::Clayton) {
        names.push_back("alpha");
    } else {
        for (int j = 1; j <= m; ++j) {
            for (int k = j + 1; k <= m; ++k) {
                names.push_back("rho_" + std::to_string(j) + std::to_string(k));
            }
        }
    }
    return names;
}

Eigen::VectorXd monitored_values(const ParameterVector& params) {
    std::vector<double> vals;
    for (const auto& b : params.beta) {
        for (Eigen::Index k = 0; k < b.size(); ++k) vals.push_back(b[k]);
    }
    for (double a : params.marginal_alphas) vals.push_back(a);
    if (const auto* cp = std::get_if<ClaytonParam>(&params.copula)) {
        vals.push_back(cp->alpha_c);
    } else {
        const auto& R = std::get<CorrelationMatrix>(params.copula).matrix();
        for (Eigen::Index j = 0; j < R.rows(); ++j) {
            for (Eigen::Index k = j + 1; k < R.cols(); ++k) vals.push_back(R(j, k));
        }
    }
    return Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

}  // namespace copfrail
