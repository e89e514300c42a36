#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "copfrail/diagnostics.hpp"
#include "copfrail/event_data.hpp"
#include "copfrail/mcem.hpp"
#include "copfrail/simulate.hpp"

namespace py = pybind11;
using namespace copfrail;

namespace {

SimConfig make_sim_config(int n, int m, const std::string& model, const std::vector<double>& copula_param,
                          const std::vector<double>& alpha, const std::vector<double>& beta, double censor_rate,
                          double admin_cutoff, int replicates, std::uint64_t seed) {
    SimConfig cfg;
    cfg.n_subjects = n;
    cfg.n_types = m;
    cfg.model = ModelSpec::from_label(model);
    if (!copula_param.empty()) cfg.copula_truth = copula_param;
    if (!alpha.empty()) cfg.alpha_truth = alpha;
    if (!beta.empty()) cfg.beta_truth = beta;
    cfg.censor_rate = censor_rate;
    cfg.admin_cutoff = admin_cutoff;
    cfg.n_replicates = replicates;
    cfg.seed = seed;
    cfg.validate();
    return cfg;
}

FitConfig make_fit_config(int n_burn, int n_thin, int n_s, double step_scale, double delta1, double delta2,
                          int consecutive, int max_iter, int se_multiplier, bool compute_se, int threads,
                          std::uint64_t seed) {
    FitConfig cfg;
    cfg.mh.n_burn = n_burn;
    cfg.mh.n_thin = n_thin;
    cfg.mh.n_s = n_s;
    cfg.mh.step_scale = step_scale;
    cfg.convergence.delta1 = delta1;
    cfg.convergence.delta2 = delta2;
    cfg.convergence.consecutive_required = consecutive;
    cfg.convergence.max_iter = max_iter;
    cfg.se_sample_multiplier = se_multiplier;
    cfg.compute_se = compute_se;
    cfg.threads = threads;
    cfg.seed = seed;
    return cfg;
}

}  // namespace

PYBIND11_MODULE(copfrail, mod) {
    mod.doc() = "copula-frailty models for multi-type recurrent event data";

    py::class_<Dataset>(mod, "Dataset")
        .def_property_readonly("n_subjects", &Dataset::n_subjects)
        .def_property_readonly("n_types", &Dataset::n_types)
        .def_property_readonly("n_covariates", [](const Dataset& d) { return d.n_covariates; })
        .def_property_readonly("type_labels", [](const Dataset& d) { return d.type_labels; })
        .def_property_readonly("distinct_times", [](const Dataset& d) { return d.distinct_times; })
        .def("subject_ids",
             [](const Dataset& d) {
                 std::vector<std::string> ids;
                 for (const auto& s : d.subjects) ids.push_back(s.id);
                 return ids;
             })
        .def("events", [](const Dataset& d, int subject, int type) {
            return d.subjects.at(static_cast<std::size_t>(subject)).events.at(static_cast<std::size_t>(type));
        })
        .def("censoring_time",
             [](const Dataset& d, int subject) { return d.subjects.at(static_cast<std::size_t>(subject)).censoring_time; })
        .def("__eq__", [](const Dataset& a, const Dataset& b) { return a == b; });

    py::class_<FitResult>(mod, "FitResult")
        .def_property_readonly("param_names", [](const FitResult& r) { return r.param_names; })
        .def_property_readonly("estimates", [](const FitResult& r) { return r.estimates; })
        .def_property_readonly("std_errors", [](const FitResult& r) { return r.std_errors; })
        .def_property_readonly("se_available", [](const FitResult& r) { return r.se_available; })
        .def_property_readonly("converged", [](const FitResult& r) { return r.converged; })
        .def_property_readonly("n_iterations", [](const FitResult& r) { return r.n_iterations; })
        .def_property_readonly("kendall_tau", [](const FitResult& r) { return r.kendall_tau; })
        .def("report", [](const FitResult& r, const Dataset& d) {
            std::ostringstream out;
            write_fit_report(out, r, d);
            return out.str();
        });

    py::class_<StudyResult>(mod, "StudyResult")
        .def_property_readonly("param_names", [](const StudyResult& r) { return r.param_names; })
        .def_property_readonly("truth", [](const StudyResult& r) { return r.truth; })
        .def_property_readonly("mean", [](const StudyResult& r) { return r.mean; })
        .def_property_readonly("bias", [](const StudyResult& r) { return r.bias; })
        .def_property_readonly("variance", [](const StudyResult& r) { return r.variance; })
        .def_property_readonly("mse", [](const StudyResult& r) { return r.mse; })
        .def_property_readonly("cp", [](const StudyResult& r) { return r.cp; })
        .def_property_readonly("n_included", [](const StudyResult& r) { return r.n_included; })
        .def_property_readonly("mean_censoring_fraction",
                               [](const StudyResult& r) { return r.mean_censoring_fraction; });

    mod.def("load_dataset", [](const std::string& path) { return load_dataset(path); }, py::arg("path"));
    mod.def("save_dataset", [](const Dataset& d, const std::string& path) { save_dataset(d, path); },
            py::arg("dataset"), py::arg("path"));

    mod.def(
        "simulate_dataset",
        [](int n, int m, const std::string& model, const std::vector<double>& copula_param,
           const std::vector<double>& alpha, const std::vector<double>& beta, double censor_rate,
           double admin_cutoff, std::uint64_t seed) {
            const SimConfig cfg =
                make_sim_config(n, m, model, copula_param, alpha, beta, censor_rate, admin_cutoff, 1, seed);
            Rng rng(seed);
            return generate_dataset(cfg, rng);
        },
        py::arg("n") = 200, py::arg("m") = 3, py::arg("model") = "Cg",
        py::arg("copula_param") = std::vector<double>{8.0},
        py::arg("alpha") = std::vector<double>{}, py::arg("beta") = std::vector<double>{},
        py::arg("censor_rate") = 0.5, py::arg("admin_cutoff") = 1.0, py::arg("seed") = 12345);

    mod.def("zero_event_fraction", &zero_event_fraction, py::arg("dataset"));

    mod.def(
        "fit",
        [](const Dataset& d, const std::string& model, int n_burn, int n_thin, int n_s, double step_scale,
           double delta1, double delta2, int consecutive, int max_iter, int se_multiplier, bool compute_se,
           int threads, std::uint64_t seed) {
            const FitConfig cfg = make_fit_config(n_burn, n_thin, n_s, step_scale, delta1, delta2, consecutive,
                                                  max_iter, se_multiplier, compute_se, threads, seed);
            py::gil_scoped_release release;
            return fit(d, ModelSpec::from_label(model), cfg);
        },
        py::arg("dataset"), py::arg("model") = "Cg", py::arg("n_burn") = 500, py::arg("n_thin") = 5,
        py::arg("n_s") = 500, py::arg("step_scale") = 0.5, py::arg("delta1") = 0.01, py::arg("delta2") = 0.003,
        py::arg("consecutive") = 3, py::arg("max_iter") = 100, py::arg("se_multiplier") = 4,
        py::arg("compute_se") = true, py::arg("threads") = 0, py::arg("seed") = 1);

    mod.def(
        "run_study",
        [](int n, int m, const std::string& model, const std::vector<double>& copula_param,
           const std::vector<double>& alpha, const std::vector<double>& beta, int replicates, std::uint64_t seed,
           int n_s, int max_iter, int threads) {
            const SimConfig cfg = make_sim_config(n, m, model, copula_param, alpha, beta, 0.5, 1.0, replicates, seed);
            FitConfig fit_cfg;
            fit_cfg.mh.n_s = n_s;
            fit_cfg.convergence.max_iter = max_iter;
            fit_cfg.threads = threads;
            py::gil_scoped_release release;
            return run_study(cfg, fit_cfg, nullptr);
        },
        py::arg("n") = 50, py::arg("m") = 2, py::arg("model") = "Cg", py::arg("copula_param") = std::vector<double>{1.333},
        py::arg("alpha") = std::vector<double>{}, py::arg("beta") = std::vector<double>{}, py::arg("replicates") = 4,
        py::arg("seed") = 7, py::arg("n_s") = 200, py::arg("max_iter") = 30, py::arg("threads") = 0);

    // Direct access to the dependence primitives.
    mod.def("clayton_log_density", [](double alpha_c, const Eigen::VectorXd& u) {
        return clayton_log_density(ClaytonParam(alpha_c), u);
    });
    mod.def("gaussian_log_density", [](const Eigen::MatrixXd& R, const Eigen::VectorXd& u) {
        return gaussian_log_density(CorrelationMatrix(R), u);
    });
    mod.def("clayton_kendall_tau", [](double alpha_c) { return kendalls_tau(ClaytonParam(alpha_c)); });
    mod.def("gaussian_kendall_tau", [](const Eigen::MatrixXd& R) { return kendalls_tau(CorrelationMatrix(R)); });

    mod.def("relative_risks", [](const FitResult& r) {
        py::list rows;
        for (const auto& row : relative_risks(r)) {
            py::dict item;
            item["name"] = row.name;
            item["beta"] = row.beta;
            item["rr"] = row.rr;
            if (row.has_se) {
                item["se"] = row.se;
                item["ci"] = py::make_tuple(row.ci_low, row.ci_high);
                item["p_value"] = row.p_value;
            }
            rows.append(item);
        }
        return rows;
    });
}
