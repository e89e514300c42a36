#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "copfrail/diagnostics.hpp"
#include "copfrail/event_data.hpp"
#include "copfrail/mcem.hpp"
#include "copfrail/simulate.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitNotConverged = 2;

std::uint64_t entropy_seed() {
    std::random_device rd;
    return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

void add_fit_options(CLI::App* cmd, copfrail::FitConfig& cfg) {
    cmd->add_option("--n-burn", cfg.mh.n_burn, "MH burn-in proposals per E-step");
    cmd->add_option("--n-thin", cfg.mh.n_thin, "MH thinning interval");
    cmd->add_option("--n-s", cfg.mh.n_s, "retained MH draws per E-step");
    cmd->add_option("--step-scale", cfg.mh.step_scale, "initial random-walk step scale");
    cmd->add_option("--delta1", cfg.convergence.delta1, "convergence shift delta1");
    cmd->add_option("--delta2", cfg.convergence.delta2, "convergence threshold delta2");
    cmd->add_option("--consecutive", cfg.convergence.consecutive_required,
                    "consecutive satisfying iterations required");
    cmd->add_option("--max-iter", cfg.convergence.max_iter, "maximum EM iterations");
    cmd->add_option("--se-multiplier", cfg.se_sample_multiplier, "n_s multiplier for the SE-stage E-step");
    cmd->add_flag("--no-se{false}", cfg.compute_se, "skip standard-error computation")
        ->default_val(true);
    cmd->add_option("--threads", cfg.threads, "worker threads (0 = all cores)");
}

int run_fit(const std::string& input, const std::string& model_label, const std::string& out_dir,
            copfrail::FitConfig cfg, bool have_seed, bool dump_draws) {
    if (!have_seed) {
        cfg.seed = entropy_seed();
        std::cout << "seed: " << cfg.seed << "\n";
    }
    if (cfg.mh.n_s < 100) {
        std::cerr << "error: fit requires --n-s >= 100\n";
        return kExitError;
    }
    const copfrail::ModelSpec model = copfrail::ModelSpec::from_label(model_label);
    const copfrail::Dataset data = copfrail::load_dataset(input);
    std::filesystem::create_directories(out_dir);

    copfrail::FitResult result;
    try {
        result = copfrail::fit(data, model, cfg);
    } catch (const copfrail::FitError& e) {
        std::cerr << "fit stage failed: " << e.what() << "\n";
        std::ofstream trace_out(out_dir + "/trace.csv");
        copfrail::FitResult partial;
        partial.param_names = copfrail::monitored_names(data.n_types(), data.n_covariates, model.copula);
        partial.trace = e.trace;
        copfrail::write_trace_csv(trace_out, partial);
        return kExitError;
    }

    {
        std::ofstream out(out_dir + "/fit_report.txt");
        copfrail::write_fit_report(out, result, data);
    }
    {
        std::ofstream out(out_dir + "/baseline.csv");
        copfrail::write_baseline_csv(out, result, data);
    }
    {
        const copfrail::ResidualReport residuals =
            copfrail::deviance_residuals(result, data, result.final_draws);
        std::ofstream out(out_dir + "/residuals.csv");
        copfrail::write_residuals_csv(out, residuals, data);
    }
    {
        std::ofstream out(out_dir + "/trace.csv");
        copfrail::write_trace_csv(out, result);
    }
    if (dump_draws) {
        std::ofstream out(out_dir + "/draws.csv");
        out << "subject_id,q";
        for (int j = 1; j <= data.n_types(); ++j) out << ",w" << j;
        out << "\n";
        for (int i = 0; i < result.final_draws.n_subjects(); ++i) {
            for (int q = 0; q < result.final_draws.n_s(); ++q) {
                out << data.subjects[static_cast<std::size_t>(i)].id << ',' << q;
                const Eigen::VectorXd w = result.final_draws.w_draw(i, q);
                for (int j = 0; j < data.n_types(); ++j) out << ',' << w[j];
                out << "\n";
            }
        }
    }
    std::cout << "fit " << (result.converged ? "converged" : "did not converge") << " in " << result.n_iterations
              << " iterations; outputs in " << out_dir << "\n";
    return result.converged ? kExitOk : kExitNotConverged;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"copula-frailty models for multi-type recurrent event data"};
    app.require_subcommand(1);
    app.set_config("--config", "", "configuration file (key = value, sections per subcommand)");

    // ---- fit ----
    auto* fit_cmd = app.add_subcommand("fit", "fit a copula-frailty model to a dataset CSV");
    std::string fit_input, fit_model = "Cg", fit_out = ".";
    bool dump_draws = false;
    copfrail::FitConfig fit_cfg;
    fit_cmd->add_option("--input", fit_input, "input dataset CSV")->required();
    fit_cmd->add_option("--model", fit_model, "model label: Cg, CG, Gg, or GG");
    fit_cmd->add_option("--out", fit_out, "output directory")->required();
    auto* fit_seed_opt = fit_cmd->add_option("--seed", fit_cfg.seed, "RNG seed (drawn and printed if absent)");
    fit_cmd->add_flag("--dump-draws", dump_draws, "write the SE-stage frailty draws to draws.csv");
    add_fit_options(fit_cmd, fit_cfg);

    // ---- simulate ----
    auto* sim_cmd = app.add_subcommand("simulate", "generate a synthetic dataset CSV");
    copfrail::SimConfig sim_cfg;
    std::string sim_model = "Cg", sim_out = "data.csv";
    sim_cmd->add_option("--n", sim_cfg.n_subjects, "number of subjects");
    sim_cmd->add_option("--m", sim_cfg.n_types, "number of event types");
    sim_cmd->add_option("--model", sim_model, "model label: Cg, CG, Gg, or GG");
    sim_cmd->add_option("--copula-param", sim_cfg.copula_truth,
                        "copula truth: one Clayton alpha, or one shared rho, or all pairwise rho");
    sim_cmd->add_option("--alpha", sim_cfg.alpha_truth, "marginal variances, one per type");
    sim_cmd->add_option("--beta", sim_cfg.beta_truth, "treatment effects, one per type");
    sim_cmd->add_option("--censor-rate", sim_cfg.censor_rate, "exponential censoring rate");
    sim_cmd->add_option("--cutoff", sim_cfg.admin_cutoff, "administrative censoring time");
    auto* sim_seed_opt = sim_cmd->add_option("--seed", sim_cfg.seed, "RNG seed (drawn and printed if absent)");
    sim_cmd->add_option("--out", sim_out, "output CSV path")->required();

    // ---- study ----
    auto* study_cmd = app.add_subcommand("study", "replication study: bias, variance, MSE, coverage");
    copfrail::SimConfig study_cfg;
    copfrail::FitConfig study_fit_cfg;
    std::string study_model = "Cg", study_out = "study.csv";
    study_cmd->add_option("--n", study_cfg.n_subjects, "number of subjects per replicate");
    study_cmd->add_option("--m", study_cfg.n_types, "number of event types");
    study_cmd->add_option("--model", study_model, "model label: Cg, CG, Gg, or GG");
    study_cmd->add_option("--copula-param", study_cfg.copula_truth, "copula truth parameters");
    study_cmd->add_option("--alpha", study_cfg.alpha_truth, "marginal variances, one per type");
    study_cmd->add_option("--beta", study_cfg.beta_truth, "treatment effects, one per type");
    study_cmd->add_option("--censor-rate", study_cfg.censor_rate, "exponential censoring rate");
    study_cmd->add_option("--cutoff", study_cfg.admin_cutoff, "administrative censoring time");
    study_cmd->add_option("--replicates", study_cfg.n_replicates, "number of replicates");
    study_cmd->add_option("--seed", study_cfg.seed, "RNG seed")->required();
    study_cmd->add_option("--out", study_out, "output CSV path")->required();
    add_fit_options(study_cmd, study_fit_cfg);

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(fit_cmd)) {
            return run_fit(fit_input, fit_model, fit_out, fit_cfg, fit_seed_opt->count() > 0, dump_draws);
        }
        if (app.got_subcommand(sim_cmd)) {
            sim_cfg.model = copfrail::ModelSpec::from_label(sim_model);
            if (sim_seed_opt->count() == 0) {
                sim_cfg.seed = entropy_seed();
                std::cout << "seed: " << sim_cfg.seed << "\n";
            }
            sim_cfg.validate();
            copfrail::Rng rng(sim_cfg.seed);
            const copfrail::Dataset data = copfrail::generate_dataset(sim_cfg, rng);
            copfrail::save_dataset(data, sim_out);
            std::cout << "wrote " << data.n_subjects() << " subjects to " << sim_out << "\n";
            std::cout << "censoring fraction (no events of any type): " << copfrail::zero_event_fraction(data)
                      << "\n";
            return kExitOk;
        }
        if (app.got_subcommand(study_cmd)) {
            study_cfg.model = copfrail::ModelSpec::from_label(study_model);
            study_cfg.validate();
            const copfrail::StudyResult result = copfrail::run_study(study_cfg, study_fit_cfg, &std::cerr);
            std::ofstream out(study_out);
            copfrail::write_study_csv(out, result);
            std::cout << "study complete: " << result.n_included << "/" << result.n_replicates
                      << " replicates included; results in " << study_out << "\n";
            return kExitOk;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    }
    return kExitError;
}
