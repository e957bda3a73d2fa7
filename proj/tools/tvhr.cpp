// tvhr: Bayesian pairwise and network meta-analysis of time-to-event outcomes
// under constant and time-varying hazard-ratio models.
//
// Subcommands:
//   diagnose  per-study proportional-hazards diagnostics (tests, KM, residuals)
//   ma        two-treatment pooling (constant and/or time-varying)
//   nma       network meta-analysis with ranks and probability-best grids
//   report    plot-ready data bundle from a completed run manifest
//
// Exit codes: 0 success, 1 validation failure, 2 fit failure, 3 diagnostics
// failure (convergence gate not met).

#include <CLI11.hpp>
#include <iostream>

#include "tvhr/pipeline.hpp"

namespace {

void add_common(CLI::App* cmd, tvhr::PipelineOptions& opt) {
    cmd->add_option("input", opt.input, "input file (IPD CSV by default)")->required();
    cmd->add_option("--config", opt.config, "JSON config file");
    cmd->add_option("--out-dir", opt.out_dir, "output directory");
    cmd->add_option("--reference", opt.load.reference,
                    "reference treatment label (default: lexicographically first)");
    cmd->add_option("--time-unit", opt.load.time_unit,
                    "unit of the time column: years|days|months");
    cmd->add_option("--kernels", opt.kernels,
                    "numeric kernel backend: auto|scalar|avx2");
}

void add_mcmc(CLI::App* cmd, tvhr::PipelineOptions& opt) {
    cmd->add_option("--protocol", opt.mcmc.protocol,
                    "sampling protocol preset: desk|paper");
    cmd->add_option("--seed", opt.mcmc.seed, "RNG seed");
    auto bind_opt = [cmd](const char* name, auto& target, const char* help) {
        cmd->add_option_function<typename std::decay_t<decltype(target)>::value_type>(
            name, [&target](const auto& v) { target = v; }, help);
    };
    bind_opt("--chains", opt.mcmc.chains, "number of chains");
    bind_opt("--burnin", opt.mcmc.burn_in, "burn-in iterations per chain");
    bind_opt("--samples", opt.mcmc.samples, "post-burn-in iterations per chain");
    bind_opt("--thin", opt.mcmc.thin, "thinning factor");
}

void add_model(CLI::App* cmd, tvhr::PipelineOptions& opt, std::string& effects,
               std::string& prior) {
    cmd->add_option("--model", opt.model, "ph|tvhr|both");
    cmd->add_option("--effects", effects, "fixed|random");
    cmd->add_option("--prior-tau2", prior,
                    "prior on the interaction heterogeneity: uniform|halfnormal");
    cmd->add_option("--landmarks", opt.landmarks,
                    "landmark times in years (space separated)");
    cmd->add_option("--input-kind", opt.input_kind, "ipd|stage1|aggregate");
}

void finish_model_flags(tvhr::PipelineOptions& opt, const std::string& effects,
                        const std::string& prior) {
    if (!effects.empty()) {
        if (effects == "fixed")
            opt.effects = tvhr::Effects::fixed;
        else if (effects == "random")
            opt.effects = tvhr::Effects::random;
        else
            throw tvhr::ValidationError("unknown effects: " + effects);
    }
    if (!prior.empty()) {
        if (prior == "uniform")
            opt.tau2_prior = tvhr::Tau2Prior::uniform;
        else if (prior == "halfnormal")
            opt.tau2_prior = tvhr::Tau2Prior::half_normal;
        else
            throw tvhr::ValidationError("unknown tau2 prior: " + prior);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Time-varying hazard-ratio meta-analysis"};
    app.require_subcommand(1);

    tvhr::PipelineOptions diag_opt;
    diag_opt.out_dir = "tvhr-diagnose";
    CLI::App* diag = app.add_subcommand("diagnose", "proportional-hazards diagnostics");
    add_common(diag, diag_opt);

    tvhr::PipelineOptions ma_opt;
    ma_opt.out_dir = "tvhr-ma";
    std::string ma_effects, ma_prior;
    CLI::App* ma = app.add_subcommand("ma", "pairwise meta-analysis");
    add_common(ma, ma_opt);
    add_mcmc(ma, ma_opt);
    add_model(ma, ma_opt, ma_effects, ma_prior);
    ma->add_flag("--sensitivity", ma_opt.sensitivity,
                 "also run the Half-Normal(0,0.5) tau2 prior and emit the "
                 "side-by-side table");

    tvhr::PipelineOptions nma_opt;
    nma_opt.out_dir = "tvhr-nma";
    std::string nma_effects, nma_prior, rank_dir;
    CLI::App* nma = app.add_subcommand("nma", "network meta-analysis");
    add_common(nma, nma_opt);
    add_mcmc(nma, nma_opt);
    add_model(nma, nma_opt, nma_effects, nma_prior);
    nma->add_option("--pbest-horizon-months", nma_opt.pbest_horizon_months,
                    "probability-best grid horizon in months");
    nma->add_option("--rank-direction", rank_dir,
                    "lower|higher hazard ratio is better (default lower)");
    nma->add_flag("--skip-failed", nma_opt.skip_failed,
                  "drop studies whose stage-1 fit fails instead of aborting");

    std::string report_manifest, report_out;
    CLI::App* rep = app.add_subcommand("report", "plot-data bundle from a manifest");
    rep->add_option("manifest", report_manifest, "run manifest path")->required();
    rep->add_option("--out-dir", report_out, "output directory (default: run dir)");

    CLI11_PARSE(app, argc, argv);

    try {
        tvhr::RunResult result;
        if (diag->parsed()) {
            result = tvhr::run_diagnose(diag_opt);
        } else if (ma->parsed()) {
            finish_model_flags(ma_opt, ma_effects, ma_prior);
            result = tvhr::run_ma(ma_opt);
        } else if (nma->parsed()) {
            finish_model_flags(nma_opt, nma_effects, nma_prior);
            if (rank_dir == "higher")
                nma_opt.rank_direction = tvhr::RankDirection::higher_hr_best;
            else if (!rank_dir.empty() && rank_dir != "lower")
                throw tvhr::ValidationError("unknown rank direction: " + rank_dir);
            result = tvhr::run_nma(nma_opt);
        } else if (rep->parsed()) {
            result = tvhr::run_report(report_manifest, report_out);
        }
        for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';
        if (!result.manifest_path.empty())
            std::cout << "manifest: " << result.manifest_path << '\n';
        if (result.exit_code == 3)
            std::cerr << "diagnostics gate failed: the report is not marked final\n";
        return result.exit_code;
    } catch (const tvhr::ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const tvhr::DiagnosticsError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
