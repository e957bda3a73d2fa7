#ifndef TVHR_PIPELINE_HPP
#define TVHR_PIPELINE_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tvhr/network.hpp"
#include "tvhr/pairwise.hpp"
#include "tvhr/study_data.hpp"

namespace tvhr {

struct McmcOptions {
    std::string protocol = "desk";  // desk | paper
    std::optional<int> chains;
    std::optional<std::int64_t> burn_in;
    std::optional<std::int64_t> samples;
    std::optional<int> thin;
    std::uint64_t seed = 1;
};

SamplerProtocol make_protocol(const McmcOptions& opts);

struct PipelineOptions {
    std::string input;
    std::string input_kind = "ipd";  // ipd | stage1 | aggregate
    std::string config;              // optional JSON config path
    std::string out_dir = "tvhr-out";
    LoadOptions load;
    std::string model = "both";  // ph | tvhr | both
    std::optional<Effects> effects;  // default: random for ma, fixed for nma
    Tau2Prior tau2_prior = Tau2Prior::uniform;
    VarianceKernel kernel = VarianceKernel::slice;
    bool sensitivity = false;
    McmcOptions mcmc;
    std::vector<double> landmarks;  // empty: per-command default
    int pbest_horizon_months = 60;
    RankDirection rank_direction = RankDirection::lower_hr_best;
    bool skip_failed = false;
    std::string kernels = "auto";
};

// Fill options from the JSON config file (CLI flags are applied on top).
void apply_config(PipelineOptions& opts);

struct RunResult {
    int exit_code = 0;  // 0 ok, 3 diagnostics gate failed
    std::string manifest_path;
    bool final_status = true;
    std::vector<std::string> warnings;
};

// Per-study PH diagnostics: Schoenfeld trend tests, KM curves, residual series.
RunResult run_diagnose(const PipelineOptions& opts);

// Pairwise pipeline: stage-1 fits, univariate and/or bivariate pooling,
// landmark table, draws, diagnostics, manifest.
RunResult run_ma(const PipelineOptions& opts);

// Network pipeline: joint stage-1 fits, constant and/or time-varying NMA,
// landmark/rank table, P(best) grid, draws, diagnostics, manifest.
RunResult run_nma(const PipelineOptions& opts);

// Plot-data bundle from a completed run: HR-vs-time curves, P(best) series,
// heatmap matrix, trace and autocorrelation series.
RunResult run_report(const std::string& manifest_path, const std::string& out_dir = "");

// FNV-1a 64-bit over a byte string (manifest content hashes).
std::uint64_t fnv1a64(const std::string& bytes);
std::string file_hash_hex(const std::string& path);

}  // namespace tvhr

#endif
