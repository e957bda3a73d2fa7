#ifndef TVHR_NETWORK_HPP
#define TVHR_NETWORK_HPP

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tvhr/diagnostics.hpp"
#include "tvhr/mcmc.hpp"
#include "tvhr/stats.hpp"
#include "tvhr/synthesis.hpp"

namespace tvhr {

struct NmaModelSpec {
    Effects effects = Effects::fixed;
    Tau2Prior tau2_prior = Tau2Prior::uniform;
    VarianceKernel kernel = VarianceKernel::slice;
    double d_prior_variance = 1000.0;
    double half_normal_scale = 0.5;
};

// Stage-1 contrasts of one study: arm_treatments lists t[i,k] for k = 1..K
// (ascending, first entry the study reference); y stacks the m coefficients of
// each contrast k = 2..K against arm 1, S is the joint covariance across all
// stacked coefficients from the study's joint Cox fit.
struct NmaContrast {
    std::string study;
    std::vector<int> arm_treatments;
    Eigen::VectorXd y;
    Eigen::MatrixXd S;
    double max_time = 0.0;

    int n_arms() const { return static_cast<int>(arm_treatments.size()); }
};

enum class RankDirection { lower_hr_best, higher_hr_best };

struct NmaPosterior {
    int dim = 1;  // coefficients per contrast: 1 constant-HR, 2 time-varying
    int n_treatments = 0;
    std::vector<std::string> treatment_labels;  // label of index t at [t-1]
    NmaModelSpec spec;
    PosteriorDraws draws;
    std::vector<std::string> gate_parameters;
    std::vector<std::string> warnings;
    std::vector<double> max_obs_time;  // per treatment index (years)

    // per-draw log HR of treatment a vs b; bivariate models need t (> 0),
    // the constant model ignores it
    std::vector<double> log_hr_draws(int a, int b,
                                     std::optional<double> t = std::nullopt) const;
};

// Conditional variance multiplier of the multi-arm construction: the factor on
// Sigma for arm k given arms 2..k-1. Equals 1 for k = 2 (two-arm studies) and
// keeps every contrast's marginal covariance at Sigma with cross-contrast
// covariance Sigma/2.
double multiarm_variance_factor(int k);

// Ancestral draw of the stacked study effects delta_{i,2..K} given the
// contrast means (d_{t_k} - d_{t_1}) and Sigma; drives the prior-predictive
// checks of the multi-arm correction.
Eigen::VectorXd sample_multiarm_prior(const std::vector<Eigen::VectorXd>& contrast_means,
                                      const Eigen::MatrixXd& sigma, RngStream& rng);

// Bayesian network meta-analysis over the contrast data. dim = 1 fits the
// constant-HR model, dim = 2 the time-varying model. Fixed effects set the
// between-study covariance to zero so contrasts equal differences of basic
// parameters; random effects use the conditional multi-arm construction.
NmaPosterior fit_nma(std::span<const NmaContrast> contrasts,
                     const std::vector<std::string>& treatment_labels, int dim,
                     const NmaModelSpec& spec, const SamplerProtocol& protocol);

// HR summaries of a vs b (per-draw exp of the basic-parameter difference, so
// consistency holds by construction).
Summary relative_effect(const NmaPosterior& post, int a, int b,
                        std::optional<double> t = std::nullopt);

struct RankSummary {
    int treatment = 0;
    double mean_rank = 0.0;
    double rank_lo = 0.0;  // 2.5% quantile of the rank distribution
    double rank_hi = 0.0;  // 97.5%
    double p_best = 0.0;
    std::vector<double> rank_probs;  // P(rank = r), r = 1..n_t
};

// Per-draw ranking of all treatments by hazard at time t (rank 1 = best).
std::vector<RankSummary> rank_treatments(
    const NmaPosterior& post, std::optional<double> t = std::nullopt,
    RankDirection direction = RankDirection::lower_hr_best);

// P(best) per treatment (rows) and grid time (columns); every column sums to 1.
Eigen::MatrixXd probability_best_grid(
    const NmaPosterior& post, std::span<const double> times_years,
    RankDirection direction = RankDirection::lower_hr_best);

}  // namespace tvhr

#endif
