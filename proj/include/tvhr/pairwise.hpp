#ifndef TVHR_PAIRWISE_HPP
#define TVHR_PAIRWISE_HPP

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tvhr/diagnostics.hpp"
#include "tvhr/mcmc.hpp"
#include "tvhr/stats.hpp"
#include "tvhr/synthesis.hpp"

namespace tvhr {

struct PairwiseModelSpec {
    Effects effects = Effects::random;
    Tau2Prior tau2_prior = Tau2Prior::uniform;
    VarianceKernel kernel = VarianceKernel::slice;
    double d_prior_variance = 1000.0;
    double half_normal_scale = 0.5;
};

// Stage-1 estimate for one study: y is the coefficient vector (log HR, and for
// the time-varying model the treatment x log-time interaction), S its
// within-study covariance, treated as known.
struct PairwiseEstimate {
    std::string study;
    Eigen::VectorXd y;
    Eigen::MatrixXd S;
};

struct PairwisePosterior {
    int dim = 1;  // 1: pooled log HR only; 2: (log HR, interaction)
    PairwiseModelSpec spec;
    PosteriorDraws draws;
    std::vector<std::string> gate_parameters;  // basic parameters for gating
    std::vector<std::string> warnings;

    Summary d_summary(int component = 0) const;
    // fraction of retained draws with the interaction strictly positive
    double prob_interaction_positive() const;
    // pooled per-draw HR(t) = exp(d1 + d2 log t); t ignored when dim == 1
    std::vector<double> hr_draws(double t) const;
};

// Random-effects (or fixed-effect) pooling of scalar log hazard ratios:
// y_i ~ N(delta_i, S_i), delta_i ~ N(d, tau^2), d ~ N(0, 1000), tau ~ U(0,1).
PairwisePosterior fit_univariate_ma(std::span<const PairwiseEstimate> estimates,
                                    const PairwiseModelSpec& spec,
                                    const SamplerProtocol& protocol);

// Bivariate pooling of (log HR, interaction) with the spherical between-study
// covariance; reports d, the Sigma components and P(d2 > 0).
PairwisePosterior fit_bivariate_ma(std::span<const PairwiseEstimate> estimates,
                                   const PairwiseModelSpec& spec,
                                   const SamplerProtocol& protocol);

struct HrCurvePoint {
    double time = 0.0;
    Summary hr;
};

// Landmark HR summaries from a bivariate posterior (summaries of transformed
// draws, not transforms of summaries).
std::vector<HrCurvePoint> pooled_hr_curve(const PairwisePosterior& post,
                                          std::span<const double> times);

// The same bivariate fit under the Unif(0,1) and Half-Normal(0,0.5) tau2
// priors with identical seeds; first = uniform, second = half-normal.
std::pair<PairwisePosterior, PairwisePosterior> prior_sensitivity(
    std::span<const PairwiseEstimate> estimates, const PairwiseModelSpec& base_spec,
    const SamplerProtocol& protocol);

}  // namespace tvhr

#endif
