#ifndef TVHR_SYNTHESIS_HPP
#define TVHR_SYNTHESIS_HPP

#include <Eigen/Dense>

namespace tvhr {

enum class Effects { fixed, random };

// Prior on the interaction-component heterogeneity tau2: Unif(0,1) by default,
// Half-Normal(0, 0.5) (scale 0.5) as the sensitivity alternative.
enum class Tau2Prior { uniform, half_normal };

// Sampler for the bounded variance/correlation blocks.
enum class VarianceKernel { slice, random_walk };

const char* effects_name(Effects e);
const char* tau2_prior_name(Tau2Prior p);

// Between-study covariance from the spherical parameterisation
//   Sigma = [tau1^2, rho tau1 tau2; rho tau1 tau2, tau2^2], rho = cos(theta),
// which is positive semi-definite for any tau1, tau2 > 0 and theta in (0, pi).
Eigen::Matrix2d spherical_sigma(double tau1, double tau2, double theta);

}  // namespace tvhr

#endif
