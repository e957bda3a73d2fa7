#ifndef TVHR_SRC_SYNTHESIS_UTIL_HPP
#define TVHR_SRC_SYNTHESIS_UTIL_HPP

// Shared internals of the pairwise and network synthesis models: the
// variance/correlation block updates and small MVN helpers. The conditional of
// the heterogeneity parameters given the level-2 residuals only depends on the
// residual scatter matrix and the number of factors, so both models route
// through the same updaters.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>

#include "tvhr/mcmc.hpp"
#include "tvhr/synthesis.hpp"

namespace tvhr::detail {

inline constexpr double pi = 3.14159265358979323846;
inline constexpr double neg_inf = -std::numeric_limits<double>::infinity();

// -(n/2) log|Sigma| - tr(Sigma^-1 Sc)/2 for the 2x2 spherical Sigma
inline double scatter_logdensity2(const Eigen::Matrix2d& scatter, double n_factors,
                                  double tau1, double tau2, double theta) {
    if (!(tau1 > 0.0) || !(tau2 > 0.0) || !(theta > 0.0) || !(theta < pi))
        return neg_inf;
    const double rho = std::cos(theta);
    const double det = tau1 * tau1 * tau2 * tau2 * (1.0 - rho * rho);
    if (!(det > 0.0)) return neg_inf;
    // closed-form inverse of [t1^2, r t1 t2; r t1 t2, t2^2]
    const double inv_det = 1.0 / det;
    const double i00 = tau2 * tau2 * inv_det;
    const double i11 = tau1 * tau1 * inv_det;
    const double i01 = -rho * tau1 * tau2 * inv_det;
    const double trace = i00 * scatter(0, 0) + i11 * scatter(1, 1) +
                         2.0 * i01 * scatter(0, 1);
    return -0.5 * n_factors * std::log(det) - 0.5 * trace;
}

inline double half_normal_logprior(double x, double scale) {
    if (!(x > 0.0)) return neg_inf;
    return -0.5 * x * x / (scale * scale);
}

// One scalar block update through the configured kernel. Slice updates log an
// acceptance of 1 so the audit trail stays complete.
inline double update_scalar_block(double x0, const std::function<double(double)>& logf,
                                  double lo, double hi, double width,
                                  VarianceKernel kernel, ChainScratch& scratch,
                                  std::size_t block, bool adapting, RngStream& rng) {
    if (kernel == VarianceKernel::slice) {
        const double x1 = slice_update(x0, logf, width, lo, hi, rng);
        ++scratch.proposals[block];
        ++scratch.accepts[block];
        return x1;
    }
    return reflect_rw_update(x0, logf, lo, hi, scratch.rw_step[block], adapting,
                             scratch.proposals[block], scratch.accepts[block],
                             scratch.window_proposals[block],
                             scratch.window_accepts[block], rng);
}

// Update (tau1, tau2, theta) in place given the level-2 residual scatter.
// tau1 ~ U(0,1); tau2 ~ U(0,1) or Half-Normal(0, hn_scale); theta ~ U(0, pi).
inline void update_spherical_variance(double& tau1, double& tau2, double& theta,
                                      const Eigen::Matrix2d& scatter,
                                      double n_factors, Tau2Prior tau2_prior,
                                      double hn_scale, VarianceKernel kernel,
                                      ChainScratch& scratch, std::size_t block0,
                                      bool adapting, RngStream& rng) {
    const double t2_hi = tau2_prior == Tau2Prior::half_normal
                             ? std::numeric_limits<double>::infinity()
                             : 1.0;
    auto logf_tau1 = [&](double t1) {
        return scatter_logdensity2(scatter, n_factors, t1, tau2, theta);
    };
    tau1 = update_scalar_block(tau1, logf_tau1, 0.0, 1.0, 0.25, kernel, scratch,
                               block0, adapting, rng);
    auto logf_tau2 = [&](double t2) {
        double lp = scatter_logdensity2(scatter, n_factors, tau1, t2, theta);
        if (tau2_prior == Tau2Prior::half_normal)
            lp += half_normal_logprior(t2, hn_scale);
        return lp;
    };
    tau2 = update_scalar_block(tau2, logf_tau2, 0.0, t2_hi, 0.25, kernel, scratch,
                               block0 + 1, adapting, rng);
    auto logf_theta = [&](double th) {
        return scatter_logdensity2(scatter, n_factors, tau1, tau2, th);
    };
    theta = update_scalar_block(theta, logf_theta, 0.0, pi, 0.5, kernel, scratch,
                                block0 + 2, adapting, rng);
}

// Univariate analogue: tau ~ U(0,1) against scalar scatter sum.
inline void update_tau_univariate(double& tau, double scatter, double n_factors,
                                  VarianceKernel kernel, ChainScratch& scratch,
                                  std::size_t block, bool adapting, RngStream& rng) {
    auto logf = [&](double t) {
        if (!(t > 0.0) || !(t < 1.0)) return neg_inf;
        return -n_factors * std::log(t) - 0.5 * scatter / (t * t);
    };
    tau = update_scalar_block(tau, logf, 0.0, 1.0, 0.25, kernel, scratch, block,
                              adapting, rng);
}

inline double mvn_logpdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                         const Eigen::MatrixXd& cov) {
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) return neg_inf;
    const Eigen::VectorXd e = x - mean;
    const Eigen::VectorXd half = llt.matrixL().solve(e);
    double logdet = 0.0;
    for (Eigen::Index i = 0; i < cov.rows(); ++i)
        logdet += std::log(llt.matrixL()(i, i));
    return -0.5 * half.squaredNorm() - logdet -
           0.5 * static_cast<double>(cov.rows()) * std::log(2.0 * pi);
}

// over-dispersed chain starts for the heterogeneity blocks
inline double tau_start(int chain) {
    constexpr double starts[3] = {0.1, 0.5, 0.9};
    return starts[chain % 3];
}
inline double theta_start(int chain) {
    constexpr double starts[3] = {pi / 4.0, pi / 2.0, 3.0 * pi / 4.0};
    return starts[chain % 3];
}

}  // namespace tvhr::detail

#endif
