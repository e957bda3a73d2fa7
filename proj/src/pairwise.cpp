#include "tvhr/pairwise.hpp"

#include <cmath>

#include "synthesis_util.hpp"
#include "tvhr/kernels.hpp"

namespace tvhr {

const char* effects_name(Effects e) {
    return e == Effects::fixed ? "fixed" : "random";
}

const char* tau2_prior_name(Tau2Prior p) {
    return p == Tau2Prior::half_normal ? "halfnormal" : "uniform";
}

Eigen::Matrix2d spherical_sigma(double tau1, double tau2, double theta) {
    const double rho = std::cos(theta);
    Eigen::Matrix2d s;
    s(0, 0) = tau1 * tau1;
    s(1, 1) = tau2 * tau2;
    s(0, 1) = s(1, 0) = rho * tau1 * tau2;
    return s;
}

namespace {

using detail::neg_inf;

void check_estimates(std::span<const PairwiseEstimate> est, int dim) {
    if (est.empty()) throw ValidationError("no study estimates supplied");
    for (const auto& e : est) {
        if (e.y.size() != dim || e.S.rows() != dim || e.S.cols() != dim)
            throw ValidationError("study " + e.study + ": expected dimension " +
                                  std::to_string(dim));
        if (dim == 1) {
            if (!(e.S(0, 0) > 0.0))
                throw FitError("study " + e.study + ": within-study variance must be > 0");
        } else {
            if (std::fabs(e.S(0, 1) - e.S(1, 0)) >
                1e-8 * (1.0 + std::fabs(e.S(0, 1))))
                throw FitError("study " + e.study +
                               ": within-study covariance is not symmetric");
            Eigen::LLT<Eigen::MatrixXd> llt(e.S);
            if (llt.info() != Eigen::Success)
                throw FitError("study " + e.study +
                               ": within-study covariance is not positive definite");
        }
    }
}

// --- univariate models ----------------------------------------------------

// y_i ~ N(d, S_i), d ~ N(0, v0): conjugate, so every sweep is an exact draw.
class UnivariateFixedModel final : public GibbsModel {
  public:
    UnivariateFixedModel(std::span<const PairwiseEstimate> est, double v0) {
        double prec = 1.0 / v0;
        double wsum = 0.0;
        for (const auto& e : est) {
            prec += 1.0 / e.S(0, 0);
            wsum += e.y[0] / e.S(0, 0);
        }
        mean_ = wsum / prec;
        sd_ = std::sqrt(1.0 / prec);
    }

    std::size_t state_size() const override { return 1; }
    const std::vector<std::string>& monitor_names() const override { return names_; }
    void init_chain(std::span<double> st, ChainScratch& scratch, int,
                    RngStream& rng) const override {
        scratch.init_blocks(0, 0.0);
        st[0] = rng.runif(-2.0, 2.0);
    }
    double log_density(std::span<const double> st) const override {
        const double z = (st[0] - mean_) / sd_;
        return -0.5 * z * z;
    }
    void sweep(std::span<double> st, ChainScratch&, bool, RngStream& rng) const override {
        st[0] = mean_ + sd_ * rng.rnorm();
    }
    void monitor(std::span<const double> st, std::span<double> out) const override {
        out[0] = st[0];
    }

  private:
    double mean_ = 0.0, sd_ = 1.0;
    std::vector<std::string> names_{"d"};
};

// y_i ~ N(delta_i, S_i), delta_i ~ N(d, tau^2), d ~ N(0, v0), tau ~ U(0,1)
class UnivariateRandomModel final : public GibbsModel {
  public:
    UnivariateRandomModel(std::span<const PairwiseEstimate> est, double v0,
                          VarianceKernel kernel)
        : v0_(v0), kernel_(kernel) {
        for (const auto& e : est) {
            y_.push_back(e.y[0]);
            s_.push_back(e.S(0, 0));
        }
        n_ = y_.size();
        names_ = {"d", "tau"};
        for (std::size_t i = 1; i <= n_; ++i)
            names_.push_back("delta[" + std::to_string(i) + "]");
    }

    std::size_t state_size() const override { return 2 + n_; }
    const std::vector<std::string>& monitor_names() const override { return names_; }
    std::vector<std::string> block_names() const override { return {"tau"}; }

    void init_chain(std::span<double> st, ChainScratch& scratch, int chain,
                    RngStream& rng) const override {
        scratch.init_blocks(1, 0.1);
        st[0] = rng.runif(-2.0, 2.0);
        st[1] = detail::tau_start(chain);
        for (std::size_t i = 0; i < n_; ++i) st[2 + i] = y_[i];
    }

    double log_density(std::span<const double> st) const override {
        const double d = st[0], tau = st[1];
        if (!(tau > 0.0) || !(tau < 1.0)) return neg_inf;
        double lp = -0.5 * d * d / v0_;
        for (std::size_t i = 0; i < n_; ++i) {
            const double delta = st[2 + i];
            const double r1 = y_[i] - delta;
            const double r2 = delta - d;
            lp += -0.5 * r1 * r1 / s_[i] - 0.5 * r2 * r2 / (tau * tau) - std::log(tau);
        }
        return lp;
    }

    void sweep(std::span<double> st, ChainScratch& scratch, bool adapting,
               RngStream& rng) const override {
        double& d = st[0];
        double& tau = st[1];
        const double tau2 = tau * tau;
        // study effects
        for (std::size_t i = 0; i < n_; ++i) {
            const double prec = 1.0 / s_[i] + 1.0 / tau2;
            const double mean = (y_[i] / s_[i] + d / tau2) / prec;
            st[2 + i] = mean + rng.rnorm() / std::sqrt(prec);
        }
        // pooled effect
        double sum_delta = 0.0;
        for (std::size_t i = 0; i < n_; ++i) sum_delta += st[2 + i];
        const double prec_d = static_cast<double>(n_) / tau2 + 1.0 / v0_;
        d = (sum_delta / tau2) / prec_d + rng.rnorm() / std::sqrt(prec_d);
        // heterogeneity
        double scatter = 0.0;
        for (std::size_t i = 0; i < n_; ++i) {
            const double r = st[2 + i] - d;
            scatter += r * r;
        }
        detail::update_tau_univariate(tau, scatter, static_cast<double>(n_), kernel_,
                                      scratch, 0, adapting, rng);
    }

    void monitor(std::span<const double> st, std::span<double> out) const override {
        for (std::size_t i = 0; i < 2 + n_; ++i) out[i] = st[i];
    }

  private:
    std::vector<double> y_, s_;
    std::size_t n_ = 0;
    double v0_;
    VarianceKernel kernel_;
    std::vector<std::string> names_;
};

// --- bivariate models -------------------------------------------------------

class BivariateFixedModel final : public GibbsModel {
  public:
    BivariateFixedModel(std::span<const PairwiseEstimate> est, double v0) {
        Eigen::Matrix2d prec = Eigen::Matrix2d::Identity() / v0;
        Eigen::Vector2d b = Eigen::Vector2d::Zero();
        for (const auto& e : est) {
            const Eigen::Matrix2d q = e.S.inverse();
            prec += q;
            b += q * e.y;
        }
        Eigen::LLT<Eigen::Matrix2d> llt(prec);
        mean_ = llt.solve(b);
        cov_ = llt.solve(Eigen::Matrix2d::Identity());
        chol_ = Eigen::LLT<Eigen::Matrix2d>(cov_).matrixL();
    }

    std::size_t state_size() const override { return 2; }
    const std::vector<std::string>& monitor_names() const override { return names_; }
    void init_chain(std::span<double> st, ChainScratch& scratch, int,
                    RngStream& rng) const override {
        scratch.init_blocks(0, 0.0);
        st[0] = rng.runif(-2.0, 2.0);
        st[1] = rng.runif(-2.0, 2.0);
    }
    double log_density(std::span<const double> st) const override {
        const Eigen::Vector2d x(st[0], st[1]);
        return detail::mvn_logpdf(x, mean_, cov_);
    }
    void sweep(std::span<double> st, ChainScratch&, bool, RngStream& rng) const override {
        const Eigen::Vector2d z(rng.rnorm(), rng.rnorm());
        const Eigen::Vector2d x = mean_ + chol_ * z;
        st[0] = x[0];
        st[1] = x[1];
    }
    void monitor(std::span<const double> st, std::span<double> out) const override {
        out[0] = st[0];
        out[1] = st[1];
    }

  private:
    Eigen::Vector2d mean_;
    Eigen::Matrix2d cov_;
    Eigen::Matrix2d chol_;
    std::vector<std::string> names_{"d1", "d2"};
};

// Layout: [d1, d2, tau1, tau2, theta, delta_{1,1}, delta_{1,2}, ...]
class BivariateRandomModel final : public GibbsModel {
  public:
    BivariateRandomModel(std::span<const PairwiseEstimate> est, const PairwiseModelSpec& spec)
        : spec_(spec) {
        for (const auto& e : est) {
            y_.push_back(e.y.head<2>());
            q_.push_back(e.S.inverse());
        }
        n_ = y_.size();
        names_ = {"d1", "d2", "tau1", "tau2", "theta", "rho"};
        for (std::size_t i = 1; i <= n_; ++i) {
            names_.push_back("delta1[" + std::to_string(i) + "]");
            names_.push_back("delta2[" + std::to_string(i) + "]");
        }
    }

    std::size_t state_size() const override { return 5 + 2 * n_; }
    const std::vector<std::string>& monitor_names() const override { return names_; }
    std::vector<std::string> block_names() const override {
        return {"tau1", "tau2", "theta"};
    }

    void init_chain(std::span<double> st, ChainScratch& scratch, int chain,
                    RngStream& rng) const override {
        scratch.init_blocks(3, 0.1);
        scratch.rw_step[2] = 0.3;
        st[0] = rng.runif(-2.0, 2.0);
        st[1] = rng.runif(-2.0, 2.0);
        st[2] = detail::tau_start(chain);
        st[3] = detail::tau_start(chain);
        st[4] = detail::theta_start(chain);
        for (std::size_t i = 0; i < n_; ++i) {
            st[5 + 2 * i] = y_[i][0];
            st[5 + 2 * i + 1] = y_[i][1];
        }
    }

    double log_density(std::span<const double> st) const override {
        const Eigen::Vector2d d(st[0], st[1]);
        const double tau1 = st[2], tau2 = st[3], theta = st[4];
        if (!(tau1 > 0.0) || !(tau1 < 1.0)) return neg_inf;
        if (!(theta > 0.0) || !(theta < detail::pi)) return neg_inf;
        if (spec_.tau2_prior == Tau2Prior::uniform && !(tau2 > 0.0 && tau2 < 1.0))
            return neg_inf;
        if (!(tau2 > 0.0)) return neg_inf;
        const Eigen::Matrix2d sigma = spherical_sigma(tau1, tau2, theta);
        double lp = -0.5 * d.squaredNorm() / spec_.d_prior_variance;
        if (spec_.tau2_prior == Tau2Prior::half_normal)
            lp += detail::half_normal_logprior(tau2, spec_.half_normal_scale);
        for (std::size_t i = 0; i < n_; ++i) {
            const Eigen::Vector2d delta(st[5 + 2 * i], st[5 + 2 * i + 1]);
            const Eigen::Vector2d r = y_[i] - delta;
            lp += -0.5 * r.dot(q_[i] * r);
            lp += detail::mvn_logpdf(delta, d, sigma);
        }
        return lp;
    }

    void sweep(std::span<double> st, ChainScratch& scratch, bool adapting,
               RngStream& rng) const override {
        Eigen::Vector2d d(st[0], st[1]);
        double tau1 = st[2], tau2 = st[3], theta = st[4];
        Eigen::Matrix2d sigma = spherical_sigma(tau1, tau2, theta);
        Eigen::Matrix2d sigma_inv = sigma.inverse();

        // study effects: exact bivariate-normal conditionals
        for (std::size_t i = 0; i < n_; ++i) {
            const Eigen::Matrix2d a = q_[i] + sigma_inv;
            const Eigen::Vector2d b = q_[i] * y_[i] + sigma_inv * d;
            const Eigen::Vector2d delta = mvn_draw_canonical(a, b, rng);
            st[5 + 2 * i] = delta[0];
            st[5 + 2 * i + 1] = delta[1];
        }
        // pooled effect
        Eigen::Vector2d sum_delta = Eigen::Vector2d::Zero();
        for (std::size_t i = 0; i < n_; ++i)
            sum_delta += Eigen::Vector2d(st[5 + 2 * i], st[5 + 2 * i + 1]);
        const Eigen::Matrix2d a_d =
            static_cast<double>(n_) * sigma_inv +
            Eigen::Matrix2d::Identity() / spec_.d_prior_variance;
        d = mvn_draw_canonical(a_d, sigma_inv * sum_delta, rng);
        st[0] = d[0];
        st[1] = d[1];
        // heterogeneity: scatter of study effects about d
        Eigen::Matrix2d scatter = Eigen::Matrix2d::Zero();
        for (std::size_t i = 0; i < n_; ++i) {
            const Eigen::Vector2d r =
                Eigen::Vector2d(st[5 + 2 * i], st[5 + 2 * i + 1]) - d;
            scatter += r * r.transpose();
        }
        detail::update_spherical_variance(tau1, tau2, theta, scatter,
                                          static_cast<double>(n_), spec_.tau2_prior,
                                          spec_.half_normal_scale, spec_.kernel,
                                          scratch, 0, adapting, rng);
        st[2] = tau1;
        st[3] = tau2;
        st[4] = theta;
    }

    void monitor(std::span<const double> st, std::span<double> out) const override {
        out[0] = st[0];
        out[1] = st[1];
        out[2] = st[2];
        out[3] = st[3];
        out[4] = st[4];
        out[5] = std::cos(st[4]);
        for (std::size_t i = 0; i < 2 * n_; ++i) out[6 + i] = st[5 + i];
    }

  private:
    std::vector<Eigen::Vector2d> y_;
    std::vector<Eigen::Matrix2d> q_;
    std::size_t n_ = 0;
    PairwiseModelSpec spec_;
    std::vector<std::string> names_;
};

std::vector<std::string> heterogeneity_warnings(std::size_t n_studies, Effects eff) {
    std::vector<std::string> w;
    if (eff == Effects::random && n_studies <= 2)
        w.push_back("between-study heterogeneity is weakly identified with " +
                    std::to_string(n_studies) +
                    " studies; tau posteriors stay close to their priors");
    return w;
}

}  // namespace

Summary PairwisePosterior::d_summary(int component) const {
    const std::string name = dim == 1 ? "d" : (component == 0 ? "d1" : "d2");
    return summarize(draws.pooled(draws.param_index(name)));
}

double PairwisePosterior::prob_interaction_positive() const {
    if (dim != 2)
        throw FitError("interaction probability needs a bivariate posterior");
    const auto d2 = draws.pooled(draws.param_index("d2"));
    return static_cast<double>(kernels::count_greater(d2, 0.0)) /
           static_cast<double>(d2.size());
}

std::vector<double> PairwisePosterior::hr_draws(double t) const {
    if (!(t > 0.0)) throw FitError("hr_draws: t must be positive");
    if (dim == 1) {
        const auto d = draws.pooled(draws.param_index("d"));
        std::vector<double> out(d.size());
        kernels::vexp(d, out);
        return out;
    }
    const auto d1 = draws.pooled(draws.param_index("d1"));
    const auto d2 = draws.pooled(draws.param_index("d2"));
    std::vector<double> out(d1.size());
    kernels::affine_exp(d1, d2, std::log(t), out);
    return out;
}

PairwisePosterior fit_univariate_ma(std::span<const PairwiseEstimate> estimates,
                                    const PairwiseModelSpec& spec,
                                    const SamplerProtocol& protocol) {
    check_estimates(estimates, 1);
    if (spec.effects == Effects::random && estimates.size() < 2)
        throw FitError(
            "random-effects pooling needs at least 2 studies; use fixed effects "
            "for a single study");
    PairwisePosterior post;
    post.dim = 1;
    post.spec = spec;
    post.gate_parameters = {"d"};
    post.warnings = heterogeneity_warnings(estimates.size(), spec.effects);
    if (spec.effects == Effects::fixed) {
        UnivariateFixedModel m(estimates, spec.d_prior_variance);
        post.draws = run_chains(m, protocol);
    } else {
        UnivariateRandomModel m(estimates, spec.d_prior_variance, spec.kernel);
        post.draws = run_chains(m, protocol);
    }
    return post;
}

PairwisePosterior fit_bivariate_ma(std::span<const PairwiseEstimate> estimates,
                                   const PairwiseModelSpec& spec,
                                   const SamplerProtocol& protocol) {
    check_estimates(estimates, 2);
    if (spec.effects == Effects::random && estimates.size() < 2)
        throw FitError(
            "random-effects pooling needs at least 2 studies; use fixed effects "
            "for a single study");
    PairwisePosterior post;
    post.dim = 2;
    post.spec = spec;
    post.gate_parameters = {"d1", "d2"};
    post.warnings = heterogeneity_warnings(estimates.size(), spec.effects);
    if (spec.effects == Effects::fixed) {
        BivariateFixedModel m(estimates, spec.d_prior_variance);
        post.draws = run_chains(m, protocol);
    } else {
        BivariateRandomModel m(estimates, spec);
        post.draws = run_chains(m, protocol);
    }
    return post;
}

std::vector<HrCurvePoint> pooled_hr_curve(const PairwisePosterior& post,
                                          std::span<const double> times) {
    if (post.dim != 2)
        throw FitError("pooled_hr_curve needs a bivariate posterior");
    std::vector<HrCurvePoint> out;
    out.reserve(times.size());
    for (double t : times) {
        if (!(t > 0.0)) throw FitError("pooled_hr_curve: times must be positive");
        HrCurvePoint p;
        p.time = t;
        p.hr = summarize(post.hr_draws(t));
        out.push_back(p);
    }
    return out;
}

std::pair<PairwisePosterior, PairwisePosterior> prior_sensitivity(
    std::span<const PairwiseEstimate> estimates, const PairwiseModelSpec& base_spec,
    const SamplerProtocol& protocol) {
    PairwiseModelSpec uniform = base_spec;
    uniform.tau2_prior = Tau2Prior::uniform;
    PairwiseModelSpec halfnormal = base_spec;
    halfnormal.tau2_prior = Tau2Prior::half_normal;
    return {fit_bivariate_ma(estimates, uniform, protocol),
            fit_bivariate_ma(estimates, halfnormal, protocol)};
}

}  // namespace tvhr
