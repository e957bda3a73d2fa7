#include <doctest.h>

#include <cmath>

#include "tvhr/kernels.hpp"
#include "tvhr/pairwise.hpp"

using namespace tvhr;

TEST_SUITE_BEGIN("pairwise");

namespace {

PairwiseEstimate uni(const std::string& id, double y, double var) {
    PairwiseEstimate e;
    e.study = id;
    e.y.resize(1);
    e.y[0] = y;
    e.S.resize(1, 1);
    e.S(0, 0) = var;
    return e;
}

PairwiseEstimate biv(const std::string& id, double y1, double y2, double v1,
                     double c12, double v2) {
    PairwiseEstimate e;
    e.study = id;
    e.y.resize(2);
    e.y << y1, y2;
    e.S.resize(2, 2);
    e.S << v1, c12, c12, v2;
    return e;
}

double mc_se(const PairwisePosterior& post, const std::string& name) {
    const double e = ess(post.draws, post.draws.param_index(name));
    const Summary s = summarize(post.draws.pooled(post.draws.param_index(name)));
    return s.sd / std::sqrt(e);
}

// study-level draws from the bivariate generative model
std::vector<PairwiseEstimate> simulate_bivariate(RngStream& rng, int n, double d1,
                                                 double d2, double tau1, double tau2,
                                                 double rho, double s1, double s2,
                                                 double within_corr) {
    Eigen::Matrix2d sigma;
    sigma << tau1 * tau1, rho * tau1 * tau2, rho * tau1 * tau2, tau2 * tau2;
    Eigen::Matrix2d S;
    S << s1 * s1, within_corr * s1 * s2, within_corr * s1 * s2, s2 * s2;
    std::vector<PairwiseEstimate> out;
    for (int i = 0; i < n; ++i) {
        const Eigen::Vector2d delta =
            mvn_draw(Eigen::Vector2d(d1, d2),
                     sigma + 1e-12 * Eigen::Matrix2d::Identity(), rng);
        const Eigen::Vector2d y = mvn_draw(delta, S, rng);
        PairwiseEstimate e;
        e.study = "sim" + std::to_string(i + 1);
        e.y = y;
        e.S = S;
        out.push_back(std::move(e));
    }
    return out;
}

}  // namespace

TEST_CASE("single study, fixed effect: posterior follows the data") {
    const std::vector<PairwiseEstimate> est = {uni("s1", -0.4, 0.02)};
    PairwiseModelSpec spec;
    spec.effects = Effects::fixed;
    const auto post = fit_univariate_ma(est, spec, desk_protocol(100));
    const Summary d = post.d_summary();
    CHECK(std::fabs(d.mean - (-0.4)) < 4.0 * mc_se(post, "d") + 1e-3);
    CHECK(d.sd == doctest::Approx(std::sqrt(0.02)).epsilon(0.05));
}

TEST_CASE("fixed-effect pooling matches the precision-weighted closed form") {
    const std::vector<PairwiseEstimate> est = {uni("s1", -0.5, 0.04),
                                               uni("s2", -0.2, 0.09),
                                               uni("s3", -0.35, 0.0225)};
    PairwiseModelSpec spec;
    spec.effects = Effects::fixed;
    const auto post = fit_univariate_ma(est, spec, desk_protocol(101));
    double wsum = 1.0 / 1000.0, ysum = 0.0;
    for (const auto& e : est) {
        wsum += 1.0 / e.S(0, 0);
        ysum += e.y[0] / e.S(0, 0);
    }
    const double exact_mean = ysum / wsum;
    const double exact_sd = std::sqrt(1.0 / wsum);
    const Summary d = post.d_summary();
    const double se = mc_se(post, "d");
    CHECK(std::fabs(d.mean - exact_mean) < 3.0 * se);
    CHECK(std::fabs(d.sd - exact_sd) < 3.0 * exact_sd / std::sqrt(2.0 * 15000.0));
}

TEST_CASE("bivariate fixed effect matches the multivariate closed form") {
    const std::vector<PairwiseEstimate> est = {
        biv("s1", -0.5, 0.1, 0.04, -0.01, 0.02),
        biv("s2", -0.3, 0.05, 0.09, 0.02, 0.03),
        biv("s3", -0.45, 0.12, 0.0225, 0.0, 0.015)};
    PairwiseModelSpec spec;
    spec.effects = Effects::fixed;
    const auto post = fit_bivariate_ma(est, spec, desk_protocol(102));
    Eigen::Matrix2d prec = Eigen::Matrix2d::Identity() / 1000.0;
    Eigen::Vector2d b = Eigen::Vector2d::Zero();
    for (const auto& e : est) {
        prec += e.S.inverse();
        b += e.S.inverse() * e.y;
    }
    const Eigen::Vector2d exact_mean = prec.inverse() * b;
    const Eigen::Matrix2d exact_cov = prec.inverse();
    for (int c = 0; c < 2; ++c) {
        const std::string name = c == 0 ? "d1" : "d2";
        const Summary s = summarize(post.draws.pooled(post.draws.param_index(name)));
        CHECK(std::fabs(s.mean - exact_mean[c]) < 3.0 * mc_se(post, name));
        CHECK(std::fabs(s.sd - std::sqrt(exact_cov(c, c))) <
              3.0 * std::sqrt(exact_cov(c, c)) / std::sqrt(2.0 * 15000.0));
    }
}

TEST_CASE("non-informative data reverts to the prior") {
    const std::vector<PairwiseEstimate> est = {biv("s1", 0.3, -0.2, 1e6, 0.0, 1e6),
                                               biv("s2", -0.1, 0.4, 1e6, 0.0, 1e6)};
    PairwiseModelSpec spec;
    spec.effects = Effects::fixed;
    const auto post = fit_bivariate_ma(est, spec, desk_protocol(103));
    for (const char* name : {"d1", "d2"}) {
        const Summary s = summarize(post.draws.pooled(post.draws.param_index(name)));
        CHECK(s.sd == doctest::Approx(std::sqrt(1000.0)).epsilon(0.05));
        CHECK(std::fabs(s.mean) < 1.5);
    }
}

TEST_CASE("random effects requires two studies") {
    const std::vector<PairwiseEstimate> est = {uni("s1", 0.1, 0.02)};
    PairwiseModelSpec spec;
    spec.effects = Effects::random;
    CHECK_THROWS_WITH_AS(fit_univariate_ma(est, spec, desk_protocol(1)),
                         doctest::Contains("fixed effects"), FitError);
}

TEST_CASE("non-positive-definite covariance names the study") {
    const std::vector<PairwiseEstimate> est = {biv("good", 0, 0, 0.1, 0.0, 0.1),
                                               biv("bad", 0, 0, 0.1, 0.5, 0.1)};
    PairwiseModelSpec spec;
    CHECK_THROWS_WITH_AS(fit_bivariate_ma(est, spec, desk_protocol(1)),
                         doctest::Contains("bad"), FitError);
}

TEST_CASE("random-effects recovery of a known bivariate truth") {
    RngStream rng(2024, 7);
    const auto est = simulate_bivariate(rng, 30, -0.3, 0.1, 0.1, 0.05, 0.3, 0.12,
                                        0.08, -0.3);
    PairwiseModelSpec spec;  // random effects, uniform priors, slice kernel
    const auto post = fit_bivariate_ma(est, spec, desk_protocol(2024));
    const Summary d1 = post.d_summary(0);
    const Summary d2 = post.d_summary(1);
    CHECK(d1.lo95 <= -0.3);
    CHECK(d1.hi95 >= -0.3);
    CHECK(d2.lo95 <= 0.1);
    CHECK(d2.hi95 >= 0.1);
    CHECK(post.prob_interaction_positive() > 0.9);

    // every retained heterogeneity draw respects its support
    const auto tau1 = post.draws.pooled(post.draws.param_index("tau1"));
    const auto tau2 = post.draws.pooled(post.draws.param_index("tau2"));
    const auto theta = post.draws.pooled(post.draws.param_index("theta"));
    const auto rho = post.draws.pooled(post.draws.param_index("rho"));
    for (std::size_t i = 0; i < tau1.size(); ++i) {
        REQUIRE(tau1[i] > 0.0);
        REQUIRE(tau1[i] < 1.0);
        REQUIRE(tau2[i] > 0.0);
        REQUIRE(tau2[i] < 1.0);
        REQUIRE(theta[i] > 0.0);
        REQUIRE(theta[i] < 3.14159265358979323846);
        REQUIRE(rho[i] > -1.0);
        REQUIRE(rho[i] < 1.0);
    }
}

TEST_CASE("hr curve at t = 1 equals the d1 summaries exactly") {
    RngStream rng(11, 0);
    const auto est = simulate_bivariate(rng, 8, -0.4, 0.05, 0.1, 0.05, 0.0, 0.1,
                                        0.08, 0.0);
    PairwiseModelSpec spec;
    const auto post = fit_bivariate_ma(est, spec, desk_protocol(55));
    const auto d1 = post.draws.pooled(post.draws.param_index("d1"));
    std::vector<double> expd1(d1.size());
    kernels::vexp(d1, expd1);
    const Summary direct = summarize(expd1);
    const std::vector<double> t1{1.0};
    const auto curve = pooled_hr_curve(post, t1);
    CHECK(curve[0].hr.mean == direct.mean);
    CHECK(curve[0].hr.lo95 == direct.lo95);
    CHECK(curve[0].hr.hi95 == direct.hi95);
    CHECK_THROWS_AS(pooled_hr_curve(post, std::vector<double>{-1.0}), FitError);
}

TEST_CASE("interval width grows away from t = 1 when the coefficients are "
          "uncorrelated") {
    RngStream rng(12, 0);
    const auto est =
        simulate_bivariate(rng, 20, -0.25, 0.08, 0.08, 0.04, 0.0, 0.1, 0.07, 0.0);
    PairwiseModelSpec spec;
    const auto post = fit_bivariate_ma(est, spec, desk_protocol(56));
    auto width = [&](double t) {
        const Summary s = summarize(post.hr_draws(t));
        return std::log(s.hi95) - std::log(s.lo95);
    };
    const double w0 = width(1.0);
    const double w_half = width(std::exp(-0.7));
    const double w_double = width(std::exp(0.7));
    const double w_quad = width(std::exp(1.4));
    CHECK(w_half > w0 * 0.99);
    CHECK(w_double > w0 * 0.99);
    CHECK(w_quad > w_double * 0.999);
}

TEST_CASE("degenerate interaction reduces to the univariate pooling") {
    RngStream rng(13, 0);
    std::vector<PairwiseEstimate> biv_est, uni_est;
    for (int i = 0; i < 10; ++i) {
        const double y1 = -0.4 + 0.15 * rng.rnorm();
        biv_est.push_back(biv("s" + std::to_string(i), y1, 0.0, 0.04, 0.0, 1e-8));
        uni_est.push_back(uni("s" + std::to_string(i), y1, 0.04));
    }
    PairwiseModelSpec spec;
    const auto bp = fit_bivariate_ma(biv_est, spec, desk_protocol(57));
    const auto up = fit_univariate_ma(uni_est, spec, desk_protocol(57));
    const Summary d2 = bp.d_summary(1);
    CHECK(std::fabs(d2.mean) < 0.01);
    const Summary u = up.d_summary();
    for (double t : {0.25, 1.0, 4.0}) {
        const Summary hr_b = summarize(bp.hr_draws(t));
        const Summary hr_u = summarize(up.hr_draws(t));
        CHECK(std::fabs(hr_b.mean - hr_u.mean) < 0.03);
    }
    CHECK(std::fabs(u.mean - bp.d_summary(0).mean) < 0.03);
}

TEST_CASE("prior sensitivity pair runs under matched seeds") {
    RngStream rng(14, 0);
    // interaction truth zero: both priors must cover 0
    const auto est =
        simulate_bivariate(rng, 12, -0.3, 0.0, 0.1, 1e-4, 0.0, 0.1, 0.08, 0.0);
    PairwiseModelSpec spec;
    const auto [uniform_post, halfnormal_post] =
        prior_sensitivity(est, spec, desk_protocol(58));
    CHECK(uniform_post.spec.tau2_prior == Tau2Prior::uniform);
    CHECK(halfnormal_post.spec.tau2_prior == Tau2Prior::half_normal);
    const Summary du = uniform_post.d_summary(1);
    const Summary dh = halfnormal_post.d_summary(1);
    CHECK(du.lo95 <= 0.0);
    CHECK(du.hi95 >= 0.0);
    CHECK(dh.lo95 <= 0.0);
    CHECK(dh.hi95 >= 0.0);
    // half-normal support is unbounded above but draws stay positive
    const auto tau2 = halfnormal_post.draws.pooled(
        halfnormal_post.draws.param_index("tau2"));
    for (double v : tau2) REQUIRE(v > 0.0);
}

TEST_CASE("two-study sensitivity emits the weak-identification warning") {
    const std::vector<PairwiseEstimate> est = {biv("a", -0.2, 0.1, 0.05, 0.0, 0.04),
                                               biv("b", -0.5, 0.0, 0.06, 0.0, 0.05)};
    PairwiseModelSpec spec;
    const auto [u, h] = prior_sensitivity(est, spec, desk_protocol(59));
    REQUIRE_FALSE(u.warnings.empty());
    CHECK(u.warnings.front().find("weakly identified") != std::string::npos);
}

TEST_CASE("canonical MVN draws match the analytic conditional moments") {
    // the delta/d Gibbs blocks all route through this primitive
    RngStream rng(15, 0);
    Eigen::Matrix2d prec;
    prec << 4.0, 1.0, 1.0, 2.0;
    const Eigen::Vector2d b(1.0, -2.0);
    const Eigen::Matrix2d cov = prec.inverse();
    const Eigen::Vector2d mean = cov * b;
    const int n = 200000;
    Eigen::Vector2d acc = Eigen::Vector2d::Zero();
    Eigen::Matrix2d sq = Eigen::Matrix2d::Zero();
    for (int i = 0; i < n; ++i) {
        const Eigen::VectorXd x = mvn_draw_canonical(prec, b, rng);
        acc += x;
        sq += x * x.transpose();
    }
    const Eigen::Vector2d m = acc / n;
    const Eigen::Matrix2d c = sq / n - m * m.transpose();
    CHECK((m - mean).cwiseAbs().maxCoeff() < 0.01);
    CHECK((c - cov).cwiseAbs().maxCoeff() < 0.01);
}

TEST_SUITE_END();
