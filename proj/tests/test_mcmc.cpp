#include <doctest.h>

#include <cmath>

#include "tvhr/diagnostics.hpp"
#include "tvhr/mcmc.hpp"
#include "tvhr/stats.hpp"

using namespace tvhr;

TEST_SUITE_BEGIN("mcmc");

namespace {

// standard normal sampled purely through the slice machinery
class SliceNormalModel final : public GibbsModel {
  public:
    std::size_t state_size() const override { return 1; }
    const std::vector<std::string>& monitor_names() const override { return names_; }
    void init_chain(std::span<double> st, ChainScratch& scratch, int chain,
                    RngStream&) const override {
        scratch.init_blocks(0, 0.0);
        st[0] = chain - 1.0;  // over-dispersed starts
    }
    double log_density(std::span<const double> st) const override {
        return -0.5 * st[0] * st[0];
    }
    void sweep(std::span<double> st, ChainScratch&, bool, RngStream& rng) const override {
        st[0] = slice_update(
            st[0], [](double x) { return -0.5 * x * x; }, 1.0, -50.0, 50.0, rng);
    }
    void monitor(std::span<const double> st, std::span<double> out) const override {
        out[0] = st[0];
    }

  private:
    std::vector<std::string> names_{"x"};
};

// bivariate normal with correlation rho via exact conditional draws
class GibbsBivariateNormal final : public GibbsModel {
  public:
    explicit GibbsBivariateNormal(double rho) : rho_(rho) {}
    std::size_t state_size() const override { return 2; }
    const std::vector<std::string>& monitor_names() const override { return names_; }
    void init_chain(std::span<double> st, ChainScratch& scratch, int chain,
                    RngStream&) const override {
        scratch.init_blocks(0, 0.0);
        st[0] = chain - 1.0;
        st[1] = 1.0 - chain;
    }
    double log_density(std::span<const double> st) const override {
        const double q =
            (st[0] * st[0] - 2.0 * rho_ * st[0] * st[1] + st[1] * st[1]) /
            (1.0 - rho_ * rho_);
        return -0.5 * q;
    }
    void sweep(std::span<double> st, ChainScratch&, bool, RngStream& rng) const override {
        const double csd = std::sqrt(1.0 - rho_ * rho_);
        st[0] = rho_ * st[1] + csd * rng.rnorm();
        st[1] = rho_ * st[0] + csd * rng.rnorm();
    }
    void monitor(std::span<const double> st, std::span<double> out) const override {
        out[0] = st[0];
        out[1] = st[1];
    }

  private:
    double rho_;
    std::vector<std::string> names_{"x", "y"};
};

// prior-only targets for the bounded-support kernels
class BoundedPriorModel final : public GibbsModel {
  public:
    BoundedPriorModel(VarianceKernel kernel, bool half_normal)
        : kernel_(kernel), half_normal_(half_normal) {}
    std::size_t state_size() const override { return 1; }
    const std::vector<std::string>& monitor_names() const override { return names_; }
    std::vector<std::string> block_names() const override { return {"x"}; }
    void init_chain(std::span<double> st, ChainScratch& scratch, int,
                    RngStream&) const override {
        scratch.init_blocks(1, 0.2);
        st[0] = 0.5;
    }
    double log_density(std::span<const double> st) const override { return logf(st[0]); }
    void sweep(std::span<double> st, ChainScratch& scratch, bool adapting,
               RngStream& rng) const override {
        const double hi = half_normal_ ? 50.0 : 1.0;
        auto f = [this](double x) { return logf(x); };
        if (kernel_ == VarianceKernel::slice) {
            st[0] = slice_update(st[0], f, 0.25, 0.0, hi, rng);
            ++scratch.proposals[0];
            ++scratch.accepts[0];
        } else {
            st[0] = reflect_rw_update(st[0], f, 0.0, hi, scratch.rw_step[0], adapting,
                                      scratch.proposals[0], scratch.accepts[0],
                                      scratch.window_proposals[0],
                                      scratch.window_accepts[0], rng);
        }
    }
    void monitor(std::span<const double> st, std::span<double> out) const override {
        out[0] = st[0];
    }

  private:
    double logf(double x) const {
        if (half_normal_) {
            if (!(x > 0.0)) return -1e308;
            return -0.5 * x * x / 0.25;  // Half-Normal(0, 0.5)
        }
        return (x > 0.0 && x < 1.0) ? 0.0 : -1e308;
    }
    VarianceKernel kernel_;
    bool half_normal_;
    std::vector<std::string> names_{"x"};
};

}  // namespace

TEST_CASE("protocol accounting is exact") {
    const SamplerProtocol paper = paper_protocol(9);
    CHECK(paper.retained_per_chain() == 10000);
    CHECK(paper.total_retained() == 30000);
    const SamplerProtocol desk = desk_protocol(9);
    CHECK(desk.retained_per_chain() == 5000);
    CHECK(desk.total_retained() == 15000);

    SliceNormalModel m;
    SamplerProtocol p = desk_protocol(1);
    p.burn_in = 50;
    p.samples = 60;
    p.thin = 5;
    const PosteriorDraws draws = run_chains(m, p);
    CHECK(draws.retained_per_chain() == 12);
    CHECK(draws.total_retained() == 36);

    p.samples = 61;  // not divisible by thin
    CHECK_THROWS_AS(run_chains(m, p), FitError);
}

TEST_CASE("standard normal target recovered through the slice sampler") {
    SliceNormalModel m;
    const PosteriorDraws draws = run_chains(m, desk_protocol(12345));
    const auto x = draws.pooled(0);
    const double e = ess(draws, 0);
    CHECK(std::fabs(mean(x)) < 3.0 / std::sqrt(e));
    CHECK(std::sqrt(variance(x)) == doctest::Approx(1.0).epsilon(0.05));
    const auto r = psrf(draws, 0);
    CHECK(r.rank_normalized < 1.01);
}

TEST_CASE("bivariate normal with rho = 0.8") {
    GibbsBivariateNormal m(0.8);
    const PosteriorDraws draws = run_chains(m, desk_protocol(777));
    const auto x = draws.pooled(0);
    const auto y = draws.pooled(1);
    const double mx = mean(x), my = mean(y);
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    const double corr = sxy / std::sqrt(sxx * syy);
    CHECK(corr == doctest::Approx(0.8).epsilon(0.03));
}

TEST_CASE("determinism: identical (model, protocol, seed) gives identical draws") {
    GibbsBivariateNormal m(0.5);
    SamplerProtocol p = desk_protocol(42);
    p.burn_in = 200;
    p.samples = 500;
    const PosteriorDraws a = run_chains(m, p);
    const PosteriorDraws b = run_chains(m, p, /*parallel=*/false);
    REQUIRE(a.n_chains() == b.n_chains());
    for (int c = 0; c < a.n_chains(); ++c)
        CHECK((a.chains[c] - b.chains[c]).cwiseAbs().maxCoeff() == 0.0);
    SamplerProtocol p2 = p;
    p2.seed = 43;
    const PosteriorDraws d = run_chains(m, p2);
    CHECK((a.chains[0] - d.chains[0]).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("uniform prior recovery under both kernels") {
    for (VarianceKernel k : {VarianceKernel::slice, VarianceKernel::random_walk}) {
        BoundedPriorModel m(k, false);
        const PosteriorDraws draws = run_chains(m, desk_protocol(5));
        const auto x = draws.pooled(0);
        for (double v : x) REQUIRE((v > 0.0 && v < 1.0));
        CHECK(mean(x) == doctest::Approx(0.5).epsilon(0.03));
        CHECK(variance(x) == doctest::Approx(1.0 / 12.0).epsilon(0.08));
        if (k == VarianceKernel::random_walk) {
            // adapted acceptance rate lands in the target band
            REQUIRE(!draws.acceptance.empty());
            for (const auto& rec : draws.acceptance) {
                CHECK(rec.rate() > 0.2);
                CHECK(rec.rate() < 0.6);
            }
        }
    }
}

TEST_CASE("half-normal prior moments match the closed form") {
    BoundedPriorModel m(VarianceKernel::slice, true);
    const PosteriorDraws draws = run_chains(m, desk_protocol(6));
    const auto x = draws.pooled(0);
    const double scale = 0.5;
    const double expect_mean = scale * std::sqrt(2.0 / 3.14159265358979323846);
    const double expect_sd = scale * std::sqrt(1.0 - 2.0 / 3.14159265358979323846);
    CHECK(mean(x) == doctest::Approx(expect_mean).epsilon(0.03));
    CHECK(std::sqrt(variance(x)) == doctest::Approx(expect_sd).epsilon(0.05));
}

TEST_CASE("non-finite initial density is rejected") {
    class BadInit final : public GibbsModel {
      public:
        std::size_t state_size() const override { return 1; }
        const std::vector<std::string>& monitor_names() const override { return n_; }
        void init_chain(std::span<double> st, ChainScratch& s, int,
                        RngStream&) const override {
            s.init_blocks(0, 0);
            st[0] = -1.0;
        }
        double log_density(std::span<const double> st) const override {
            return st[0] > 0 ? 0.0 : -std::numeric_limits<double>::infinity();
        }
        void sweep(std::span<double>, ChainScratch&, bool, RngStream&) const override {}
        void monitor(std::span<const double> st, std::span<double> o) const override {
            o[0] = st[0];
        }

      private:
        std::vector<std::string> n_{"x"};
    };
    BadInit m;
    CHECK_THROWS_WITH_AS(run_chains(m, desk_protocol(1)),
                         doctest::Contains("non-finite log-density"), FitError);
}

TEST_CASE("draw export round-trips through the binary dump") {
    GibbsBivariateNormal m(0.3);
    SamplerProtocol p = desk_protocol(21);
    p.burn_in = 100;
    p.samples = 200;
    const PosteriorDraws a = run_chains(m, p);
    const std::string path = "/tmp/tvhr_draws_test.bin";
    write_draws_binary(a, path);
    const PosteriorDraws b = read_draws_binary(path);
    REQUIRE(b.names == a.names);
    REQUIRE(b.n_chains() == a.n_chains());
    for (int c = 0; c < a.n_chains(); ++c)
        CHECK((a.chains[c] - b.chains[c]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_SUITE_END();
