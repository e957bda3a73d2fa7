#ifndef TVHR_MCMC_HPP
#define TVHR_MCMC_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tvhr/common.hpp"
#include "tvhr/rng.hpp"

namespace tvhr {

struct SamplerProtocol {
    int chains = 3;
    std::int64_t burn_in = 50000;
    std::int64_t samples = 50000;
    int thin = 5;
    std::uint64_t seed = 1;
    std::int64_t adaptation = -1;  // <0: adapt through the whole burn-in
    std::string name = "paper";

    std::int64_t retained_per_chain() const { return samples / thin; }
    std::int64_t total_retained() const { return chains * retained_per_chain(); }
    std::int64_t adaptation_window() const {
        return adaptation < 0 ? burn_in : std::min(adaptation, burn_in);
    }
};

// 3 x (50k burn-in + 50k samples), thin 5: 10k retained per chain.
SamplerProtocol paper_protocol(std::uint64_t seed);
// 3 x (2k + 5k), thin 1: quick runs for CI and interactive use.
SamplerProtocol desk_protocol(std::uint64_t seed);

// Per-chain mutable sampler state: parameter vector plus adaptation data for
// any random-walk blocks (slice blocks keep proposals/accepts for audit only).
struct ChainScratch {
    std::vector<double> rw_step;
    std::vector<std::int64_t> proposals;
    std::vector<std::int64_t> accepts;
    std::vector<std::int64_t> window_proposals;
    std::vector<std::int64_t> window_accepts;

    void init_blocks(std::size_t n, double step) {
        rw_step.assign(n, step);
        proposals.assign(n, 0);
        accepts.assign(n, 0);
        window_proposals.assign(n, 0);
        window_accepts.assign(n, 0);
    }
};

// A posterior made of block updates. One sweep refreshes every block once;
// the engine owns burn-in, thinning and chain bookkeeping.
class GibbsModel {
  public:
    virtual ~GibbsModel() = default;
    virtual std::size_t state_size() const = 0;
    virtual const std::vector<std::string>& monitor_names() const = 0;
    // names of adaptive blocks (size of ChainScratch arrays); empty if none
    virtual std::vector<std::string> block_names() const { return {}; }
    virtual void init_chain(std::span<double> state, ChainScratch& scratch,
                            int chain_index, RngStream& rng) const = 0;
    virtual double log_density(std::span<const double> state) const = 0;
    virtual void sweep(std::span<double> state, ChainScratch& scratch,
                       bool adapting, RngStream& rng) const = 0;
    virtual void monitor(std::span<const double> state,
                         std::span<double> out) const = 0;
};

struct AcceptanceRecord {
    std::string block;
    int chain = 0;
    std::int64_t proposals = 0;
    std::int64_t accepts = 0;
    double final_step = 0.0;

    double rate() const {
        return proposals > 0 ? static_cast<double>(accepts) / proposals : 1.0;
    }
};

struct PosteriorDraws {
    std::vector<std::string> names;
    std::vector<Eigen::MatrixXd> chains;  // retained x n_params, one per chain
    SamplerProtocol protocol;
    std::vector<AcceptanceRecord> acceptance;

    int n_chains() const { return static_cast<int>(chains.size()); }
    std::int64_t retained_per_chain() const {
        return chains.empty() ? 0 : chains.front().rows();
    }
    std::int64_t total_retained() const {
        return n_chains() * retained_per_chain();
    }
    std::size_t param_index(const std::string& name) const;
    // all chains concatenated, one parameter
    std::vector<double> pooled(std::size_t param) const;
    std::span<const double> chain_column(int chain, std::size_t param) const;
};

// Run the protocol: over-dispersed per-chain initialisation, burn-in with
// adaptation frozen at the end of the window, post-burn-in thinning. Chains
// draw from disjoint counter-based streams keyed by (seed, chain), so results
// are reproducible bit for bit and independent of scheduling.
PosteriorDraws run_chains(const GibbsModel& model, const SamplerProtocol& protocol,
                          bool parallel_chains = true);

// One slice-sampling update (stepping out + shrinkage) of a scalar bounded by
// (lo, hi); logf must be finite at x0.
double slice_update(double x0, const std::function<double(double)>& logf,
                    double width, double lo, double hi, RngStream& rng);

// One reflecting random-walk Metropolis update on (lo, hi). During adaptation
// the step size is tuned toward a 0.3-0.45 acceptance rate in windows of 50
// proposals; outside adaptation the step is left alone.
double reflect_rw_update(double x0, const std::function<double(double)>& logf,
                         double lo, double hi, double& step, bool adapting,
                         std::int64_t& proposals, std::int64_t& accepts,
                         std::int64_t& window_proposals,
                         std::int64_t& window_accepts, RngStream& rng);

// Draw from MVN(mean, cov) via Cholesky; cov must be positive definite.
Eigen::VectorXd mvn_draw(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                         RngStream& rng);

// Draw from the canonical form MVN(precision^-1 b, precision^-1).
Eigen::VectorXd mvn_draw_canonical(const Eigen::MatrixXd& precision,
                                   const Eigen::VectorXd& b, RngStream& rng);

// Columnar text export (one CSV per chain, header = parameter names) plus a
// compact little-endian binary dump that read_draws_binary restores exactly.
void write_chain_csvs(const PosteriorDraws& draws, const std::string& dir,
                      const std::string& basename);
void write_draws_binary(const PosteriorDraws& draws, const std::string& path);
PosteriorDraws read_draws_binary(const std::string& path);

}  // namespace tvhr

#endif
