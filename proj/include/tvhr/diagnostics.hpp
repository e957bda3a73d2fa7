#ifndef TVHR_DIAGNOSTICS_HPP
#define TVHR_DIAGNOSTICS_HPP

#include <string>
#include <vector>

#include "tvhr/mcmc.hpp"

namespace tvhr {

struct RhatEstimate {
    double rank_normalized = 0.0;  // max of bulk and folded split-Rhat
    double classic = 0.0;          // split-Rhat on the raw draws
};

// Core computations on raw per-chain sequences (each inner vector one chain).
// Preconditions: >=2 chains, >=10 draws per chain, non-constant draws.
RhatEstimate split_rhat(const std::vector<std::vector<double>>& chains);

// Effective sample size: multi-chain autocovariance combination with Geyer's
// initial-monotone-positive-sequence truncation, capped at the number of
// retained draws. Throws DiagnosticsError for a constant chain.
double effective_sample_size(const std::vector<std::vector<double>>& chains);

// Combined autocorrelation estimate at lags 0..max_lag.
std::vector<double> autocorrelations(const std::vector<std::vector<double>>& chains,
                                     int max_lag);

RhatEstimate psrf(const PosteriorDraws& draws, std::size_t param);
double ess(const PosteriorDraws& draws, std::size_t param);
std::vector<double> autocorrelations(const PosteriorDraws& draws, std::size_t param,
                                     int max_lag);

struct DiagnosticEntry {
    std::string name;
    double rhat = 0.0;
    double rhat_classic = 0.0;
    double ess = 0.0;
    bool rhat_pass = false;
    bool ess_pass = false;
    bool degenerate = false;  // constant draws; always fails
};

struct DiagnosticsReport {
    std::vector<DiagnosticEntry> entries;
    double rhat_threshold = 1.01;
    double ess_threshold = 1000.0;

    const DiagnosticEntry& by_name(const std::string& name) const;
    bool pass_all() const;
    // pass over a subset (the gate set: basic parameters)
    bool pass(const std::vector<std::string>& gate_names) const;
};

DiagnosticsReport diagnose(const PosteriorDraws& draws, double rhat_threshold = 1.01,
                           double ess_threshold = 1000.0);

}  // namespace tvhr

#endif
