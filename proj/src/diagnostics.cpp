#include "tvhr/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tvhr/kernels.hpp"
#include "tvhr/stats.hpp"

namespace tvhr {

namespace {

std::vector<std::vector<double>> split_halves(
    const std::vector<std::vector<double>>& chains) {
    std::vector<std::vector<double>> out;
    out.reserve(chains.size() * 2);
    for (const auto& c : chains) {
        const std::size_t half = c.size() / 2;
        // drop the middle element for odd lengths
        out.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(half));
        out.emplace_back(c.end() - static_cast<std::ptrdiff_t>(half), c.end());
    }
    return out;
}

void check_input(const std::vector<std::vector<double>>& chains) {
    if (chains.size() < 2)
        throw DiagnosticsError("diagnostics need at least 2 chains");
    const std::size_t n = chains.front().size();
    if (n < 10) throw DiagnosticsError("diagnostics need at least 10 draws per chain");
    for (const auto& c : chains)
        if (c.size() != n)
            throw DiagnosticsError("diagnostics need equal-length chains");
}

struct Moments {
    double w = 0.0;      // mean within-sequence variance
    double var_plus = 0.0;
    std::vector<double> means;
};

Moments sequence_moments(const std::vector<std::vector<double>>& seqs) {
    Moments m;
    const double n = static_cast<double>(seqs.front().size());
    double w_acc = 0.0;
    for (const auto& s : seqs) {
        const double mu = mean(s);
        m.means.push_back(mu);
        w_acc += kernels::sumsq_centered(s, mu) / (n - 1.0);
    }
    m.w = w_acc / static_cast<double>(seqs.size());
    const double b_over_n = variance(m.means);  // B/n
    m.var_plus = (n - 1.0) / n * m.w + b_over_n;
    return m;
}

double classic_rhat_of(const std::vector<std::vector<double>>& seqs) {
    const Moments m = sequence_moments(seqs);
    if (m.w <= 0.0) throw DiagnosticsError("zero within-chain variance");
    return std::sqrt(m.var_plus / m.w);
}

// pooled average ranks -> normal scores, reshaped back into sequences
std::vector<std::vector<double>> rank_normalize(
    const std::vector<std::vector<double>>& seqs) {
    std::vector<double> pool;
    for (const auto& s : seqs) pool.insert(pool.end(), s.begin(), s.end());
    const std::vector<double> ranks = average_ranks(pool);
    const double S = static_cast<double>(pool.size());
    std::vector<std::vector<double>> out(seqs.size());
    std::size_t k = 0;
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        out[i].resize(seqs[i].size());
        for (std::size_t j = 0; j < seqs[i].size(); ++j, ++k)
            out[i][j] = normal_quantile((ranks[k] - 0.375) / (S + 0.25));
    }
    return out;
}

}  // namespace

RhatEstimate split_rhat(const std::vector<std::vector<double>>& chains) {
    check_input(chains);
    const auto seqs = split_halves(chains);

    RhatEstimate est;
    est.classic = classic_rhat_of(seqs);
    est.rank_normalized = classic_rhat_of(rank_normalize(seqs));

    // folded: distances from the pooled median catch scale mismatches
    std::vector<double> pool;
    for (const auto& s : seqs) pool.insert(pool.end(), s.begin(), s.end());
    std::sort(pool.begin(), pool.end());
    const double med = quantile_sorted(pool, 0.5);
    std::vector<std::vector<double>> folded(seqs.size());
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        folded[i].reserve(seqs[i].size());
        for (double v : seqs[i]) folded[i].push_back(std::fabs(v - med));
    }
    const double folded_rhat = classic_rhat_of(rank_normalize(folded));
    est.rank_normalized = std::max(est.rank_normalized, folded_rhat);
    return est;
}

double effective_sample_size(const std::vector<std::vector<double>>& chains) {
    check_input(chains);
    const auto seqs = split_halves(chains);
    const std::size_t m_seq = seqs.size();
    const std::size_t n = seqs.front().size();
    const double total = static_cast<double>(m_seq * n);

    const Moments mo = sequence_moments(seqs);
    if (mo.w <= 0.0) throw DiagnosticsError("constant chain: zero variance");

    // per-sequence biased autocovariances at a given lag
    std::vector<double> mu(m_seq);
    for (std::size_t j = 0; j < m_seq; ++j) mu[j] = mean(seqs[j]);
    std::vector<std::vector<double>> centered(m_seq);
    for (std::size_t j = 0; j < m_seq; ++j) {
        centered[j].reserve(n);
        for (double v : seqs[j]) centered[j].push_back(v - mu[j]);
    }
    auto acov_at = [&](std::size_t lag) {
        double acc = 0.0;
        for (std::size_t j = 0; j < m_seq; ++j) {
            const std::span<const double> c(centered[j]);
            acc += kernels::dot(c.subspan(0, n - lag), c.subspan(lag)) /
                   static_cast<double>(n);
        }
        return acc / static_cast<double>(m_seq);
    };

    auto rho_at = [&](std::size_t lag) {
        return 1.0 - (mo.w - acov_at(lag)) / mo.var_plus;
    };

    // Geyer: sum positive pairs, enforce monotone non-increasing pair sums
    double tau = -1.0;
    double prev_pair = std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; 2 * m + 1 < n; ++m) {
        double pair = rho_at(2 * m) + rho_at(2 * m + 1);
        if (pair <= 0.0) break;
        pair = std::min(pair, prev_pair);
        prev_pair = pair;
        tau += 2.0 * pair;
    }
    if (tau <= 0.0) return total;
    return std::min(total / tau, total);
}

std::vector<double> autocorrelations(const std::vector<std::vector<double>>& chains,
                                     int max_lag) {
    check_input(chains);
    const std::size_t n = chains.front().size();
    const std::size_t m_seq = chains.size();
    std::vector<std::vector<double>> centered(m_seq);
    for (std::size_t j = 0; j < m_seq; ++j) {
        const double mu = mean(chains[j]);
        centered[j].reserve(n);
        for (double v : chains[j]) centered[j].push_back(v - mu);
    }
    auto acov_at = [&](std::size_t lag) {
        double acc = 0.0;
        for (std::size_t j = 0; j < m_seq; ++j) {
            const std::span<const double> c(centered[j]);
            acc += kernels::dot(c.subspan(0, n - lag), c.subspan(lag)) /
                   static_cast<double>(n);
        }
        return acc / static_cast<double>(m_seq);
    };
    const double a0 = acov_at(0);
    if (a0 <= 0.0) throw DiagnosticsError("constant chain: zero variance");
    std::vector<double> out;
    const int top = std::min<int>(max_lag, static_cast<int>(n) - 1);
    out.reserve(static_cast<std::size_t>(top) + 1);
    for (int lag = 0; lag <= top; ++lag)
        out.push_back(acov_at(static_cast<std::size_t>(lag)) / a0);
    return out;
}

namespace {
std::vector<std::vector<double>> extract(const PosteriorDraws& draws,
                                         std::size_t param) {
    std::vector<std::vector<double>> chains;
    chains.reserve(static_cast<std::size_t>(draws.n_chains()));
    for (int c = 0; c < draws.n_chains(); ++c) {
        const auto col = draws.chain_column(c, param);
        chains.emplace_back(col.begin(), col.end());
    }
    return chains;
}
}  // namespace

RhatEstimate psrf(const PosteriorDraws& draws, std::size_t param) {
    return split_rhat(extract(draws, param));
}

double ess(const PosteriorDraws& draws, std::size_t param) {
    return effective_sample_size(extract(draws, param));
}

std::vector<double> autocorrelations(const PosteriorDraws& draws, std::size_t param,
                                     int max_lag) {
    return autocorrelations(extract(draws, param), max_lag);
}

const DiagnosticEntry& DiagnosticsReport::by_name(const std::string& name) const {
    for (const auto& e : entries)
        if (e.name == name) return e;
    throw DiagnosticsError("no diagnostics entry for parameter " + name);
}

bool DiagnosticsReport::pass_all() const {
    for (const auto& e : entries)
        if (e.degenerate || !e.rhat_pass || !e.ess_pass) return false;
    return true;
}

bool DiagnosticsReport::pass(const std::vector<std::string>& gate_names) const {
    for (const auto& g : gate_names) {
        const auto& e = by_name(g);
        if (e.degenerate || !e.rhat_pass || !e.ess_pass) return false;
    }
    return true;
}

DiagnosticsReport diagnose(const PosteriorDraws& draws, double rhat_threshold,
                           double ess_threshold) {
    DiagnosticsReport rep;
    rep.rhat_threshold = rhat_threshold;
    rep.ess_threshold = ess_threshold;
    for (std::size_t p = 0; p < draws.names.size(); ++p) {
        DiagnosticEntry e;
        e.name = draws.names[p];
        try {
            const RhatEstimate r = psrf(draws, p);
            e.rhat = r.rank_normalized;
            e.rhat_classic = r.classic;
            e.ess = ess(draws, p);
            e.rhat_pass = e.rhat < rhat_threshold;
            e.ess_pass = e.ess >= ess_threshold;
        } catch (const DiagnosticsError&) {
            e.degenerate = true;
            e.rhat = std::numeric_limits<double>::quiet_NaN();
            e.rhat_classic = e.rhat;
            e.ess = 0.0;
        }
        rep.entries.push_back(std::move(e));
    }
    return rep;
}

}  // namespace tvhr
