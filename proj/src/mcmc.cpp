#include "tvhr/mcmc.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <future>
#include <limits>

namespace tvhr {

SamplerProtocol paper_protocol(std::uint64_t seed) {
    SamplerProtocol p;
    p.chains = 3;
    p.burn_in = 50000;
    p.samples = 50000;
    p.thin = 5;
    p.seed = seed;
    p.name = "paper";
    return p;
}

SamplerProtocol desk_protocol(std::uint64_t seed) {
    SamplerProtocol p;
    p.chains = 3;
    p.burn_in = 2000;
    p.samples = 5000;
    p.thin = 1;
    p.seed = seed;
    p.name = "desk";
    return p;
}

std::size_t PosteriorDraws::param_index(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return i;
    throw DiagnosticsError("unknown parameter: " + name);
}

std::vector<double> PosteriorDraws::pooled(std::size_t param) const {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(total_retained()));
    for (const auto& c : chains) {
        const auto col = c.col(static_cast<Eigen::Index>(param));
        out.insert(out.end(), col.data(), col.data() + col.size());
    }
    return out;
}

std::span<const double> PosteriorDraws::chain_column(int chain,
                                                     std::size_t param) const {
    const auto& m = chains.at(static_cast<std::size_t>(chain));
    return {m.col(static_cast<Eigen::Index>(param)).data(),
            static_cast<std::size_t>(m.rows())};
}

namespace {

void check_protocol(const SamplerProtocol& p) {
    if (p.chains < 1) throw FitError("protocol: need at least one chain");
    if (p.thin < 1) throw FitError("protocol: thin must be >= 1");
    if (p.samples < 1 || p.burn_in < 0) throw FitError("protocol: bad iteration counts");
    if (p.samples % p.thin != 0)
        throw FitError("protocol: samples must be divisible by thin so that "
                       "retained = samples / thin exactly");
}

Eigen::MatrixXd run_one_chain(const GibbsModel& model, const SamplerProtocol& proto,
                              int chain, std::vector<AcceptanceRecord>& acc_out) {
    RngStream rng(proto.seed, static_cast<std::uint64_t>(chain));
    const std::size_t dim = model.state_size();
    std::vector<double> state(dim, 0.0);
    ChainScratch scratch;
    model.init_chain(state, scratch, chain, rng);

    const double ld0 = model.log_density(state);
    if (!std::isfinite(ld0))
        throw FitError("non-finite log-density at initialisation of chain " +
                       std::to_string(chain));

    const std::int64_t adapt_end = proto.adaptation_window();
    auto check_state = [&](std::int64_t iter) {
        for (double v : state)
            if (!std::isfinite(v))
                throw FitError("non-finite state in chain " + std::to_string(chain) +
                               " at iteration " + std::to_string(iter));
    };

    for (std::int64_t it = 0; it < proto.burn_in; ++it) {
        model.sweep(state, scratch, it < adapt_end, rng);
        check_state(it);
    }

    const std::int64_t retained = proto.retained_per_chain();
    Eigen::MatrixXd out(retained, static_cast<Eigen::Index>(model.monitor_names().size()));
    std::vector<double> mon(model.monitor_names().size(), 0.0);
    std::int64_t row = 0;
    for (std::int64_t it = 0; it < proto.samples; ++it) {
        model.sweep(state, scratch, false, rng);
        check_state(proto.burn_in + it);
        if ((it + 1) % proto.thin == 0) {
            model.monitor(state, mon);
            for (std::size_t j = 0; j < mon.size(); ++j) {
                if (!std::isfinite(mon[j]))
                    throw FitError("non-finite draw for parameter " +
                                   model.monitor_names()[j] + " in chain " +
                                   std::to_string(chain));
                out(row, static_cast<Eigen::Index>(j)) = mon[j];
            }
            ++row;
        }
    }

    const auto blocks = model.block_names();
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        AcceptanceRecord rec;
        rec.block = blocks[b];
        rec.chain = chain;
        rec.proposals = b < scratch.proposals.size() ? scratch.proposals[b] : 0;
        rec.accepts = b < scratch.accepts.size() ? scratch.accepts[b] : 0;
        rec.final_step = b < scratch.rw_step.size() ? scratch.rw_step[b] : 0.0;
        acc_out.push_back(std::move(rec));
    }
    return out;
}

}  // namespace

PosteriorDraws run_chains(const GibbsModel& model, const SamplerProtocol& protocol,
                          bool parallel_chains) {
    check_protocol(protocol);
    PosteriorDraws draws;
    draws.names = model.monitor_names();
    draws.protocol = protocol;
    draws.chains.resize(static_cast<std::size_t>(protocol.chains));

    std::vector<std::vector<AcceptanceRecord>> acc(
        static_cast<std::size_t>(protocol.chains));

    if (parallel_chains && protocol.chains > 1) {
        std::vector<std::future<Eigen::MatrixXd>> futs;
        futs.reserve(static_cast<std::size_t>(protocol.chains));
        for (int c = 0; c < protocol.chains; ++c) {
            futs.push_back(std::async(std::launch::async, [&, c]() {
                return run_one_chain(model, protocol, c, acc[static_cast<std::size_t>(c)]);
            }));
        }
        for (int c = 0; c < protocol.chains; ++c)
            draws.chains[static_cast<std::size_t>(c)] = futs[static_cast<std::size_t>(c)].get();
    } else {
        for (int c = 0; c < protocol.chains; ++c)
            draws.chains[static_cast<std::size_t>(c)] =
                run_one_chain(model, protocol, c, acc[static_cast<std::size_t>(c)]);
    }

    for (auto& a : acc)
        draws.acceptance.insert(draws.acceptance.end(), a.begin(), a.end());
    return draws;
}

double slice_update(double x0, const std::function<double(double)>& logf,
                    double width, double lo, double hi, RngStream& rng) {
    const double f0 = logf(x0);
    if (!std::isfinite(f0))
        throw FitError("slice_update: log-density not finite at the current point");
    const double logy = f0 - rng.rexp();

    // stepping out, clamped to the support
    double u = rng.runif() * width;
    double left = x0 - u;
    double right = left + width;
    int steps = 1000;
    while (left > lo && steps-- > 0 && logf(left) > logy) left -= width;
    left = std::max(left, lo);
    steps = 1000;
    while (right < hi && steps-- > 0 && logf(right) > logy) right += width;
    right = std::min(right, hi);

    // shrinkage
    for (int tries = 0; tries < 1000; ++tries) {
        const double x1 = rng.runif(left, right);
        if (logf(x1) > logy) return x1;
        if (x1 < x0)
            left = x1;
        else
            right = x1;
    }
    return x0;  // degenerate slice; keep the current point
}

double reflect_rw_update(double x0, const std::function<double(double)>& logf,
                         double lo, double hi, double& step, bool adapting,
                         std::int64_t& proposals, std::int64_t& accepts,
                         std::int64_t& window_proposals, std::int64_t& window_accepts,
                         RngStream& rng) {
    double x1 = x0 + step * rng.rnorm();
    // reflect into (lo, hi); a symmetric proposal, so no Jacobian term
    for (int k = 0; k < 64; ++k) {
        if (x1 < lo && std::isfinite(lo))
            x1 = 2.0 * lo - x1;
        else if (x1 > hi && std::isfinite(hi))
            x1 = 2.0 * hi - x1;
        else
            break;
    }
    ++proposals;
    ++window_proposals;
    double out = x0;
    if (x1 > lo && x1 < hi) {
        const double la = logf(x1) - logf(x0);
        if (la >= 0.0 || rng.runif() < std::exp(la)) {
            out = x1;
            ++accepts;
            ++window_accepts;
        }
    }
    if (adapting && window_proposals >= 50) {
        const double rate =
            static_cast<double>(window_accepts) / static_cast<double>(window_proposals);
        if (rate < 0.30)
            step *= 0.8;
        else if (rate > 0.45)
            step *= 1.25;
        window_proposals = 0;
        window_accepts = 0;
    }
    return out;
}

Eigen::VectorXd mvn_draw(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                         RngStream& rng) {
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success)
        throw FitError("mvn_draw: covariance not positive definite");
    Eigen::VectorXd z(mean.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.rnorm();
    return mean + llt.matrixL() * z;
}

Eigen::VectorXd mvn_draw_canonical(const Eigen::MatrixXd& precision,
                                   const Eigen::VectorXd& b, RngStream& rng) {
    Eigen::LLT<Eigen::MatrixXd> llt(precision);
    if (llt.info() != Eigen::Success)
        throw FitError("mvn_draw_canonical: precision not positive definite");
    const Eigen::VectorXd mean = llt.solve(b);
    Eigen::VectorXd z(b.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.rnorm();
    // solve L^T x = z gives covariance precision^-1
    return mean + llt.matrixU().solve(z);
}

void write_chain_csvs(const PosteriorDraws& draws, const std::string& dir,
                      const std::string& basename) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    char buf[64];
    for (int c = 0; c < draws.n_chains(); ++c) {
        const fs::path p =
            fs::path(dir) / (basename + "_chain" + std::to_string(c + 1) + ".csv");
        std::ofstream out(p);
        if (!out) throw FitError("cannot write " + p.string());
        for (std::size_t j = 0; j < draws.names.size(); ++j)
            out << (j ? "," : "") << draws.names[j];
        out << '\n';
        const auto& m = draws.chains[static_cast<std::size_t>(c)];
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            for (Eigen::Index j = 0; j < m.cols(); ++j) {
                std::snprintf(buf, sizeof(buf), "%.17g", m(i, j));
                out << (j ? "," : "") << buf;
            }
            out << '\n';
        }
    }
}

namespace {
constexpr char kDrawsMagic[8] = {'T', 'V', 'H', 'R', 'D', 'R', 'W', '1'};

template <typename T>
void put(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void get(std::ifstream& in, T& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
}
}  // namespace

void write_draws_binary(const PosteriorDraws& draws, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FitError("cannot write " + path);
    out.write(kDrawsMagic, sizeof(kDrawsMagic));
    put(out, static_cast<std::uint32_t>(draws.n_chains()));
    put(out, static_cast<std::uint32_t>(draws.names.size()));
    put(out, static_cast<std::uint64_t>(draws.retained_per_chain()));
    put(out, static_cast<std::uint64_t>(draws.protocol.seed));
    put(out, static_cast<std::int64_t>(draws.protocol.burn_in));
    put(out, static_cast<std::int64_t>(draws.protocol.samples));
    put(out, static_cast<std::int32_t>(draws.protocol.thin));
    for (const auto& n : draws.names) {
        put(out, static_cast<std::uint32_t>(n.size()));
        out.write(n.data(), static_cast<std::streamsize>(n.size()));
    }
    for (const auto& m : draws.chains)
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) put(out, m(i, j));
}

PosteriorDraws read_draws_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FitError("cannot read " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (std::memcmp(magic, kDrawsMagic, sizeof(magic)) != 0)
        throw FitError(path + ": not a draws dump");
    std::uint32_t n_chains = 0, n_params = 0;
    std::uint64_t retained = 0, seed = 0;
    std::int64_t burn = 0, samples = 0;
    std::int32_t thin = 1;
    get(in, n_chains);
    get(in, n_params);
    get(in, retained);
    get(in, seed);
    get(in, burn);
    get(in, samples);
    get(in, thin);
    PosteriorDraws draws;
    draws.protocol.chains = static_cast<int>(n_chains);
    draws.protocol.seed = seed;
    draws.protocol.burn_in = burn;
    draws.protocol.samples = samples;
    draws.protocol.thin = thin;
    for (std::uint32_t i = 0; i < n_params; ++i) {
        std::uint32_t len = 0;
        get(in, len);
        std::string name(len, '\0');
        in.read(name.data(), static_cast<std::streamsize>(len));
        draws.names.push_back(std::move(name));
    }
    for (std::uint32_t c = 0; c < n_chains; ++c) {
        Eigen::MatrixXd m(static_cast<Eigen::Index>(retained),
                          static_cast<Eigen::Index>(n_params));
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) get(in, m(i, j));
        draws.chains.push_back(std::move(m));
    }
    if (!in) throw FitError(path + ": truncated draws dump");
    return draws;
}

}  // namespace tvhr
