#include "tvhr/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "synthesis_util.hpp"
#include "tvhr/kernels.hpp"

namespace tvhr {

double multiarm_variance_factor(int k) {
    if (k < 2) throw FitError("multiarm_variance_factor: arm index must be >= 2");
    return static_cast<double>(k) / (2.0 * (k - 1));
}

Eigen::VectorXd sample_multiarm_prior(const std::vector<Eigen::VectorXd>& contrast_means,
                                      const Eigen::MatrixXd& sigma, RngStream& rng) {
    const int q = static_cast<int>(contrast_means.size());
    if (q < 1) throw FitError("sample_multiarm_prior: need at least one contrast");
    const int m = static_cast<int>(sigma.rows());
    Eigen::VectorXd stacked(q * m);
    std::vector<Eigen::VectorXd> w;  // w_{i,k} for arms 2..k
    for (int k = 2; k <= q + 1; ++k) {
        const double c = 1.0 / (k - 1);
        Eigen::VectorXd mu = contrast_means[static_cast<std::size_t>(k - 2)];
        for (const auto& wa : w) mu += c * wa;  // w_{i,1} = 0 drops out
        const Eigen::VectorXd delta =
            mvn_draw(mu, multiarm_variance_factor(k) * sigma, rng);
        stacked.segment((k - 2) * m, m) = delta;
        w.push_back(delta - contrast_means[static_cast<std::size_t>(k - 2)]);
    }
    return stacked;
}

namespace {

using detail::neg_inf;

struct StudyWork {
    std::string id;
    std::vector<int> arms;  // t[i,k], ascending
    int n_arms = 0;
    Eigen::VectorXd y;   // q*m
    Eigen::MatrixXd q_mat;  // S^-1
    // d-side coefficient pattern of arm k's conditional mean:
    // +1 on t_k, -1/(k-1) on the treatments of arms 1..k-1
    std::vector<std::vector<std::pair<int, double>>> mean_coeffs;  // per arm k>=2
};

int q_of(const StudyWork& s) { return s.n_arms - 1; }

class NmaModel final : public GibbsModel {
  public:
    NmaModel(std::span<const NmaContrast> contrasts, int n_treatments, int dim,
             const NmaModelSpec& spec)
        : nt_(n_treatments), m_(dim), spec_(spec) {
        for (const auto& c : contrasts) {
            StudyWork s;
            s.id = c.study;
            s.arms = c.arm_treatments;
            s.n_arms = c.n_arms();
            const int q = s.n_arms - 1;
            if (c.y.size() != q * m_ || c.S.rows() != q * m_ || c.S.cols() != q * m_)
                throw ValidationError("study " + c.study +
                                      ": contrast data has the wrong dimension");
            if (!std::is_sorted(s.arms.begin(), s.arms.end()) ||
                std::adjacent_find(s.arms.begin(), s.arms.end()) != s.arms.end())
                throw ValidationError("study " + c.study +
                                      ": arms must be distinct and ascending");
            if ((c.S - c.S.transpose()).cwiseAbs().maxCoeff() >
                1e-8 * (1.0 + c.S.cwiseAbs().maxCoeff()))
                throw FitError("study " + c.study +
                               ": within-study covariance is not symmetric");
            Eigen::LLT<Eigen::MatrixXd> llt(c.S);
            if (llt.info() != Eigen::Success)
                throw FitError("study " + c.study +
                               ": within-study covariance is not positive definite");
            s.y = c.y;
            s.q_mat = llt.solve(Eigen::MatrixXd::Identity(q * m_, q * m_));
            for (int k = 2; k <= s.n_arms; ++k) {
                std::vector<std::pair<int, double>> coeffs;
                coeffs.emplace_back(s.arms[static_cast<std::size_t>(k - 1)], 1.0);
                const double c_k = 1.0 / (k - 1);
                for (int a = 1; a <= k - 1; ++a)
                    coeffs.emplace_back(s.arms[static_cast<std::size_t>(a - 1)], -c_k);
                s.mean_coeffs.push_back(std::move(coeffs));
            }
            studies_.push_back(std::move(s));
        }

        n_var_ = spec_.effects == Effects::random ? (m_ == 2 ? 3 : 1) : 0;
        d_dim_ = (nt_ - 1) * m_;
        var_off_ = d_dim_;
        delta_off_ = var_off_ + n_var_;
        n_delta_ = 0;
        if (spec_.effects == Effects::random)
            for (const auto& s : studies_) n_delta_ += q_of(s) * m_;

        build_names();
        if (spec_.effects == Effects::fixed) precompute_fixed();
    }

    std::size_t state_size() const override {
        return static_cast<std::size_t>(d_dim_ + n_var_ + n_delta_);
    }
    const std::vector<std::string>& monitor_names() const override { return names_; }
    std::vector<std::string> block_names() const override {
        if (spec_.effects != Effects::random) return {};
        return m_ == 2 ? std::vector<std::string>{"tau1", "tau2", "theta"}
                       : std::vector<std::string>{"tau"};
    }
    const std::vector<std::string>& gate_names() const { return gate_; }

    void init_chain(std::span<double> st, ChainScratch& scratch, int chain,
                    RngStream& rng) const override {
        scratch.init_blocks(static_cast<std::size_t>(n_var_), 0.1);
        if (n_var_ == 3) scratch.rw_step[2] = 0.3;
        for (int i = 0; i < d_dim_; ++i) st[static_cast<std::size_t>(i)] = rng.runif(-2.0, 2.0);
        if (spec_.effects == Effects::random) {
            if (m_ == 2) {
                st[static_cast<std::size_t>(var_off_)] = detail::tau_start(chain);
                st[static_cast<std::size_t>(var_off_) + 1] = detail::tau_start(chain);
                st[static_cast<std::size_t>(var_off_) + 2] = detail::theta_start(chain);
            } else {
                st[static_cast<std::size_t>(var_off_)] = detail::tau_start(chain);
            }
            int off = delta_off_;
            for (const auto& s : studies_) {
                for (int j = 0; j < q_of(s) * m_; ++j)
                    st[static_cast<std::size_t>(off + j)] = s.y[j];
                off += q_of(s) * m_;
            }
        }
    }

    double log_density(std::span<const double> st) const override {
        double lp = 0.0;
        for (int i = 0; i < d_dim_; ++i)
            lp += -0.5 * st[static_cast<std::size_t>(i)] * st[static_cast<std::size_t>(i)] /
                  spec_.d_prior_variance;
        if (spec_.effects == Effects::fixed) {
            for (const auto& s : studies_) {
                Eigen::VectorXd mu(q_of(s) * m_);
                for (int k = 2; k <= s.n_arms; ++k)
                    mu.segment((k - 2) * m_, m_) = contrast_mean(st, s, k);
                const Eigen::VectorXd r = s.y - mu;
                lp += -0.5 * r.dot(s.q_mat * r);
            }
            return lp;
        }
        const Eigen::MatrixXd sigma = sigma_from(st);
        if (!(sigma.determinant() > 0.0)) return neg_inf;
        if (m_ == 2) {
            const double t1 = st[static_cast<std::size_t>(var_off_)];
            const double t2 = st[static_cast<std::size_t>(var_off_) + 1];
            const double th = st[static_cast<std::size_t>(var_off_) + 2];
            if (!(t1 > 0.0 && t1 < 1.0)) return neg_inf;
            if (spec_.tau2_prior == Tau2Prior::uniform && !(t2 > 0.0 && t2 < 1.0))
                return neg_inf;
            if (!(t2 > 0.0)) return neg_inf;
            if (!(th > 0.0 && th < detail::pi)) return neg_inf;
            if (spec_.tau2_prior == Tau2Prior::half_normal)
                lp += detail::half_normal_logprior(t2, spec_.half_normal_scale);
        } else {
            const double t = st[static_cast<std::size_t>(var_off_)];
            if (!(t > 0.0 && t < 1.0)) return neg_inf;
        }
        int off = delta_off_;
        for (const auto& s : studies_) {
            const int q = q_of(s);
            Eigen::VectorXd delta(q * m_);
            for (int j = 0; j < q * m_; ++j) delta[j] = st[static_cast<std::size_t>(off + j)];
            const Eigen::VectorXd r = s.y - delta;
            lp += -0.5 * r.dot(s.q_mat * r);
            // sequential prior factors
            std::vector<Eigen::VectorXd> w;
            for (int k = 2; k <= s.n_arms; ++k) {
                const Eigen::VectorXd a_k = contrast_mean(st, s, k);
                Eigen::VectorXd mu = a_k;
                const double c_k = 1.0 / (k - 1);
                for (const auto& wa : w) mu += c_k * wa;
                const Eigen::VectorXd dk = delta.segment((k - 2) * m_, m_);
                lp += detail::mvn_logpdf(dk, mu, multiarm_variance_factor(k) * sigma);
                w.push_back(dk - a_k);
            }
            off += q * m_;
        }
        return lp;
    }

    void sweep(std::span<double> st, ChainScratch& scratch, bool adapting,
               RngStream& rng) const override {
        if (spec_.effects == Effects::fixed) {
            const Eigen::VectorXd d = mvn_draw_canonical(fixed_prec_, fixed_b_, rng);
            for (int i = 0; i < d_dim_; ++i) st[static_cast<std::size_t>(i)] = d[i];
            return;
        }
        const Eigen::MatrixXd sigma = sigma_from(st);
        const Eigen::MatrixXd sigma_inv =
            sigma.llt().solve(Eigen::MatrixXd::Identity(m_, m_));

        update_deltas(st, sigma_inv, rng);
        update_d(st, sigma_inv, rng);
        update_variance(st, scratch, adapting, rng);
    }

    void monitor(std::span<const double> st, std::span<double> out) const override {
        std::size_t j = 0;
        for (int i = 0; i < d_dim_; ++i) out[j++] = st[static_cast<std::size_t>(i)];
        if (spec_.effects == Effects::random) {
            if (m_ == 2) {
                out[j++] = st[static_cast<std::size_t>(var_off_)];
                out[j++] = st[static_cast<std::size_t>(var_off_) + 1];
                out[j++] = st[static_cast<std::size_t>(var_off_) + 2];
                out[j++] = std::cos(st[static_cast<std::size_t>(var_off_) + 2]);
            } else {
                out[j++] = st[static_cast<std::size_t>(var_off_)];
            }
            int off = delta_off_;
            for (const auto& s : studies_) {
                for (int k = 2; k <= s.n_arms; ++k) {
                    const Eigen::VectorXd a_k = contrast_mean(st, s, k);
                    for (int c = 0; c < m_; ++c) {
                        const double dv = st[static_cast<std::size_t>(off + (k - 2) * m_ + c)];
                        out[j++] = dv;            // delta
                        out[j++] = dv - a_k[c];   // w
                    }
                }
                off += q_of(s) * m_;
            }
        }
    }

  private:
    // mean of contrast k of study s: d_{t_k} - (1/(k-1)) sum over previous arms
    Eigen::VectorXd contrast_mean(std::span<const double> st, const StudyWork& s,
                                  int k) const {
        Eigen::VectorXd mu = Eigen::VectorXd::Zero(m_);
        for (const auto& [t, coef] : s.mean_coeffs[static_cast<std::size_t>(k - 2)]) {
            if (t == 1) continue;  // d_1 = 0
            for (int c = 0; c < m_; ++c)
                mu[c] += coef * st[static_cast<std::size_t>((t - 2) * m_ + c)];
        }
        return mu;
    }

    Eigen::MatrixXd sigma_from(std::span<const double> st) const {
        if (spec_.effects == Effects::fixed)
            return Eigen::MatrixXd::Zero(m_, m_);
        if (m_ == 2)
            return spherical_sigma(st[static_cast<std::size_t>(var_off_)],
                                   st[static_cast<std::size_t>(var_off_) + 1],
                                   st[static_cast<std::size_t>(var_off_) + 2]);
        Eigen::MatrixXd s(1, 1);
        const double tau = st[static_cast<std::size_t>(var_off_)];
        s(0, 0) = tau * tau;
        return s;
    }

    void update_deltas(std::span<double> st, const Eigen::MatrixXd& sigma_inv,
                       RngStream& rng) const {
        int off = delta_off_;
        for (const auto& s : studies_) {
            const int q = q_of(s);
            Eigen::VectorXd delta(q * m_);
            for (int j = 0; j < q * m_; ++j) delta[j] = st[static_cast<std::size_t>(off + j)];
            std::vector<Eigen::VectorXd> a(static_cast<std::size_t>(q));
            for (int k = 2; k <= s.n_arms; ++k)
                a[static_cast<std::size_t>(k - 2)] = contrast_mean(st, s, k);

            for (int k = 2; k <= s.n_arms; ++k) {
                const int kb = (k - 2) * m_;
                Eigen::MatrixXd prec = s.q_mat.block(kb, kb, m_, m_);
                Eigen::VectorXd b = s.q_mat.block(kb, 0, m_, q * m_) * s.y;
                for (int l = 0; l < q; ++l) {
                    if (l == k - 2) continue;
                    b -= s.q_mat.block(kb, l * m_, m_, m_) * delta.segment(l * m_, m_);
                }
                // own prior factor
                {
                    const double c_k = 1.0 / (k - 1);
                    Eigen::VectorXd mu = a[static_cast<std::size_t>(k - 2)];
                    for (int j = 2; j < k; ++j)
                        mu += c_k * (delta.segment((j - 2) * m_, m_) -
                                     a[static_cast<std::size_t>(j - 2)]);
                    const Eigen::MatrixXd pf = sigma_inv / multiarm_variance_factor(k);
                    prec += pf;
                    b += pf * mu;
                }
                // downstream factors whose conditional means contain delta_k
                for (int j = k + 1; j <= s.n_arms; ++j) {
                    const double c_j = 1.0 / (j - 1);
                    Eigen::VectorXd r0 = delta.segment((j - 2) * m_, m_) -
                                         a[static_cast<std::size_t>(j - 2)] +
                                         c_j * a[static_cast<std::size_t>(k - 2)];
                    for (int l = 2; l < j; ++l) {
                        if (l == k) continue;
                        r0 -= c_j * (delta.segment((l - 2) * m_, m_) -
                                     a[static_cast<std::size_t>(l - 2)]);
                    }
                    const Eigen::MatrixXd pf = sigma_inv / multiarm_variance_factor(j);
                    prec += c_j * c_j * pf;
                    b += c_j * pf * r0;
                }
                delta.segment(kb, m_) = mvn_draw_canonical(prec, b, rng);
            }
            for (int j = 0; j < q * m_; ++j) st[static_cast<std::size_t>(off + j)] = delta[j];
            off += q * m_;
        }
    }

    void update_d(std::span<double> st, const Eigen::MatrixXd& sigma_inv,
                  RngStream& rng) const {
        Eigen::MatrixXd prec =
            Eigen::MatrixXd::Identity(d_dim_, d_dim_) / spec_.d_prior_variance;
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d_dim_);
        int off = delta_off_;
        for (const auto& s : studies_) {
            for (int k = 2; k <= s.n_arms; ++k) {
                const double c_k = 1.0 / (k - 1);
                // h = delta_k - c_k * sum of previous deltas
                Eigen::VectorXd h(m_);
                for (int c = 0; c < m_; ++c)
                    h[c] = st[static_cast<std::size_t>(off + (k - 2) * m_ + c)];
                for (int j = 2; j < k; ++j)
                    for (int c = 0; c < m_; ++c)
                        h[c] -= c_k * st[static_cast<std::size_t>(off + (j - 2) * m_ + c)];
                const Eigen::MatrixXd pf = sigma_inv / multiarm_variance_factor(k);
                const auto& coeffs = s.mean_coeffs[static_cast<std::size_t>(k - 2)];
                for (const auto& [t, ct] : coeffs) {
                    if (t == 1) continue;
                    rhs.segment((t - 2) * m_, m_) += ct * (pf * h);
                    for (const auto& [u, cu] : coeffs) {
                        if (u == 1) continue;
                        prec.block((t - 2) * m_, (u - 2) * m_, m_, m_) += ct * cu * pf;
                    }
                }
            }
            off += q_of(s) * m_;
        }
        const Eigen::VectorXd d = mvn_draw_canonical(prec, rhs, rng);
        for (int i = 0; i < d_dim_; ++i) st[static_cast<std::size_t>(i)] = d[i];
    }

    void update_variance(std::span<double> st, ChainScratch& scratch, bool adapting,
                         RngStream& rng) const {
        // residual scatter of the conditional factors, each scaled by 1/f_k
        Eigen::MatrixXd scatter = Eigen::MatrixXd::Zero(m_, m_);
        double n_factors = 0.0;
        int off = delta_off_;
        for (const auto& s : studies_) {
            std::vector<Eigen::VectorXd> w;
            for (int k = 2; k <= s.n_arms; ++k) {
                const Eigen::VectorXd a_k = contrast_mean(st, s, k);
                Eigen::VectorXd mu = a_k;
                const double c_k = 1.0 / (k - 1);
                for (const auto& wa : w) mu += c_k * wa;
                Eigen::VectorXd dk(m_);
                for (int c = 0; c < m_; ++c)
                    dk[c] = st[static_cast<std::size_t>(off + (k - 2) * m_ + c)];
                const Eigen::VectorXd e = dk - mu;
                scatter += e * e.transpose() / multiarm_variance_factor(k);
                n_factors += 1.0;
                w.push_back(dk - a_k);
            }
            off += q_of(s) * m_;
        }
        if (m_ == 2) {
            double t1 = st[static_cast<std::size_t>(var_off_)];
            double t2 = st[static_cast<std::size_t>(var_off_) + 1];
            double th = st[static_cast<std::size_t>(var_off_) + 2];
            detail::update_spherical_variance(t1, t2, th, scatter, n_factors,
                                              spec_.tau2_prior, spec_.half_normal_scale,
                                              spec_.kernel, scratch, 0, adapting, rng);
            st[static_cast<std::size_t>(var_off_)] = t1;
            st[static_cast<std::size_t>(var_off_) + 1] = t2;
            st[static_cast<std::size_t>(var_off_) + 2] = th;
        } else {
            double tau = st[static_cast<std::size_t>(var_off_)];
            detail::update_tau_univariate(tau, scatter(0, 0), n_factors, spec_.kernel,
                                          scratch, 0, adapting, rng);
            st[static_cast<std::size_t>(var_off_)] = tau;
        }
    }

    void precompute_fixed() {
        fixed_prec_ =
            Eigen::MatrixXd::Identity(d_dim_, d_dim_) / spec_.d_prior_variance;
        fixed_b_ = Eigen::VectorXd::Zero(d_dim_);
        for (const auto& s : studies_) {
            const int q = q_of(s);
            Eigen::MatrixXd x = Eigen::MatrixXd::Zero(q * m_, d_dim_);
            for (int k = 2; k <= s.n_arms; ++k) {
                const int tk = s.arms[static_cast<std::size_t>(k - 1)];
                const int t1 = s.arms[0];
                for (int c = 0; c < m_; ++c) {
                    if (tk != 1) x((k - 2) * m_ + c, (tk - 2) * m_ + c) += 1.0;
                    if (t1 != 1) x((k - 2) * m_ + c, (t1 - 2) * m_ + c) -= 1.0;
                }
            }
            fixed_prec_ += x.transpose() * s.q_mat * x;
            fixed_b_ += x.transpose() * s.q_mat * s.y;
        }
    }

    void build_names() {
        auto dname = [&](int comp, int t) {
            if (m_ == 1) return "d[" + std::to_string(t) + "]";
            return "d" + std::to_string(comp + 1) + "[" + std::to_string(t) + "]";
        };
        for (int t = 2; t <= nt_; ++t)
            for (int c = 0; c < m_; ++c) {
                names_.push_back(dname(c, t));
                gate_.push_back(names_.back());
            }
        if (spec_.effects == Effects::random) {
            if (m_ == 2) {
                names_.push_back("tau1");
                names_.push_back("tau2");
                names_.push_back("theta");
                names_.push_back("rho");
            } else {
                names_.push_back("tau");
            }
            int i = 1;
            for (const auto& s : studies_) {
                for (int k = 2; k <= s.n_arms; ++k) {
                    const int t = s.arms[static_cast<std::size_t>(k - 1)];
                    for (int c = 0; c < m_; ++c) {
                        const std::string tag = m_ == 1 ? "" : std::to_string(c + 1);
                        names_.push_back("delta" + tag + "[" + std::to_string(i) + "," +
                                         std::to_string(t) + "]");
                        names_.push_back("w" + tag + "[" + std::to_string(i) + "," +
                                         std::to_string(t) + "]");
                    }
                }
                ++i;
            }
        }
    }

    std::vector<StudyWork> studies_;
    int nt_;
    int m_;
    NmaModelSpec spec_;
    int d_dim_ = 0, n_var_ = 0, delta_off_ = 0, var_off_ = 0, n_delta_ = 0;
    std::vector<std::string> names_;
    std::vector<std::string> gate_;
    Eigen::MatrixXd fixed_prec_;
    Eigen::VectorXd fixed_b_;
};

void check_connected(std::span<const NmaContrast> contrasts, int nt) {
    std::vector<char> seen(static_cast<std::size_t>(nt) + 1, 0);
    std::vector<int> stack{1};
    seen[1] = 1;
    while (!stack.empty()) {
        const int t = stack.back();
        stack.pop_back();
        for (const auto& c : contrasts) {
            if (std::find(c.arm_treatments.begin(), c.arm_treatments.end(), t) ==
                c.arm_treatments.end())
                continue;
            for (int u : c.arm_treatments)
                if (!seen[static_cast<std::size_t>(u)]) {
                    seen[static_cast<std::size_t>(u)] = 1;
                    stack.push_back(u);
                }
        }
    }
    for (int t = 1; t <= nt; ++t)
        if (!seen[static_cast<std::size_t>(t)])
            throw ValidationError("evidence network is disconnected at treatment index " +
                                  std::to_string(t));
}

}  // namespace

NmaPosterior fit_nma(std::span<const NmaContrast> contrasts,
                     const std::vector<std::string>& treatment_labels, int dim,
                     const NmaModelSpec& spec, const SamplerProtocol& protocol) {
    if (contrasts.empty()) throw ValidationError("no contrast data supplied");
    if (dim != 1 && dim != 2)
        throw ValidationError("fit_nma: dim must be 1 (constant) or 2 (time-varying)");
    const int nt = static_cast<int>(treatment_labels.size());
    if (nt < 2) throw ValidationError("network needs at least 2 treatments");
    for (const auto& c : contrasts)
        for (int t : c.arm_treatments)
            if (t < 1 || t > nt)
                throw ValidationError("study " + c.study +
                                      ": treatment index out of range");
    check_connected(contrasts, nt);

    NmaPosterior post;
    post.dim = dim;
    post.n_treatments = nt;
    post.treatment_labels = treatment_labels;
    post.spec = spec;
    post.max_obs_time.assign(static_cast<std::size_t>(nt), 0.0);
    for (const auto& c : contrasts)
        for (int t : c.arm_treatments) {
            auto& m = post.max_obs_time[static_cast<std::size_t>(t - 1)];
            m = std::max(m, c.max_time);
        }

    if (spec.effects == Effects::random) {
        // comparisons informed by >= 2 studies?
        std::map<std::pair<int, int>, int> edge_count;
        for (const auto& c : contrasts)
            for (std::size_t i = 0; i < c.arm_treatments.size(); ++i)
                for (std::size_t j = i + 1; j < c.arm_treatments.size(); ++j)
                    ++edge_count[{c.arm_treatments[i], c.arm_treatments[j]}];
        int max_count = 0;
        for (const auto& [e, n] : edge_count) max_count = std::max(max_count, n);
        if (max_count < 2)
            post.warnings.push_back(
                "sparse network: every direct comparison is informed by a single "
                "study, so the between-study heterogeneity is weakly identified");
    }

    NmaModel model(contrasts, nt, dim, spec);
    post.gate_parameters = model.gate_names();
    post.draws = run_chains(model, protocol);
    return post;
}

std::vector<double> NmaPosterior::log_hr_draws(int a, int b,
                                               std::optional<double> t) const {
    if (a < 1 || a > n_treatments || b < 1 || b > n_treatments)
        throw ValidationError("unknown treatment index in relative effect");
    double logt = 0.0;
    if (dim == 2) {
        if (!t) throw FitError("the time-varying model needs a time for relative effects");
        if (!(*t > 0.0)) throw FitError("relative effect: time must be positive");
        logt = std::log(*t);
    }
    const std::size_t total = static_cast<std::size_t>(draws.total_retained());
    std::vector<double> out(total);
    const std::int64_t per = draws.retained_per_chain();
    std::vector<double> zeros(static_cast<std::size_t>(per), 0.0);
    std::vector<double> tmp1(static_cast<std::size_t>(per));
    std::vector<double> tmp2(static_cast<std::size_t>(per));

    auto col = [&](int treat, int comp, int chain) -> std::span<const double> {
        if (treat == 1) return zeros;
        const std::string name =
            dim == 1 ? "d[" + std::to_string(treat) + "]"
                     : "d" + std::to_string(comp + 1) + "[" + std::to_string(treat) + "]";
        return draws.chain_column(chain, draws.param_index(name));
    };

    std::size_t offset = 0;
    for (int c = 0; c < draws.n_chains(); ++c) {
        std::span<double> chunk(out.data() + offset, static_cast<std::size_t>(per));
        kernels::affine(col(a, 0, c), col(b, 0, c), -1.0, tmp1);
        if (dim == 2) {
            kernels::affine(col(a, 1, c), col(b, 1, c), -1.0, tmp2);
            kernels::affine(tmp1, tmp2, logt, chunk);
        } else {
            std::copy(tmp1.begin(), tmp1.end(), chunk.begin());
        }
        offset += static_cast<std::size_t>(per);
    }
    return out;
}

Summary relative_effect(const NmaPosterior& post, int a, int b,
                        std::optional<double> t) {
    std::vector<double> lhr = post.log_hr_draws(a, b, t);
    std::vector<double> hr(lhr.size());
    kernels::vexp(lhr, hr);
    return summarize(hr);
}

namespace {

// per-treatment value arrays on the log-hazard scale (reference = 0)
std::vector<std::vector<double>> treatment_values(const NmaPosterior& post,
                                                  std::optional<double> t,
                                                  RankDirection direction) {
    const int nt = post.n_treatments;
    std::vector<std::vector<double>> vals;
    vals.reserve(static_cast<std::size_t>(nt));
    for (int treat = 1; treat <= nt; ++treat) {
        std::vector<double> v = post.log_hr_draws(treat, 1, t);
        if (direction == RankDirection::higher_hr_best)
            for (double& x : v) x = -x;
        vals.push_back(std::move(v));
    }
    return vals;
}

}  // namespace

std::vector<RankSummary> rank_treatments(const NmaPosterior& post,
                                         std::optional<double> t,
                                         RankDirection direction) {
    const int nt = post.n_treatments;
    const auto vals = treatment_values(post, t, direction);
    const std::size_t total = vals.front().size();

    std::vector<RankSummary> out;
    out.reserve(static_cast<std::size_t>(nt));
    std::vector<std::int32_t> acc(total);
    for (int treat = 1; treat <= nt; ++treat) {
        std::fill(acc.begin(), acc.end(), 0);
        for (int u = 1; u <= nt; ++u) {
            if (u == treat) continue;
            // exact ties rank the lower treatment index better
            kernels::add_less_indicator(vals[static_cast<std::size_t>(u - 1)],
                                        vals[static_cast<std::size_t>(treat - 1)],
                                        u < treat, acc);
        }
        std::vector<std::int64_t> hist(static_cast<std::size_t>(nt), 0);
        double mean_rank = 0.0;
        for (std::size_t i = 0; i < total; ++i) {
            const int r = acc[i];  // 0-based rank
            ++hist[static_cast<std::size_t>(r)];
            mean_rank += r + 1;
        }
        mean_rank /= static_cast<double>(total);

        RankSummary rs;
        rs.treatment = treat;
        rs.mean_rank = mean_rank;
        rs.rank_probs.resize(static_cast<std::size_t>(nt));
        for (int r = 0; r < nt; ++r)
            rs.rank_probs[static_cast<std::size_t>(r)] =
                static_cast<double>(hist[static_cast<std::size_t>(r)]) /
                static_cast<double>(total);
        rs.p_best = rs.rank_probs[0];
        // discrete equal-tailed credible bounds of the rank distribution
        const double n_total = static_cast<double>(total);
        std::int64_t cum = 0;
        bool lo_set = false;
        rs.rank_lo = nt;
        rs.rank_hi = nt;
        for (int r = 0; r < nt; ++r) {
            cum += hist[static_cast<std::size_t>(r)];
            if (!lo_set && static_cast<double>(cum) >= 0.025 * n_total) {
                rs.rank_lo = r + 1;
                lo_set = true;
            }
            if (static_cast<double>(cum) >= 0.975 * n_total) {
                rs.rank_hi = r + 1;
                break;
            }
        }
        out.push_back(std::move(rs));
    }
    return out;
}

Eigen::MatrixXd probability_best_grid(const NmaPosterior& post,
                                      std::span<const double> times_years,
                                      RankDirection direction) {
    if (times_years.empty())
        throw ValidationError("probability_best_grid: empty time grid");
    if (post.dim != 2)
        throw FitError("probability_best_grid needs the time-varying model");
    const int nt = post.n_treatments;
    Eigen::MatrixXd grid(nt, static_cast<Eigen::Index>(times_years.size()));
    std::vector<double> best_val;
    std::vector<std::int32_t> best_idx;
    for (std::size_t ti = 0; ti < times_years.size(); ++ti) {
        const auto vals = treatment_values(post, times_years[ti], direction);
        const std::size_t total = vals.front().size();
        best_val.assign(total, std::numeric_limits<double>::infinity());
        best_idx.assign(total, 0);
        for (int treat = 1; treat <= nt; ++treat)
            kernels::argmin_update(vals[static_cast<std::size_t>(treat - 1)], best_val,
                                   best_idx, treat);
        std::vector<std::int64_t> count(static_cast<std::size_t>(nt) + 1, 0);
        for (std::size_t i = 0; i < total; ++i)
            ++count[static_cast<std::size_t>(best_idx[i])];
        for (int treat = 1; treat <= nt; ++treat)
            grid(treat - 1, static_cast<Eigen::Index>(ti)) =
                static_cast<double>(count[static_cast<std::size_t>(treat)]) /
                static_cast<double>(total);
    }
    return grid;
}

}  // namespace tvhr
