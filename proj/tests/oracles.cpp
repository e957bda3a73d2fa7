#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace oracle {

void efron_derivs(const std::vector<Record>& data, const Eigen::VectorXd& beta,
                  double& loglik, Eigen::VectorXd& grad, Eigen::MatrixXd& info) {
    const int m = static_cast<int>(beta.size());
    loglik = 0.0;
    grad = Eigen::VectorXd::Zero(m);
    info = Eigen::MatrixXd::Zero(m, m);

    std::set<double> event_times;
    for (const auto& r : data)
        if (r.event) event_times.insert(r.stop);

    for (double t : event_times) {
        double s0 = 0.0, s0d = 0.0;
        Eigen::VectorXd s1 = Eigen::VectorXd::Zero(m), s1d = Eigen::VectorXd::Zero(m);
        Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(m, m),
                        s2d = Eigen::MatrixXd::Zero(m, m);
        int deaths = 0;
        for (const auto& r : data) {
            if (!(r.start < t && t <= r.stop)) continue;
            const Eigen::Map<const Eigen::VectorXd> z(r.z.data(),
                                                      static_cast<Eigen::Index>(r.z.size()));
            const double w = std::exp(beta.dot(z));
            s0 += w;
            s1 += w * z;
            s2 += w * z * z.transpose();
            if (r.event && r.stop == t) {
                ++deaths;
                s0d += w;
                s1d += w * z;
                s2d += w * z * z.transpose();
                loglik += beta.dot(z);
                grad += z;
            }
        }
        for (int r = 0; r < deaths; ++r) {
            const double f = static_cast<double>(r) / deaths;
            const double denom = s0 - f * s0d;
            const Eigen::VectorXd mr = (s1 - f * s1d) / denom;
            loglik -= std::log(denom);
            grad -= mr;
            info += (s2 - f * s2d) / denom - mr * mr.transpose();
        }
    }
}

double efron_loglik(const std::vector<Record>& data, const Eigen::VectorXd& beta) {
    double ll;
    Eigen::VectorXd g;
    Eigen::MatrixXd h;
    efron_derivs(data, beta, ll, g, h);
    return ll;
}

Eigen::VectorXd newton_fit(const std::vector<Record>& data, Eigen::MatrixXd* cov) {
    const int m = static_cast<int>(data.front().z.size());
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(m);
    double ll;
    Eigen::VectorXd grad;
    Eigen::MatrixXd info;
    efron_derivs(data, beta, ll, grad, info);
    for (int it = 0; it < 100; ++it) {
        Eigen::VectorXd step = info.ldlt().solve(grad);
        Eigen::VectorXd cand = beta + step;
        double cand_ll;
        Eigen::VectorXd cand_grad;
        Eigen::MatrixXd cand_info;
        efron_derivs(data, cand, cand_ll, cand_grad, cand_info);
        int halvings = 0;
        while (cand_ll < ll && halvings++ < 40) {
            step *= 0.5;
            cand = beta + step;
            efron_derivs(data, cand, cand_ll, cand_grad, cand_info);
        }
        const double delta = std::fabs(cand_ll - ll);
        beta = cand;
        ll = cand_ll;
        grad = cand_grad;
        info = cand_info;
        if (delta < 1e-13 * (std::fabs(ll) + 1.0) && grad.cwiseAbs().maxCoeff() < 1e-9)
            break;
    }
    if (cov) *cov = info.ldlt().solve(Eigen::MatrixXd::Identity(m, m));
    return beta;
}

double cox_1d_mle(const std::vector<Record>& data) {
    auto f = [&](double b) {
        Eigen::VectorXd beta(1);
        beta[0] = b;
        return efron_loglik(data, beta);
    };
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = -15.0, b = 15.0;
    double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
    double f1 = f(x1), f2 = f(x2);
    while (b - a > 1e-10) {
        if (f1 < f2) {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + gr * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - gr * (b - a);
            f1 = f(x1);
        }
    }
    return 0.5 * (a + b);
}

namespace {

std::vector<double> arm_indicators(const tvhr::StudyDataset& study, int treatment) {
    std::vector<double> z;
    for (std::size_t k = 1; k < study.arms.size(); ++k)
        z.push_back(study.arms[k] == treatment ? 1.0 : 0.0);
    return z;
}

}  // namespace

std::vector<Record> expand_tvhr(const tvhr::StudyDataset& study) {
    std::set<double> event_time_set;
    for (const auto& r : study.records)
        if (r.event) event_time_set.insert(r.time);
    const std::vector<double> event_times(event_time_set.begin(), event_time_set.end());

    const std::size_t q = study.arms.size() - 1;
    std::vector<Record> out;
    for (const auto& subj : study.records) {
        const std::vector<double> x = arm_indicators(study, subj.treatment);
        double prev = 0.0;
        for (double t : event_times) {
            if (t >= subj.time) break;
            Record r;
            r.start = prev;
            r.stop = t;
            r.event = 0;
            r.z.resize(2 * q);
            for (std::size_t c = 0; c < q; ++c) {
                r.z[2 * c] = x[c];
                r.z[2 * c + 1] = x[c] * std::log(t);
            }
            out.push_back(std::move(r));
            prev = t;
        }
        Record last;
        last.start = prev;
        last.stop = subj.time;
        last.event = subj.event;
        last.z.resize(2 * q);
        for (std::size_t c = 0; c < q; ++c) {
            last.z[2 * c] = x[c];
            last.z[2 * c + 1] = x[c] * std::log(subj.time);
        }
        out.push_back(std::move(last));
    }
    return out;
}

std::vector<Record> ph_records(const tvhr::StudyDataset& study) {
    std::vector<Record> out;
    out.reserve(study.records.size());
    for (const auto& subj : study.records) {
        Record r;
        r.start = 0.0;
        r.stop = subj.time;
        r.event = subj.event;
        r.z = arm_indicators(study, subj.treatment);
        out.push_back(std::move(r));
    }
    return out;
}

tvhr::StudyDataset simulate_tvhr_study(tvhr::RngStream& rng, int n_per_arm,
                                       double lambda0, double b1, double b2,
                                       double censor_rate, double admin_censor,
                                       const std::string& id) {
    tvhr::StudyDataset s;
    s.id = id;
    s.arms = {1, 2};
    for (int arm = 1; arm <= 2; ++arm) {
        for (int i = 0; i < n_per_arm; ++i) {
            double t;
            if (arm == 1) {
                t = rng.rexp() / lambda0;
            } else {
                // Lambda(t) = lambda0 e^{b1} t^{b2+1} / (b2+1); invert at E ~ Exp(1)
                const double e = rng.rexp();
                t = std::pow(e * (b2 + 1.0) / (lambda0 * std::exp(b1)),
                             1.0 / (b2 + 1.0));
            }
            double c = admin_censor;
            if (censor_rate > 0.0) c = std::min(c, rng.rexp() / censor_rate);
            tvhr::SurvivalRecord r;
            r.treatment = arm;
            r.event = t <= c ? 1 : 0;
            r.time = std::min(t, c);
            if (r.time <= 0.0) r.time = 1e-9;
            s.records.push_back(r);
        }
    }
    return s;
}

namespace {

bool usable(const tvhr::StudyDataset& s, bool require_two_event_times) {
    std::set<double> times;
    for (int arm : s.arms) {
        if (s.events_in_arm(arm) < 1) return false;
        if (s.records_in_arm(arm) < 2) return false;
    }
    for (const auto& r : s.records)
        if (r.event) times.insert(r.time);
    if (require_two_event_times && times.size() < 2) return false;
    return true;
}

}  // namespace

tvhr::StudyDataset random_small_study(tvhr::RngStream& rng, int max_n, bool allow_ties,
                                      bool require_two_event_times,
                                      const std::string& id) {
    for (int attempt = 0; attempt < 1000; ++attempt) {
        tvhr::StudyDataset s;
        s.id = id;
        s.arms = {1, 2};
        const int n = 4 + static_cast<int>(rng.runif() * (max_n - 4));
        for (int i = 0; i < n; ++i) {
            tvhr::SurvivalRecord r;
            r.treatment = rng.runif() < 0.5 ? 1 : 2;
            double t = rng.rexp();
            if (allow_ties && rng.runif() < 0.35)
                t = std::max(0.1, std::round(t * 4.0) / 4.0);  // force tied times
            r.time = t;
            r.event = rng.runif() < 0.7 ? 1 : 0;
            s.records.push_back(r);
        }
        if (usable(s, require_two_event_times)) return s;
    }
    throw std::runtime_error("random_small_study: could not build a usable dataset");
}

tvhr::StudyDataset random_multiarm_study(tvhr::RngStream& rng, int max_n, int arms,
                                         const std::string& id) {
    for (int attempt = 0; attempt < 1000; ++attempt) {
        tvhr::StudyDataset s;
        s.id = id;
        for (int a = 1; a <= arms; ++a) s.arms.push_back(a);
        const int n = std::max(3 * arms, static_cast<int>(rng.runif() * max_n));
        for (int i = 0; i < n; ++i) {
            tvhr::SurvivalRecord r;
            r.treatment = 1 + static_cast<int>(rng.runif() * arms);
            r.treatment = std::min(r.treatment, arms);
            double t = rng.rexp();
            if (rng.runif() < 0.3) t = std::max(0.1, std::round(t * 4.0) / 4.0);
            r.time = t;
            r.event = rng.runif() < 0.75 ? 1 : 0;
            s.records.push_back(r);
        }
        if (usable(s, true)) return s;
    }
    throw std::runtime_error("random_multiarm_study: could not build a usable dataset");
}

std::vector<std::pair<double, double>> km_brute_force(const tvhr::StudyDataset& study,
                                                      int treatment) {
    std::vector<std::pair<double, int>> obs;
    for (const auto& r : study.records)
        if (r.treatment == treatment) obs.emplace_back(r.time, r.event);
    std::set<double> etimes;
    for (const auto& [t, e] : obs)
        if (e) etimes.insert(t);
    std::vector<std::pair<double, double>> out;
    for (double t : etimes) {
        double surv = 1.0;
        for (double u : etimes) {
            if (u > t) break;
            int at_risk = 0, deaths = 0;
            for (const auto& [tt, e] : obs) {
                if (tt >= u) ++at_risk;
                if (e && tt == u) ++deaths;
            }
            surv *= 1.0 - static_cast<double>(deaths) / at_risk;
        }
        out.emplace_back(t, surv);
    }
    return out;
}

}  // namespace oracle
