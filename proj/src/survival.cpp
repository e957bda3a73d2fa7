#include "tvhr/survival.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "tvhr/stats.hpp"

namespace tvhr {

const char* cox_model_name(CoxModel m) {
    return m == CoxModel::tvhr ? "tvhr" : "ph";
}

std::vector<KMCurve> km_estimate(const StudyDataset& study) {
    std::vector<KMCurve> out;
    for (int arm : study.arms) {
        std::vector<std::pair<double, int>> obs;  // (time, event)
        for (const auto& r : study.records)
            if (r.treatment == arm) obs.emplace_back(r.time, r.event);
        if (obs.empty()) throw FitError("km_estimate: empty arm in study " + study.id);
        std::sort(obs.begin(), obs.end());

        KMCurve c;
        c.treatment = arm;
        double surv = 1.0;
        std::size_t i = 0;
        const std::size_t n = obs.size();
        while (i < n) {
            const double t = obs[i].first;
            int deaths = 0;
            std::size_t j = i;
            while (j < n && obs[j].first == t) {
                deaths += obs[j].second;
                ++j;
            }
            const int at_risk = static_cast<int>(n - i);
            if (deaths > 0) {
                surv *= 1.0 - static_cast<double>(deaths) / at_risk;
                c.event_times.push_back(t);
                c.survival.push_back(surv);
                c.at_risk.push_back(at_risk);
                c.events.push_back(deaths);
            }
            i = j;
        }
        out.push_back(std::move(c));
    }
    return out;
}

namespace {

// Because treatment arm is the only covariate, every subject in an arm shares
// the same covariate vector at a given risk-set time. The partial likelihood
// then only needs per-arm at-risk and death counts at each distinct event
// time, giving O(#events x #arms) evaluation instead of O(#events x n).
struct CoxData {
    int q = 0;      // contrasts
    int m_per = 1;  // terms per contrast
    std::vector<double> event_times;          // distinct, ascending
    std::vector<std::vector<int>> at_risk;    // [event][arm 0..q]
    std::vector<std::vector<int>> deaths;     // [event][arm 0..q]
    int n_records = 0;
    int n_events = 0;
    double max_time = 0.0;

    int dim() const { return q * m_per; }
};

CoxData prepare(const StudyDataset& study, CoxModel model) {
    CoxData d;
    d.q = static_cast<int>(study.arms.size()) - 1;
    d.m_per = model == CoxModel::tvhr ? 2 : 1;
    d.n_records = static_cast<int>(study.records.size());

    std::map<int, int> arm_pos;  // treatment index -> 0..q
    for (std::size_t k = 0; k < study.arms.size(); ++k)
        arm_pos[study.arms[k]] = static_cast<int>(k);

    // (time, event, arm) sorted by time
    struct Obs {
        double time;
        int event;
        int arm;
    };
    std::vector<Obs> obs;
    obs.reserve(study.records.size());
    for (const auto& r : study.records) {
        auto it = arm_pos.find(r.treatment);
        if (it == arm_pos.end())
            throw FitError("record with treatment outside the study arms in study " +
                           study.id);
        obs.push_back({r.time, r.event, it->second});
        d.max_time = std::max(d.max_time, r.time);
    }
    std::sort(obs.begin(), obs.end(),
              [](const Obs& a, const Obs& b) { return a.time < b.time; });

    const int n_arms = d.q + 1;
    std::vector<int> risk(static_cast<std::size_t>(n_arms), 0);
    for (const auto& o : obs) ++risk[static_cast<std::size_t>(o.arm)];

    std::size_t i = 0;
    while (i < obs.size()) {
        const double t = obs[i].time;
        std::vector<int> dth(static_cast<std::size_t>(n_arms), 0);
        int total_deaths = 0;
        std::size_t j = i;
        while (j < obs.size() && obs[j].time == t) {
            if (obs[j].event) {
                ++dth[static_cast<std::size_t>(obs[j].arm)];
                ++total_deaths;
            }
            ++j;
        }
        if (total_deaths > 0) {
            d.event_times.push_back(t);
            d.at_risk.push_back(risk);
            d.deaths.push_back(dth);
            d.n_events += total_deaths;
        }
        for (std::size_t k = i; k < j; ++k) --risk[static_cast<std::size_t>(obs[k].arm)];
        i = j;
    }
    return d;
}

struct CoxEval {
    double loglik = 0.0;
    Eigen::VectorXd grad;
    Eigen::MatrixXd info;
};

// Per-event-time pieces used by the proportional-hazards trend test.
struct EventDetail {
    double time = 0.0;
    int deaths = 0;
    Eigen::VectorXd resid_sum;   // sum of Schoenfeld residuals at this time
    Eigen::VectorXd xbar;        // averaged risk-weighted covariate mean
    Eigen::MatrixXd vmat;        // information contribution
};

CoxEval evaluate(const CoxData& d, Ties ties, const Eigen::VectorXd& beta,
                 std::vector<EventDetail>* details = nullptr) {
    const int dim = d.dim();
    CoxEval out;
    out.grad = Eigen::VectorXd::Zero(dim);
    out.info = Eigen::MatrixXd::Zero(dim, dim);

    Eigen::VectorXd z = Eigen::VectorXd::Zero(dim);
    Eigen::VectorXd s1 = Eigen::VectorXd::Zero(dim);
    Eigen::VectorXd s1d = Eigen::VectorXd::Zero(dim);
    Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::MatrixXd s2d = Eigen::MatrixXd::Zero(dim, dim);

    for (std::size_t e = 0; e < d.event_times.size(); ++e) {
        const double logt = std::log(d.event_times[e]);
        double s0 = 0.0, s0d = 0.0;
        s1.setZero();
        s1d.setZero();
        s2.setZero();
        s2d.setZero();
        int deaths = 0;
        double ll_num = 0.0;
        Eigen::VectorXd grad_num = Eigen::VectorXd::Zero(dim);

        for (int arm = 0; arm <= d.q; ++arm) {
            const int nr = d.at_risk[e][static_cast<std::size_t>(arm)];
            const int dt = d.deaths[e][static_cast<std::size_t>(arm)];
            if (nr == 0 && dt == 0) continue;
            double eta = 0.0;
            z.setZero();
            if (arm > 0) {
                const int p = (arm - 1) * d.m_per;
                z[p] = 1.0;
                eta = beta[p];
                if (d.m_per == 2) {
                    z[p + 1] = logt;
                    eta += beta[p + 1] * logt;
                }
            }
            const double w = std::exp(eta);
            s0 += nr * w;
            if (arm > 0) {
                const int p = (arm - 1) * d.m_per;
                for (int a = 0; a < d.m_per; ++a) {
                    s1[p + a] += nr * w * z[p + a];
                    for (int b = 0; b < d.m_per; ++b)
                        s2(p + a, p + b) += nr * w * z[p + a] * z[p + b];
                }
            }
            if (dt > 0) {
                deaths += dt;
                s0d += dt * w;
                ll_num += dt * eta;
                if (arm > 0) {
                    const int p = (arm - 1) * d.m_per;
                    for (int a = 0; a < d.m_per; ++a) {
                        grad_num[p + a] += dt * z[p + a];
                        s1d[p + a] += dt * w * z[p + a];
                        for (int b = 0; b < d.m_per; ++b)
                            s2d(p + a, p + b) += dt * w * z[p + a] * z[p + b];
                    }
                }
            }
        }

        out.loglik += ll_num;
        out.grad += grad_num;

        EventDetail det;
        if (details) {
            det.time = d.event_times[e];
            det.deaths = deaths;
            det.resid_sum = grad_num;
            det.xbar = Eigen::VectorXd::Zero(dim);
            det.vmat = Eigen::MatrixXd::Zero(dim, dim);
        }

        const int terms = (ties == Ties::efron) ? deaths : 1;
        for (int r = 0; r < terms; ++r) {
            const double f =
                (ties == Ties::efron) ? static_cast<double>(r) / deaths : 0.0;
            const double wt = (ties == Ties::efron) ? 1.0 : deaths;
            const double denom = s0 - f * s0d;
            const Eigen::VectorXd mr = (s1 - f * s1d) / denom;
            const Eigen::MatrixXd vr =
                (s2 - f * s2d) / denom - mr * mr.transpose();
            out.loglik -= wt * std::log(denom);
            out.grad -= wt * mr;
            out.info += wt * vr;
            if (details) {
                det.resid_sum -= wt * mr;
                det.xbar += wt * mr / deaths;
                det.vmat += wt * vr;
            }
        }
        if (details) details->push_back(std::move(det));
    }
    return out;
}

CoxFit fit_cox_impl(const StudyDataset& study, CoxModel model, Ties ties) {
    if (study.arms.size() < 2)
        throw FitError("Cox fit needs at least two arms in study " + study.id);
    {
        std::set<int> distinct(study.arms.begin(), study.arms.end());
        if (distinct.size() != study.arms.size())
            throw FitError("constant covariate: duplicated arm in study " + study.id);
    }
    for (int arm : study.arms) {
        if (study.records_in_arm(arm) == 0)
            throw FitError("empty arm " + std::to_string(arm) + " in study " + study.id);
        if (study.events_in_arm(arm) == 0)
            throw FitError("no events in arm " + std::to_string(arm) + " of study " +
                           study.id + "; every arm entering a Cox fit needs >=1 event");
    }

    const CoxData data = prepare(study, model);
    if (model == CoxModel::tvhr && data.event_times.size() < 2)
        throw FitError("time-varying fit needs >=2 distinct event times in study " +
                       study.id);

    const int dim = data.dim();
    const int max_iter = 50;
    const double grad_tol = 1e-6;
    const double ll_tol = 1e-9;

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(dim);
    CoxEval cur = evaluate(data, ties, beta);
    bool converged = false;
    int used_iters = 0;

    for (int it = 1; it <= max_iter; ++it) {
        used_iters = it;
        Eigen::LLT<Eigen::MatrixXd> llt(cur.info);
        if (llt.info() != Eigen::Success)
            throw FitError("singular information matrix in study " + study.id);
        Eigen::VectorXd step = llt.solve(cur.grad);

        Eigen::VectorXd cand = beta + step;
        CoxEval cand_eval = evaluate(data, ties, cand);
        int halvings = 0;
        while (cand_eval.loglik < cur.loglik && halvings < 30) {
            step *= 0.5;
            cand = beta + step;
            cand_eval = evaluate(data, ties, cand);
            ++halvings;
        }

        const double rel_dll =
            std::fabs(cand_eval.loglik - cur.loglik) / (std::fabs(cur.loglik) + 1.0);
        beta = cand;
        cur = cand_eval;

        if (beta.cwiseAbs().maxCoeff() > 15.0)
            throw FitError(
                "monotone partial likelihood in study " + study.id +
                ": coefficient diverging (|beta| > 15); the arms are separated");

        if (rel_dll < ll_tol && cur.grad.cwiseAbs().maxCoeff() < grad_tol) {
            converged = true;
            break;
        }
    }
    if (!converged)
        throw FitError("Cox fit did not converge within " + std::to_string(max_iter) +
                       " iterations in study " + study.id);

    Eigen::LLT<Eigen::MatrixXd> llt(cur.info);
    if (llt.info() != Eigen::Success)
        throw FitError("singular information matrix at the solution in study " +
                       study.id);
    Eigen::MatrixXd cov =
        llt.solve(Eigen::MatrixXd::Identity(dim, dim));
    cov = 0.5 * (cov + cov.transpose()).eval();  // clean up round-off asymmetry

    CoxFit fit;
    fit.model = model;
    fit.ties = ties;
    fit.reference_treatment = study.arms.front();
    fit.contrast_treatments.assign(study.arms.begin() + 1, study.arms.end());
    for (int t : fit.contrast_treatments) {
        fit.term_names.push_back("trt" + std::to_string(t));
        if (model == CoxModel::tvhr)
            fit.term_names.push_back("trt" + std::to_string(t) + ":logt");
    }
    fit.coefficients = beta;
    fit.covariance = cov;
    fit.log_partial_likelihood = cur.loglik;
    fit.iterations = used_iters;
    fit.converged = true;
    fit.n_records = data.n_records;
    fit.n_events = data.n_events;
    fit.max_time = data.max_time;
    return fit;
}

}  // namespace

CoxFit fit_cox(const StudyDataset& study, CoxModel model, Ties ties) {
    return fit_cox_impl(study, model, ties);
}

CoxFit fit_cox_pair(const StudyDataset& study, int treatment, int control,
                    CoxModel model, Ties ties) {
    if (treatment == control)
        throw FitError("constant covariate: contrast of a treatment with itself");
    StudyDataset sub;
    sub.id = study.id;
    sub.arms = {control, treatment};
    for (const auto& r : study.records)
        if (r.treatment == treatment || r.treatment == control)
            sub.records.push_back(r);
    return fit_cox_impl(sub, model, ties);
}

HrEstimate hr_at_time(const CoxFit& fit, double t, int contrast) {
    if (!(t > 0.0)) throw FitError("hr_at_time: t must be positive");
    if (contrast < 1 || contrast > fit.n_contrasts())
        throw FitError("hr_at_time: no such contrast");
    const int m = fit.terms_per_contrast();
    const int p = (contrast - 1) * m;
    HrEstimate e;
    e.time = t;
    if (m == 1) {
        e.log_hr = fit.coefficients[p];
        e.se = std::sqrt(fit.covariance(p, p));
    } else {
        const double lt = std::log(t);
        e.log_hr = fit.coefficients[p] + fit.coefficients[p + 1] * lt;
        const double var = fit.covariance(p, p) + lt * lt * fit.covariance(p + 1, p + 1) +
                           2.0 * lt * fit.covariance(p, p + 1);
        e.se = std::sqrt(std::max(var, 0.0));
    }
    const double z = 1.959963984540054;
    e.hr = std::exp(e.log_hr);
    e.lo = std::exp(e.log_hr - z * e.se);
    e.hi = std::exp(e.log_hr + z * e.se);
    return e;
}

PHTestResult schoenfeld_test(const StudyDataset& study, const CoxFit& fit) {
    if (fit.model != CoxModel::proportional)
        throw FitError("schoenfeld_test requires a proportional-hazards fit");
    if (!fit.converged) throw FitError("schoenfeld_test requires a converged fit");

    const CoxData data = prepare(study, CoxModel::proportional);
    if (data.n_events < 3)
        throw FitError("schoenfeld_test needs at least 3 events, study " + study.id +
                       " has " + std::to_string(data.n_events));

    std::vector<EventDetail> details;
    evaluate(data, fit.ties, fit.coefficients, &details);

    const int dim = data.dim();

    // centred log-time transform
    double gbar = 0.0;
    int total_deaths = 0;
    for (const auto& d : details) {
        gbar += d.deaths * std::log(d.time);
        total_deaths += d.deaths;
    }
    gbar /= total_deaths;

    Eigen::VectorXd u = Eigen::VectorXd::Zero(dim);
    Eigen::MatrixXd i_bb = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::MatrixXd i_bt = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::MatrixXd i_tt = Eigen::MatrixXd::Zero(dim, dim);
    for (const auto& d : details) {
        const double g = std::log(d.time) - gbar;
        u += g * d.resid_sum;
        i_bb += d.vmat;
        i_bt += g * d.vmat;
        i_tt += g * g * d.vmat;
    }

    // score test for the treatment x log(time) coefficients of the expanded
    // model, evaluated at the fitted beta and zero trend
    Eigen::LDLT<Eigen::MatrixXd> bb(i_bb);
    const Eigen::MatrixXd schur = i_tt - i_bt * bb.solve(i_bt);

    PHTestResult res;
    for (int c = 0; c < dim; ++c) {
        PHTestResult::Test t;
        t.name = fit.term_names[static_cast<std::size_t>(c)];
        t.df = 1;
        t.chisq = u[c] * u[c] / schur(c, c);
        t.p = chisq_sf(t.chisq, 1.0);
        res.per_covariate.push_back(std::move(t));
    }
    Eigen::LDLT<Eigen::MatrixXd> sc(schur);
    res.global.name = "GLOBAL";
    res.global.df = dim;
    res.global.chisq = u.dot(sc.solve(u));
    res.global.p = chisq_sf(res.global.chisq, static_cast<double>(dim));

    // scaled residuals per death for plotting: beta + nevents * cov * resid
    res.scaled_residuals.resize(total_deaths, dim);
    res.residual_times.reserve(static_cast<std::size_t>(total_deaths));
    std::map<int, int> arm_pos;
    for (std::size_t k = 0; k < study.arms.size(); ++k)
        arm_pos[study.arms[k]] = static_cast<int>(k);
    int row = 0;
    std::size_t ev_idx = 0;
    for (const auto& d : details) {
        // per-death residual: x_of_death - xbar at this event time
        const auto& dcounts = data.deaths[ev_idx];
        for (int arm = 0; arm <= data.q; ++arm) {
            Eigen::VectorXd x = Eigen::VectorXd::Zero(dim);
            if (arm > 0) x[arm - 1] = 1.0;
            const Eigen::VectorXd resid = x - d.xbar;
            const Eigen::VectorXd scaled =
                fit.coefficients + total_deaths * (fit.covariance * resid);
            for (int rep = 0; rep < dcounts[static_cast<std::size_t>(arm)]; ++rep) {
                res.residual_times.push_back(d.time);
                res.scaled_residuals.row(row++) = scaled.transpose();
            }
        }
        ++ev_idx;
    }
    return res;
}

}  // namespace tvhr
