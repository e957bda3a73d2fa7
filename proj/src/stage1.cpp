#include "tvhr/stage1.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <future>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace tvhr {

namespace {

using ordered_json = nlohmann::ordered_json;

Stage1StudyFit from_cox(const StudyDataset& study, const CoxFit& fit) {
    Stage1StudyFit f;
    f.study = study.id;
    f.arm_treatments = study.arms;
    f.n = fit.n_records;
    f.events = fit.n_events;
    f.max_time = fit.max_time;
    f.coefficients = fit.coefficients;
    f.covariance = fit.covariance;
    f.log_partial_likelihood = fit.log_partial_likelihood;
    f.iterations = fit.iterations;
    f.converged = fit.converged;
    return f;
}

bool still_connected(const std::vector<const StudyDataset*>& studies, int nt) {
    std::vector<char> seen(static_cast<std::size_t>(nt) + 1, 0);
    std::vector<int> stack{1};
    seen[1] = 1;
    std::set<int> present{1};
    for (const auto* s : studies)
        for (int t : s->arms) present.insert(t);
    while (!stack.empty()) {
        const int t = stack.back();
        stack.pop_back();
        for (const auto* s : studies) {
            if (std::find(s->arms.begin(), s->arms.end(), t) == s->arms.end()) continue;
            for (int u : s->arms)
                if (!seen[static_cast<std::size_t>(u)]) {
                    seen[static_cast<std::size_t>(u)] = 1;
                    stack.push_back(u);
                }
        }
    }
    for (int t : present)
        if (!seen[static_cast<std::size_t>(t)]) return false;
    return true;
}

}  // namespace

Stage1Result stage1_fit_all(const EvidenceNetwork& net, CoxModel model, Ties ties,
                            bool skip_failed) {
    Stage1Result res;
    res.model = model;
    res.ties = ties;
    res.treatments = net.treatments;

    struct Outcome {
        bool ok = false;
        Stage1StudyFit fit;
        std::string error;
    };
    std::vector<std::future<Outcome>> futs;
    futs.reserve(net.studies.size());
    for (const auto& s : net.studies) {
        futs.push_back(std::async(std::launch::async, [&s, model, ties]() {
            Outcome o;
            try {
                o.fit = from_cox(s, fit_cox(s, model, ties));
                o.ok = true;
            } catch (const std::exception& e) {
                o.error = e.what();
            }
            return o;
        }));
    }

    std::vector<const StudyDataset*> kept;
    for (std::size_t i = 0; i < futs.size(); ++i) {
        Outcome o = futs[i].get();
        if (o.ok) {
            res.studies.push_back(std::move(o.fit));
            kept.push_back(&net.studies[i]);
        } else if (skip_failed) {
            res.skipped.push_back(net.studies[i].id + ": " + o.error);
        } else {
            throw FitError("stage-1 fit failed for study " + net.studies[i].id + ": " +
                           o.error);
        }
    }
    if (res.studies.empty())
        throw FitError("stage 1 produced no usable study fits");
    if (!res.skipped.empty() && !still_connected(kept, net.n_treatments()))
        throw ValidationError(
            "dropping failed studies disconnected the evidence network");
    return res;
}

void write_stage1_json(const Stage1Result& result, const std::string& path) {
    ordered_json j;
    j["schema"] = "tvhr-stage1/1";
    j["model"] = cox_model_name(result.model);
    j["ties"] = result.ties == Ties::efron ? "efron" : "breslow";
    j["treatments"] = result.treatments;
    j["skipped"] = result.skipped;
    ordered_json studies = ordered_json::array();
    for (const auto& s : result.studies) {
        ordered_json js;
        js["study"] = s.study;
        js["arm_treatments"] = s.arm_treatments;
        js["n"] = s.n;
        js["events"] = s.events;
        js["max_time"] = s.max_time;
        js["coefficients"] = std::vector<double>(
            s.coefficients.data(), s.coefficients.data() + s.coefficients.size());
        ordered_json cov = ordered_json::array();
        for (Eigen::Index r = 0; r < s.covariance.rows(); ++r) {
            ordered_json row = ordered_json::array();
            for (Eigen::Index c = 0; c < s.covariance.cols(); ++c)
                row.push_back(s.covariance(r, c));
            cov.push_back(std::move(row));
        }
        js["covariance"] = std::move(cov);
        js["log_partial_likelihood"] = s.log_partial_likelihood;
        js["iterations"] = s.iterations;
        js["converged"] = s.converged;
        studies.push_back(std::move(js));
    }
    j["studies"] = std::move(studies);
    std::ofstream out(path);
    if (!out) throw FitError("cannot write " + path);
    out << j.dump(2) << '\n';
}

Stage1Result read_stage1_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open stage-1 file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ValidationError("stage-1 parse error in " + path + ": " + e.what());
    }
    if (j.value("schema", "") != "tvhr-stage1/1")
        throw ValidationError(path + ": unknown stage-1 schema");
    Stage1Result res;
    res.model = j.value("model", "ph") == std::string("tvhr") ? CoxModel::tvhr
                                                              : CoxModel::proportional;
    res.ties = j.value("ties", "efron") == std::string("breslow") ? Ties::breslow
                                                                  : Ties::efron;
    res.treatments = j.at("treatments").get<std::vector<std::string>>();
    if (j.contains("skipped"))
        res.skipped = j["skipped"].get<std::vector<std::string>>();
    for (const auto& js : j.at("studies")) {
        Stage1StudyFit s;
        s.study = js.at("study").get<std::string>();
        s.arm_treatments = js.at("arm_treatments").get<std::vector<int>>();
        s.n = js.value("n", 0);
        s.events = js.value("events", 0);
        s.max_time = js.value("max_time", 0.0);
        const auto coefs = js.at("coefficients").get<std::vector<double>>();
        s.coefficients = Eigen::Map<const Eigen::VectorXd>(
            coefs.data(), static_cast<Eigen::Index>(coefs.size()));
        const auto& cov = js.at("covariance");
        const auto rows = static_cast<Eigen::Index>(cov.size());
        s.covariance.resize(rows, rows);
        for (Eigen::Index r = 0; r < rows; ++r) {
            const auto row = cov[static_cast<std::size_t>(r)].get<std::vector<double>>();
            if (static_cast<Eigen::Index>(row.size()) != rows)
                throw ValidationError(path + ": ragged covariance for study " + s.study);
            for (Eigen::Index c = 0; c < rows; ++c)
                s.covariance(r, c) = row[static_cast<std::size_t>(c)];
        }
        if (s.coefficients.size() != rows)
            throw ValidationError(path + ": coefficient/covariance size mismatch for " +
                                  s.study);
        s.log_partial_likelihood = js.value("log_partial_likelihood", 0.0);
        s.iterations = js.value("iterations", 0);
        s.converged = js.value("converged", true);
        res.studies.push_back(std::move(s));
    }
    return res;
}

std::vector<PairwiseEstimate> to_pairwise_estimates(const Stage1Result& result) {
    std::vector<PairwiseEstimate> out;
    out.reserve(result.studies.size());
    for (const auto& s : result.studies) {
        if (s.arm_treatments.size() != 2)
            throw ValidationError("study " + s.study +
                                  " has more than 2 arms; pairwise pooling needs "
                                  "two-arm studies (use the network model)");
        PairwiseEstimate e;
        e.study = s.study;
        e.y = s.coefficients;
        e.S = s.covariance;
        out.push_back(std::move(e));
    }
    return out;
}

std::vector<NmaContrast> to_nma_contrasts(const Stage1Result& result) {
    std::vector<NmaContrast> out;
    out.reserve(result.studies.size());
    for (const auto& s : result.studies) {
        NmaContrast c;
        c.study = s.study;
        c.arm_treatments = s.arm_treatments;
        c.y = s.coefficients;
        c.S = s.covariance;
        c.max_time = s.max_time;
        out.push_back(std::move(c));
    }
    return out;
}

std::vector<PairwiseEstimate> read_aggregate_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open aggregate file: " + path);
    std::vector<PairwiseEstimate> out;
    std::string line;
    std::size_t lineno = 0;
    bool header_checked = false;
    while (std::getline(in, line)) {
        ++lineno;
        // strip CR and skip blanks
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n'))
            line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, ',')) f.push_back(tok);
        if (!header_checked) {
            header_checked = true;
            double probe;
            auto [p, ec] = std::from_chars(f.size() > 1 ? f[1].data() : "",
                                           f.size() > 1 ? f[1].data() + f[1].size() : "",
                                           probe);
            if (ec != std::errc{} || p != f[1].data() + f[1].size()) continue;  // header
        }
        const std::string ctx = path + ":" + std::to_string(lineno);
        auto num = [&](std::size_t i) {
            double v;
            auto [p, ec] = std::from_chars(f[i].data(), f[i].data() + f[i].size(), v);
            if (ec != std::errc{} || p != f[i].data() + f[i].size())
                throw ValidationError(ctx + ": non-numeric field '" + f[i] + "'");
            return v;
        };
        PairwiseEstimate e;
        e.study = f[0];
        if (f.size() == 3) {
            e.y.resize(1);
            e.S.resize(1, 1);
            e.y[0] = num(1);
            e.S(0, 0) = num(2);
        } else if (f.size() == 6) {
            e.y.resize(2);
            e.S.resize(2, 2);
            e.y[0] = num(1);
            e.y[1] = num(2);
            e.S(0, 0) = num(3);
            e.S(0, 1) = e.S(1, 0) = num(4);
            e.S(1, 1) = num(5);
        } else {
            throw ValidationError(ctx +
                                  ": expected 3 columns (study,y,var) or 6 "
                                  "(study,y1,y2,var1,cov12,var2), got " +
                                  std::to_string(f.size()));
        }
        out.push_back(std::move(e));
    }
    if (out.empty()) throw ValidationError(path + ": no usable rows");
    return out;
}

}  // namespace tvhr
