#include "tvhr/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tvhr/diagnostics.hpp"
#include "tvhr/kernels.hpp"
#include "tvhr/stage1.hpp"
#include "tvhr/survival.hpp"

namespace fs = std::filesystem;

namespace tvhr {

using ordered_json = nlohmann::ordered_json;

std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string file_hash_hex(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return "missing";
    std::stringstream ss;
    ss << in.rdbuf();
    char buf[32];
    std::snprintf(buf, sizeof(buf), "fnv1a:%016llx",
                  static_cast<unsigned long long>(fnv1a64(ss.str())));
    return buf;
}

SamplerProtocol make_protocol(const McmcOptions& opts) {
    SamplerProtocol p = opts.protocol == "paper" ? paper_protocol(opts.seed)
                                                 : desk_protocol(opts.seed);
    if (opts.protocol != "paper" && opts.protocol != "desk")
        throw ValidationError("unknown protocol: " + opts.protocol +
                              " (expected desk or paper)");
    if (opts.chains) p.chains = *opts.chains;
    if (opts.burn_in) p.burn_in = *opts.burn_in;
    if (opts.samples) p.samples = *opts.samples;
    if (opts.thin) p.thin = *opts.thin;
    return p;
}

void apply_config(PipelineOptions& opts) {
    if (opts.config.empty()) return;
    opts.load = load_options_from_json(opts.config);
    std::ifstream in(opts.config);
    nlohmann::json j;
    in >> j;
    if (j.contains("landmarks")) opts.landmarks = j["landmarks"].get<std::vector<double>>();
    if (j.contains("pbest_horizon_months"))
        opts.pbest_horizon_months = j["pbest_horizon_months"].get<int>();
    if (j.contains("rank_direction"))
        opts.rank_direction = j["rank_direction"].get<std::string>() == "higher"
                                  ? RankDirection::higher_hr_best
                                  : RankDirection::lower_hr_best;
    if (j.contains("kernels")) opts.kernels = j["kernels"].get<std::string>();
    if (j.contains("seed")) opts.mcmc.seed = j["seed"].get<std::uint64_t>();
}

namespace {

std::string fmt(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

std::string fmt_full(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

std::string utc_now() {
    std::time_t t = std::time(nullptr);
    char buf[32];
    std::tm tm_utc;
    gmtime_r(&t, &tm_utc);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

class Manifest {
  public:
    Manifest(const std::string& command, const PipelineOptions& opts,
             const SamplerProtocol* proto) {
        j_["schema"] = "tvhr-run/1";
        j_["tool"] = {{"name", "tvhr"}, {"version", version_string}};
        j_["command"] = command;
        j_["created_utc"] = utc_now();
        j_["inputs"] = {{"data", opts.input},
                        {"data_kind", opts.input_kind},
                        {"data_hash", file_hash_hex(opts.input)},
                        {"config", opts.config},
                        {"config_hash",
                         opts.config.empty() ? "none" : file_hash_hex(opts.config)}};
        ordered_json o;
        o["model"] = opts.model;
        if (opts.effects) o["effects"] = effects_name(*opts.effects);
        o["tau2_prior"] = tau2_prior_name(opts.tau2_prior);
        o["sensitivity"] = opts.sensitivity;
        o["landmarks"] = opts.landmarks;
        o["pbest_horizon_months"] = opts.pbest_horizon_months;
        o["rank_direction"] =
            opts.rank_direction == RankDirection::higher_hr_best ? "higher" : "lower";
        o["time_unit"] = opts.load.time_unit;
        o["reference"] = opts.load.reference;
        o["skip_failed"] = opts.skip_failed;
        j_["options"] = std::move(o);
        if (proto) {
            j_["seed"] = proto->seed;
            j_["protocol"] = {{"name", proto->name},
                              {"chains", proto->chains},
                              {"burn_in", proto->burn_in},
                              {"samples", proto->samples},
                              {"thin", proto->thin}};
        }
        j_["kernels_backend"] = kernels::backend_name(kernels::active_backend());
        j_["outputs"] = ordered_json::object();
    }

    void set(const std::string& key, const ordered_json& v) { j_[key] = v; }

    void add_output(const std::string& category, const std::string& relpath) {
        if (!j_["outputs"].contains(category))
            j_["outputs"][category] = ordered_json::array();
        j_["outputs"][category].push_back(relpath);
    }

    void add_output_keyed(const std::string& category, const std::string& key,
                          const std::string& relpath) {
        if (!j_["outputs"].contains(category))
            j_["outputs"][category] = ordered_json::object();
        j_["outputs"][category][key] = relpath;
    }

    std::string write(const std::string& out_dir) const {
        const fs::path p = fs::path(out_dir) / "manifest.json";
        std::ofstream out(p);
        if (!out) throw FitError("cannot write " + p.string());
        out << j_.dump(2) << '\n';
        return p.string();
    }

  private:
    ordered_json j_;
};

ordered_json diagnostics_json(const DiagnosticsReport& rep,
                              const std::vector<std::string>& gate) {
    ordered_json j;
    j["thresholds"] = {{"rhat", rep.rhat_threshold}, {"ess", rep.ess_threshold}};
    ordered_json params = ordered_json::array();
    for (const auto& e : rep.entries) {
        ordered_json pe;
        pe["name"] = e.name;
        if (e.degenerate) {
            pe["degenerate"] = true;
        } else {
            pe["rhat"] = e.rhat;
            pe["rhat_classic"] = e.rhat_classic;
            pe["ess"] = e.ess;
        }
        pe["rhat_pass"] = e.rhat_pass;
        pe["ess_pass"] = e.ess_pass;
        params.push_back(std::move(pe));
    }
    j["parameters"] = std::move(params);
    j["gate"] = gate;
    j["pass"] = rep.pass(gate);
    return j;
}

void write_json(const ordered_json& j, const fs::path& p) {
    std::ofstream out(p);
    if (!out) throw FitError("cannot write " + p.string());
    out << j.dump(2) << '\n';
}

struct FittedModel {
    std::string tag;  // "ph" | "tvhr"
    const PosteriorDraws* draws = nullptr;
    std::vector<std::string> gate;
    DiagnosticsReport diag;
};

// shared export of draws + diagnostics for one fitted model
void export_model(Manifest& man, const std::string& out_dir, FittedModel& fm) {
    write_chain_csvs(*fm.draws, out_dir, "draws_" + fm.tag);
    for (int c = 1; c <= fm.draws->n_chains(); ++c)
        man.add_output("draws_csv",
                       "draws_" + fm.tag + "_chain" + std::to_string(c) + ".csv");
    const std::string bin = "draws_" + fm.tag + ".bin";
    write_draws_binary(*fm.draws, (fs::path(out_dir) / bin).string());
    man.add_output_keyed("draws_bin", fm.tag, bin);

    fm.diag = diagnose(*fm.draws);
    const std::string dj = "diagnostics_" + fm.tag + ".json";
    write_json(diagnostics_json(fm.diag, fm.gate), fs::path(out_dir) / dj);
    man.add_output("diagnostics", dj);
}

std::vector<std::string> report_parameters(const PosteriorDraws& draws,
                                           const std::vector<std::string>& gate) {
    std::vector<std::string> ps = gate;
    for (const auto& extra : {"tau", "tau1", "tau2", "theta", "rho"}) {
        for (const auto& n : draws.names)
            if (n == extra) ps.push_back(n);
    }
    return ps;
}

std::vector<double> monthly_grid(int horizon_months) {
    std::vector<double> t;
    t.reserve(static_cast<std::size_t>(horizon_months));
    for (int m = 1; m <= horizon_months; ++m) t.push_back(m / 12.0);
    return t;
}

}  // namespace

// --------------------------------------------------------------------------
// diagnose
// --------------------------------------------------------------------------

RunResult run_diagnose(const PipelineOptions& opts_in) {
    PipelineOptions opts = opts_in;
    apply_config(opts);
    kernels::set_backend(kernels::resolve_backend(opts.kernels));
    fs::create_directories(opts.out_dir);

    const EvidenceNetwork net = load_ipd(opts.input, opts.load);
    RunResult rr;
    for (const auto& f : validate_network(net))
        if (f.severity != Severity::info) rr.warnings.push_back(f.message);

    Manifest man("diagnose", opts, nullptr);

    std::ofstream tests(fs::path(opts.out_dir) / "ph_tests.csv");
    tests << "study,term,chisq,df,p,flagged\n";
    std::ofstream km(fs::path(opts.out_dir) / "km_curves.csv");
    km << "study,treatment,time,at_risk,events,survival\n";
    std::ofstream sch(fs::path(opts.out_dir) / "schoenfeld.csv");
    sch << "study,term,time,scaled_residual\n";

    for (const auto& study : net.studies) {
        for (const auto& curve : km_estimate(study)) {
            for (std::size_t i = 0; i < curve.event_times.size(); ++i)
                km << study.id << ',' << net.label(curve.treatment) << ','
                   << fmt_full(curve.event_times[i]) << ',' << curve.at_risk[i] << ','
                   << curve.events[i] << ',' << fmt_full(curve.survival[i]) << '\n';
        }
        CoxFit fit;
        PHTestResult test;
        try {
            fit = fit_cox(study, CoxModel::proportional, Ties::efron);
            test = schoenfeld_test(study, fit);
        } catch (const std::exception& e) {
            throw FitError("diagnose failed for study " + study.id + ": " + e.what());
        }
        const int flagged = test.global.p < 0.05 ? 1 : 0;
        for (const auto& t : test.per_covariate)
            tests << study.id << ',' << t.name << ',' << fmt(t.chisq) << ',' << t.df
                  << ',' << fmt(t.p) << ',' << flagged << '\n';
        tests << study.id << ",GLOBAL," << fmt(test.global.chisq) << ','
              << test.global.df << ',' << fmt(test.global.p) << ',' << flagged << '\n';
        for (Eigen::Index r = 0; r < test.scaled_residuals.rows(); ++r)
            for (Eigen::Index c = 0; c < test.scaled_residuals.cols(); ++c)
                sch << study.id << ',' << fit.term_names[static_cast<std::size_t>(c)]
                    << ',' << fmt_full(test.residual_times[static_cast<std::size_t>(r)])
                    << ',' << fmt_full(test.scaled_residuals(r, c)) << '\n';
    }
    man.add_output("tables", "ph_tests.csv");
    man.add_output("tables", "km_curves.csv");
    man.add_output("tables", "schoenfeld.csv");
    rr.manifest_path = man.write(opts.out_dir);
    return rr;
}

// --------------------------------------------------------------------------
// ma
// --------------------------------------------------------------------------

RunResult run_ma(const PipelineOptions& opts_in) {
    PipelineOptions opts = opts_in;
    apply_config(opts);
    kernels::set_backend(kernels::resolve_backend(opts.kernels));
    fs::create_directories(opts.out_dir);
    if (!opts.effects) opts.effects = Effects::random;
    if (opts.landmarks.empty())
        opts.landmarks = {0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5};
    const SamplerProtocol proto = make_protocol(opts.mcmc);

    bool want_ph = opts.model == "ph" || opts.model == "both";
    bool want_tvhr = opts.model == "tvhr" || opts.model == "both";
    if (!want_ph && !want_tvhr)
        throw ValidationError("unknown model: " + opts.model);

    RunResult rr;
    Manifest man("ma", opts, &proto);

    std::vector<PairwiseEstimate> est_ph, est_tvhr;
    double max_follow_up = 0.0;

    if (opts.input_kind == "ipd") {
        const EvidenceNetwork net = load_ipd(opts.input, opts.load);
        if (net.n_treatments() != 2)
            throw ValidationError(
                "pairwise pooling needs exactly 2 treatments but the data has " +
                std::to_string(net.n_treatments()) + "; use the nma command");
        for (const auto& f : validate_network(net))
            if (f.severity == Severity::warning) rr.warnings.push_back(f.message);
        if (want_ph) {
            const Stage1Result s1 = stage1_fit_all(net, CoxModel::proportional,
                                                   Ties::efron, opts.skip_failed);
            write_stage1_json(s1, (fs::path(opts.out_dir) / "stage1_ph.json").string());
            man.add_output_keyed("stage1", "ph", "stage1_ph.json");
            est_ph = to_pairwise_estimates(s1);
            for (const auto& s : s1.studies) max_follow_up = std::max(max_follow_up, s.max_time);
        }
        if (want_tvhr) {
            const Stage1Result s1 =
                stage1_fit_all(net, CoxModel::tvhr, Ties::efron, opts.skip_failed);
            write_stage1_json(s1, (fs::path(opts.out_dir) / "stage1_tvhr.json").string());
            man.add_output_keyed("stage1", "tvhr", "stage1_tvhr.json");
            est_tvhr = to_pairwise_estimates(s1);
            for (const auto& s : s1.studies) max_follow_up = std::max(max_follow_up, s.max_time);
        }
    } else if (opts.input_kind == "stage1") {
        const Stage1Result s1 = read_stage1_json(opts.input);
        if (s1.model == CoxModel::tvhr) {
            est_tvhr = to_pairwise_estimates(s1);
            want_ph = false;
            want_tvhr = true;
        } else {
            est_ph = to_pairwise_estimates(s1);
            want_ph = true;
            want_tvhr = false;
        }
        for (const auto& s : s1.studies) max_follow_up = std::max(max_follow_up, s.max_time);
    } else if (opts.input_kind == "aggregate") {
        auto est = read_aggregate_csv(opts.input);
        if (est.front().y.size() == 2) {
            est_tvhr = std::move(est);
            want_ph = false;
            want_tvhr = true;
        } else {
            est_ph = std::move(est);
            want_ph = true;
            want_tvhr = false;
        }
    } else {
        throw ValidationError("unknown input kind: " + opts.input_kind);
    }

    PairwiseModelSpec spec;
    spec.effects = *opts.effects;
    spec.tau2_prior = opts.tau2_prior;
    spec.kernel = opts.kernel;

    std::vector<FittedModel> fitted;
    PairwisePosterior post_uni, post_biv, post_biv_hn;
    bool have_hn = false;

    if (want_ph) {
        post_uni = fit_univariate_ma(est_ph, spec, proto);
        rr.warnings.insert(rr.warnings.end(), post_uni.warnings.begin(),
                           post_uni.warnings.end());
        FittedModel fm;
        fm.tag = "ph";
        fm.draws = &post_uni.draws;
        fm.gate = post_uni.gate_parameters;
        export_model(man, opts.out_dir, fm);
        fitted.push_back(std::move(fm));
    }
    if (want_tvhr) {
        if (opts.sensitivity) {
            auto pair = prior_sensitivity(est_tvhr, spec, proto);
            post_biv = std::move(pair.first);
            post_biv_hn = std::move(pair.second);
            have_hn = true;
            if (opts.tau2_prior == Tau2Prior::half_normal) std::swap(post_biv, post_biv_hn);
        } else {
            post_biv = fit_bivariate_ma(est_tvhr, spec, proto);
        }
        rr.warnings.insert(rr.warnings.end(), post_biv.warnings.begin(),
                           post_biv.warnings.end());
        FittedModel fm;
        fm.tag = "tvhr";
        fm.draws = &post_biv.draws;
        fm.gate = post_biv.gate_parameters;
        export_model(man, opts.out_dir, fm);
        fitted.push_back(std::move(fm));
    }

    // landmark table mirroring the pairwise reporting layout
    {
        std::ofstream t(fs::path(opts.out_dir) / "landmark_hr.csv");
        t << "time,hr_mean,hr_lo,hr_hi,hr_median\n";
        if (want_ph) {
            const Summary hr = summarize(post_uni.hr_draws(1.0));
            t << "constant," << fmt(hr.mean) << ',' << fmt(hr.lo95) << ','
              << fmt(hr.hi95) << ',' << fmt(hr.median) << '\n';
        }
        if (want_tvhr) {
            for (const auto& p : pooled_hr_curve(post_biv, opts.landmarks)) {
                t << fmt(p.time) << ',' << fmt(p.hr.mean) << ',' << fmt(p.hr.lo95)
                  << ',' << fmt(p.hr.hi95) << ',' << fmt(p.hr.median) << '\n';
                if (max_follow_up > 0.0 && p.time > max_follow_up)
                    rr.warnings.push_back("landmark " + fmt(p.time) +
                                          "y extrapolates beyond the longest observed "
                                          "follow-up (" +
                                          fmt(max_follow_up) + "y)");
            }
        }
        man.add_output("tables", "landmark_hr.csv");
    }

    if (have_hn) {
        std::ofstream t(fs::path(opts.out_dir) / "sensitivity.csv");
        t << "time,hr_mean_uniform,hr_lo_uniform,hr_hi_uniform,"
             "hr_mean_halfnormal,hr_lo_halfnormal,hr_hi_halfnormal\n";
        const auto& uni_post =
            opts.tau2_prior == Tau2Prior::half_normal ? post_biv_hn : post_biv;
        const auto& hn_post =
            opts.tau2_prior == Tau2Prior::half_normal ? post_biv : post_biv_hn;
        const auto a = pooled_hr_curve(uni_post, opts.landmarks);
        const auto b = pooled_hr_curve(hn_post, opts.landmarks);
        for (std::size_t i = 0; i < a.size(); ++i)
            t << fmt(a[i].time) << ',' << fmt(a[i].hr.mean) << ',' << fmt(a[i].hr.lo95)
              << ',' << fmt(a[i].hr.hi95) << ',' << fmt(b[i].hr.mean) << ','
              << fmt(b[i].hr.lo95) << ',' << fmt(b[i].hr.hi95) << '\n';
        man.add_output("tables", "sensitivity.csv");
    }

    // synthesis report with the convergence gate
    ordered_json rep;
    rep["schema"] = "tvhr-report/1";
    rep["command"] = "ma";
    rep["protocol"] = proto.name;
    rep["seed"] = proto.seed;
    bool final_ok = true;
    ordered_json models = ordered_json::object();
    for (const auto& fm : fitted) {
        const bool pass = fm.diag.pass(fm.gate);
        final_ok = final_ok && pass;
        models[fm.tag] = diagnostics_json(fm.diag, fm.gate);
    }
    rep["models"] = std::move(models);
    if (want_tvhr) {
        const Summary d2 = post_biv.d_summary(1);
        rep["interaction"] = {{"mean", d2.mean},
                              {"lo95", d2.lo95},
                              {"hi95", d2.hi95},
                              {"prob_positive", post_biv.prob_interaction_positive()}};
    }
    rep["final"] = final_ok;
    rep["warnings"] = rr.warnings;
    write_json(rep, fs::path(opts.out_dir) / "report.json");
    man.add_output("report", "report.json");

    // record the parameter lists the report command should plot
    {
        ordered_json rp = ordered_json::object();
        if (want_ph) rp["ph"] = report_parameters(post_uni.draws, post_uni.gate_parameters);
        if (want_tvhr)
            rp["tvhr"] = report_parameters(post_biv.draws, post_biv.gate_parameters);
        man.set("report_parameters", rp);
    }
    man.set("treatments", ordered_json::array());
    man.set("max_follow_up", max_follow_up);

    rr.final_status = final_ok;
    rr.exit_code = final_ok ? 0 : 3;
    rr.manifest_path = man.write(opts.out_dir);
    return rr;
}

// --------------------------------------------------------------------------
// nma
// --------------------------------------------------------------------------

RunResult run_nma(const PipelineOptions& opts_in) {
    PipelineOptions opts = opts_in;
    apply_config(opts);
    kernels::set_backend(kernels::resolve_backend(opts.kernels));
    fs::create_directories(opts.out_dir);
    if (!opts.effects) opts.effects = Effects::fixed;
    if (opts.landmarks.empty()) opts.landmarks = {0.5, 1.0, 2.0, 5.0};
    const SamplerProtocol proto = make_protocol(opts.mcmc);

    const bool want_ph = opts.model == "ph" || opts.model == "both";
    const bool want_tvhr = opts.model == "tvhr" || opts.model == "both";
    if (!want_ph && !want_tvhr) throw ValidationError("unknown model: " + opts.model);

    RunResult rr;
    Manifest man("nma", opts, &proto);

    std::vector<NmaContrast> con_ph, con_tvhr;
    std::vector<std::string> treatments;

    if (opts.input_kind == "ipd") {
        const EvidenceNetwork net = load_ipd(opts.input, opts.load);
        treatments = net.treatments;
        for (const auto& f : validate_network(net))
            if (f.severity == Severity::warning) rr.warnings.push_back(f.message);
        if (want_ph) {
            const Stage1Result s1 = stage1_fit_all(net, CoxModel::proportional,
                                                   Ties::efron, opts.skip_failed);
            for (const auto& s : s1.skipped)
                rr.warnings.push_back("skipped study " + s);
            write_stage1_json(s1, (fs::path(opts.out_dir) / "stage1_ph.json").string());
            man.add_output_keyed("stage1", "ph", "stage1_ph.json");
            con_ph = to_nma_contrasts(s1);
        }
        if (want_tvhr) {
            const Stage1Result s1 =
                stage1_fit_all(net, CoxModel::tvhr, Ties::efron, opts.skip_failed);
            for (const auto& s : s1.skipped)
                rr.warnings.push_back("skipped study " + s);
            write_stage1_json(s1, (fs::path(opts.out_dir) / "stage1_tvhr.json").string());
            man.add_output_keyed("stage1", "tvhr", "stage1_tvhr.json");
            con_tvhr = to_nma_contrasts(s1);
        }
    } else if (opts.input_kind == "stage1") {
        const Stage1Result s1 = read_stage1_json(opts.input);
        treatments = s1.treatments;
        if (s1.model == CoxModel::tvhr) {
            con_tvhr = to_nma_contrasts(s1);
            if (want_ph)
                throw ValidationError(
                    "stage-1 file holds time-varying fits; rerun with --model=tvhr");
        } else {
            con_ph = to_nma_contrasts(s1);
            if (want_tvhr)
                throw ValidationError(
                    "stage-1 file holds proportional-hazards fits; rerun with "
                    "--model=ph");
        }
    } else {
        throw ValidationError("the nma command takes IPD or a stage-1 file");
    }

    NmaModelSpec spec;
    spec.effects = *opts.effects;
    spec.tau2_prior = opts.tau2_prior;
    spec.kernel = opts.kernel;

    std::vector<FittedModel> fitted;
    NmaPosterior post_uni, post_biv;

    if (want_ph && !con_ph.empty()) {
        post_uni = fit_nma(con_ph, treatments, 1, spec, proto);
        rr.warnings.insert(rr.warnings.end(), post_uni.warnings.begin(),
                           post_uni.warnings.end());
        FittedModel fm;
        fm.tag = "ph";
        fm.draws = &post_uni.draws;
        fm.gate = post_uni.gate_parameters;
        export_model(man, opts.out_dir, fm);
        fitted.push_back(std::move(fm));
    }
    if (want_tvhr && !con_tvhr.empty()) {
        post_biv = fit_nma(con_tvhr, treatments, 2, spec, proto);
        rr.warnings.insert(rr.warnings.end(), post_biv.warnings.begin(),
                           post_biv.warnings.end());
        FittedModel fm;
        fm.tag = "tvhr";
        fm.draws = &post_biv.draws;
        fm.gate = post_biv.gate_parameters;
        export_model(man, opts.out_dir, fm);
        fitted.push_back(std::move(fm));
    }

    const int nt = static_cast<int>(treatments.size());

    // landmark + rank table: every treatment against the network reference
    {
        std::ofstream t(fs::path(opts.out_dir) / "landmark_hr.csv");
        t << "treatment,time,hr_mean,hr_lo,hr_hi,mean_rank,rank_lo,rank_hi,"
             "max_obs_time,extrapolated\n";
        std::map<std::string, std::vector<RankSummary>> ranks;
        if (want_ph && !con_ph.empty())
            ranks["constant"] = rank_treatments(post_uni, std::nullopt, opts.rank_direction);
        if (want_tvhr && !con_tvhr.empty())
            for (double lt : opts.landmarks)
                ranks[fmt(lt)] = rank_treatments(post_biv, lt, opts.rank_direction);

        for (int treat = 2; treat <= nt; ++treat) {
            if (want_ph && !con_ph.empty()) {
                const Summary hr = relative_effect(post_uni, treat, 1);
                const auto& rk = ranks["constant"][static_cast<std::size_t>(treat - 1)];
                const double mot = post_uni.max_obs_time[static_cast<std::size_t>(treat - 1)];
                t << treatments[static_cast<std::size_t>(treat - 1)] << ",constant,"
                  << fmt(hr.mean) << ',' << fmt(hr.lo95) << ',' << fmt(hr.hi95) << ','
                  << fmt(rk.mean_rank) << ',' << fmt(rk.rank_lo) << ','
                  << fmt(rk.rank_hi) << ',' << fmt(mot) << ",0\n";
            }
            if (want_tvhr && !con_tvhr.empty()) {
                for (double lt : opts.landmarks) {
                    const Summary hr = relative_effect(post_biv, treat, 1, lt);
                    const auto& rk = ranks[fmt(lt)][static_cast<std::size_t>(treat - 1)];
                    const double mot =
                        post_biv.max_obs_time[static_cast<std::size_t>(treat - 1)];
                    const bool extra = lt > mot && mot > 0.0;
                    if (extra)
                        rr.warnings.push_back(
                            treatments[static_cast<std::size_t>(treat - 1)] + " at " +
                            fmt(lt) + "y extrapolates beyond observed follow-up (" +
                            fmt(mot) + "y)");
                    t << treatments[static_cast<std::size_t>(treat - 1)] << ','
                      << fmt(lt) << ',' << fmt(hr.mean) << ',' << fmt(hr.lo95) << ','
                      << fmt(hr.hi95) << ',' << fmt(rk.mean_rank) << ','
                      << fmt(rk.rank_lo) << ',' << fmt(rk.rank_hi) << ',' << fmt(mot)
                      << ',' << (extra ? 1 : 0) << '\n';
                }
            }
        }
        man.add_output("tables", "landmark_hr.csv");
    }

    // monthly probability-best heatmap matrix
    if (want_tvhr && !con_tvhr.empty()) {
        const auto grid_times = monthly_grid(opts.pbest_horizon_months);
        const Eigen::MatrixXd grid =
            probability_best_grid(post_biv, grid_times, opts.rank_direction);
        std::ofstream t(fs::path(opts.out_dir) / "pbest.csv");
        t << "treatment";
        for (int m = 1; m <= opts.pbest_horizon_months; ++m) t << ",month_" << m;
        t << '\n';
        for (int treat = 1; treat <= nt; ++treat) {
            t << treatments[static_cast<std::size_t>(treat - 1)];
            for (Eigen::Index c = 0; c < grid.cols(); ++c)
                t << ',' << fmt_full(grid(treat - 1, c));
            t << '\n';
        }
        man.add_output("tables", "pbest.csv");
    }

    ordered_json rep;
    rep["schema"] = "tvhr-report/1";
    rep["command"] = "nma";
    rep["protocol"] = proto.name;
    rep["seed"] = proto.seed;
    bool final_ok = true;
    ordered_json models = ordered_json::object();
    for (const auto& fm : fitted) {
        const bool pass = fm.diag.pass(fm.gate);
        final_ok = final_ok && pass;
        models[fm.tag] = diagnostics_json(fm.diag, fm.gate);
    }
    rep["models"] = std::move(models);
    rep["final"] = final_ok;
    rep["warnings"] = rr.warnings;
    write_json(rep, fs::path(opts.out_dir) / "report.json");
    man.add_output("report", "report.json");

    {
        ordered_json rp = ordered_json::object();
        if (want_ph && !con_ph.empty())
            rp["ph"] = report_parameters(post_uni.draws, post_uni.gate_parameters);
        if (want_tvhr && !con_tvhr.empty())
            rp["tvhr"] = report_parameters(post_biv.draws, post_biv.gate_parameters);
        man.set("report_parameters", rp);
    }
    man.set("treatments", treatments);

    rr.final_status = final_ok;
    rr.exit_code = final_ok ? 0 : 3;
    rr.manifest_path = man.write(opts.out_dir);
    return rr;
}

// --------------------------------------------------------------------------
// report
// --------------------------------------------------------------------------

RunResult run_report(const std::string& manifest_path, const std::string& out_dir_in) {
    std::ifstream in(manifest_path);
    if (!in) throw ValidationError("cannot open manifest: " + manifest_path);
    nlohmann::json man;
    try {
        in >> man;
    } catch (const std::exception& e) {
        throw ValidationError("manifest parse error: " + std::string(e.what()));
    }
    if (man.value("schema", "") != "tvhr-run/1")
        throw ValidationError(manifest_path + ": not a run manifest");
    const std::string command = man.value("command", "");
    if (command != "ma" && command != "nma")
        throw ValidationError("manifest command '" + command +
                              "' has no synthesis outputs to report");
    if (!man.contains("outputs") || !man["outputs"].contains("draws_bin"))
        throw ValidationError("incomplete manifest: no draws recorded");

    const fs::path run_dir = fs::path(manifest_path).parent_path();
    const fs::path out_dir = out_dir_in.empty() ? run_dir : fs::path(out_dir_in);
    fs::create_directories(out_dir);

    const auto opts = man.value("options", nlohmann::json::object());
    std::vector<double> landmarks;
    if (opts.contains("landmarks"))
        landmarks = opts["landmarks"].get<std::vector<double>>();
    const int horizon = opts.value("pbest_horizon_months", 60);
    const RankDirection direction = opts.value("rank_direction", "lower") == "higher"
                                        ? RankDirection::higher_hr_best
                                        : RankDirection::lower_hr_best;
    std::vector<std::string> treatments;
    if (man.contains("treatments"))
        treatments = man["treatments"].get<std::vector<std::string>>();

    std::map<std::string, PosteriorDraws> draws_by_model;
    for (const auto& [tag, rel] : man["outputs"]["draws_bin"].items()) {
        const fs::path p = run_dir / rel.get<std::string>();
        if (!fs::exists(p))
            throw ValidationError("incomplete manifest: missing draws file " + p.string());
        draws_by_model[tag] = read_draws_binary(p.string());
    }

    RunResult rr;

    // trace + autocorrelation series for the reporting parameters
    {
        std::ofstream ac(out_dir / "autocorr.csv");
        ac << "model,parameter,lag,acf\n";
        std::ofstream tr(out_dir / "trace.csv");
        tr << "model,parameter,chain,iteration,value\n";
        for (const auto& [tag, draws] : draws_by_model) {
            std::vector<std::string> params;
            if (man.contains("report_parameters") && man["report_parameters"].contains(tag))
                params = man["report_parameters"][tag].get<std::vector<std::string>>();
            else
                params = draws.names;
            for (const auto& pname : params) {
                const std::size_t pi = draws.param_index(pname);
                const auto acf = autocorrelations(
                    draws, pi,
                    std::min<int>(50, static_cast<int>(draws.retained_per_chain()) - 1));
                for (std::size_t lag = 0; lag < acf.size(); ++lag)
                    ac << tag << ',' << pname << ',' << lag << ',' << fmt_full(acf[lag])
                       << '\n';
                const std::int64_t per = draws.retained_per_chain();
                const std::int64_t stride = std::max<std::int64_t>(1, per / 500);
                for (int c = 0; c < draws.n_chains(); ++c) {
                    const auto col = draws.chain_column(c, pi);
                    for (std::int64_t i = 0; i < per; i += stride)
                        tr << tag << ',' << pname << ',' << (c + 1) << ',' << i << ','
                           << fmt_full(col[static_cast<std::size_t>(i)]) << '\n';
                }
            }
        }
    }

    // pooled HR curves over a monthly grid
    const double max_landmark =
        landmarks.empty() ? 5.0 : *std::max_element(landmarks.begin(), landmarks.end());
    const int curve_months = std::max(12, static_cast<int>(std::ceil(max_landmark * 12.0)));
    {
        std::ofstream t(out_dir / "hr_curve.csv");
        if (command == "ma") {
            t << "time,hr_mean,hr_lo,hr_hi\n";
            if (draws_by_model.count("tvhr")) {
                PairwisePosterior post;
                post.dim = 2;
                post.draws = draws_by_model["tvhr"];
                for (int m = 1; m <= curve_months; ++m) {
                    const Summary s = summarize(post.hr_draws(m / 12.0));
                    t << fmt(m / 12.0) << ',' << fmt(s.mean) << ',' << fmt(s.lo95)
                      << ',' << fmt(s.hi95) << '\n';
                }
            }
        } else {
            t << "treatment,time,hr_mean,hr_lo,hr_hi\n";
            if (draws_by_model.count("tvhr") && !treatments.empty()) {
                NmaPosterior post;
                post.dim = 2;
                post.n_treatments = static_cast<int>(treatments.size());
                post.treatment_labels = treatments;
                post.draws = draws_by_model["tvhr"];
                for (int treat = 2; treat <= post.n_treatments; ++treat)
                    for (int m = 1; m <= curve_months; ++m) {
                        const Summary s = relative_effect(post, treat, 1, m / 12.0);
                        t << treatments[static_cast<std::size_t>(treat - 1)] << ','
                          << fmt(m / 12.0) << ',' << fmt(s.mean) << ',' << fmt(s.lo95)
                          << ',' << fmt(s.hi95) << '\n';
                    }
            }
        }
    }

    // probability-best series and heatmap matrix
    if (command == "nma" && draws_by_model.count("tvhr") && !treatments.empty()) {
        NmaPosterior post;
        post.dim = 2;
        post.n_treatments = static_cast<int>(treatments.size());
        post.treatment_labels = treatments;
        post.draws = draws_by_model["tvhr"];
        const auto grid_times = monthly_grid(horizon);
        const Eigen::MatrixXd grid = probability_best_grid(post, grid_times, direction);
        {
            std::ofstream t(out_dir / "pbest_over_time.csv");
            t << "month,treatment,probability\n";
            for (Eigen::Index c = 0; c < grid.cols(); ++c)
                for (int treat = 1; treat <= post.n_treatments; ++treat)
                    t << (c + 1) << ',' << treatments[static_cast<std::size_t>(treat - 1)]
                      << ',' << fmt_full(grid(treat - 1, c)) << '\n';
        }
        {
            std::ofstream t(out_dir / "heatmap.csv");
            t << "treatment";
            for (int m = 1; m <= horizon; ++m) t << ",month_" << m;
            t << '\n';
            for (int treat = 1; treat <= post.n_treatments; ++treat) {
                t << treatments[static_cast<std::size_t>(treat - 1)];
                for (Eigen::Index c = 0; c < grid.cols(); ++c)
                    t << ',' << fmt_full(grid(treat - 1, c));
                t << '\n';
            }
        }
    }

    rr.manifest_path = manifest_path;
    return rr;
}

}  // namespace tvhr
