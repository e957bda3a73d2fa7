#include "tvhr/study_data.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace tvhr {

int StudyDataset::n_events() const {
    int n = 0;
    for (const auto& r : records) n += r.event;
    return n;
}

int StudyDataset::events_in_arm(int treatment) const {
    int n = 0;
    for (const auto& r : records)
        if (r.treatment == treatment) n += r.event;
    return n;
}

std::size_t StudyDataset::records_in_arm(int treatment) const {
    std::size_t n = 0;
    for (const auto& r : records)
        if (r.treatment == treatment) ++n;
    return n;
}

double StudyDataset::max_time() const {
    double m = 0.0;
    for (const auto& r : records) m = std::max(m, r.time);
    return m;
}

std::size_t EvidenceNetwork::total_records() const {
    std::size_t n = 0;
    for (const auto& s : studies) n += s.records.size();
    return n;
}

const std::string& EvidenceNetwork::label(int treatment) const {
    return treatments.at(static_cast<std::size_t>(treatment - 1));
}

int EvidenceNetwork::treatment_index(const std::string& lbl) const {
    for (std::size_t i = 0; i < treatments.size(); ++i)
        if (treatments[i] == lbl) return static_cast<int>(i + 1);
    return 0;
}

const StudyDataset& EvidenceNetwork::study(const std::string& id) const {
    for (const auto& s : studies)
        if (s.id == id) return s;
    throw ValidationError("unknown study: " + id);
}

bool EvidenceNetwork::connected() const {
    const int nt = n_treatments();
    if (nt <= 1) return true;
    std::vector<char> seen(static_cast<std::size_t>(nt) + 1, 0);
    std::vector<int> stack{1};
    seen[1] = 1;
    while (!stack.empty()) {
        const int t = stack.back();
        stack.pop_back();
        for (const auto& s : studies) {
            if (std::find(s.arms.begin(), s.arms.end(), t) == s.arms.end()) continue;
            for (int u : s.arms) {
                if (!seen[static_cast<std::size_t>(u)]) {
                    seen[static_cast<std::size_t>(u)] = 1;
                    stack.push_back(u);
                }
            }
        }
    }
    for (int t = 1; t <= nt; ++t)
        if (!seen[static_cast<std::size_t>(t)]) return false;
    return true;
}

double EvidenceNetwork::max_observed_time(int treatment) const {
    double m = 0.0;
    for (const auto& s : studies)
        if (std::find(s.arms.begin(), s.arms.end(), treatment) != s.arms.end())
            m = std::max(m, s.max_time());
    return m;
}

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line, char delim) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == delim) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(trim(cur));
    return out;
}

bool parse_double(const std::string& s, double& out) {
    const char* b = s.data();
    const char* e = b + s.size();
    auto [p, ec] = std::from_chars(b, e, out);
    return ec == std::errc{} && p == e;
}

double unit_divisor(const std::string& unit) {
    if (unit == "years" || unit.empty()) return 1.0;
    if (unit == "days") return 365.25;
    if (unit == "months") return 12.0;
    throw ValidationError("unknown time unit: " + unit +
                          " (expected years, days or months)");
}

}  // namespace

LoadOptions load_options_from_json(const std::string& config_path) {
    std::ifstream in(config_path);
    if (!in) throw ValidationError("cannot open config file: " + config_path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ValidationError("config parse error in " + config_path + ": " + e.what());
    }
    LoadOptions o;
    if (j.contains("delimiter")) {
        const std::string d = j["delimiter"].get<std::string>();
        if (d.size() != 1) throw ValidationError("delimiter must be one character");
        o.delimiter = d[0];
    }
    if (j.contains("time_unit")) o.time_unit = j["time_unit"].get<std::string>();
    if (j.contains("reference")) o.reference = j["reference"].get<std::string>();
    if (j.contains("columns")) {
        const auto& c = j["columns"];
        if (c.contains("study")) o.col_study = c["study"].get<std::string>();
        if (c.contains("treatment")) o.col_treatment = c["treatment"].get<std::string>();
        if (c.contains("time")) o.col_time = c["time"].get<std::string>();
        if (c.contains("event")) o.col_event = c["event"].get<std::string>();
    }
    unit_divisor(o.time_unit);  // validate early
    return o;
}

EvidenceNetwork build_network(const std::vector<RawRow>& rows,
                              const std::string& reference) {
    if (rows.empty()) throw ValidationError("no data rows");

    // dense 1-based treatment indices: labels sorted lexicographically with
    // the nominated reference forced to index 1
    std::set<std::string> label_set;
    for (const auto& r : rows) label_set.insert(r.treatment);
    std::vector<std::string> labels(label_set.begin(), label_set.end());
    std::string ref = reference.empty() ? labels.front() : reference;
    auto it = std::find(labels.begin(), labels.end(), ref);
    if (it == labels.end())
        throw ValidationError("reference treatment not present in data: " + ref);
    std::rotate(labels.begin(), it, it + 1);

    EvidenceNetwork net;
    net.treatments = labels;

    std::map<std::string, StudyDataset> by_study;
    for (const auto& r : rows) {
        auto& st = by_study[r.study];
        st.id = r.study;
        SurvivalRecord rec;
        rec.treatment = net.treatment_index(r.treatment);
        rec.time = r.time;
        rec.event = r.event;
        st.records.push_back(rec);
    }
    for (auto& [id, st] : by_study) {
        std::set<int> arm_set;
        for (const auto& r : st.records) arm_set.insert(r.treatment);
        st.arms.assign(arm_set.begin(), arm_set.end());
        if (st.arms.size() < 2)
            throw ValidationError("study " + id + " has fewer than 2 arms");
        net.studies.push_back(std::move(st));
    }

    if (!net.connected())
        throw ValidationError(
            "evidence network is disconnected: not every treatment is reachable "
            "from the reference via shared studies");
    return net;
}

EvidenceNetwork load_ipd(const std::string& path, const LoadOptions& opts) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open IPD file: " + path);
    const double divisor = unit_divisor(opts.time_unit);

    std::string line;
    std::vector<std::string> lines;
    while (std::getline(in, line)) {
        if (!trim(line).empty()) lines.push_back(line);
    }
    if (lines.empty()) throw ValidationError(path + ": file is empty");

    // Header detection: if the time/event fields of the first row fail to
    // parse as numbers, treat it as a header and locate columns by name.
    int ci_study = 0, ci_treatment = 1, ci_time = 2, ci_event = 3;
    std::size_t first_data = 0;
    {
        const auto f = split(lines[0], opts.delimiter);
        double tmp;
        const bool numeric_probe =
            f.size() >= 3 && parse_double(f[2], tmp);
        if (!numeric_probe) {
            first_data = 1;
            auto find_col = [&](const std::string& name) {
                for (std::size_t i = 0; i < f.size(); ++i)
                    if (f[i] == name) return static_cast<int>(i);
                throw ValidationError(path + ": missing column '" + name + "'");
            };
            ci_study = find_col(opts.col_study);
            ci_treatment = find_col(opts.col_treatment);
            ci_time = find_col(opts.col_time);
            ci_event = find_col(opts.col_event);
            if (lines.size() == 1) throw ValidationError(path + ": no data rows");
        }
    }

    std::vector<RawRow> rows;
    rows.reserve(lines.size() - first_data);
    const int max_ci = std::max({ci_study, ci_treatment, ci_time, ci_event});
    for (std::size_t li = first_data; li < lines.size(); ++li) {
        const auto f = split(lines[li], opts.delimiter);
        const std::string ctx = path + ":" + std::to_string(li + 1);
        if (static_cast<int>(f.size()) <= max_ci)
            throw ValidationError(ctx + ": expected at least " +
                                  std::to_string(max_ci + 1) + " columns, got " +
                                  std::to_string(f.size()));
        RawRow r;
        r.study = f[static_cast<std::size_t>(ci_study)];
        r.treatment = f[static_cast<std::size_t>(ci_treatment)];
        if (r.study.empty()) throw ValidationError(ctx + ": empty study id");
        if (r.treatment.empty()) throw ValidationError(ctx + ": empty treatment");
        double t;
        if (!parse_double(f[static_cast<std::size_t>(ci_time)], t))
            throw ValidationError(ctx + ": non-numeric time '" +
                                  f[static_cast<std::size_t>(ci_time)] + "'");
        if (!(t > 0.0))
            throw ValidationError(ctx + ": time must be strictly positive, got " +
                                  f[static_cast<std::size_t>(ci_time)]);
        r.time = t / divisor;
        const std::string& ev = f[static_cast<std::size_t>(ci_event)];
        if (ev == "0")
            r.event = 0;
        else if (ev == "1")
            r.event = 1;
        else
            throw ValidationError(ctx + ": event must be 0 or 1, got '" + ev + "'");
        rows.push_back(std::move(r));
    }
    return build_network(rows, opts.reference);
}

void export_ipd(const EvidenceNetwork& net, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write IPD file: " + path);
    out << "study,treatment,time,event\n";
    char buf[64];
    for (const auto& s : net.studies) {
        for (const auto& r : s.records) {
            std::snprintf(buf, sizeof(buf), "%.17g", r.time);
            out << s.id << ',' << net.label(r.treatment) << ',' << buf << ','
                << r.event << '\n';
        }
    }
}

std::vector<Finding> validate_network(const EvidenceNetwork& net) {
    std::vector<Finding> out;
    if (net.treatments.empty() || net.studies.empty()) {
        out.push_back({Severity::fatal, "empty", "network has no studies"});
        return out;
    }
    if (!net.connected())
        out.push_back({Severity::fatal, "disconnected",
                       "network is disconnected: some treatments are not reachable "
                       "from the reference via shared studies"});
    for (const auto& s : net.studies) {
        if (s.arms.size() < 2)
            out.push_back({Severity::fatal, "single_arm",
                           "study " + s.id + " has fewer than 2 arms"});
        if (s.arms.size() > 2)
            out.push_back({Severity::info, "multi_arm",
                           "study " + s.id + " has " +
                               std::to_string(s.arms.size()) +
                               " arms; contrasts share the study reference"});
        if (!std::is_sorted(s.arms.begin(), s.arms.end()))
            out.push_back({Severity::fatal, "arm_order",
                           "study " + s.id + " arms are not in treatment-index order"});
        for (int a : s.arms) {
            if (s.records_in_arm(a) == 0)
                out.push_back({Severity::fatal, "empty_arm",
                               "study " + s.id + " arm " + net.label(a) +
                                   " has no records"});
            else if (s.events_in_arm(a) == 0)
                out.push_back({Severity::warning, "no_events_in_arm",
                               "study " + s.id + " arm " + net.label(a) +
                                   " has no events; it cannot enter a Cox fit"});
        }
        for (const auto& r : s.records) {
            if (!(r.time > 0.0)) {
                out.push_back({Severity::fatal, "nonpositive_time",
                               "study " + s.id + " contains a non-positive time"});
                break;
            }
        }
    }
    return out;
}

std::vector<int> arm_ordering(const EvidenceNetwork& net, const std::string& study_id) {
    const auto& s = net.study(study_id);  // throws for unknown study
    std::vector<int> arms = s.arms;
    std::sort(arms.begin(), arms.end());
    return arms;
}

}  // namespace tvhr
