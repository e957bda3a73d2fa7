#ifndef TVHR_STUDY_DATA_HPP
#define TVHR_STUDY_DATA_HPP

#include <optional>
#include <string>
#include <vector>

#include "tvhr/common.hpp"

namespace tvhr {

// One participant: follow-up time in years, event flag, arm as a dense
// 1-based treatment index (index 1 = network reference).
struct SurvivalRecord {
    int treatment = 0;
    double time = 0.0;
    int event = 0;
};

struct StudyDataset {
    std::string id;
    std::vector<int> arms;  // t[i,k] ascending; arms[0] is the study reference
    std::vector<SurvivalRecord> records;

    int n_arms() const { return static_cast<int>(arms.size()); }
    int reference_arm() const { return arms.front(); }
    std::size_t n_records() const { return records.size(); }
    int n_events() const;
    int events_in_arm(int treatment) const;
    std::size_t records_in_arm(int treatment) const;
    double max_time() const;
};

struct EvidenceNetwork {
    // treatments[t-1] is the label of treatment index t; index 1 = reference
    std::vector<std::string> treatments;
    std::vector<StudyDataset> studies;

    int n_treatments() const { return static_cast<int>(treatments.size()); }
    int n_studies() const { return static_cast<int>(studies.size()); }
    std::size_t total_records() const;
    const std::string& label(int treatment) const;
    int treatment_index(const std::string& label) const;  // 0 if unknown
    const StudyDataset& study(const std::string& id) const;
    bool connected() const;
    // longest follow-up among studies that include the treatment
    double max_observed_time(int treatment) const;
};

struct LoadOptions {
    char delimiter = ',';
    std::string time_unit = "years";  // years | days | months
    std::string reference;            // empty: lexicographically first label
    // column names (when a header row is present) or 0-based positions
    std::string col_study = "study";
    std::string col_treatment = "treatment";
    std::string col_time = "time";
    std::string col_event = "event";
};

// Parse a JSON config file carrying LoadOptions plus reporting knobs; unknown
// keys are ignored here and read by the pipeline layer.
LoadOptions load_options_from_json(const std::string& config_path);

// Load delimited IPD (columns study,treatment,time,event; optional header).
// Throws ValidationError with row context on malformed input, and on a
// disconnected network or a single-arm study.
EvidenceNetwork load_ipd(const std::string& path, const LoadOptions& opts = {});

// Assemble a network from raw rows (label-based); same validation as load_ipd.
struct RawRow {
    std::string study;
    std::string treatment;
    double time = 0.0;
    int event = 0;
};
EvidenceNetwork build_network(const std::vector<RawRow>& rows,
                              const std::string& reference = "");

// Write the network back out as CSV in years (inverse of load_ipd).
void export_ipd(const EvidenceNetwork& net, const std::string& path);

// Invariant findings; empty means everything holds. Zero-event arms are
// warnings here (they only become fatal when such an arm enters a Cox fit).
std::vector<Finding> validate_network(const EvidenceNetwork& net);

// Arms of one study ordered so the study-specific reference (lowest global
// treatment index) comes first. Throws ValidationError for an unknown study.
std::vector<int> arm_ordering(const EvidenceNetwork& net, const std::string& study_id);

}  // namespace tvhr

#endif
