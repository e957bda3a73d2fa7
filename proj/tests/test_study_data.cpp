#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "tvhr/study_data.hpp"

using namespace tvhr;
namespace fs = std::filesystem;

TEST_SUITE_BEGIN("study_data");

namespace {

fs::path write_temp(const std::string& name, const std::string& content) {
    const fs::path p = fs::temp_directory_path() / name;
    std::ofstream out(p);
    out << content;
    return p;
}

}  // namespace

TEST_CASE("minimal well-formed file") {
    const auto p = write_temp("tvhr_min.csv",
                              "study,treatment,time,event\n"
                              "s1,A,1.0,1\n"
                              "s1,A,2.0,0\n"
                              "s1,B,1.5,1\n"
                              "s1,B,2.5,0\n");
    const EvidenceNetwork net = load_ipd(p.string());
    CHECK(net.n_studies() == 1);
    CHECK(net.n_treatments() == 2);
    CHECK(net.total_records() == 4);
    CHECK(net.treatments[0] == "A");  // lexicographically first = reference
    CHECK(net.studies[0].arms == std::vector<int>{1, 2});
}

TEST_CASE("headerless positional columns") {
    const auto p = write_temp("tvhr_nohdr.csv",
                              "s1,A,1.0,1\n"
                              "s1,B,2.0,0\n"
                              "s1,B,0.5,1\n");
    const EvidenceNetwork net = load_ipd(p.string());
    CHECK(net.total_records() == 3);
}

TEST_CASE("column overrides and custom delimiter") {
    const auto p = write_temp("tvhr_cols.csv",
                              "trial;arm;months;died\n"
                              "t1;X;12;1\n"
                              "t1;Y;24;0\n"
                              "t1;Y;6;1\n");
    LoadOptions o;
    o.delimiter = ';';
    o.time_unit = "months";
    o.col_study = "trial";
    o.col_treatment = "arm";
    o.col_time = "months";
    o.col_event = "died";
    const EvidenceNetwork net = load_ipd(p.string(), o);
    CHECK(net.studies[0].records[0].time == doctest::Approx(1.0));  // 12 months
    CHECK(net.studies[0].max_time() == doctest::Approx(2.0));
}

TEST_CASE("reference override moves the label to index 1") {
    const auto p = write_temp("tvhr_ref.csv",
                              "s1,A,1,1\ns1,B,2,1\ns2,B,1,1\ns2,C,2,1\n");
    LoadOptions o;
    o.reference = "B";
    const EvidenceNetwork net = load_ipd(p.string(), o);
    CHECK(net.treatments[0] == "B");
    CHECK(net.treatment_index("B") == 1);
    CHECK(net.treatment_index("A") == 2);  // remaining labels in sorted order
    CHECK(net.treatment_index("C") == 3);
}

TEST_CASE("malformed rows are rejected with row context") {
    const auto bad_time = write_temp("tvhr_badtime.csv", "s1,A,zero,1\ns1,B,1,1\n");
    CHECK_THROWS_WITH_AS(load_ipd(bad_time.string()), doctest::Contains("missing column"),
                         ValidationError);  // non-numeric probe row becomes a header
    const auto bad_time2 =
        write_temp("tvhr_badtime2.csv", "s1,A,1,1\ns1,B,zero,1\n");
    CHECK_THROWS_WITH_AS(load_ipd(bad_time2.string()),
                         doctest::Contains("non-numeric time"), ValidationError);
    const auto neg_time = write_temp("tvhr_negtime.csv", "s1,A,1,1\ns1,B,-2,1\n");
    CHECK_THROWS_WITH_AS(load_ipd(neg_time.string()),
                         doctest::Contains("strictly positive"), ValidationError);
    const auto zero_time = write_temp("tvhr_zerotime.csv", "s1,A,1,1\ns1,B,0,1\n");
    CHECK_THROWS_AS(load_ipd(zero_time.string()), ValidationError);
    const auto bad_event = write_temp("tvhr_badev.csv", "s1,A,1,1\ns1,B,1,2\n");
    CHECK_THROWS_WITH_AS(load_ipd(bad_event.string()),
                         doctest::Contains("event must be 0 or 1"), ValidationError);
    const auto missing = write_temp("tvhr_missing.csv",
                                    "study,treatment,time\ns1,A,1\n");
    CHECK_THROWS_WITH_AS(load_ipd(missing.string()),
                         doctest::Contains("missing column"), ValidationError);
    const auto short_row = write_temp("tvhr_short.csv", "s1,A,1,1\ns1,B,1\n");
    CHECK_THROWS_AS(load_ipd(short_row.string()), ValidationError);
}

TEST_CASE("disconnected network is rejected at load") {
    const auto p = write_temp("tvhr_disc.csv",
                              "s1,A,1,1\ns1,B,2,1\ns2,C,1,1\ns2,D,2,1\n");
    CHECK_THROWS_WITH_AS(load_ipd(p.string()), doctest::Contains("disconnected"),
                         ValidationError);
}

TEST_CASE("validate_network findings") {
    std::vector<RawRow> rows = {{"s1", "A", 1.0, 1}, {"s1", "B", 2.0, 1},
                                {"s1", "C", 1.5, 1}, {"s2", "A", 1.0, 1},
                                {"s2", "B", 2.0, 0}};
    const EvidenceNetwork net = build_network(rows);
    const auto findings = validate_network(net);
    bool multi_arm_info = false, no_event_warning = false, any_fatal = false;
    for (const auto& f : findings) {
        if (f.code == "multi_arm" && f.severity == Severity::info) multi_arm_info = true;
        if (f.code == "no_events_in_arm" && f.severity == Severity::warning)
            no_event_warning = true;
        if (f.severity == Severity::fatal) any_fatal = true;
    }
    CHECK(multi_arm_info);    // s1 has 3 arms
    CHECK(no_event_warning);  // s2 arm B all censored
    CHECK_FALSE(any_fatal);
}

TEST_CASE("arm ordering puts the lowest treatment index first") {
    std::vector<RawRow> rows = {{"s1", "t7", 1.0, 1}, {"s1", "t2", 2.0, 1},
                                {"s1", "t5", 1.5, 1}, {"s2", "t2", 1.0, 1},
                                {"s2", "t7", 2.0, 1}};
    const EvidenceNetwork net = build_network(rows);
    // labels sort to t2 < t5 < t7, so indices are 1,2,3
    const auto arms = arm_ordering(net, "s1");
    CHECK(arms == std::vector<int>{1, 2, 3});
    CHECK(arm_ordering(net, "s2") == std::vector<int>{1, 3});
    CHECK_THROWS_AS(arm_ordering(net, "nope"), ValidationError);
}

TEST_CASE("export/reload round-trip preserves the structure") {
    std::vector<RawRow> rows = {{"s1", "A", 0.173, 1},
                                {"s1", "B", 2.25, 0},
                                {"s2", "A", 1.0 / 3.0, 1},
                                {"s2", "B", 0.9, 1}};
    const EvidenceNetwork net = build_network(rows);
    const fs::path p = fs::temp_directory_path() / "tvhr_roundtrip.csv";
    export_ipd(net, p.string());
    const EvidenceNetwork re = load_ipd(p.string());
    REQUIRE(re.n_studies() == net.n_studies());
    CHECK(re.treatments == net.treatments);
    std::size_t total = 0;
    for (int i = 0; i < net.n_studies(); ++i) {
        REQUIRE(re.studies[i].records.size() == net.studies[i].records.size());
        CHECK(re.studies[i].arms == net.studies[i].arms);
        for (std::size_t j = 0; j < net.studies[i].records.size(); ++j) {
            CHECK(re.studies[i].records[j].time == net.studies[i].records[j].time);
            CHECK(re.studies[i].records[j].event == net.studies[i].records[j].event);
            CHECK(re.studies[i].records[j].treatment ==
                  net.studies[i].records[j].treatment);
        }
        total += re.studies[i].records.size();
    }
    CHECK(total == net.total_records());  // counting invariant
}

TEST_CASE("single-arm study is rejected") {
    std::vector<RawRow> rows = {{"s1", "A", 1.0, 1}, {"s1", "A", 2.0, 1}};
    CHECK_THROWS_WITH_AS(build_network(rows), doctest::Contains("fewer than 2 arms"),
                         ValidationError);
}

TEST_CASE("config file drives load options") {
    const auto cfg = write_temp("tvhr_cfg.json",
                                R"({"time_unit":"days","reference":"B",)"
                                R"("columns":{"time":"t"},"delimiter":","})");
    const LoadOptions o = load_options_from_json(cfg.string());
    CHECK(o.time_unit == "days");
    CHECK(o.reference == "B");
    CHECK(o.col_time == "t");
    const auto bad = write_temp("tvhr_cfg_bad.json", R"({"time_unit":"decades"})");
    CHECK_THROWS_AS(load_options_from_json(bad.string()), ValidationError);
}

TEST_SUITE_END();
