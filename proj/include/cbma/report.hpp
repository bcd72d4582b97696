#ifndef CBMA_REPORT_HPP
#define CBMA_REPORT_HPP

#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <string>

#include <json.hpp>

#include "cbma/errors.hpp"
#include "cbma/experiments.hpp"

namespace cbma {

namespace detail {

// Fixed formatting keeps report files byte-identical across reruns and
// thread counts.
inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

} // namespace detail

inline void write_report_csv(const ExperimentReport& report, std::ostream& os) {
    os << "method,repetition,coverage,mean_length,time_sec\n";
    for (const auto& r : report.rows)
        os << r.method << ',' << r.repetition << ',' << detail::format_double(r.coverage) << ','
           << detail::format_double(r.mean_length) << ',' << detail::format_double(r.time_sec)
           << '\n';
}

inline nlohmann::json stats_json(const SummaryStats& s) {
    return {{"mean", s.mean}, {"se", s.se},   {"median", s.median},
            {"q1", s.q1},     {"q3", s.q3},   {"iqr", s.iqr}};
}

inline nlohmann::json summary_json(const ExperimentReport& report,
                                   const std::map<std::string, std::string>& config_echo) {
    nlohmann::json j;
    j["config"] = config_echo;
    nlohmann::json methods;
    for (const auto& [method, stats] : report.coverage) {
        methods[method]["coverage"] = stats_json(stats);
        methods[method]["length"] = stats_json(report.length.at(method));
    }
    j["methods"] = methods;
    j["degenerate_grid_points"] = report.degenerate_grid_points;
    j["failed_repetitions"] = report.failed_repetitions;
    j["failures"] = report.failures;
    j["metadata"] = report.metadata;
    return j;
}

inline void write_report_files(const ExperimentReport& report,
                               const std::map<std::string, std::string>& config_echo,
                               const std::string& out_dir) {
    {
        std::ofstream csv(out_dir + "/report.csv");
        if (!csv) throw data_error("cannot write " + out_dir + "/report.csv");
        write_report_csv(report, csv);
    }
    std::ofstream js(out_dir + "/summary.json");
    if (!js) throw data_error("cannot write " + out_dir + "/summary.json");
    js << summary_json(report, config_echo).dump(2) << '\n';
}

} // namespace cbma

#endif
