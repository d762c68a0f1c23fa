#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "selfscore/config.hpp"

namespace selfscore {

// One line of the results table.
struct MetricsRow {
    std::string label;
    double plcc = 0.0;
    double srcc = 0.0;
    double rmse = 0.0;
    std::size_t n = 0;
    std::size_t backend_failures = 0;
    bool has_judge = false;
    double cons = 0.0;
    double use = 0.0;
    double gen = 0.0;
    std::size_t judge_failures = 0;
};

nlohmann::json metrics_row_to_json(const MetricsRow& row);
MetricsRow metrics_row_from_json(const nlohmann::json& doc);
std::string format_metrics_table(const std::vector<MetricsRow>& rows);

struct RunReport {
    std::vector<MetricsRow> rows;   // zero-shot first, then per-iteration rows
    int iterations_completed = 0;   // recorded in state after this call
    int iterations_executed = 0;    // freshly run by this call
    std::string out;
};

// The full loop: generate preference data with the current model, train the
// score (and from iteration 2 the consistency) specialist, fold the merged
// task vector into the cumulative delta, evaluate on the validation split.
// Progress persists in <out>/state.json; a rerun resumes after the last
// iteration whose artifacts still verify.
RunReport run_full(const PipelineConfig& config);

int run_cli(int argc, const char* const* argv);

}  // namespace selfscore
