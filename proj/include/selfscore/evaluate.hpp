#pragma once

#include <string>
#include <vector>

#include "selfscore/backend.hpp"
#include "selfscore/dataset.hpp"
#include "selfscore/score_codec.hpp"

namespace selfscore {

struct PredictionRecord {
    std::string image_id;
    int predicted_bin = 0;      // from the generated response
    double predicted_raw = 0.0; // expected score under the decode distribution
    double gt_raw = 0.0;
    int gt_bin = 0;
    std::string explanation;

    bool operator==(const PredictionRecord&) const = default;
};

struct EvalOptions {
    GenerationParams gen;
};

struct EvalResult {
    double plcc = 0.0;
    double srcc = 0.0;
    double rmse = 0.0;
    std::size_t n = 0;
    std::size_t backend_failures = 0;
    std::vector<PredictionRecord> records;
};

// For each record: score-token logits -> softmax -> expected score, plus a
// greedy generation parsed for the declared bin and explanation. Per-record
// backend errors are counted and the record skipped.
EvalResult evaluate_scoring(Backend& backend, const std::vector<ScoredImage>& records,
                            const BinningScheme& scheme, const ReferenceValues& ref,
                            const EvalOptions& options = {});

void save_predictions(const std::vector<PredictionRecord>& records, const std::string& path);
std::vector<PredictionRecord> load_predictions(const std::string& path);

}  // namespace selfscore
