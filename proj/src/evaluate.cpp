#include "selfscore/evaluate.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "selfscore/errors.hpp"
#include "selfscore/metrics.hpp"
#include "selfscore/prompting.hpp"

namespace selfscore {

EvalResult evaluate_scoring(Backend& backend, const std::vector<ScoredImage>& records,
                            const BinningScheme& scheme, const ReferenceValues& ref,
                            const EvalOptions& options) {
    const std::string prompt = render_scoring_prompt();
    const std::string slot_prompt = prompt + "#Score:";

    EvalResult result;
    std::vector<double> pred, gt;
    for (const auto& rec : records) {
        try {
            Vec10 logits = backend.score_token_logits(rec.image_uri, slot_prompt);
            double raw = decode_expected(softmax_scores(logits), ref);
            std::string generated = backend.generate(rec.image_uri, prompt, options.gen);
            ParsedResponse parsed = parse_response(generated);

            PredictionRecord out;
            out.image_id = rec.image_id;
            out.predicted_bin = parsed.score_bin;
            out.predicted_raw = raw;
            out.gt_raw = rec.raw_score;
            out.gt_bin = encode_bin(scheme, rec.raw_score);
            out.explanation = parsed.explanation;
            result.records.push_back(std::move(out));
            pred.push_back(raw);
            gt.push_back(rec.raw_score);
        } catch (const BackendFailure&) {
            ++result.backend_failures;
        } catch (const ContextOverflow&) {
            ++result.backend_failures;
        } catch (const TokenizationError&) {
            ++result.backend_failures;
        } catch (const FormatError&) {
            ++result.backend_failures;
        }
    }
    result.n = result.records.size();
    result.plcc = plcc(pred, gt);
    result.srcc = srcc(pred, gt);
    result.rmse = rmse(pred, gt);
    return result;
}

void save_predictions(const std::vector<PredictionRecord>& records, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open predictions file for writing: " + path);
    for (const auto& r : records) {
        nlohmann::json row = {{"image_id", r.image_id},
                              {"predicted_bin", r.predicted_bin},
                              {"predicted_raw", r.predicted_raw},
                              {"gt_raw", r.gt_raw},
                              {"gt_bin", r.gt_bin},
                              {"explanation", r.explanation}};
        out << row.dump() << '\n';
    }
    if (!out) throw Error("write failed: " + path);
}

std::vector<PredictionRecord> load_predictions(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open predictions file: " + path);
    std::vector<PredictionRecord> records;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            nlohmann::json row = nlohmann::json::parse(line);
            PredictionRecord r;
            r.image_id = row.at("image_id").get<std::string>();
            r.predicted_bin = row.at("predicted_bin").get<int>();
            r.predicted_raw = row.at("predicted_raw").get<double>();
            r.gt_raw = row.at("gt_raw").get<double>();
            r.gt_bin = row.at("gt_bin").get<int>();
            r.explanation = row.at("explanation").get<std::string>();
            if (r.predicted_bin < 0 || r.predicted_bin > 9) throw BinOutOfRange(r.predicted_bin);
            if (r.gt_bin < 0 || r.gt_bin > 9) throw BinOutOfRange(r.gt_bin);
            records.push_back(std::move(r));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(lineno, e.what());
        } catch (const BinOutOfRange& e) {
            throw ParseError(lineno, e.what());
        }
    }
    return records;
}

}  // namespace selfscore
