#include "selfscore/pipeline.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>

#include "selfscore/dataset.hpp"
#include "selfscore/delta_archive.hpp"
#include "selfscore/digest.hpp"
#include "selfscore/dpo.hpp"
#include "selfscore/errors.hpp"
#include "selfscore/evaluate.hpp"
#include "selfscore/preference.hpp"
#include "selfscore/prompting.hpp"
#include "selfscore/rng.hpp"
#include "selfscore/ties.hpp"

namespace fs = std::filesystem;

namespace selfscore {

nlohmann::json metrics_row_to_json(const MetricsRow& row) {
    nlohmann::json out = {{"label", row.label},
                          {"plcc", row.plcc},
                          {"srcc", row.srcc},
                          {"rmse", row.rmse},
                          {"n", row.n},
                          {"backend_failures", row.backend_failures},
                          {"cons", nullptr},
                          {"use", nullptr},
                          {"gen", nullptr},
                          {"judge_failures", row.judge_failures}};
    if (row.has_judge) {
        out["cons"] = row.cons;
        out["use"] = row.use;
        out["gen"] = row.gen;
    }
    return out;
}

MetricsRow metrics_row_from_json(const nlohmann::json& doc) {
    MetricsRow row;
    row.label = doc.at("label").get<std::string>();
    row.plcc = doc.at("plcc").get<double>();
    row.srcc = doc.at("srcc").get<double>();
    row.rmse = doc.at("rmse").get<double>();
    row.n = doc.at("n").get<std::size_t>();
    row.backend_failures = doc.at("backend_failures").get<std::size_t>();
    row.judge_failures = doc.at("judge_failures").get<std::size_t>();
    if (!doc.at("cons").is_null()) {
        row.has_judge = true;
        row.cons = doc.at("cons").get<double>();
        row.use = doc.at("use").get<double>();
        row.gen = doc.at("gen").get<double>();
    }
    return row;
}

std::string format_metrics_table(const std::vector<MetricsRow>& rows) {
    std::size_t width = 5;  // "model"
    for (const auto& r : rows) width = std::max(width, r.label.size());
    std::string out;
    char line[256];
    std::snprintf(line, sizeof line, "%-*s  %8s  %8s  %8s  %5s  %6s  %6s  %6s\n",
                  static_cast<int>(width), "model", "plcc", "srcc", "rmse", "n", "cons", "use",
                  "gen");
    out += line;
    out += std::string(width + 2 + 8 * 3 + 2 * 3 + 5 + 2 + 6 * 3 + 2 * 3, '-') + "\n";
    for (const auto& r : rows) {
        std::snprintf(line, sizeof line, "%-*s  %8.4f  %8.4f  %8.4f  %5zu", static_cast<int>(width),
                      r.label.c_str(), r.plcc, r.srcc, r.rmse, r.n);
        out += line;
        if (r.has_judge) {
            std::snprintf(line, sizeof line, "  %6.3f  %6.3f  %6.3f\n", r.cons, r.use, r.gen);
        } else {
            std::snprintf(line, sizeof line, "  %6s  %6s  %6s\n", "-", "-", "-");
        }
        out += line;
    }
    return out;
}

namespace {

constexpr const char* kStateSchema = "selfscore-state-v1";

struct IterationRecord {
    int iteration = 0;
    std::map<std::string, std::string> artifacts;  // out-relative path -> sha256
    std::vector<MetricsRow> rows;
};

nlohmann::json rows_to_json(const std::vector<MetricsRow>& rows) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : rows) arr.push_back(metrics_row_to_json(r));
    return arr;
}

std::vector<MetricsRow> rows_from_json(const nlohmann::json& arr) {
    std::vector<MetricsRow> rows;
    for (const auto& item : arr) rows.push_back(metrics_row_from_json(item));
    return rows;
}

void write_file(const fs::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open for writing: " + path.string());
    out << bytes;
    if (!out) throw Error("write failed: " + path.string());
}

void write_json(const fs::path& path, const nlohmann::json& doc) {
    write_file(path, doc.dump(2) + "\n");
}

class PipelineRun {
public:
    explicit PipelineRun(const PipelineConfig& config) : config_(config) {
        validate_pipeline_config(config_);
        if (config_.manifest.empty()) throw ConfigError("data manifest path is required");
        manifest_ = load_manifest(config_.manifest);
        train_ = split_filter(manifest_, Split::train);
        val_ = split_filter(manifest_, Split::val);
        if (train_.empty()) throw ConfigError("manifest has no train records");
        if (val_.empty()) throw ConfigError("manifest has no val records");
        for (const auto& rec : train_) train_scores_.push_back(rec.raw_score);
        scheme_ = fit_binning(train_scores_);
        base_ = make_backend(config_);
        provider_ = make_judge_provider(config_.judge);
        manifest_sha_ = sha256_file(config_.manifest);
        out_ = fs::path(config_.out);
    }

    RunReport run() {
        fs::create_directories(out_);
        load_state();

        int executed = 0;
        if (!zero_shot_row_) {
            write_json(out_ / "codec.json",
                       codec_to_json(scheme_, default_reference_values(scheme_, train_scores_),
                                     "train-means"));
            auto model = base_->clone();
            zero_shot_row_ = eval_row(*model, "zero-shot", out_ / "predictions_zero_shot.jsonl",
                                      default_reference_values(scheme_, train_scores_));
            zero_shot_artifacts_ = {
                {"codec.json", sha256_file((out_ / "codec.json").string())},
                {"predictions_zero_shot.jsonl",
                 sha256_file((out_ / "predictions_zero_shot.jsonl").string())}};
            save_state();
        }
        for (int k = static_cast<int>(done_.size()) + 1; k <= config_.iterations; ++k) {
            run_iteration(k);
            ++executed;
        }

        RunReport report;
        report.rows.push_back(*zero_shot_row_);
        for (const auto& rec : done_) {
            if (rec.iteration > config_.iterations) break;
            for (const auto& row : rec.rows) report.rows.push_back(row);
        }
        write_json(out_ / "report.json", {{"rows", rows_to_json(report.rows)}});
        write_file(out_ / "report.txt", format_metrics_table(report.rows));
        report.iterations_completed = static_cast<int>(done_.size());
        report.iterations_executed = executed;
        report.out = out_.string();
        return report;
    }

private:
    nlohmann::json config_snapshot() const {
        nlohmann::json snap = pipeline_config_to_json(config_);
        // A resumed run may extend the loop or relocate the tree.
        snap.erase("iterations");
        snap.erase("out");
        return snap;
    }

    nlohmann::json state_to_json() const {
        nlohmann::json iters = nlohmann::json::array();
        for (const auto& rec : done_) {
            iters.push_back({{"iteration", rec.iteration},
                             {"artifacts", rec.artifacts},
                             {"rows", rows_to_json(rec.rows)}});
        }
        nlohmann::json zero = nullptr;
        if (zero_shot_row_)
            zero = {{"row", metrics_row_to_json(*zero_shot_row_)},
                    {"artifacts", zero_shot_artifacts_}};
        return {{"schema", kStateSchema},
                {"config", config_snapshot()},
                {"source_manifest_sha256", manifest_sha_},
                {"zero_shot", zero},
                {"iterations", iters}};
    }

    void save_state() {
        fs::path tmp = out_ / "state.json.tmp";
        write_json(tmp, state_to_json());
        fs::rename(tmp, out_ / "state.json");
    }

    bool artifacts_verify(const std::map<std::string, std::string>& artifacts) const {
        for (const auto& [rel, sha] : artifacts) {
            fs::path p = out_ / rel;
            std::error_code ec;
            if (!fs::is_regular_file(p, ec)) return false;
            if (sha256_file(p.string()) != sha) return false;
        }
        return true;
    }

    void load_state() {
        fs::path path = out_ / "state.json";
        if (!fs::exists(path)) return;
        std::ifstream in(path);
        if (!in) throw Error("cannot open state file: " + path.string());
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw SchemaMismatch(std::string("unreadable state file: ") + e.what());
        }
        if (doc.value("schema", "") != kStateSchema)
            throw SchemaMismatch("state file has unknown schema");
        if (doc.at("config") != config_snapshot())
            throw ConfigError("output tree " + out_.string() +
                              " was produced with a different configuration; refusing to resume");
        if (doc.at("source_manifest_sha256").get<std::string>() != manifest_sha_)
            throw ConfigError("dataset manifest changed since the state file was written");

        if (!doc.at("zero_shot").is_null()) {
            const auto& zero = doc.at("zero_shot");
            std::map<std::string, std::string> artifacts =
                zero.at("artifacts").get<std::map<std::string, std::string>>();
            if (artifacts_verify(artifacts)) {
                zero_shot_row_ = metrics_row_from_json(zero.at("row"));
                zero_shot_artifacts_ = std::move(artifacts);
            }
        }
        int expected = 1;
        for (const auto& item : doc.at("iterations")) {
            IterationRecord rec;
            rec.iteration = item.at("iteration").get<int>();
            rec.artifacts = item.at("artifacts").get<std::map<std::string, std::string>>();
            rec.rows = rows_from_json(item.at("rows"));
            if (rec.iteration != expected || !artifacts_verify(rec.artifacts)) break;
            fs::path contribution = out_ / ("ite-" + std::to_string(rec.iteration)) /
                                    (rec.iteration == 1 ? "delta-score" : "delta-merged");
            cum_ = add_deltas(cum_, load_delta(contribution.string()));
            done_.push_back(std::move(rec));
            ++expected;
        }
    }

    std::map<std::string, std::string> hash_tree(const fs::path& dir) const {
        std::map<std::string, std::string> out;
        for (const auto& entry : fs::recursive_directory_iterator(dir)) {
            if (!entry.is_regular_file()) continue;
            out.emplace(fs::relative(entry.path(), out_).generic_string(),
                        sha256_file(entry.path().string()));
        }
        return out;
    }

    // Decode values are refitted on the val split after each training; the
    // zero-shot pass instead passes the pre-fit default (train-bin means).
    MetricsRow eval_row(Backend& model, const std::string& label, const fs::path& pred_path,
                        std::optional<ReferenceValues> fixed_ref = std::nullopt) {
        ReferenceValues ref;
        if (fixed_ref) {
            ref = *fixed_ref;
        } else {
            const std::string slot = render_scoring_prompt() + "#Score:";
            Eigen::MatrixXd probs(static_cast<Eigen::Index>(val_.size()), kNumBins);
            Eigen::VectorXd scores(static_cast<Eigen::Index>(val_.size()));
            for (std::size_t i = 0; i < val_.size(); ++i) {
                Vec10 logits = model.score_token_logits(val_[i].image_uri, slot);
                probs.row(static_cast<Eigen::Index>(i)) = softmax_scores(logits).p.transpose();
                scores[static_cast<Eigen::Index>(i)] = val_[i].raw_score;
            }
            ref = fit_reference_values(probs, scores);
        }

        EvalOptions opt;
        opt.gen = config_.gen;
        EvalResult res = evaluate_scoring(model, val_, scheme_, ref, opt);
        save_predictions(res.records, pred_path.string());

        MetricsRow row;
        row.label = label;
        row.plcc = res.plcc;
        row.srcc = res.srcc;
        row.rmse = res.rmse;
        row.n = res.n;
        row.backend_failures = res.backend_failures;
        if (provider_) {
            JudgeOptions jo = config_.judge.options;
            jo.seed = derive_seed(config_.seed, "judge:" + label);
            JudgeResult jr = judge_batch(*provider_, res.records, jo);
            row.has_judge = true;
            row.cons = jr.mean_consistency;
            row.use = jr.mean_usefulness;
            row.gen = jr.mean_general;
            row.judge_failures = jr.failures;
        }
        return row;
    }

    void run_iteration(int k) {
        fs::path dir = out_ / ("ite-" + std::to_string(k));
        fs::create_directories(dir / "data");
        IterationRecord rec;
        rec.iteration = k;

        // (a) preference data from the current model
        auto generator = apply_delta(*base_, cum_);
        std::uint64_t data_seed = derive_seed(config_.seed, "data", static_cast<std::uint64_t>(k));
        DatasetBuildOptions build;
        build.fraction = config_.score_fraction;
        build.pair.min_distance = config_.min_distance;
        build.pair.max_retries = config_.max_retries;
        build.pair.gen = config_.gen;
        build.write_consistency = k >= 2;
        build.generator = generator->id();
        const std::string score_path = (dir / "data" / "score_train.jsonl").string();
        const std::string cons_path = (dir / "data" / "consistency_train.jsonl").string();
        BuildStats stats = build_dataset(*generator, train_, scheme_, data_seed, build, score_path,
                                         cons_path);

        std::size_t consistency_kept = 0;
        if (k >= 2) {
            std::vector<PreferencePair> cons = load_pairs(cons_path);
            std::size_t keep =
                std::min(cons.size(),
                         ceil_fraction(config_.consistency_fraction_of_score, stats.written_score));
            Rng rng(derive_seed(config_.seed, "consistency-subsample",
                                static_cast<std::uint64_t>(k)));
            std::vector<PreferencePair> subset;
            subset.reserve(keep);
            for (std::size_t idx : rng.sample_indices(cons.size(), keep))
                subset.push_back(cons[idx]);
            save_pairs(subset, cons_path, build.generator);
            consistency_kept = subset.size();
        }

        nlohmann::json chain = nlohmann::json::array();
        for (const auto& prev : done_) {
            std::string rel = "ite-" + std::to_string(prev.iteration) + "/" +
                              (prev.iteration == 1 ? "delta-score" : "delta-merged");
            chain.push_back({{"path", rel},
                             {"manifest_sha256",
                              sha256_file((out_ / rel / "manifest.json").string())}});
        }
        nlohmann::json sidecar = {
            {"iteration", k},
            {"generator_id", build.generator},
            {"generator_delta_chain", chain},
            {"source_manifest_sha256", manifest_sha_},
            {"prompt_sha256", sha256_hex(scoring_prompt_text())},
            {"seed", data_seed},
            {"stats",
             {{"sampled", stats.sampled},
              {"written_score", stats.written_score},
              {"consistency_generated", stats.written_consistency},
              {"consistency_kept", consistency_kept},
              {"dropped", stats.dropped},
              {"failed", stats.failed}}},
            {"files", nlohmann::json::object()}};
        sidecar["files"]["score_train.jsonl"] = sha256_file(score_path);
        if (k >= 2) sidecar["files"]["consistency_train.jsonl"] = sha256_file(cons_path);
        write_json(dir / "data" / "manifest.json", sidecar);

        // (b) specialists, both starting from the cumulative delta
        auto start = apply_delta(*base_, cum_);
        TrainConfig score_cfg = config_.train_score;
        score_cfg.lr = decayed_lr(score_cfg.lr, score_cfg.lr_decay_per_iteration, k);
        score_cfg.seed = derive_seed(config_.seed, "train-score", static_cast<std::uint64_t>(k));
        auto [score_delta, score_report] =
            train_adapter(*start, score_path, config_.adapter, score_cfg, base_.get());
        score_delta.metadata.iteration = k;
        save_delta(score_delta, (dir / "delta-score").string());
        write_json(dir / "delta-score" / "train_report.json",
                   {{"config", train_config_to_json(score_cfg)},
                    {"report", train_report_to_json(score_report)},
                    {"dataset_sha256", sha256_file(score_path)}});

        // (c) contribution of this iteration to the cumulative delta
        NamedDelta contribution;
        NamedDelta cons_delta;
        if (k == 1) {
            contribution = score_delta;
        } else {
            TrainConfig cons_cfg = config_.train_consistency;
            cons_cfg.lr = decayed_lr(cons_cfg.lr, cons_cfg.lr_decay_per_iteration, k);
            cons_cfg.seed =
                derive_seed(config_.seed, "train-consistency", static_cast<std::uint64_t>(k));
            TrainReport cons_report;
            std::tie(cons_delta, cons_report) =
                train_adapter(*start, cons_path, config_.adapter, cons_cfg, base_.get());
            cons_delta.metadata.iteration = k;
            save_delta(cons_delta, (dir / "delta-consistency").string());
            write_json(dir / "delta-consistency" / "train_report.json",
                       {{"config", train_config_to_json(cons_cfg)},
                        {"report", train_report_to_json(cons_report)},
                        {"dataset_sha256", sha256_file(cons_path)}});

            contribution = ties_merge({score_delta, cons_delta}, config_.merge);
            contribution.metadata.iteration = k;
            save_delta(contribution, (dir / "delta-merged").string());
            write_json(
                dir / "delta-merged" / "merge_manifest.json",
                {{"config", merge_config_to_json(config_.merge)},
                 {"inputs",
                  {{{"path", "delta-score"},
                    {"manifest_sha256",
                     sha256_file((dir / "delta-score" / "manifest.json").string())}},
                   {{"path", "delta-consistency"},
                    {"manifest_sha256",
                     sha256_file((dir / "delta-consistency" / "manifest.json").string())}}}}});
        }
        NamedDelta new_cum = add_deltas(cum_, contribution);

        // (d) validation metrics for every model this iteration produced
        std::string ite = "ite-" + std::to_string(k);
        if (k == 1) {
            auto model = apply_delta(*base_, new_cum);
            rec.rows.push_back(eval_row(*model, ite + " score", dir / "predictions_score.jsonl"));
        } else {
            auto score_model = apply_delta(*base_, add_deltas(cum_, score_delta));
            rec.rows.push_back(
                eval_row(*score_model, ite + " score", dir / "predictions_score.jsonl"));
            auto cons_model = apply_delta(*base_, add_deltas(cum_, cons_delta));
            rec.rows.push_back(eval_row(*cons_model, ite + " consistency",
                                        dir / "predictions_consistency.jsonl"));
            auto merged_model = apply_delta(*base_, new_cum);
            rec.rows.push_back(
                eval_row(*merged_model, ite + " merged", dir / "predictions_merged.jsonl"));
        }
        write_json(dir / "metrics.json", {{"rows", rows_to_json(rec.rows)}});

        rec.artifacts = hash_tree(dir);
        cum_ = std::move(new_cum);
        done_.push_back(std::move(rec));
        save_state();
    }

    PipelineConfig config_;
    DatasetManifest manifest_;
    std::vector<ScoredImage> train_, val_;
    std::vector<double> train_scores_;
    BinningScheme scheme_;
    std::unique_ptr<Backend> base_;
    std::unique_ptr<JudgeProvider> provider_;
    std::string manifest_sha_;
    fs::path out_;

    NamedDelta cum_;
    std::optional<MetricsRow> zero_shot_row_;
    std::map<std::string, std::string> zero_shot_artifacts_;
    std::vector<IterationRecord> done_;
};

}  // namespace

RunReport run_full(const PipelineConfig& config) {
    PipelineRun run(config);
    return run.run();
}

}  // namespace selfscore
