#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include <selfscore/digest.hpp>
#include <selfscore/errors.hpp>
#include <selfscore/pipeline.hpp>
#include <selfscore/toy_backend.hpp>

#include "temp_dir.hpp"

using namespace selfscore;
namespace fs = std::filesystem;

namespace {

PipelineConfig toy_config(const std::string& manifest, const std::string& out) {
    PipelineConfig c;
    c.manifest = manifest;
    c.adapter = AdapterSpec::for_rank(4);
    c.train_score.lr = 0.05;  // desk-scale rate; the published value targets full-size models
    c.train_score.batch_size = 16;
    c.train_score.epochs = 40;
    c.train_consistency = c.train_score;
    c.iterations = 2;
    c.out = out;
    c.seed = 7;
    c.judge.provider = "stub";
    return c;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::string rows_fingerprint(const std::vector<MetricsRow>& rows) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : rows) arr.push_back(metrics_row_to_json(r));
    return arr.dump();
}

nlohmann::json read_json(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    return nlohmann::json::parse(in);
}

// Shared two-iteration run; building it once keeps the suite quick.
struct PipelineWorld {
    TempDir tmp;
    std::string manifest_path;
    PipelineConfig config;
    RunReport first;

    PipelineWorld()
        : manifest_path((tmp.path / "manifest.jsonl").string()),
          config([&] {
              save_manifest(make_toy_manifest(200, 5, "toy-200"), manifest_path);
              return toy_config(manifest_path, (tmp.path / "run1").string());
          }()),
          first(run_full(config)) {}

    static PipelineWorld& instance() {
        static PipelineWorld world;
        return world;
    }

    std::string out(const std::string& rel) const {
        return (fs::path(config.out) / rel).string();
    }
};

const MetricsRow& row_labeled(const std::vector<MetricsRow>& rows, const std::string& label) {
    for (const auto& r : rows)
        if (r.label == label) return r;
    REQUIRE_MESSAGE(false, "no row labeled " << label);
    static MetricsRow dummy;
    return dummy;
}

}  // namespace

TEST_CASE("two toy iterations lift rank correlation from chance level") {
    auto& world = PipelineWorld::instance();
    const RunReport& report = world.first;

    CHECK(report.iterations_completed == 2);
    CHECK(report.iterations_executed == 2);
    CHECK(report.out == world.config.out);
    REQUIRE(report.rows.size() == 5);

    CHECK(report.rows[0].label == "zero-shot");
    CHECK(std::abs(report.rows[0].srcc) < 0.3);

    const MetricsRow& ite1 = row_labeled(report.rows, "ite-1 score");
    CHECK(ite1.srcc > 0.8);

    const MetricsRow& score2 = row_labeled(report.rows, "ite-2 score");
    const MetricsRow& merged2 = row_labeled(report.rows, "ite-2 merged");
    row_labeled(report.rows, "ite-2 consistency");
    CHECK(std::abs(merged2.srcc - score2.srcc) <= 0.1);

    for (const auto& r : report.rows) {
        CHECK(r.n == 30);
        CHECK(r.backend_failures == 0);
        CHECK(r.has_judge);
        CHECK(r.cons == 1.0);
        CHECK(r.use == 3.0);
        CHECK(r.gen == 2.0);
        CHECK(r.judge_failures == 0);
    }
}

TEST_CASE("the first iteration trains on score pairs only") {
    auto& world = PipelineWorld::instance();

    CHECK(fs::exists(world.out("codec.json")));
    CHECK(fs::exists(world.out("predictions_zero_shot.jsonl")));
    CHECK(fs::exists(world.out("ite-1/data/score_train.jsonl")));
    CHECK(fs::exists(world.out("ite-1/delta-score")));
    CHECK_FALSE(fs::exists(world.out("ite-1/data/consistency_train.jsonl")));
    CHECK_FALSE(fs::exists(world.out("ite-1/delta-consistency")));

    CHECK(fs::exists(world.out("ite-2/data/consistency_train.jsonl")));
    CHECK(fs::exists(world.out("ite-2/delta-consistency")));
    CHECK(fs::exists(world.out("ite-2/delta-merged")));
    CHECK(fs::exists(world.out("report.txt")));

    SUBCASE("sampled shares follow the ceil-rounded fractions") {
        nlohmann::json m1 = read_json(world.out("ite-1/data/manifest.json"));
        CHECK(m1.at("iteration") == 1);
        CHECK(m1.at("stats").at("sampled") == 35);  // ceil(0.25 * 140)
        CHECK(m1.at("stats").at("written_score") == 35);
        CHECK(m1.at("stats").at("consistency_kept") == 0);
        CHECK(m1.at("stats").at("dropped") == 0);
        CHECK(m1.at("stats").at("failed") == 0);
        CHECK(m1.at("files").count("consistency_train.jsonl") == 0);

        nlohmann::json m2 = read_json(world.out("ite-2/data/manifest.json"));
        CHECK(m2.at("stats").at("written_score") == 35);
        CHECK(m2.at("stats").at("consistency_generated") == 35);
        CHECK(m2.at("stats").at("consistency_kept") == 11);  // ceil(0.30 * 35)
        CHECK(m2.at("files").count("consistency_train.jsonl") == 1);
    }

    SUBCASE("the second iteration generates with the first iteration's model") {
        nlohmann::json m1 = read_json(world.out("ite-1/data/manifest.json"));
        CHECK(m1.at("generator_delta_chain").size() == 0);
        nlohmann::json m2 = read_json(world.out("ite-2/data/manifest.json"));
        REQUIRE(m2.at("generator_delta_chain").size() == 1);
        CHECK(m2.at("generator_delta_chain")[0].at("path") == "ite-1/delta-score");
    }
}

TEST_CASE("finished runs resume without recomputation and extend incrementally") {
    auto& world = PipelineWorld::instance();

    RunReport again = run_full(world.config);
    CHECK(again.iterations_executed == 0);
    CHECK(again.iterations_completed == 2);
    CHECK(rows_fingerprint(again.rows) == rows_fingerprint(world.first.rows));

    SUBCASE("a third iteration appends to a copied tree") {
        fs::path extended = world.tmp.path / "run-extend";
        fs::copy(world.config.out, extended, fs::copy_options::recursive);
        PipelineConfig config = world.config;
        config.out = extended.string();
        config.iterations = 3;

        RunReport more = run_full(config);
        CHECK(more.iterations_executed == 1);
        CHECK(more.iterations_completed == 3);
        REQUIRE(more.rows.size() == 8);
        for (std::size_t i = 0; i < world.first.rows.size(); ++i)
            CHECK(metrics_row_to_json(more.rows[i]) == metrics_row_to_json(world.first.rows[i]));
        CHECK(more.rows[5].label == "ite-3 score");
        CHECK(more.rows[7].label == "ite-3 merged");
    }

    SUBCASE("a tampered artifact forces that iteration to rerun") {
        fs::path damaged = world.tmp.path / "run-tamper";
        fs::copy(world.config.out, damaged, fs::copy_options::recursive);
        {
            std::ofstream out(damaged / "ite-2" / "predictions_score.jsonl",
                              std::ios::binary | std::ios::app);
            out << "x";
        }
        PipelineConfig config = world.config;
        config.out = damaged.string();

        RunReport redo = run_full(config);
        CHECK(redo.iterations_executed == 1);
        CHECK(redo.iterations_completed == 2);
        CHECK(rows_fingerprint(redo.rows) == rows_fingerprint(world.first.rows));
    }
}

TEST_CASE("state files pin the configuration and the source data") {
    auto& world = PipelineWorld::instance();

    SUBCASE("a changed setting refuses to resume") {
        PipelineConfig other = world.config;
        other.seed = 8;
        try {
            run_full(other);
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find("refusing to resume") != std::string::npos);
        }
    }

    SUBCASE("iteration count and output location may change freely") {
        fs::path shortened = world.tmp.path / "run-short";
        fs::copy(world.config.out, shortened, fs::copy_options::recursive);
        PipelineConfig other = world.config;
        other.out = shortened.string();
        other.iterations = 1;
        RunReport shorter = run_full(other);
        CHECK(shorter.iterations_executed == 0);
        REQUIRE(shorter.rows.size() == 2);  // zero-shot + ite-1, ite-2 kept on disk
        CHECK(rows_fingerprint(shorter.rows) ==
              rows_fingerprint({world.first.rows[0], world.first.rows[1]}));
    }

    SUBCASE("a rewritten manifest refuses to resume") {
        std::string original = read_file(world.manifest_path);
        save_manifest(make_toy_manifest(200, 6, "toy-200"), world.manifest_path);
        try {
            run_full(world.config);
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find("manifest changed") != std::string::npos);
        }
        std::ofstream out(world.manifest_path, std::ios::binary);
        out << original;
    }
}

TEST_CASE("identically seeded runs reproduce every artifact bit for bit") {
    auto& world = PipelineWorld::instance();
    PipelineConfig config = world.config;
    config.out = (world.tmp.path / "run2").string();
    RunReport second = run_full(config);

    CHECK(rows_fingerprint(second.rows) == rows_fingerprint(world.first.rows));

    const char* files[] = {
        "codec.json",
        "predictions_zero_shot.jsonl",
        "ite-1/data/score_train.jsonl",
        "ite-1/delta-score/train_report.json",
        "ite-2/data/score_train.jsonl",
        "ite-2/data/consistency_train.jsonl",
        "ite-2/delta-score/train_report.json",
        "ite-2/delta-consistency/train_report.json",
        "ite-2/predictions_merged.jsonl",
        "report.txt",
        "state.json",
    };
    for (const char* rel : files) {
        CAPTURE(rel);
        CHECK(sha256_file(world.out(rel)) ==
              sha256_file((fs::path(config.out) / rel).string()));
    }
}

TEST_CASE("degenerate inputs are rejected before any work") {
    TempDir tmp;

    PipelineConfig missing;
    CHECK_THROWS_AS(run_full(missing), ConfigError);

    DatasetManifest train_only;
    train_only.name = "train-only";
    for (int i = 0; i < 12; ++i) {
        ScoredImage rec;
        rec.image_id = "t" + std::to_string(i);
        rec.image_uri = "file:///nowhere/" + std::to_string(i) + ".jpg";
        rec.raw_score = static_cast<double>(i);
        rec.split = Split::train;
        train_only.records.push_back(rec);
    }
    train_only.counts.train = train_only.records.size();
    save_manifest(train_only, tmp.str("train_only.jsonl"));
    PipelineConfig no_val = toy_config(tmp.str("train_only.jsonl"), tmp.str("out"));
    CHECK_THROWS_AS(run_full(no_val), ConfigError);
}

TEST_CASE("metrics rows serialize and tabulate") {
    MetricsRow plain;
    plain.label = "zero-shot";
    plain.plcc = 0.1234;
    plain.srcc = -0.05;
    plain.rmse = 1.75;
    plain.n = 30;

    MetricsRow judged = plain;
    judged.label = "ite-1 score";
    judged.has_judge = true;
    judged.cons = 1.0;
    judged.use = 3.0;
    judged.gen = 2.0;
    judged.judge_failures = 4;

    nlohmann::json jp = metrics_row_to_json(plain);
    CHECK(jp.at("cons").is_null());
    MetricsRow plain2 = metrics_row_from_json(jp);
    CHECK_FALSE(plain2.has_judge);
    CHECK(metrics_row_to_json(plain2) == jp);

    nlohmann::json jj = metrics_row_to_json(judged);
    CHECK(jj.at("cons") == 1.0);
    MetricsRow judged2 = metrics_row_from_json(jj);
    CHECK(judged2.has_judge);
    CHECK(judged2.judge_failures == 4);
    CHECK(metrics_row_to_json(judged2) == jj);

    std::string table = format_metrics_table({plain, judged});
    CHECK(table.find("model") != std::string::npos);
    CHECK(table.find("plcc") != std::string::npos);
    CHECK(table.find("zero-shot") != std::string::npos);
    CHECK(table.find("ite-1 score") != std::string::npos);
    CHECK(table.find('-') != std::string::npos);
    CHECK(std::count(table.begin(), table.end(), '\n') == 4);  // header, rule, two rows
}
