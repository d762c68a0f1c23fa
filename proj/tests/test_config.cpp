#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <string>

#include <selfscore/config.hpp>
#include <selfscore/errors.hpp>

#include "temp_dir.hpp"

using namespace selfscore;

namespace {

const char* kFullConfig = R"(# full pipeline configuration
[data]
manifest = data/train.jsonl
score_fraction = 0.5
consistency_fraction_of_score = 0.25
min_distance = 2
max_retries = 3

[backend]
kind = toy
weight_seed = 99
context_chars = 4096
smoothing = 0.05
tier_blend = 0.5
rank = 8

[train]
lr = 0.01
epochs = 3
batch_size = 32

[train.score]
epochs = 5

[train.consistency]
lr = 0.002
mean_normalize = true

[merge]
weights = 2, 1
density = 0.75
sign_method = mass

[generate]
max_new_tokens = 64

[judge]
provider = stub
sample_cap = 10
concurrency = 2

[run]
iterations = 4
out = scratch/run
seed = 1234
)";

}  // namespace

TEST_CASE("ini files parse sections, comments, and loose spacing") {
    IniFile ini = IniFile::from_string(
        "top = level\n"
        "; semicolon comment\n"
        "# hash comment\n"
        "\n"
        "[ alpha ]\n"
        "  key =  value with spaces  \n"
        "eq = a=b\n"
        "[beta]\n"
        "flag = on\n",
        "test.cfg");

    CHECK(ini.has("", "top"));
    CHECK(ini.get("", "top", "") == "level");
    CHECK(ini.get("alpha", "key", "") == "value with spaces");
    CHECK(ini.get("alpha", "eq", "") == "a=b");
    CHECK(ini.get_bool("beta", "flag", false) == true);
    CHECK_FALSE(ini.has("alpha", "missing"));
    CHECK(ini.get("alpha", "missing", "fallback") == "fallback");
    CHECK(ini.get("gamma", "anything", "fb") == "fb");
    CHECK(ini.get_required("alpha", "key") == "value with spaces");
}

TEST_CASE("typed getters parse or fall back") {
    IniFile ini = IniFile::from_string(
        "[n]\n"
        "d = 2.5\n"
        "l = -12\n"
        "hex = 0x10\n"
        "u = 18446744073709551615\n"
        "t = yes\n"
        "f = 0\n"
        "badnum = 1.5x\n"
        "badbool = maybe\n");

    CHECK(ini.get_double("n", "d", 0.0) == 2.5);
    CHECK(ini.get_double("n", "absent", 7.0) == 7.0);
    CHECK(ini.get_long("n", "l", 0) == -12);
    CHECK(ini.get_long("n", "hex", 0) == 16);
    CHECK(ini.get_u64("n", "u", 0) == 18446744073709551615ULL);
    CHECK(ini.get_bool("n", "t", false) == true);
    CHECK(ini.get_bool("n", "f", true) == false);
    CHECK(ini.get_bool("n", "absent", true) == true);

    CHECK_THROWS_AS(ini.get_double("n", "badnum", 0.0), ConfigError);
    CHECK_THROWS_AS(ini.get_long("n", "d", 0), ConfigError);
    CHECK_THROWS_AS(ini.get_bool("n", "badbool", false), ConfigError);
}

TEST_CASE("ini syntax errors carry the origin and line") {
    auto message_of = [](const char* text) {
        try {
            IniFile::from_string(text, "broken.cfg");
            return std::string("no error");
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
    };

    CHECK(message_of("[unterminated\n") == "broken.cfg:1: unterminated section header");
    CHECK(message_of("[s]\nnot a pair\n") == "broken.cfg:2: expected key = value");
    CHECK(message_of("[s]\n= bare value\n") == "broken.cfg:2: empty key");
    CHECK(message_of("[s]\nk = 1\nk = 2\n") == "broken.cfg:3: duplicate key 'k' in [s]");

    try {
        IniFile ini = IniFile::from_string("[s]\n", "need.cfg");
        ini.get_required("s", "gone");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("need.cfg") != std::string::npos);
        CHECK(std::string(e.what()).find("'gone'") != std::string::npos);
    }
}

TEST_CASE("the pipeline config maps every section onto its struct") {
    PipelineConfig c = pipeline_config_from_ini(IniFile::from_string(kFullConfig));

    CHECK(c.manifest == "data/train.jsonl");
    CHECK(c.score_fraction == 0.5);
    CHECK(c.consistency_fraction_of_score == 0.25);
    CHECK(c.min_distance == 2);
    CHECK(c.max_retries == 3);

    CHECK(c.backend_kind == "toy");
    CHECK(c.toy.weight_seed == 99);
    CHECK(c.toy.context_chars == 4096);
    CHECK(c.toy.smoothing == 0.05);
    CHECK(c.toy.tier_blend == 0.5);
    CHECK(c.adapter.rank == 8);
    CHECK(c.adapter.alpha == 16);

    // [train] seeds both specialists, the per-task sections override
    CHECK(c.train_score.lr == 0.01);
    CHECK(c.train_score.epochs == 5);
    CHECK(c.train_score.batch_size == 32);
    CHECK(c.train_score.mean_normalize == false);
    CHECK(c.train_consistency.lr == 0.002);
    CHECK(c.train_consistency.epochs == 3);
    CHECK(c.train_consistency.batch_size == 32);
    CHECK(c.train_consistency.mean_normalize == true);

    CHECK(c.merge.weights == std::vector<double>{2.0, 1.0});
    CHECK(c.merge.density == 0.75);
    CHECK(c.merge.sign_method == SignMethod::mass);

    CHECK(c.gen.max_new_tokens == 64);
    CHECK(c.iterations == 4);
    CHECK(c.out == "scratch/run");
    CHECK(c.seed == 1234);
    CHECK(c.judge.provider == "stub");
    CHECK(c.judge.options.sample_cap == 10);
    CHECK(c.judge.options.concurrency == 2);

    SUBCASE("defaults survive an empty file") {
        PipelineConfig d = pipeline_config_from_ini(IniFile::from_string(""));
        CHECK(d.backend_kind == "toy");
        CHECK(d.score_fraction == 0.25);
        CHECK(d.consistency_fraction_of_score == 0.30);
        CHECK(d.min_distance == 3);
        CHECK(d.adapter.rank == 64);
        CHECK(d.adapter.alpha == 128);
        CHECK(d.train_score.lr == 5e-5);
        CHECK(d.train_score.beta == 0.1);
        CHECK(d.train_score.batch_size == 128);
        CHECK(d.train_score.lr_decay_per_iteration == 0.8);
        CHECK(d.merge.weights == std::vector<double>{1.0, 1.0});
        CHECK(d.merge.density == 0.5);
        CHECK(d.merge.sign_method == SignMethod::frequency);
        CHECK(d.gen.max_new_tokens == 256);
        CHECK(d.judge.provider == "none");
    }
}

TEST_CASE("unknown sections and keys are rejected") {
    CHECK_THROWS_AS(pipeline_config_from_ini(IniFile::from_string("[mystery]\nk = v\n")),
                    ConfigError);
    CHECK_THROWS_AS(pipeline_config_from_ini(IniFile::from_string("[data]\ntypo_key = v\n")),
                    ConfigError);
    CHECK_THROWS_AS(pipeline_config_from_ini(IniFile::from_string("[merge]\nweights = 1,oops\n")),
                    ConfigError);
    CHECK_THROWS_AS(pipeline_config_from_ini(IniFile::from_string("[merge]\nweights =\n")),
                    ConfigError);
    CHECK_THROWS_AS(
        pipeline_config_from_ini(IniFile::from_string("[merge]\nsign_method = median\n")),
        ConfigError);
    CHECK_THROWS_AS(pipeline_config_from_ini(IniFile::from_string("[train]\nmode = rlhf\n")),
                    ConfigError);
}

TEST_CASE("pipeline validation flags out-of-range settings") {
    PipelineConfig good;
    good.manifest = "m.jsonl";
    CHECK_NOTHROW(validate_pipeline_config(good));

    auto expect_reject = [&](auto mutate) {
        PipelineConfig c = good;
        mutate(c);
        CHECK_THROWS_AS(validate_pipeline_config(c), ConfigError);
    };
    expect_reject([](PipelineConfig& c) { c.score_fraction = 0.0; });
    expect_reject([](PipelineConfig& c) { c.score_fraction = 1.5; });
    expect_reject([](PipelineConfig& c) { c.consistency_fraction_of_score = 0.0; });
    expect_reject([](PipelineConfig& c) { c.iterations = 0; });
    expect_reject([](PipelineConfig& c) { c.min_distance = 0; });
    expect_reject([](PipelineConfig& c) { c.adapter = AdapterSpec{0, 0, "all_linear"}; });
    expect_reject([](PipelineConfig& c) { c.backend_kind = "gpt"; });
    expect_reject([](PipelineConfig& c) { c.judge.provider = "oracle"; });
    expect_reject([](PipelineConfig& c) { c.out = ""; });
}

TEST_CASE("the environment can relocate the output tree") {
    TempDir tmp;
    {
        std::ofstream out(tmp.str("run.cfg"), std::ios::binary);
        out << kFullConfig;
    }

    unsetenv("SELFSCORE_OUT");
    CHECK(load_pipeline_config(tmp.str("run.cfg")).out == "scratch/run");

    setenv("SELFSCORE_OUT", "/elsewhere/run", 1);
    CHECK(load_pipeline_config(tmp.str("run.cfg")).out == "/elsewhere/run");

    setenv("SELFSCORE_OUT", "", 1);
    CHECK(load_pipeline_config(tmp.str("run.cfg")).out == "scratch/run");
    unsetenv("SELFSCORE_OUT");

    CHECK_THROWS_AS(load_pipeline_config(tmp.str("absent.cfg")), ConfigError);
}

TEST_CASE("the config snapshot covers the reproducibility surface") {
    PipelineConfig c = pipeline_config_from_ini(IniFile::from_string(kFullConfig));
    nlohmann::json j = pipeline_config_to_json(c);

    CHECK(j.at("manifest") == "data/train.jsonl");
    CHECK(j.at("backend").at("kind") == "toy");
    CHECK(j.at("backend").at("rank") == 8);
    CHECK(j.at("backend").at("alpha") == 16);
    CHECK(j.at("train_score").at("epochs") == 5);
    CHECK(j.at("train_consistency").at("lr") == 0.002);
    CHECK(j.at("merge").at("sign_method") == "mass");
    CHECK(j.at("generate").at("max_new_tokens") == 64);
    CHECK(j.at("score_fraction") == 0.5);
    CHECK(j.at("consistency_fraction_of_score") == 0.25);
    CHECK(j.at("min_distance") == 2);
    CHECK(j.at("iterations") == 4);
    CHECK(j.at("seed") == 1234);
    CHECK(j.at("judge").at("provider") == "stub");
}

TEST_CASE("factories build the configured collaborators") {
    PipelineConfig c;
    auto backend = make_backend(c);
    REQUIRE(backend != nullptr);
    CHECK(backend->id().find("toy") != std::string::npos);

    c.backend_kind = "other";
    CHECK_THROWS_AS(make_backend(c), ConfigError);

    JudgeSettings none;
    CHECK(make_judge_provider(none) == nullptr);

    JudgeSettings stub;
    stub.provider = "stub";
    auto provider = make_judge_provider(stub);
    REQUIRE(provider != nullptr);
    CHECK(provider->complete("ignored").find("consistency") != std::string::npos);

    stub.stub_reply = R"({"consistency": "excellent", "usefulness": "excellent", "general": "excellent"})";
    auto custom = make_judge_provider(stub);
    CHECK(custom->complete("ignored").find("excellent") != std::string::npos);

    JudgeSettings http;
    http.provider = "http";
    CHECK(make_judge_provider(http) != nullptr);

    JudgeSettings bogus;
    bogus.provider = "psychic";
    CHECK_THROWS_AS(make_judge_provider(bogus), ConfigError);
}
