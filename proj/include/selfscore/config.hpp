#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "selfscore/backend.hpp"
#include "selfscore/dpo.hpp"
#include "selfscore/judge.hpp"
#include "selfscore/ties.hpp"
#include "selfscore/toy_backend.hpp"

namespace selfscore {

// Sectioned key=value file. '#' and ';' lines are comments; keys before the
// first section header land in the "" section.
class IniFile {
public:
    static IniFile from_file(const std::string& path);
    static IniFile from_string(const std::string& text, const std::string& origin = "<string>");

    bool has(const std::string& section, const std::string& key) const;
    std::string get(const std::string& section, const std::string& key,
                    const std::string& fallback) const;
    std::string get_required(const std::string& section, const std::string& key) const;
    double get_double(const std::string& section, const std::string& key, double fallback) const;
    long get_long(const std::string& section, const std::string& key, long fallback) const;
    bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
    std::uint64_t get_u64(const std::string& section, const std::string& key,
                          std::uint64_t fallback) const;

    using Sections = std::map<std::string, std::map<std::string, std::string>>;
    const Sections& sections() const { return sections_; }

private:
    Sections sections_;
    std::string origin_;
};

struct JudgeSettings {
    std::string provider = "none";  // none | stub | http
    std::string stub_reply;         // empty -> provider default
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string path = "/v1/complete";
    JudgeOptions options;
};

struct PipelineConfig {
    std::string manifest;
    std::string backend_kind = "toy";
    ToyConfig toy;
    AdapterSpec adapter = AdapterSpec::for_rank(64);
    TrainConfig train_score;
    TrainConfig train_consistency;
    MergeConfig merge;
    GenerationParams gen;
    double score_fraction = 0.25;
    double consistency_fraction_of_score = 0.30;
    int min_distance = 3;
    int max_retries = 1;
    int iterations = 1;
    std::string out = "out";
    std::uint64_t seed = 0;
    JudgeSettings judge;
};

PipelineConfig pipeline_config_from_ini(const IniFile& ini);
// from_ini plus the SELFSCORE_OUT environment override.
PipelineConfig load_pipeline_config(const std::string& path);

void validate_pipeline_config(const PipelineConfig& config);

nlohmann::json pipeline_config_to_json(const PipelineConfig& config);

std::unique_ptr<Backend> make_backend(const PipelineConfig& config);
std::unique_ptr<JudgeProvider> make_judge_provider(const JudgeSettings& judge);

}  // namespace selfscore
