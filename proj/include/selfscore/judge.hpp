#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "selfscore/evaluate.hpp"

namespace selfscore {

struct JudgeVerdict {
    int consistency = 0;
    int usefulness = 0;
    int general = 0;

    bool operator==(const JudgeVerdict&) const = default;
};

// Appendix prompt with {score} and {text} substituted.
std::string render_judge_prompt(int score_bin, const std::string& explanation);

// Extracts the first balanced JSON object from the reply and maps the rating
// words onto 0..4.
JudgeVerdict parse_judge_json(const std::string& text);

// Single text completion per request; transport problems surface as
// ProviderError.
class JudgeProvider {
public:
    virtual ~JudgeProvider() = default;
    virtual std::string complete(const std::string& prompt) = 0;
};

class StubJudgeProvider : public JudgeProvider {
public:
    StubJudgeProvider();
    explicit StubJudgeProvider(std::string reply);
    std::string complete(const std::string& prompt) override;
    long calls() const { return calls_.load(); }

private:
    std::string reply_;
    std::atomic<long> calls_{0};
};

class HttpJudgeProvider : public JudgeProvider {
public:
    HttpJudgeProvider(std::string host, int port, std::string path = "/v1/complete");
    std::string complete(const std::string& prompt) override;

private:
    std::string host_;
    int port_;
    std::string path_;
};

struct JudgeOptions {
    std::size_t sample_cap = 1000;
    int max_attempts = 3;
    int backoff_initial_ms = 250;
    int concurrency = 4;
    int min_interval_ms = 0;  // global floor between provider calls
    std::uint64_t seed = 0;
};

struct JudgeResult {
    double mean_consistency = 0.0;
    double mean_usefulness = 0.0;
    double mean_general = 0.0;
    std::size_t judged = 0;
    std::size_t failures = 0;
    std::map<std::string, JudgeVerdict> verdicts;  // by image_id
};

// Seeded down-sample to min(sample_cap, N), one judged completion per kept
// record with bounded retries; per-record failures are counted, not fatal.
JudgeResult judge_batch(JudgeProvider& provider, const std::vector<PredictionRecord>& records,
                        const JudgeOptions& options = {});

}  // namespace selfscore
