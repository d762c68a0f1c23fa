#include "selfscore/judge.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <mutex>
#include <optional>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "selfscore/errors.hpp"
#include "selfscore/prompting.hpp"
#include "selfscore/rng.hpp"

namespace selfscore {

namespace {

void substitute_first(std::string& text, const std::string& placeholder,
                      const std::string& value) {
    auto at = text.find(placeholder);
    if (at == std::string::npos)
        throw Error("judge prompt resource lacks placeholder " + placeholder);
    text.replace(at, placeholder.size(), value);
}

}  // namespace

std::string render_judge_prompt(int score_bin, const std::string& explanation) {
    if (score_bin < 0 || score_bin > 9) throw BinOutOfRange(score_bin);
    std::string text(judge_prompt_text());
    substitute_first(text, "{score}", std::to_string(score_bin));
    substitute_first(text, "{text}", explanation);
    return text;
}

namespace {

std::string first_json_object(const std::string& text) {
    std::size_t start = text.find('{');
    while (start != std::string::npos) {
        int depth = 0;
        bool in_string = false;
        bool escaped = false;
        for (std::size_t i = start; i < text.size(); ++i) {
            char ch = text[i];
            if (in_string) {
                if (escaped) escaped = false;
                else if (ch == '\\') escaped = true;
                else if (ch == '"') in_string = false;
                continue;
            }
            if (ch == '"') in_string = true;
            else if (ch == '{') ++depth;
            else if (ch == '}') {
                if (--depth == 0) return text.substr(start, i - start + 1);
            }
        }
        start = text.find('{', start + 1);
    }
    throw JudgeFormatError("no JSON object in judge reply");
}

int rating_to_int(const nlohmann::json& obj, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end())
        throw JudgeFormatError(std::string("judge reply lacks key '") + key + "'");
    if (!it->is_string())
        throw JudgeFormatError(std::string("judge rating for '") + key + "' is not a string");
    std::string word = it->get<std::string>();
    std::transform(word.begin(), word.end(), word.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (word == "bad") return 0;
    if (word == "poor") return 1;
    if (word == "fair") return 2;
    if (word == "good") return 3;
    if (word == "excellent") return 4;
    throw JudgeFormatError("unknown rating word '" + word + "'");
}

}  // namespace

JudgeVerdict parse_judge_json(const std::string& text) {
    nlohmann::json obj;
    try {
        obj = nlohmann::json::parse(first_json_object(text));
    } catch (const nlohmann::json::exception& e) {
        throw JudgeFormatError(std::string("judge reply is not valid JSON: ") + e.what());
    }
    JudgeVerdict v;
    v.consistency = rating_to_int(obj, "consistency");
    v.usefulness = rating_to_int(obj, "usefulness");
    v.general = rating_to_int(obj, "general");
    return v;
}

StubJudgeProvider::StubJudgeProvider()
    : reply_(R"({"consistency": "poor", "usefulness": "good", "general": "fair"})") {}

StubJudgeProvider::StubJudgeProvider(std::string reply) : reply_(std::move(reply)) {}

std::string StubJudgeProvider::complete(const std::string&) {
    calls_.fetch_add(1);
    return reply_;
}

HttpJudgeProvider::HttpJudgeProvider(std::string host, int port, std::string path)
    : host_(std::move(host)), port_(port), path_(std::move(path)) {}

std::string HttpJudgeProvider::complete(const std::string& prompt) {
    httplib::Client client(host_, port_);
    client.set_connection_timeout(10, 0);
    client.set_read_timeout(60, 0);
    nlohmann::json body = {{"prompt", prompt}};
    auto res = client.Post(path_, body.dump(), "application/json");
    if (!res) throw ProviderError("judge endpoint unreachable: " + host_);
    if (res->status != 200)
        throw ProviderError("judge endpoint returned status " + std::to_string(res->status));
    try {
        return nlohmann::json::parse(res->body).at("text").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw ProviderError(std::string("malformed judge endpoint response: ") + e.what());
    }
}

namespace {

// Enforces a minimum spacing between provider calls across worker threads.
class RateGate {
public:
    explicit RateGate(int min_interval_ms) : interval_(min_interval_ms) {}

    void pass() {
        if (interval_.count() <= 0) return;
        std::chrono::steady_clock::time_point wake;
        {
            std::lock_guard<std::mutex> lock(mu_);
            auto now = std::chrono::steady_clock::now();
            next_ = std::max(next_, now);
            wake = next_;
            next_ += interval_;
        }
        std::this_thread::sleep_until(wake);
    }

private:
    std::mutex mu_;
    std::chrono::milliseconds interval_;
    std::chrono::steady_clock::time_point next_ = std::chrono::steady_clock::now();
};

}  // namespace

JudgeResult judge_batch(JudgeProvider& provider, const std::vector<PredictionRecord>& records,
                        const JudgeOptions& options) {
    if (options.max_attempts < 1) throw ConfigError("max_attempts must be >= 1");
    if (options.concurrency < 1) throw ConfigError("concurrency must be >= 1");
    if (records.empty()) throw AllFailed("no records to judge");

    std::vector<std::size_t> kept;
    if (records.size() > options.sample_cap) {
        Rng rng(derive_seed(options.seed, "judge-subsample"));
        kept = rng.sample_indices(records.size(), options.sample_cap);
    } else {
        kept.resize(records.size());
        for (std::size_t i = 0; i < kept.size(); ++i) kept[i] = i;
    }

    std::vector<std::optional<JudgeVerdict>> slots(kept.size());
    std::atomic<std::size_t> cursor{0};
    RateGate gate(options.min_interval_ms);

    auto worker = [&]() {
        for (;;) {
            std::size_t slot = cursor.fetch_add(1);
            if (slot >= kept.size()) return;
            const PredictionRecord& rec = records[kept[slot]];
            std::string prompt = render_judge_prompt(rec.predicted_bin, rec.explanation);
            for (int attempt = 0; attempt < options.max_attempts; ++attempt) {
                if (attempt > 0)
                    std::this_thread::sleep_for(std::chrono::milliseconds(
                        options.backoff_initial_ms << (attempt - 1)));
                try {
                    gate.pass();
                    slots[slot] = parse_judge_json(provider.complete(prompt));
                    break;
                } catch (const ProviderError&) {
                } catch (const JudgeFormatError&) {
                }
            }
        }
    };

    std::size_t nthreads = std::min<std::size_t>(
        static_cast<std::size_t>(options.concurrency), kept.size());
    std::vector<std::thread> pool;
    pool.reserve(nthreads);
    for (std::size_t i = 0; i < nthreads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();

    JudgeResult result;
    double c = 0.0, u = 0.0, g = 0.0;
    for (std::size_t slot = 0; slot < kept.size(); ++slot) {
        if (!slots[slot]) {
            ++result.failures;
            continue;
        }
        const JudgeVerdict& v = *slots[slot];
        c += v.consistency;
        u += v.usefulness;
        g += v.general;
        result.verdicts.emplace(records[kept[slot]].image_id, v);
        ++result.judged;
    }
    if (result.judged == 0) throw AllFailed("no judge verdict could be parsed");
    result.mean_consistency = c / static_cast<double>(result.judged);
    result.mean_usefulness = u / static_cast<double>(result.judged);
    result.mean_general = g / static_cast<double>(result.judged);
    return result;
}

}  // namespace selfscore
