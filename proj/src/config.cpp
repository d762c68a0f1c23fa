#include "selfscore/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "selfscore/errors.hpp"

namespace selfscore {

namespace {

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

IniFile IniFile::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_string(buf.str(), path);
}

IniFile IniFile::from_string(const std::string& text, const std::string& origin) {
    IniFile ini;
    ini.origin_ = origin;
    std::istringstream in(text);
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw ConfigError(origin + ":" + std::to_string(lineno) +
                                  ": unterminated section header");
            section = trim(t.substr(1, t.size() - 2));
            ini.sections_[section];
            continue;
        }
        auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (key.empty())
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
        if (!ini.sections_[section].emplace(key, value).second)
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key +
                              "' in [" + section + "]");
    }
    return ini;
}

bool IniFile::has(const std::string& section, const std::string& key) const {
    auto s = sections_.find(section);
    return s != sections_.end() && s->second.count(key) > 0;
}

std::string IniFile::get(const std::string& section, const std::string& key,
                         const std::string& fallback) const {
    auto s = sections_.find(section);
    if (s == sections_.end()) return fallback;
    auto k = s->second.find(key);
    return k == s->second.end() ? fallback : k->second;
}

std::string IniFile::get_required(const std::string& section, const std::string& key) const {
    if (!has(section, key))
        throw ConfigError(origin_ + ": missing required key '" + key + "' in [" + section + "]");
    return get(section, key, "");
}

namespace {

template <typename T, typename Fn>
T parse_or_throw(const std::string& section, const std::string& key, const std::string& value,
                 Fn fn) {
    try {
        std::size_t pos = 0;
        T out = fn(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing characters");
        return out;
    } catch (const std::exception&) {
        throw ConfigError("[" + section + "] " + key + ": cannot parse '" + value + "'");
    }
}

}  // namespace

double IniFile::get_double(const std::string& section, const std::string& key,
                           double fallback) const {
    if (!has(section, key)) return fallback;
    return parse_or_throw<double>(section, key, get(section, key, ""),
                                  [](const std::string& v, std::size_t* pos) {
                                      return std::stod(v, pos);
                                  });
}

long IniFile::get_long(const std::string& section, const std::string& key, long fallback) const {
    if (!has(section, key)) return fallback;
    return parse_or_throw<long>(section, key, get(section, key, ""),
                                [](const std::string& v, std::size_t* pos) {
                                    return std::stol(v, pos, 0);
                                });
}

std::uint64_t IniFile::get_u64(const std::string& section, const std::string& key,
                               std::uint64_t fallback) const {
    if (!has(section, key)) return fallback;
    return parse_or_throw<std::uint64_t>(section, key, get(section, key, ""),
                                         [](const std::string& v, std::size_t* pos) {
                                             return std::stoull(v, pos, 0);
                                         });
}

bool IniFile::get_bool(const std::string& section, const std::string& key, bool fallback) const {
    if (!has(section, key)) return fallback;
    std::string v = get(section, key, "");
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("[" + section + "] " + key + ": cannot parse '" + v + "' as bool");
}

namespace {

const std::map<std::string, std::set<std::string>>& known_keys() {
    static const std::map<std::string, std::set<std::string>> keys = {
        {"data", {"manifest", "score_fraction", "consistency_fraction_of_score", "min_distance",
                  "max_retries"}},
        {"backend", {"kind", "weight_seed", "context_chars", "smoothing", "tier_blend", "rank"}},
        {"train", {"beta", "lr", "batch_size", "epochs", "lr_decay_per_iteration", "mode",
                   "mean_normalize", "adam_beta1", "adam_beta2", "adam_eps"}},
        {"train.score", {"beta", "lr", "batch_size", "epochs", "lr_decay_per_iteration", "mode",
                         "mean_normalize", "adam_beta1", "adam_beta2", "adam_eps"}},
        {"train.consistency", {"beta", "lr", "batch_size", "epochs", "lr_decay_per_iteration",
                               "mode", "mean_normalize", "adam_beta1", "adam_beta2", "adam_eps"}},
        {"merge", {"weights", "density", "sign_method"}},
        {"generate", {"max_new_tokens"}},
        {"judge", {"provider", "stub_reply", "host", "port", "path", "sample_cap", "concurrency",
                   "max_attempts", "backoff_initial_ms", "min_interval_ms"}},
        {"run", {"iterations", "out", "seed"}},
    };
    return keys;
}

void reject_unknown(const IniFile& ini) {
    for (const auto& [section, entries] : ini.sections()) {
        auto it = known_keys().find(section);
        if (it == known_keys().end())
            throw ConfigError("unknown config section [" + section + "]");
        for (const auto& [key, value] : entries)
            if (it->second.count(key) == 0)
                throw ConfigError("unknown key '" + key + "' in [" + section + "]");
    }
}

void apply_train_section(TrainConfig& t, const IniFile& ini, const std::string& section) {
    t.beta = ini.get_double(section, "beta", t.beta);
    t.lr = ini.get_double(section, "lr", t.lr);
    t.batch_size = static_cast<int>(ini.get_long(section, "batch_size", t.batch_size));
    t.epochs = static_cast<int>(ini.get_long(section, "epochs", t.epochs));
    t.lr_decay_per_iteration =
        ini.get_double(section, "lr_decay_per_iteration", t.lr_decay_per_iteration);
    if (ini.has(section, "mode")) t.mode = train_mode_from_string(ini.get(section, "mode", ""));
    t.mean_normalize = ini.get_bool(section, "mean_normalize", t.mean_normalize);
    t.adam_beta1 = ini.get_double(section, "adam_beta1", t.adam_beta1);
    t.adam_beta2 = ini.get_double(section, "adam_beta2", t.adam_beta2);
    t.adam_eps = ini.get_double(section, "adam_eps", t.adam_eps);
}

std::vector<double> parse_weights(const std::string& csv) {
    std::vector<double> out;
    std::istringstream in(csv);
    std::string part;
    while (std::getline(in, part, ',')) {
        try {
            std::size_t pos = 0;
            out.push_back(std::stod(part, &pos));
            if (pos != part.size()) throw std::invalid_argument("trailing characters");
        } catch (const std::exception&) {
            throw ConfigError("[merge] weights: cannot parse '" + part + "'");
        }
    }
    if (out.empty()) throw ConfigError("[merge] weights: empty list");
    return out;
}

}  // namespace

PipelineConfig pipeline_config_from_ini(const IniFile& ini) {
    reject_unknown(ini);
    PipelineConfig c;
    c.manifest = ini.get("data", "manifest", c.manifest);
    c.score_fraction = ini.get_double("data", "score_fraction", c.score_fraction);
    c.consistency_fraction_of_score =
        ini.get_double("data", "consistency_fraction_of_score", c.consistency_fraction_of_score);
    c.min_distance = static_cast<int>(ini.get_long("data", "min_distance", c.min_distance));
    c.max_retries = static_cast<int>(ini.get_long("data", "max_retries", c.max_retries));

    c.backend_kind = ini.get("backend", "kind", c.backend_kind);
    c.toy.weight_seed = ini.get_u64("backend", "weight_seed", c.toy.weight_seed);
    c.toy.context_chars =
        static_cast<int>(ini.get_long("backend", "context_chars", c.toy.context_chars));
    c.toy.smoothing = ini.get_double("backend", "smoothing", c.toy.smoothing);
    c.toy.tier_blend = ini.get_double("backend", "tier_blend", c.toy.tier_blend);
    c.adapter = AdapterSpec::for_rank(static_cast<int>(ini.get_long("backend", "rank", 64)));

    TrainConfig base;
    apply_train_section(base, ini, "train");
    c.train_score = base;
    apply_train_section(c.train_score, ini, "train.score");
    c.train_consistency = base;
    apply_train_section(c.train_consistency, ini, "train.consistency");

    if (ini.has("merge", "weights"))
        c.merge.weights = parse_weights(ini.get("merge", "weights", ""));
    c.merge.density = ini.get_double("merge", "density", c.merge.density);
    if (ini.has("merge", "sign_method"))
        c.merge.sign_method = sign_method_from_string(ini.get("merge", "sign_method", ""));

    c.gen.max_new_tokens =
        static_cast<int>(ini.get_long("generate", "max_new_tokens", c.gen.max_new_tokens));

    c.iterations = static_cast<int>(ini.get_long("run", "iterations", c.iterations));
    c.out = ini.get("run", "out", c.out);
    c.seed = ini.get_u64("run", "seed", c.seed);

    c.judge.provider = ini.get("judge", "provider", c.judge.provider);
    c.judge.stub_reply = ini.get("judge", "stub_reply", c.judge.stub_reply);
    c.judge.host = ini.get("judge", "host", c.judge.host);
    c.judge.port = static_cast<int>(ini.get_long("judge", "port", c.judge.port));
    c.judge.path = ini.get("judge", "path", c.judge.path);
    c.judge.options.sample_cap = static_cast<std::size_t>(
        ini.get_long("judge", "sample_cap", static_cast<long>(c.judge.options.sample_cap)));
    c.judge.options.concurrency =
        static_cast<int>(ini.get_long("judge", "concurrency", c.judge.options.concurrency));
    c.judge.options.max_attempts =
        static_cast<int>(ini.get_long("judge", "max_attempts", c.judge.options.max_attempts));
    c.judge.options.backoff_initial_ms = static_cast<int>(
        ini.get_long("judge", "backoff_initial_ms", c.judge.options.backoff_initial_ms));
    c.judge.options.min_interval_ms = static_cast<int>(
        ini.get_long("judge", "min_interval_ms", c.judge.options.min_interval_ms));
    return c;
}

PipelineConfig load_pipeline_config(const std::string& path) {
    PipelineConfig c = pipeline_config_from_ini(IniFile::from_file(path));
    if (const char* out = std::getenv("SELFSCORE_OUT"); out != nullptr && out[0] != '\0')
        c.out = out;
    return c;
}

void validate_pipeline_config(const PipelineConfig& c) {
    if (!(c.score_fraction > 0.0 && c.score_fraction <= 1.0))
        throw ConfigError("score_fraction must be in (0, 1]");
    if (!(c.consistency_fraction_of_score > 0.0 && c.consistency_fraction_of_score <= 1.0))
        throw ConfigError("consistency_fraction_of_score must be in (0, 1]");
    if (c.iterations < 1) throw ConfigError("iterations must be >= 1");
    if (c.min_distance < 1) throw ConfigError("min_distance must be >= 1");
    if (c.adapter.rank < 1) throw ConfigError("rank must be >= 1");
    if (c.backend_kind != "toy") throw ConfigError("unknown backend kind '" + c.backend_kind + "'");
    if (c.judge.provider != "none" && c.judge.provider != "stub" && c.judge.provider != "http")
        throw ConfigError("unknown judge provider '" + c.judge.provider + "'");
    if (c.out.empty()) throw ConfigError("output root must not be empty");
}

nlohmann::json pipeline_config_to_json(const PipelineConfig& c) {
    return {{"manifest", c.manifest},
            {"backend",
             {{"kind", c.backend_kind},
              {"weight_seed", c.toy.weight_seed},
              {"context_chars", c.toy.context_chars},
              {"smoothing", c.toy.smoothing},
              {"tier_blend", c.toy.tier_blend},
              {"rank", c.adapter.rank},
              {"alpha", c.adapter.alpha}}},
            {"train_score", train_config_to_json(c.train_score)},
            {"train_consistency", train_config_to_json(c.train_consistency)},
            {"merge", merge_config_to_json(c.merge)},
            {"generate", {{"max_new_tokens", c.gen.max_new_tokens}}},
            {"score_fraction", c.score_fraction},
            {"consistency_fraction_of_score", c.consistency_fraction_of_score},
            {"min_distance", c.min_distance},
            {"max_retries", c.max_retries},
            {"iterations", c.iterations},
            {"out", c.out},
            {"seed", c.seed},
            {"judge",
             {{"provider", c.judge.provider},
              {"sample_cap", c.judge.options.sample_cap},
              {"concurrency", c.judge.options.concurrency}}}};
}

std::unique_ptr<Backend> make_backend(const PipelineConfig& config) {
    if (config.backend_kind != "toy")
        throw ConfigError("unknown backend kind '" + config.backend_kind + "'");
    return std::make_unique<ToyBackend>(config.toy);
}

std::unique_ptr<JudgeProvider> make_judge_provider(const JudgeSettings& judge) {
    if (judge.provider == "none") return nullptr;
    if (judge.provider == "stub") {
        if (judge.stub_reply.empty()) return std::make_unique<StubJudgeProvider>();
        return std::make_unique<StubJudgeProvider>(judge.stub_reply);
    }
    if (judge.provider == "http")
        return std::make_unique<HttpJudgeProvider>(judge.host, judge.port, judge.path);
    throw ConfigError("unknown judge provider '" + judge.provider + "'");
}

}  // namespace selfscore
