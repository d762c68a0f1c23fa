#include "selfscore/preference.hpp"

#include <cmath>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "selfscore/digest.hpp"
#include "selfscore/errors.hpp"
#include "selfscore/prompting.hpp"

namespace selfscore {

using json = nlohmann::json;

const char* to_string(PairKind kind) {
    return kind == PairKind::score ? "score" : "consistency";
}

PairKind pair_kind_from_string(const std::string& s) {
    if (s == "score") return PairKind::score;
    if (s == "consistency") return PairKind::consistency;
    throw Error("unknown pair kind '" + s + "'");
}

int sample_incorrect_bin(int gt_bin, Rng& rng, int min_distance) {
    if (gt_bin < 0 || gt_bin > 9) throw BinOutOfRange(gt_bin);
    if (min_distance < 1) throw ConfigError("min_distance must be >= 1");
    int allowed[10];
    int n = 0;
    for (int b = 0; b < 10; ++b)
        if (std::abs(b - gt_bin) >= min_distance) allowed[n++] = b;
    if (n == 0)
        throw EmptyAllowedSet("no bin lies at distance >= " + std::to_string(min_distance) +
                              " from " + std::to_string(gt_bin));
    return allowed[rng.next_below(static_cast<std::uint64_t>(n))];
}

namespace {

// Generates "#Score: <bin>\n#Explain: ..." and validates it parses back to bin.
std::string conditioned_response(Backend& backend, const std::string& image_uri, int bin,
                                 const PairBuildOptions& opt) {
    std::string head = "#Score: ";
    head += static_cast<char>('0' + bin);
    head += "\n#Explain:";
    std::string last_error;
    for (int attempt = 0; attempt <= opt.max_retries; ++attempt) {
        std::string text = head + backend.generate(image_uri, render_conditioned_prefix(bin), opt.gen);
        try {
            ParsedResponse parsed = parse_response(text);
            if (parsed.score_bin != bin)
                throw FormatError("generation declares bin " + std::to_string(parsed.score_bin) +
                                  " instead of " + std::to_string(bin));
            return text;
        } catch (const FormatError& e) {
            last_error = e.what();
        }
    }
    throw GenerationFormatError("generation unparsable after retries: " + last_error);
}

}  // namespace

PreferencePair build_score_pair(Backend& backend, const ScoredImage& image,
                                const BinningScheme& scheme, Rng& rng,
                                const PairBuildOptions& opt) {
    PreferencePair pair;
    pair.image_id = image.image_id;
    pair.image_uri = image.image_uri;
    pair.prompt = render_scoring_prompt();
    pair.gt_bin = encode_bin(scheme, image.raw_score);
    pair.rejected_bin = sample_incorrect_bin(pair.gt_bin, rng, opt.min_distance);
    pair.chosen = conditioned_response(backend, image.image_uri, pair.gt_bin, opt);
    pair.rejected = conditioned_response(backend, image.image_uri, pair.rejected_bin, opt);
    pair.kind = PairKind::score;
    return pair;
}

PreferencePair derive_consistency_pair(const PreferencePair& pair) {
    if (pair.kind != PairKind::score)
        throw Error("consistency pairs derive from score pairs");
    PreferencePair out = pair;
    out.rejected = replace_score_token(pair.rejected, pair.gt_bin);
    out.kind = PairKind::consistency;
    if (out.chosen == out.rejected)
        throw GenerationFormatError("consistency pair collapsed to identical texts");
    return out;
}

namespace {

json header_record(const std::vector<PreferencePair>& pairs, const std::string& prompt,
                   const std::string& generator) {
    json images = json::object();
    for (const auto& p : pairs) images[p.image_id] = p.image_uri;
    return {{"schema", "selfscore-pairs-v1"},
            {"prompt", prompt},
            {"prompt_sha256", sha256_hex(prompt)},
            {"images", images},
            {"generator", generator}};
}

}  // namespace

void save_pairs(const std::vector<PreferencePair>& pairs, const std::string& path,
                const std::string& generator) {
    if (pairs.empty()) throw Error("refusing to write empty pair file: " + path);
    const std::string& prompt = pairs.front().prompt;
    std::string sha = sha256_hex(prompt);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write pair file: " + path);
    out << header_record(pairs, prompt, generator).dump() << '\n';
    for (const auto& p : pairs) {
        if (p.prompt != prompt) throw DatasetSchemaError("pairs disagree on the prompt text");
        json row = {{"image_id", p.image_id}, {"prompt_sha256", sha},   {"chosen", p.chosen},
                    {"rejected", p.rejected}, {"gt_bin", p.gt_bin},     {"rejected_bin", p.rejected_bin},
                    {"kind", to_string(p.kind)}};
        out << row.dump() << '\n';
    }
    if (!out) throw Error("write failed: " + path);
}

namespace {

json read_header(std::ifstream& in, const std::string& path) {
    std::string line;
    if (!std::getline(in, line)) throw DatasetSchemaError("empty pair file: " + path);
    json header;
    try {
        header = json::parse(line);
    } catch (const json::parse_error& e) {
        throw DatasetSchemaError(std::string("bad pair file header: ") + e.what());
    }
    if (!header.is_object() || header.value("schema", "") != "selfscore-pairs-v1")
        throw DatasetSchemaError("pair file missing selfscore-pairs-v1 header");
    if (sha256_hex(header.at("prompt").get<std::string>()) !=
        header.at("prompt_sha256").get<std::string>())
        throw DatasetSchemaError("header prompt checksum mismatch");
    return header;
}

}  // namespace

std::vector<PreferencePair> load_pairs(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open pair file: " + path);
    json header = read_header(in, path);
    std::string prompt = header.at("prompt").get<std::string>();
    std::string sha = header.at("prompt_sha256").get<std::string>();
    const json& images = header.at("images");

    std::vector<PreferencePair> pairs;
    std::string line;
    std::size_t lineno = 1;
    try {
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            json row = json::parse(line);
            PreferencePair p;
            p.image_id = row.at("image_id").get<std::string>();
            if (row.at("prompt_sha256").get<std::string>() != sha)
                throw DatasetSchemaError("row prompt checksum differs from header");
            if (!images.contains(p.image_id))
                throw DatasetSchemaError("image '" + p.image_id + "' missing from header map");
            p.image_uri = images.at(p.image_id).get<std::string>();
            p.prompt = prompt;
            p.chosen = row.at("chosen").get<std::string>();
            p.rejected = row.at("rejected").get<std::string>();
            p.gt_bin = row.at("gt_bin").get<int>();
            p.rejected_bin = row.at("rejected_bin").get<int>();
            p.kind = pair_kind_from_string(row.at("kind").get<std::string>());
            if (p.gt_bin < 0 || p.gt_bin > 9 || p.rejected_bin < 0 || p.rejected_bin > 9)
                throw DatasetSchemaError("bin out of range at line " + std::to_string(lineno));
            pairs.push_back(std::move(p));
        }
    } catch (const json::exception& e) {
        throw DatasetSchemaError("bad pair row at line " + std::to_string(lineno) + ": " + e.what());
    }
    return pairs;
}

std::string pair_file_generator(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open pair file: " + path);
    return read_header(in, path).value("generator", "");
}

std::size_t ceil_fraction(double fraction, std::size_t n) {
    if (fraction <= 0.0 || fraction > 1.0) throw ConfigError("fraction must lie in (0, 1]");
    // ceil(fraction * n); the 1e-9 slack absorbs binary rounding in the product.
    auto count = static_cast<std::size_t>(
        std::ceil(fraction * static_cast<double>(n) - 1e-9));
    if (count == 0 && n > 0) count = 1;
    if (count > n) count = n;
    return count;
}

BuildStats build_dataset(Backend& backend, const std::vector<ScoredImage>& records,
                         const BinningScheme& scheme, std::uint64_t seed,
                         const DatasetBuildOptions& opt, const std::string& score_path,
                         const std::string& consistency_path) {
    if (records.empty()) throw Error("no records to build pairs from");
    if (opt.fraction <= 0.0 || opt.fraction > 1.0)
        throw ConfigError("fraction must lie in (0, 1]");

    const std::size_t n = records.size();
    std::size_t count = ceil_fraction(opt.fraction, n);

    Rng subsample_rng(derive_seed(seed, "pair-subsample"));
    std::vector<std::size_t> picked = subsample_rng.sample_indices(n, count);

    Rng bin_rng(derive_seed(seed, "rejected-bins"));
    BuildStats stats;
    stats.sampled = picked.size();
    std::vector<PreferencePair> score_pairs;
    std::vector<PreferencePair> consistency_pairs;
    for (std::size_t idx : picked) {
        PreferencePair pair;
        try {
            pair = build_score_pair(backend, records[idx], scheme, bin_rng, opt.pair);
        } catch (const GenerationFormatError&) {
            ++stats.dropped;
            continue;
        } catch (const BackendFailure&) {
            ++stats.failed;
            continue;
        } catch (const ContextOverflow&) {
            ++stats.failed;
            continue;
        } catch (const TokenizationError&) {
            ++stats.failed;
            continue;
        }
        if (opt.write_consistency) {
            try {
                consistency_pairs.push_back(derive_consistency_pair(pair));
            } catch (const Error&) {
                score_pairs.push_back(std::move(pair));
                ++stats.dropped;
                continue;
            }
        }
        score_pairs.push_back(std::move(pair));
    }
    if (score_pairs.empty()) throw Error("every record failed pair generation");

    save_pairs(score_pairs, score_path, opt.generator);
    stats.written_score = score_pairs.size();
    if (opt.write_consistency) {
        save_pairs(consistency_pairs, consistency_path, opt.generator);
        stats.written_consistency = consistency_pairs.size();
    }
    return stats;
}

}  // namespace selfscore
