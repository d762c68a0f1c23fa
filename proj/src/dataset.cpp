#include "selfscore/dataset.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "selfscore/errors.hpp"

namespace selfscore {

using json = nlohmann::json;

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw Error("unknown split '" + s + "'");
}

const char* to_string(Split split) {
    switch (split) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "?";
}

double compute_mean_score(const std::vector<double>& ratings) {
    if (ratings.empty()) throw EmptyRatings();
    double sum = 0.0;
    for (double r : ratings) {
        if (!std::isfinite(r)) throw Error("non-finite rating");
        sum += r;
    }
    return sum / static_cast<double>(ratings.size());
}

namespace {

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& s, std::size_t line) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw ParseError(line, "bad number '" + s + "'");
    return v;
}

// Fills raw_score from either the explicit field or the ratings list.
double resolve_score(bool has_raw, double raw, bool has_ratings,
                     const std::vector<double>& ratings, std::size_t line) {
    if (has_raw) {
        if (!std::isfinite(raw)) throw ParseError(line, "raw_score not finite");
        return raw;
    }
    if (!has_ratings) throw MissingField("raw_score or ratings");
    try {
        return compute_mean_score(ratings);
    } catch (const Error& e) {
        throw ParseError(line, e.what());
    }
}

void finalize(DatasetManifest& m, const std::string& path) {
    if (m.records.empty()) throw ParseError(0, "manifest '" + path + "' has no records");
    m.counts = {};
    for (const auto& r : m.records) {
        switch (r.split) {
            case Split::train: ++m.counts.train; break;
            case Split::val: ++m.counts.val; break;
            case Split::test: ++m.counts.test; break;
        }
    }
}

DatasetManifest load_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open manifest: " + path);
    DatasetManifest m;
    m.name = std::filesystem::path(path).stem().string();
    std::unordered_set<std::string> seen;
    std::string lstr;
    std::size_t lineno = 0;
    while (std::getline(in, lstr)) {
        ++lineno;
        if (lstr.empty()) continue;
        json row;
        try {
            row = json::parse(lstr);
        } catch (const json::parse_error& e) {
            throw ParseError(lineno, e.what());
        }
        if (!row.is_object()) throw ParseError(lineno, "row is not an object");
        for (const char* field : {"image_id", "image_uri", "split"})
            if (!row.contains(field)) throw MissingField(field);

        ScoredImage rec;
        try {
            rec.image_id = row.at("image_id").get<std::string>();
            rec.image_uri = row.at("image_uri").get<std::string>();
            rec.split = split_from_string(row.at("split").get<std::string>());

            bool has_raw = row.contains("raw_score") && !row.at("raw_score").is_null();
            bool has_ratings = row.contains("ratings") && !row.at("ratings").is_null();
            std::vector<double> ratings;
            if (has_ratings) ratings = row.at("ratings").get<std::vector<double>>();
            rec.raw_score = resolve_score(has_raw, has_raw ? row.at("raw_score").get<double>() : 0.0,
                                          has_ratings, ratings, lineno);
        } catch (const ParseError&) {
            throw;
        } catch (const json::exception& e) {
            throw ParseError(lineno, e.what());
        } catch (const Error& e) {
            throw ParseError(lineno, e.what());
        }
        if (!seen.insert(rec.image_id).second) throw DuplicateId(rec.image_id);
        m.records.push_back(std::move(rec));
    }
    finalize(m, path);
    return m;
}

std::vector<std::string> parse_csv_line(const std::string& lstr, std::size_t lineno) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < lstr.size(); ++i) {
        char c = lstr[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < lstr.size() && lstr[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            if (!cur.empty()) throw ParseError(lineno, "stray quote");
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (quoted) throw ParseError(lineno, "unterminated quote");
    fields.push_back(std::move(cur));
    return fields;
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

const char* kCsvHeader = "image_id,image_uri,raw_score,ratings,split";

DatasetManifest load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open manifest: " + path);
    DatasetManifest m;
    m.name = std::filesystem::path(path).stem().string();
    std::unordered_set<std::string> seen;
    std::string lstr;
    std::size_t lineno = 0;

    if (!std::getline(in, lstr)) throw ParseError(0, "empty file");
    ++lineno;
    if (!lstr.empty() && lstr.back() == '\r') lstr.pop_back();
    auto header = parse_csv_line(lstr, lineno);
    std::size_t col[5];
    const char* names[5] = {"image_id", "image_uri", "raw_score", "ratings", "split"};
    for (int k = 0; k < 5; ++k) {
        auto it = std::find(header.begin(), header.end(), names[k]);
        if (it == header.end()) throw MissingField(names[k]);
        col[k] = static_cast<std::size_t>(it - header.begin());
    }

    while (std::getline(in, lstr)) {
        ++lineno;
        if (!lstr.empty() && lstr.back() == '\r') lstr.pop_back();
        if (lstr.empty()) continue;
        auto fields = parse_csv_line(lstr, lineno);
        if (fields.size() != header.size())
            throw ParseError(lineno, "expected " + std::to_string(header.size()) + " fields, got " +
                                         std::to_string(fields.size()));
        ScoredImage rec;
        rec.image_id = fields[col[0]];
        rec.image_uri = fields[col[1]];
        rec.split = [&] {
            try {
                return split_from_string(fields[col[4]]);
            } catch (const Error& e) {
                throw ParseError(lineno, e.what());
            }
        }();

        const std::string& raw_str = fields[col[2]];
        const std::string& ratings_str = fields[col[3]];
        bool has_raw = !raw_str.empty();
        bool has_ratings = !ratings_str.empty();
        std::vector<double> ratings;
        if (has_ratings) {
            std::stringstream ss(ratings_str);
            std::string tok;
            while (std::getline(ss, tok, ';')) ratings.push_back(parse_double(tok, lineno));
        }
        rec.raw_score = resolve_score(has_raw, has_raw ? parse_double(raw_str, lineno) : 0.0,
                                      has_ratings, ratings, lineno);
        if (!seen.insert(rec.image_id).second) throw DuplicateId(rec.image_id);
        m.records.push_back(std::move(rec));
    }
    finalize(m, path);
    return m;
}

ManifestFormat format_from_path(const std::string& path) {
    auto ext = std::filesystem::path(path).extension().string();
    if (ext == ".csv") return ManifestFormat::csv;
    if (ext == ".jsonl") return ManifestFormat::jsonl;
    throw Error("cannot infer manifest format from extension '" + ext + "'");
}

}  // namespace

DatasetManifest load_manifest(const std::string& path, ManifestFormat format) {
    return format == ManifestFormat::csv ? load_csv(path) : load_jsonl(path);
}

DatasetManifest load_manifest(const std::string& path) {
    return load_manifest(path, format_from_path(path));
}

void save_manifest(const DatasetManifest& manifest, const std::string& path, ManifestFormat format) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write manifest: " + path);
    if (format == ManifestFormat::csv) {
        out << kCsvHeader << '\n';
        for (const auto& r : manifest.records)
            out << csv_escape(r.image_id) << ',' << csv_escape(r.image_uri) << ','
                << format_double(r.raw_score) << ",," << to_string(r.split) << '\n';
    } else {
        for (const auto& r : manifest.records) {
            json row = {{"image_id", r.image_id},
                        {"image_uri", r.image_uri},
                        {"raw_score", r.raw_score},
                        {"ratings", nullptr},
                        {"split", to_string(r.split)}};
            out << row.dump() << '\n';
        }
    }
    if (!out) throw Error("write failed: " + path);
}

void save_manifest(const DatasetManifest& manifest, const std::string& path) {
    save_manifest(manifest, path, format_from_path(path));
}

std::vector<ScoredImage> split_filter(const DatasetManifest& manifest, Split split) {
    std::vector<ScoredImage> out;
    for (const auto& r : manifest.records)
        if (r.split == split) out.push_back(r);
    return out;
}

}  // namespace selfscore
