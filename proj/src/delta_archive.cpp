#include "selfscore/delta_archive.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "selfscore/digest.hpp"
#include "selfscore/errors.hpp"

namespace selfscore {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

static_assert(sizeof(double) == 8);

std::string sanitize(const std::string& name) {
    std::string out;
    for (char c : name)
        out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-') ? c : '_';
    return out;
}

// Row-major little-endian float64 bytes.
std::string matrix_bytes(const Eigen::MatrixXd& m) {
    std::string bytes(static_cast<std::size_t>(m.size()) * 8, '\0');
    std::size_t off = 0;
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            double v = m(r, c);
            std::uint64_t u;
            std::memcpy(&u, &v, 8);
            for (int k = 0; k < 8; ++k) bytes[off++] = static_cast<char>((u >> (8 * k)) & 0xff);
        }
    return bytes;
}

Eigen::MatrixXd matrix_from_bytes(const std::string& bytes, Eigen::Index rows, Eigen::Index cols) {
    if (bytes.size() != static_cast<std::size_t>(rows * cols) * 8)
        throw SchemaMismatch("array file size does not match declared shape");
    Eigen::MatrixXd m(rows, cols);
    std::size_t off = 0;
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) {
            std::uint64_t u = 0;
            for (int k = 0; k < 8; ++k)
                u |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[off++])) << (8 * k);
            double v;
            std::memcpy(&v, &u, 8);
            m(r, c) = v;
        }
    return m;
}

json metadata_to_json(const DeltaMetadata& md) {
    return {{"base_id", md.base_id},
            {"adapter",
             {{"rank", md.adapter.rank},
              {"alpha", md.adapter.alpha},
              {"target_scope", md.adapter.target_scope}}},
            {"iteration", md.iteration},
            {"provenance", md.provenance}};
}

DeltaMetadata metadata_from_json(const json& j) {
    DeltaMetadata md;
    md.base_id = j.at("base_id").get<std::string>();
    md.adapter.rank = j.at("adapter").at("rank").get<int>();
    md.adapter.alpha = j.at("adapter").at("alpha").get<int>();
    md.adapter.target_scope = j.at("adapter").at("target_scope").get<std::string>();
    md.iteration = j.at("iteration").get<int>();
    md.provenance = j.at("provenance").get<std::string>();
    return md;
}

}  // namespace

void save_delta(const NamedDelta& delta, const std::string& dir) {
    fs::create_directories(dir);
    json manifest;
    manifest["format"] = "selfscore-delta-v1";
    manifest["metadata"] = metadata_to_json(delta.metadata);
    json params = json::array();
    std::size_t idx = 0;
    for (const auto& [name, array] : delta.entries) {
        if (!array.allFinite()) throw Error("delta entry '" + name + "' has non-finite values");
        std::string file = "p" + std::to_string(idx++) + "_" + sanitize(name) + ".bin";
        std::string bytes = matrix_bytes(array);
        std::ofstream out(fs::path(dir) / file, std::ios::binary);
        if (!out) throw Error("cannot write " + file + " in " + dir);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw Error("write failed for " + file);
        params.push_back({{"name", name},
                          {"rows", array.rows()},
                          {"cols", array.cols()},
                          {"dtype", "float64"},
                          {"order", "row_major"},
                          {"byte_order", "little"},
                          {"file", file},
                          {"sha256", sha256_hex(bytes)}});
    }
    manifest["params"] = params;
    std::ofstream out(fs::path(dir) / "manifest.json", std::ios::binary);
    if (!out) throw Error("cannot write manifest.json in " + dir);
    out << manifest.dump(2) << '\n';
}

NamedDelta load_delta(const std::string& dir) {
    std::ifstream in(fs::path(dir) / "manifest.json");
    if (!in) throw Error("cannot open delta manifest in " + dir);
    json manifest;
    try {
        in >> manifest;
    } catch (const json::parse_error& e) {
        throw SchemaMismatch(std::string("bad delta manifest: ") + e.what());
    }
    NamedDelta delta;
    try {
        if (manifest.at("format").get<std::string>() != "selfscore-delta-v1")
            throw SchemaMismatch("unknown delta archive format");
        delta.metadata = metadata_from_json(manifest.at("metadata"));
        for (const auto& p : manifest.at("params")) {
            auto name = p.at("name").get<std::string>();
            auto rows = p.at("rows").get<Eigen::Index>();
            auto cols = p.at("cols").get<Eigen::Index>();
            if (p.at("dtype").get<std::string>() != "float64" ||
                p.at("order").get<std::string>() != "row_major" ||
                p.at("byte_order").get<std::string>() != "little")
                throw SchemaMismatch("unsupported array encoding for '" + name + "'");
            std::ifstream fin(fs::path(dir) / p.at("file").get<std::string>(), std::ios::binary);
            if (!fin) throw Error("cannot open array file for '" + name + "'");
            std::string bytes((std::istreambuf_iterator<char>(fin)), std::istreambuf_iterator<char>());
            if (sha256_hex(bytes) != p.at("sha256").get<std::string>())
                throw SchemaMismatch("checksum mismatch for '" + name + "'");
            if (!delta.entries.emplace(name, matrix_from_bytes(bytes, rows, cols)).second)
                throw SchemaMismatch("duplicate parameter '" + name + "'");
        }
    } catch (const json::exception& e) {
        throw SchemaMismatch(std::string("bad delta manifest: ") + e.what());
    }
    return delta;
}

}  // namespace selfscore
