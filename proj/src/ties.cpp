#include "selfscore/ties.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "selfscore/errors.hpp"

namespace selfscore {

const char* to_string(SignMethod method) {
    return method == SignMethod::frequency ? "frequency" : "mass";
}

SignMethod sign_method_from_string(const std::string& s) {
    if (s == "frequency") return SignMethod::frequency;
    if (s == "mass") return SignMethod::mass;
    throw ConfigError("unknown sign method '" + s + "'");
}

nlohmann::json merge_config_to_json(const MergeConfig& config) {
    return {{"weights", config.weights},
            {"density", config.density},
            {"sign_method", to_string(config.sign_method)}};
}

namespace {

// Sorting addends before accumulation makes every reduction independent of
// the order the deltas were supplied in.
double canonical_sum(std::vector<double>& values) {
    std::sort(values.begin(), values.end());
    double s = 0.0;
    for (double v : values) s += v;
    return s;
}

void check_same_schema(const std::vector<NamedDelta>& deltas) {
    const auto& first = deltas.front().entries;
    for (std::size_t k = 1; k < deltas.size(); ++k) {
        const auto& other = deltas[k].entries;
        if (other.size() != first.size())
            throw SchemaMismatch("deltas disagree on parameter count");
        for (const auto& [name, tensor] : first) {
            auto it = other.find(name);
            if (it == other.end()) throw SchemaMismatch("missing parameter '" + name + "'");
            if (it->second.rows() != tensor.rows() || it->second.cols() != tensor.cols())
                throw SchemaMismatch("shape mismatch for '" + name + "'");
        }
    }
}

}  // namespace

NamedDelta trim(const NamedDelta& delta, double density) {
    if (!(density > 0.0 && density <= 1.0)) throw ConfigError("density must be in (0, 1]");
    NamedDelta out = delta;
    for (auto& [name, tensor] : out.entries) {
        const Eigen::Index n = tensor.size();
        if (n == 0) continue;
        const auto k = static_cast<Eigen::Index>(
            std::ceil(density * static_cast<double>(n)));
        if (k >= n) continue;
        const Eigen::Index cols = tensor.cols();
        std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
        std::iota(idx.begin(), idx.end(), Eigen::Index{0});
        auto value_at = [&](Eigen::Index flat) { return tensor(flat / cols, flat % cols); };
        std::sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) {
            double ma = std::abs(value_at(a)), mb = std::abs(value_at(b));
            return ma != mb ? ma > mb : a < b;
        });
        for (Eigen::Index j = k; j < n; ++j) tensor(idx[j] / cols, idx[j] % cols) = 0.0;
    }
    return out;
}

std::map<std::string, Eigen::MatrixXd> elect_sign(const std::vector<NamedDelta>& trimmed,
                                                  SignMethod method) {
    if (trimmed.empty()) throw ConfigError("elect_sign needs at least one delta");
    check_same_schema(trimmed);
    std::map<std::string, Eigen::MatrixXd> signs;
    std::vector<double> pos, neg, all;
    for (const auto& [name, first] : trimmed.front().entries) {
        Eigen::MatrixXd s = Eigen::MatrixXd::Zero(first.rows(), first.cols());
        for (Eigen::Index r = 0; r < first.rows(); ++r) {
            for (Eigen::Index c = 0; c < first.cols(); ++c) {
                pos.clear();
                neg.clear();
                all.clear();
                for (const auto& d : trimmed) {
                    double v = d.entries.at(name)(r, c);
                    if (v > 0.0) pos.push_back(v);
                    else if (v < 0.0) neg.push_back(-v);
                    all.push_back(v);
                }
                if (pos.empty() && neg.empty()) continue;
                if (method == SignMethod::mass) {
                    double sum = canonical_sum(all);
                    s(r, c) = sum > 0.0 ? 1.0 : (sum < 0.0 ? -1.0 : 0.0);
                } else if (pos.size() != neg.size()) {
                    s(r, c) = pos.size() > neg.size() ? 1.0 : -1.0;
                } else {
                    double pm = canonical_sum(pos), nm = canonical_sum(neg);
                    s(r, c) = nm > pm ? -1.0 : 1.0;
                }
            }
        }
        signs.emplace(name, std::move(s));
    }
    return signs;
}

NamedDelta disjoint_merge(const std::vector<NamedDelta>& trimmed,
                          const std::map<std::string, Eigen::MatrixXd>& signs,
                          const std::vector<double>& weights) {
    if (trimmed.empty()) throw ConfigError("disjoint_merge needs at least one delta");
    if (weights.size() != trimmed.size())
        throw ConfigError("weights length must match the number of deltas");
    check_same_schema(trimmed);

    NamedDelta out;
    out.metadata = trimmed.front().metadata;
    std::vector<double> agree;
    for (const auto& [name, first] : trimmed.front().entries) {
        auto sit = signs.find(name);
        if (sit == signs.end()) throw SchemaMismatch("no elected signs for '" + name + "'");
        const Eigen::MatrixXd& s = sit->second;
        if (s.rows() != first.rows() || s.cols() != first.cols())
            throw SchemaMismatch("sign shape mismatch for '" + name + "'");
        Eigen::MatrixXd merged = Eigen::MatrixXd::Zero(first.rows(), first.cols());
        for (Eigen::Index r = 0; r < first.rows(); ++r) {
            for (Eigen::Index c = 0; c < first.cols(); ++c) {
                double elected = s(r, c);
                if (elected == 0.0) continue;
                agree.clear();
                for (std::size_t k = 0; k < trimmed.size(); ++k) {
                    double v = trimmed[k].entries.at(name)(r, c);
                    if ((elected > 0.0 && v > 0.0) || (elected < 0.0 && v < 0.0))
                        agree.push_back(weights[k] * v);
                }
                if (!agree.empty())
                    merged(r, c) = canonical_sum(agree) / static_cast<double>(agree.size());
            }
        }
        out.entries.emplace(name, std::move(merged));
    }
    return out;
}

NamedDelta ties_merge(const std::vector<NamedDelta>& deltas, const MergeConfig& config) {
    if (deltas.size() < 2) throw ConfigError("ties_merge needs at least two deltas");
    if (!(config.density > 0.0 && config.density <= 1.0))
        throw ConfigError("density must be in (0, 1]");
    if (config.weights.size() != deltas.size())
        throw ConfigError("weights length must match the number of deltas");
    for (double w : config.weights)
        if (!std::isfinite(w)) throw ConfigError("weights must be finite");
    check_same_schema(deltas);

    std::string base_id;
    for (const auto& d : deltas) {
        if (d.metadata.base_id.empty()) continue;
        if (base_id.empty()) base_id = d.metadata.base_id;
        else if (base_id != d.metadata.base_id)
            throw SchemaMismatch("deltas come from different base models");
    }

    std::vector<NamedDelta> trimmed;
    trimmed.reserve(deltas.size());
    for (const auto& d : deltas) trimmed.push_back(trim(d, config.density));
    auto signs = elect_sign(trimmed, config.sign_method);
    NamedDelta merged = disjoint_merge(trimmed, signs, config.weights);
    merged.metadata = deltas.front().metadata;
    merged.metadata.base_id = base_id;
    merged.metadata.provenance = "ties-merge";
    return merged;
}

}  // namespace selfscore
