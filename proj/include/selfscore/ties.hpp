#pragma once

#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "selfscore/backend.hpp"

namespace selfscore {

enum class SignMethod { frequency, mass };

const char* to_string(SignMethod method);
SignMethod sign_method_from_string(const std::string& s);

struct MergeConfig {
    std::vector<double> weights{1.0, 1.0};
    double density = 0.5;
    SignMethod sign_method = SignMethod::frequency;
};

nlohmann::json merge_config_to_json(const MergeConfig& config);

// Keeps the ceil(density*n) largest-magnitude entries of each tensor and
// zeroes the rest. Magnitude ties keep the lower row-major flat index.
NamedDelta trim(const NamedDelta& delta, double density);

// Per-entry elected sign in {-1, 0, +1}. frequency: majority over nonzero
// contributors, ties resolved by larger summed magnitude, then +1.
// mass: sign of the plain sum. No nonzero contributor -> 0.
std::map<std::string, Eigen::MatrixXd> elect_sign(const std::vector<NamedDelta>& trimmed,
                                                  SignMethod method);

// Weighted mean over contributors agreeing with the elected sign; entries
// with elected sign 0 stay 0.
NamedDelta disjoint_merge(const std::vector<NamedDelta>& trimmed,
                          const std::map<std::string, Eigen::MatrixXd>& signs,
                          const std::vector<double>& weights);

// trim -> elect_sign -> disjoint_merge. Inputs must share parameter schemas;
// the result is independent of input order.
NamedDelta ties_merge(const std::vector<NamedDelta>& deltas, const MergeConfig& config);

}  // namespace selfscore
