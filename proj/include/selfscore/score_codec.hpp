#pragma once

#include <Eigen/Dense>

#include <array>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace selfscore {

constexpr int kNumBins = 10;

using Vec10 = Eigen::Matrix<double, kNumBins, 1>;

// Quantile codec: 9 interior cuts slicing the sorted training multiset into
// 10 equal-count groups. lo/hi record the training range.
struct BinningScheme {
    std::array<double, kNumBins - 1> cuts{};
    double lo = 0.0;
    double hi = 0.0;

    bool degenerate() const { return lo == hi; }
};

// Per-bin continuous decode values s_bar.
struct ReferenceValues {
    Vec10 s_bar = Vec10::Zero();
};

struct ScoreDistribution {
    Vec10 p = Vec10::Constant(1.0 / kNumBins);
};

BinningScheme fit_binning(const std::vector<double>& train_scores);

int encode_bin(const BinningScheme& scheme, double raw_score);

ScoreDistribution softmax_scores(const Vec10& logits);

double decode_expected(const ScoreDistribution& dist, const ReferenceValues& ref);

// Least squares fit of s_bar to validation scores. Falls back to a ridge
// solve (lambda = 1e-8) when the normal matrix is singular, unless disabled.
ReferenceValues fit_reference_values(const Eigen::MatrixXd& prob_rows,
                                     const Eigen::VectorXd& val_scores,
                                     bool allow_ridge = true);

// Per-bin training means; empty bins fall back to bin midpoints.
ReferenceValues default_reference_values(const BinningScheme& scheme,
                                         const std::vector<double>& train_scores);

ReferenceValues midpoint_reference_values(const BinningScheme& scheme);

nlohmann::json codec_to_json(const BinningScheme& scheme, const ReferenceValues& ref,
                             const std::string& source);
std::pair<BinningScheme, ReferenceValues> codec_from_json(const nlohmann::json& doc);

}  // namespace selfscore
