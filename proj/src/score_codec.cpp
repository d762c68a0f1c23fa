#include "selfscore/score_codec.hpp"

#include <algorithm>
#include <cmath>

#include "selfscore/errors.hpp"

namespace selfscore {

BinningScheme fit_binning(const std::vector<double>& train_scores) {
    if (train_scores.size() < 10) throw TooFewSamples(train_scores.size(), 10);
    std::vector<double> sorted = train_scores;
    for (double s : sorted)
        if (!std::isfinite(s)) throw Error("non-finite training score");
    std::sort(sorted.begin(), sorted.end());

    BinningScheme scheme;
    scheme.lo = sorted.front();
    scheme.hi = sorted.back();
    const std::size_t n = sorted.size();
    for (std::size_t k = 0; k + 1 < kNumBins; ++k) {
        // Last value of equal-count group k.
        std::size_t boundary = (k + 1) * n / kNumBins;
        scheme.cuts[k] = sorted[boundary - 1];
    }
    return scheme;
}

int encode_bin(const BinningScheme& scheme, double raw_score) {
    if (!std::isfinite(raw_score)) throw Error("non-finite score");
    if (scheme.degenerate()) return 0;
    for (int i = 0; i < kNumBins - 1; ++i)
        if (raw_score <= scheme.cuts[static_cast<std::size_t>(i)]) return i;
    return kNumBins - 1;
}

ScoreDistribution softmax_scores(const Vec10& logits) {
    if (!logits.allFinite()) throw Error("non-finite logits");
    const double m = logits.maxCoeff();
    Vec10 e = (logits.array() - m).exp().matrix();
    ScoreDistribution dist;
    dist.p = e / e.sum();
    return dist;
}

double decode_expected(const ScoreDistribution& dist, const ReferenceValues& ref) {
    return ref.s_bar.dot(dist.p);
}

ReferenceValues fit_reference_values(const Eigen::MatrixXd& prob_rows,
                                     const Eigen::VectorXd& val_scores, bool allow_ridge) {
    const Eigen::Index n = prob_rows.rows();
    if (prob_rows.cols() != kNumBins)
        throw ShapeMismatch("probability rows must have 10 columns");
    if (val_scores.size() != n)
        throw ShapeMismatch("row/target count mismatch");
    if (n < kNumBins) throw TooFewSamples(static_cast<std::size_t>(n), kNumBins);
    for (Eigen::Index r = 0; r < n; ++r) {
        if ((prob_rows.row(r).array() < -1e-12).any() ||
            std::abs(prob_rows.row(r).sum() - 1.0) > 1e-6)
            throw Error("row " + std::to_string(r) + " is not a probability distribution");
    }

    using Mat10 = Eigen::Matrix<double, kNumBins, kNumBins>;
    Mat10 normal = prob_rows.transpose() * prob_rows;
    Vec10 moment = prob_rows.transpose() * val_scores;

    ReferenceValues ref;
    Eigen::FullPivLU<Mat10> lu(normal);
    if (lu.isInvertible()) {
        ref.s_bar = lu.solve(moment);
    } else if (allow_ridge) {
        Mat10 ridged = normal + 1e-8 * Mat10::Identity();
        ref.s_bar = ridged.ldlt().solve(moment);
    } else {
        throw DegenerateDesign("normal matrix is rank-deficient and ridge fallback is disabled");
    }
    if (!ref.s_bar.allFinite()) throw DegenerateDesign("least squares solution is not finite");
    return ref;
}

ReferenceValues midpoint_reference_values(const BinningScheme& scheme) {
    ReferenceValues ref;
    if (scheme.degenerate()) {
        ref.s_bar.setConstant(scheme.lo);
        return ref;
    }
    ref.s_bar[0] = 0.5 * (scheme.lo + scheme.cuts[0]);
    for (int i = 1; i < kNumBins - 1; ++i)
        ref.s_bar[i] = 0.5 * (scheme.cuts[static_cast<std::size_t>(i - 1)] +
                              scheme.cuts[static_cast<std::size_t>(i)]);
    ref.s_bar[kNumBins - 1] = 0.5 * (scheme.cuts[kNumBins - 2] + scheme.hi);
    return ref;
}

ReferenceValues default_reference_values(const BinningScheme& scheme,
                                         const std::vector<double>& train_scores) {
    Vec10 sums = Vec10::Zero();
    Eigen::Matrix<std::int64_t, kNumBins, 1> counts;
    counts.setZero();
    for (double s : train_scores) {
        int b = encode_bin(scheme, s);
        sums[b] += s;
        ++counts[b];
    }
    ReferenceValues ref = midpoint_reference_values(scheme);
    for (int i = 0; i < kNumBins; ++i)
        if (counts[i] > 0) ref.s_bar[i] = sums[i] / static_cast<double>(counts[i]);
    return ref;
}

nlohmann::json codec_to_json(const BinningScheme& scheme, const ReferenceValues& ref,
                             const std::string& source) {
    nlohmann::json doc;
    doc["cuts"] = scheme.cuts;
    doc["s_bar"] = std::vector<double>(ref.s_bar.data(), ref.s_bar.data() + kNumBins);
    doc["source"] = source;
    doc["range"] = {scheme.lo, scheme.hi};
    return doc;
}

std::pair<BinningScheme, ReferenceValues> codec_from_json(const nlohmann::json& doc) {
    BinningScheme scheme;
    ReferenceValues ref;
    try {
        auto cuts = doc.at("cuts").get<std::vector<double>>();
        auto s_bar = doc.at("s_bar").get<std::vector<double>>();
        auto range = doc.at("range").get<std::vector<double>>();
        if (cuts.size() != kNumBins - 1 || s_bar.size() != kNumBins || range.size() != 2)
            throw Error("codec document has wrong array sizes");
        std::copy(cuts.begin(), cuts.end(), scheme.cuts.begin());
        for (int i = 0; i < kNumBins; ++i) ref.s_bar[i] = s_bar[static_cast<std::size_t>(i)];
        scheme.lo = range[0];
        scheme.hi = range[1];
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("bad codec document: ") + e.what());
    }
    return {scheme, ref};
}

}  // namespace selfscore
