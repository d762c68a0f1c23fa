#pragma once

#include <cstdint>
#include <string>

#include "selfscore/backend.hpp"
#include "selfscore/dataset.hpp"

namespace selfscore {

// Desk-scale backend: an "image" is a 16-dim feature vector packed into the
// URI, the scorer is a trainable affine map to 10 score-token logits, and
// explanations come from a template engine with 4 sentiment tiers
// (bins 0-2, 3-4, 5-6, 7-9). Every token distribution is an explicit
// categorical, so log-probabilities and gradients have closed forms.

constexpr int kToyFeatureDim = 16;

struct ToyConfig {
    std::uint64_t weight_seed = 0xbadc0ffee0ddf00dULL;
    int context_chars = 8192;
    double smoothing = 0.02;   // uniform mass spread over the token inventory
    double tier_blend = 0.25;  // weight of scorer-implied tier mass at word slots
};

// Fixed direction defining the toy ground truth: raw score = weights . features.
const Eigen::Matrix<double, kToyFeatureDim, 1>& toy_truth_weights();
double toy_truth_score(const Eigen::Matrix<double, kToyFeatureDim, 1>& features);

std::string encode_toy_uri(const Eigen::Matrix<double, kToyFeatureDim, 1>& features);
Eigen::Matrix<double, kToyFeatureDim, 1> decode_toy_uri(const std::string& uri);

// Seeded fixture: n records with Gaussian features, ground-truth raw scores,
// and a fixed 70/15/15 train/val/test split.
DatasetManifest make_toy_manifest(std::size_t n, std::uint64_t seed, const std::string& name);

class ToyBackend final : public Backend {
public:
    explicit ToyBackend(const ToyConfig& config = {});

    std::string id() const override;

    std::string generate(const std::string& image_uri, const std::string& prefix,
                         const GenerationParams& params) override;
    double sequence_logprob(const std::string& image_uri, const std::string& prompt,
                            const std::string& response) override;
    Eigen::Matrix<double, 10, 1> score_token_logits(const std::string& image_uri,
                                                    const std::string& prompt) override;

    void attach_adapter(const AdapterSpec& spec, std::uint64_t seed) override;
    bool has_adapter() const override;
    Eigen::Index adapter_param_count() const override;
    Eigen::VectorXd adapter_params() const override;
    void train_step(const Eigen::VectorXd& update) override;
    NamedDelta export_delta() const override;

    ValueGrad sequence_logprob_grad(const std::string& image_uri, const std::string& prompt,
                                    const std::string& response) override;
    ValueGrad score_ce_grad(const std::string& image_uri, int gt_bin) override;

    std::unique_ptr<Backend> clone() const override;
    std::unique_ptr<Backend> with_delta(const NamedDelta& delta) const override;

    const ToyConfig& config() const { return config_; }
    const Eigen::MatrixXd& base_weight() const { return base_w_; }
    Eigen::MatrixXd effective_weight() const;
    Eigen::VectorXd effective_bias() const;

private:
    Eigen::Matrix<double, 10, 1> logits_for(const Eigen::Matrix<double, kToyFeatureDim, 1>& x) const;

    ToyConfig config_;
    Eigen::MatrixXd base_w_;    // 10 x 16
    Eigen::VectorXd base_b_;    // 10, fixed zero
    Eigen::MatrixXd folded_w_;  // applied deltas
    Eigen::VectorXd folded_b_;
    bool has_adapter_ = false;
    AdapterSpec spec_;
    Eigen::MatrixXd lora_a_;     // rank x 16
    Eigen::MatrixXd lora_b_;     // 10 x rank
    Eigen::VectorXd lora_bias_;  // 10, trained directly (no factorization)
};

}  // namespace selfscore
