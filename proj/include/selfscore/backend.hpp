#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <memory>
#include <string>

namespace selfscore {

struct GenerationParams {
    bool greedy = true;
    int max_new_tokens = 256;
};

// Low-rank adapter setup; alpha is pinned to 2 x rank.
struct AdapterSpec {
    int rank = 0;
    int alpha = 0;
    std::string target_scope = "all_linear";

    static AdapterSpec for_rank(int rank) { return {rank, 2 * rank, "all_linear"}; }
};

struct DeltaMetadata {
    std::string base_id;
    AdapterSpec adapter;
    int iteration = 0;
    std::string provenance;
};

// A task vector: dense per-parameter weight deltas keyed by parameter name.
struct NamedDelta {
    std::map<std::string, Eigen::MatrixXd> entries;
    DeltaMetadata metadata;
};

struct ValueGrad {
    double value = 0.0;
    Eigen::VectorXd grad;  // w.r.t. flattened adapter parameters
    long tokens = 0;       // response tokens contributing to value
};

// Contract a scoring model must satisfy: conditioned greedy generation,
// sequence log-probabilities, score-token logits, and a trainable adapter
// whose induced weight delta can be exported, applied, and merged.
class Backend {
public:
    virtual ~Backend() = default;

    virtual std::string id() const = 0;

    virtual std::string generate(const std::string& image_uri, const std::string& prefix,
                                 const GenerationParams& params) = 0;
    virtual double sequence_logprob(const std::string& image_uri, const std::string& prompt,
                                    const std::string& response) = 0;
    virtual Eigen::Matrix<double, 10, 1> score_token_logits(const std::string& image_uri,
                                                            const std::string& prompt) = 0;

    virtual void attach_adapter(const AdapterSpec& spec, std::uint64_t seed) = 0;
    virtual bool has_adapter() const = 0;
    virtual Eigen::Index adapter_param_count() const = 0;
    virtual Eigen::VectorXd adapter_params() const = 0;
    // Adds `update` to the flattened adapter parameters; base weights never move.
    virtual void train_step(const Eigen::VectorXd& update) = 0;
    virtual NamedDelta export_delta() const = 0;

    // Log-probability of `response` given prompt and image, with gradient
    // w.r.t. the attached adapter's parameters.
    virtual ValueGrad sequence_logprob_grad(const std::string& image_uri,
                                            const std::string& prompt,
                                            const std::string& response) = 0;
    // Cross-entropy of the score token against gt_bin, with gradient.
    virtual ValueGrad score_ce_grad(const std::string& image_uri, int gt_bin) = 0;

    virtual std::unique_ptr<Backend> clone() const = 0;
    virtual std::unique_ptr<Backend> with_delta(const NamedDelta& delta) const = 0;
};

// Handle whose forward pass equals base (+) delta; the input handle is untouched.
std::unique_ptr<Backend> apply_delta(const Backend& base, const NamedDelta& delta);

// Entrywise sum over the union of parameter names; shapes of shared names
// must agree. Metadata comes from `a` except an empty base_id, which is
// taken from `b`.
NamedDelta add_deltas(const NamedDelta& a, const NamedDelta& b);

}  // namespace selfscore
