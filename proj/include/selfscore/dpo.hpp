#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "selfscore/backend.hpp"
#include "selfscore/preference.hpp"

namespace selfscore {

enum class TrainMode { dpo, sft_score, sft_score_and_text };

const char* to_string(TrainMode mode);
TrainMode train_mode_from_string(const std::string& s);

struct TrainConfig {
    double beta = 0.1;
    double lr = 5e-5;
    int batch_size = 128;
    int epochs = 1;
    double lr_decay_per_iteration = 0.8;
    TrainMode mode = TrainMode::dpo;
    std::uint64_t seed = 0;
    bool mean_normalize = false;  // per-token mean instead of summed logprob
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
};

nlohmann::json train_config_to_json(const TrainConfig& config);

struct TrainReport {
    std::vector<double> loss_trace;  // mean pair loss per optimizer step
    double final_mean_loss = 0.0;    // full-dataset pass after training
    double pair_accuracy = 0.0;      // dpo: fraction with positive margin;
                                     // sft modes: score-token argmax accuracy
    long steps = 0;
};

nlohmann::json train_report_to_json(const TrainReport& report);

// base_lr times decay applied (iteration - 1) times, as a plain product so
// the schedule is reproducible bit for bit.
double decayed_lr(double base_lr, double decay_per_iteration, int iteration);

struct DpoLossValue {
    double loss = 0.0;
    double margin = 0.0;
};

// loss = -log sigmoid(beta * m), m = (lp_w_pol - lp_w_ref) - (lp_l_pol - lp_l_ref).
DpoLossValue dpo_loss(double lp_w_policy, double lp_l_policy, double lp_w_ref, double lp_l_ref,
                      double beta);

// d loss / d m for the same objective.
double dpo_loss_dmargin(double margin, double beta);

// Negative log-likelihood of the chosen response, masked to the score token
// (sft_score) or covering the full response (sft_score_and_text).
double sft_loss(TrainMode mode, Backend& policy, const PreferencePair& pair);

// Trains a fresh adapter on `base` over the pair file. The reference model
// for DPO is `reference` when given, otherwise `base` itself (the same
// handle lineage with no adapter).
std::pair<NamedDelta, TrainReport> train_adapter(const Backend& base,
                                                 const std::string& dataset_path,
                                                 const AdapterSpec& spec,
                                                 const TrainConfig& config,
                                                 const Backend* reference = nullptr);

}  // namespace selfscore
