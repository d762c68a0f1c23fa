#include "selfscore/dpo.hpp"

#include <cmath>
#include <numeric>

#include "selfscore/errors.hpp"
#include "selfscore/prompting.hpp"
#include "selfscore/rng.hpp"
#include "selfscore/score_codec.hpp"

namespace selfscore {

const char* to_string(TrainMode mode) {
    switch (mode) {
        case TrainMode::dpo: return "dpo";
        case TrainMode::sft_score: return "sft_score";
        case TrainMode::sft_score_and_text: return "sft_score_and_text";
    }
    return "?";
}

TrainMode train_mode_from_string(const std::string& s) {
    if (s == "dpo") return TrainMode::dpo;
    if (s == "sft_score") return TrainMode::sft_score;
    if (s == "sft_score_and_text") return TrainMode::sft_score_and_text;
    throw ConfigError("unknown train mode '" + s + "'");
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
    return {{"beta", c.beta},
            {"lr", c.lr},
            {"batch_size", c.batch_size},
            {"epochs", c.epochs},
            {"lr_decay_per_iteration", c.lr_decay_per_iteration},
            {"mode", to_string(c.mode)},
            {"seed", c.seed},
            {"mean_normalize", c.mean_normalize},
            {"adam_beta1", c.adam_beta1},
            {"adam_beta2", c.adam_beta2},
            {"adam_eps", c.adam_eps}};
}

nlohmann::json train_report_to_json(const TrainReport& r) {
    return {{"loss_trace", r.loss_trace},
            {"final_mean_loss", r.final_mean_loss},
            {"pair_accuracy", r.pair_accuracy},
            {"steps", r.steps}};
}

double decayed_lr(double base_lr, double decay_per_iteration, int iteration) {
    if (iteration < 1) throw ConfigError("iteration must be >= 1");
    double lr = base_lr;
    for (int i = 1; i < iteration; ++i) lr *= decay_per_iteration;
    return lr;
}

DpoLossValue dpo_loss(double lp_w_policy, double lp_l_policy, double lp_w_ref, double lp_l_ref,
                      double beta) {
    if (beta <= 0.0) throw ConfigError("beta must be positive");
    for (double v : {lp_w_policy, lp_l_policy, lp_w_ref, lp_l_ref})
        if (!std::isfinite(v)) throw NonFiniteLoss("non-finite log-probability input");
    DpoLossValue out;
    out.margin = (lp_w_policy - lp_w_ref) - (lp_l_policy - lp_l_ref);
    double bm = beta * out.margin;
    // -log sigmoid(bm), stable on both tails.
    out.loss = bm >= 0.0 ? std::log1p(std::exp(-bm)) : -bm + std::log1p(std::exp(bm));
    return out;
}

double dpo_loss_dmargin(double margin, double beta) {
    double bm = beta * margin;
    // -beta * sigmoid(-bm), computed without overflow.
    return bm >= 0.0 ? -beta * (std::exp(-bm) / (1.0 + std::exp(-bm)))
                     : -beta / (1.0 + std::exp(bm));
}

namespace {

int chosen_bin(const PreferencePair& pair) { return parse_response(pair.chosen).score_bin; }

std::string score_slot_prompt(const std::string& prompt) { return prompt + "#Score:"; }

}  // namespace

double sft_loss(TrainMode mode, Backend& policy, const PreferencePair& pair) {
    if (mode == TrainMode::sft_score) {
        Vec10 logits = policy.score_token_logits(pair.image_uri, score_slot_prompt(pair.prompt));
        ScoreDistribution dist = softmax_scores(logits);
        return -std::log(dist.p[chosen_bin(pair)]);
    }
    if (mode == TrainMode::sft_score_and_text)
        return -policy.sequence_logprob(pair.image_uri, pair.prompt, pair.chosen);
    throw ConfigError("sft_loss requires an SFT mode");
}

namespace {

struct PairGrad {
    double loss = 0.0;
    double margin = 0.0;
    Eigen::VectorXd grad;
};

PairGrad pair_loss_grad(TrainMode mode, Backend& policy, const PreferencePair& pair,
                        double beta, double ref_w, double ref_l, bool mean_normalize) {
    PairGrad out;
    if (mode == TrainMode::dpo) {
        ValueGrad w = policy.sequence_logprob_grad(pair.image_uri, pair.prompt, pair.chosen);
        ValueGrad l = policy.sequence_logprob_grad(pair.image_uri, pair.prompt, pair.rejected);
        double inv_w = 1.0, inv_l = 1.0;
        if (mean_normalize) {
            // Token counts depend only on the text, so they also rescale the
            // frozen reference terms.
            inv_w = 1.0 / static_cast<double>(w.tokens);
            inv_l = 1.0 / static_cast<double>(l.tokens);
        }
        DpoLossValue v =
            dpo_loss(w.value * inv_w, l.value * inv_l, ref_w * inv_w, ref_l * inv_l, beta);
        out.loss = v.loss;
        out.margin = v.margin;
        out.grad = dpo_loss_dmargin(v.margin, beta) * (inv_w * w.grad - inv_l * l.grad);
    } else if (mode == TrainMode::sft_score) {
        ValueGrad ce = policy.score_ce_grad(pair.image_uri, chosen_bin(pair));
        out.loss = ce.value;
        out.grad = ce.grad;
    } else {
        ValueGrad lp = policy.sequence_logprob_grad(pair.image_uri, pair.prompt, pair.chosen);
        out.loss = -lp.value;
        out.grad = -lp.grad;
    }
    return out;
}

}  // namespace

std::pair<NamedDelta, TrainReport> train_adapter(const Backend& base,
                                                 const std::string& dataset_path,
                                                 const AdapterSpec& spec,
                                                 const TrainConfig& config,
                                                 const Backend* reference) {
    if (config.lr <= 0.0) throw ConfigError("lr must be positive");
    if (config.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (config.epochs < 1) throw ConfigError("epochs must be >= 1");

    std::vector<PreferencePair> pairs = load_pairs(dataset_path);
    if (pairs.empty()) throw DatasetSchemaError("pair file has no rows: " + dataset_path);

    std::unique_ptr<Backend> policy = base.clone();
    policy->attach_adapter(spec, derive_seed(config.seed, "adapter-init"));
    const Eigen::Index nparams = policy->adapter_param_count();

    std::unique_ptr<Backend> ref_handle;
    Backend* ref = const_cast<Backend*>(reference);
    if (ref == nullptr) {
        ref_handle = base.clone();
        ref = ref_handle.get();
    }

    // Reference logprobs are frozen; compute them once.
    std::vector<double> ref_w(pairs.size(), 0.0), ref_l(pairs.size(), 0.0);
    if (config.mode == TrainMode::dpo) {
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            ref_w[i] = ref->sequence_logprob(pairs[i].image_uri, pairs[i].prompt, pairs[i].chosen);
            ref_l[i] = ref->sequence_logprob(pairs[i].image_uri, pairs[i].prompt, pairs[i].rejected);
        }
    }

    Eigen::VectorXd adam_m = Eigen::VectorXd::Zero(nparams);
    Eigen::VectorXd adam_v = Eigen::VectorXd::Zero(nparams);
    long t = 0;

    TrainReport report;
    std::vector<std::size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(config.seed, "shuffle", static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);
        for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(config.batch_size)) {
            std::size_t end = std::min(order.size(), at + static_cast<std::size_t>(config.batch_size));
            Eigen::VectorXd grad = Eigen::VectorXd::Zero(nparams);
            double loss_sum = 0.0;
            for (std::size_t j = at; j < end; ++j) {
                const PreferencePair& pair = pairs[order[j]];
                PairGrad pg = pair_loss_grad(config.mode, *policy, pair, config.beta,
                                             ref_w[order[j]], ref_l[order[j]], config.mean_normalize);
                loss_sum += pg.loss;
                grad += pg.grad;
            }
            double batch_n = static_cast<double>(end - at);
            double mean_loss = loss_sum / batch_n;
            if (!std::isfinite(mean_loss))
                throw NonFiniteLoss("step " + std::to_string(t) + " (epoch " +
                                    std::to_string(epoch) + "): mean batch loss is not finite");
            grad /= batch_n;

            ++t;
            adam_m = config.adam_beta1 * adam_m + (1.0 - config.adam_beta1) * grad;
            adam_v = config.adam_beta2 * adam_v +
                     (1.0 - config.adam_beta2) * grad.array().square().matrix();
            double bc1 = 1.0 - std::pow(config.adam_beta1, static_cast<double>(t));
            double bc2 = 1.0 - std::pow(config.adam_beta2, static_cast<double>(t));
            Eigen::VectorXd update =
                (-config.lr * (adam_m / bc1).array() /
                 ((adam_v / bc2).array().sqrt() + config.adam_eps))
                    .matrix();
            policy->train_step(update);
            report.loss_trace.push_back(mean_loss);
        }
    }
    report.steps = t;

    // Clean full-dataset pass for the report.
    double loss_sum = 0.0;
    double hits = 0.0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const PreferencePair& pair = pairs[i];
        PairGrad pg = pair_loss_grad(config.mode, *policy, pair, config.beta, ref_w[i], ref_l[i],
                                     config.mean_normalize);
        loss_sum += pg.loss;
        if (config.mode == TrainMode::dpo) {
            if (pg.margin > 0.0) hits += 1.0;
        } else {
            Vec10 logits = policy->score_token_logits(pair.image_uri, score_slot_prompt(pair.prompt));
            Eigen::Index argmax = 0;
            logits.maxCoeff(&argmax);
            if (static_cast<int>(argmax) == chosen_bin(pair)) hits += 1.0;
        }
    }
    report.final_mean_loss = loss_sum / static_cast<double>(pairs.size());
    report.pair_accuracy = hits / static_cast<double>(pairs.size());

    NamedDelta delta = policy->export_delta();
    delta.metadata.provenance = std::string("train:") + to_string(config.mode);
    return {std::move(delta), std::move(report)};
}

}  // namespace selfscore
