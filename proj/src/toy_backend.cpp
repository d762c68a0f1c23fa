#include "selfscore/toy_backend.hpp"

#include <cstring>
#include <vector>

#include "selfscore/errors.hpp"
#include "selfscore/prompting.hpp"
#include "selfscore/rng.hpp"
#include "selfscore/score_codec.hpp"

namespace selfscore {

namespace {

// Token inventory: header, 10 digit tokens, explain tag, 24 template words
// (4 tiers x 6 slots), end-of-sequence.
constexpr int kVocab = 37;
constexpr int kTokHeader = 0;
constexpr int kTokDigit0 = 1;
constexpr int kTokExplain = 11;
constexpr int kTokWord0 = 12;
constexpr int kTokEos = 36;
constexpr int kTiers = 4;
constexpr int kWordSlots = 6;

// Grammar positions: 0 header, 1 score digit, 2 explain tag, 3..8 word
// slots, 9 end (only EOS).
constexpr int kPosDigit = 1;
constexpr int kPosWord0 = 3;
constexpr int kPosEnd = kPosWord0 + kWordSlots;

const char* const kWords[kTiers][kWordSlots] = {
    {"Dull", "muddled", "framing", "spoils", "this", "shot."},
    {"Flat", "lighting", "leaves", "the", "scene", "unremarkable."},
    {"Pleasant", "balance", "gives", "these", "tones", "appeal."},
    {"Stunning", "composition", "with", "masterful", "light", "throughout."},
};

int tier_of_bin(int bin) {
    if (bin <= 2) return 0;
    if (bin <= 4) return 1;
    if (bin <= 6) return 2;
    return 3;
}

std::string token_bytes(int id) {
    if (id == kTokHeader) return "#Score:";
    if (id >= kTokDigit0 && id < kTokDigit0 + 10)
        return std::string(" ") + static_cast<char>('0' + (id - kTokDigit0));
    if (id == kTokExplain) return "\n#Explain:";
    if (id >= kTokWord0 && id < kTokEos) {
        int w = id - kTokWord0;
        return std::string(" ") + kWords[w / kWordSlots][w % kWordSlots];
    }
    return "";  // EOS
}

struct StreamState {
    int pos = 0;
    int declared = -1;  // digit seen at the score slot
};

void advance(StreamState& st, int id) {
    if (id >= kTokDigit0 && id < kTokDigit0 + 10) st.declared = id - kTokDigit0;
    if (id != kTokEos && st.pos < kPosEnd) ++st.pos;
}

bool starts_with(std::string_view text, std::size_t at, std::string_view prefix) {
    return text.size() - at >= prefix.size() && text.substr(at, prefix.size()) == prefix;
}

// Consumes one token at text[i]; returns its id or throws.
int match_token(std::string_view text, std::size_t& i, const StreamState& st) {
    if (st.pos == 0) {
        if (starts_with(text, i, "#Score:")) {
            i += 7;
            return kTokHeader;
        }
        throw TokenizationError("expected '#Score:' header");
    }
    if (st.pos == kPosDigit) {
        if (text.size() - i >= 2 && text[i] == ' ' && text[i + 1] >= '0' && text[i + 1] <= '9') {
            int d = text[i + 1] - '0';
            i += 2;
            return kTokDigit0 + d;
        }
        throw TokenizationError("expected ' <digit>' score token");
    }
    if (st.pos == 2) {
        if (starts_with(text, i, "\n#Explain:")) {
            i += 10;
            return kTokExplain;
        }
        throw TokenizationError("expected '\\n#Explain:' tag");
    }
    if (st.pos < kPosEnd) {
        if (i < text.size() && text[i] == ' ') {
            int best = -1;
            std::size_t best_len = 0;
            for (int t = 0; t < kTiers; ++t)
                for (int k = 0; k < kWordSlots; ++k) {
                    std::string_view w = kWords[t][k];
                    if (w.size() > best_len && starts_with(text, i + 1, w)) {
                        best = kTokWord0 + t * kWordSlots + k;
                        best_len = w.size();
                    }
                }
            if (best >= 0) {
                i += 1 + best_len;
                return best;
            }
        }
        throw TokenizationError("unknown word token");
    }
    throw TokenizationError("bytes past end of response grammar");
}

struct Consumed {
    StreamState before;
    int id;
};

std::vector<Consumed> tokenize(std::string_view text, StreamState& st) {
    std::vector<Consumed> out;
    std::size_t i = 0;
    while (i < text.size()) {
        Consumed c{st, match_token(text, i, st)};
        advance(st, c.id);
        out.push_back(c);
    }
    return out;
}

}  // namespace

const Eigen::Matrix<double, kToyFeatureDim, 1>& toy_truth_weights() {
    static const Eigen::Matrix<double, kToyFeatureDim, 1> w = [] {
        Eigen::Matrix<double, kToyFeatureDim, 1> v;
        v << 0.9, -1.3, 0.6, 2.0, -0.4, 1.1, -2.2, 0.3, 1.7, -0.8, 0.5, -1.6, 1.2, 0.7, -0.9, 1.4;
        return v;
    }();
    return w;
}

double toy_truth_score(const Eigen::Matrix<double, kToyFeatureDim, 1>& features) {
    return toy_truth_weights().dot(features);
}

std::string encode_toy_uri(const Eigen::Matrix<double, kToyFeatureDim, 1>& features) {
    static const char* digits = "0123456789abcdef";
    std::string uri = "toy:";
    for (int k = 0; k < kToyFeatureDim; ++k) {
        double v = features[k];
        std::uint64_t u;
        std::memcpy(&u, &v, 8);
        for (int b = 0; b < 8; ++b) {
            unsigned byte = (u >> (8 * b)) & 0xff;
            uri += digits[byte >> 4];
            uri += digits[byte & 0xf];
        }
    }
    return uri;
}

Eigen::Matrix<double, kToyFeatureDim, 1> decode_toy_uri(const std::string& uri) {
    auto hex_val = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        return -1;
    };
    if (uri.rfind("toy:", 0) != 0 || uri.size() != 4 + kToyFeatureDim * 16)
        throw BackendFailure("not a toy image uri: " + uri.substr(0, 32));
    Eigen::Matrix<double, kToyFeatureDim, 1> out;
    std::size_t p = 4;
    for (int k = 0; k < kToyFeatureDim; ++k) {
        std::uint64_t u = 0;
        for (int b = 0; b < 8; ++b) {
            int hi = hex_val(uri[p]), lo = hex_val(uri[p + 1]);
            if (hi < 0 || lo < 0) throw BackendFailure("bad hex in toy image uri");
            u |= static_cast<std::uint64_t>((hi << 4) | lo) << (8 * b);
            p += 2;
        }
        double v;
        std::memcpy(&v, &u, 8);
        out[k] = v;
    }
    return out;
}

DatasetManifest make_toy_manifest(std::size_t n, std::uint64_t seed, const std::string& name) {
    Rng rng(derive_seed(seed, "toy-fixture"));
    DatasetManifest m;
    m.name = name;
    m.records.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Eigen::Matrix<double, kToyFeatureDim, 1> x;
        for (int k = 0; k < kToyFeatureDim; ++k) x[k] = rng.next_normal();
        ScoredImage rec;
        char buf[32];
        std::snprintf(buf, sizeof buf, "toy-%05zu", i);
        rec.image_id = buf;
        rec.image_uri = encode_toy_uri(x);
        rec.raw_score = toy_truth_score(x);
        if (i * 10 < n * 7) rec.split = Split::train;
        else if (i * 20 < n * 17) rec.split = Split::val;
        else rec.split = Split::test;
        m.records.push_back(std::move(rec));
        switch (m.records.back().split) {
            case Split::train: ++m.counts.train; break;
            case Split::val: ++m.counts.val; break;
            case Split::test: ++m.counts.test; break;
        }
    }
    return m;
}

ToyBackend::ToyBackend(const ToyConfig& config) : config_(config) {
    if (config_.smoothing <= 0.0 || config_.smoothing >= 1.0 || config_.tier_blend < 0.0 ||
        config_.tier_blend > 1.0 || config_.context_chars < 1024)
        throw ConfigError("bad toy backend config");
    Rng rng(derive_seed(config_.weight_seed, "base-weights"));
    base_w_.resize(10, kToyFeatureDim);
    for (Eigen::Index r = 0; r < 10; ++r)
        for (Eigen::Index c = 0; c < kToyFeatureDim; ++c) base_w_(r, c) = 0.05 * rng.next_normal();
    // The untrained scorer must know nothing about the ground truth, so each
    // row is projected onto the complement of the truth direction; the signal
    // has to be learned through the adapter.
    Eigen::Matrix<double, kToyFeatureDim, 1> u = toy_truth_weights().normalized();
    base_w_ -= (base_w_ * u) * u.transpose();
    base_b_ = Eigen::VectorXd::Zero(10);
    folded_w_ = Eigen::MatrixXd::Zero(10, kToyFeatureDim);
    folded_b_ = Eigen::VectorXd::Zero(10);
}

std::string ToyBackend::id() const {
    char buf[32];
    std::snprintf(buf, sizeof buf, "toy-d16-w%016llx",
                  static_cast<unsigned long long>(config_.weight_seed));
    return buf;
}

Eigen::MatrixXd ToyBackend::effective_weight() const {
    Eigen::MatrixXd w = base_w_ + folded_w_;
    if (has_adapter_)
        w += (static_cast<double>(spec_.alpha) / spec_.rank) * (lora_b_ * lora_a_);
    return w;
}

Eigen::VectorXd ToyBackend::effective_bias() const {
    Eigen::VectorXd b = base_b_ + folded_b_;
    if (has_adapter_) b += lora_bias_;
    return b;
}

Eigen::Matrix<double, 10, 1> ToyBackend::logits_for(
    const Eigen::Matrix<double, kToyFeatureDim, 1>& x) const {
    return effective_weight() * x + effective_bias();
}

namespace {

// Probability of token id at stream position st under scorer softmax s.
double token_prob(int id, const StreamState& st, const Vec10& s, const ToyConfig& cfg) {
    double structural = 0.0;
    if (st.pos == 0) {
        structural = (id == kTokHeader) ? 1.0 : 0.0;
    } else if (st.pos == kPosDigit) {
        if (id >= kTokDigit0 && id < kTokDigit0 + 10) structural = s[id - kTokDigit0];
    } else if (st.pos == 2) {
        structural = (id == kTokExplain) ? 1.0 : 0.0;
    } else if (st.pos < kPosEnd) {
        if (id >= kTokWord0 && id < kTokEos) {
            int w = id - kTokWord0;
            int tier = w / kWordSlots;
            int slot = w % kWordSlots;
            if (slot == st.pos - kPosWord0 && st.declared >= 0) {
                double q = 0.0;
                for (int b = 0; b < 10; ++b)
                    if (tier_of_bin(b) == tier) q += s[b];
                structural = cfg.tier_blend * q +
                             (1.0 - cfg.tier_blend) * (tier == tier_of_bin(st.declared) ? 1.0 : 0.0);
            }
        }
    } else {
        structural = (id == kTokEos) ? 1.0 : 0.0;
    }
    return (1.0 - cfg.smoothing) * structural + cfg.smoothing / kVocab;
}

// d log p(token) / d logits, added into g.
void add_dlogp_dlogits(int id, const StreamState& st, const Vec10& s, double p_tok,
                       const ToyConfig& cfg, Vec10& g) {
    if (st.pos == kPosDigit && id >= kTokDigit0 && id < kTokDigit0 + 10) {
        int d = id - kTokDigit0;
        double c = (1.0 - cfg.smoothing) * s[d] / p_tok;
        g -= c * s;
        g[d] += c;
    } else if (st.pos >= kPosWord0 && st.pos < kPosEnd && id >= kTokWord0 && id < kTokEos) {
        int w = id - kTokWord0;
        int tier = w / kWordSlots;
        int slot = w % kWordSlots;
        if (slot != st.pos - kPosWord0 || st.declared < 0) return;
        double q = 0.0;
        for (int b = 0; b < 10; ++b)
            if (tier_of_bin(b) == tier) q += s[b];
        double c = (1.0 - cfg.smoothing) * cfg.tier_blend / p_tok;
        for (int b = 0; b < 10; ++b)
            g[b] += c * s[b] * ((tier_of_bin(b) == tier ? 1.0 : 0.0) - q);
    }
}

// Strips the scoring prompt prefix when present; the toy grammar describes
// only the assistant turn.
std::string_view assistant_view(std::string_view text) {
    std::string_view prompt = scoring_prompt_text();
    if (text.substr(0, prompt.size()) == prompt) text.remove_prefix(prompt.size());
    return text;
}

}  // namespace

std::string ToyBackend::generate(const std::string& image_uri, const std::string& prefix,
                                 const GenerationParams& params) {
    if (params.max_new_tokens <= 0) throw ConfigError("max_new_tokens must be positive");
    if (!params.greedy) throw ConfigError("toy backend decodes greedily");
    if (prefix.empty()) throw BackendFailure("empty generation prefix");
    if (prefix.size() > static_cast<std::size_t>(config_.context_chars))
        throw ContextOverflow("prefix exceeds toy context window");

    auto x = decode_toy_uri(image_uri);
    ScoreDistribution dist = softmax_scores(logits_for(x));

    StreamState st;
    tokenize(assistant_view(prefix), st);

    std::string out;
    for (int step = 0; step < params.max_new_tokens; ++step) {
        int best = 0;
        double best_p = -1.0;
        for (int id = 0; id < kVocab; ++id) {
            double p = token_prob(id, st, dist.p, config_);
            if (p > best_p) {
                best_p = p;
                best = id;
            }
        }
        if (best == kTokEos) break;
        out += token_bytes(best);
        if (prefix.size() + out.size() > static_cast<std::size_t>(config_.context_chars))
            throw ContextOverflow("generation exceeds toy context window");
        advance(st, best);
    }
    return out;
}

double ToyBackend::sequence_logprob(const std::string& image_uri, const std::string& prompt,
                                    const std::string& response) {
    if (prompt.size() + response.size() > static_cast<std::size_t>(config_.context_chars))
        throw ContextOverflow("sequence exceeds toy context window");
    auto x = decode_toy_uri(image_uri);
    ScoreDistribution dist = softmax_scores(logits_for(x));

    StreamState st;
    tokenize(assistant_view(prompt), st);
    auto toks = tokenize(response, st);
    if (toks.empty()) throw TokenizationError("response tokenizes to nothing");

    double lp = 0.0;
    for (const auto& t : toks) lp += std::log(token_prob(t.id, t.before, dist.p, config_));
    return lp;
}

Eigen::Matrix<double, 10, 1> ToyBackend::score_token_logits(const std::string& image_uri,
                                                            const std::string& prompt) {
    auto x = decode_toy_uri(image_uri);
    StreamState st;
    tokenize(assistant_view(prompt), st);
    if (st.pos != kPosDigit)
        throw BackendFailure("prompt does not end at the score token slot");
    return logits_for(x);
}

void ToyBackend::attach_adapter(const AdapterSpec& spec, std::uint64_t seed) {
    if (spec.rank < 1) throw ConfigError("adapter rank must be positive");
    if (spec.alpha != 2 * spec.rank) throw ConfigError("adapter alpha must equal 2 x rank");
    spec_ = spec;
    Rng rng(derive_seed(seed, "adapter-init"));
    lora_a_.resize(spec.rank, kToyFeatureDim);
    for (Eigen::Index r = 0; r < lora_a_.rows(); ++r)
        for (Eigen::Index c = 0; c < lora_a_.cols(); ++c)
            lora_a_(r, c) = rng.next_normal() / std::sqrt(static_cast<double>(kToyFeatureDim));
    lora_b_ = Eigen::MatrixXd::Zero(10, spec.rank);
    lora_bias_ = Eigen::VectorXd::Zero(10);
    has_adapter_ = true;
}

bool ToyBackend::has_adapter() const { return has_adapter_; }

Eigen::Index ToyBackend::adapter_param_count() const {
    if (!has_adapter_) throw NoAdapterAttached();
    return lora_a_.size() + lora_b_.size() + lora_bias_.size();
}

Eigen::VectorXd ToyBackend::adapter_params() const {
    if (!has_adapter_) throw NoAdapterAttached();
    Eigen::VectorXd out(adapter_param_count());
    Eigen::Index p = 0;
    for (Eigen::Index r = 0; r < lora_a_.rows(); ++r)
        for (Eigen::Index c = 0; c < lora_a_.cols(); ++c) out[p++] = lora_a_(r, c);
    for (Eigen::Index r = 0; r < lora_b_.rows(); ++r)
        for (Eigen::Index c = 0; c < lora_b_.cols(); ++c) out[p++] = lora_b_(r, c);
    for (Eigen::Index r = 0; r < lora_bias_.size(); ++r) out[p++] = lora_bias_[r];
    return out;
}

void ToyBackend::train_step(const Eigen::VectorXd& update) {
    if (!has_adapter_) throw NoAdapterAttached();
    if (update.size() != adapter_param_count())
        throw ShapeMismatch("adapter update has wrong length");
    if (!update.allFinite()) throw Error("non-finite adapter update");
    Eigen::Index p = 0;
    for (Eigen::Index r = 0; r < lora_a_.rows(); ++r)
        for (Eigen::Index c = 0; c < lora_a_.cols(); ++c) lora_a_(r, c) += update[p++];
    for (Eigen::Index r = 0; r < lora_b_.rows(); ++r)
        for (Eigen::Index c = 0; c < lora_b_.cols(); ++c) lora_b_(r, c) += update[p++];
    for (Eigen::Index r = 0; r < lora_bias_.size(); ++r) lora_bias_[r] += update[p++];
}

NamedDelta ToyBackend::export_delta() const {
    if (!has_adapter_) throw NoAdapterAttached();
    NamedDelta delta;
    delta.entries["score_head.weight"] =
        (static_cast<double>(spec_.alpha) / spec_.rank) * (lora_b_ * lora_a_);
    delta.entries["score_head.bias"] = lora_bias_;
    delta.metadata.base_id = id();
    delta.metadata.adapter = spec_;
    return delta;
}

namespace {

// Shared tail of the gradient ops: maps d loss / d logits to adapter space.
// The bias is a direct parameter, so its block is g itself.
Eigen::VectorXd adapter_chain(const Eigen::MatrixXd& lora_a, const Eigen::MatrixXd& lora_b,
                              double scale, const Vec10& g,
                              const Eigen::Matrix<double, kToyFeatureDim, 1>& x) {
    Eigen::MatrixXd da = scale * (lora_b.transpose() * g) * x.transpose();
    Eigen::MatrixXd db = scale * g * (lora_a * x).transpose();
    Eigen::VectorXd out(da.size() + db.size() + g.size());
    Eigen::Index p = 0;
    for (Eigen::Index r = 0; r < da.rows(); ++r)
        for (Eigen::Index c = 0; c < da.cols(); ++c) out[p++] = da(r, c);
    for (Eigen::Index r = 0; r < db.rows(); ++r)
        for (Eigen::Index c = 0; c < db.cols(); ++c) out[p++] = db(r, c);
    for (Eigen::Index r = 0; r < g.size(); ++r) out[p++] = g[r];
    return out;
}

}  // namespace

ValueGrad ToyBackend::sequence_logprob_grad(const std::string& image_uri,
                                            const std::string& prompt,
                                            const std::string& response) {
    if (!has_adapter_) throw NoAdapterAttached();
    if (prompt.size() + response.size() > static_cast<std::size_t>(config_.context_chars))
        throw ContextOverflow("sequence exceeds toy context window");
    auto x = decode_toy_uri(image_uri);
    ScoreDistribution dist = softmax_scores(logits_for(x));

    StreamState st;
    tokenize(assistant_view(prompt), st);
    auto toks = tokenize(response, st);
    if (toks.empty()) throw TokenizationError("response tokenizes to nothing");

    double lp = 0.0;
    Vec10 g = Vec10::Zero();
    for (const auto& t : toks) {
        double p = token_prob(t.id, t.before, dist.p, config_);
        lp += std::log(p);
        add_dlogp_dlogits(t.id, t.before, dist.p, p, config_, g);
    }
    ValueGrad out;
    out.value = lp;
    out.grad = adapter_chain(lora_a_, lora_b_, static_cast<double>(spec_.alpha) / spec_.rank, g, x);
    out.tokens = static_cast<long>(toks.size());
    return out;
}

ValueGrad ToyBackend::score_ce_grad(const std::string& image_uri, int gt_bin) {
    if (!has_adapter_) throw NoAdapterAttached();
    if (gt_bin < 0 || gt_bin > 9) throw BinOutOfRange(gt_bin);
    auto x = decode_toy_uri(image_uri);
    ScoreDistribution dist = softmax_scores(logits_for(x));
    Vec10 g = dist.p;
    g[gt_bin] -= 1.0;  // d(-log softmax[gt]) / d logits
    ValueGrad out;
    out.value = -std::log(dist.p[gt_bin]);
    out.grad = adapter_chain(lora_a_, lora_b_, static_cast<double>(spec_.alpha) / spec_.rank, g, x);
    out.tokens = 1;
    return out;
}

std::unique_ptr<Backend> ToyBackend::clone() const {
    return std::make_unique<ToyBackend>(*this);
}

std::unique_ptr<Backend> ToyBackend::with_delta(const NamedDelta& delta) const {
    auto next = std::make_unique<ToyBackend>(*this);
    next->has_adapter_ = false;
    next->lora_a_.resize(0, 0);
    next->lora_b_.resize(0, 0);
    next->lora_bias_.resize(0);
    for (const auto& [name, array] : delta.entries) {
        if (!array.allFinite()) throw Error("delta entry '" + name + "' has non-finite values");
        if (name == "score_head.weight") {
            if (array.rows() != 10 || array.cols() != kToyFeatureDim)
                throw ShapeMismatch("score_head.weight delta must be 10 x 16");
            next->folded_w_ += array;
        } else if (name == "score_head.bias") {
            if (array.rows() != 10 || array.cols() != 1)
                throw ShapeMismatch("score_head.bias delta must be 10 x 1");
            next->folded_b_ += array.col(0);
        } else {
            throw ShapeMismatch("unknown parameter '" + name + "'");
        }
    }
    return next;
}

}  // namespace selfscore
