#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

#include <selfscore/backend.hpp>
#include <selfscore/delta_archive.hpp>
#include <selfscore/errors.hpp>
#include <selfscore/prompting.hpp>
#include <selfscore/rng.hpp>
#include <selfscore/score_codec.hpp>
#include <selfscore/toy_backend.hpp>

#include "temp_dir.hpp"

using namespace selfscore;

namespace {

using Feat = Eigen::Matrix<double, kToyFeatureDim, 1>;

Feat random_features(Rng& rng) {
    Feat x;
    for (int k = 0; k < kToyFeatureDim; ++k) x[k] = rng.next_normal();
    return x;
}

// Delta pushing bin `bin` to dominate on feature vector x.
NamedDelta boost_delta(const Feat& x, int bin, double strength) {
    NamedDelta d;
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(10, kToyFeatureDim);
    w.row(bin) = strength * x.transpose() / x.squaredNorm();
    d.entries["score_head.weight"] = w;
    return d;
}

const char* tier_sentence(int bin) {
    if (bin <= 2) return " Dull muddled framing spoils this shot.";
    if (bin <= 4) return " Flat lighting leaves the scene unremarkable.";
    if (bin <= 6) return " Pleasant balance gives these tones appeal.";
    return " Stunning composition with masterful light throughout.";
}

}  // namespace

TEST_CASE("toy image uris round-trip bit for bit") {
    Feat x;
    x << 1.5, -2.25, 0.0, -0.0, 1e-300, -1e300, 3.141592653589793, 0.1, -7.0, 42.0, 1e-9, 2.0,
        -0.5, 8.125, -16.0, 0.3333333333333333;
    Feat back = decode_toy_uri(encode_toy_uri(x));
    for (int k = 0; k < kToyFeatureDim; ++k) {
        std::uint64_t a, b;
        std::memcpy(&a, &x[k], 8);
        std::memcpy(&b, &back[k], 8);
        CHECK(a == b);
    }

    CHECK_THROWS_AS(decode_toy_uri("file://photo.jpg"), BackendFailure);
    CHECK_THROWS_AS(decode_toy_uri("toy:abc"), BackendFailure);
}

TEST_CASE("toy manifest fixture is reproducible with a 70/15/15 split") {
    DatasetManifest m = make_toy_manifest(200, 5, "fixture");
    CHECK(m.name == "fixture");
    REQUIRE(m.records.size() == 200);
    CHECK(m.counts.train == 140);
    CHECK(m.counts.val == 30);
    CHECK(m.counts.test == 30);
    for (const auto& r : m.records) {
        Feat x = decode_toy_uri(r.image_uri);
        CHECK(r.raw_score == toy_truth_score(x));
    }
    DatasetManifest again = make_toy_manifest(200, 5, "fixture");
    CHECK(again.records == m.records);
    DatasetManifest other = make_toy_manifest(200, 6, "fixture");
    CHECK(other.records != m.records);
}

TEST_CASE("conditioned generation emits the declared sentiment tier") {
    ToyBackend backend;
    Rng rng(3);
    Feat x = random_features(rng);
    std::string uri = encode_toy_uri(x);
    GenerationParams params;

    for (int bin = 0; bin <= 9; ++bin) {
        std::string prefix = render_conditioned_prefix(bin);
        std::string text = backend.generate(uri, prefix, params);
        CHECK(text == tier_sentence(bin));
        ParsedResponse parsed = parse_response(prefix + text);
        CHECK(parsed.score_bin == bin);
    }
}

TEST_CASE("generation is deterministic and respects limits") {
    ToyBackend backend;
    Rng rng(4);
    std::string uri = encode_toy_uri(random_features(rng));
    GenerationParams params;

    std::string a = backend.generate(uri, "#Score:", params);
    std::string b = backend.generate(uri, "#Score:", params);
    CHECK(a == b);
    CHECK_NOTHROW(parse_response("#Score:" + a));

    GenerationParams two = params;
    two.max_new_tokens = 2;
    std::string clipped = backend.generate(uri, "#Score:", two);
    CHECK(clipped.size() < a.size());

    CHECK_THROWS_AS(backend.generate(uri, "", params), BackendFailure);
    CHECK_THROWS_AS(backend.generate(uri, std::string(100000, 'x'), params), ContextOverflow);
}

TEST_CASE("sequence_logprob is a sum of log token probabilities") {
    ToyBackend backend;
    Rng rng(6);
    Feat x = random_features(rng);
    std::string uri = encode_toy_uri(x);

    std::string resp = "#Score: 5\n#Explain: Pleasant balance gives these tones appeal.";
    double lp = backend.sequence_logprob(uri, "", resp);
    CHECK(lp <= 0.0);

    SUBCASE("chain rule over a split response") {
        std::string a = "#Score: 5";
        std::string b = resp.substr(a.size());
        double whole = backend.sequence_logprob(uri, "", resp);
        double parts = backend.sequence_logprob(uri, "", a) + backend.sequence_logprob(uri, a, b);
        CHECK(std::abs(whole - parts) <= 1e-9);
    }

    SUBCASE("scoring prompt prefix does not change the assistant turn") {
        double with_prompt = backend.sequence_logprob(uri, render_scoring_prompt(), resp);
        CHECK(std::abs(with_prompt - lp) <= 1e-12);
    }

    SUBCASE("garbage does not tokenize") {
        CHECK_THROWS_AS(backend.sequence_logprob(uri, "", "what even is this"), TokenizationError);
        CHECK_THROWS_AS(backend.sequence_logprob(uri, "", ""), TokenizationError);
    }
}

TEST_CASE("a dominant bin makes greedy output near-certain") {
    ToyBackend base;
    Rng rng(7);
    Feat x = random_features(rng);
    std::string uri = encode_toy_uri(x);
    auto boosted = base.with_delta(boost_delta(x, 7, 60.0));

    std::string text = boosted->generate(uri, "#Score:", {});
    ParsedResponse parsed = parse_response("#Score:" + text);
    CHECK(parsed.score_bin == 7);

    double lp = boosted->sequence_logprob(uri, "#Score:", text);
    double tokens = 8.0;  // digit + explain tag + six words
    CHECK(lp / tokens > -0.1);
}

TEST_CASE("score_token_logits equals the closed-form affine map") {
    ToyBackend backend;
    Rng rng(8);
    for (int trial = 0; trial < 10; ++trial) {
        Feat x = random_features(rng);
        Vec10 logits = backend.score_token_logits(encode_toy_uri(x), "#Score:");
        Vec10 expect = backend.effective_weight() * x + backend.effective_bias();
        CHECK((logits - expect).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK(std::abs(softmax_scores(logits).p.sum() - 1.0) <= 1e-12);
    }
}

TEST_CASE("score_token_logits works after the full scoring prompt") {
    ToyBackend backend;
    Rng rng(9);
    Feat x = random_features(rng);
    std::string uri = encode_toy_uri(x);

    Vec10 a = backend.score_token_logits(uri, render_scoring_prompt() + "#Score:");
    Vec10 b = backend.score_token_logits(uri, "#Score:");
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);

    CHECK_THROWS_AS(backend.score_token_logits(uri, render_scoring_prompt()), BackendFailure);
    CHECK_THROWS_AS(backend.score_token_logits(uri, "#Score: 3\n#Explain:"), BackendFailure);
}

TEST_CASE("engineered feature vector lands its boosted bin") {
    ToyBackend base;
    Rng rng(10);
    Feat x = random_features(rng);
    auto boosted = base.with_delta(boost_delta(x, 7, 25.0));
    Vec10 logits = boosted->score_token_logits(encode_toy_uri(x), "#Score:");
    int argmax = 0;
    logits.maxCoeff(&argmax);
    CHECK(argmax == 7);
}

TEST_CASE("freshly attached adapters export an all-zero delta") {
    ToyBackend backend;
    backend.attach_adapter(AdapterSpec::for_rank(4), 99);
    CHECK(backend.has_adapter());
    CHECK(backend.adapter_param_count() == 4 * kToyFeatureDim + 10 * 4 + 10);

    NamedDelta zero = backend.export_delta();
    REQUIRE(zero.entries.count("score_head.weight") == 1);
    REQUIRE(zero.entries.count("score_head.bias") == 1);
    CHECK(zero.entries.at("score_head.weight").cwiseAbs().maxCoeff() == 0.0);
    CHECK(zero.entries.at("score_head.bias").cwiseAbs().maxCoeff() == 0.0);
    CHECK(zero.metadata.adapter.rank == 4);
    CHECK(zero.metadata.base_id == backend.id());

    Rng rng(11);
    Feat x = random_features(rng);
    ToyBackend plain;
    Vec10 with_adapter = backend.score_token_logits(encode_toy_uri(x), "#Score:");
    Vec10 without = plain.score_token_logits(encode_toy_uri(x), "#Score:");
    CHECK((with_adapter - without).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("adapter spec is validated") {
    ToyBackend backend;
    CHECK_THROWS_AS(backend.attach_adapter({0, 0, "all_linear"}, 1), ConfigError);
    CHECK_THROWS_AS(backend.attach_adapter({4, 7, "all_linear"}, 1), ConfigError);
    CHECK_THROWS_AS(backend.adapter_params(), NoAdapterAttached);
    CHECK_THROWS_AS(backend.export_delta(), NoAdapterAttached);
    CHECK_THROWS_AS(backend.train_step(Eigen::VectorXd::Zero(3)), NoAdapterAttached);
    backend.attach_adapter(AdapterSpec::for_rank(2), 1);
    CHECK_THROWS_AS(backend.train_step(Eigen::VectorXd::Zero(3)), ShapeMismatch);
}

TEST_CASE("train_step moves exactly the adapter parameters") {
    ToyBackend backend;
    backend.attach_adapter(AdapterSpec::for_rank(3), 12);
    Eigen::VectorXd before = backend.adapter_params();
    Rng rng(13);
    Eigen::VectorXd update(before.size());
    for (Eigen::Index i = 0; i < update.size(); ++i) update[i] = 0.01 * rng.next_normal();
    backend.train_step(update);
    Eigen::VectorXd after = backend.adapter_params();
    for (Eigen::Index i = 0; i < after.size(); ++i) CHECK(after[i] == before[i] + update[i]);
}

TEST_CASE("exported deltas reproduce the trained model") {
    ToyBackend trained;
    trained.attach_adapter(AdapterSpec::for_rank(4), 21);
    Rng rng(22);
    for (int step = 0; step < 5; ++step) {
        Eigen::VectorXd update(trained.adapter_param_count());
        for (Eigen::Index i = 0; i < update.size(); ++i) update[i] = 0.1 * rng.next_normal();
        trained.train_step(update);
    }

    ToyBackend base;
    auto rebuilt = apply_delta(base, trained.export_delta());
    for (int trial = 0; trial < 10; ++trial) {
        Feat x = random_features(rng);
        Vec10 a = trained.score_token_logits(encode_toy_uri(x), "#Score:");
        Vec10 b = rebuilt->score_token_logits(encode_toy_uri(x), "#Score:");
        CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-6);
    }
}

TEST_CASE("training a clone never moves the original") {
    ToyBackend base;
    Rng rng(31);
    Feat x = random_features(rng);
    std::string uri = encode_toy_uri(x);
    std::string resp = "#Score: 3\n#Explain: Flat lighting leaves the scene unremarkable.";
    Vec10 logits_before = base.score_token_logits(uri, "#Score:");
    double lp_before = base.sequence_logprob(uri, "", resp);

    auto worker = base.clone();
    worker->attach_adapter(AdapterSpec::for_rank(4), 32);
    for (int step = 0; step < 10; ++step) {
        Eigen::VectorXd update(worker->adapter_param_count());
        for (Eigen::Index i = 0; i < update.size(); ++i) update[i] = 0.2 * rng.next_normal();
        worker->train_step(update);
    }

    CHECK((base.score_token_logits(uri, "#Score:") - logits_before).cwiseAbs().maxCoeff() == 0.0);
    CHECK(base.sequence_logprob(uri, "", resp) == lp_before);
    CHECK(!base.has_adapter());
}

TEST_CASE("with_delta rejects unknown names and bad shapes") {
    ToyBackend base;
    NamedDelta bad;
    bad.entries["unknown.param"] = Eigen::MatrixXd::Zero(2, 2);
    CHECK_THROWS_AS(base.with_delta(bad), ShapeMismatch);

    NamedDelta misshaped;
    misshaped.entries["score_head.weight"] = Eigen::MatrixXd::Zero(3, 3);
    CHECK_THROWS_AS(base.with_delta(misshaped), ShapeMismatch);
}

TEST_CASE("adapter gradients match central finite differences") {
    ToyBackend backend;
    backend.attach_adapter(AdapterSpec::for_rank(2), 41);
    Rng rng(42);
    Eigen::VectorXd warm(backend.adapter_param_count());
    for (Eigen::Index i = 0; i < warm.size(); ++i) warm[i] = 0.05 * rng.next_normal();
    backend.train_step(warm);

    Feat x = random_features(rng);
    std::string uri = encode_toy_uri(x);
    std::string resp = "#Score: 8\n#Explain: Stunning composition with masterful light throughout.";

    SUBCASE("sequence log-probability") {
        // header + digit + explain tag + 6 word slots
        ValueGrad vg = backend.sequence_logprob_grad(uri, "", resp);
        CHECK(vg.tokens == 9);
        CHECK(std::abs(vg.value - backend.sequence_logprob(uri, "", resp)) <= 1e-12);

        const double h = 1e-6;
        for (Eigen::Index i = 0; i < vg.grad.size(); i += 7) {
            Eigen::VectorXd probe = Eigen::VectorXd::Zero(vg.grad.size());
            probe[i] = h;
            backend.train_step(probe);
            double plus = backend.sequence_logprob(uri, "", resp);
            probe[i] = -2 * h;
            backend.train_step(probe);
            double minus = backend.sequence_logprob(uri, "", resp);
            probe[i] = h;
            backend.train_step(probe);
            double fd = (plus - minus) / (2 * h);
            CHECK(std::abs(fd - vg.grad[i]) <= 1e-4 * std::max(1.0, std::abs(vg.grad[i])));
        }
    }

    SUBCASE("score-token cross-entropy") {
        ValueGrad vg = backend.score_ce_grad(uri, 4);
        CHECK(vg.tokens == 1);
        Vec10 logits = backend.score_token_logits(uri, "#Score:");
        CHECK(std::abs(vg.value + std::log(softmax_scores(logits).p[4])) <= 1e-12);

        const double h = 1e-6;
        for (Eigen::Index i = 0; i < vg.grad.size(); i += 5) {
            Eigen::VectorXd probe = Eigen::VectorXd::Zero(vg.grad.size());
            probe[i] = h;
            backend.train_step(probe);
            double plus = -std::log(softmax_scores(backend.score_token_logits(uri, "#Score:")).p[4]);
            probe[i] = -2 * h;
            backend.train_step(probe);
            double minus = -std::log(softmax_scores(backend.score_token_logits(uri, "#Score:")).p[4]);
            probe[i] = h;
            backend.train_step(probe);
            double fd = (plus - minus) / (2 * h);
            CHECK(std::abs(fd - vg.grad[i]) <= 1e-4 * std::max(1.0, std::abs(vg.grad[i])));
        }
        CHECK_THROWS_AS(backend.score_ce_grad(uri, 10), BinOutOfRange);
    }
}

TEST_CASE("delta archives round-trip bit for bit") {
    NamedDelta delta;
    Rng rng(51);
    Eigen::MatrixXd w(10, kToyFeatureDim);
    for (Eigen::Index r = 0; r < w.rows(); ++r)
        for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = rng.next_normal() * 1e-3;
    w(0, 0) = 1e-300;
    w(0, 1) = -0.0;
    w(0, 2) = 3.141592653589793;
    delta.entries["score_head.weight"] = w;
    delta.entries["score_head.bias"] = Eigen::MatrixXd::Constant(10, 1, -0.125);
    delta.metadata.base_id = "toy-test";
    delta.metadata.adapter = AdapterSpec::for_rank(4);
    delta.metadata.iteration = 2;
    delta.metadata.provenance = "unit";

    TempDir dir;
    save_delta(delta, dir.str("delta"));
    NamedDelta back = load_delta(dir.str("delta"));

    CHECK(back.metadata.base_id == "toy-test");
    CHECK(back.metadata.adapter.rank == 4);
    CHECK(back.metadata.adapter.alpha == 8);
    CHECK(back.metadata.iteration == 2);
    CHECK(back.metadata.provenance == "unit");
    REQUIRE(back.entries.size() == 2);
    for (const auto& [name, array] : delta.entries) {
        REQUIRE(back.entries.count(name) == 1);
        const Eigen::MatrixXd& got = back.entries.at(name);
        REQUIRE(got.rows() == array.rows());
        REQUIRE(got.cols() == array.cols());
        for (Eigen::Index r = 0; r < array.rows(); ++r)
            for (Eigen::Index c = 0; c < array.cols(); ++c) {
                std::uint64_t a, b;
                double va = array(r, c), vb = got(r, c);
                std::memcpy(&a, &va, 8);
                std::memcpy(&b, &vb, 8);
                CHECK(a == b);
            }
    }
}

TEST_CASE("delta archives detect corruption") {
    NamedDelta delta;
    delta.entries["score_head.bias"] = Eigen::MatrixXd::Constant(10, 1, 0.5);
    TempDir dir;
    save_delta(delta, dir.str("d"));

    SUBCASE("flipped payload byte") {
        std::string file = dir.str("d/p0_score_head_bias.bin");
        std::fstream f(file, std::ios::in | std::ios::out | std::ios::binary);
        REQUIRE(f.good());
        f.seekp(0);
        f.put('\x7f');
        f.close();
        CHECK_THROWS_AS(load_delta(dir.str("d")), SchemaMismatch);
    }

    SUBCASE("missing directory") {
        CHECK_THROWS_AS(load_delta(dir.str("nothing")), Error);
    }
}

TEST_CASE("add_deltas merges over the union of names") {
    NamedDelta a;
    a.entries["score_head.weight"] = Eigen::MatrixXd::Constant(10, kToyFeatureDim, 1.0);
    a.metadata.provenance = "a";
    NamedDelta b;
    b.entries["score_head.weight"] = Eigen::MatrixXd::Constant(10, kToyFeatureDim, 0.5);
    b.entries["score_head.bias"] = Eigen::MatrixXd::Constant(10, 1, 2.0);
    b.metadata.base_id = "from-b";

    NamedDelta sum = add_deltas(a, b);
    CHECK(sum.entries.at("score_head.weight")(0, 0) == 1.5);
    CHECK(sum.entries.at("score_head.bias")(0, 0) == 2.0);
    CHECK(sum.metadata.provenance == "a");
    CHECK(sum.metadata.base_id == "from-b");

    NamedDelta clash;
    clash.entries["score_head.weight"] = Eigen::MatrixXd::Zero(2, 2);
    CHECK_THROWS_AS(add_deltas(a, clash), ShapeMismatch);
}

TEST_CASE("stacked with_delta equals a single summed delta") {
    ToyBackend base;
    Rng rng(61);
    NamedDelta d1, d2;
    Eigen::MatrixXd w1(10, kToyFeatureDim), w2(10, kToyFeatureDim);
    for (Eigen::Index r = 0; r < 10; ++r)
        for (Eigen::Index c = 0; c < kToyFeatureDim; ++c) {
            w1(r, c) = 0.1 * rng.next_normal();
            w2(r, c) = 0.1 * rng.next_normal();
        }
    d1.entries["score_head.weight"] = w1;
    d2.entries["score_head.weight"] = w2;

    auto stacked = base.with_delta(d1)->with_delta(d2);
    auto summed = base.with_delta(add_deltas(d1, d2));
    Feat x = random_features(rng);
    Vec10 a = stacked->score_token_logits(encode_toy_uri(x), "#Score:");
    Vec10 b = summed->score_token_logits(encode_toy_uri(x), "#Score:");
    CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-12);
}
