#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "selfscore/dataset.hpp"
#include "selfscore/delta_archive.hpp"
#include "selfscore/digest.hpp"
#include "selfscore/dpo.hpp"
#include "selfscore/errors.hpp"
#include "selfscore/evaluate.hpp"
#include "selfscore/judge.hpp"
#include "selfscore/pipeline.hpp"
#include "selfscore/preference.hpp"
#include "selfscore/prompting.hpp"
#include "selfscore/rng.hpp"
#include "selfscore/ties.hpp"
#include "selfscore/toy_backend.hpp"

namespace fs = std::filesystem;

namespace selfscore {

namespace {

std::unique_ptr<Backend> backend_with_deltas(const PipelineConfig& cfg,
                                             const std::vector<std::string>& delta_dirs) {
    auto backend = make_backend(cfg);
    for (const auto& dir : delta_dirs) backend = apply_delta(*backend, load_delta(dir));
    return backend;
}

struct DataBundle {
    DatasetManifest manifest;
    std::vector<ScoredImage> train, val, test;
    std::vector<double> train_scores;
    BinningScheme scheme;
};

DataBundle load_bundle(const PipelineConfig& cfg) {
    if (cfg.manifest.empty()) throw ConfigError("config lacks [data] manifest");
    DataBundle b;
    b.manifest = load_manifest(cfg.manifest);
    b.train = split_filter(b.manifest, Split::train);
    b.val = split_filter(b.manifest, Split::val);
    b.test = split_filter(b.manifest, Split::test);
    if (b.train.empty()) throw ConfigError("manifest has no train records");
    for (const auto& rec : b.train) b.train_scores.push_back(rec.raw_score);
    b.scheme = fit_binning(b.train_scores);
    return b;
}

ReferenceValues fit_on_split(Backend& model, const std::vector<ScoredImage>& records) {
    if (records.empty()) throw ConfigError("cannot fit decode values on an empty split");
    const std::string slot = render_scoring_prompt() + "#Score:";
    Eigen::MatrixXd probs(static_cast<Eigen::Index>(records.size()), kNumBins);
    Eigen::VectorXd scores(static_cast<Eigen::Index>(records.size()));
    for (std::size_t i = 0; i < records.size(); ++i) {
        Vec10 logits = model.score_token_logits(records[i].image_uri, slot);
        probs.row(static_cast<Eigen::Index>(i)) = softmax_scores(logits).p.transpose();
        scores[static_cast<Eigen::Index>(i)] = records[i].raw_score;
    }
    return fit_reference_values(probs, scores);
}

std::vector<std::string> split_csv(const std::string& csv) {
    std::vector<std::string> out;
    std::string part;
    std::istringstream in(csv);
    while (std::getline(in, part, ',')) out.push_back(part);
    return out;
}

void write_json_file(const std::string& path, const nlohmann::json& doc) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open for writing: " + path);
    out << doc.dump(2) << "\n";
    if (!out) throw Error("write failed: " + path);
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"self-training pipeline for a score-predicting generative model"};
    app.require_subcommand(1);

    // make-toy
    struct {
        std::string out, name;
        std::size_t count = 200;
        std::uint64_t seed = 0;
        bool dry_run = false;
    } mt;
    auto* make_toy = app.add_subcommand("make-toy", "write a synthetic toy dataset manifest");
    make_toy->add_option("--out", mt.out, "manifest path (.jsonl or .csv)")->required();
    make_toy->add_option("--count", mt.count, "number of records");
    make_toy->add_option("--seed", mt.seed, "feature RNG seed");
    make_toy->add_option("--name", mt.name, "manifest name (default: file stem)");
    make_toy->add_flag("--dry-run", mt.dry_run, "print the plan without writing");
    make_toy->callback([&] {
        std::string name = mt.name.empty() ? fs::path(mt.out).stem().string() : mt.name;
        if (mt.dry_run) {
            std::cout << "plan: synthesize " << mt.count << " toy records (seed " << mt.seed
                      << ") -> " << mt.out << "\n";
            return;
        }
        DatasetManifest manifest = make_toy_manifest(mt.count, mt.seed, name);
        save_manifest(manifest, mt.out);
        std::cout << "wrote " << manifest.counts.total() << " records (train "
                  << manifest.counts.train << ", val " << manifest.counts.val << ", test "
                  << manifest.counts.test << ") to " << mt.out << "\n";
    });

    // ingest
    struct {
        std::string manifest, format, out;
        bool dry_run = false;
    } ing;
    auto* ingest = app.add_subcommand("ingest", "read a dataset manifest and report split counts");
    ingest->add_option("--manifest", ing.manifest, "manifest path")
        ->required()
        ->check(CLI::ExistingFile);
    ingest->add_option("--format", ing.format, "csv or jsonl (default: by extension)")
        ->check(CLI::IsMember({"csv", "jsonl"}));
    ingest->add_option("--out", ing.out, "re-emit the manifest to this path");
    ingest->add_flag("--dry-run", ing.dry_run, "print the plan without writing");
    ingest->callback([&] {
        if (ing.dry_run) {
            std::cout << "plan: load " << ing.manifest
                      << (ing.out.empty() ? "" : " and re-emit to " + ing.out) << "\n";
            return;
        }
        DatasetManifest manifest =
            ing.format.empty()
                ? load_manifest(ing.manifest)
                : load_manifest(ing.manifest,
                                ing.format == "csv" ? ManifestFormat::csv : ManifestFormat::jsonl);
        double mean = 0.0;
        for (const auto& rec : manifest.records) mean += rec.raw_score;
        if (!manifest.records.empty()) mean /= static_cast<double>(manifest.records.size());
        std::cout << "name=" << manifest.name << " train=" << manifest.counts.train
                  << " val=" << manifest.counts.val << " test=" << manifest.counts.test
                  << " total=" << manifest.counts.total() << " mean_score=" << mean << "\n";
        if (!ing.out.empty()) {
            save_manifest(manifest, ing.out);
            std::cout << "wrote " << ing.out << "\n";
        }
    });

    // gen-data
    struct {
        std::string config, out_dir = ".";
        std::vector<std::string> deltas;
        int iteration = 1;
        double fraction = -1.0;
        int min_distance = -1;
        std::uint64_t seed = 0;
        bool with_consistency = false, no_consistency = false, dry_run = false;
    } gd;
    auto* gen_data = app.add_subcommand("gen-data", "build preference pair files");
    gen_data->add_option("--config", gd.config, "pipeline config")->required()
        ->check(CLI::ExistingFile);
    gen_data->add_option("--out-dir", gd.out_dir, "directory for the pair files");
    gen_data->add_option("--delta", gd.deltas, "delta archive applied to the base (repeatable)")
        ->check(CLI::ExistingDirectory);
    gen_data->add_option("--iteration", gd.iteration, "iteration number (seeds, consistency)");
    gen_data->add_option("--fraction", gd.fraction, "override score data fraction");
    gen_data->add_option("--min-distance", gd.min_distance, "override rejected-bin distance");
    auto* gd_seed = gen_data->add_option("--seed", gd.seed, "override run seed");
    gen_data->add_flag("--consistency", gd.with_consistency, "force consistency derivation on");
    gen_data->add_flag("--no-consistency", gd.no_consistency, "force consistency derivation off");
    gen_data->add_flag("--dry-run", gd.dry_run, "print the plan without writing");
    gen_data->callback([&] {
        PipelineConfig cfg = load_pipeline_config(gd.config);
        if (gd.fraction > 0.0) cfg.score_fraction = gd.fraction;
        if (gd.min_distance > 0) cfg.min_distance = gd.min_distance;
        if (gd_seed->count() > 0) cfg.seed = gd.seed;
        validate_pipeline_config(cfg);
        if (gd.iteration < 1) throw ConfigError("--iteration must be >= 1");
        bool consistency = gd.iteration >= 2;
        if (gd.with_consistency) consistency = true;
        if (gd.no_consistency) consistency = false;

        DataBundle bundle = load_bundle(cfg);
        std::uint64_t seed =
            derive_seed(cfg.seed, "data", static_cast<std::uint64_t>(gd.iteration));
        std::string score_path = (fs::path(gd.out_dir) / "score_train.jsonl").string();
        std::string cons_path = (fs::path(gd.out_dir) / "consistency_train.jsonl").string();
        if (gd.dry_run) {
            std::cout << "plan: sample ceil(" << cfg.score_fraction << " * "
                      << bundle.train.size() << ") train records, seed " << seed << ", write "
                      << score_path << (consistency ? " and " + cons_path : "") << "\n";
            return;
        }
        auto backend = backend_with_deltas(cfg, gd.deltas);
        DatasetBuildOptions opt;
        opt.fraction = cfg.score_fraction;
        opt.pair.min_distance = cfg.min_distance;
        opt.pair.max_retries = cfg.max_retries;
        opt.pair.gen = cfg.gen;
        opt.write_consistency = consistency;
        opt.generator = backend->id();
        fs::create_directories(gd.out_dir);
        BuildStats stats =
            build_dataset(*backend, bundle.train, bundle.scheme, seed, opt, score_path, cons_path);
        std::cout << "sampled=" << stats.sampled << " score_pairs=" << stats.written_score
                  << " consistency_pairs=" << stats.written_consistency
                  << " dropped=" << stats.dropped << " failed=" << stats.failed << "\n";
    });

    // train
    struct {
        std::string config, pairs, out, mode;
        std::vector<std::string> deltas;
        int iteration = 1, batch_size = 0, epochs = 0, rank = 0;
        double lr = 0.0, beta = 0.0;
        std::uint64_t seed = 0;
        bool dry_run = false;
    } tr;
    auto* train = app.add_subcommand("train", "train an adapter on a pair file");
    train->add_option("--config", tr.config, "pipeline config")->required()
        ->check(CLI::ExistingFile);
    train->add_option("--pairs", tr.pairs, "preference pair file")->required()
        ->check(CLI::ExistingFile);
    train->add_option("--out", tr.out, "delta archive output directory")->required();
    train->add_option("--mode", tr.mode, "dpo | sft_score | sft_score_and_text");
    train->add_option("--delta", tr.deltas, "delta archive applied to the base (repeatable)")
        ->check(CLI::ExistingDirectory);
    train->add_option("--iteration", tr.iteration, "iteration number (applies lr decay)");
    auto* tr_lr = train->add_option("--lr", tr.lr, "override learning rate");
    auto* tr_beta = train->add_option("--beta", tr.beta, "override preference temperature");
    auto* tr_bs = train->add_option("--batch-size", tr.batch_size, "override batch size");
    auto* tr_ep = train->add_option("--epochs", tr.epochs, "override epoch count");
    auto* tr_rank = train->add_option("--rank", tr.rank, "override adapter rank");
    auto* tr_seed = train->add_option("--seed", tr.seed, "override run seed");
    train->add_flag("--dry-run", tr.dry_run, "print the plan without writing");
    train->callback([&] {
        PipelineConfig cfg = load_pipeline_config(tr.config);
        if (tr_seed->count() > 0) cfg.seed = tr.seed;
        if (tr_rank->count() > 0) cfg.adapter = AdapterSpec::for_rank(tr.rank);
        validate_pipeline_config(cfg);
        if (tr.iteration < 1) throw ConfigError("--iteration must be >= 1");
        TrainConfig tc = cfg.train_score;
        if (!tr.mode.empty()) tc.mode = train_mode_from_string(tr.mode);
        if (tr_lr->count() > 0) tc.lr = tr.lr;
        if (tr_beta->count() > 0) tc.beta = tr.beta;
        if (tr_bs->count() > 0) tc.batch_size = tr.batch_size;
        if (tr_ep->count() > 0) tc.epochs = tr.epochs;
        tc.lr = decayed_lr(tc.lr, tc.lr_decay_per_iteration, tr.iteration);
        tc.seed = derive_seed(cfg.seed, "train-score", static_cast<std::uint64_t>(tr.iteration));
        if (tr.dry_run) {
            std::cout << "plan: train " << to_string(tc.mode) << " adapter (rank "
                      << cfg.adapter.rank << ", lr " << tc.lr << ", batch " << tc.batch_size
                      << ", epochs " << tc.epochs << ") on " << tr.pairs << " -> " << tr.out
                      << "\n";
            return;
        }
        auto base = make_backend(cfg);
        auto start = backend_with_deltas(cfg, tr.deltas);
        auto [delta, report] = train_adapter(*start, tr.pairs, cfg.adapter, tc, base.get());
        delta.metadata.iteration = tr.iteration;
        save_delta(delta, tr.out);
        write_json_file((fs::path(tr.out) / "train_report.json").string(),
                        {{"config", train_config_to_json(tc)},
                         {"report", train_report_to_json(report)},
                         {"dataset_sha256", sha256_file(tr.pairs)}});
        std::cout << "steps=" << report.steps << " final_mean_loss=" << report.final_mean_loss
                  << " pair_accuracy=" << report.pair_accuracy << " -> " << tr.out << "\n";
    });

    // merge
    struct {
        std::string inputs, out, sign;
        std::string weights;
        double density = -1.0;
        bool dry_run = false;
    } mg;
    auto* merge = app.add_subcommand("merge", "TIES-merge delta archives");
    merge->add_option("--inputs", mg.inputs, "comma-separated delta archive directories")
        ->required();
    merge->add_option("--out", mg.out, "merged archive output directory")->required();
    merge->add_option("--density", mg.density, "fraction of entries kept per tensor");
    merge->add_option("--weights", mg.weights, "comma-separated per-model multipliers");
    merge->add_option("--sign", mg.sign, "frequency | mass")
        ->check(CLI::IsMember({"frequency", "mass"}));
    merge->add_flag("--dry-run", mg.dry_run, "print the plan without writing");
    merge->callback([&] {
        std::vector<std::string> dirs = split_csv(mg.inputs);
        if (dirs.size() < 2) throw ConfigError("--inputs needs at least two archives");
        MergeConfig mc;
        mc.weights.assign(dirs.size(), 1.0);
        if (!mg.weights.empty()) {
            mc.weights.clear();
            for (const auto& w : split_csv(mg.weights)) {
                try {
                    mc.weights.push_back(std::stod(w));
                } catch (const std::exception&) {
                    throw ConfigError("--weights: cannot parse '" + w + "'");
                }
            }
        }
        if (mg.density > 0.0) mc.density = mg.density;
        if (!mg.sign.empty()) mc.sign_method = sign_method_from_string(mg.sign);
        if (mg.dry_run) {
            std::cout << "plan: ties-merge " << dirs.size() << " archives (density " << mc.density
                      << ", " << to_string(mc.sign_method) << ") -> " << mg.out << "\n";
            return;
        }
        std::vector<NamedDelta> deltas;
        nlohmann::json inputs = nlohmann::json::array();
        for (const auto& dir : dirs) {
            deltas.push_back(load_delta(dir));
            inputs.push_back(
                {{"path", dir},
                 {"manifest_sha256", sha256_file((fs::path(dir) / "manifest.json").string())}});
        }
        NamedDelta merged = ties_merge(deltas, mc);
        save_delta(merged, mg.out);
        write_json_file((fs::path(mg.out) / "merge_manifest.json").string(),
                        {{"config", merge_config_to_json(mc)}, {"inputs", inputs}});
        std::cout << "merged " << deltas.size() << " archives into " << mg.out << " ("
                  << merged.entries.size() << " tensors)\n";
    });

    // fit-decode
    struct {
        std::string config, out, split = "val";
        std::vector<std::string> deltas;
        bool dry_run = false;
    } fd;
    auto* fit_decode = app.add_subcommand("fit-decode", "fit the bin codec and decode values");
    fit_decode->add_option("--config", fd.config, "pipeline config")->required()
        ->check(CLI::ExistingFile);
    fit_decode->add_option("--out", fd.out, "codec JSON output path")->required();
    fit_decode->add_option("--split", fd.split, "split used for the least-squares fit")
        ->check(CLI::IsMember({"train", "val", "test"}));
    fit_decode->add_option("--delta", fd.deltas, "delta archive applied to the base (repeatable)")
        ->check(CLI::ExistingDirectory);
    fit_decode->add_flag("--dry-run", fd.dry_run, "print the plan without writing");
    fit_decode->callback([&] {
        PipelineConfig cfg = load_pipeline_config(fd.config);
        validate_pipeline_config(cfg);
        if (fd.dry_run) {
            std::cout << "plan: fit bins on train, least-squares decode values on " << fd.split
                      << " -> " << fd.out << "\n";
            return;
        }
        DataBundle bundle = load_bundle(cfg);
        auto model = backend_with_deltas(cfg, fd.deltas);
        const auto& records = fd.split == "train" ? bundle.train
                              : fd.split == "val" ? bundle.val
                                                  : bundle.test;
        ReferenceValues ref = fit_on_split(*model, records);
        write_json_file(fd.out, codec_to_json(bundle.scheme, ref, "least-squares:" + fd.split));
        std::cout << "wrote codec to " << fd.out << "\n";
    });

    // evaluate
    struct {
        std::string config, codec, predictions, metrics, split = "test";
        std::vector<std::string> deltas;
        bool judge = false, dry_run = false;
    } ev;
    auto* evaluate = app.add_subcommand("evaluate", "score a split and compute metrics");
    evaluate->add_option("--config", ev.config, "pipeline config")->required()
        ->check(CLI::ExistingFile);
    evaluate->add_option("--split", ev.split, "split to evaluate")
        ->check(CLI::IsMember({"train", "val", "test"}));
    evaluate->add_option("--codec", ev.codec, "codec JSON (default: fit on val)")
        ->check(CLI::ExistingFile);
    evaluate->add_option("--predictions", ev.predictions, "prediction dump output path");
    evaluate->add_option("--metrics", ev.metrics, "metrics JSON output path");
    evaluate->add_option("--delta", ev.deltas, "delta archive applied to the base (repeatable)")
        ->check(CLI::ExistingDirectory);
    evaluate->add_flag("--judge", ev.judge, "also judge explanations with the configured provider");
    evaluate->add_flag("--dry-run", ev.dry_run, "print the plan without writing");
    evaluate->callback([&] {
        PipelineConfig cfg = load_pipeline_config(ev.config);
        validate_pipeline_config(cfg);
        if (ev.dry_run) {
            std::cout << "plan: evaluate " << ev.split << " split"
                      << (ev.deltas.empty() ? " with the base model"
                                            : " with " + std::to_string(ev.deltas.size()) +
                                                  " delta(s) applied")
                      << (ev.judge ? ", then judge explanations" : "") << "\n";
            return;
        }
        DataBundle bundle = load_bundle(cfg);
        auto model = backend_with_deltas(cfg, ev.deltas);
        BinningScheme scheme = bundle.scheme;
        ReferenceValues ref;
        if (!ev.codec.empty()) {
            std::ifstream in(ev.codec);
            if (!in) throw Error("cannot open codec file: " + ev.codec);
            nlohmann::json doc = nlohmann::json::parse(in);
            std::tie(scheme, ref) = codec_from_json(doc);
        } else {
            ref = fit_on_split(*model, bundle.val);
        }
        const auto& records = ev.split == "train" ? bundle.train
                              : ev.split == "val" ? bundle.val
                                                  : bundle.test;
        EvalOptions opt;
        opt.gen = cfg.gen;
        EvalResult res = evaluate_scoring(*model, records, scheme, ref, opt);
        MetricsRow row;
        row.label = ev.split;
        row.plcc = res.plcc;
        row.srcc = res.srcc;
        row.rmse = res.rmse;
        row.n = res.n;
        row.backend_failures = res.backend_failures;
        if (ev.judge) {
            auto provider = make_judge_provider(cfg.judge);
            if (!provider) throw ConfigError("--judge requires a judge provider in the config");
            JudgeOptions jo = cfg.judge.options;
            jo.seed = derive_seed(cfg.seed, "judge:evaluate");
            JudgeResult jr = judge_batch(*provider, res.records, jo);
            row.has_judge = true;
            row.cons = jr.mean_consistency;
            row.use = jr.mean_usefulness;
            row.gen = jr.mean_general;
            row.judge_failures = jr.failures;
        }
        if (!ev.predictions.empty()) save_predictions(res.records, ev.predictions);
        if (!ev.metrics.empty()) write_json_file(ev.metrics, metrics_row_to_json(row));
        std::cout << format_metrics_table({row});
    });

    // judge
    struct {
        std::string config, predictions, out;
        bool dry_run = false;
    } jd;
    auto* judge = app.add_subcommand("judge", "judge a prediction dump's explanations");
    judge->add_option("--config", jd.config, "pipeline config")->required()
        ->check(CLI::ExistingFile);
    judge->add_option("--predictions", jd.predictions, "prediction dump (JSONL)")->required()
        ->check(CLI::ExistingFile);
    judge->add_option("--out", jd.out, "verdict summary JSON output path");
    judge->add_flag("--dry-run", jd.dry_run, "print the plan without writing");
    judge->callback([&] {
        PipelineConfig cfg = load_pipeline_config(jd.config);
        validate_pipeline_config(cfg);
        auto provider = make_judge_provider(cfg.judge);
        if (!provider) throw ConfigError("judge provider is 'none' in the config");
        if (jd.dry_run) {
            std::cout << "plan: judge up to " << cfg.judge.options.sample_cap << " records from "
                      << jd.predictions << " via " << cfg.judge.provider << "\n";
            return;
        }
        std::vector<PredictionRecord> records = load_predictions(jd.predictions);
        JudgeOptions jo = cfg.judge.options;
        jo.seed = derive_seed(cfg.seed, "judge:cli");
        JudgeResult jr = judge_batch(*provider, records, jo);
        nlohmann::json summary = {{"cons", jr.mean_consistency}, {"use", jr.mean_usefulness},
                                  {"gen", jr.mean_general},     {"judged", jr.judged},
                                  {"failures", jr.failures}};
        if (!jd.out.empty()) write_json_file(jd.out, summary);
        std::cout << summary.dump() << "\n";
    });

    // run
    struct {
        std::string config, out;
        int iterations = 0;
        std::uint64_t seed = 0;
        bool dry_run = false;
    } rn;
    auto* run = app.add_subcommand("run", "run the full iterative loop");
    run->add_option("--config", rn.config, "pipeline config")->required()
        ->check(CLI::ExistingFile);
    auto* rn_iters = run->add_option("--iterations", rn.iterations, "override iteration count");
    auto* rn_out = run->add_option("--out", rn.out, "override output root");
    auto* rn_seed = run->add_option("--seed", rn.seed, "override run seed");
    run->add_flag("--dry-run", rn.dry_run, "print the plan without writing");
    run->callback([&] {
        PipelineConfig cfg = load_pipeline_config(rn.config);
        if (rn_iters->count() > 0) cfg.iterations = rn.iterations;
        if (rn_out->count() > 0) cfg.out = rn.out;
        if (rn_seed->count() > 0) cfg.seed = rn.seed;
        validate_pipeline_config(cfg);
        if (rn.dry_run) {
            std::cout << "plan: out=" << cfg.out << " iterations=" << cfg.iterations << " seed="
                      << cfg.seed << "\n";
            std::cout << "  zero-shot: evaluate base on val\n";
            for (int k = 1; k <= cfg.iterations; ++k) {
                double lr_s =
                    decayed_lr(cfg.train_score.lr, cfg.train_score.lr_decay_per_iteration, k);
                std::cout << "  ite-" << k << ": gen-data (fraction " << cfg.score_fraction
                          << ") -> train score (lr " << lr_s << ")";
                if (k >= 2) {
                    double lr_c = decayed_lr(cfg.train_consistency.lr,
                                             cfg.train_consistency.lr_decay_per_iteration, k);
                    std::cout << " + train consistency (lr " << lr_c << ", "
                              << cfg.consistency_fraction_of_score
                              << " of score pairs) -> ties-merge (density " << cfg.merge.density
                              << ", " << to_string(cfg.merge.sign_method) << ")";
                }
                std::cout << " -> evaluate val\n";
            }
            return;
        }
        RunReport report = run_full(cfg);
        std::cout << format_metrics_table(report.rows);
        std::cout << "state: " << (fs::path(report.out) / "state.json").string() << " ("
                  << report.iterations_executed << " iteration(s) executed, "
                  << report.iterations_completed << " recorded)\n";
    });

    try {
        app.parse(argc, argv);
        return 0;
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace selfscore
