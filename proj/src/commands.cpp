#include "fosm/cli/commands.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "fosm/analysis/stats.hpp"
#include "fosm/analysis/sweeps.hpp"
#include "fosm/corpus/load.hpp"
#include "fosm/corpus/vocab.hpp"
#include "fosm/episode/episode.hpp"
#include "fosm/matchers/checkpoint.hpp"
#include "fosm/matchers/matchers.hpp"
#include "fosm/metalearn/experiment.hpp"

namespace fs = std::filesystem;

namespace fosm::cli {

namespace {

std::string resolve_path(const std::string& p) {
    if (p.empty() || fs::path(p).is_absolute()) return p;
    if (const char* root = std::getenv("FOSM_DATA_ROOT"); root && *root)
        return (fs::path(root) / p).string();
    return p;
}

nlohmann::json parse_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("invalid JSON in " + path + ": " + e.what());
    }
}

void write_text_file(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << content;
}

std::string fmt_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct DataInputs {
    Vocabulary vocab;
    Pool pool;
    ClassSplit split;
    int max_len = 64;
};

DataInputs load_raw(const std::string& corpus, const std::string& embeddings,
                    const std::string& split_path, int max_len) {
    DataInputs d;
    d.max_len = max_len;
    auto instances = load_dataset(resolve_path(corpus));
    d.split = split_classes(instances, SplitSpec::from_json(parse_json_file(resolve_path(split_path))));
    d.vocab = build_vocab(instances, resolve_path(embeddings), static_cast<std::size_t>(max_len));
    d.pool = build_pool(instances, d.vocab, static_cast<std::size_t>(max_len));
    return d;
}

DataInputs load_bundle(const std::string& dir_in) {
    const std::string dir = resolve_path(dir_in);
    auto meta = parse_json_file((fs::path(dir) / "bundle.json").string());
    DataInputs d;
    d.max_len = meta.value("max_len", 64);

    auto vocab_json = parse_json_file((fs::path(dir) / "vocab.json").string());
    auto table_ck = load_checkpoint((fs::path(dir) / "vocab_table.ftns").string());
    d.vocab = Vocabulary::from_parts(vocab_json["tokens"].get<std::vector<std::string>>(),
                                     table_ck.params.at("table"));

    const std::string inst_path = (fs::path(dir) / "instances.jsonl").string();
    std::ifstream in(inst_path);
    if (!in) throw DataError("cannot open bundle instances: " + inst_path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError(inst_path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        EncodedInstance enc;
        enc.id = j["id"].get<std::size_t>();
        enc.seq.indices = j["indices"].get<std::vector<std::int32_t>>();
        enc.seq.length = j["length"].get<std::int32_t>();
        enc.num_aspects = j.value("num_aspects", 0);
        d.pool[j["label"].get<std::string>()].push_back(std::move(enc));
    }
    auto split_json = parse_json_file((fs::path(dir) / "split.json").string());
    d.split.train_classes = split_json["train"].get<std::vector<std::string>>();
    d.split.val_classes = split_json["val"].get<std::vector<std::string>>();
    d.split.test_classes = split_json["test"].get<std::vector<std::string>>();
    return d;
}

DataInputs load_inputs(const ExperimentSpec& spec) {
    if (!spec.bundle.empty()) return load_bundle(spec.bundle);
    if (spec.corpus.empty() || spec.embeddings.empty() || spec.split.empty())
        throw ConfigError("spec needs either \"bundle\" or all of corpus/embeddings/split");
    return load_raw(spec.corpus, spec.embeddings, spec.split, spec.max_len);
}

MatcherConfig resolved_matcher(const ExperimentSpec& spec, const DataInputs& data) {
    MatcherConfig m = spec.matcher;
    m.embed_dim = static_cast<int>(data.vocab.dim());
    m.vocab_size = data.vocab.size();
    m.validate();
    return m;
}

nlohmann::json checkpoint_meta(const ExperimentSpec& spec, const MatcherConfig& mcfg) {
    return {{"tool", kToolVersion},
            {"matcher", mcfg},
            {"train", spec.train},
            {"precision", spec.precision}};
}

void check_architecture(const Checkpoint& ck, const MatcherConfig& mcfg,
                        const Vocabulary& vocab) {
    ag::ParamSet<double> expect = init_matcher_params<double>(mcfg, vocab, Rng(0));
    try {
        expect.check_same_structure(ck.params);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("checkpoint does not match the spec architecture: ") +
                          e.what());
    }
}

void write_metrics_stdout(const std::string& title, double acc_mean, double acc_std,
                          double f1_mean, double f1_std) {
    std::printf("%s\n", title.c_str());
    std::printf("  %-10s %8.4f +/- %.4f\n", "accuracy", acc_mean, acc_std);
    std::printf("  %-10s %8.4f +/- %.4f\n", "macro-F1", f1_mean, f1_std);
}

template <class S>
void train_impl(const ExperimentSpec& spec, const std::string& out_dir) {
    DataInputs data = load_inputs(spec);
    MatcherConfig mcfg = resolved_matcher(spec, data);
    spec.train.validate();

    fs::create_directories(out_dir);
    write_text_file(fs::path(out_dir) / "resolved_spec.json", spec.to_json().dump(2) + "\n");

    Rng init_rng = Rng(spec.train.seed).derive("init");
    auto params = init_matcher_params<S>(mcfg, data.vocab, init_rng);

    EpisodeStream train_stream(data.pool,
                               stream_config(data.split.train_classes, "train",
                                             spec.train.train_batches, spec.train,
                                             spec.train.seed));
    EpisodeStream val_stream(data.pool,
                             stream_config(data.split.val_classes, "val", spec.train.val_batches,
                                           spec.train, spec.train.seed));

    std::ofstream log((fs::path(out_dir) / "metrics.jsonl").string(), std::ios::trunc);
    auto on_epoch = [&](const EpochRecord& r) {
        nlohmann::json j = {{"epoch", r.epoch},
                            {"train_loss", r.train_loss},
                            {"val_accuracy", r.val_accuracy},
                            {"val_macro_f1", r.val_macro_f1},
                            {"improved", r.improved}};
        log << j.dump() << "\n";
        log.flush();
        std::printf("epoch %3d  train_loss %.5f  val_f1 %.4f%s\n", r.epoch, r.train_loss,
                    r.val_macro_f1, r.improved ? "  *" : "");
    };

    auto result = train_matcher(mcfg, spec.train, std::move(params), train_stream, val_stream,
                                on_epoch);

    ag::ParamSet<double> to_save = result.params.template cast<double>();
    save_checkpoint((fs::path(out_dir) / "checkpoint.ftns").string(), to_save,
                    checkpoint_meta(spec, mcfg));
    nlohmann::json summary = {{"best_val_macro_f1", result.best_val_f1},
                              {"best_epoch", result.best_epoch},
                              {"epochs_run", result.epochs_run}};
    write_text_file(fs::path(out_dir) / "train_summary.json", summary.dump(2) + "\n");
    std::printf("best val macro-F1 %.4f at epoch %d (%d epochs run)\n", result.best_val_f1,
                result.best_epoch, result.epochs_run);
}

template <class S>
void eval_impl(const ExperimentSpec& spec, const EvalArgs& args, const Checkpoint& ck) {
    DataInputs data = load_inputs(spec);
    MatcherConfig mcfg = resolved_matcher(spec, data);
    check_architecture(ck, mcfg, data.vocab);
    auto params = ck.params.template cast<S>();

    int steps = args.adapt == "none" ? 0 : args.steps.value_or(spec.train.adapt_steps);
    if (args.adapt == "none" && args.steps.value_or(0) != 0)
        throw ConfigError("--adapt none requires --steps 0");
    if (args.adapt != "none" && args.adapt != "finetune" && args.adapt != "maml-init")
        throw ConfigError("invalid adapt mode '" + args.adapt +
                          "' (valid: none, finetune, maml-init)");

    fs::create_directories(args.out_dir);
    nlohmann::json resolved = spec.to_json();
    resolved["eval"] = {{"adapt", args.adapt},
                        {"steps", steps},
                        {"runs", args.runs},
                        {"checkpoint", args.checkpoint},
                        {"seed", spec.train.seed}};
    write_text_file(fs::path(args.out_dir) / "resolved_spec.json", resolved.dump(2) + "\n");

    nlohmann::json run_array = nlohmann::json::array();
    std::vector<double> accs, f1s;
    EvalResult first;
    for (int k = 0; k < args.runs; ++k) {
        const std::uint64_t eval_seed = spec.train.seed + static_cast<std::uint64_t>(k);
        EpisodeStream test_stream(data.pool,
                                  stream_config(data.split.test_classes, "test",
                                                spec.train.test_batches, spec.train, eval_seed));
        auto result = adapt_and_evaluate(params, mcfg, test_stream, spec.train.test_batches,
                                         steps, spec.train.adapt_rate,
                                         spec.train.adapt_optimizer,
                                         args.dump_features && k == 0 ? args.feature_batches : 0,
                                         Rng(eval_seed).derive("adapt").seed());
        if (k == 0) first = result;
        accs.push_back(result.mean.accuracy);
        f1s.push_back(result.mean.macro_f1);
        run_array.push_back({{"seed", eval_seed},
                             {"accuracy", result.mean.accuracy},
                             {"macro_f1", result.mean.macro_f1}});
        if (args.dump_episodes && k == 0) {
            std::ofstream eps((fs::path(args.out_dir) / "episodes.jsonl").string(),
                              std::ios::trunc);
            for (int b = 0; b < spec.train.test_batches; ++b)
                for (const auto& ep : test_stream.batch(0, b).episodes)
                    eps << episode_to_json(ep).dump() << "\n";
        }
    }

    nlohmann::json metrics = {{"adapt",
                               {{"mode", args.adapt},
                                {"steps", steps},
                                {"optimizer", to_string(spec.train.adapt_optimizer)},
                                {"rate", spec.train.adapt_rate}}},
                              {"runs", run_array},
                              {"accuracy_mean", mean_of(accs)},
                              {"accuracy_std", stddev_of(accs)},
                              {"macro_f1_mean", mean_of(f1s)},
                              {"macro_f1_std", stddev_of(f1s)}};
    write_text_file(fs::path(args.out_dir) / "metrics.json", metrics.dump(2) + "\n");

    // per-step records and curve table from the first run
    std::string steps_jsonl;
    for (const auto& r : first.step_records) {
        nlohmann::json j = {{"batch", r.batch},
                            {"episode", r.episode},
                            {"step", r.step},
                            {"query_loss", r.query_loss},
                            {"query_accuracy", r.query_accuracy}};
        steps_jsonl += j.dump() + "\n";
    }
    write_text_file(fs::path(args.out_dir) / "steps.jsonl", steps_jsonl);
    std::string curves = "step,query_loss,query_accuracy,episodes\n";
    for (const auto& p : first.curves())
        curves += std::to_string(p.step) + "," + fmt_g17(p.loss) + "," + fmt_g17(p.accuracy) +
                  "," + std::to_string(p.episodes) + "\n";
    write_text_file(fs::path(args.out_dir) / "curves.csv", curves);

    if (args.dump_features) {
        if (first.dumps.empty()) throw ConfigError("no features collected; increase --feature-batches");
        const Index dims = first.dumps[0].features.size();
        std::string csv;
        for (Index d = 0; d < dims; ++d) csv += (d ? ",f" : "f") + std::to_string(d);
        csv += "\n";
        std::string meta;
        for (const auto& d : first.dumps) {
            for (Index i = 0; i < dims; ++i)
                csv += (i ? "," : "") + fmt_g17(d.features(i));
            csv += "\n";
            nlohmann::json j = {{"batch", d.batch},
                                {"episode", d.episode},
                                {"class", d.positive_class},
                                {"instance_id", d.instance_id},
                                {"label", d.label},
                                {"logits", {d.logits(0), d.logits(1)}}};
            meta += j.dump() + "\n";
        }
        write_text_file(fs::path(args.out_dir) / "features.csv", csv);
        write_text_file(fs::path(args.out_dir) / "features_meta.jsonl", meta);
    }

    write_metrics_stdout("test metrics (" + args.adapt + ", " + std::to_string(steps) + " steps)",
                         mean_of(accs), stddev_of(accs), mean_of(f1s), stddev_of(f1s));
}

Mat<double> read_features_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open features file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty features file: " + path);
    std::vector<std::vector<double>> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<double> row;
        std::size_t pos = 0;
        while (pos <= line.size()) {
            auto comma = line.find(',', pos);
            const std::string cell =
                line.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw DataError(path + ":" + std::to_string(lineno) + ": bad number '" + cell +
                                "'");
            }
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        if (!rows.empty() && row.size() != rows[0].size())
            throw DataError(path + ":" + std::to_string(lineno) + ": ragged row");
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw DataError("features file has no data rows: " + path);
    // rows are samples; the analysis convention is dims x samples
    Mat<double> F(static_cast<Index>(rows[0].size()), static_cast<Index>(rows.size()));
    for (std::size_t s = 0; s < rows.size(); ++s)
        for (std::size_t d = 0; d < rows[s].size(); ++d)
            F(static_cast<Index>(d), static_cast<Index>(s)) = rows[s][d];
    return F;
}

template <class S>
void sweep_impl(const ExperimentSpec& spec, const SweepArgs& args) {
    DataInputs data = load_inputs(spec);
    MatcherConfig mcfg = resolved_matcher(spec, data);
    fs::create_directories(args.out_dir);
    nlohmann::json resolved = spec.to_json();
    resolved["sweep"] = {{"mode", args.mode},
                         {"layers", args.layers},
                         {"heads", args.heads},
                         {"sizes", args.sizes},
                         {"seeds", args.seeds}};
    write_text_file(fs::path(args.out_dir) / "resolved_spec.json", resolved.dump(2) + "\n");

    SweepResult result;
    std::string csv;
    nlohmann::json cells = nlohmann::json::array();
    if (args.mode == "heads" || args.mode == "layers") {
        result = head_layer_sweep<S>(mcfg, spec.train, data.pool, data.split, data.vocab,
                                     args.layers, args.heads, args.seeds);
        csv = "layers,heads,seed,cov_score\n";
        for (const auto& r : result.records)
            csv += std::to_string(r.layers) + "," + std::to_string(r.heads) + "," +
                   std::to_string(r.seed) + "," + fmt_g17(r.value) + "\n";
        for (int layers : args.layers)
            for (int heads : args.heads) {
                std::vector<double> vals;
                for (const auto& r : result.records)
                    if (r.layers == layers && r.heads == heads) vals.push_back(r.value);
                cells.push_back({{"layers", layers},
                                 {"heads", heads},
                                 {"cov_score_mean", mean_of(vals)},
                                 {"cov_score_std", stddev_of(vals)}});
            }
    } else if (args.mode == "support") {
        result = support_sweep<S>(mcfg, spec.train, data.pool, data.split, data.vocab, args.sizes,
                                  args.seeds);
        csv = "support_size,seed,macro_f1\n";
        for (const auto& r : result.records)
            csv += std::to_string(r.support_size) + "," + std::to_string(r.seed) + "," +
                   fmt_g17(r.value) + "\n";
        for (int size : args.sizes) {
            std::vector<double> vals;
            for (const auto& r : result.records)
                if (r.support_size == size) vals.push_back(r.value);
            cells.push_back({{"support_size", size},
                             {"macro_f1_mean", mean_of(vals)},
                             {"macro_f1_std", stddev_of(vals)}});
        }
    } else {
        throw ConfigError("invalid sweep mode '" + args.mode + "' (valid: heads, layers, support)");
    }
    write_text_file(fs::path(args.out_dir) / "sweep.csv", csv);
    nlohmann::json summary = {{"metric", result.metric}, {"cells", cells}};
    write_text_file(fs::path(args.out_dir) / "sweep.json", summary.dump(2) + "\n");
    std::printf("%s\n", summary.dump(2).c_str());
}

} // namespace

ExperimentSpec ExperimentSpec::from_json(const nlohmann::json& j) {
    ExperimentSpec s;
    s.corpus = j.value("corpus", "");
    s.embeddings = j.value("embeddings", "");
    s.split = j.value("split", "");
    s.bundle = j.value("bundle", "");
    s.max_len = j.value("max_len", 64);
    if (j.contains("matcher")) s.matcher = j["matcher"].get<MatcherConfig>();
    // per-family training defaults; explicit spec fields still win
    if (s.matcher.kind == MatcherKind::minitransformer) {
        s.train.inner_rate = 2e-3;
        s.train.outer_rate = 2e-5;
        s.train.adapt_rate = 2e-5;
        s.train.adapt_optimizer = AdaptOptimizer::adam;
    }
    if (j.contains("train")) fosm::from_json(j["train"], s.train);
    s.precision = j.value("precision", "f64");
    if (s.precision != "f64" && s.precision != "f32")
        throw ConfigError("precision must be \"f64\" or \"f32\"");
    return s;
}

nlohmann::json ExperimentSpec::to_json() const {
    return {{"corpus", corpus},   {"embeddings", embeddings}, {"split", split},
            {"bundle", bundle},   {"max_len", max_len},       {"matcher", matcher},
            {"train", train},     {"precision", precision},   {"tool", kToolVersion}};
}

ExperimentSpec ExperimentSpec::load(const std::string& path) {
    return from_json(parse_json_file(resolve_path(path)));
}

void cmd_prepare(const PrepareArgs& args) {
    auto instances = load_dataset(resolve_path(args.corpus));
    auto split =
        split_classes(instances, SplitSpec::from_json(parse_json_file(resolve_path(args.split))));
    auto vocab = build_vocab(instances, resolve_path(args.embeddings),
                             static_cast<std::size_t>(args.max_len));

    fs::create_directories(args.out_dir);
    nlohmann::json meta = {{"tool", kToolVersion},
                           {"max_len", args.max_len},
                           {"embed_dim", vocab.dim()},
                           {"vocab_size", vocab.size()},
                           {"instances", instances.size()},
                           {"classes",
                            {{"train", split.train_classes.size()},
                             {"val", split.val_classes.size()},
                             {"test", split.test_classes.size()}}}};
    write_text_file(fs::path(args.out_dir) / "bundle.json", meta.dump(2) + "\n");
    write_text_file(fs::path(args.out_dir) / "vocab.json",
                    nlohmann::json{{"tokens", vocab.tokens()}}.dump() + "\n");
    ag::ParamSet<double> table;
    table.add("table", vocab.table());
    save_checkpoint((fs::path(args.out_dir) / "vocab_table.ftns").string(), table,
                    {{"embed_dim", vocab.dim()}});
    write_text_file(fs::path(args.out_dir) / "split.json", split_to_json(split).dump(2) + "\n");

    std::string lines;
    for (std::size_t i = 0; i < instances.size(); ++i) {
        auto seq = encode_text(instances[i].text, vocab, static_cast<std::size_t>(args.max_len));
        nlohmann::json j = {{"id", i},
                            {"label", instances[i].label},
                            {"indices", seq.indices},
                            {"length", seq.length}};
        if (instances[i].num_aspects) j["num_aspects"] = *instances[i].num_aspects;
        lines += j.dump() + "\n";
    }
    write_text_file(fs::path(args.out_dir) / "instances.jsonl", lines);
    std::printf("prepared %zu instances, %lld tokens, %zu/%zu/%zu classes -> %s\n",
                instances.size(), static_cast<long long>(vocab.size()),
                split.train_classes.size(), split.val_classes.size(), split.test_classes.size(),
                args.out_dir.c_str());
}

void cmd_train(const TrainArgs& args) {
    // --matcher is patched into the raw spec before parsing so the per-family
    // training defaults follow the effective kind
    nlohmann::json raw = parse_json_file(resolve_path(args.spec_path));
    if (args.matcher) {
        matcher_kind_from_string(*args.matcher); // validate, listing the kinds
        raw["matcher"]["kind"] = *args.matcher;
    }
    ExperimentSpec spec = ExperimentSpec::from_json(raw);
    if (args.method) spec.train.method = train_method_from_string(*args.method);
    if (args.seed) spec.train.seed = *args.seed;
    if (args.precision) spec.precision = *args.precision;
    if (spec.precision != "f64" && spec.precision != "f32")
        throw ConfigError("precision must be \"f64\" or \"f32\"");
    if (args.out_dir.empty()) throw ConfigError("train: --out is required");
    if (spec.precision == "f32") train_impl<float>(spec, args.out_dir);
    else train_impl<double>(spec, args.out_dir);
}

void cmd_eval(const EvalArgs& args) {
    ExperimentSpec spec = ExperimentSpec::load(args.spec_path);
    if (args.seed) spec.train.seed = *args.seed;
    if (args.out_dir.empty()) throw ConfigError("eval: --out is required");
    if (args.runs < 1) throw ConfigError("eval: --runs must be >= 1");
    auto ck = load_checkpoint(resolve_path(args.checkpoint));
    if (spec.precision == "f32") eval_impl<float>(spec, args, ck);
    else eval_impl<double>(spec, args, ck);
}

void cmd_analyze(const AnalyzeArgs& args) {
    fs::create_directories(args.out_dir);
    if (args.mode == "cov") {
        auto F = read_features_csv(resolve_path(args.input));
        const double score = cov_score(F, args.offdiag_only);
        nlohmann::json j = {{"cov_score", score},
                            {"offdiag_only", args.offdiag_only},
                            {"dims", F.rows()},
                            {"samples", F.cols()}};
        write_text_file(fs::path(args.out_dir) / "cov.json", j.dump(2) + "\n");
        std::printf("cov_score %s (%lld dims, %lld samples)\n", fmt_g17(score).c_str(),
                    static_cast<long long>(F.rows()), static_cast<long long>(F.cols()));
    } else if (args.mode == "pca") {
        auto F = read_features_csv(resolve_path(args.input));
        auto pca = pca_project(F, args.k);
        std::string scores = "sample";
        for (int c = 0; c < args.k; ++c) scores += ",pc" + std::to_string(c + 1);
        scores += "\n";
        for (Index s = 0; s < pca.scores.cols(); ++s) {
            scores += std::to_string(s);
            for (Index c = 0; c < pca.scores.rows(); ++c) scores += "," + fmt_g17(pca.scores(c, s));
            scores += "\n";
        }
        write_text_file(fs::path(args.out_dir) / "pca_scores.csv", scores);
        std::string comps = "dim";
        for (int c = 0; c < args.k; ++c) comps += ",pc" + std::to_string(c + 1);
        comps += "\n";
        for (Index d = 0; d < pca.components.rows(); ++d) {
            comps += std::to_string(d);
            for (Index c = 0; c < pca.components.cols(); ++c)
                comps += "," + fmt_g17(pca.components(d, c));
            comps += "\n";
        }
        write_text_file(fs::path(args.out_dir) / "pca_components.csv", comps);
        std::vector<double> ev(pca.explained.data(), pca.explained.data() + pca.explained.size());
        nlohmann::json j = {{"k", args.k}, {"explained_variance", ev}};
        write_text_file(fs::path(args.out_dir) / "pca.json", j.dump(2) + "\n");
        std::printf("pca: wrote %d components over %lld samples\n", args.k,
                    static_cast<long long>(pca.scores.cols()));
    } else if (args.mode == "curves") {
        std::ifstream in(resolve_path(args.input));
        if (!in) throw DataError("cannot open step records: " + args.input);
        std::vector<StepRecord> records;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(line);
            } catch (const nlohmann::json::exception& e) {
                throw DataError(args.input + ":" + std::to_string(lineno) + ": " + e.what());
            }
            records.push_back({j.value("batch", 0), j.value("episode", 0), j.value("step", 0),
                               j.value("query_loss", 0.0), j.value("query_accuracy", 0.0)});
        }
        if (records.empty()) throw DataError("no step records in " + args.input);
        std::string csv = "step,query_loss,query_accuracy,episodes\n";
        for (const auto& p : step_curves(records))
            csv += std::to_string(p.step) + "," + fmt_g17(p.loss) + "," + fmt_g17(p.accuracy) +
                   "," + std::to_string(p.episodes) + "\n";
        write_text_file(fs::path(args.out_dir) / "curves.csv", csv);
        std::printf("%s", csv.c_str());
    } else if (args.mode == "metrics") {
        std::ifstream in(resolve_path(args.input));
        if (!in) throw DataError("cannot open metadata records: " + args.input);
        std::vector<int> preds, labels;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            auto j = nlohmann::json::parse(line, nullptr, false);
            if (j.is_discarded()) throw DataError("invalid JSONL in " + args.input);
            const auto logits = j["logits"].get<std::vector<double>>();
            preds.push_back(logits[1] >= logits[0] ? 1 : 0);
            labels.push_back(j["label"].get<int>());
        }
        auto m = classification_metrics(preds, labels);
        nlohmann::json j = {{"accuracy", m.accuracy}, {"macro_f1", m.macro_f1}, {"n", preds.size()}};
        write_text_file(fs::path(args.out_dir) / "metrics.json", j.dump(2) + "\n");
        std::printf("accuracy %.4f  macro-F1 %.4f  (n=%zu)\n", m.accuracy, m.macro_f1,
                    preds.size());
    } else {
        throw ConfigError("invalid analyze mode '" + args.mode +
                          "' (valid: cov, pca, curves, metrics)");
    }
}

void cmd_sweep(const SweepArgs& args) {
    ExperimentSpec spec = ExperimentSpec::load(args.spec_path);
    if (args.seed) spec.train.seed = *args.seed;
    if (args.out_dir.empty()) throw ConfigError("sweep: --out is required");
    if (args.seeds < 1) throw ConfigError("sweep: --seeds must be >= 1");
    if (spec.precision == "f32") sweep_impl<float>(spec, args);
    else sweep_impl<double>(spec, args);
}

int run_guarded(const std::function<void()>& fn) {
    try {
        fn();
        return kExitOk;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return kExitData;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

} // namespace fosm::cli
