// Command-line entry point: reproducible few-shot one-class sequence-match
// experiments (prepare / train / eval / analyze / sweep).

#include <CLI11.hpp>

#include "fosm/cli/commands.hpp"

using namespace fosm;

int main(int argc, char** argv) {
    CLI::App app{"few-shot one-class sequence matching toolkit"};
    app.require_subcommand(1);

    cli::PrepareArgs prepare;
    auto* cmd_prepare = app.add_subcommand("prepare", "encode a corpus into a dataset bundle");
    cmd_prepare->add_option("--corpus", prepare.corpus, "JSONL corpus file")->required();
    cmd_prepare->add_option("--embeddings", prepare.embeddings, "word-vector text file")
        ->required();
    cmd_prepare->add_option("--split", prepare.split, "split spec JSON (lists or ratio+seed)")
        ->required();
    cmd_prepare->add_option("--out", prepare.out_dir, "output bundle directory")->required();
    cmd_prepare->add_option("--max-len", prepare.max_len, "token truncation length");

    cli::TrainArgs train;
    std::string train_method, train_matcher, train_precision;
    std::uint64_t train_seed = 0;
    auto* cmd_train = app.add_subcommand("train", "train a matcher per an experiment spec");
    cmd_train->add_option("--spec", train.spec_path, "experiment spec JSON")->required();
    cmd_train->add_option("--out", train.out_dir, "run directory")->required();
    auto* tm = cmd_train->add_option("--method", train_method, "naive | maml");
    auto* tk = cmd_train->add_option("--matcher", train_matcher,
                                     "bica | ca | sn | owp | minitransformer");
    auto* ts = cmd_train->add_option("--seed", train_seed, "master seed override");
    auto* tp = cmd_train->add_option("--precision", train_precision, "f64 | f32");

    cli::EvalArgs eval;
    std::uint64_t eval_seed = 0;
    int eval_steps = -1;
    auto* cmd_eval = app.add_subcommand("eval", "evaluate a checkpoint on the test classes");
    cmd_eval->add_option("--checkpoint", eval.checkpoint, "checkpoint container")->required();
    cmd_eval->add_option("--spec", eval.spec_path, "experiment spec JSON")->required();
    cmd_eval->add_option("--out", eval.out_dir, "output directory")->required();
    cmd_eval->add_option("--adapt", eval.adapt, "none | finetune | maml-init");
    auto* es = cmd_eval->add_option("--steps", eval_steps, "adaptation steps on the support set");
    cmd_eval->add_option("--runs", eval.runs, "evaluation stream seeds (mean +/- std)");
    cmd_eval->add_flag("--dump-features", eval.dump_features,
                       "write pre-output-layer query features");
    cmd_eval->add_option("--feature-batches", eval.feature_batches,
                         "test batches contributing features");
    auto* evs = cmd_eval->add_option("--seed", eval_seed, "master seed override");
    cmd_eval->add_flag("--dump-episodes", eval.dump_episodes, "write the audited episode stream");

    cli::AnalyzeArgs analyze;
    auto* cmd_analyze = app.add_subcommand("analyze", "post-hoc diagnostics");
    cmd_analyze->add_option("mode", analyze.mode, "cov | pca | curves | metrics")->required();
    cmd_analyze->add_option("input", analyze.input, "features.csv / steps.jsonl / meta.jsonl")
        ->required();
    cmd_analyze->add_option("--out", analyze.out_dir, "output directory")->required();
    cmd_analyze->add_option("--k", analyze.k, "PCA components");
    cmd_analyze->add_flag("--offdiag-only", analyze.offdiag_only,
                          "exclude the covariance diagonal");

    cli::SweepArgs sweep;
    std::uint64_t sweep_seed = 0;
    auto* cmd_sweep = app.add_subcommand("sweep", "grid studies over architecture or support size");
    cmd_sweep->add_option("mode", sweep.mode, "heads | layers | support")->required();
    cmd_sweep->add_option("--spec", sweep.spec_path, "experiment spec JSON")->required();
    cmd_sweep->add_option("--out", sweep.out_dir, "output directory")->required();
    cmd_sweep->add_option("--layers", sweep.layers, "layer counts")->delimiter(',');
    cmd_sweep->add_option("--heads", sweep.heads, "head counts")->delimiter(',');
    cmd_sweep->add_option("--sizes", sweep.sizes, "support sizes")->delimiter(',');
    cmd_sweep->add_option("--seeds", sweep.seeds, "seeds per cell");
    auto* sws = cmd_sweep->add_option("--seed", sweep_seed, "base seed override");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? cli::kExitOk : cli::kExitConfig;
    }

    return cli::run_guarded([&] {
        if (cmd_prepare->parsed()) {
            cli::cmd_prepare(prepare);
        } else if (cmd_train->parsed()) {
            if (tm->count()) train.method = train_method;
            if (tk->count()) train.matcher = train_matcher;
            if (ts->count()) train.seed = train_seed;
            if (tp->count()) train.precision = train_precision;
            cli::cmd_train(train);
        } else if (cmd_eval->parsed()) {
            if (es->count()) eval.steps = eval_steps;
            if (evs->count()) eval.seed = eval_seed;
            cli::cmd_eval(eval);
        } else if (cmd_analyze->parsed()) {
            cli::cmd_analyze(analyze);
        } else if (cmd_sweep->parsed()) {
            if (sws->count()) sweep.seed = sweep_seed;
            cli::cmd_sweep(sweep);
        }
    });
}
