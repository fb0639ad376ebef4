#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "fosm/corpus/load.hpp"
#include "fosm/metalearn/train.hpp"

namespace fosm {

// A split with k classes can host at most k-1 distinct positive classes per
// batch (one must remain for negatives), so the effective |C_p| is clamped to
// the split's class budget.
inline StreamConfig stream_config(const std::vector<std::string>& classes, const std::string& tag,
                                  int batches, const TrainConfig& tcfg, std::uint64_t master_seed) {
    if (classes.size() < 2)
        throw DataError("stream over '" + tag + "' needs at least 2 classes");
    StreamConfig s;
    s.classes = classes;
    s.batches_per_epoch = batches;
    s.batch_size = std::min<int>(tcfg.batch_size, static_cast<int>(classes.size()) - 1);
    s.negative_classes = std::min(tcfg.negative_classes, s.batch_size);
    s.sizes = {tcfg.support_size, tcfg.query_size};
    s.mode = reference_mode_from_string(tcfg.reference_mode);
    s.stratify = tcfg.stratify;
    s.master_seed = master_seed;
    s.tag = tag;
    return s;
}

template <class S>
struct RunOutput {
    TrainResult<S> train;
    EvalResult eval;
};

// One full pipeline pass: seeded initialization, training with early stop,
// then the test-time adaptation protocol on the test classes.
template <class S>
RunOutput<S> run_single(const MatcherConfig& mcfg, const TrainConfig& tcfg, const Pool& pool,
                        const ClassSplit& split, const Vocabulary& vocab,
                        int feature_batches = 0,
                        const std::function<void(const EpochRecord&)>& on_epoch = {}) {
    tcfg.validate();
    Rng init_rng = Rng(tcfg.seed).derive("init");
    auto params = init_matcher_params<S>(mcfg, vocab, init_rng);
    MatcherConfig resolved = mcfg;
    resolved.embed_dim = static_cast<int>(vocab.dim());
    resolved.vocab_size = vocab.size();

    EpisodeStream train_stream(pool, stream_config(split.train_classes, "train",
                                                   tcfg.train_batches, tcfg, tcfg.seed));
    EpisodeStream val_stream(pool, stream_config(split.val_classes, "val", tcfg.val_batches, tcfg,
                                                 tcfg.seed));
    EpisodeStream test_stream(pool, stream_config(split.test_classes, "test", tcfg.test_batches,
                                                  tcfg, tcfg.seed));

    RunOutput<S> out;
    out.train = train_matcher(resolved, tcfg, std::move(params), train_stream, val_stream,
                              on_epoch);
    out.eval = adapt_and_evaluate(out.train.params, resolved, test_stream, tcfg.test_batches,
                                  tcfg.adapt_steps, tcfg.adapt_rate, tcfg.adapt_optimizer,
                                  feature_batches, Rng(tcfg.seed).derive("adapt").seed());
    return out;
}

struct ExperimentResult {
    std::vector<double> accuracies;
    std::vector<double> macro_f1s;
    double accuracy_mean = 0, accuracy_std = 0;
    double f1_mean = 0, f1_std = 0;
};

// n_runs independent seeds (seed, seed + stride, ...); per-run metrics are the
// averages over all test batches, reported as mean and sample standard
// deviation. A stride of zero repeats the identical run.
template <class S>
ExperimentResult run_experiment(const MatcherConfig& mcfg, TrainConfig tcfg, const Pool& pool,
                                const ClassSplit& split, const Vocabulary& vocab, int n_runs,
                                std::uint64_t seed_stride = 1) {
    if (n_runs < 1) throw ConfigError("run_experiment: n_runs must be >= 1");
    ExperimentResult result;
    const std::uint64_t base_seed = tcfg.seed;
    for (int k = 0; k < n_runs; ++k) {
        tcfg.seed = base_seed + static_cast<std::uint64_t>(k) * seed_stride;
        auto run = run_single<S>(mcfg, tcfg, pool, split, vocab);
        result.accuracies.push_back(run.eval.mean.accuracy);
        result.macro_f1s.push_back(run.eval.mean.macro_f1);
    }
    result.accuracy_mean = mean_of(result.accuracies);
    result.accuracy_std = stddev_of(result.accuracies);
    result.f1_mean = mean_of(result.macro_f1s);
    result.f1_std = stddev_of(result.macro_f1s);
    return result;
}

} // namespace fosm
