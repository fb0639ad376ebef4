#pragma once

#include <string>
#include <vector>

#include "fosm/analysis/stats.hpp"
#include "fosm/metalearn/experiment.hpp"

namespace fosm {

struct SweepRecord {
    int layers = 0;
    int heads = 0;
    int support_size = 0;
    std::uint64_t seed = 0;
    double value = 0.0;
};

struct SweepResult {
    std::string metric; // "cov_score" or "macro_f1"
    std::vector<SweepRecord> records;

    double cell_mean(int layers, int heads, int support_size) const {
        double sum = 0;
        int n = 0;
        for (const auto& r : records)
            if (r.layers == layers && r.heads == heads && r.support_size == support_size) {
                sum += r.value;
                ++n;
            }
        if (n == 0) throw ConfigError("sweep cell is empty");
        return sum / n;
    }
};

// Feature matrix (dims x samples) from the final-step query dumps.
inline Mat<double> feature_matrix(const std::vector<QueryDump>& dumps) {
    if (dumps.empty()) throw ConfigError("no feature dumps collected");
    Mat<double> F(dumps[0].features.size(), static_cast<Index>(dumps.size()));
    for (std::size_t i = 0; i < dumps.size(); ++i) F.col(static_cast<Index>(i)) = dumps[i].features;
    return F;
}

// MAML-trains the mini-transformer at each (layers, heads) cell, extracts the
// adapted query features over the first `feature_batches` test batches
// (5 x 10 x 12 = 600 at the defaults), and records the covariance score.
template <class S>
SweepResult head_layer_sweep(MatcherConfig mcfg, TrainConfig tcfg, const Pool& pool,
                             const ClassSplit& split, const Vocabulary& vocab,
                             const std::vector<int>& layers_list,
                             const std::vector<int>& heads_list, int n_seeds,
                             int feature_batches = 12) {
    if (mcfg.kind != MatcherKind::minitransformer)
        throw ConfigError("head/layer sweep requires the mini-transformer");
    tcfg.method = TrainMethod::maml;
    SweepResult out;
    out.metric = "cov_score";
    const std::uint64_t base_seed = tcfg.seed;
    for (int layers : layers_list) {
        for (int heads : heads_list) {
            for (int k = 0; k < n_seeds; ++k) {
                MatcherConfig cell = mcfg;
                cell.tf.layers = layers;
                cell.tf.heads = heads;
                cell.tf.validate();
                TrainConfig run_cfg = tcfg;
                run_cfg.seed = base_seed + static_cast<std::uint64_t>(k);
                auto run = run_single<S>(cell, run_cfg, pool, split, vocab, feature_batches);
                const double score = cov_score(feature_matrix(run.eval.dumps));
                out.records.push_back({layers, heads, 0, run_cfg.seed, score});
            }
        }
    }
    return out;
}

// Retrains at each support-set size (query size fixed) and records the
// test macro-F1.
template <class S>
SweepResult support_sweep(const MatcherConfig& mcfg, TrainConfig tcfg, const Pool& pool,
                          const ClassSplit& split, const Vocabulary& vocab,
                          const std::vector<int>& sizes, int n_seeds) {
    SweepResult out;
    out.metric = "macro_f1";
    const std::uint64_t base_seed = tcfg.seed;
    for (int size : sizes) {
        if (size < 1) throw ConfigError("support size must be >= 1");
        for (int k = 0; k < n_seeds; ++k) {
            TrainConfig run_cfg = tcfg;
            run_cfg.support_size = size;
            run_cfg.seed = base_seed + static_cast<std::uint64_t>(k);
            auto run = run_single<S>(mcfg, run_cfg, pool, split, vocab);
            out.records.push_back({0, 0, size, run_cfg.seed, run.eval.mean.macro_f1});
        }
    }
    return out;
}

} // namespace fosm
