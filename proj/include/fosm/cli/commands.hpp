#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fosm/matchers/config.hpp"
#include "fosm/metalearn/config.hpp"

namespace fosm::cli {

// Experiment spec: one JSON file naming the data, the matcher, and the
// training recipe. Relative data paths resolve against $FOSM_DATA_ROOT when
// it is set.
struct ExperimentSpec {
    std::string corpus;
    std::string embeddings;
    std::string split;
    std::string bundle; // prepared-bundle directory; alternative to the three above
    int max_len = 64;
    MatcherConfig matcher;
    TrainConfig train;
    std::string precision = "f64"; // "f64" (reproducible) or "f32" (faster)

    static ExperimentSpec from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
    static ExperimentSpec load(const std::string& path);
};

struct PrepareArgs {
    std::string corpus;
    std::string embeddings;
    std::string split;
    std::string out_dir;
    int max_len = 64;
};

struct TrainArgs {
    std::string spec_path;
    std::string out_dir;
    std::optional<std::string> method;  // overrides spec.train.method
    std::optional<std::string> matcher; // overrides spec.matcher.kind
    std::optional<std::uint64_t> seed;
    std::optional<std::string> precision;
};

struct EvalArgs {
    std::string checkpoint;
    std::string spec_path;
    std::string out_dir;
    std::string adapt = "finetune"; // none | finetune | maml-init
    std::optional<int> steps;       // default: 0 for none, spec's adapt_steps otherwise
    int runs = 1;
    bool dump_features = false;
    int feature_batches = 12;
    std::optional<std::uint64_t> seed;
    bool dump_episodes = false;
};

struct AnalyzeArgs {
    std::string mode; // cov | pca | curves | metrics
    std::string input;
    std::string out_dir;
    int k = 2;
    bool offdiag_only = false;
};

struct SweepArgs {
    std::string mode; // heads | layers | support
    std::string spec_path;
    std::string out_dir;
    std::vector<int> layers = {1, 6};
    std::vector<int> heads = {1, 2, 4, 8};
    std::vector<int> sizes = {1, 5, 10};
    int seeds = 3;
    std::optional<std::uint64_t> seed;
};

void cmd_prepare(const PrepareArgs& args);
void cmd_train(const TrainArgs& args);
void cmd_eval(const EvalArgs& args);
void cmd_analyze(const AnalyzeArgs& args);
void cmd_sweep(const SweepArgs& args);

// Exit codes shared by the CLI and the tests.
constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

// Maps thrown errors onto exit codes; used by main().
int run_guarded(const std::function<void()>& fn);

} // namespace fosm::cli
