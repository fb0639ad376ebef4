#pragma once

#include <string>

#include <json.hpp>

#include "fosm/core/errors.hpp"

namespace fosm {

enum class TrainMethod { naive, maml };
enum class AdaptOptimizer { sgd, adam };

inline std::string to_string(TrainMethod m) { return m == TrainMethod::naive ? "naive" : "maml"; }

inline TrainMethod train_method_from_string(const std::string& s) {
    if (s == "naive") return TrainMethod::naive;
    if (s == "maml") return TrainMethod::maml;
    throw ConfigError("invalid method '" + s + "' (valid: naive, maml)");
}

inline std::string to_string(AdaptOptimizer o) {
    return o == AdaptOptimizer::sgd ? "sgd" : "adam";
}

inline AdaptOptimizer adapt_optimizer_from_string(const std::string& s) {
    if (s == "sgd") return AdaptOptimizer::sgd;
    if (s == "adam") return AdaptOptimizer::adam;
    throw ConfigError("invalid adapt optimizer '" + s + "' (valid: sgd, adam)");
}

// Everything the optimization loops need. Defaults carry the classical
// matcher recipe; transformer runs override the rates
// (inner 2e-3 / outer 2e-5 / adapt Adam 2e-5).
struct TrainConfig {
    TrainMethod method = TrainMethod::naive;
    double inner_rate = 0.1;     // alpha: inner-level plain gradient descent
    double outer_rate = 1e-3;    // beta: outer-level Adam (also the naive Adam rate)
    int inner_steps = 1;
    bool second_order = true;    // false treats adapted parameters as constant
    int batch_size = 5;          // |C_p| meta-tasks per batch
    int negative_classes = 5;    // |C_n|
    int support_size = 10;
    int query_size = 10;
    int train_batches = 400;
    int val_batches = 300;
    int test_batches = 300;
    int max_epochs = 50;
    bool early_stop = true;
    int patience = 3;
    int adapt_steps = 3;         // test-time updates on the support set
    double adapt_rate = 0.1;
    AdaptOptimizer adapt_optimizer = AdaptOptimizer::sgd;
    double grad_clip = 0.0;      // global-norm clip; 0 disables
    bool stratify = true;
    std::string reference_mode = "any";
    std::uint64_t seed = 0;

    void validate() const {
        if (inner_rate < 0 || outer_rate <= 0) throw ConfigError("learning rates must be positive");
        if (inner_steps < 1) throw ConfigError("inner_steps must be >= 1");
        if (batch_size < 1 || support_size < 1 || query_size < 1)
            throw ConfigError("batch and set sizes must be >= 1");
        if (patience < 1) throw ConfigError("patience must be >= 1");
        if (adapt_steps < 0) throw ConfigError("adapt_steps must be >= 0");
        if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"method", to_string(c.method)},
         {"inner_rate", c.inner_rate},
         {"outer_rate", c.outer_rate},
         {"inner_steps", c.inner_steps},
         {"second_order", c.second_order},
         {"batch_size", c.batch_size},
         {"negative_classes", c.negative_classes},
         {"support_size", c.support_size},
         {"query_size", c.query_size},
         {"train_batches", c.train_batches},
         {"val_batches", c.val_batches},
         {"test_batches", c.test_batches},
         {"max_epochs", c.max_epochs},
         {"early_stop", c.early_stop},
         {"patience", c.patience},
         {"adapt_steps", c.adapt_steps},
         {"adapt_rate", c.adapt_rate},
         {"adapt_optimizer", to_string(c.adapt_optimizer)},
         {"grad_clip", c.grad_clip},
         {"stratify", c.stratify},
         {"reference_mode", c.reference_mode},
         {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
    if (j.contains("method")) c.method = train_method_from_string(j["method"].get<std::string>());
    c.inner_rate = j.value("inner_rate", c.inner_rate);
    c.outer_rate = j.value("outer_rate", c.outer_rate);
    c.inner_steps = j.value("inner_steps", c.inner_steps);
    c.second_order = j.value("second_order", c.second_order);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.negative_classes = j.value("negative_classes", c.negative_classes);
    c.support_size = j.value("support_size", c.support_size);
    c.query_size = j.value("query_size", c.query_size);
    c.train_batches = j.value("train_batches", c.train_batches);
    c.val_batches = j.value("val_batches", c.val_batches);
    c.test_batches = j.value("test_batches", c.test_batches);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.early_stop = j.value("early_stop", c.early_stop);
    c.patience = j.value("patience", c.patience);
    c.adapt_steps = j.value("adapt_steps", c.adapt_steps);
    c.adapt_rate = j.value("adapt_rate", c.adapt_rate);
    if (j.contains("adapt_optimizer"))
        c.adapt_optimizer = adapt_optimizer_from_string(j["adapt_optimizer"].get<std::string>());
    c.grad_clip = j.value("grad_clip", c.grad_clip);
    c.stratify = j.value("stratify", c.stratify);
    c.reference_mode = j.value("reference_mode", c.reference_mode);
    c.seed = j.value("seed", c.seed);
}

} // namespace fosm
