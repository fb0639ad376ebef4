#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "fosm/analysis/stats.hpp"
#include "fosm/core/errors.hpp"
#include "fosm/episode/episode.hpp"
#include "fosm/matchers/matchers.hpp"
#include "fosm/metalearn/config.hpp"
#include "fosm/metalearn/optim.hpp"

namespace fosm {

// One or more plain gradient-descent steps on a differentiable objective,
// entirely inside the graph: the adapted vars keep their dependence on the
// starting vars, so an outer loss through them yields the full second-order
// gradient. With second_order off the inner gradients are detached and only
// the first-order path remains.
template <class S, class LossFn>
std::vector<ag::Var<S>> inner_adapt_vars(ag::Graph<S>& g, std::vector<ag::Var<S>> vars,
                                         LossFn&& loss_of, double alpha, int steps,
                                         bool second_order) {
    for (int s = 0; s < steps; ++s) {
        ag::Var<S> loss = loss_of(g, vars);
        if (!std::isfinite(static_cast<double>(loss.scalar())))
            throw NumericError("inner adaptation produced a non-finite loss");
        auto grads = g.gradients(loss, vars);
        for (std::size_t i = 0; i < vars.size(); ++i) {
            auto gi = second_order ? grads[i] : g.stop_grad(grads[i]);
            vars[i] = g.sub(vars[i], g.scale(gi, static_cast<S>(alpha)));
        }
    }
    return vars;
}

// Spec-level convenience: theta' = theta - alpha * grad L(theta, r, S),
// iterated `steps` times, returned as plain values.
template <class S>
ag::ParamSet<S> inner_adapt(const ag::ParamSet<S>& params, const MatcherConfig& mcfg,
                            const Episode& ep, double alpha, int steps, bool training, Rng rng) {
    ag::Graph<S> g;
    auto bound = ag::bind_leaves(g, params);
    auto loss_of = [&](ag::Graph<S>& gg, const std::vector<ag::Var<S>>& vars) {
        ag::BoundParams<S> view{&params, vars};
        return episode_loss(gg, view, mcfg, ep, LossSet::support, training, rng);
    };
    auto adapted = inner_adapt_vars(g, bound.vars, loss_of, alpha, steps, /*second_order=*/false);
    ag::ParamSet<S> out;
    for (std::size_t i = 0; i < params.size(); ++i)
        out.add(params.names()[i], adapted[i].value());
    return out;
}

namespace detail {

inline double cross_entropy_value(const Vec<double>& logits, int label) {
    const double m = logits.maxCoeff();
    const double lse = m + std::log((logits.array() - m).exp().sum());
    return lse - logits(label);
}

} // namespace detail

// Deterministic forward pass over one episode's query set; loss and
// predictions are computed from logit values with dropout off.
template <class S>
struct SetEvaluation {
    double mean_loss = 0.0;
    std::vector<int> predictions;
    std::vector<int> labels;
    std::vector<MatchOutput> outputs;
};

template <class S>
SetEvaluation<S> evaluate_query_set(const ag::ParamSet<S>& params, const MatcherConfig& mcfg,
                                    const Episode& ep, bool want_outputs) {
    ag::Graph<S> g;
    auto bound = ag::bind_leaves(g, params);
    Rng rng(0);
    SetEvaluation<S> out;
    for (const auto& item : ep.query) {
        auto mv = forward_pair(g, bound, mcfg, ep, item.instance.seq, false, rng);
        Vec<double> logits = mv.logits.value().template cast<double>();
        out.mean_loss += detail::cross_entropy_value(logits, item.label);
        out.predictions.push_back(logits(1) >= logits(0) ? 1 : 0);
        out.labels.push_back(item.label);
        if (want_outputs) {
            MatchOutput mo;
            mo.logits = logits;
            mo.features = mv.features.value().template cast<double>();
            out.outputs.push_back(std::move(mo));
        }
    }
    out.mean_loss /= static_cast<double>(ep.query.size());
    return out;
}

// One query instance's final-step artifacts, for feature dumps.
struct QueryDump {
    int batch = 0;
    int episode = 0;
    std::string positive_class;
    std::size_t instance_id = 0;
    int label = 0;
    Vec<double> logits;
    Vec<double> features;
};

struct EvalResult {
    std::vector<StepRecord> step_records; // one per (batch, episode, step)
    std::vector<Metrics> per_batch;       // pooled within batch, final step
    Metrics mean;                         // average of per_batch
    std::vector<QueryDump> dumps;         // final step, first feature_batches batches

    std::vector<StepPoint> curves() const { return step_curves(step_records); }
};

// Test-time protocol: every episode independently clones the initialization,
// takes `adapt_steps` optimizer steps on its support loss (fresh optimizer
// state per episode), and is scored on its query set after every step,
// step 0 included. Dropout is active during the adaptation steps, seeded per
// (batch, episode, step); query scoring always runs with dropout off.
template <class S>
EvalResult adapt_and_evaluate(const ag::ParamSet<S>& init, const MatcherConfig& mcfg,
                              const EpisodeStream& stream, int n_batches, int adapt_steps,
                              double adapt_rate, AdaptOptimizer opt, int feature_batches = 0,
                              std::uint64_t dropout_seed = 0) {
    EvalResult result;
    std::vector<double> accs, f1s;
    for (int b = 0; b < n_batches; ++b) {
        EpisodeBatch batch = stream.batch(0, b);
        std::vector<int> pooled_preds, pooled_labels;
        for (std::size_t e = 0; e < batch.episodes.size(); ++e) {
            const Episode& ep = batch.episodes[e];
            ag::ParamSet<S> params = init; // isolation: no mutual interference
            Sgd<S> sgd(adapt_rate);
            Adam<S> adam(adapt_rate);

            SetEvaluation<S> last;
            for (int step = 0; step <= adapt_steps; ++step) {
                if (step > 0) {
                    ag::Graph<S> g;
                    auto bound = ag::bind_leaves(g, params);
                    Rng drop = Rng(dropout_seed)
                                   .derive("adapt", static_cast<std::uint64_t>(b))
                                   .derive("ep", e)
                                   .derive("step", static_cast<std::uint64_t>(step));
                    auto loss =
                        episode_loss(g, bound, mcfg, ep, LossSet::support, true, drop);
                    if (!std::isfinite(static_cast<double>(loss.scalar())))
                        throw NumericError("test-time adaptation diverged");
                    auto gvars = g.gradients(loss, bound.vars);
                    auto grads = ag::grads_to_params(init, gvars);
                    if (!grads.all_finite())
                        throw NumericError("test-time adaptation produced non-finite gradients");
                    if (opt == AdaptOptimizer::sgd) sgd.step(params, grads);
                    else adam.step(params, grads);
                }
                last = evaluate_query_set(params, mcfg, ep,
                                          step == adapt_steps && b < feature_batches);
                auto m = classification_metrics(last.predictions, last.labels);
                result.step_records.push_back({b, static_cast<int>(e), step, last.mean_loss,
                                               m.accuracy});
            }
            pooled_preds.insert(pooled_preds.end(), last.predictions.begin(),
                                last.predictions.end());
            pooled_labels.insert(pooled_labels.end(), last.labels.begin(), last.labels.end());
            if (b < feature_batches) {
                for (std::size_t q = 0; q < ep.query.size(); ++q) {
                    QueryDump d;
                    d.batch = b;
                    d.episode = static_cast<int>(e);
                    d.positive_class = ep.positive_class;
                    d.instance_id = ep.query[q].instance.id;
                    d.label = ep.query[q].label;
                    d.logits = last.outputs[q].logits;
                    d.features = last.outputs[q].features;
                    result.dumps.push_back(std::move(d));
                }
            }
        }
        auto m = classification_metrics(pooled_preds, pooled_labels);
        result.per_batch.push_back(m);
        accs.push_back(m.accuracy);
        f1s.push_back(m.macro_f1);
    }
    result.mean.accuracy = mean_of(accs);
    result.mean.macro_f1 = mean_of(f1s);
    return result;
}

} // namespace fosm
