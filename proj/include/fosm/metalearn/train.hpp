#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "fosm/metalearn/adapt.hpp"

namespace fosm {

// Tracks the best validation score; stops after `patience` consecutive
// non-improving epochs. Improvement is strictly greater.
class EarlyStopper {
public:
    explicit EarlyStopper(int patience) : patience_(patience) {}

    bool update(double score, int epoch) {
        if (score > best_) {
            best_ = score;
            best_epoch_ = epoch;
            since_ = 0;
            return true;
        }
        ++since_;
        return false;
    }

    bool should_stop() const { return since_ >= patience_; }
    double best() const { return best_; }
    int best_epoch() const { return best_epoch_; }

private:
    int patience_;
    double best_ = -std::numeric_limits<double>::infinity();
    int best_epoch_ = -1;
    int since_ = 0;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0; // mean per-episode loss over the epoch
    double val_accuracy = 0.0;
    double val_macro_f1 = 0.0;
    bool improved = false;
};

template <class S>
struct TrainResult {
    ag::ParamSet<S> params; // best validation checkpoint
    double best_val_f1 = 0.0;
    int best_epoch = -1;
    int epochs_run = 0;
    std::vector<EpochRecord> history;
};

namespace detail {

template <class S>
Rng batch_dropout_rng(const TrainConfig& tcfg, int epoch, int index) {
    return Rng(tcfg.seed)
        .derive("dropout", static_cast<std::uint64_t>(epoch))
        .derive("batch", static_cast<std::uint64_t>(index));
}

// Validation mirrors each method's evaluation protocol: naive scores the
// query sets as-is; MAML adapts each episode on its support set with the
// test-time recipe (adapt_steps of plain gradient descent at adapt_rate)
// before scoring, so early stopping selects the initialization that will
// actually be deployed.
template <class S>
Metrics validate(const ag::ParamSet<S>& params, const MatcherConfig& mcfg,
                 const TrainConfig& tcfg, const EpisodeStream& val_stream, int epoch) {
    std::vector<double> accs, f1s;
    for (int b = 0; b < tcfg.val_batches; ++b) {
        EpisodeBatch batch = val_stream.batch(epoch, b);
        std::vector<int> preds, labels;
        for (std::size_t e = 0; e < batch.episodes.size(); ++e) {
            const Episode& ep = batch.episodes[e];
            SetEvaluation<S> ev;
            if (tcfg.method == TrainMethod::maml && tcfg.adapt_steps > 0) {
                Rng drop = Rng(tcfg.seed)
                               .derive("val", static_cast<std::uint64_t>(epoch))
                               .derive("b", static_cast<std::uint64_t>(b))
                               .derive("e", e);
                auto adapted =
                    inner_adapt(params, mcfg, ep, tcfg.adapt_rate, tcfg.adapt_steps, true, drop);
                ev = evaluate_query_set(adapted, mcfg, ep, false);
            } else {
                ev = evaluate_query_set(params, mcfg, ep, false);
            }
            preds.insert(preds.end(), ev.predictions.begin(), ev.predictions.end());
            labels.insert(labels.end(), ev.labels.begin(), ev.labels.end());
        }
        auto m = classification_metrics(preds, labels);
        accs.push_back(m.accuracy);
        f1s.push_back(m.macro_f1);
    }
    return {mean_of(accs), mean_of(f1s)};
}

template <class S>
void ensure_finite(double loss, const ag::ParamSet<S>& grads, int epoch, int index,
                   double last_finite) {
    if (!std::isfinite(loss))
        throw NumericError("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(index) + " (non-finite loss; last finite loss " +
                           std::to_string(last_finite) + ")");
    if (!grads.all_finite())
        throw NumericError("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(index) + " (non-finite gradient; loss " +
                           std::to_string(loss) + ")");
}

// One naive batch: a single cross-entropy loss over S u Q of every episode,
// summed across the batch, one Adam step.
template <class S>
double naive_batch_step(ag::ParamSet<S>& params, Adam<S>& adam, const MatcherConfig& mcfg,
                        const TrainConfig& tcfg, const EpisodeBatch& batch, int epoch, int index,
                        double last_finite) {
    ag::Graph<S> g;
    auto bound = ag::bind_leaves(g, params);
    Rng drop = batch_dropout_rng<S>(tcfg, epoch, index);
    ag::Var<S> total;
    for (std::size_t e = 0; e < batch.episodes.size(); ++e) {
        auto loss = episode_loss(g, bound, mcfg, batch.episodes[e], LossSet::both, true, drop);
        total = e == 0 ? loss : g.add(total, loss);
    }
    const double value = static_cast<double>(total.scalar());
    auto grads = ag::grads_to_params(params, g.gradients(total, bound.vars));
    ensure_finite(value, grads, epoch, index, last_finite);
    clip_global_norm(grads, tcfg.grad_clip);
    adam.step(params, grads);
    return value / static_cast<double>(batch.episodes.size());
}

// One MAML batch (Algorithm 1 body): per episode, adapt on the support set
// with `inner_steps` gradient-descent steps, take the query loss at the
// adapted parameters, and accumulate the outer gradient of the SUM over the
// batch back at the shared initialization. Episodes get their own graphs;
// gradients add up because the outer loss is a sum.
template <class S>
double maml_batch_step(ag::ParamSet<S>& params, Adam<S>& adam, const MatcherConfig& mcfg,
                       const TrainConfig& tcfg, const EpisodeBatch& batch, int epoch, int index,
                       double last_finite) {
    ag::ParamSet<S> accum;
    for (std::size_t i = 0; i < params.size(); ++i)
        accum.add(params.names()[i],
                  Mat<S>::Zero(params.tensor(i).rows(), params.tensor(i).cols()));
    double outer_value = 0.0;

    for (std::size_t e = 0; e < batch.episodes.size(); ++e) {
        const Episode& ep = batch.episodes[e];
        ag::Graph<S> g;
        auto bound = ag::bind_leaves(g, params);
        Rng drop = batch_dropout_rng<S>(tcfg, epoch, index).derive("episode", e);

        auto support_loss = [&](ag::Graph<S>& gg, const std::vector<ag::Var<S>>& vars) {
            ag::BoundParams<S> view{&params, vars};
            return episode_loss(gg, view, mcfg, ep, LossSet::support, true, drop);
        };
        auto adapted = inner_adapt_vars(g, bound.vars, support_loss, tcfg.inner_rate,
                                        tcfg.inner_steps, tcfg.second_order);
        ag::BoundParams<S> adapted_view{&params, adapted};
        auto outer = episode_loss(g, adapted_view, mcfg, ep, LossSet::query, true, drop);
        outer_value += static_cast<double>(outer.scalar());
        auto grads = g.gradients(outer, bound.vars);
        for (std::size_t i = 0; i < accum.size(); ++i) accum.tensor(i) += grads[i].value();
    }
    ensure_finite(outer_value, accum, epoch, index, last_finite);
    clip_global_norm(accum, tcfg.grad_clip);
    adam.step(params, accum);
    return outer_value / static_cast<double>(batch.episodes.size());
}

} // namespace detail

// Episodic training with per-epoch validation and early stopping on
// validation macro-F1; returns the best checkpoint seen.
template <class S>
TrainResult<S> train_matcher(const MatcherConfig& mcfg, const TrainConfig& tcfg,
                             ag::ParamSet<S> params, const EpisodeStream& train_stream,
                             const EpisodeStream& val_stream,
                             const std::function<void(const EpochRecord&)>& on_epoch = {}) {
    tcfg.validate();
    Adam<S> adam(tcfg.outer_rate);
    EarlyStopper stopper(tcfg.patience);
    TrainResult<S> result;
    result.params = params;
    double last_finite = std::numeric_limits<double>::quiet_NaN();

    for (int epoch = 0; epoch < tcfg.max_epochs; ++epoch) {
        double loss_sum = 0.0;
        for (int b = 0; b < tcfg.train_batches; ++b) {
            EpisodeBatch batch = train_stream.batch(epoch, b);
            const double mean_loss =
                tcfg.method == TrainMethod::naive
                    ? detail::naive_batch_step(params, adam, mcfg, tcfg, batch, epoch, b,
                                               last_finite)
                    : detail::maml_batch_step(params, adam, mcfg, tcfg, batch, epoch, b,
                                              last_finite);
            loss_sum += mean_loss;
            last_finite = mean_loss;
        }

        auto val = detail::validate(params, mcfg, tcfg, val_stream, epoch);
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = tcfg.train_batches > 0 ? loss_sum / tcfg.train_batches : 0.0;
        rec.val_accuracy = val.accuracy;
        rec.val_macro_f1 = val.macro_f1;
        rec.improved = stopper.update(val.macro_f1, epoch);
        if (rec.improved) result.params = params;
        result.history.push_back(rec);
        result.epochs_run = epoch + 1;
        if (on_epoch) on_epoch(rec);
        if (tcfg.early_stop && stopper.should_stop()) break;
    }
    result.best_val_f1 = stopper.best();
    result.best_epoch = stopper.best_epoch();
    return result;
}

// Naive episodic training (spec operation): one combined loss over S u Q.
template <class S>
TrainResult<S> naive_train(const MatcherConfig& mcfg, TrainConfig tcfg, ag::ParamSet<S> params,
                           const EpisodeStream& train_stream, const EpisodeStream& val_stream,
                           const std::function<void(const EpochRecord&)>& on_epoch = {}) {
    tcfg.method = TrainMethod::naive;
    return train_matcher(mcfg, tcfg, std::move(params), train_stream, val_stream, on_epoch);
}

// MAML training (spec operation): bi-level optimization of the initialization.
template <class S>
TrainResult<S> maml_train(const MatcherConfig& mcfg, TrainConfig tcfg, ag::ParamSet<S> params,
                          const EpisodeStream& train_stream, const EpisodeStream& val_stream,
                          const std::function<void(const EpochRecord&)>& on_epoch = {}) {
    tcfg.method = TrainMethod::maml;
    return train_matcher(mcfg, tcfg, std::move(params), train_stream, val_stream, on_epoch);
}

} // namespace fosm
