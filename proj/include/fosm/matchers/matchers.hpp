#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "fosm/ag/graph.hpp"
#include "fosm/ag/ops.hpp"
#include "fosm/ag/params.hpp"
#include "fosm/core/errors.hpp"
#include "fosm/core/rng.hpp"
#include "fosm/corpus/vocab.hpp"
#include "fosm/episode/episode.hpp"
#include "fosm/matchers/config.hpp"
#include "fosm/matchers/layers.hpp"
#include "fosm/matchers/transformer.hpp"

namespace fosm {

template <class S>
struct MatchVars {
    ag::Var<S> logits;   // 2 x 1
    ag::Var<S> features; // pre-output-layer vector
};

// Value snapshot of one (reference, candidate) evaluation. Logits are indexed
// by label: entry 1 is the same-class score.
struct MatchOutput {
    Vec<double> logits;
    Vec<double> features;
    int predicted() const { return logits(1) >= logits(0) ? 1 : 0; }
};

namespace detail {

template <class S>
Mat<S> xavier_uniform(Rng& rng, Index rows, Index cols) {
    const double lim = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Mat<S> m(rows, cols);
    for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rows; ++i) m(i, j) = static_cast<S>(rng.uniform(-lim, lim));
    return m;
}

template <class S>
Mat<S> normal_init(Rng& rng, Index rows, Index cols, double stddev) {
    Mat<S> m(rows, cols);
    for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rows; ++i) m(i, j) = static_cast<S>(rng.normal() * stddev);
    return m;
}

} // namespace detail

// All trainable tensors of one matcher. The embedding table is part of the
// parameters and receives gradient updates; the PAD column stays zero because
// padded positions are masked out before anything depends on them.
template <class S>
ag::ParamSet<S> init_matcher_params(const MatcherConfig& cfg_in, const Vocabulary& vocab,
                                    Rng rng) {
    MatcherConfig cfg = cfg_in;
    cfg.embed_dim = static_cast<int>(vocab.dim());
    cfg.vocab_size = vocab.size();
    cfg.validate();

    ag::ParamSet<S> p;
    const int dh = cfg.hidden_dim;
    if (cfg.kind == MatcherKind::minitransformer) {
        const int dm = cfg.tf.d_model;
        p.add("tf.embed", detail::normal_init<S>(rng, dm, vocab.size() + 2, 0.02));
        p.add("tf.pos", detail::normal_init<S>(rng, dm, cfg.tf.max_positions, 0.02));
        p.add("tf.emb_ln.g", Mat<S>::Ones(dm, 1));
        p.add("tf.emb_ln.b", Mat<S>::Zero(dm, 1));
        for (int l = 0; l < cfg.tf.layers; ++l) {
            const std::string L = "tf.l" + std::to_string(l) + ".";
            for (const char* w : {"attn.Wq", "attn.Wk", "attn.Wv", "attn.Wo"})
                p.add(L + w, detail::xavier_uniform<S>(rng, dm, dm));
            for (const char* b : {"attn.bq", "attn.bk", "attn.bv", "attn.bo"})
                p.add(L + b, Mat<S>::Zero(dm, 1));
            p.add(L + "ln1.g", Mat<S>::Ones(dm, 1));
            p.add(L + "ln1.b", Mat<S>::Zero(dm, 1));
            p.add(L + "ff.W1", detail::xavier_uniform<S>(rng, cfg.tf.d_ff, dm));
            p.add(L + "ff.b1", Mat<S>::Zero(cfg.tf.d_ff, 1));
            p.add(L + "ff.W2", detail::xavier_uniform<S>(rng, dm, cfg.tf.d_ff));
            p.add(L + "ff.b2", Mat<S>::Zero(dm, 1));
            p.add(L + "ln2.g", Mat<S>::Ones(dm, 1));
            p.add(L + "ln2.b", Mat<S>::Zero(dm, 1));
        }
        p.add("out.W", detail::xavier_uniform<S>(rng, 2, dm));
        p.add("out.b", Mat<S>::Zero(2, 1));
        return p;
    }

    p.add("embed", vocab.table().template cast<S>());
    p.add("gate.Wi", detail::xavier_uniform<S>(rng, dh, cfg.embed_dim));
    p.add("gate.bi", Mat<S>::Zero(dh, 1));
    p.add("gate.Wu", detail::xavier_uniform<S>(rng, dh, cfg.embed_dim));
    p.add("gate.bu", Mat<S>::Zero(dh, 1));

    if (cfg.kind == MatcherKind::bica || cfg.kind == MatcherKind::ca) {
        auto slots = aggregator_slots("agg", cfg.kernel_widths.size());
        for (std::size_t i = 0; i < cfg.kernel_widths.size(); ++i) {
            const int k = cfg.kernel_widths[i];
            p.add(slots.weights[i],
                  detail::xavier_uniform<S>(rng, cfg.conv_channels, dh * k));
            p.add(slots.biases[i], Mat<S>::Zero(cfg.conv_channels, 1));
        }
        p.add("out.W", detail::xavier_uniform<S>(rng, 2, cfg.feature_dim()));
        p.add("out.b", Mat<S>::Zero(2, 1));
    } else if (cfg.kind == MatcherKind::sn) {
        p.add("sn.log_tau", Mat<S>::Zero(1, 1));
    }
    return p;
}

namespace detail {

// Forward passes work on sequences packed to their true length: appended PAD
// positions would only add exact-zero terms, but vectorized reductions
// regroup sums by width, so keeping them would cost bit-exact PAD invariance.
// The mask-aware layer ops remain for callers that batch padded inputs.
template <class S>
ag::Var<S> embed_sequence(ag::Graph<S>& g, const ag::BoundParams<S>& P,
                          const TokenSequence& seq) {
    std::vector<int> idx(seq.indices.begin(),
                         seq.indices.begin() + static_cast<std::ptrdiff_t>(seq.length));
    return g.gather_cols(P["embed"], std::move(idx));
}

template <class S>
ag::Var<S> encode_gated(ag::Graph<S>& g, const ag::BoundParams<S>& P, const TokenSequence& seq) {
    auto E = embed_sequence(g, P, seq);
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(seq.length), 1);
    return gate_encode(E, mask, P["gate.Wi"], P["gate.bi"], P["gate.Wu"], P["gate.bu"]);
}

// Sentence vector for SN/OWP: gated encoding, max-pooled over real positions.
template <class S>
ag::Var<S> encode_pooled(ag::Graph<S>& g, const ag::BoundParams<S>& P, const TokenSequence& seq) {
    return ag::masked_rowwise_max(encode_gated(g, P, seq), seq.length);
}

inline std::vector<std::uint8_t> ones_mask(std::int32_t length) {
    return std::vector<std::uint8_t>(static_cast<std::size_t>(length), 1);
}

} // namespace detail

// Bidirectional compare-aggregate. One shared encoder, non-parametric
// attention and comparison in both directions, one shared aggregation CNN,
// single linear output over [f_r, f].
template <class S>
MatchVars<S> forward_bica(ag::Graph<S>& g, const ag::BoundParams<S>& P, const MatcherConfig& cfg,
                          const TokenSequence& reference, const TokenSequence& candidate,
                          bool training, Rng& rng) {
    auto H_r = detail::encode_gated(g, P, reference);
    auto H = detail::encode_gated(g, P, candidate);
    auto [aligned_r, aligned] = align_attend(H_r, H, detail::ones_mask(reference.length),
                                             detail::ones_mask(candidate.length));
    auto C_r = compare(aligned_r, H);
    auto C = compare(aligned, H_r);
    auto slots = aggregator_slots("agg", cfg.kernel_widths.size());
    auto f_r = aggregate(C_r, candidate.length, P, slots, cfg.kernel_widths, cfg.dropout, training,
                         rng);
    auto f = aggregate(C, reference.length, P, slots, cfg.kernel_widths, cfg.dropout, training,
                       rng);
    MatchVars<S> out;
    out.features = g.concat_rows(f_r, f);
    out.logits = ag::linear(P["out.W"], out.features, P["out.b"]);
    return out;
}

// One-directional variant: only the reference-to-candidate comparison.
template <class S>
MatchVars<S> forward_ca(ag::Graph<S>& g, const ag::BoundParams<S>& P, const MatcherConfig& cfg,
                        const TokenSequence& reference, const TokenSequence& candidate,
                        bool training, Rng& rng) {
    auto H_r = detail::encode_gated(g, P, reference);
    auto H = detail::encode_gated(g, P, candidate);
    auto weights_r = ag::masked_softmax_cols(g.matmul(g.transpose(H_r), H),
                                             detail::ones_mask(reference.length));
    auto aligned_r = g.matmul(H_r, weights_r);
    auto C_r = compare(aligned_r, H);
    auto slots = aggregator_slots("agg", cfg.kernel_widths.size());
    MatchVars<S> out;
    out.features = aggregate(C_r, candidate.length, P, slots, cfg.kernel_widths, cfg.dropout,
                             training, rng);
    out.logits = ag::linear(P["out.W"], out.features, P["out.b"]);
    return out;
}

// Siamese cosine matcher. Symmetric logits [s/tau, -s/tau] with a trainable
// temperature tau = exp(log_tau); a zero-norm side scores s = 0.
template <class S>
MatchVars<S> forward_sn(ag::Graph<S>& g, const ag::BoundParams<S>& P, const MatcherConfig& cfg,
                        const TokenSequence& reference, const TokenSequence& candidate,
                        bool /*training*/, Rng& /*rng*/) {
    (void)cfg;
    auto v_r = detail::encode_pooled(g, P, reference);
    auto v = detail::encode_pooled(g, P, candidate);
    const double norm_r = v_r.value().norm();
    const double norm_c = v.value().norm();
    ag::Var<S> s;
    if (norm_r == 0.0 || norm_c == 0.0) {
        s = g.zeros(1, 1);
    } else {
        auto dot = g.matmul(g.transpose(v_r), v);
        auto denom = g.sqrt(g.hadamard(ag::squared_frobenius(v_r), ag::squared_frobenius(v)));
        s = g.cdiv(dot, denom);
    }
    auto tau = g.exp(P["sn.log_tau"]);
    auto pos = g.cdiv(s, tau);
    MatchVars<S> out;
    // logits indexed by label: [different-class, same-class] = [-s/tau, s/tau]
    out.logits = g.concat_rows(g.neg(pos), pos);
    out.features = g.concat_rows(v_r, v);
    return out;
}

// One-way prototypical matcher. Positive prototype is the mean encoding of
// the reference plus the known positives handed in; the negative prototype is
// the zero vector. Logits are negated squared Euclidean distances.
template <class S>
MatchVars<S> forward_owp(ag::Graph<S>& g, const ag::BoundParams<S>& P, const MatcherConfig& cfg,
                         const TokenSequence& reference,
                         const std::vector<const TokenSequence*>& support_positives,
                         const TokenSequence& candidate, bool /*training*/, Rng& /*rng*/) {
    (void)cfg;
    auto proto = detail::encode_pooled(g, P, reference);
    for (const auto* seq : support_positives)
        proto = g.add(proto, detail::encode_pooled(g, P, *seq));
    proto = g.scale(proto, S(1) / static_cast<S>(support_positives.size() + 1));
    auto v = detail::encode_pooled(g, P, candidate);
    auto d_pos = ag::squared_frobenius(g.sub(v, proto));
    auto d_neg = ag::squared_frobenius(v);
    MatchVars<S> out;
    // logits indexed by label: entry 1 scores the positive prototype
    out.logits = g.concat_rows(g.neg(d_neg), g.neg(d_pos));
    out.features = v;
    return out;
}

// Positives of the support set; OWP's prototype is built from these plus the
// reference, regardless of which set the loss runs over.
inline std::vector<const TokenSequence*> support_positive_sequences(const Episode& ep) {
    std::vector<const TokenSequence*> out;
    for (const auto& item : ep.support)
        if (item.label == 1) out.push_back(&item.instance.seq);
    return out;
}

template <class S>
MatchVars<S> forward_pair(ag::Graph<S>& g, const ag::BoundParams<S>& P, const MatcherConfig& cfg,
                          const Episode& ep, const TokenSequence& candidate, bool training,
                          Rng& rng, bool use_support_prototype = true) {
    switch (cfg.kind) {
    case MatcherKind::bica:
        return forward_bica(g, P, cfg, ep.reference.seq, candidate, training, rng);
    case MatcherKind::ca:
        return forward_ca(g, P, cfg, ep.reference.seq, candidate, training, rng);
    case MatcherKind::sn:
        return forward_sn(g, P, cfg, ep.reference.seq, candidate, training, rng);
    case MatcherKind::owp: {
        std::vector<const TokenSequence*> proto;
        if (use_support_prototype) proto = support_positive_sequences(ep);
        return forward_owp(g, P, cfg, ep.reference.seq, proto, candidate, training, rng);
    }
    case MatcherKind::minitransformer: {
        auto t = forward_minitransformer(g, P, cfg, ep.reference.seq, candidate, training, rng);
        return {t.logits, t.features};
    }
    }
    throw ConfigError("unknown matcher kind");
}

enum class LossSet { support, query, both };

// Mean cross entropy of the matcher's logits over the chosen labeled set.
template <class S>
ag::Var<S> episode_loss(ag::Graph<S>& g, const ag::BoundParams<S>& P, const MatcherConfig& cfg,
                        const Episode& ep, LossSet which, bool training, Rng& rng,
                        bool use_support_prototype = true) {
    std::vector<const EpisodeItem*> items;
    if (which == LossSet::support || which == LossSet::both)
        for (const auto& it : ep.support) items.push_back(&it);
    if (which == LossSet::query || which == LossSet::both)
        for (const auto& it : ep.query) items.push_back(&it);
    if (items.empty()) throw ConfigError("episode_loss: empty labeled set");

    ag::Var<S> total;
    for (std::size_t i = 0; i < items.size(); ++i) {
        auto mv = forward_pair(g, P, cfg, ep, items[i]->instance.seq, training, rng,
                               use_support_prototype);
        auto ce = ag::cross_entropy(mv.logits, items[i]->label);
        total = i == 0 ? ce : g.add(total, ce);
    }
    return g.scale(total, S(1) / static_cast<S>(items.size()));
}

// Deterministic evaluation snapshot (dropout off).
template <class S>
MatchOutput eval_pair(const ag::ParamSet<S>& params, const MatcherConfig& cfg, const Episode& ep,
                      const TokenSequence& candidate, bool use_support_prototype = true) {
    ag::Graph<S> g;
    auto bound = ag::bind_leaves(g, params);
    Rng rng(0);
    auto mv = forward_pair(g, bound, cfg, ep, candidate, false, rng, use_support_prototype);
    MatchOutput out;
    out.logits = mv.logits.value().template cast<double>();
    out.features = mv.features.value().template cast<double>();
    return out;
}

} // namespace fosm
