#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "fosm/ag/graph.hpp"
#include "fosm/ag/ops.hpp"
#include "fosm/ag/params.hpp"
#include "fosm/core/errors.hpp"
#include "fosm/corpus/types.hpp"
#include "fosm/matchers/config.hpp"

namespace fosm {

// Sequence-pair encoder in the BERT input style: [CLS] reference [SEP]
// candidate, token plus learned positional embeddings, an embedding layer
// norm, then post-norm blocks of multi-head self-attention and a two-layer
// feed-forward. The [CLS] state is the pair feature.
//
// Inputs are packed to their true lengths before concatenation, so padding
// can neither shift positions nor leak into attention.
template <class S>
struct TransformerOut {
    ag::Var<S> logits;
    ag::Var<S> features;
};

template <class S>
TransformerOut<S> forward_minitransformer(ag::Graph<S>& g, const ag::BoundParams<S>& P,
                                          const MatcherConfig& cfg, const TokenSequence& reference,
                                          const TokenSequence& candidate, bool training, Rng& rng) {
    const TransformerConfig& tf = cfg.tf;
    tf.validate();
    const int cls_id = static_cast<int>(cfg.vocab_size);
    const int sep_id = cls_id + 1;

    std::vector<int> ids;
    ids.reserve(static_cast<std::size_t>(reference.length + candidate.length) + 2);
    ids.push_back(cls_id);
    for (std::int32_t i = 0; i < reference.length; ++i)
        ids.push_back(reference.indices[static_cast<std::size_t>(i)]);
    ids.push_back(sep_id);
    for (std::int32_t i = 0; i < candidate.length; ++i)
        ids.push_back(candidate.indices[static_cast<std::size_t>(i)]);
    const Index T = static_cast<Index>(ids.size());
    if (T > tf.max_positions)
        throw ConfigError("combined sequence length " + std::to_string(T) +
                          " exceeds position table (" + std::to_string(tf.max_positions) + ")");

    std::vector<int> pos_ids(static_cast<std::size_t>(T));
    for (Index i = 0; i < T; ++i) pos_ids[static_cast<std::size_t>(i)] = static_cast<int>(i);

    auto x = g.add(g.gather_cols(P["tf.embed"], ids), g.gather_cols(P["tf.pos"], pos_ids));
    x = ag::layer_norm_cols(x, P["tf.emb_ln.g"], P["tf.emb_ln.b"], S(1e-5));
    x = ag::dropout(x, tf.dropout, training, rng);

    const int dk = tf.d_model / tf.heads;
    const S inv_sqrt_dk = S(1) / static_cast<S>(std::sqrt(static_cast<double>(dk)));

    for (int layer = 0; layer < tf.layers; ++layer) {
        const std::string L = "tf.l" + std::to_string(layer) + ".";
        auto q = ag::linear(P[L + "attn.Wq"], x, P[L + "attn.bq"]);
        auto k = ag::linear(P[L + "attn.Wk"], x, P[L + "attn.bk"]);
        auto v = ag::linear(P[L + "attn.Wv"], x, P[L + "attn.bv"]);

        ag::Var<S> heads_out;
        for (int h = 0; h < tf.heads; ++h) {
            auto qh = g.slice_rows(q, h * dk, dk);
            auto kh = g.slice_rows(k, h * dk, dk);
            auto vh = g.slice_rows(v, h * dk, dk);
            // scores(i, j) = key_i . query_j / sqrt(dk); softmax over keys
            auto scores = g.scale(g.matmul(g.transpose(kh), qh), inv_sqrt_dk);
            auto attn = g.softmax_cols(scores);
            auto oh = g.matmul(vh, attn);
            heads_out = h == 0 ? oh : g.concat_rows(heads_out, oh);
        }
        auto attn_out = ag::linear(P[L + "attn.Wo"], heads_out, P[L + "attn.bo"]);
        attn_out = ag::dropout(attn_out, tf.dropout, training, rng);
        x = ag::layer_norm_cols(g.add(x, attn_out), P[L + "ln1.g"], P[L + "ln1.b"], S(1e-5));

        auto ff = ag::linear(P[L + "ff.W2"], g.relu(ag::linear(P[L + "ff.W1"], x, P[L + "ff.b1"])),
                             P[L + "ff.b2"]);
        ff = ag::dropout(ff, tf.dropout, training, rng);
        x = ag::layer_norm_cols(g.add(x, ff), P[L + "ln2.g"], P[L + "ln2.b"], S(1e-5));
    }

    TransformerOut<S> out;
    out.features = g.gather_cols(x, {0}); // [CLS]
    out.logits = ag::linear(P["out.W"], out.features, P["out.b"]);
    return out;
}

} // namespace fosm
