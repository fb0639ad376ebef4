#pragma once

#include <cstdint>
#include <vector>

#include "fosm/ag/graph.hpp"
#include "fosm/ag/ops.hpp"
#include "fosm/core/rng.hpp"

namespace fosm {

template <class S>
ag::Var<S> mask_columns(ag::Var<S> m, const std::vector<std::uint8_t>& mask) {
    auto* g = m.g;
    Mat<S> mm = Mat<S>::Zero(m.rows(), m.cols());
    for (Index j = 0; j < m.cols(); ++j)
        if (mask[static_cast<std::size_t>(j)]) mm.col(j).setOnes();
    return g->hadamard(m, g->constant(std::move(mm)));
}

// Gated encoding: H = sigmoid(Wi*E + bi) .* tanh(Wu*E + bu), with padded
// positions zeroed so nothing downstream can see them.
template <class S>
ag::Var<S> gate_encode(ag::Var<S> E, const std::vector<std::uint8_t>& mask, ag::Var<S> Wi,
                       ag::Var<S> bi, ag::Var<S> Wu, ag::Var<S> bu) {
    if (Wi.cols() != E.rows() || Wu.cols() != E.rows())
        throw std::invalid_argument("gate_encode: weight/input shape mismatch");
    if (static_cast<Index>(mask.size()) != E.cols())
        throw std::invalid_argument("gate_encode: mask length mismatch");
    auto* g = E.g;
    auto gate = g->sigmoid(ag::linear(Wi, E, bi));
    auto content = g->tanh(ag::linear(Wu, E, bu));
    return mask_columns(g->hadamard(gate, content), mask);
}

// Non-parametric alignment. For every candidate position, softmax over the
// reference positions of H_r^T H; and symmetrically for H^T H_r. Padded keys
// get an additive mask floor and therefore exactly zero weight.
template <class S>
std::pair<ag::Var<S>, ag::Var<S>> align_attend(ag::Var<S> H_r, ag::Var<S> H,
                                               const std::vector<std::uint8_t>& mask_r,
                                               const std::vector<std::uint8_t>& mask) {
    if (H_r.rows() != H.rows())
        throw std::invalid_argument("align_attend: encoder dimensions differ");
    auto* g = H_r.g;
    auto weights_r = ag::masked_softmax_cols(g->matmul(g->transpose(H_r), H), mask_r);
    auto aligned_r = g->matmul(H_r, weights_r); // d x L
    auto weights = ag::masked_softmax_cols(g->matmul(g->transpose(H), H_r), mask);
    auto aligned = g->matmul(H, weights); // d x L_r
    return {aligned_r, aligned};
}

// Word-level comparison: elementwise product of aligned and raw encodings.
template <class S>
ag::Var<S> compare(ag::Var<S> aligned, ag::Var<S> encoded) {
    return aligned.g->hadamard(aligned, encoded);
}

struct AggregatorSlots {
    std::vector<std::string> weights; // one conv kernel per width
    std::vector<std::string> biases;
};

inline AggregatorSlots aggregator_slots(const std::string& prefix, std::size_t n_kernels) {
    AggregatorSlots s;
    for (std::size_t i = 0; i < n_kernels; ++i) {
        s.weights.push_back(prefix + ".w" + std::to_string(i + 1));
        s.biases.push_back(prefix + ".b" + std::to_string(i + 1));
    }
    return s;
}

// CNN aggregation: same-padded 1-D convolutions of each configured width,
// ReLU, max-pool over the unmasked positions, concatenated. Dropout is
// applied to the comparison input and to the pooled output, training only.
template <class S>
ag::Var<S> aggregate(ag::Var<S> C, Index valid_len, const ag::BoundParams<S>& params,
                     const AggregatorSlots& slots, const std::vector<int>& widths, double dropout,
                     bool training, Rng& rng) {
    if (valid_len < 1) throw std::invalid_argument("aggregate: all positions masked");
    auto* g = C.g;
    auto x = ag::dropout(C, dropout, training, rng);
    ag::Var<S> pooled;
    for (std::size_t i = 0; i < widths.size(); ++i) {
        const int k = widths[i];
        auto cols = g->shift_stack(x, k, (k - 1) / 2);
        auto conv = g->relu(ag::linear(params[slots.weights[i]], cols, params[slots.biases[i]]));
        auto m = ag::masked_rowwise_max(conv, valid_len);
        pooled = i == 0 ? m : g->concat_rows(pooled, m);
    }
    return ag::dropout(pooled, dropout, training, rng);
}

// Single linear layer over the concatenated aggregation features.
template <class S>
ag::Var<S> match_score(ag::Var<S> f_r, ag::Var<S> f, ag::Var<S> W_o, ag::Var<S> b_o) {
    auto* g = f_r.g;
    return ag::linear(W_o, g->concat_rows(f_r, f), b_o);
}

} // namespace fosm
