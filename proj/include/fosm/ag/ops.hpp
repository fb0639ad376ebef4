#pragma once

#include <cstdint>
#include <vector>

#include "fosm/ag/graph.hpp"
#include "fosm/core/rng.hpp"

namespace fosm::ag {

// Composites built from graph primitives. Broadcasts go through constant
// ones-matrices so every derivative, to any order, falls out of the matmul
// rule.

template <class S> Var<S> colsum(Var<S> a) { return a.g->matmul(a.g->ones(1, a.rows()), a); }

template <class S> Var<S> rowsum(Var<S> a) { return a.g->matmul(a, a.g->ones(a.cols(), 1)); }

template <class S> Var<S> sum_all(Var<S> a) { return colsum(rowsum(a)); }

template <class S> Var<S> mean_all(Var<S> a) {
    return a.g->scale(sum_all(a), S(1) / static_cast<S>(a.rows() * a.cols()));
}

// Column vector v (r x 1) tiled over L columns.
template <class S> Var<S> broadcast_cols(Var<S> v, Index L) {
    return v.g->matmul(v, v.g->ones(1, L));
}

// Row vector r (1 x c) tiled over d rows.
template <class S> Var<S> broadcast_rows(Var<S> r, Index d) {
    return r.g->matmul(r.g->ones(d, 1), r);
}

template <class S> Var<S> add_col_bias(Var<S> m, Var<S> bias) {
    return m.g->add(m, broadcast_cols(bias, m.cols()));
}

// W*x + b with b broadcast over columns.
template <class S> Var<S> linear(Var<S> w, Var<S> x, Var<S> b) {
    return add_col_bias(w.g->matmul(w, x), b);
}

constexpr double kMaskFloor = -1e30;

// Softmax over rows within each column, with masked-out rows receiving zero
// weight. key_mask[i] == 0 marks row i as padding.
template <class S>
Var<S> masked_softmax_cols(Var<S> scores, const std::vector<std::uint8_t>& key_mask) {
    auto* g = scores.g;
    Mat<S> add = Mat<S>::Zero(scores.rows(), scores.cols());
    bool any = false;
    for (Index i = 0; i < scores.rows(); ++i) {
        if (!key_mask[static_cast<std::size_t>(i)]) {
            add.row(i).setConstant(S(kMaskFloor));
            any = true;
        }
    }
    Var<S> z = any ? g->add(scores, g->constant(std::move(add))) : scores;
    return g->softmax_cols(z);
}

// log(sum(exp(z))) per column, max-shifted. The shift is a constant, which
// softmax's shift invariance makes exact for the value and every derivative.
template <class S> Var<S> logsumexp_cols(Var<S> z) {
    auto* g = z.g;
    Mat<S> m(1, z.cols());
    for (Index j = 0; j < z.cols(); ++j) m(0, j) = z.value().col(j).maxCoeff();
    Var<S> mc = g->constant(m);
    Var<S> zc = g->sub(z, broadcast_rows(mc, z.rows()));
    return g->add(g->log(colsum(g->exp(zc))), mc);
}

// Row-wise max over the first valid_cols columns.
template <class S> Var<S> masked_rowwise_max(Var<S> a, Index valid_cols) {
    if (valid_cols < 1 || valid_cols > a.cols())
        throw std::invalid_argument("masked_rowwise_max: no unmasked positions");
    const Mat<S>& v = a.value();
    std::vector<int> idx(static_cast<std::size_t>(v.rows()));
    for (Index i = 0; i < v.rows(); ++i) {
        Index best = 0;
        for (Index j = 1; j < valid_cols; ++j)
            if (v(i, j) > v(i, best)) best = j;
        idx[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    return a.g->rowpick(a, std::move(idx));
}

// Inverted-scale dropout; identity when not training or rate == 0.
template <class S> Var<S> dropout(Var<S> a, double rate, bool training, Rng& rng) {
    if (!training || rate <= 0.0) return a;
    Mat<S> mask(a.rows(), a.cols());
    const S keep = S(1) - S(rate);
    for (Index j = 0; j < a.cols(); ++j)
        for (Index i = 0; i < a.rows(); ++i)
            mask(i, j) = rng.bernoulli(rate) ? S(0) : S(1) / keep;
    return a.g->hadamard(a, a.g->constant(std::move(mask)));
}

template <class S> Var<S> squared_frobenius(Var<S> a) { return sum_all(a.g->hadamard(a, a)); }

// Per-column layer normalization with learned gain/shift (d x 1 each).
template <class S>
Var<S> layer_norm_cols(Var<S> x, Var<S> gamma, Var<S> beta, S eps) {
    auto* g = x.g;
    const Index d = x.rows();
    const S inv_d = S(1) / static_cast<S>(d);
    Var<S> mu = g->scale(colsum(x), inv_d);
    Var<S> xc = g->sub(x, broadcast_rows(mu, d));
    Var<S> var = g->scale(colsum(g->hadamard(xc, xc)), inv_d);
    Var<S> denom = g->sqrt(g->add(var, g->constant(Mat<S>::Constant(1, x.cols(), eps))));
    Var<S> xn = g->cdiv(xc, broadcast_rows(denom, d));
    return add_col_bias(g->hadamard(xn, broadcast_cols(gamma, x.cols())), beta);
}

// -log softmax(logits)[y] for a single column of logits.
template <class S> Var<S> cross_entropy(Var<S> logits, int y) {
    if (logits.cols() != 1 || y < 0 || y >= logits.rows())
        throw std::invalid_argument("cross_entropy: bad logits shape or label");
    Var<S> lse = logsumexp_cols(logits);
    return logits.g->sub(lse, logits.g->slice_rows(logits, y, 1));
}

} // namespace fosm::ag
