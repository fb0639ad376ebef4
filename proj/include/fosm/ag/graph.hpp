#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "fosm/core/types.hpp"

namespace fosm::ag {

// Define-by-run reverse-mode autodiff over dense Eigen matrices.
//
// Values are computed eagerly at node creation. The backward pass emits new
// graph nodes rather than raw matrices, so a gradient is itself a
// differentiable expression; differentiating it again gives exact
// second-order derivatives (the MAML outer gradient relies on this).
//
// Scalars are 1x1 matrices. Node ids are created in topological order and an
// op only ever references smaller ids, so a reverse id sweep is a valid
// reverse topological traversal even after several backward passes share the
// arena.

enum class Op : std::uint8_t {
    leaf,
    constant,
    stop_grad,
    add,
    sub,
    neg,
    scale,
    hadamard,
    cdiv,
    matmul,
    transpose,
    sigmoid,
    tanh_,
    relu,
    exp_,
    log_,
    sqrt_,
    softmax_cols,
    gather_cols,
    scatter_cols,
    shift_stack,
    unshift_stack,
    rowpick,
    rowscatter,
    concat_rows,
    slice_rows,
};

template <class Scalar>
class Graph;

template <class Scalar>
struct Var {
    Graph<Scalar>* g = nullptr;
    int id = -1;

    bool valid() const { return g != nullptr && id >= 0; }
    const Mat<Scalar>& value() const { return g->value(id); }
    Index rows() const { return value().rows(); }
    Index cols() const { return value().cols(); }
    Scalar scalar() const { return value()(0, 0); }
};

template <class Scalar>
class Graph {
public:
    using M = Mat<Scalar>;
    using V = Var<Scalar>;

    Graph() { nodes_.reserve(1024); }
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    std::size_t size() const { return nodes_.size(); }
    const M& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].rg; }

    V leaf(M v) { return push(Op::leaf, std::move(v), -1, -1, true); }
    V constant(M v) { return push(Op::constant, std::move(v), -1, -1, false); }

    V constant_scalar(Scalar s) {
        M m(1, 1);
        m(0, 0) = s;
        return constant(std::move(m));
    }

    V zeros(Index r, Index c) { return constant(M::Zero(r, c)); }
    V ones(Index r, Index c) { return constant(M::Ones(r, c)); }

    V stop_grad(V a) { return push(Op::stop_grad, nodes_[a.id].value, a.id, -1, false); }

    V add(V a, V b) {
        check_same_shape(a, b, "add");
        return push(Op::add, nodes_[a.id].value + nodes_[b.id].value, a.id, b.id, rg2(a, b));
    }

    V sub(V a, V b) {
        check_same_shape(a, b, "sub");
        return push(Op::sub, nodes_[a.id].value - nodes_[b.id].value, a.id, b.id, rg2(a, b));
    }

    V neg(V a) { return push(Op::neg, -nodes_[a.id].value, a.id, -1, rg1(a)); }

    V scale(V a, Scalar c) {
        V out = push(Op::scale, nodes_[a.id].value * c, a.id, -1, rg1(a));
        nodes_[out.id].c = c;
        return out;
    }

    V hadamard(V a, V b) {
        check_same_shape(a, b, "hadamard");
        return push(Op::hadamard, nodes_[a.id].value.cwiseProduct(nodes_[b.id].value), a.id, b.id,
                    rg2(a, b));
    }

    // Elementwise a / b. Caller guarantees b has no zero entries.
    V cdiv(V a, V b) {
        check_same_shape(a, b, "cdiv");
        return push(Op::cdiv, nodes_[a.id].value.cwiseQuotient(nodes_[b.id].value), a.id, b.id,
                    rg2(a, b));
    }

    V matmul(V a, V b) {
        if (a.cols() != b.rows())
            throw std::invalid_argument("matmul: inner dimensions differ (" +
                                        std::to_string(a.cols()) + " vs " +
                                        std::to_string(b.rows()) + ")");
        return push(Op::matmul, nodes_[a.id].value * nodes_[b.id].value, a.id, b.id, rg2(a, b));
    }

    V transpose(V a) { return push(Op::transpose, nodes_[a.id].value.transpose(), a.id, -1, rg1(a)); }

    V sigmoid(V a) {
        M v = ((-nodes_[a.id].value.array()).exp() + Scalar(1)).inverse().matrix();
        return push(Op::sigmoid, std::move(v), a.id, -1, rg1(a));
    }

    V tanh(V a) {
        return push(Op::tanh_, nodes_[a.id].value.array().tanh().matrix(), a.id, -1, rg1(a));
    }

    V relu(V a) {
        return push(Op::relu, nodes_[a.id].value.cwiseMax(Scalar(0)), a.id, -1, rg1(a));
    }

    // Entrywise std::exp; Eigen's packet exp clamps extreme inputs to a
    // denormal instead of underflowing to zero, which would leak mask floors.
    V exp(V a) {
        M v = nodes_[a.id].value.unaryExpr([](Scalar x) { return std::exp(x); });
        return push(Op::exp_, std::move(v), a.id, -1, rg1(a));
    }

    // Caller guarantees strictly positive entries.
    V log(V a) {
        return push(Op::log_, nodes_[a.id].value.array().log().matrix(), a.id, -1, rg1(a));
    }

    V sqrt(V a) {
        return push(Op::sqrt_, nodes_[a.id].value.array().sqrt().matrix(), a.id, -1, rg1(a));
    }

    // Softmax over the rows within each column. Keys already masked by the
    // caller carry a large negative additive constant; a column whose maximum
    // sits below the mask floor has no unmasked key at all.
    V softmax_cols(V a) {
        const M& z = nodes_[a.id].value;
        M out(z.rows(), z.cols());
        for (Index j = 0; j < z.cols(); ++j) {
            Scalar m = z.col(j).maxCoeff();
            if (m <= Scalar(-1e29))
                throw std::invalid_argument("softmax_cols: fully-masked key column");
            // sequential accumulation: appending masked (exactly zero) keys
            // must not regroup the sum, or padding changes rounding
            Scalar denom = Scalar(0);
            for (Index i = 0; i < z.rows(); ++i) {
                out(i, j) = z(i, j) <= Scalar(-1e29) ? Scalar(0) : std::exp(z(i, j) - m);
                denom += out(i, j);
            }
            out.col(j) /= denom;
        }
        return push(Op::softmax_cols, std::move(out), a.id, -1, rg1(a));
    }

    V gather_cols(V a, std::vector<int> idx) {
        // push() may reallocate the arena: no reference into nodes_ survives it
        const Index src_cols = nodes_[a.id].value.cols();
        M out(nodes_[a.id].value.rows(), static_cast<Index>(idx.size()));
        for (std::size_t j = 0; j < idx.size(); ++j) {
            if (idx[j] < 0 || idx[j] >= src_cols)
                throw std::invalid_argument("gather_cols: index out of range");
            out.col(static_cast<Index>(j)) = nodes_[a.id].value.col(idx[j]);
        }
        V node = push(Op::gather_cols, std::move(out), a.id, -1, rg1(a));
        nodes_[node.id].idx = std::move(idx);
        nodes_[node.id].i0 = static_cast<int>(src_cols);
        return node;
    }

    // Adjoint of gather_cols: column j of a accumulates into column idx[j].
    V scatter_cols(V a, std::vector<int> idx, Index out_cols) {
        const M& v = nodes_[a.id].value;
        if (static_cast<Index>(idx.size()) != v.cols())
            throw std::invalid_argument("scatter_cols: index count != columns");
        M out = M::Zero(v.rows(), out_cols);
        for (std::size_t j = 0; j < idx.size(); ++j) {
            if (idx[j] < 0 || idx[j] >= out_cols)
                throw std::invalid_argument("scatter_cols: index out of range");
            out.col(idx[j]) += v.col(static_cast<Index>(j));
        }
        V node = push(Op::scatter_cols, std::move(out), a.id, -1, rg1(a));
        nodes_[node.id].idx = std::move(idx);
        return node;
    }

    // Stacks k shifted copies of a (d x L) into a (d*k) x L matrix; block j,
    // column t holds a.col(t + j - pad), zero outside [0, L). This is the
    // im2col of a width-k same-padded 1-D convolution.
    V shift_stack(V a, int k, int pad) {
        const M& v = nodes_[a.id].value;
        const Index d = v.rows(), L = v.cols();
        M out = M::Zero(d * k, L);
        for (int j = 0; j < k; ++j)
            for (Index t = 0; t < L; ++t) {
                Index s = t + j - pad;
                if (s >= 0 && s < L) out.block(j * d, t, d, 1) = v.col(s);
            }
        V node = push(Op::shift_stack, std::move(out), a.id, -1, rg1(a));
        nodes_[node.id].i0 = k;
        nodes_[node.id].i1 = pad;
        return node;
    }

    // Adjoint of shift_stack.
    V unshift_stack(V a, int k, int pad, Index d, Index L) {
        const M& v = nodes_[a.id].value;
        if (v.rows() != d * k || v.cols() != L)
            throw std::invalid_argument("unshift_stack: shape mismatch");
        M out = M::Zero(d, L);
        for (int j = 0; j < k; ++j)
            for (Index t = 0; t < L; ++t) {
                Index s = t + j - pad;
                if (s >= 0 && s < L) out.col(s) += v.block(j * d, t, d, 1);
            }
        V node = push(Op::unshift_stack, std::move(out), a.id, -1, rg1(a));
        nodes_[node.id].i0 = k;
        nodes_[node.id].i1 = pad;
        return node;
    }

    // out(i, 0) = a(i, idx[i]).
    V rowpick(V a, std::vector<int> idx) {
        const Index src_cols = nodes_[a.id].value.cols();
        const Index rows = nodes_[a.id].value.rows();
        if (static_cast<Index>(idx.size()) != rows)
            throw std::invalid_argument("rowpick: index count != rows");
        M out(rows, 1);
        for (Index i = 0; i < rows; ++i)
            out(i, 0) = nodes_[a.id].value(i, idx[static_cast<std::size_t>(i)]);
        V node = push(Op::rowpick, std::move(out), a.id, -1, rg1(a));
        nodes_[node.id].idx = std::move(idx);
        nodes_[node.id].i0 = static_cast<int>(src_cols);
        return node;
    }

    // Adjoint of rowpick: column vector scattered back to a d x L matrix.
    V rowscatter(V a, std::vector<int> idx, Index out_cols) {
        const M& v = nodes_[a.id].value;
        if (v.cols() != 1 || static_cast<Index>(idx.size()) != v.rows())
            throw std::invalid_argument("rowscatter: expects column vector with one index per row");
        M out = M::Zero(v.rows(), out_cols);
        for (Index i = 0; i < v.rows(); ++i) {
            if (idx[static_cast<std::size_t>(i)] < 0 || idx[static_cast<std::size_t>(i)] >= out_cols)
                throw std::invalid_argument("rowscatter: index out of range");
            out(i, idx[static_cast<std::size_t>(i)]) = v(i, 0);
        }
        V node = push(Op::rowscatter, std::move(out), a.id, -1, rg1(a));
        nodes_[node.id].idx = std::move(idx);
        return node;
    }

    V concat_rows(V a, V b) {
        if (a.cols() != b.cols()) throw std::invalid_argument("concat_rows: column count differs");
        M out(a.rows() + b.rows(), a.cols());
        out.topRows(a.rows()) = nodes_[a.id].value;
        out.bottomRows(b.rows()) = nodes_[b.id].value;
        V node = push(Op::concat_rows, std::move(out), a.id, b.id, rg2(a, b));
        nodes_[node.id].i0 = static_cast<int>(a.rows());
        return node;
    }

    V slice_rows(V a, Index r0, Index nr) {
        if (r0 < 0 || nr < 0 || r0 + nr > a.rows())
            throw std::invalid_argument("slice_rows: range out of bounds");
        V node = push(Op::slice_rows, nodes_[a.id].value.middleRows(r0, nr), a.id, -1, rg1(a));
        nodes_[node.id].i0 = static_cast<int>(r0);
        nodes_[node.id].i1 = static_cast<int>(a.rows());
        return node;
    }

    // Gradient of a scalar loss with respect to each var in `wrt`. Gradients
    // are graph nodes and may be differentiated again.
    std::vector<V> gradients(V loss, const std::vector<V>& wrt) {
        if (loss.rows() != 1 || loss.cols() != 1)
            throw std::invalid_argument("gradients: loss must be a 1x1 scalar");
        std::vector<int> grad_of(nodes_.size(), -1);
        if (nodes_[loss.id].rg) grad_of[static_cast<std::size_t>(loss.id)] = ones(1, 1).id;

        for (int id = loss.id; id >= 0; --id) {
            int gid = grad_of[static_cast<std::size_t>(id)];
            if (gid < 0 || !nodes_[id].rg) continue;
            V self{this, id};
            V up{this, gid};
            backward_step(self, up, grad_of);
        }

        std::vector<V> out;
        out.reserve(wrt.size());
        for (V w : wrt) {
            int gid = grad_of[static_cast<std::size_t>(w.id)];
            out.push_back(gid >= 0 ? V{this, gid} : zeros(w.rows(), w.cols()));
        }
        return out;
    }

private:
    struct Node {
        Op op;
        M value;
        int a = -1;
        int b = -1;
        Scalar c = Scalar(0);
        int i0 = 0;
        int i1 = 0;
        std::vector<int> idx;
        bool rg = false;
    };

    std::vector<Node> nodes_;

    bool rg1(V a) const { return nodes_[a.id].rg; }
    bool rg2(V a, V b) const { return nodes_[a.id].rg || nodes_[b.id].rg; }

    void check_same_shape(V a, V b, const char* what) const {
        if (a.rows() != b.rows() || a.cols() != b.cols())
            throw std::invalid_argument(std::string(what) + ": shape mismatch (" +
                                        std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                        " vs " + std::to_string(b.rows()) + "x" +
                                        std::to_string(b.cols()) + ")");
    }

    V push(Op op, M value, int a, int b, bool rg) {
        Node n;
        n.op = op;
        n.value = std::move(value);
        n.a = a;
        n.b = b;
        n.rg = rg;
        nodes_.push_back(std::move(n));
        return V{this, static_cast<int>(nodes_.size() - 1)};
    }

    void accumulate(std::vector<int>& grad_of, int target, V g) {
        if (target < 0 || !nodes_[target].rg) return;
        int& slot = grad_of[static_cast<std::size_t>(target)];
        if (slot < 0) {
            slot = g.id;
        } else {
            slot = add(V{this, slot}, g).id;
        }
    }

    void backward_step(V self, V up, std::vector<int>& grad_of) {
        // Copy the payload up front: creating gradient nodes reallocates the
        // arena and would invalidate a held reference.
        const Op op = nodes_[self.id].op;
        const int a = nodes_[self.id].a;
        const int b = nodes_[self.id].b;
        const Scalar c = nodes_[self.id].c;
        const int i0 = nodes_[self.id].i0;
        const int i1 = nodes_[self.id].i1;
        const std::vector<int> idx = nodes_[self.id].idx;
        V va{this, a};
        V vb{this, b};
        switch (op) {
        case Op::leaf:
        case Op::constant:
        case Op::stop_grad:
            return;
        case Op::add:
            accumulate(grad_of, a, up);
            accumulate(grad_of, b, up);
            return;
        case Op::sub:
            accumulate(grad_of, a, up);
            accumulate(grad_of, b, neg(up));
            return;
        case Op::neg:
            accumulate(grad_of, a, neg(up));
            return;
        case Op::scale:
            accumulate(grad_of, a, scale(up, c));
            return;
        case Op::hadamard:
            if (nodes_[a].rg) accumulate(grad_of, a, hadamard(up, vb));
            if (nodes_[b].rg) accumulate(grad_of, b, hadamard(up, va));
            return;
        case Op::cdiv:
            if (nodes_[a].rg) accumulate(grad_of, a, cdiv(up, vb));
            if (nodes_[b].rg) accumulate(grad_of, b, neg(hadamard(cdiv(up, vb), self)));
            return;
        case Op::matmul:
            if (nodes_[a].rg) accumulate(grad_of, a, matmul(up, transpose(vb)));
            if (nodes_[b].rg) accumulate(grad_of, b, matmul(transpose(va), up));
            return;
        case Op::transpose:
            accumulate(grad_of, a, transpose(up));
            return;
        case Op::sigmoid:
            accumulate(grad_of, a, hadamard(up, sub(self, hadamard(self, self))));
            return;
        case Op::tanh_:
            accumulate(grad_of, a, sub(up, hadamard(up, hadamard(self, self))));
            return;
        case Op::relu: {
            M mask = (nodes_[a].value.array() > Scalar(0)).template cast<Scalar>().matrix();
            accumulate(grad_of, a, hadamard(up, constant(std::move(mask))));
            return;
        }
        case Op::exp_:
            accumulate(grad_of, a, hadamard(up, self));
            return;
        case Op::log_:
            accumulate(grad_of, a, cdiv(up, va));
            return;
        case Op::sqrt_:
            accumulate(grad_of, a, scale(cdiv(up, self), Scalar(0.5)));
            return;
        case Op::softmax_cols: {
            // dZ = O .* (U - 1_d * colsum(U .* O))
            V uo = hadamard(up, self);
            V s = matmul(ones(1, self.rows()), uo);
            V broad = matmul(ones(self.rows(), 1), s);
            accumulate(grad_of, a, hadamard(self, sub(up, broad)));
            return;
        }
        case Op::gather_cols:
            accumulate(grad_of, a, scatter_cols(up, idx, i0));
            return;
        case Op::scatter_cols:
            accumulate(grad_of, a, gather_cols(up, idx));
            return;
        case Op::shift_stack:
            accumulate(grad_of, a,
                       unshift_stack(up, i0, i1, nodes_[a].value.rows(), nodes_[a].value.cols()));
            return;
        case Op::unshift_stack:
            accumulate(grad_of, a, shift_stack(up, i0, i1));
            return;
        case Op::rowpick:
            accumulate(grad_of, a, rowscatter(up, idx, i0));
            return;
        case Op::rowscatter:
            accumulate(grad_of, a, rowpick(up, idx));
            return;
        case Op::concat_rows:
            if (nodes_[a].rg) accumulate(grad_of, a, slice_rows(up, 0, i0));
            if (nodes_[b].rg)
                accumulate(grad_of, b, slice_rows(up, i0, up.rows() - i0));
            return;
        case Op::slice_rows: {
            Index r0 = i0;
            Index total = i1;
            Index nr = nodes_[self.id].value.rows();
            V g = up;
            if (r0 > 0) g = concat_rows(zeros(r0, up.cols()), g);
            if (total - r0 - nr > 0) g = concat_rows(g, zeros(total - r0 - nr, up.cols()));
            accumulate(grad_of, a, g);
            return;
        }
        }
    }
};

// Expression-style operators; matmul follows Eigen's operator* convention.
template <class S> Var<S> operator+(Var<S> a, Var<S> b) { return a.g->add(a, b); }
template <class S> Var<S> operator-(Var<S> a, Var<S> b) { return a.g->sub(a, b); }
template <class S> Var<S> operator-(Var<S> a) { return a.g->neg(a); }
template <class S> Var<S> operator*(Var<S> a, Var<S> b) { return a.g->matmul(a, b); }
template <class S> Var<S> operator*(Var<S> a, S c) { return a.g->scale(a, c); }
template <class S> Var<S> operator*(S c, Var<S> a) { return a.g->scale(a, c); }

} // namespace fosm::ag
