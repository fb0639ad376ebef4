#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "fosm/ag/graph.hpp"
#include "fosm/core/types.hpp"

namespace fosm::ag {

// Named, ordered collection of parameter tensors. Shapes are fixed once
// added; elementwise arithmetic over whole sets backs the optimizers and the
// inner-loop update.
template <class Scalar>
class ParamSet {
public:
    using M = Mat<Scalar>;

    void add(const std::string& name, M tensor) {
        if (index_.count(name)) throw std::invalid_argument("ParamSet: duplicate name " + name);
        index_[name] = static_cast<int>(names_.size());
        names_.push_back(name);
        tensors_.push_back(std::move(tensor));
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }

    const M& at(const std::string& name) const { return tensors_[slot(name)]; }
    M& at(const std::string& name) { return tensors_[slot(name)]; }

    int slot(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::invalid_argument("ParamSet: unknown name " + name);
        return it->second;
    }

    std::size_t size() const { return names_.size(); }
    const std::vector<std::string>& names() const { return names_; }
    const M& tensor(std::size_t i) const { return tensors_[i]; }
    M& tensor(std::size_t i) { return tensors_[i]; }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& t : tensors_) n += static_cast<std::size_t>(t.size());
        return n;
    }

    // this += alpha * other, entry by entry over the shared structure.
    void axpy(Scalar alpha, const ParamSet& other) {
        check_same_structure(other);
        for (std::size_t i = 0; i < tensors_.size(); ++i) tensors_[i] += alpha * other.tensors_[i];
    }

    bool all_finite() const {
        for (const auto& t : tensors_)
            if (!t.allFinite()) return false;
        return true;
    }

    void check_same_structure(const ParamSet& other) const {
        if (other.names_ != names_) throw std::invalid_argument("ParamSet: structure mismatch");
        for (std::size_t i = 0; i < tensors_.size(); ++i)
            if (tensors_[i].rows() != other.tensors_[i].rows() ||
                tensors_[i].cols() != other.tensors_[i].cols())
                throw std::invalid_argument("ParamSet: shape mismatch at " + names_[i]);
    }

    template <class S2>
    ParamSet<S2> cast() const {
        ParamSet<S2> out;
        for (std::size_t i = 0; i < tensors_.size(); ++i)
            out.add(names_[i], tensors_[i].template cast<S2>());
        return out;
    }

private:
    std::vector<std::string> names_;
    std::vector<M> tensors_;
    std::unordered_map<std::string, int> index_;
};

// The graph-side view of a ParamSet: one Var per tensor, same order. During
// inner-loop adaptation the vars are swapped for adapted expressions while
// the layout stays put.
template <class Scalar>
struct BoundParams {
    const ParamSet<Scalar>* layout = nullptr;
    std::vector<Var<Scalar>> vars;

    Var<Scalar> operator[](const std::string& name) const {
        return vars[static_cast<std::size_t>(layout->slot(name))];
    }
};

template <class Scalar>
BoundParams<Scalar> bind_leaves(Graph<Scalar>& g, const ParamSet<Scalar>& params) {
    BoundParams<Scalar> bound;
    bound.layout = &params;
    bound.vars.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) bound.vars.push_back(g.leaf(params.tensor(i)));
    return bound;
}

// Materializes gradient vars into a ParamSet mirroring `layout`.
template <class Scalar>
ParamSet<Scalar> grads_to_params(const ParamSet<Scalar>& layout,
                                 const std::vector<Var<Scalar>>& grads) {
    ParamSet<Scalar> out;
    for (std::size_t i = 0; i < layout.size(); ++i) out.add(layout.names()[i], grads[i].value());
    return out;
}

} // namespace fosm::ag
