#pragma once

#include <cmath>
#include <vector>

#include "fosm/ag/params.hpp"
#include "fosm/core/types.hpp"

namespace fosm {

// Plain gradient descent over a ParamSet.
template <class S>
class Sgd {
public:
    explicit Sgd(double rate) : rate_(rate) {}

    void step(ag::ParamSet<S>& params, const ag::ParamSet<S>& grads) {
        params.axpy(static_cast<S>(-rate_), grads);
    }

private:
    double rate_;
};

// Adam with bias correction; moments keyed by tensor order.
template <class S>
class Adam {
public:
    explicit Adam(double rate, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : rate_(rate), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(ag::ParamSet<S>& params, const ag::ParamSet<S>& grads) {
        params.check_same_structure(grads);
        if (m_.empty()) {
            for (std::size_t i = 0; i < params.size(); ++i) {
                m_.push_back(Mat<S>::Zero(params.tensor(i).rows(), params.tensor(i).cols()));
                v_.push_back(Mat<S>::Zero(params.tensor(i).rows(), params.tensor(i).cols()));
            }
        }
        ++t_;
        const S bc1 = S(1) - static_cast<S>(std::pow(beta1_, t_));
        const S bc2 = S(1) - static_cast<S>(std::pow(beta2_, t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            const auto& g = grads.tensor(i);
            m_[i] = static_cast<S>(beta1_) * m_[i] + (S(1) - static_cast<S>(beta1_)) * g;
            v_[i] = static_cast<S>(beta2_) * v_[i] +
                    (S(1) - static_cast<S>(beta2_)) * g.cwiseProduct(g);
            Mat<S> mhat = m_[i] / bc1;
            Mat<S> vhat = v_[i] / bc2;
            params.tensor(i) -=
                static_cast<S>(rate_) *
                mhat.cwiseQuotient(vhat.cwiseSqrt().array().matrix() +
                                   Mat<S>::Constant(vhat.rows(), vhat.cols(), static_cast<S>(eps_)));
        }
    }

private:
    double rate_, beta1_, beta2_, eps_;
    int t_ = 0;
    std::vector<Mat<S>> m_, v_;
};

// Scales gradients in place so their global L2 norm is at most max_norm.
template <class S>
void clip_global_norm(ag::ParamSet<S>& grads, double max_norm) {
    if (max_norm <= 0) return;
    double sq = 0;
    for (std::size_t i = 0; i < grads.size(); ++i)
        sq += static_cast<double>(grads.tensor(i).squaredNorm());
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
        const S s = static_cast<S>(max_norm / norm);
        for (std::size_t i = 0; i < grads.size(); ++i) grads.tensor(i) *= s;
    }
}

} // namespace fosm
