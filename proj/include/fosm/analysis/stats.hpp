#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include <Eigen/Eigenvalues>

#include "fosm/core/errors.hpp"
#include "fosm/core/types.hpp"

namespace fosm {

struct Metrics {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
};

// Binary accuracy and macro-F1. A class absent from both predictions and
// labels contributes an F1 of zero to the unweighted mean.
inline Metrics classification_metrics(const std::vector<int>& predictions,
                                      const std::vector<int>& labels) {
    if (predictions.empty() || predictions.size() != labels.size())
        throw ConfigError("classification_metrics: empty or mismatched inputs");
    double tp = 0, tn = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1)
            throw ConfigError("classification_metrics: labels must be binary");
        if (predictions[i] == 1 && labels[i] == 1) ++tp;
        else if (predictions[i] == 0 && labels[i] == 0) ++tn;
        else if (predictions[i] == 1 && labels[i] == 0) ++fp;
        else ++fn;
    }
    Metrics m;
    m.accuracy = (tp + tn) / static_cast<double>(predictions.size());
    auto f1_of = [](double tp_, double fp_, double fn_) {
        const double denom = 2 * tp_ + fp_ + fn_;
        return denom == 0.0 ? 0.0 : 2 * tp_ / denom;
    };
    m.macro_f1 = 0.5 * (f1_of(tp, fp, fn) + f1_of(tn, fn, fp));
    return m;
}

// Mean absolute entry of the sample covariance of F (dims x samples). The
// per-dimension mean is subtracted explicitly before the covariance, and the
// diagonal is included unless offdiag_only is set.
inline double cov_score(const Mat<double>& F, bool offdiag_only = false) {
    const Index d = F.rows(), n = F.cols();
    if (n < 2) throw ConfigError("cov_score: needs at least 2 samples");
    if (!F.allFinite()) throw ConfigError("cov_score: non-finite feature entries");
    Mat<double> centered = F.colwise() - F.rowwise().mean();
    Mat<double> cov = (centered * centered.transpose()) / static_cast<double>(n - 1);
    if (!offdiag_only) return cov.cwiseAbs().mean();
    if (d < 2) throw ConfigError("cov_score: off-diagonal mode needs >= 2 dimensions");
    const double total = cov.cwiseAbs().sum() - cov.diagonal().cwiseAbs().sum();
    return total / static_cast<double>(d * d - d);
}

struct PcaResult {
    Mat<double> components;      // dims x k, orthonormal columns
    Vec<double> explained;       // k eigenvalues, non-increasing
    Mat<double> scores;          // k x samples, projections of centered data
};

// PCA of the sample covariance. Components carry a deterministic sign: the
// largest-magnitude entry of each component is positive (ties resolved by the
// first such entry).
inline PcaResult pca_project(const Mat<double>& F, Index k) {
    const Index d = F.rows(), n = F.cols();
    if (n < 2) throw ConfigError("pca_project: needs at least 2 samples");
    if (k < 1 || k > std::min(d, n)) throw ConfigError("pca_project: k out of range");
    Mat<double> centered = F.colwise() - F.rowwise().mean();
    Mat<double> cov = (centered * centered.transpose()) / static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<Mat<double>> solver(cov);
    if (solver.info() != Eigen::Success) throw NumericError("pca_project: eigensolver failed");

    PcaResult out;
    out.components.resize(d, k);
    out.explained.resize(k);
    for (Index i = 0; i < k; ++i) {
        const Index src = d - 1 - i; // solver orders ascending
        Vec<double> v = solver.eigenvectors().col(src);
        Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0) v = -v;
        out.components.col(i) = v;
        out.explained(i) = std::max(0.0, solver.eigenvalues()(src));
    }
    out.scores = out.components.transpose() * centered;
    return out;
}

// One evaluation record: a query instance's loss/accuracy at a given
// adaptation step.
struct StepRecord {
    int batch = 0;
    int episode = 0;
    int step = 0;
    double query_loss = 0.0;
    double query_accuracy = 0.0;
};

struct StepPoint {
    int step = 0;
    double loss = 0.0;
    double accuracy = 0.0;
    std::size_t episodes = 0;
};

// Per-step averages over all evaluated episodes; step 0 is the unadapted
// initialization.
inline std::vector<StepPoint> step_curves(const std::vector<StepRecord>& records) {
    std::map<int, StepPoint> agg;
    for (const auto& r : records) {
        auto& p = agg[r.step];
        p.step = r.step;
        p.loss += r.query_loss;
        p.accuracy += r.query_accuracy;
        ++p.episodes;
    }
    std::vector<StepPoint> out;
    for (auto& [step, p] : agg) {
        p.loss /= static_cast<double>(p.episodes);
        p.accuracy /= static_cast<double>(p.episodes);
        out.push_back(p);
    }
    return out;
}

inline double mean_of(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// Sample standard deviation (n-1); zero for fewer than two values.
inline double stddev_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double acc = 0;
    for (double x : v) acc += (x - m) * (x - m);
    return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

} // namespace fosm
