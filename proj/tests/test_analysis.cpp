#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fosm/analysis/stats.hpp"
#include "fosm/analysis/sweeps.hpp"
#include "fosm/core/rng.hpp"
#include "support/oracles.hpp"

using namespace fosm;
using Md = Mat<double>;

namespace {

Md random_mat(Rng& rng, Index r, Index c, double lo = -1.0, double hi = 1.0) {
    Md m(r, c);
    for (Index j = 0; j < c; ++j)
        for (Index i = 0; i < r; ++i) m(i, j) = rng.uniform(lo, hi);
    return m;
}

} // namespace

TEST_CASE("cov_score: constant features score zero") {
    Md F(3, 5);
    F.setConstant(2.5);
    F.row(1).setConstant(-1.0);
    CHECK(cov_score(F) == 0.0);
}

TEST_CASE("cov_score: the 2x2 analytic case is exactly 2") {
    Md F(2, 2);
    F << 1, -1, -1, 1;
    CHECK(cov_score(F) == 2.0);
}

TEST_CASE("cov_score matches the double-loop oracle on random matrices") {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const Index d = 2 + static_cast<Index>(rng.uniform_index(19));
        const Index n = 2 + static_cast<Index>(rng.uniform_index(49));
        Md F = random_mat(rng, d, n, -3, 3);
        CHECK(std::abs(cov_score(F) - test::oracle_cov_score(F)) < 1e-10);
        if (d >= 2)
            CHECK(std::abs(cov_score(F, true) - test::oracle_cov_score(F, true)) < 1e-10);
    }
}

TEST_CASE("cov_score invariances: permutation, centering shift, quadratic scaling") {
    Rng rng(7);
    Md F = random_mat(rng, 6, 12);
    const double base = cov_score(F);

    // permute samples
    std::vector<Index> perm(12);
    for (Index i = 0; i < 12; ++i) perm[static_cast<std::size_t>(i)] = i;
    Rng shuffle_rng(8);
    shuffle_rng.shuffle(perm);
    Md Fp(6, 12);
    for (Index j = 0; j < 12; ++j) Fp.col(j) = F.col(perm[static_cast<std::size_t>(j)]);
    CHECK(cov_score(Fp) == doctest::Approx(base).epsilon(1e-12));

    // add a constant per dimension
    Md Fs = F;
    for (Index i = 0; i < 6; ++i) Fs.row(i).array() += static_cast<double>(i) - 2.5;
    CHECK(cov_score(Fs) == doctest::Approx(base).epsilon(1e-12));

    // scale: score(cF) = c^2 score(F)
    const double c = 1.7;
    CHECK(cov_score((c * F).eval()) == doctest::Approx(c * c * base).epsilon(1e-9));

    Md tiny(3, 1);
    CHECK_THROWS_AS(cov_score(tiny), ConfigError);
}

TEST_CASE("pca_project: rank-1 data lies on the first component") {
    Md F(2, 10);
    Vec<double> dir(2);
    dir << 3.0 / 5.0, 4.0 / 5.0;
    for (Index j = 0; j < 10; ++j) F.col(j) = dir * (static_cast<double>(j) - 4.5);
    auto pca = pca_project(F, 2);
    CHECK(std::abs(std::abs(pca.components.col(0).dot(dir)) - 1.0) < 1e-10);
    CHECK(pca.explained(1) == doctest::Approx(0.0).epsilon(1e-12));
    // deterministic sign: largest-magnitude entry positive
    Index arg = 0;
    pca.components.col(0).cwiseAbs().maxCoeff(&arg);
    CHECK(pca.components.col(0)(arg) > 0);
}

TEST_CASE("pca_project: orthonormal components, zero-mean scores, trace identity") {
    Rng rng(11);
    Md F = random_mat(rng, 5, 40);
    auto pca = pca_project(F, 5);
    Md gram = pca.components.transpose() * pca.components;
    CHECK((gram - Md::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-10);
    for (Index i = 0; i < 5; ++i)
        CHECK(pca.scores.row(i).mean() == doctest::Approx(0.0).epsilon(1e-10));

    Md centered = F.colwise() - F.rowwise().mean();
    Md cov = centered * centered.transpose() / 39.0;
    CHECK(pca.explained.sum() == doctest::Approx(cov.trace()).epsilon(1e-8));

    // explained variances match an independent Jacobi eigen oracle
    auto ev = test::oracle_symmetric_eigenvalues(cov);
    for (Index i = 0; i < 5; ++i)
        CHECK(pca.explained(i) == doctest::Approx(ev[static_cast<std::size_t>(i)]).epsilon(1e-8));

    CHECK_THROWS_AS(pca_project(F, 6), ConfigError);
    CHECK_THROWS_AS(pca_project(F, 0), ConfigError);
}

TEST_CASE("classification_metrics: closed-form cases") {
    // perfect predictions
    auto perfect = classification_metrics({1, 0, 1, 0}, {1, 0, 1, 0});
    CHECK(perfect.accuracy == 1.0);
    CHECK(perfect.macro_f1 == 1.0);

    // all-positive predictions on a balanced set: acc 0.5, macro-F1 1/3
    auto all_pos = classification_metrics({1, 1, 1, 1}, {1, 1, 0, 0});
    CHECK(all_pos.accuracy == doctest::Approx(0.5));
    CHECK(all_pos.macro_f1 == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    CHECK_THROWS_AS(classification_metrics({}, {}), ConfigError);
    CHECK_THROWS_AS(classification_metrics({1}, {2}), ConfigError);
}

TEST_CASE("classification_metrics matches a counting oracle on random inputs") {
    Rng rng(13);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = 1 + rng.uniform_index(60);
        std::vector<int> pred(n), lab(n);
        for (std::size_t i = 0; i < n; ++i) {
            pred[i] = static_cast<int>(rng.uniform_index(2));
            lab[i] = static_cast<int>(rng.uniform_index(2));
        }
        double tp = 0, tn = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < n; ++i) {
            tp += pred[i] == 1 && lab[i] == 1;
            tn += pred[i] == 0 && lab[i] == 0;
            fp += pred[i] == 1 && lab[i] == 0;
            fn += pred[i] == 0 && lab[i] == 1;
        }
        auto m = classification_metrics(pred, lab);
        CHECK(m.accuracy == doctest::Approx((tp + tn) / static_cast<double>(n)).epsilon(1e-12));
        const double f1p = (2 * tp + fp + fn) == 0 ? 0.0 : 2 * tp / (2 * tp + fp + fn);
        const double f1n = (2 * tn + fn + fp) == 0 ? 0.0 : 2 * tn / (2 * tn + fn + fp);
        CHECK(m.macro_f1 == doctest::Approx(0.5 * (f1p + f1n)).epsilon(1e-12));
    }
}

TEST_CASE("step_curves: one row per step, averaged over episodes") {
    std::vector<StepRecord> records;
    for (int ep = 0; ep < 3; ++ep)
        for (int step = 0; step <= 3; ++step)
            records.push_back({0, ep, step, 1.0 * step + ep, 0.25 * step});
    auto curves = step_curves(records);
    REQUIRE(curves.size() == 4);
    CHECK(curves[0].step == 0);
    CHECK(curves[0].loss == doctest::Approx(1.0)); // (0+1+2)/3
    CHECK(curves[3].loss == doctest::Approx(4.0));
    CHECK(curves[3].accuracy == doctest::Approx(0.75));
    for (const auto& p : curves) CHECK(p.episodes == 3);

    // constant model: identical rows
    std::vector<StepRecord> flat;
    for (int step = 0; step <= 2; ++step) flat.push_back({0, 0, step, 0.7, 0.5});
    auto fc = step_curves(flat);
    CHECK(fc[0].loss == fc[2].loss);
    CHECK(fc[0].accuracy == fc[2].accuracy);
}

TEST_CASE("sweep cell bookkeeping: one record per (axis value, seed)") {
    SweepResult r;
    r.metric = "macro_f1";
    r.records = {{0, 0, 1, 7, 0.5}, {0, 0, 1, 8, 0.7}, {0, 0, 10, 7, 0.9}};
    CHECK(r.cell_mean(0, 0, 1) == doctest::Approx(0.6));
    CHECK(r.cell_mean(0, 0, 10) == doctest::Approx(0.9));
    CHECK_THROWS_AS(r.cell_mean(1, 1, 1), ConfigError);
}
