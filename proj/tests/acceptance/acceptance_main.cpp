// Acceptance suite: one criterion per section, one PASS/FAIL line each,
// non-zero exit when any criterion fails. Heavier sections train real models
// on the synthetic keyword-matching fixture and take several minutes.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "fosm/analysis/sweeps.hpp"
#include "fosm/cli/commands.hpp"
#include "fosm/corpus/synthetic.hpp"
#include "fosm/matchers/matchers.hpp"
#include "fosm/metalearn/experiment.hpp"
#include "support/gradcheck.hpp"
#include "support/matcher_fixtures.hpp"
#include "support/oracles.hpp"

using namespace fosm;
using Clock = std::chrono::steady_clock;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& what, const std::string& detail) {
    std::printf("[%s] criterion %2d: %s  (%s)\n", pass ? "PASS" : "FAIL", criterion, what.c_str(),
                detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

// ---------------------------------------------------------------- fixture

struct Fixture {
    Vocabulary vocab;
    Pool pool;
    ClassSplit split;
    ToyCorpusPaths paths;
};

Fixture load_fixture(const std::string& dir) {
    ToyCorpusSpec spec; // 20 classes x 200 instances, shared keyword pool
    Fixture f;
    f.paths = generate_toy_corpus(spec, dir);
    auto instances = load_dataset(f.paths.corpus);
    f.vocab = build_vocab(instances, f.paths.embeddings, 12);
    f.pool = build_pool(instances, f.vocab, 12);
    std::ifstream in(f.paths.split);
    f.split = split_classes(instances, SplitSpec::from_json(nlohmann::json::parse(in)));
    return f;
}

MatcherConfig fixture_bica() {
    MatcherConfig m;
    m.kind = MatcherKind::bica;
    m.hidden_dim = 16;
    m.conv_channels = 16;
    m.dropout = 0.1;
    return m;
}

// Desk-scale recipe for the classical fixture runs. Inner/adaptation rates
// follow the classical recipe (alpha = 0.1, SGD 0.1 x 3); the outer rate and
// stopping budget are sized for the 16-dim toy models.
TrainConfig fixture_train(TrainMethod method, std::uint64_t seed) {
    TrainConfig t;
    t.method = method;
    t.inner_rate = 0.1;
    t.outer_rate = 3e-3;
    t.batch_size = 5;
    t.negative_classes = 5;
    t.support_size = 10;
    t.query_size = 10;
    t.train_batches = 200;
    t.val_batches = 20;
    t.test_batches = 30;
    t.max_epochs = 22;
    t.patience = 5;
    t.adapt_steps = 3;
    t.adapt_rate = 0.1;
    t.adapt_optimizer = AdaptOptimizer::sgd;
    t.seed = seed;
    return t;
}

// ------------------------------------------------------------ criterion 1

void criterion_gradients() {
    auto t0 = Clock::now();
    Rng rng(1601);
    auto vocab = test::tiny_vocab(rng, 4, 9);
    double worst = 0.0;
    std::string worst_kind;
    for (auto kind : {MatcherKind::bica, MatcherKind::ca, MatcherKind::sn, MatcherKind::owp,
                      MatcherKind::minitransformer}) {
        MatcherConfig cfg;
        cfg.kind = kind;
        cfg.hidden_dim = 4;
        cfg.conv_channels = 3;
        cfg.kernel_widths = {1, 2, 3};
        cfg.dropout = 0.0;
        cfg.tf = {1, 2, 8, 16, 0.0, 40};
        auto params =
            init_matcher_params<double>(cfg, vocab, rng.derive("init", static_cast<int>(kind)));
        cfg.embed_dim = 4;
        cfg.vocab_size = vocab.size();
        Rng ep_rng = rng.derive("episode", static_cast<int>(kind));
        auto ep = test::random_episode(ep_rng, vocab, 2, 4, 5); // N = 2

        ag::Graph<double> g;
        auto bound = ag::bind_leaves(g, params);
        Rng drop(0);
        auto loss = episode_loss(g, bound, cfg, ep, LossSet::both, false, drop);
        auto analytic = ag::grads_to_params(params, g.gradients(loss, bound.vars));
        auto f = [&](const ag::ParamSet<double>& p) {
            ag::Graph<double> g2;
            auto b2 = ag::bind_leaves(g2, p);
            Rng d2(0);
            return episode_loss(g2, b2, cfg, ep, LossSet::both, false, d2).scalar();
        };
        auto rep = test::gradcheck(f, params, analytic, 1e-5);
        if (rep.max_rel_err > worst) {
            worst = rep.max_rel_err;
            worst_kind = to_string(kind);
        }
    }
    const double elapsed = seconds_since(t0);
    report(1, worst < 1e-4 && elapsed < 120.0,
           "analytic gradients match finite differences for all five matchers",
           "worst rel err " + fmt(worst) + " (" + worst_kind + "), " + fmt(elapsed) + "s");
}

// ------------------------------------------------------------ criterion 2

void criterion_second_order() {
    // closed-form quadratic: inner loss theta^2/2, outer loss theta'^2/2
    double second = 0, first = 0;
    for (bool so : {true, false}) {
        ag::Graph<double> g;
        auto theta = g.leaf(Mat<double>::Constant(1, 1, 1.0));
        auto inner = [](ag::Graph<double>& gg, const std::vector<ag::Var<double>>& v) {
            return gg.scale(gg.hadamard(v[0], v[0]), 0.5);
        };
        auto adapted = inner_adapt_vars(g, {theta}, inner, 0.1, 1, so);
        auto outer = g.scale(g.hadamard(adapted[0], adapted[0]), 0.5);
        (so ? second : first) = g.gradients(outer, {theta})[0].value()(0, 0);
    }
    // "exact" at 64 bits: the gradient comes from the chain rule, not finite
    // differences, so it matches theta*(1-alpha)^2 to rounding (1 ulp of
    // association-order slack).
    const double expect_second = (1.0 - 0.1) * (1.0 - 0.1) * 1.0;
    const bool quad_ok = std::abs(second - expect_second) <= 2e-16 &&
                         std::abs(second - 0.81) <= 2e-16 && std::abs(first - 0.90) <= 2e-16;

    // random small network: d/dtheta of L_Q(theta - alpha grad L_S(theta))
    Rng rng(1602);
    Mat<double> W1(4, 3), W2(1, 4), Xs(3, 5), Xq(3, 4), Ys(1, 5), Yq(1, 4);
    for (auto* m : {&W1, &W2, &Xs, &Xq, &Ys, &Yq})
        for (Index j = 0; j < m->cols(); ++j)
            for (Index i = 0; i < m->rows(); ++i) (*m)(i, j) = rng.uniform(-0.8, 0.8);
    const double alpha = 0.05;
    auto composed = [&](const Mat<double>& w1, const Mat<double>& w2, Mat<double>* g1,
                        Mat<double>* g2) {
        ag::Graph<double> g;
        auto v1 = g.leaf(w1), v2 = g.leaf(w2);
        auto mse = [&](ag::Var<double> a, ag::Var<double> b, const Mat<double>& X,
                       const Mat<double>& Y) {
            auto pred = g.matmul(b, g.tanh(g.matmul(a, g.constant(X))));
            auto diff = g.sub(pred, g.constant(Y));
            return ag::mean_all(g.hadamard(diff, diff));
        };
        auto inner = [&](ag::Graph<double>&, const std::vector<ag::Var<double>>& vars) {
            return mse(vars[0], vars[1], Xs, Ys);
        };
        auto adapted = inner_adapt_vars(g, {v1, v2}, inner, alpha, 1, true);
        auto outer = mse(adapted[0], adapted[1], Xq, Yq);
        if (g1) {
            auto grads = g.gradients(outer, {v1, v2});
            *g1 = grads[0].value();
            *g2 = grads[1].value();
        }
        return outer.scalar();
    };
    Mat<double> g1, g2;
    composed(W1, W2, &g1, &g2);
    double max_rel = 0.0;
    const double eps = 1e-6;
    auto fd_scan = [&](Mat<double>& W, const Mat<double>& analytic) {
        for (Index j = 0; j < W.cols(); ++j)
            for (Index i = 0; i < W.rows(); ++i) {
                const double saved = W(i, j);
                W(i, j) = saved + eps;
                const double fp = composed(W1, W2, nullptr, nullptr);
                W(i, j) = saved - eps;
                const double fm = composed(W1, W2, nullptr, nullptr);
                W(i, j) = saved;
                const double fd = (fp - fm) / (2 * eps);
                const double rel = std::abs(fd - analytic(i, j)) /
                                   std::max({std::abs(fd), std::abs(analytic(i, j)), 1e-8});
                max_rel = std::max(max_rel, rel);
            }
    };
    fd_scan(W1, g1);
    fd_scan(W2, g2);
    report(2, quad_ok && max_rel < 1e-3,
           "second-order outer gradients: 0.81 quadratic probe and composed-map FD",
           "quadratic " + fmt(second) + " vs first-order " + fmt(first) + ", network rel err " +
               fmt(max_rel));
}

// ------------------------------------------------------------ criterion 3

void criterion_cov_oracle() {
    Rng rng(1603);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const Index d = 2 + static_cast<Index>(rng.uniform_index(19));   // <= 20
        const Index n = 2 + static_cast<Index>(rng.uniform_index(49));   // <= 50
        Mat<double> F(d, n);
        for (Index j = 0; j < n; ++j)
            for (Index i = 0; i < d; ++i) F(i, j) = rng.uniform(-3, 3);
        worst = std::max(worst, std::abs(cov_score(F) - test::oracle_cov_score(F)));
    }
    Mat<double> F2(2, 2);
    F2 << 1, -1, -1, 1;
    const bool exact2 = cov_score(F2) == 2.0;

    Mat<double> F3(6, 14);
    for (Index j = 0; j < 14; ++j)
        for (Index i = 0; i < 6; ++i) F3(i, j) = rng.uniform(-2, 2);
    const double c = 1.37;
    const double lhs = cov_score((c * F3).eval());
    const double rhs = c * c * cov_score(F3);
    const double scale_rel = std::abs(lhs - rhs) / std::abs(rhs);

    report(3, worst < 1e-10 && exact2 && scale_rel < 1e-9,
           "Cov_Score matches the double-loop oracle, the 2x2 case, and the scaling law",
           "oracle diff " + fmt(worst) + ", 2x2 " + (exact2 ? std::string("exact") : "WRONG") +
               ", scaling rel " + fmt(scale_rel));
}

// ------------------------------------------------------------ criterion 4

void criterion_episode_invariants(const Fixture& f) {
    int violations = 0;
    long long episodes = 0;
    std::vector<std::string> classes;
    for (const auto& [name, v] : f.pool) classes.push_back(name);
    // map instance id -> class for hygiene checks
    std::map<std::size_t, std::string> owner;
    for (const auto& [name, v] : f.pool)
        for (const auto& e : v) owner[e.id] = name;

    for (int b = 0; episodes < 10000; ++b) {
        auto batch = sample_batch(f.pool, classes, 5, 5, {10, 10}, ReferenceMode::any, true,
                                  static_cast<std::uint64_t>(9000 + b));
        for (const auto& ep : batch.episodes) {
            ++episodes;
            std::set<std::string> negs(ep.negative_classes.begin(), ep.negative_classes.end());
            if (negs.count(ep.positive_class)) ++violations;
            if (owner.at(ep.reference.id) != ep.positive_class) ++violations;
            if (ep.support.size() != 10 || ep.query.size() != 10) ++violations;
            int pos = 0, neg = 0;
            std::set<std::size_t> seen;
            for (const auto* set : {&ep.support, &ep.query}) {
                for (const auto& item : *set) {
                    if (item.instance.id == ep.reference.id) ++violations;
                    if (!seen.insert(item.instance.id).second) ++violations;
                    const auto& cls = owner.at(item.instance.id);
                    if (item.label == 1) {
                        ++pos;
                        if (cls != ep.positive_class) ++violations;
                    } else {
                        ++neg;
                        if (!negs.count(cls)) ++violations;
                    }
                }
            }
            if (pos != 10 || neg != 10) ++violations;
        }
    }
    report(4, violations == 0, "10,000 sampled episodes satisfy every episode invariant",
           std::to_string(episodes) + " episodes, " + std::to_string(violations) + " violations");
}

// -------------------------------------------------------- criteria 5 and 6

void criteria_trends(const Fixture& f) {
    const int n_seeds = 5;
    int f1_wins = 0, drop_wins = 0;
    double worst_run_s = 0.0;
    std::string detail5, detail6;
    for (int k = 0; k < n_seeds; ++k) {
        const std::uint64_t seed = 4200 + static_cast<std::uint64_t>(k);
        auto t0 = Clock::now();
        auto naive = run_single<double>(fixture_bica(), fixture_train(TrainMethod::naive, seed),
                                        f.pool, f.split, f.vocab);
        worst_run_s = std::max(worst_run_s, seconds_since(t0));
        auto t1 = Clock::now();
        auto maml = run_single<double>(fixture_bica(), fixture_train(TrainMethod::maml, seed),
                                       f.pool, f.split, f.vocab);
        worst_run_s = std::max(worst_run_s, seconds_since(t1));

        const double f1_naive = naive.eval.mean.macro_f1;
        const double f1_maml = maml.eval.mean.macro_f1;
        if (f1_maml >= f1_naive) ++f1_wins;

        auto nc = naive.eval.curves();
        auto mc = maml.eval.curves();
        const double drop_naive = nc[0].loss - nc[1].loss;
        const double drop_maml = mc[0].loss - mc[1].loss;
        if (drop_maml > drop_naive) ++drop_wins;

        detail5 += (k ? " " : "") + fmt(f1_maml) + (f1_maml >= f1_naive ? ">=" : "<") +
                   fmt(f1_naive);
        detail6 += (k ? " " : "") + fmt(drop_maml) + (drop_maml > drop_naive ? ">" : "<=") +
                   fmt(drop_naive);
        std::printf("    seed %llu: finetune f1 %.4f (drop %.3f) | maml f1 %.4f (drop %.3f)\n",
                    (unsigned long long)seed, f1_naive, drop_naive, f1_maml, drop_maml);
        std::fflush(stdout);
    }
    report(5, f1_wins >= 4 && worst_run_s < 900.0,
           "BiCA+MAML macro-F1 >= BiCA+finetune in at least 4 of 5 seeds",
           std::to_string(f1_wins) + "/5 seeds, slowest run " + fmt(worst_run_s) + "s; " +
               detail5);
    report(6, drop_wins >= 4,
           "MAML step-0 to step-1 query-loss drop exceeds the naive-initialized drop",
           std::to_string(drop_wins) + "/5 seeds; " + detail6);
}

// ------------------------------------------------------------ criterion 7

void criterion_cov_trends(const Fixture& f) {
    MatcherConfig tf;
    tf.kind = MatcherKind::minitransformer;
    tf.dropout = 0.1;
    tf.tf.d_model = 64;
    tf.tf.d_ff = 128;
    tf.tf.dropout = 0.1;
    tf.tf.max_positions = 32;

    // transformer recipe: inner 2e-3, outer Adam 2e-5, test-time Adam 2e-5 x 3
    TrainConfig t = fixture_train(TrainMethod::maml, 7100);
    t.inner_rate = 2e-3;
    t.outer_rate = 2e-5;
    t.adapt_rate = 2e-5;
    t.adapt_optimizer = AdaptOptimizer::adam;
    t.train_batches = 20;
    t.val_batches = 5;
    t.test_batches = 12;
    t.max_epochs = 2;
    t.early_stop = false;

    auto sweep = head_layer_sweep<double>(tf, t, f.pool, f.split, f.vocab, {1, 4}, {1, 4, 16}, 3,
                                          12);
    auto cell = [&](int layers, int heads) { return sweep.cell_mean(layers, heads, 0); };
    struct Check {
        std::string name;
        bool ok;
    };
    std::vector<Check> checks;
    for (int layers : {1, 4})
        checks.push_back({"heads16>heads1@L" + std::to_string(layers),
                          cell(layers, 16) > cell(layers, 1)});
    for (int heads : {1, 4, 16})
        checks.push_back({"layers4>layers1@H" + std::to_string(heads),
                          cell(4, heads) > cell(1, heads)});
    bool all_ok = true;
    std::string detail;
    for (const auto& c : checks) {
        all_ok = all_ok && c.ok;
        detail += (detail.empty() ? "" : ", ") + c.name + (c.ok ? " ok" : " VIOLATED");
    }
    for (int layers : {1, 4})
        for (int heads : {1, 4, 16})
            std::printf("    L=%d H=%-2d mean cov_score %.6g\n", layers, heads,
                        cell(layers, heads));
    report(7, all_ok, "Cov_Score grows with heads and layers for the mini-transformer", detail);
}

// ------------------------------------------------------------ criterion 8

void criterion_support_trend(const Fixture& f) {
    auto t = fixture_train(TrainMethod::maml, 8100);
    auto sweep = support_sweep<double>(fixture_bica(), t, f.pool, f.split, f.vocab, {1, 10}, 5);
    int wins = 0;
    std::string detail;
    for (int k = 0; k < 5; ++k) {
        const std::uint64_t seed = 8100 + static_cast<std::uint64_t>(k);
        double f1_1 = 0, f1_10 = 0;
        for (const auto& r : sweep.records) {
            if (r.seed != seed) continue;
            (r.support_size == 1 ? f1_1 : f1_10) = r.value;
        }
        if (f1_10 > f1_1) ++wins;
        detail += (k ? " " : "") + fmt(f1_10) + (f1_10 > f1_1 ? ">" : "<=") + fmt(f1_1);
        std::printf("    seed %llu: |S|=10 f1 %.4f vs |S|=1 f1 %.4f\n", (unsigned long long)seed,
                    f1_10, f1_1);
        std::fflush(stdout);
    }
    report(8, wins >= 4, "macro-F1 at support size 10 exceeds size 1 for BiCA+MAML",
           std::to_string(wins) + "/5 seeds; " + detail);
}

// ------------------------------------------------------------ criterion 9

void criterion_determinism(const Fixture& f, const std::string& work) {
    nlohmann::json spec = {
        {"corpus", f.paths.corpus},
        {"embeddings", f.paths.embeddings},
        {"split", f.paths.split},
        {"max_len", 12},
        {"precision", "f64"},
        {"matcher", {{"kind", "bica"}, {"hidden_dim", 8}, {"conv_channels", 8},
                     {"kernel_widths", {1, 2, 3}}}},
        {"train", {{"method", "naive"}, {"batch_size", 3}, {"negative_classes", 3},
                   {"support_size", 4}, {"query_size", 4}, {"train_batches", 6},
                   {"val_batches", 3}, {"test_batches", 3}, {"max_epochs", 2},
                   {"early_stop", false}, {"adapt_steps", 2}, {"seed", 99}}}};
    const std::string spec_path = work + "/det_spec.json";
    {
        std::ofstream out(spec_path);
        out << spec.dump(2);
    }
    auto slurp = [](const std::string& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    };
    cli::cmd_train({spec_path, work + "/det_a", {}, {}, {}, {}});
    cli::cmd_train({spec_path, work + "/det_b", {}, {}, {}, {}});
    cli::EvalArgs ev;
    ev.spec_path = spec_path;
    ev.adapt = "finetune";
    ev.checkpoint = work + "/det_a/checkpoint.ftns";
    ev.out_dir = work + "/det_ea";
    cli::cmd_eval(ev);
    ev.out_dir = work + "/det_eb";
    cli::cmd_eval(ev);

    const bool train_same = slurp(work + "/det_a/metrics.jsonl") ==
                                slurp(work + "/det_b/metrics.jsonl") &&
                            slurp(work + "/det_a/checkpoint.ftns") ==
                                slurp(work + "/det_b/checkpoint.ftns");
    const bool eval_same =
        slurp(work + "/det_ea/metrics.json") == slurp(work + "/det_eb/metrics.json") &&
        slurp(work + "/det_ea/steps.jsonl") == slurp(work + "/det_eb/steps.jsonl");
    report(9, train_same && eval_same,
           "identical spec and seed reproduce training and eval artifacts bit for bit",
           std::string("train ") + (train_same ? "identical" : "DIFFERS") + ", eval " +
               (eval_same ? "identical" : "DIFFERS"));
}

// ----------------------------------------------------------- criterion 10

void criterion_pad_invariance() {
    Rng rng(1610);
    auto vocab = test::tiny_vocab(rng, 4, 9);
    int checked = 0, exact = 0;
    for (auto kind : {MatcherKind::bica, MatcherKind::ca, MatcherKind::sn, MatcherKind::owp,
                      MatcherKind::minitransformer}) {
        MatcherConfig cfg;
        cfg.kind = kind;
        cfg.hidden_dim = 4;
        cfg.conv_channels = 3;
        cfg.kernel_widths = {1, 2, 3};
        cfg.dropout = 0.0;
        cfg.tf = {1, 2, 8, 16, 0.0, 64};
        auto params =
            init_matcher_params<double>(cfg, vocab, rng.derive("init", static_cast<int>(kind)));
        cfg.embed_dim = 4;
        cfg.vocab_size = vocab.size();
        for (int trial = 0; trial < 200; ++trial) {
            Rng ep_rng = rng.derive("pair", static_cast<std::uint64_t>(
                                                static_cast<int>(kind) * 1000 + trial));
            auto ep = test::random_episode(ep_rng, vocab, 1, 5, 6);
            const int extra = 1 + static_cast<int>(ep_rng.uniform_index(8));
            auto padded = ep;
            padded.reference.seq.indices.resize(padded.reference.seq.indices.size() +
                                                    static_cast<std::size_t>(extra),
                                                0);
            for (auto& item : padded.support)
                item.instance.seq.indices.resize(item.instance.seq.indices.size() +
                                                     static_cast<std::size_t>(extra),
                                                 0);
            for (auto& item : padded.query)
                item.instance.seq.indices.resize(item.instance.seq.indices.size() +
                                                     static_cast<std::size_t>(extra),
                                                 0);
            auto a = eval_pair(params, cfg, ep, ep.query[0].instance.seq);
            auto b = eval_pair(params, cfg, padded, padded.query[0].instance.seq);
            ++checked;
            if (a.logits(0) == b.logits(0) && a.logits(1) == b.logits(1)) ++exact;
        }
    }
    report(10, exact == checked, "appending up to 8 PAD positions never changes any logits",
           std::to_string(exact) + "/" + std::to_string(checked) + " exact matches");
}

} // namespace

int main() {
    const auto t0 = Clock::now();
    const std::string work = "acceptance_work";
    fs::create_directories(work);

    std::printf("building synthetic fixture...\n");
    Fixture f = load_fixture(work + "/fixture");
    std::printf("fixture classes: %zu train / %zu val / %zu test\n\n",
                f.split.train_classes.size(), f.split.val_classes.size(),
                f.split.test_classes.size());

    criterion_gradients();
    criterion_second_order();
    criterion_cov_oracle();
    criterion_episode_invariants(f);
    criteria_trends(f);
    criterion_cov_trends(f);
    criterion_support_trend(f);
    criterion_determinism(f, work);
    criterion_pad_invariance();

    std::printf("\n%d criterion(s) failed; total %.0fs\n", g_failures, seconds_since(t0));
    return g_failures == 0 ? 0 : 1;
}
