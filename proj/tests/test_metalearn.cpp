#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fosm/corpus/synthetic.hpp"
#include "fosm/metalearn/experiment.hpp"
#include "fosm/metalearn/train.hpp"
#include "support/matcher_fixtures.hpp"
#include "support/tmpdir.hpp"

using namespace fosm;
using Md = Mat<double>;

namespace {

// Generates a small synthetic corpus on disk and loads it end to end.
struct CorpusBundle {
    test::TmpDir tmp{"metalearn"};
    std::vector<LabeledInstance> instances;
    Vocabulary vocab;
    Pool pool;
    ClassSplit split;
};

CorpusBundle small_corpus(int classes = 10, int per_class = 40) {
    CorpusBundle b;
    ToyCorpusSpec spec;
    spec.n_classes = classes;
    spec.instances_per_class = per_class;
    spec.embed_dim = 8;
    spec.keyword_pool = 16;
    spec.filler_pool = 24;
    spec.min_tokens = 5;
    spec.max_tokens = 8;
    spec.split_ratio = {classes - 6.0, 3.0, 3.0};
    auto paths = generate_toy_corpus(spec, (b.tmp.path() / "toy").string());
    b.instances = load_dataset(paths.corpus);
    b.vocab = build_vocab(b.instances, paths.embeddings, 12);
    b.pool = build_pool(b.instances, b.vocab, 12);
    std::ifstream in(paths.split);
    b.split = split_classes(b.instances, SplitSpec::from_json(nlohmann::json::parse(in)));
    return b;
}

MatcherConfig tiny_bica_cfg() {
    MatcherConfig mcfg;
    mcfg.kind = MatcherKind::bica;
    mcfg.hidden_dim = 8;
    mcfg.conv_channels = 8;
    mcfg.kernel_widths = {1, 2, 3};
    mcfg.dropout = 0.1;
    return mcfg;
}

TrainConfig short_tcfg(std::uint64_t seed) {
    TrainConfig t;
    t.method = TrainMethod::naive;
    t.batch_size = 2;
    t.negative_classes = 2;
    t.support_size = 4;
    t.query_size = 4;
    t.train_batches = 12;
    t.val_batches = 4;
    t.test_batches = 4;
    t.max_epochs = 2;
    t.adapt_steps = 2;
    t.seed = seed;
    return t;
}

} // namespace

TEST_CASE("inner_adapt: closed-form gradient steps on theta squared") {
    // L(theta) = theta^2: one step from 1.0 at alpha=0.1 lands on 0.8,
    // a second step on 0.64; alpha=0 is the identity.
    auto loss_of = [](ag::Graph<double>& g, const std::vector<ag::Var<double>>& vars) {
        return g.hadamard(vars[0], vars[0]);
    };
    for (auto [steps, alpha, expect] :
         {std::tuple{1, 0.1, 0.8}, std::tuple{2, 0.1, 0.64}, std::tuple{1, 0.0, 1.0}}) {
        ag::Graph<double> g;
        auto theta = g.leaf(Md::Constant(1, 1, 1.0));
        auto adapted = inner_adapt_vars(g, {theta}, loss_of, alpha, steps, true);
        CHECK(adapted[0].value()(0, 0) == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("MAML quadratic probe: 0.81 second-order vs 0.90 first-order") {
    // inner loss theta^2/2 (gradient theta), outer loss theta'^2/2.
    auto inner = [](ag::Graph<double>& g, const std::vector<ag::Var<double>>& vars) {
        return g.scale(g.hadamard(vars[0], vars[0]), 0.5);
    };
    for (bool second_order : {true, false}) {
        ag::Graph<double> g;
        auto theta = g.leaf(Md::Constant(1, 1, 1.0));
        auto adapted = inner_adapt_vars(g, {theta}, inner, 0.1, 1, second_order);
        auto outer = g.scale(g.hadamard(adapted[0], adapted[0]), 0.5);
        auto grad = g.gradients(outer, {theta})[0].value()(0, 0);
        const double expect = second_order ? (1.0 - 0.1) * (1.0 - 0.1) * 1.0 : 0.9;
        CHECK(grad == doctest::Approx(expect).epsilon(1e-12));
        if (second_order) CHECK(grad == doctest::Approx(0.81).epsilon(1e-12));
    }
}

TEST_CASE("second-order outer gradient matches finite differences of the composed map") {
    // Random two-layer network, inner step on a support batch, outer loss on
    // a query batch; compare against central differences of
    // theta -> L_Q(theta - alpha * grad L_S(theta)).
    Rng rng(101);
    const Index d_in = 3, d_h = 4;
    Md W1(d_h, d_in), W2(1, d_h), Xs(d_in, 5), Xq(d_in, 4), Ys(1, 5), Yq(1, 4);
    for (auto* m : {&W1, &W2, &Xs, &Xq, &Ys, &Yq})
        for (Index j = 0; j < m->cols(); ++j)
            for (Index i = 0; i < m->rows(); ++i) (*m)(i, j) = rng.uniform(-0.8, 0.8);
    const double alpha = 0.05;

    auto composed = [&](const Md& w1, const Md& w2, Md* g1, Md* g2) {
        ag::Graph<double> g;
        auto v1 = g.leaf(w1), v2 = g.leaf(w2);
        auto mse = [&](ag::Var<double> a, ag::Var<double> b, const Md& X, const Md& Y) {
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

    Md g1, g2;
    composed(W1, W2, &g1, &g2);
    const double eps = 1e-6;
    double max_rel = 0.0;
    auto fd_check = [&](Md& W, const Md& analytic, auto&& eval) {
        for (Index j = 0; j < W.cols(); ++j)
            for (Index i = 0; i < W.rows(); ++i) {
                const double saved = W(i, j);
                W(i, j) = saved + eps;
                const double fp = eval();
                W(i, j) = saved - eps;
                const double fm = eval();
                W(i, j) = saved;
                const double fd = (fp - fm) / (2 * eps);
                const double rel = std::abs(fd - analytic(i, j)) /
                                   std::max({std::abs(fd), std::abs(analytic(i, j)), 1e-8});
                max_rel = std::max(max_rel, rel);
            }
    };
    fd_check(W1, g1, [&] { return composed(W1, W2, nullptr, nullptr); });
    fd_check(W2, g2, [&] { return composed(W1, W2, nullptr, nullptr); });
    CHECK(max_rel < 1e-3);
}

TEST_CASE("MAML with alpha = 0 degenerates to plain query-loss training, bit for bit") {
    Rng rng(103);
    auto vocab = test::tiny_vocab(rng, 4, 9);
    MatcherConfig mcfg = tiny_bica_cfg();
    mcfg.hidden_dim = 4;
    mcfg.conv_channels = 3;
    mcfg.dropout = 0.0;
    auto params = init_matcher_params<double>(mcfg, vocab, rng.derive("init"));
    mcfg.embed_dim = 4;
    mcfg.vocab_size = vocab.size();
    Rng ep_rng = rng.derive("ep");
    auto ep = test::random_episode(ep_rng, vocab, 3, 4, 5);

    // MAML path with alpha = 0 and one inner step
    ag::Graph<double> g;
    auto bound = ag::bind_leaves(g, params);
    Rng drop(0);
    auto support_loss = [&](ag::Graph<double>& gg, const std::vector<ag::Var<double>>& vars) {
        ag::BoundParams<double> view{&params, vars};
        return episode_loss(gg, view, mcfg, ep, LossSet::support, false, drop);
    };
    auto adapted = inner_adapt_vars(g, bound.vars, support_loss, 0.0, 1, true);
    ag::BoundParams<double> adapted_view{&params, adapted};
    auto outer = episode_loss(g, adapted_view, mcfg, ep, LossSet::query, false, drop);
    auto maml_grads = g.gradients(outer, bound.vars);

    // plain path: query loss directly at the initialization
    ag::Graph<double> g2;
    auto bound2 = ag::bind_leaves(g2, params);
    auto direct = episode_loss(g2, bound2, mcfg, ep, LossSet::query, false, drop);
    auto direct_grads = g2.gradients(direct, bound2.vars);

    for (std::size_t i = 0; i < params.size(); ++i) {
        const Md a = maml_grads[i].value();
        const Md b = direct_grads[i].value();
        REQUIRE(a.rows() == b.rows());
        CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("EarlyStopper: stops after exactly `patience` non-improving epochs") {
    EarlyStopper s(3);
    CHECK(s.update(0.5, 0));
    CHECK(!s.should_stop());
    CHECK(!s.update(0.5, 1)); // ties are not improvements
    CHECK(!s.update(0.5, 2));
    CHECK(!s.should_stop());
    CHECK(!s.update(0.5, 3));
    CHECK(s.should_stop());
    CHECK(s.best_epoch() == 0);
    CHECK(s.best() == doctest::Approx(0.5));

    EarlyStopper t(2);
    t.update(0.3, 0);
    t.update(0.6, 1); // reset on improvement
    t.update(0.5, 2);
    CHECK(!t.should_stop());
    t.update(0.5, 3);
    CHECK(t.should_stop());
    CHECK(t.best_epoch() == 1);
}

TEST_CASE("naive training reduces the loss on a separable toy corpus") {
    auto bundle = small_corpus();
    MatcherConfig mcfg = tiny_bica_cfg();
    TrainConfig tcfg = short_tcfg(5);
    tcfg.train_batches = 60;
    tcfg.outer_rate = 3e-3;
    tcfg.max_epochs = 1;
    tcfg.early_stop = false;

    Rng init_rng = Rng(tcfg.seed).derive("init");
    auto params = init_matcher_params<double>(mcfg, bundle.vocab, init_rng);
    MatcherConfig resolved = mcfg;
    resolved.embed_dim = static_cast<int>(bundle.vocab.dim());
    resolved.vocab_size = bundle.vocab.size();

    EpisodeStream train_stream(bundle.pool, stream_config(bundle.split.train_classes, "train",
                                                          tcfg.train_batches, tcfg, tcfg.seed));
    Adam<double> adam(tcfg.outer_rate);
    std::vector<double> losses;
    double last = std::numeric_limits<double>::quiet_NaN();
    for (int b = 0; b < tcfg.train_batches; ++b) {
        auto batch = train_stream.batch(0, b);
        losses.push_back(
            detail::naive_batch_step(params, adam, resolved, tcfg, batch, 0, b, last));
        last = losses.back();
    }
    double head = 0, tail = 0;
    for (std::size_t i = 0; i < 10; ++i) head += losses[i];
    for (std::size_t i = losses.size() - 10; i < losses.size(); ++i) tail += losses[i];
    CHECK(tail / 10.0 < head / 10.0);
}

TEST_CASE("training aborts with a diagnostic when the loss goes non-finite") {
    auto bundle = small_corpus(10, 20);
    MatcherConfig mcfg = tiny_bica_cfg();
    TrainConfig tcfg = short_tcfg(6);
    Rng init_rng = Rng(tcfg.seed).derive("init");
    auto params = init_matcher_params<double>(mcfg, bundle.vocab, init_rng);
    params.at("gate.Wi")(0, 0) = std::numeric_limits<double>::quiet_NaN();
    MatcherConfig resolved = mcfg;
    resolved.embed_dim = static_cast<int>(bundle.vocab.dim());
    resolved.vocab_size = bundle.vocab.size();
    EpisodeStream train_stream(bundle.pool, stream_config(bundle.split.train_classes, "train",
                                                          tcfg.train_batches, tcfg, tcfg.seed));
    EpisodeStream val_stream(bundle.pool, stream_config(bundle.split.val_classes, "val",
                                                        tcfg.val_batches, tcfg, tcfg.seed));
    CHECK_THROWS_WITH_AS(
        train_matcher(resolved, tcfg, std::move(params), train_stream, val_stream),
        doctest::Contains("diverged"), NumericError);
}

TEST_CASE("adapt_and_evaluate: step table shape, isolation, and zero-step protocol") {
    auto bundle = small_corpus();
    MatcherConfig mcfg = tiny_bica_cfg();
    TrainConfig tcfg = short_tcfg(7);
    Rng init_rng = Rng(tcfg.seed).derive("init");
    auto params = init_matcher_params<double>(mcfg, bundle.vocab, init_rng);
    MatcherConfig resolved = mcfg;
    resolved.embed_dim = static_cast<int>(bundle.vocab.dim());
    resolved.vocab_size = bundle.vocab.size();
    EpisodeStream test_stream(bundle.pool, stream_config(bundle.split.test_classes, "test", 2,
                                                         tcfg, tcfg.seed));

    auto full = adapt_and_evaluate(params, resolved, test_stream, 2, 3, 0.1,
                                   AdaptOptimizer::sgd, 1, 99);
    // steps 0..3 for each of 2 batches x 3 episodes
    CHECK(full.step_records.size() == 2 * 2 * 4);
    auto curves = full.curves();
    REQUIRE(curves.size() == 4);
    CHECK(curves[0].step == 0);
    CHECK(curves[3].step == 3);
    // feature dumps cover the first batch's query instances
    CHECK(full.dumps.size() == 2 * 4);

    // isolation: evaluating only batch 0 reproduces batch 0's records exactly
    auto only0 = adapt_and_evaluate(params, resolved, test_stream, 1, 3, 0.1,
                                    AdaptOptimizer::sgd, 0, 99);
    for (std::size_t i = 0; i < only0.step_records.size(); ++i) {
        CHECK(only0.step_records[i].query_loss == full.step_records[i].query_loss);
        CHECK(only0.step_records[i].query_accuracy == full.step_records[i].query_accuracy);
    }

    // adapt_steps = 0: pure initialization protocol, one record per episode
    auto none = adapt_and_evaluate(params, resolved, test_stream, 2, 0, 0.1,
                                   AdaptOptimizer::sgd, 0, 99);
    CHECK(none.step_records.size() == 2 * 2);
    for (const auto& r : none.step_records) CHECK(r.step == 0);
    // unadapted records agree with the full run's step-0 rows
    for (std::size_t i = 0; i < none.step_records.size(); ++i)
        CHECK(none.step_records[i].query_loss == full.step_records[i * 4].query_loss);
}

TEST_CASE("run_experiment: identical seeds give identical scores with zero deviation") {
    auto bundle = small_corpus(10, 24);
    MatcherConfig mcfg = tiny_bica_cfg();
    mcfg.kind = MatcherKind::sn; // cheapest matcher for a pipeline smoke
    TrainConfig tcfg = short_tcfg(11);
    tcfg.train_batches = 4;
    tcfg.max_epochs = 1;
    tcfg.early_stop = false;
    tcfg.adapt_steps = 1;

    auto one = run_experiment<double>(mcfg, tcfg, bundle.pool, bundle.split, bundle.vocab, 1);
    CHECK(one.accuracies.size() == 1);
    CHECK(one.accuracy_std == 0.0);
    CHECK(one.f1_std == 0.0);

    auto same = run_experiment<double>(mcfg, tcfg, bundle.pool, bundle.split, bundle.vocab, 3,
                                       /*seed_stride=*/0);
    CHECK(same.f1_std == 0.0);
    CHECK(same.accuracies[0] == same.accuracies[2]);
    CHECK(same.macro_f1s[0] == same.macro_f1s[1]);
}

TEST_CASE("maml training runs end to end and the checkpoint is the best epoch") {
    auto bundle = small_corpus(10, 24);
    MatcherConfig mcfg = tiny_bica_cfg();
    TrainConfig tcfg = short_tcfg(13);
    tcfg.method = TrainMethod::maml;
    tcfg.train_batches = 6;
    tcfg.val_batches = 3;
    tcfg.max_epochs = 2;
    tcfg.early_stop = false;

    auto out = run_single<double>(mcfg, tcfg, bundle.pool, bundle.split, bundle.vocab);
    CHECK(out.train.epochs_run == 2);
    REQUIRE(out.train.history.size() == 2);
    double best = -1;
    for (const auto& r : out.train.history) best = std::max(best, r.val_macro_f1);
    CHECK(out.train.best_val_f1 == doctest::Approx(best));
    CHECK(out.eval.per_batch.size() == static_cast<std::size_t>(tcfg.test_batches));
}
