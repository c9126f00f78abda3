#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "palette/errors.hpp"
#include "palette/model.hpp"
#include "palette/optimizer.hpp"
#include "palette/scheduler.hpp"
#include "palette/trainer.hpp"

using namespace palette;

namespace {

// The large/small end of the published task-size table.
const std::vector<long long> kGlueSizes{392000, 363000, 108000, 67000, 8500, 5700, 3500, 2500};

ModelConfig toy_model() {
    ModelConfig cfg;
    cfg.d_m = 32;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.d_ff = 64;
    cfg.vocab_size = 16;
    cfg.max_seq_len = 16;
    return cfg;
}

TrainRunConfig toy_run(long long steps) {
    TrainRunConfig run;
    run.total_steps = steps;
    run.batch_size = 8;
    run.max_seq_len = 16;
    run.eval_every = 100;
    run.base_lr = 1e-3;
    run.seeds = {1};
    return run;
}

// Single linearly separable task: the label is the presence of w0.
TaskDataset separable_task(int train_size, int dev_size, std::uint64_t seed) {
    TaskDataset ds;
    ds.spec.name = "presence";
    ds.spec.input_kind = InputKind::kSingle;
    ds.spec.output_kind = OutputKind::kClasses;
    ds.spec.n_classes = 2;
    ds.spec.metric = TaskMetric::kAccuracy;
    Rng rng(seed);
    auto make = [&](std::vector<Example>& out, int n) {
        for (int i = 0; i < n; ++i) {
            Example ex;
            const bool positive = rng.below(2) == 1;
            const int len = 4 + rng.below(6);
            for (int t = 0; t < len; ++t) {
                ex.text_a.push_back("w" + std::to_string(1 + rng.below(10)));
            }
            if (positive) {
                ex.text_a[static_cast<std::size_t>(rng.below(len))] = "w0";
            }
            ex.label = positive ? 1.0 : 0.0;
            out.push_back(std::move(ex));
        }
    };
    make(ds.train, train_size);
    make(ds.dev, dev_size);
    ds.spec.train_size = train_size;
    return ds;
}

}  // namespace

TEST_CASE("sampling_probs: proportional, uniform, square-root") {
    const auto prop = sampling_probs({3, 1}, 1.0);
    CHECK(prop[0] == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(prop[1] == doctest::Approx(0.25).epsilon(1e-12));

    const auto uni = sampling_probs({392000, 17, 5}, 0.0);
    for (double p : uni) CHECK(p == doctest::Approx(1.0 / 3).epsilon(1e-12));

    const auto sqrt_probs = sampling_probs({392000, 2500}, 0.5);
    // Against the direct evaluation, and the two tabulated digits.
    const double z = std::sqrt(392000.0) + std::sqrt(2500.0);
    CHECK(sqrt_probs[0] == doctest::Approx(std::sqrt(392000.0) / z).epsilon(1e-12));
    CHECK(std::round(sqrt_probs[0] * 1e4) / 1e4 == doctest::Approx(0.9260));
    CHECK(std::round(sqrt_probs[1] * 1e4) / 1e4 == doctest::Approx(0.0740));

    CHECK_THROWS(sampling_probs({}, 0.5));
    CHECK_THROWS(sampling_probs({0, 2}, 0.5));
}

TEST_CASE("sampling_probs properties: normalisation, monotonicity, scale invariance") {
    Rng rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 2 + rng.below(7);
        std::vector<long long> sizes;
        for (int i = 0; i < n; ++i) sizes.push_back(1 + rng.below(100000));
        const double alpha = rng.uniform01();
        const auto p = sampling_probs(sizes, alpha);
        double total = 0.0;
        for (double v : p) total += v;
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                if (sizes[static_cast<std::size_t>(i)] >= sizes[static_cast<std::size_t>(j)]) {
                    CHECK(p[static_cast<std::size_t>(i)] >=
                          p[static_cast<std::size_t>(j)] - 1e-12);
                }
            }
        }
        std::vector<long long> scaled;
        for (long long s : sizes) scaled.push_back(s * 7);
        const auto p2 = sampling_probs(scaled, alpha);
        for (int i = 0; i < n; ++i) {
            CHECK(p2[static_cast<std::size_t>(i)] ==
                  doctest::Approx(p[static_cast<std::size_t>(i)]).epsilon(1e-12));
        }
    }
}

TEST_CASE("anneal_alpha boundary and interior values") {
    CHECK(anneal_alpha(1, 25) == 1.0);
    CHECK(anneal_alpha(25, 25) == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(anneal_alpha(3, 5) == doctest::Approx(0.6).epsilon(1e-15));
    CHECK_THROWS(anneal_alpha(1, 1));
    CHECK_THROWS(anneal_alpha(0, 5));
    CHECK_THROWS(anneal_alpha(6, 5));
}

TEST_CASE("round-robin cycles deterministically") {
    SamplerConfig cfg;
    cfg.strategy = SamplingStrategy::kRoundRobin;
    cfg.task_sizes = {10, 20, 30};
    SamplerState state(cfg);
    Rng rng(2);
    for (int i = 0; i < 12; ++i) {
        CHECK(state.next_task(rng) == i % 3);
    }
}

TEST_CASE("stochastic draws follow the configured probabilities") {
    SamplerConfig cfg;
    cfg.strategy = SamplingStrategy::kAlpha;
    cfg.alpha = 1.0;
    cfg.task_sizes = {1, 1};
    SamplerState state(cfg);
    Rng rng(3);
    const int n = 100000;
    int count0 = 0;
    for (int i = 0; i < n; ++i) count0 += state.next_task(rng) == 0;
    const double freq = static_cast<double>(count0) / n;
    const double sigma = std::sqrt(0.25 / n);
    CHECK(std::fabs(freq - 0.5) < 3 * sigma);
}

TEST_CASE("annealed sampler: alpha follows the formula, draws follow the epoch's probs") {
    SamplerConfig cfg;
    cfg.strategy = SamplingStrategy::kAnnealed;
    cfg.total_epochs = 25;
    cfg.epoch_steps = 4000;
    cfg.task_sizes = kGlueSizes;
    SamplerState state(cfg);
    Rng rng(4);
    for (int epoch = 1; epoch <= 3; ++epoch) {
        std::vector<long long> counts(kGlueSizes.size(), 0);
        for (int s = 0; s < cfg.epoch_steps; ++s) {
            counts[static_cast<std::size_t>(state.next_task(rng))]++;
        }
        CHECK(state.current_alpha() ==
              doctest::Approx(anneal_alpha(epoch, 25)).epsilon(1e-15));
        const auto probs = sampling_probs(kGlueSizes, anneal_alpha(epoch, 25));
        for (std::size_t t = 0; t < probs.size(); ++t) {
            const double freq = static_cast<double>(counts[t]) / cfg.epoch_steps;
            const double sigma = std::sqrt(probs[t] * (1 - probs[t]) / cfg.epoch_steps);
            CHECK(std::fabs(freq - probs[t]) < 3.5 * sigma + 1e-9);
        }
    }
    CHECK_THROWS([&] {
        SamplerConfig bad = cfg;
        bad.total_epochs = 1;
        SamplerState s(bad);
    }());
}

TEST_CASE("lr_at: boundaries, peak, halfway decay, continuity") {
    TrainRunConfig run;
    run.total_steps = 60000;
    run.warmup_frac = 0.1;
    run.base_lr = 2e-5;
    CHECK(lr_at(0, run) == 0.0);
    CHECK(lr_at(6000, run) == doctest::Approx(2e-5).epsilon(1e-15));
    CHECK(lr_at(33000, run) == doctest::Approx(1e-5).epsilon(1e-12));
    CHECK(lr_at(60000, run) == 0.0);
    CHECK_THROWS(lr_at(-1, run));
    CHECK_THROWS(lr_at(60001, run));

    // Piecewise linear, continuous, peaking exactly once at the warmup end.
    double prev = lr_at(0, run);
    long long peak_step = 0;
    double peak = prev;
    for (long long s = 250; s <= 60000; s += 250) {
        const double cur = lr_at(s, run);
        CHECK(std::fabs(cur - prev) < 2e-5 * 260.0 / 6000.0);
        if (cur > peak) {
            peak = cur;
            peak_step = s;
        }
        prev = cur;
    }
    CHECK(peak_step == 6000);
    CHECK(peak == doctest::Approx(2e-5));
}

TEST_CASE("adam: hand-evaluated first steps") {
    TrainRunConfig run;
    run.weight_decay = 0.0;

    SUBCASE("zero gradients leave parameters untouched") {
        Tensor p = Tensor::from_data({3}, {1.0, -2.0, 0.5}, true);
        std::vector<NamedParam> params{{"p", p, ParamKind::kWeight}};
        Adam adam(params, run);
        p.grad();  // allocate zero gradient
        adam.step({0}, 1e-3);
        CHECK(p(0) == 1.0);
        CHECK(p(1) == -2.0);
        CHECK(p(2) == 0.5);
    }

    SUBCASE("first step with unit gradient moves by about -lr") {
        Tensor p = Tensor::from_data({1}, {0.0}, true);
        std::vector<NamedParam> params{{"p", p, ParamKind::kWeight}};
        Adam adam(params, run);
        p.grad()[0] = 1.0;
        adam.step({0}, 1e-3);
        // bias-corrected m̂/√v̂ = 1 up to eps
        CHECK(p(0) == doctest::Approx(-1e-3).epsilon(1e-6));
    }

    SUBCASE("decay-only step scales by (1 - lr·wd)") {
        TrainRunConfig wd = run;
        wd.weight_decay = 0.01;
        Tensor p = Tensor::from_data({1}, {1.0}, true);
        std::vector<NamedParam> params{{"p", p, ParamKind::kWeight}};
        Adam adam(params, wd);
        p.grad();  // zero gradient
        adam.step({0}, 1e-3);
        CHECK(p(0) == doctest::Approx(1.0 - 1e-5).epsilon(1e-12));
    }

    SUBCASE("biases and layer-norms are exempt from decay") {
        TrainRunConfig wd = run;
        wd.weight_decay = 0.01;
        Tensor b = Tensor::from_data({1}, {1.0}, true);
        std::vector<NamedParam> params{{"b", b, ParamKind::kBias}};
        Adam adam(params, wd);
        b.grad();
        adam.step({0}, 1e-3);
        CHECK(b(0) == 1.0);
    }

    SUBCASE("non-finite gradients name the tensor") {
        Tensor p = Tensor::from_data({2}, {0.0, 0.0}, true);
        std::vector<NamedParam> params{{"layer.weird", p, ParamKind::kWeight}};
        Adam adam(params, run);
        p.grad()[1] = std::numeric_limits<double>::quiet_NaN();
        CHECK_THROWS_WITH_AS(adam.step({0}, 1e-3), doctest::Contains("layer.weird"),
                             NumericError);
    }
}

TEST_CASE("training a linearly separable task beats 0.95 dev accuracy like the oracle") {
    TaskDataset task = separable_task(400, 100, 21);
    const Vocab vocab = Vocab::closed(12);

    // Reference learner: bag-of-words logistic regression.
    std::vector<std::vector<double>> xs;
    std::vector<int> ys;
    for (const Example& ex : task.train) {
        std::vector<double> bow(static_cast<std::size_t>(vocab.size()), 0.0);
        for (const auto& t : ex.text_a) bow[static_cast<std::size_t>(vocab.id_or_unk(t))] += 1;
        xs.push_back(std::move(bow));
        ys.push_back(ex.label_class());
    }
    oracle::LogisticOracle logistic;
    logistic.fit(xs, ys);
    int correct = 0;
    for (const Example& ex : task.dev) {
        std::vector<double> bow(static_cast<std::size_t>(vocab.size()), 0.0);
        for (const auto& t : ex.text_a) bow[static_cast<std::size_t>(vocab.id_or_unk(t))] += 1;
        correct += logistic.predict(bow) == ex.label_class();
    }
    const double oracle_acc = static_cast<double>(correct) / 100.0;
    CHECK(oracle_acc >= 0.95);

    ModelConfig cfg = toy_model();
    AdapterSpec spec;  // no adapters: plain fine-tune
    MultiTaskModel model(cfg, spec, {{2, false}}, 5);
    SamplerConfig sampler;
    sampler.strategy = SamplingStrategy::kAlpha;
    sampler.alpha = 1.0;
    TrainResult result = train(model, {task}, vocab, sampler, toy_run(500), 5, nullptr);
    CHECK(result.best_average >= 0.95);
    CHECK(result.loss_trace.size() == 500);
}

TEST_CASE("two identical tasks end within noise of each other") {
    TaskDataset t0 = separable_task(300, 80, 31);
    TaskDataset t1 = separable_task(300, 80, 31);  // same generator, same seed
    t1.spec.name = "presence2";
    const Vocab vocab = Vocab::closed(12);

    ModelConfig cfg = toy_model();
    AdapterSpec spec;
    SamplerConfig sampler;
    sampler.strategy = SamplingStrategy::kRoundRobin;
    double max_gap = 0.0;
    for (std::uint64_t seed : {11ull, 12ull, 13ull}) {
        MultiTaskModel model(cfg, spec, {{2, false}, {2, false}}, seed);
        TrainResult r = train(model, {t0, t1}, vocab, sampler, toy_run(400), seed, nullptr);
        REQUIRE(r.best_per_task.size() == 2);
        max_gap = std::max(max_gap, std::fabs(r.best_per_task[0] - r.best_per_task[1]));
    }
    CHECK(max_gap <= 0.02 + 1e-12);
}

TEST_CASE("zero training steps return the initial model and empty history") {
    TaskDataset task = separable_task(50, 20, 41);
    const Vocab vocab = Vocab::closed(12);
    ModelConfig cfg = toy_model();
    AdapterSpec spec;
    MultiTaskModel model(cfg, spec, {{2, false}}, 7);
    const auto before = model.snapshot();
    TrainResult r = train(model, {task}, vocab, {}, toy_run(0), 7, nullptr);
    CHECK(r.loss_trace.empty());
    CHECK(r.evals.empty());
    CHECK(r.best_step == 0);
    const auto after = model.snapshot();
    REQUIRE(before.size() == after.size());
    for (std::size_t i = 0; i < before.size(); ++i) {
        CHECK(before[i] == after[i]);
    }
}

TEST_CASE("training is bit-reproducible for a fixed (config, seed)") {
    TaskDataset task = separable_task(100, 30, 51);
    const Vocab vocab = Vocab::closed(12);
    ModelConfig cfg = toy_model();
    AdapterSpec spec;
    spec.family = AdapterFamily::kPal;
    spec.d_s = 8;
    spec.n_heads_s = 2;

    std::vector<double> trace1, trace2;
    for (int run_i = 0; run_i < 2; ++run_i) {
        MultiTaskModel model(cfg, spec, {{2, false}}, 99);
        SamplerConfig sampler;
        TrainResult r = train(model, {task}, vocab, sampler, toy_run(60), 99, nullptr);
        (run_i == 0 ? trace1 : trace2) = r.loss_trace;
    }
    REQUIRE(trace1.size() == trace2.size());
    for (std::size_t i = 0; i < trace1.size(); ++i) {
        CHECK(trace1[i] == trace2[i]);  // bitwise
    }
}

TEST_CASE("fully frozen models hold their dev metrics flat") {
    TaskDataset task = separable_task(100, 30, 61);
    const Vocab vocab = Vocab::closed(12);
    ModelConfig cfg = toy_model();
    AdapterSpec spec;
    spec.family = AdapterFamily::kPal;
    spec.d_s = 8;
    spec.n_heads_s = 2;
    MultiTaskModel model(cfg, spec, {{2, false}}, 3);
    TrainRunConfig run = toy_run(300);
    run.freeze_base = true;
    run.freeze_task = true;
    TrainResult r = train(model, {task}, vocab, {}, run, 3, nullptr);
    REQUIRE(r.evals.size() >= 2);
    for (const EvalPoint& pt : r.evals) {
        CHECK(pt.average == r.evals[0].average);
    }
}
