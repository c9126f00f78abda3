#include "palette/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "palette/errors.hpp"
#include "palette/metrics.hpp"
#include "palette/ops.hpp"
#include "palette/optimizer.hpp"

namespace palette {

MetricsWriter::MetricsWriter(const std::string& path) : out_(path, std::ios::trunc) {
    if (!out_) {
        throw IoError("metrics: cannot open '" + path + "' for writing");
    }
    out_ << "step,task,kind,name,value\n";
}

void MetricsWriter::row(long long step, const std::string& task, const char* kind,
                        const std::string& name, double value) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    out_ << step << ',' << task << ',' << kind << ',' << name << ',' << buf << '\n';
}

std::vector<EncodedExample> encode_dataset(const std::vector<Example>& examples,
                                           const Vocab& vocab, int max_len) {
    std::vector<EncodedExample> out;
    out.reserve(examples.size());
    for (const Example& ex : examples) {
        EncodedExample enc = encode_example(ex, vocab, max_len);
        // Trim padding: each example runs through the model at its own
        // length, so no positions need masking.
        enc.ids.resize(static_cast<std::size_t>(enc.real_len));
        enc.segments.resize(static_cast<std::size_t>(enc.real_len));
        enc.mask.clear();
        out.push_back(std::move(enc));
    }
    return out;
}

namespace {

Tensor example_loss(MultiTaskModel& model, int task, const EncodedExample& ex,
                    bool regression) {
    Tensor out = model.forward(task, ex.ids, ex.segments, {});
    if (regression) {
        return squared_error(out, ex.label);
    }
    return cross_entropy_with_logits(out, static_cast<int>(ex.label));
}

int argmax_row(const Tensor& logits) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(logits.numel()); ++i) {
        if (logits.data()[static_cast<std::size_t>(i)] >
            logits.data()[static_cast<std::size_t>(best)]) {
            best = i;
        }
    }
    return best;
}

}  // namespace

double evaluate_task(MultiTaskModel& model, int task, const std::vector<EncodedExample>& dev,
                     const TaskSpec& spec) {
    if (dev.empty()) {
        throw ConfigError("evaluate: task '" + spec.name + "' has an empty dev set");
    }
    NoGradGuard no_grad;
    if (spec.output_kind == OutputKind::kRegression) {
        std::vector<double> preds, labels;
        preds.reserve(dev.size());
        labels.reserve(dev.size());
        for (const EncodedExample& ex : dev) {
            Tensor out = model.forward(task, ex.ids, ex.segments, {});
            preds.push_back(out.value());
            labels.push_back(ex.label);
        }
        return metric_pearson(preds, labels);
    }
    std::vector<int> preds, labels;
    preds.reserve(dev.size());
    labels.reserve(dev.size());
    for (const EncodedExample& ex : dev) {
        Tensor out = model.forward(task, ex.ids, ex.segments, {});
        preds.push_back(argmax_row(out));
        labels.push_back(static_cast<int>(ex.label));
    }
    return spec.metric == TaskMetric::kMatthews ? metric_matthews(preds, labels)
                                                : metric_accuracy(preds, labels);
}

TrainResult train(MultiTaskModel& model, const std::vector<TaskDataset>& tasks,
                  const Vocab& vocab, SamplerConfig sampler_cfg, const TrainRunConfig& run_cfg,
                  std::uint64_t seed, MetricsWriter* metrics) {
    run_cfg.validate();
    if (tasks.empty()) {
        throw ConfigError("train: no tasks");
    }
    if (static_cast<int>(tasks.size()) != model.n_tasks()) {
        throw ConfigError("train: model has " + std::to_string(model.n_tasks()) +
                          " heads, got " + std::to_string(tasks.size()) + " tasks");
    }

    std::vector<std::vector<EncodedExample>> train_enc, dev_enc;
    sampler_cfg.task_sizes.clear();
    for (const TaskDataset& ds : tasks) {
        ds.spec.validate();
        if (ds.train.empty()) {
            throw ConfigError("train: task '" + ds.spec.name + "' has no training examples");
        }
        train_enc.push_back(encode_dataset(ds.train, vocab, run_cfg.max_seq_len));
        dev_enc.push_back(encode_dataset(ds.dev, vocab, run_cfg.max_seq_len));
        sampler_cfg.task_sizes.push_back(static_cast<long long>(ds.train.size()));
    }

    TrainResult result;
    result.best_snapshot = model.snapshot();
    result.best_step = 0;
    if (run_cfg.total_steps == 0) {
        return result;
    }

    // Frozen groups drop out of the tape entirely.
    const auto& params = model.parameters();
    std::vector<std::vector<int>> trainable(static_cast<std::size_t>(model.n_tasks()));
    std::vector<char> is_trainable(params.size(), 0);
    for (int t = 0; t < model.n_tasks(); ++t) {
        trainable[static_cast<std::size_t>(t)] =
            model.trainable_indices(t, run_cfg.freeze_base, run_cfg.freeze_task);
        for (int idx : trainable[static_cast<std::size_t>(t)]) {
            is_trainable[static_cast<std::size_t>(idx)] = 1;
        }
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const_cast<Tensor&>(params[i].tensor).set_requires_grad(is_trainable[i] != 0);
    }

    Adam adam(params, run_cfg);
    SamplerState sampler(sampler_cfg);
    Rng task_rng = Rng::derive(seed, 1);
    Rng batch_rng = Rng::derive(seed, 2);

    auto run_eval = [&](long long step) {
        EvalPoint pt;
        pt.step = step;
        double sum = 0.0;
        for (int t = 0; t < model.n_tasks(); ++t) {
            const double score =
                evaluate_task(model, t, dev_enc[static_cast<std::size_t>(t)], tasks[t].spec);
            pt.per_task.push_back(score);
            sum += score;
            if (metrics) {
                metrics->row(step, tasks[static_cast<std::size_t>(t)].spec.name, "dev",
                             metric_name(tasks[static_cast<std::size_t>(t)].spec.metric), score);
            }
        }
        pt.average = sum / static_cast<double>(model.n_tasks());
        if (metrics) {
            metrics->row(step, "average", "dev", "score", pt.average);
        }
        if (result.best_step < 0 || pt.average > result.best_average) {
            result.best_average = pt.average;
            result.best_step = step;
            result.best_per_task = pt.per_task;
            result.best_snapshot = model.snapshot();
        }
        result.evals.push_back(std::move(pt));
    };

    result.best_step = -1;
    for (long long step = 1; step <= run_cfg.total_steps; ++step) {
        const int task = sampler.next_task(task_rng);
        const auto& pool = train_enc[static_cast<std::size_t>(task)];
        const bool regression = tasks[static_cast<std::size_t>(task)].spec.output_kind ==
                                OutputKind::kRegression;

        for (const NamedParam& p : params) {
            const_cast<Tensor&>(p.tensor).zero_grad();
        }
        Tensor total;
        for (int b = 0; b < run_cfg.batch_size; ++b) {
            const int idx = batch_rng.below(static_cast<int>(pool.size()));
            Tensor loss =
                example_loss(model, task, pool[static_cast<std::size_t>(idx)], regression);
            total = b == 0 ? loss : add(total, loss);
        }
        Tensor loss = scale(total, 1.0 / run_cfg.batch_size);
        const double loss_value = loss.value();
        if (!std::isfinite(loss_value)) {
            throw NumericError("train: non-finite loss at step " + std::to_string(step) +
                               " on task '" + tasks[static_cast<std::size_t>(task)].spec.name +
                               "'");
        }
        loss.backward();
        const double lr = lr_at(step, run_cfg);
        adam.step(trainable[static_cast<std::size_t>(task)], lr);

        result.loss_trace.push_back(loss_value);
        if (metrics) {
            const std::string& tname = tasks[static_cast<std::size_t>(task)].spec.name;
            metrics->row(step, tname, "train", "loss", loss_value);
            metrics->row(step, tname, "train", "lr", lr);
        }
        if (step % run_cfg.eval_every == 0 || step == run_cfg.total_steps) {
            run_eval(step);
        }
    }
    return result;
}

}  // namespace palette
