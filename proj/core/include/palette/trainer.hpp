#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "palette/model.hpp"
#include "palette/scheduler.hpp"
#include "palette/tasks.hpp"

namespace palette {

/// Append-only metrics stream, schema `step,task,kind,name,value` with
/// kind ∈ {train,dev}. Values print as %.17g so reruns are byte-identical.
class MetricsWriter {
  public:
    explicit MetricsWriter(const std::string& path);

    void row(long long step, const std::string& task, const char* kind, const std::string& name,
             double value);

  private:
    std::ofstream out_;
};

struct EvalPoint {
    long long step = 0;
    std::vector<double> per_task;
    double average = 0.0;
};

struct TrainResult {
    std::vector<double> loss_trace;  // one entry per step
    std::vector<EvalPoint> evals;
    double best_average = 0.0;
    long long best_step = -1;
    std::vector<double> best_per_task;
    // Parameter snapshot of the best model, aligned with model.parameters().
    std::vector<std::vector<double>> best_snapshot;
};

// Dev-set score of one task under its configured metric.
double evaluate_task(MultiTaskModel& model, int task, const std::vector<EncodedExample>& dev,
                     const TaskSpec& spec);

// Examples encoded once against the model vocabulary, trimmed to real length.
std::vector<EncodedExample> encode_dataset(const std::vector<Example>& examples,
                                           const Vocab& vocab, int max_len);

// The multi-task loop: sample a task, draw a batch, cross-entropy or MSE
// loss, backward, Adam at the scheduled rate; every eval_every steps score
// all dev sets and keep the best-average snapshot (ties keep the earliest).
// Deterministic given (model seed, run seed, config).
TrainResult train(MultiTaskModel& model, const std::vector<TaskDataset>& tasks,
                  const Vocab& vocab, SamplerConfig sampler_cfg, const TrainRunConfig& run_cfg,
                  std::uint64_t seed, MetricsWriter* metrics = nullptr);

}  // namespace palette
