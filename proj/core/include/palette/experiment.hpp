#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "palette/adapters.hpp"
#include "palette/gradcheck.hpp"
#include "palette/model.hpp"
#include "palette/model_config.hpp"
#include "palette/scheduler.hpp"
#include "palette/tasks.hpp"
#include "palette/trainer.hpp"

namespace palette {

struct SynthSource {
    SynthFamily family = SynthFamily::kParity;
    long long size = 1000;
    int dev_size = 128;
    std::uint64_t seed = 7;
};

struct TsvSource {
    std::string train_path;
    std::string dev_path;
};

struct TaskConfig {
    TaskSpec spec;
    bool is_synth = true;
    SynthSource synth;
    TsvSource tsv;

    TaskDataset load(int vocab_size) const;
};

/// One experiment, end to end: architecture, adapter scheme, sampling
/// schedule, optimisation run, and the task list. Parsed from a strict JSON
/// document; the resolved form (defaults filled) is re-emitted next to run
/// outputs so any run can be reproduced from files alone.
struct ExperimentConfig {
    ModelConfig model;
    AdapterSpec adapter;
    SamplerConfig sampler;
    TrainRunConfig run;
    std::vector<TaskConfig> tasks;
    std::string output_dir = "out";

    // Cross-field checks; resolves the annealed epoch count from
    // total_steps/epoch_steps when left at 0.
    void validate();

    std::vector<TaskHeadSpec> head_specs() const;
    std::vector<int> head_outputs() const;
};

// Parse + apply dotted-path overrides ("run.total_steps=500") + validate.
ExperimentConfig parse_experiment_config(const std::string& json_text,
                                         const std::vector<std::string>& overrides = {});
ExperimentConfig load_experiment_config(const std::string& path,
                                        const std::vector<std::string>& overrides = {});

// The resolved config as a JSON document.
std::string resolved_config_json(const ExperimentConfig& cfg);

std::vector<TaskDataset> load_task_datasets(const ExperimentConfig& cfg);

// Training-set sizes without materialising synthetic data (TSV tasks are
// counted from their files).
std::vector<long long> experiment_task_sizes(const ExperimentConfig& cfg);

// Synthetic tasks use the closed vocabulary; TSV tasks fill the remaining
// slots from their data in reading order. Tokens beyond vocab_size fall back
// to [UNK].
Vocab build_experiment_vocab(const ExperimentConfig& cfg,
                             const std::vector<TaskDataset>& datasets);

struct SeedRun {
    std::uint64_t seed = 0;
    TrainResult result;
};

struct ExperimentResult {
    std::vector<SeedRun> runs;
    // Across seeds, of each run's best-model dev scores.
    std::vector<double> mean_per_task;
    std::vector<double> stderr_per_task;
    double mean_average = 0.0;
    double stderr_average = 0.0;
};

// One training run per seed. When out_dir is non-empty, writes per-seed
// metrics CSVs and best checkpoints, the resolved config, and a summary
// table (mean ± standard error per task).
ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::string& out_dir);

// Dev-set scores of a checkpointed model on the config's tasks.
std::vector<double> evaluate_checkpoint(const std::string& checkpoint_path,
                                        const ExperimentConfig& cfg);

// Gradient fidelity of one full forward pass (encoder + adapter + head +
// loss) for the given family at the config's (small) dimensions. corrupt
// flips the sign of one reverse-mode gradient — the negative control.
GradCheckReport family_gradient_check(const ModelConfig& model_cfg, AdapterSpec spec,
                                      double tol, double eps = 0.0, bool corrupt = false);

// All families, as the gradcheck command runs them.
std::vector<AdapterFamily> gradcheck_families();

// A family spec sized for finite-difference work (small projected width,
// two heads, short top stacks).
AdapterSpec small_family_spec(AdapterFamily family, const ModelConfig& model_cfg);

}  // namespace palette
