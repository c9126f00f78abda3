#pragma once

#include <string>
#include <vector>

#include "palette/adapters.hpp"
#include "palette/model_config.hpp"

namespace palette {

/// Exact parameter accounting for one adapter scheme across T tasks.
///
/// Counting follows the bookkeeping convention that headline numbers track
/// matrix weights only; bias and layer-norm terms (linear in the widths) are
/// tallied separately so the closed forms can be checked on the bias-free
/// portion. The budget ratio uses the fully instantiated base model —
/// embedding tables, per-layer biases, one pooling layer — as denominator.
struct BudgetReport {
    std::string family;
    int n_tasks = 0;

    // Base model (shared across tasks).
    long long base_total = 0;       // instantiated size incl. embeddings + one pooler
    long long base_embeddings = 0;  // token/position/segment tables + embedding LN

    // Adapter parameters, per task.
    long long proj_weights_per_task = 0;  // encoder/decoder matrices
    long long g_weights_per_task = 0;     // per-layer transforms (attention, FFN, scalars)
    long long adapter_weights_per_task = 0;
    long long adapter_aux_per_task = 0;  // adapter biases + task-owned layer-norms
    long long formula_per_task = 0;      // closed form, must equal the walk
    bool formula_matches_walk = false;

    // Totals across tasks.
    long long adapter_weights_total = 0;
    long long adapter_aux_total = 0;

    // Heads: output projections always; extra pooling layers only when
    // pooling is per-task (the base already carries one pooling layer).
    long long head_weights_total = 0;
    long long head_aux_total = 0;
    long long pooling_extra_total = 0;  // (T-1)·d² when pooling is per-task

    double ratio = 1.0;              // weight-convention additions / instantiated base
    double ratio_full = 1.0;         // including bias/layer-norm additions
    double ratio_excl_embeddings = 1.0;

    std::string to_string() const;
};

// Closed-form count AND a tensor-size walk of an instantiated adapter; throws
// std::logic_error if they disagree. head_outputs gives each task's output
// width (defaults to 2 classes per task when empty).
BudgetReport count_parameters(const AdapterSpec& spec, const ModelConfig& cfg, int n_tasks,
                              const std::vector<int>& head_outputs = {});

struct BudgetVerdict {
    bool pass = false;
    double limit_ratio = 1.13;
    double ratio = 1.0;          // unrounded
    double reported_ratio = 1.0; // rounded to the two decimals budgets are quoted at
    double headroom = 0.0;       // how much ratio can still grow before the verdict flips
    long long adapter_total = 0;
    long long adapter_per_task = 0;

    std::string to_string() const;
};

// Pass iff the ratio, rounded to the precision the limit is stated at (two
// decimals), does not exceed limit_ratio.
BudgetVerdict check_budget(const BudgetReport& report, double limit_ratio = 1.13);

// 14492160 -> "14,492,160"
std::string group_digits(long long v);

}  // namespace palette
