#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "palette/rng.hpp"

namespace palette {

enum class SamplingStrategy { kRoundRobin, kAlpha, kAnnealed };

const char* strategy_name(SamplingStrategy s);
SamplingStrategy strategy_from_name(const std::string& name);

/// Task-selection schedule. Alpha covers the whole p_i ∝ N_i^α family
/// (α=1 proportional, α=0.5 square-root, α=0 uniform); Annealed decays α
/// from 1 to 0.2 linearly over total_epochs, recomputing probabilities at
/// epoch boundaries only.
struct SamplerConfig {
    SamplingStrategy strategy = SamplingStrategy::kAlpha;
    double alpha = 1.0;
    int total_epochs = 0;   // annealed only; >= 2
    int epoch_steps = 2400;
    std::vector<long long> task_sizes;

    void validate() const;
};

// p_i = N_i^α / Σ_j N_j^α
std::vector<double> sampling_probs(const std::vector<long long>& sizes, double alpha);

// α(e) = 1 − 0.8·(e−1)/(E−1), e in [1, E], E >= 2.
double anneal_alpha(int epoch, int total_epochs);

class SamplerState {
  public:
    explicit SamplerState(SamplerConfig cfg);

    // Picks the task for the next step and advances the step counter.
    int next_task(Rng& rng);

    long long step() const { return step_; }
    int epoch() const;  // 1-based, derived from the step counter
    double current_alpha() const { return alpha_; }
    const std::vector<double>& current_probs() const { return probs_; }
    const SamplerConfig& config() const { return cfg_; }

  private:
    void recompute_probs();

    SamplerConfig cfg_;
    std::vector<double> probs_;
    double alpha_ = 1.0;
    long long step_ = 0;
    int rr_cursor_ = 0;
};

/// Optimisation-run parameters. Defaults are the desk-scale setup; the
/// full-scale schedule (60,000 steps, 2,400-step epochs, batch 32) is a
/// config override away.
struct TrainRunConfig {
    long long total_steps = 3000;
    int batch_size = 32;
    int max_seq_len = 128;
    double warmup_frac = 0.1;
    long long eval_every = 120;
    double base_lr = 2e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 0.01;
    double adam_eps = 1e-8;
    bool freeze_base = false;
    bool freeze_task = false;
    std::vector<std::uint64_t> seeds{1, 2, 3};

    void validate() const;
};

// Slanted-triangular schedule: linear 0→base_lr over the first
// warmup_frac·total steps, then linear decay to exactly 0 at total_steps.
double lr_at(long long step, const TrainRunConfig& cfg);

}  // namespace palette
