#include "palette/scheduler.hpp"

#include <cmath>
#include <string>

#include "palette/errors.hpp"

namespace palette {

const char* strategy_name(SamplingStrategy s) {
    switch (s) {
        case SamplingStrategy::kRoundRobin: return "round_robin";
        case SamplingStrategy::kAlpha: return "alpha";
        case SamplingStrategy::kAnnealed: return "annealed";
    }
    return "?";
}

SamplingStrategy strategy_from_name(const std::string& name) {
    for (SamplingStrategy s : {SamplingStrategy::kRoundRobin, SamplingStrategy::kAlpha,
                               SamplingStrategy::kAnnealed}) {
        if (name == strategy_name(s)) return s;
    }
    throw ConfigError("unknown sampling strategy '" + name + "'");
}

void SamplerConfig::validate() const {
    if (task_sizes.empty()) {
        throw ConfigError("sampler: no task sizes");
    }
    for (long long n : task_sizes) {
        if (n < 1) throw ConfigError("sampler: task sizes must be >= 1");
    }
    if (strategy == SamplingStrategy::kAlpha && (alpha < 0.0 || alpha > 1.0)) {
        throw ConfigError("sampler: alpha must lie in [0,1]");
    }
    if (strategy == SamplingStrategy::kAnnealed) {
        if (total_epochs < 2) {
            throw ConfigError("sampler: annealed schedule needs total_epochs >= 2");
        }
        if (epoch_steps < 1) {
            throw ConfigError("sampler: epoch_steps must be >= 1");
        }
    }
}

std::vector<double> sampling_probs(const std::vector<long long>& sizes, double alpha) {
    if (sizes.empty()) {
        throw ConfigError("sampling_probs: empty size list");
    }
    std::vector<double> p(sizes.size());
    double z = 0.0;
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        if (sizes[i] < 1) {
            throw ConfigError("sampling_probs: sizes must be >= 1");
        }
        p[i] = std::pow(static_cast<double>(sizes[i]), alpha);
        z += p[i];
    }
    for (double& v : p) v /= z;
    return p;
}

double anneal_alpha(int epoch, int total_epochs) {
    if (total_epochs < 2) {
        throw ConfigError("anneal_alpha: total_epochs must be >= 2");
    }
    if (epoch < 1 || epoch > total_epochs) {
        throw ConfigError("anneal_alpha: epoch " + std::to_string(epoch) + " outside [1," +
                          std::to_string(total_epochs) + "]");
    }
    return 1.0 - 0.8 * static_cast<double>(epoch - 1) / static_cast<double>(total_epochs - 1);
}

SamplerState::SamplerState(SamplerConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    recompute_probs();
}

int SamplerState::epoch() const {
    if (cfg_.strategy != SamplingStrategy::kAnnealed) return 1;
    const int e = 1 + static_cast<int>(step_ / cfg_.epoch_steps);
    return e > cfg_.total_epochs ? cfg_.total_epochs : e;  // clamp past the last epoch
}

void SamplerState::recompute_probs() {
    switch (cfg_.strategy) {
        case SamplingStrategy::kRoundRobin:
            alpha_ = 0.0;
            probs_.assign(cfg_.task_sizes.size(), 1.0 / static_cast<double>(cfg_.task_sizes.size()));
            break;
        case SamplingStrategy::kAlpha:
            alpha_ = cfg_.alpha;
            probs_ = sampling_probs(cfg_.task_sizes, alpha_);
            break;
        case SamplingStrategy::kAnnealed:
            alpha_ = anneal_alpha(epoch(), cfg_.total_epochs);
            probs_ = sampling_probs(cfg_.task_sizes, alpha_);
            break;
    }
}

int SamplerState::next_task(Rng& rng) {
    if (cfg_.strategy == SamplingStrategy::kAnnealed && step_ % cfg_.epoch_steps == 0) {
        recompute_probs();  // epoch boundary
    }
    ++step_;
    if (cfg_.strategy == SamplingStrategy::kRoundRobin) {
        const int t = rr_cursor_;
        rr_cursor_ = (rr_cursor_ + 1) % static_cast<int>(cfg_.task_sizes.size());
        return t;
    }
    const double u = rng.uniform01();
    double acc = 0.0;
    for (std::size_t i = 0; i < probs_.size(); ++i) {
        acc += probs_[i];
        if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(probs_.size()) - 1;  // guard against rounding at u≈1
}

void TrainRunConfig::validate() const {
    if (total_steps < 0) {
        throw ConfigError("run: total_steps must be >= 0");
    }
    if (batch_size < 1) {
        throw ConfigError("run: batch_size must be >= 1");
    }
    if (max_seq_len < 3) {
        throw ConfigError("run: max_seq_len must be >= 3");
    }
    if (!(warmup_frac > 0.0 && warmup_frac < 1.0)) {
        throw ConfigError("run: warmup_frac must lie in (0,1)");
    }
    if (eval_every < 1) {
        throw ConfigError("run: eval_every must be >= 1");
    }
    if (!(base_lr > 0.0)) {
        throw ConfigError("run: base_lr must be positive");
    }
    if (seeds.empty()) {
        throw ConfigError("run: at least one seed");
    }
}

double lr_at(long long step, const TrainRunConfig& cfg) {
    if (step < 0 || step > cfg.total_steps) {
        throw ConfigError("lr_at: step " + std::to_string(step) + " outside [0," +
                          std::to_string(cfg.total_steps) + "]");
    }
    if (cfg.total_steps == 0) return 0.0;
    const double warmup = cfg.warmup_frac * static_cast<double>(cfg.total_steps);
    const double s = static_cast<double>(step);
    if (s <= warmup) {
        return cfg.base_lr * s / warmup;
    }
    return cfg.base_lr * (static_cast<double>(cfg.total_steps) - s) /
           (static_cast<double>(cfg.total_steps) - warmup);
}

}  // namespace palette
