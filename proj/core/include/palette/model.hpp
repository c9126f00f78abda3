#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "palette/adapters.hpp"
#include "palette/encoder.hpp"
#include "palette/model_config.hpp"
#include "palette/params.hpp"

namespace palette {

struct TaskHeadSpec {
    int n_outputs = 2;
    bool regression = false;
};

/// Shared encoder + per-task adapters + per-task heads. Initialisation draws
/// from independent streams per component (encoder, each adapter, each head),
/// so models that differ only in adapter family share identical base and head
/// weights for the same seed.
class MultiTaskModel {
  public:
    MultiTaskModel(const ModelConfig& cfg, const AdapterSpec& spec,
                   const std::vector<TaskHeadSpec>& heads, std::uint64_t seed);

    int n_tasks() const { return static_cast<int>(heads_.size()); }
    const ModelConfig& config() const { return cfg_; }
    const AdapterSpec& adapter_spec() const { return spec_; }
    EncoderParams& encoder() { return encoder_; }
    TaskAdapter& adapter(int task) { return adapters_[static_cast<std::size_t>(task)]; }
    TaskHead& head(int task) { return heads_[static_cast<std::size_t>(task)]; }
    const std::vector<TaskHeadSpec>& head_specs() const { return head_specs_; }

    // Final hidden states with the task's adapters in play (mask marks real
    // positions; empty = all real).
    Tensor encode_task(int task, const std::vector<int>& token_ids,
                       const std::vector<int>& segment_ids,
                       const std::vector<std::uint8_t>& mask);
    // Adapter-free pass through the shared encoder.
    Tensor encode_base(const std::vector<int>& token_ids, const std::vector<int>& segment_ids,
                       const std::vector<std::uint8_t>& mask);
    // Logits (1×k) or regression output (1×1) for one task.
    Tensor forward(int task, const std::vector<int>& token_ids,
                   const std::vector<int>& segment_ids, const std::vector<std::uint8_t>& mask);

    // All parameters in a stable, named order. The list is built once; the
    // handles alias model storage.
    const std::vector<NamedParam>& parameters();

    // Indices into parameters() that a step on `task` may update.
    std::vector<int> trainable_indices(int task, bool freeze_base, bool freeze_task);

    std::vector<std::vector<double>> snapshot();
    void restore(const std::vector<std::vector<double>>& snap);

  private:
    void check_task(int task) const;

    ModelConfig cfg_;
    AdapterSpec spec_;
    std::vector<TaskHeadSpec> head_specs_;
    EncoderParams encoder_;
    std::vector<TaskAdapter> adapters_;
    std::vector<TaskHead> heads_;
    Tensor shared_pool_w_, shared_pool_b_;
    std::vector<NamedParam> params_;
    std::vector<int> encoder_indices_;
    std::vector<int> shared_head_indices_;          // shared pooling, when enabled
    std::vector<std::vector<int>> task_indices_;    // adapter + head per task
};

}  // namespace palette
