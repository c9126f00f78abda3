#pragma once

#include <vector>

#include "palette/params.hpp"
#include "palette/scheduler.hpp"

namespace palette {

/// Adam over a fixed parameter registry, with decoupled weight decay applied
/// to kWeight tensors only (never biases or layer-norms). Each step updates
/// an explicit subset — in multi-task training only the parameters the
/// current task touches — and moments/bias-correction counters are tracked
/// per parameter.
class Adam {
  public:
    Adam(const std::vector<NamedParam>& params, const TrainRunConfig& cfg);

    // Applies one update at the given learning rate to the listed registry
    // indices, consuming their accumulated gradients. Throws NumericError on
    // a non-finite gradient, naming the tensor.
    void step(const std::vector<int>& indices, double lr);

    long long steps_taken(int index) const {
        return state_[static_cast<std::size_t>(index)].t;
    }

  private:
    struct Slot {
        std::vector<double> m, v;
        long long t = 0;
    };

    const std::vector<NamedParam>* params_;
    std::vector<Slot> state_;
    double beta1_, beta2_, eps_, weight_decay_;
};

}  // namespace palette
