#pragma once

#include <functional>
#include <string>
#include <vector>

#include "palette/tensor.hpp"

namespace palette {

// Weight decay applies to kWeight only; biases and layer-norm parameters
// are exempt.
enum class ParamKind { kWeight, kBias, kLayerNorm };

struct NamedParam {
    std::string name;
    Tensor tensor;
    ParamKind kind;
};

using ParamVisitor = std::function<void(const std::string&, Tensor&, ParamKind)>;

}  // namespace palette
