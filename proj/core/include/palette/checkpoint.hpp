#pragma once

#include <memory>
#include <optional>
#include <string>

#include "palette/model.hpp"
#include "palette/tasks.hpp"

namespace palette {

// Versioned checkpoint container: an 8-byte magic, a JSON header (model
// config, adapter spec, head specs, optional vocabulary, tensor directory),
// then the raw little-endian doubles of every named parameter. Round-trips
// are bit-exact.
inline constexpr char kCheckpointMagic[8] = {'P', 'L', 'T', 'C', 'K', 'P', 'T', '1'};

void save_checkpoint(const std::string& path, MultiTaskModel& model,
                     const Vocab* vocab = nullptr);

struct LoadedCheckpoint {
    std::unique_ptr<MultiTaskModel> model;
    std::optional<Vocab> vocab;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace palette
