#pragma once

#include <stdexcept>
#include <string>

namespace palette {

// Error buckets mirroring the CLI exit codes: config/validation problems (1),
// numerical failures such as divergence or a failed gradient check (2), and
// filesystem trouble (3).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace palette
