#pragma once

#include <stdexcept>
#include <string>

namespace mldsim {

// Bad input files, bad config values, bad overrides. CLI maps this to exit 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace mldsim
