#pragma once

#include <stdexcept>
#include <string>

namespace sflsim {

// Base for everything thrown by the library.
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Vector/tensor length or shape disagreement.
struct shape_error : error {
    using error::error;
};

// Malformed input file (IDX, CIFAR binary, CSV). Carries the byte offset
// where parsing gave up when known.
struct format_error : error {
    explicit format_error(const std::string& what, long long offset = -1)
        : error(offset >= 0 ? what + " (at byte offset " + std::to_string(offset) + ")" : what),
          offset(offset) {}
    long long offset;
};

// Bad experiment configuration: unknown key, out-of-range value, ...
struct config_error : error {
    using error::error;
};

// Non-finite values encountered during training or aggregation.
struct numeric_error : error {
    using error::error;
};

} // namespace sflsim
