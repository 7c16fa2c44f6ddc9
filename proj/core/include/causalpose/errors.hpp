#ifndef CAUSALPOSE_ERRORS_HPP
#define CAUSALPOSE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace causalpose {

// Error taxonomy mirrors the CLI exit-code contract: config errors exit 2,
// data/model mismatches exit 3, anything else exits 1.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace causalpose

#endif
