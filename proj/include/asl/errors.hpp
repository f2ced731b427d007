#pragma once

#include <stdexcept>
#include <string>

namespace asl {

// Bad or missing input data (files, formats, annotations). CLI exit code 2.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numeric breakdown (non-finite loss, failed gradient check). CLI exit code 3.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace asl
