#pragma once

#include <stdexcept>
#include <string>

namespace blinkline {

// File ingestion / emission failures (missing files, truncated data, bad
// frame sequences).
struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Model file problems: unknown version, wrong tensor shapes.
struct model_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace blinkline
