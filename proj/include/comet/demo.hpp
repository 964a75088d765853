#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "comet/trace.hpp"

namespace comet {

/// Names accepted by run_demo.
const std::vector<std::string>& demo_patterns();

struct DemoResult {
  SystemTrace trace;    // connector events only (component steps for "periodic")
  std::vector<std::string> summary;
};

/// Runs a small self-contained system exercising one pattern `n` times.
/// Throws std::invalid_argument for an unknown pattern.
DemoResult run_demo(std::string_view pattern, std::size_t n);

}  // namespace comet
