#pragma once

#include <chrono>
#include <functional>
#include <thread>

#include "comet/trace.hpp"

namespace comet::test {

using namespace std::chrono_literals;

/// Polls `pred` until it holds or `timeout` expires.
inline bool eventually(const std::function<bool()>& pred, std::chrono::milliseconds timeout = 2000ms) {
  auto deadline = std::chrono::steady_clock::now() + timeout;
  while (std::chrono::steady_clock::now() < deadline) {
    if (pred()) return true;
    std::this_thread::sleep_for(200us);
  }
  return pred();
}

/// Index of the first event matching `pred`, or npos.
inline std::size_t position(const SystemTrace& trace, const std::function<bool(const TraceEvent&)>& pred) {
  const auto& events = trace.events();
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (pred(events[i])) return i;
  }
  return static_cast<std::size_t>(-1);
}

inline std::size_t position_of(const SystemTrace& trace, EnvelopeId envelope, EventKind kind) {
  return position(trace, [&](const TraceEvent& e) { return e.envelope == envelope && e.kind == kind; });
}

inline std::size_t count_kind(const SystemTrace& trace, EventKind kind) { return trace.by_kind(kind).size(); }

}  // namespace comet::test
