#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "comet/ids.hpp"

namespace comet {

enum class EventKind {
  send_begin,
  send_end,
  receive_begin,
  receive_end,
  reply,
  step,
  state_change,
  custom,
  start,
  stop,
  forced_stop,
};

std::string_view to_string(EventKind kind);
std::optional<EventKind> parse_event_kind(std::string_view text);

struct TraceEvent {
  std::uint64_t seq = 0;
  std::string source;  // component or conduit object id
  EventKind kind = EventKind::custom;
  std::string digest;
  // Not part of the text export.
  EnvelopeId envelope;
  ContextId context;

  friend bool operator==(const TraceEvent&, const TraceEvent&) = default;
};

/// Immutable snapshot of a run's events, ordered by seq.
class SystemTrace {
 public:
  SystemTrace() = default;
  explicit SystemTrace(std::vector<TraceEvent> events) : events_(std::move(events)) {}

  const std::vector<TraceEvent>& events() const { return events_; }
  std::size_t size() const { return events_.size(); }
  bool empty() const { return events_.empty(); }

  std::vector<TraceEvent> by_source(std::string_view source) const;
  std::vector<TraceEvent> by_kind(EventKind kind) const;
  std::vector<TraceEvent> by_envelope(EnvelopeId envelope) const;
  std::vector<TraceEvent> filter(const std::function<bool(const TraceEvent&)>& pred) const;

  /// First event matching `pred`, if any.
  const TraceEvent* find(const std::function<bool(const TraceEvent&)>& pred) const;

  /// `seq<TAB>source<TAB>kind<TAB>digest`, one line per event.
  void write_text(std::ostream& out) const;
  std::string to_text() const;
  static SystemTrace parse_text(std::string_view text);

 private:
  std::vector<TraceEvent> events_;
};

/// Single serialized append point for trace events from any context.
class TraceSink {
 public:
  using Clock = std::chrono::steady_clock;

  std::uint64_t emit(std::string source, EventKind kind, std::string digest = {},
                     EnvelopeId envelope = {});
  std::uint64_t emit(TraceEvent event);

  /// Later emits throw SinkClosed.
  void close();
  bool closed() const;

  std::size_t size() const;
  SystemTrace snapshot() const;

  /// Blocks until `count` events satisfying `match` were emitted, or the
  /// deadline passes. Returns whether the count was reached.
  bool await(const std::function<bool(const TraceEvent&)>& match, std::size_t count,
             Clock::time_point deadline) const;

 private:
  mutable std::mutex mutex_;
  mutable std::condition_variable changed_;
  std::vector<TraceEvent> events_;
  std::uint64_t next_seq_ = 1;
  bool closed_ = false;
};

/// Tab/newline-free, bounded rendering used for digests.
std::string sanitize_digest(std::string_view text, std::size_t max_length = 96);

}  // namespace comet
