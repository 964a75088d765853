#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <stop_token>
#include <string>

#include "comet/ids.hpp"

namespace comet {

enum class ContextStatus { created, running, stopped };

std::string_view to_string(ContextStatus status);

/// An autonomous thread of control. Objects confined to a context are only
/// ever touched by its thread; the body observes stop requests at every
/// conduit wait and at `sleep_for`.
class ExecutionContext {
 public:
  using Clock = std::chrono::steady_clock;

  explicit ExecutionContext(std::string name = {});
  ~ExecutionContext();

  ExecutionContext(const ExecutionContext&) = delete;
  ExecutionContext& operator=(const ExecutionContext&) = delete;

  ContextId id() const { return id_; }
  const std::string& name() const { return name_; }
  ContextStatus status() const;

  /// Launches the thread. Throws AlreadyStarted unless status is created.
  void start(std::function<void()> body);

  void request_stop();
  bool stop_requested() const;

  /// True once the body has returned (or thrown).
  bool finished() const;
  bool wait_finished(Clock::time_point deadline) const;

  /// Joins a finished thread, or detaches a straggler. Either way the
  /// context is marked stopped afterwards.
  void retire();

 private:
  struct State;

  ContextId id_;
  std::string name_;
  std::shared_ptr<State> state_;
};

/// Id of the context running the calling thread; invalid outside any context.
ContextId current_context_id();

/// Stop token of the calling context; a never-stopping token outside one.
std::stop_token current_stop_token();

/// Sleeps on the calling context. Throws Stopped if a stop is requested first.
void sleep_for(std::chrono::nanoseconds duration);

}  // namespace comet
