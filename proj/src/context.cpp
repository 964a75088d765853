#include "comet/context.hpp"

#include <condition_variable>
#include <mutex>
#include <thread>

#include "comet/errors.hpp"

namespace comet {

namespace {

struct CurrentContext {
  ContextId id;
  std::stop_token token;
};

thread_local CurrentContext t_current;

}  // namespace

std::string_view to_string(ContextStatus status) {
  switch (status) {
    case ContextStatus::created: return "created";
    case ContextStatus::running: return "running";
    case ContextStatus::stopped: return "stopped";
  }
  return "unknown";
}

struct ExecutionContext::State {
  mutable std::mutex mutex;
  mutable std::condition_variable done;
  ContextStatus status = ContextStatus::created;
  bool finished = false;
  std::jthread thread;
};

ExecutionContext::ExecutionContext(std::string name)
    : id_(ContextId::next()), name_(std::move(name)), state_(std::make_shared<State>()) {}

ExecutionContext::~ExecutionContext() {
  if (state_->thread.joinable()) {
    state_->thread.request_stop();
    state_->thread.join();
  }
}

ContextStatus ExecutionContext::status() const {
  std::lock_guard lock(state_->mutex);
  return state_->status;
}

void ExecutionContext::start(std::function<void()> body) {
  std::lock_guard lock(state_->mutex);
  if (state_->status != ContextStatus::created) {
    throw AlreadyStarted(id_.str() + " is " + std::string(to_string(state_->status)));
  }
  state_->status = ContextStatus::running;
  // The thread keeps the state alive on its own so a detached straggler
  // never touches freed memory.
  state_->thread = std::jthread([state = state_, id = id_, body = std::move(body)](std::stop_token token) {
    t_current = CurrentContext{id, token};
    try {
      body();
    } catch (...) {
    }
    {
      std::lock_guard lock(state->mutex);
      state->finished = true;
    }
    state->done.notify_all();
  });
}

void ExecutionContext::request_stop() {
  std::lock_guard lock(state_->mutex);
  if (state_->thread.joinable()) state_->thread.request_stop();
  if (state_->status == ContextStatus::created) state_->status = ContextStatus::stopped;
}

bool ExecutionContext::stop_requested() const {
  std::lock_guard lock(state_->mutex);
  return state_->thread.get_stop_source().stop_requested() ||
         state_->status == ContextStatus::stopped;
}

bool ExecutionContext::finished() const {
  std::lock_guard lock(state_->mutex);
  return state_->finished;
}

bool ExecutionContext::wait_finished(Clock::time_point deadline) const {
  std::unique_lock lock(state_->mutex);
  if (state_->status == ContextStatus::created) return true;
  return state_->done.wait_until(lock, deadline, [&] { return state_->finished; });
}

void ExecutionContext::retire() {
  std::jthread thread;
  {
    std::lock_guard lock(state_->mutex);
    thread = std::move(state_->thread);
    state_->status = ContextStatus::stopped;
  }
  if (!thread.joinable()) return;
  if (finished()) {
    thread.join();
  } else {
    thread.request_stop();
    thread.detach();
  }
}

ContextId current_context_id() { return t_current.id; }

std::stop_token current_stop_token() { return t_current.token; }

void sleep_for(std::chrono::nanoseconds duration) {
  auto token = current_stop_token();
  if (token.stop_requested()) throw Stopped();
  if (!token.stop_possible()) {
    std::this_thread::sleep_for(duration);
    return;
  }
  std::mutex mutex;
  std::condition_variable_any cv;
  std::unique_lock lock(mutex);
  cv.wait_for(lock, token, duration, [] { return false; });
  if (token.stop_requested()) throw Stopped();
}

}  // namespace comet
