#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "comet/connectors.hpp"
#include "comet/runtime.hpp"

namespace comet {

namespace detail {

/// One-shot answer cell for cross-context queries.
template <typename R>
class Answer : public Conduit {
 public:
  Answer() : Conduit(nullptr) {}

  void set(R value) {
    now([&] { value_.emplace(std::move(value)); });
  }

  R get() {
    return when([&] { return value_.has_value(); }, [&] { return std::move(*value_); });
  }

 private:
  std::optional<R> value_;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Periodic task and its pacemaker

/// Job side of a periodic component. `step` runs on the task's own context;
/// the waiting between steps happens on a separate pacemaker context, so the
/// task stays available for queries while it is idle.
class PeriodicTask : public Behavior {
 public:
  using Duration = std::chrono::milliseconds;

  explicit PeriodicTask(Duration period);

  Duration period() const { return period_; }

  // Own-context view.
  bool is_done() const { return done_; }
  std::uint64_t step_count() const { return steps_; }

  /// Runs `query` on the task's context and returns its result. Callable
  /// from any context; answered between steps without waiting for the
  /// pacemaker.
  template <typename F>
  std::invoke_result_t<F&> query(F query) {
    using R = std::invoke_result_t<F&>;
    if (current_context_id() == own_context_.load()) return query();
    auto answer = std::make_shared<detail::Answer<R>>();
    post([answer, query]() mutable { answer->set(query()); });
    return answer->get();
  }

  bool query_is_done() {
    return query([this] { return done_; });
  }
  std::uint64_t query_step_count() {
    return query([this] { return steps_; });
  }

  ContextId context() const { return own_context_.load(); }
  ContextId pacemaker_context() const { return pacemaker_context_.load(); }

  void run(ComponentContext& self) final;
  void attached(ContextId context) override { own_context_.store(context); }

 protected:
  /// One iteration of the job.
  virtual void step(ComponentContext& self) = 0;
  /// Runs once on the task's context when the loop ends (done or stopped).
  virtual void finished(ComponentContext& self) { (void)self; }

  /// Marks the task done; no further step is scheduled.
  void finish() { done_ = true; }

 private:
  struct Tick {};
  using Command = std::variant<Tick, std::function<void()>>;

  void post(std::function<void()> query);
  void notify(ComponentContext& self, BufferSender<Tick>& pacemaker);

  Duration period_;
  bool done_ = false;
  std::uint64_t steps_ = 0;
  std::atomic<ContextId> own_context_{};
  std::atomic<ContextId> pacemaker_context_{};
  std::shared_ptr<QueueConnector<Command>> mailbox_;
  QueueReceiver<Command> inbox_;

  friend class Pacemaker;
};

/// Sleeps one period per request, then notifies the task.
class Pacemaker {
 public:
  using Duration = PeriodicTask::Duration;

  Pacemaker(Duration period, BufferReceiver<PeriodicTask::Tick> requests,
            QueueSender<PeriodicTask::Command> target)
      : period_(period), requests_(std::move(requests)), target_(std::move(target)) {}

  void run();

 private:
  Duration period_;
  BufferReceiver<PeriodicTask::Tick> requests_;
  QueueSender<PeriodicTask::Command> target_;
};

/// Periodic task built from a callable; `step` returns false once done.
class FunctionTask final : public PeriodicTask {
 public:
  using StepFn = std::function<bool(ComponentContext&, std::uint64_t step)>;

  FunctionTask(Duration period, StepFn fn) : PeriodicTask(period), fn_(std::move(fn)) {}

 protected:
  void step(ComponentContext& self) override {
    if (!fn_(self, step_count() + 1)) finish();
  }

 private:
  StepFn fn_;
};

// ---------------------------------------------------------------------------
// Demand-driven components

namespace detail {

/// Endpoint either handed over directly or taken from a port at run time.
template <typename E>
class EndpointSource {
 public:
  explicit EndpointSource(std::string port) : port_(std::move(port)) {}
  explicit EndpointSource(E endpoint) : endpoint_(std::move(endpoint)) {}

  E& get(ComponentContext& self) {
    if (!endpoint_) endpoint_.emplace(self.ports().template take<E>(port_));
    return *endpoint_;
  }

 private:
  std::string port_;
  std::optional<E> endpoint_;
};

}  // namespace detail

/// Woken by each message on its inbox; handles them one at a time, in order.
template <typename Receiver>
class DemandDrivenComponent : public Behavior {
 public:
  using Message = typename Receiver::message_type;
  using Handler = std::function<void(ComponentContext&, Message)>;

  DemandDrivenComponent(std::string port, Handler handler)
      : inbox_(std::move(port)), handler_(std::move(handler)) {}
  DemandDrivenComponent(Receiver inbox, Handler handler) : inbox_(std::move(inbox)), handler_(std::move(handler)) {}

  void run(ComponentContext& self) override {
    auto& inbox = inbox_.get(self);
    while (true) {
      auto msg = inbox.receive();
      ++handled_;
      handler_(self, std::move(msg));
      self.step("handled " + std::to_string(handled_));
    }
  }

  std::uint64_t handled() const { return handled_; }

 private:
  detail::EndpointSource<Receiver> inbox_;
  Handler handler_;
  std::uint64_t handled_ = 0;
};

/// Demand-driven service on a reply or callback receiver: one handler call
/// and one answer per request.
template <typename Receiver>
class ServiceComponent : public Behavior {
 public:
  using Request = typename Receiver::request_type;
  using Response = typename Receiver::reply_type;
  using Handler = std::function<Response(ComponentContext&, Request)>;

  ServiceComponent(std::string port, Handler handler) : inbox_(std::move(port)), handler_(std::move(handler)) {}
  ServiceComponent(Receiver inbox, Handler handler) : inbox_(std::move(inbox)), handler_(std::move(handler)) {}

  void run(ComponentContext& self) override {
    auto& inbox = inbox_.get(self);
    while (true) {
      inbox.serve([&](Request req) { return handler_(self, std::move(req)); });
      ++served_;
      self.step("served " + std::to_string(served_));
    }
  }

  std::uint64_t served() const { return served_; }

 private:
  detail::EndpointSource<Receiver> inbox_;
  Handler handler_;
  std::uint64_t served_ = 0;
};

// ---------------------------------------------------------------------------
// Event-driven I/O

struct SourceEvent {
  std::chrono::milliseconds delay{0};
  std::string name;
  std::vector<std::string> args;

  friend bool operator==(const SourceEvent&, const SourceEvent&) = default;
};

/// Deterministic stand-in for a device raising interrupts. Text form, one
/// event per line: `<delay_ms> <event_name> [<arg>...]`; `#` starts a comment.
class ScriptedEventSource {
 public:
  ScriptedEventSource() = default;
  explicit ScriptedEventSource(std::vector<SourceEvent> events, std::uint64_t seed = 0,
                               std::chrono::milliseconds jitter = std::chrono::milliseconds{0})
      : events_(std::move(events)), rng_(seed), jitter_(jitter) {}

  static ScriptedEventSource parse(std::string_view text, std::uint64_t seed = 0,
                                   std::chrono::milliseconds jitter = std::chrono::milliseconds{0});
  std::string to_text() const;

  /// Waits out the next event's delay on the calling context and returns
  /// the event, or nullopt once the script is exhausted.
  std::optional<SourceEvent> next();

  const std::vector<SourceEvent>& events() const { return events_; }
  std::size_t remaining() const { return events_.size() - cursor_; }

 private:
  std::vector<SourceEvent> events_;
  std::size_t cursor_ = 0;
  std::mt19937_64 rng_{0};
  std::chrono::milliseconds jitter_{0};
};

/// Turns each device event into at most one outbound message.
template <typename Sender>
class EventDrivenIOComponent : public Behavior {
 public:
  using Message = typename Sender::message_type;
  using Translate = std::function<std::optional<Message>(const SourceEvent&)>;

  EventDrivenIOComponent(std::string port, ScriptedEventSource source, Translate translate)
      : out_(std::move(port)), source_(std::move(source)), translate_(std::move(translate)) {}
  EventDrivenIOComponent(Sender out, ScriptedEventSource source, Translate translate)
      : out_(std::move(out)), source_(std::move(source)), translate_(std::move(translate)) {}

  void run(ComponentContext& self) override {
    auto& out = out_.get(self);
    while (auto event = source_.next()) {
      self.step(event->name);
      if (auto msg = translate_(*event)) {
        out.send(std::move(*msg));
        ++sent_;
      }
    }
  }

  std::uint64_t sent() const { return sent_; }

 private:
  detail::EndpointSource<Sender> out_;
  ScriptedEventSource source_;
  Translate translate_;
  std::uint64_t sent_ = 0;
};

// ---------------------------------------------------------------------------
// Passive entity

/// Data confined to its host's context. Every access runs on that context,
/// one at a time; an action that throws leaves the state untouched.
template <typename State>
class PassiveEntity : public Behavior {
 public:
  explicit PassiveEntity(State initial = State{}) : state_(std::move(initial)) {}

  void attached(ContextId host) override { host_ = host; }
  ContextId host_context() const { return host_; }

  /// `action(State&)` mutates a working copy which replaces the state on
  /// success. Returns whatever the action returns.
  template <typename Action>
  std::invoke_result_t<Action&, State&> access(Action&& action) {
    if (current_context_id() != host_) {
      throw WrongContext("entity confined to " + host_.str() + " accessed from " + current_context_id().str());
    }
    if (depth_ > 0) throw std::logic_error("reentrant entity access");
    ++depth_;
    max_depth_ = std::max(max_depth_, depth_);
    ++accesses_;
    struct Leave {
      std::size_t& depth;
      ~Leave() { --depth; }
    } leave{depth_};
    State next = state_;
    if constexpr (std::is_void_v<std::invoke_result_t<Action&, State&>>) {
      action(next);
      state_ = std::move(next);
    } else {
      auto result = action(next);
      state_ = std::move(next);
      return result;
    }
  }

  /// Read-only view; same confinement rule as `access`.
  State read() const {
    if (current_context_id() != host_) throw WrongContext("entity read from foreign context");
    return state_;
  }

  // Instrumentation, valid once the host has stopped.
  std::size_t max_depth() const { return max_depth_; }
  std::uint64_t accesses() const { return accesses_; }
  const State& state_after_stop() const { return state_; }

 private:
  State state_;
  ContextId host_;
  std::size_t depth_ = 0;
  std::size_t max_depth_ = 0;
  std::uint64_t accesses_ = 0;
};

}  // namespace comet
