#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "comet/context.hpp"
#include "comet/errors.hpp"
#include "comet/ids.hpp"
#include "comet/trace.hpp"

namespace comet {

/// A payload in transit. Whoever holds the envelope owns the payload.
template <typename T>
struct Envelope {
  T payload;
  ClientId sender;  // set for callback connectors only
  std::uint64_t seq = 0;
  EnvelopeId id;
};

struct ServiceError {
  std::string message;
  friend bool operator==(const ServiceError&, const ServiceError&) = default;
};

/// Answer of a reply or callback connector: the service's value, or the
/// error its handler raised.
template <typename T>
class Reply {
 public:
  Reply(T value) : content_(std::move(value)) {}  // NOLINT(google-explicit-constructor)
  Reply(ServiceError error) : content_(std::move(error)) {}  // NOLINT(google-explicit-constructor)

  bool has_value() const { return std::holds_alternative<T>(content_); }
  explicit operator bool() const { return has_value(); }

  const T& value() const& {
    check();
    return std::get<T>(content_);
  }
  T&& value() && {
    check();
    return std::get<T>(std::move(content_));
  }
  const ServiceError& error() const { return std::get<ServiceError>(content_); }

 private:
  void check() const {
    if (!has_value()) throw ServiceFailure(error().message);
  }

  std::variant<T, ServiceError> content_;
};

template <typename T>
std::ostream& operator<<(std::ostream& out, const Reply<T>& reply);

/// Short text form of a payload for trace digests; empty when the type has
/// no stream operator.
template <typename T>
std::string describe(const T& value) {
  if constexpr (requires(std::ostream& out) { out << value; }) {
    std::ostringstream out;
    out << value;
    return sanitize_digest(out.str(), 64);
  } else {
    return {};
  }
}

template <typename T>
std::ostream& operator<<(std::ostream& out, const Reply<T>& reply) {
  if (reply.has_value()) return out << describe(reply.value());
  return out << "error(" << reply.error().message << ")";
}

/// Shared, internally synchronised communication state. Every operation is a
/// guarded action: `when(pred, action)` blocks until `pred` holds, then runs
/// `action` atomically and wakes the other waiters.
class Conduit {
 public:
  explicit Conduit(std::shared_ptr<TraceSink> trace)
      : id_(ConduitId::next()), source_(id_.str()), trace_(std::move(trace)) {}
  virtual ~Conduit() = default;

  Conduit(const Conduit&) = delete;
  Conduit& operator=(const Conduit&) = delete;

  ConduitId id() const { return id_; }
  const std::string& source() const { return source_; }

  /// Wakes every waiter with Stopped; later waits fail unless already satisfied.
  void close() {
    {
      std::lock_guard lock(mutex_);
      closed_ = true;
    }
    changed_.notify_all();
  }

  bool closed() const {
    std::lock_guard lock(mutex_);
    return closed_;
  }

  template <typename Pred, typename Action>
  decltype(auto) when(Pred&& pred, Action&& action) {
    return guarded(pred, action, nullptr);
  }

  /// Runs `action` atomically without waiting and without observing stop
  /// requests (draining, depositing an already computed reply).
  template <typename Action>
  decltype(auto) now(Action&& action) {
    auto always = [] { return true; };
    return guarded(always, action, nullptr, false);
  }

  /// Like `when`, but counts the caller in `waiting` while it is blocked.
  template <typename Pred, typename Action>
  decltype(auto) when_counted(std::size_t& waiting, Pred&& pred, Action&& action) {
    return guarded(pred, action, &waiting);
  }

  /// Runs `query` under the conduit lock without waiting.
  template <typename Query>
  decltype(auto) inspect(Query&& query) const {
    std::lock_guard lock(mutex_);
    return query();
  }

  void trace(EventKind kind, EnvelopeId envelope, std::string digest) const {
    if (trace_) trace_->emit(source_, kind, std::move(digest), envelope);
  }

  const std::shared_ptr<TraceSink>& trace_sink() const { return trace_; }

 private:
  template <typename Pred, typename Action>
  decltype(auto) guarded(Pred& pred, Action& action, std::size_t* waiting, bool wait_point = true) {
    std::unique_lock lock(mutex_);
    // Every guarded call is a wait point, even when it would not block.
    if (wait_point) {
      if (current_stop_token().stop_requested()) throw Stopped();
      if (closed_ && !pred()) throw Stopped("conduit " + source_ + " closed");
    }
    if (!pred()) {
      if (waiting) ++*waiting;
      try {
        wait_until(lock, pred);
      } catch (...) {
        if (waiting) --*waiting;
        throw;
      }
      if (waiting) --*waiting;
    }
    if constexpr (std::is_void_v<std::invoke_result_t<Action&>>) {
      action();
      lock.unlock();
      changed_.notify_all();
    } else {
      auto result = action();
      lock.unlock();
      changed_.notify_all();
      return result;
    }
  }

  template <typename Pred>
  void wait_until(std::unique_lock<std::mutex>& lock, Pred& pred) {
    auto token = current_stop_token();
    while (!pred()) {
      if (closed_) throw Stopped("conduit " + source_ + " closed");
      if (token.stop_requested()) throw Stopped();
      changed_.wait(lock, token, [&] { return closed_ || pred(); });
    }
  }

  ConduitId id_;
  std::string source_;
  std::shared_ptr<TraceSink> trace_;
  mutable std::mutex mutex_;
  std::condition_variable_any changed_;
  bool closed_ = false;
};

inline std::string envelope_digest(EnvelopeId id, ClientId client, std::string_view payload) {
  std::string out = "#" + std::to_string(id.value());
  if (client.valid()) out += " from=" + client.str();
  if (!payload.empty()) {
    out += ' ';
    out += payload;
  }
  return out;
}

enum class ConnectorKind { message_buffer, message_queue, buffer_and_reply, queue_and_callback };

std::string_view to_string(ConnectorKind kind);
std::optional<ConnectorKind> parse_connector_kind(std::string_view text);

/// Number of conduit objects realising one connector of `kind`.
constexpr std::size_t conduit_count(ConnectorKind kind) {
  return kind == ConnectorKind::queue_and_callback ? 2 : 1;
}

constexpr bool is_queue_based(ConnectorKind kind) {
  return kind == ConnectorKind::message_queue || kind == ConnectorKind::queue_and_callback;
}

/// Buffer and reply connectors have exactly one endpoint per end.
constexpr bool single_ended(ConnectorKind kind) { return !is_queue_based(kind); }

enum class End { sender, receiver };

std::string_view to_string(End end);

inline constexpr std::size_t kDefaultQueueCapacity = 16;

struct ConnectorOptions {
  std::shared_ptr<TraceSink> trace;
  std::size_t capacity = kDefaultQueueCapacity;
  std::string message_type;
};

/// Type-erased endpoint, used to hand endpoints to components by port name.
class EndpointBase {
 public:
  virtual ~EndpointBase() = default;
  virtual EndpointId id() const = 0;
};

template <typename E>
class EndpointSlot final : public EndpointBase {
 public:
  explicit EndpointSlot(E endpoint) : endpoint_(std::move(endpoint)) {}
  EndpointId id() const override { return endpoint_.id(); }
  E take() { return std::move(endpoint_); }

 private:
  E endpoint_;
};

/// Common face of the four connector families: conduits plus an endpoint factory.
class ConnectorBase {
 public:
  ConnectorBase(ConnectorKind kind, std::string message_type)
      : id_(ConnectorId::next()), kind_(kind), message_type_(std::move(message_type)) {}
  virtual ~ConnectorBase() = default;

  ConnectorId id() const { return id_; }
  ConnectorKind kind() const { return kind_; }
  const std::string& message_type() const { return message_type_; }

  virtual std::vector<ConduitId> conduit_ids() const = 0;
  virtual std::unique_ptr<EndpointBase> make_endpoint(End end) = 0;
  virtual void close() = 0;

  std::size_t endpoints_issued(End end) const {
    return (end == End::sender ? senders_ : receivers_).load();
  }

 protected:
  void count_endpoint(End end) {
    auto& n = end == End::sender ? senders_ : receivers_;
    if (single_ended(kind_)) {
      std::size_t expected = 0;
      if (!n.compare_exchange_strong(expected, 1)) {
        throw PortError(std::string(to_string(kind_)) + " permits exactly one " + std::string(to_string(end)));
      }
      return;
    }
    ++n;
  }

 private:
  ConnectorId id_;
  ConnectorKind kind_;
  std::string message_type_;
  std::atomic<std::size_t> senders_{0};
  std::atomic<std::size_t> receivers_{0};
};

}  // namespace comet
