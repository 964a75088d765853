#pragma once

#include <cstddef>
#include <deque>
#include <exception>
#include <functional>
#include <memory>
#include <optional>
#include <type_traits>
#include <unordered_map>
#include <utility>
#include <vector>

#include "comet/conduit.hpp"

namespace comet {

namespace detail {

template <typename T>
Envelope<T> seal(T&& payload, ClientId sender, std::uint64_t& counter) {
  return Envelope<T>{std::move(payload), sender, ++counter, EnvelopeId::next()};
}

template <typename T>
std::string digest_of(const Envelope<T>& env) {
  return envelope_digest(env.id, env.sender, describe(env.payload));
}

/// Runs a service handler, turning a thrown exception into an error reply.
template <typename Rep, typename Handler, typename Req>
Reply<Rep> run_handler(Handler& handler, Req&& request) {
  try {
    return Reply<Rep>(std::invoke(handler, std::forward<Req>(request)));
  } catch (const Stopped&) {
    throw;
  } catch (const std::exception& e) {
    return Reply<Rep>(ServiceError{e.what()});
  } catch (...) {
    return Reply<Rep>(ServiceError{"unknown failure"});
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Conduits

/// Single-slot cell shared by a message buffer's endpoints.
template <typename T>
class BufferConduit : public Conduit {
 public:
  using Conduit::Conduit;

  // The accessors below are only meaningful inside `when`/`inspect`.
  bool is_empty() const { return !cell_.has_value(); }
  std::uint64_t removed() const { return removed_; }

  /// Returns the ticket the sender's rendezvous waits on.
  std::uint64_t put(Envelope<T> env) {
    cell_.emplace(std::move(env));
    return ++placed_;
  }

  Envelope<T> remove() {
    Envelope<T> env = std::move(*cell_);
    cell_.reset();
    ++removed_;
    return env;
  }

 private:
  std::optional<Envelope<T>> cell_;
  std::uint64_t placed_ = 0;
  std::uint64_t removed_ = 0;
};

/// Bounded FIFO shared by a message queue's endpoints.
template <typename T>
class QueueConduit : public Conduit {
 public:
  QueueConduit(std::shared_ptr<TraceSink> trace, std::size_t capacity)
      : Conduit(std::move(trace)), capacity_(capacity) {
    if (capacity < 1) throw InvalidCapacity("queue capacity must be at least 1");
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t length() const { return items_.size(); }
  bool is_empty() const { return items_.empty(); }
  bool is_full() const { return items_.size() >= capacity_; }

  void put(Envelope<T> env) {
    items_.push_back(std::move(env));
    if (items_.size() > max_length_) max_length_ = items_.size();
    ++total_put_;
  }

  Envelope<T> remove() {
    Envelope<T> env = std::move(items_.front());
    items_.pop_front();
    return env;
  }

  // Instrumentation; read through `inspect`.
  std::size_t max_length() const { return max_length_; }
  std::size_t blocked_senders() const { return blocked_senders_; }
  std::uint64_t total_put() const { return total_put_; }

  std::size_t& blocked_senders_counter() { return blocked_senders_; }

 private:
  std::size_t capacity_;
  std::deque<Envelope<T>> items_;
  std::size_t max_length_ = 0;
  std::size_t blocked_senders_ = 0;
  std::uint64_t total_put_ = 0;
};

/// Request cell plus reply cell of a message buffer and reply connector.
template <typename Req, typename Rep>
class ReplyConduit : public Conduit {
 public:
  using Conduit::Conduit;

  bool has_request() const { return request_.has_value(); }
  bool has_reply() const { return reply_.has_value(); }
  bool outstanding() const { return outstanding_; }

  void put_request(Envelope<Req> env) {
    request_.emplace(std::move(env));
    outstanding_ = true;
  }

  Envelope<Req> take_request() {
    Envelope<Req> env = std::move(*request_);
    request_.reset();
    return env;
  }

  void put_reply(Envelope<Reply<Rep>> env) { reply_.emplace(std::move(env)); }

  Envelope<Reply<Rep>> take_reply() {
    Envelope<Reply<Rep>> env = std::move(*reply_);
    reply_.reset();
    outstanding_ = false;
    return env;
  }

 private:
  std::optional<Envelope<Req>> request_;
  std::optional<Envelope<Reply<Rep>>> reply_;
  bool outstanding_ = false;
};

/// Reply side of a message queue and callback connector: one FIFO of
/// answers per client.
template <typename Rep>
class CallbackConduit : public Conduit {
 public:
  using Conduit::Conduit;

  bool has_answer_for(ClientId client) const {
    auto it = answers_.find(client);
    return it != answers_.end() && !it->second.empty();
  }

  void put(ClientId client, Envelope<Reply<Rep>> env) { answers_[client].push_back(std::move(env)); }

  Envelope<Reply<Rep>> remove(ClientId client) {
    auto& fifo = answers_.at(client);
    Envelope<Reply<Rep>> env = std::move(fifo.front());
    fifo.pop_front();
    return env;
  }

  std::size_t pending() const {
    std::size_t n = 0;
    for (const auto& [client, fifo] : answers_) n += fifo.size();
    return n;
  }

 private:
  std::unordered_map<ClientId, std::deque<Envelope<Reply<Rep>>>> answers_;
};

// ---------------------------------------------------------------------------
// Endpoints. Move-only; each belongs to the component that took it.

class EndpointIdentity {
 public:
  EndpointId id() const { return id_; }

 private:
  EndpointId id_ = EndpointId::next();
};

template <typename T>
class BufferSender : public EndpointIdentity {
 public:
  using message_type = T;
  explicit BufferSender(std::shared_ptr<BufferConduit<T>> conduit) : conduit_(std::move(conduit)) {}
  BufferSender(BufferSender&&) noexcept = default;
  BufferSender& operator=(BufferSender&&) noexcept = default;

  /// Returns once the receiver has taken `msg` out of the cell.
  void send(T&& msg) {
    auto env = detail::seal(std::move(msg), ClientId{}, seq_);
    const auto id = env.id;
    auto& c = *conduit_;
    c.trace(EventKind::send_begin, id, detail::digest_of(env));
    auto ticket = c.when([&] { return c.is_empty(); }, [&] { return c.put(std::move(env)); });
    c.when([&] { return c.removed() >= ticket; }, [&] { c.trace(EventKind::send_end, id, "#" + std::to_string(id.value())); });
  }

 private:
  std::shared_ptr<BufferConduit<T>> conduit_;
  std::uint64_t seq_ = 0;
};

template <typename T>
class BufferReceiver : public EndpointIdentity {
 public:
  using message_type = T;
  explicit BufferReceiver(std::shared_ptr<BufferConduit<T>> conduit) : conduit_(std::move(conduit)) {}
  BufferReceiver(BufferReceiver&&) noexcept = default;
  BufferReceiver& operator=(BufferReceiver&&) noexcept = default;

  T receive() {
    auto& c = *conduit_;
    c.trace(EventKind::receive_begin, {}, {});
    auto env = c.when([&] { return !c.is_empty(); }, [&] {
      auto taken = c.remove();
      c.trace(EventKind::receive_end, taken.id, detail::digest_of(taken));
      return taken;
    });
    return std::move(env.payload);
  }

 private:
  std::shared_ptr<BufferConduit<T>> conduit_;
};

template <typename T>
class QueueSender : public EndpointIdentity {
 public:
  using message_type = T;
  explicit QueueSender(std::shared_ptr<QueueConduit<T>> conduit) : conduit_(std::move(conduit)) {}
  QueueSender(QueueSender&&) noexcept = default;
  QueueSender& operator=(QueueSender&&) noexcept = default;

  /// Waits only while the queue is full.
  void send(T&& msg) {
    auto env = detail::seal(std::move(msg), ClientId{}, seq_);
    auto& c = *conduit_;
    c.trace(EventKind::send_begin, env.id, detail::digest_of(env));
    c.when_counted(c.blocked_senders_counter(), [&] { return !c.is_full(); }, [&] {
      const auto id = env.id;
      c.put(std::move(env));
      c.trace(EventKind::send_end, id, "#" + std::to_string(id.value()));
    });
  }

 private:
  std::shared_ptr<QueueConduit<T>> conduit_;
  std::uint64_t seq_ = 0;
};

template <typename T>
class QueueReceiver : public EndpointIdentity {
 public:
  using message_type = T;
  explicit QueueReceiver(std::shared_ptr<QueueConduit<T>> conduit) : conduit_(std::move(conduit)) {}
  QueueReceiver(QueueReceiver&&) noexcept = default;
  QueueReceiver& operator=(QueueReceiver&&) noexcept = default;

  T receive() {
    auto& c = *conduit_;
    c.trace(EventKind::receive_begin, {}, {});
    return c.when([&] { return !c.is_empty(); }, [&] { return take(c); });
  }

  /// Non-blocking; never throws Stopped, so it can drain after a stop.
  std::optional<T> try_receive() {
    auto& c = *conduit_;
    return c.now([&]() -> std::optional<T> {
      if (c.is_empty()) return std::nullopt;
      return take(c);
    });
  }

 private:
  static T take(QueueConduit<T>& c) {
    auto env = c.remove();
    c.trace(EventKind::receive_end, env.id, detail::digest_of(env));
    return std::move(env.payload);
  }

  std::shared_ptr<QueueConduit<T>> conduit_;
};

template <typename Req, typename Rep>
class ReplySender : public EndpointIdentity {
 public:
  using request_type = Req;
  using reply_type = Rep;
  explicit ReplySender(std::shared_ptr<ReplyConduit<Req, Rep>> conduit) : conduit_(std::move(conduit)) {}
  ReplySender(ReplySender&&) noexcept = default;
  ReplySender& operator=(ReplySender&&) noexcept = default;

  /// Blocks for the whole round trip.
  Reply<Rep> request(Req&& msg) {
    auto env = detail::seal(std::move(msg), ClientId{}, seq_);
    const auto id = env.id;
    auto& c = *conduit_;
    c.trace(EventKind::send_begin, id, detail::digest_of(env));
    c.when([&] { return !c.outstanding(); }, [&] { c.put_request(std::move(env)); });
    auto answer = c.when([&] { return c.has_reply(); }, [&] {
      auto taken = c.take_reply();
      c.trace(EventKind::receive_end, taken.id, detail::digest_of(taken));
      c.trace(EventKind::send_end, id, "#" + std::to_string(id.value()));
      return taken;
    });
    return std::move(answer.payload);
  }

 private:
  std::shared_ptr<ReplyConduit<Req, Rep>> conduit_;
  std::uint64_t seq_ = 0;
};

template <typename Req, typename Rep>
class ReplyReceiver : public EndpointIdentity {
 public:
  using request_type = Req;
  using reply_type = Rep;
  explicit ReplyReceiver(std::shared_ptr<ReplyConduit<Req, Rep>> conduit) : conduit_(std::move(conduit)) {}
  ReplyReceiver(ReplyReceiver&&) noexcept = default;
  ReplyReceiver& operator=(ReplyReceiver&& other) noexcept {
    if (this != &other) {
      abandon();
      conduit_ = std::move(other.conduit_);
    }
    return *this;
  }
  // The requester can no longer be answered once the service side is gone.
  ~ReplyReceiver() { abandon(); }

  /// Takes one request, runs `handler` on it and deposits exactly one reply.
  template <typename Handler>
  void serve(Handler&& handler) {
    auto& c = *conduit_;
    c.trace(EventKind::receive_begin, {}, {});
    auto request = c.when([&] { return c.has_request(); }, [&] {
      auto taken = c.take_request();
      c.trace(EventKind::receive_end, taken.id, detail::digest_of(taken));
      return taken;
    });
    auto answer = detail::run_handler<Rep>(handler, std::move(request.payload));
    if (current_stop_token().stop_requested()) {
      // Stopped mid-reply.
      c.close();
      throw Stopped();
    }
    auto env = detail::seal(std::move(answer), ClientId{}, seq_);
    c.now([&] {
      c.trace(EventKind::reply, env.id, detail::digest_of(env));
      c.put_reply(std::move(env));
    });
  }

 private:
  void abandon() {
    if (conduit_) conduit_->close();
  }

  std::shared_ptr<ReplyConduit<Req, Rep>> conduit_;
  std::uint64_t seq_ = 0;
};

template <typename Req, typename Rep>
class CallbackSender : public EndpointIdentity {
 public:
  using request_type = Req;
  using reply_type = Rep;
  CallbackSender(std::shared_ptr<QueueConduit<Req>> send_conduit,
                 std::shared_ptr<CallbackConduit<Rep>> cb_conduit)
      : send_(std::move(send_conduit)), cb_(std::move(cb_conduit)) {}
  CallbackSender(CallbackSender&&) noexcept = default;
  CallbackSender& operator=(CallbackSender&&) noexcept = default;

  ClientId client_id() const { return client_; }

  /// Enqueues `msg` tagged with this endpoint's client id; does not wait
  /// for the answer.
  void send(Req&& msg) {
    auto env = detail::seal(std::move(msg), client_, seq_);
    auto& c = *send_;
    c.trace(EventKind::send_begin, env.id, detail::digest_of(env));
    c.when_counted(c.blocked_senders_counter(), [&] { return !c.is_full(); }, [&] {
      const auto id = env.id;
      c.put(std::move(env));
      c.trace(EventKind::send_end, id, "#" + std::to_string(id.value()) + " from=" + client_.str());
    });
  }

  /// Oldest answer addressed to this client.
  Reply<Rep> accept() {
    auto& c = *cb_;
    c.trace(EventKind::receive_begin, {}, client_.str());
    auto env = c.when([&] { return c.has_answer_for(client_); }, [&] {
      auto taken = c.remove(client_);
      c.trace(EventKind::receive_end, taken.id, detail::digest_of(taken));
      return taken;
    });
    return std::move(env.payload);
  }

 private:
  std::shared_ptr<QueueConduit<Req>> send_;
  std::shared_ptr<CallbackConduit<Rep>> cb_;
  ClientId client_ = ClientId::next();
  std::uint64_t seq_ = 0;
};

template <typename Req, typename Rep>
class CallbackReceiver : public EndpointIdentity {
 public:
  using request_type = Req;
  using reply_type = Rep;
  CallbackReceiver(std::shared_ptr<QueueConduit<Req>> send_conduit,
                   std::shared_ptr<CallbackConduit<Rep>> cb_conduit)
      : send_(std::move(send_conduit)), cb_(std::move(cb_conduit)) {}
  CallbackReceiver(CallbackReceiver&&) noexcept = default;
  CallbackReceiver& operator=(CallbackReceiver&&) noexcept = default;

  /// Dequeues one request and routes the handler's answer to its client.
  template <typename Handler>
  void serve(Handler&& handler) {
    auto& in = *send_;
    in.trace(EventKind::receive_begin, {}, {});
    auto request = in.when([&] { return !in.is_empty(); }, [&] {
      auto taken = in.remove();
      in.trace(EventKind::receive_end, taken.id, detail::digest_of(taken));
      return taken;
    });
    const ClientId client = request.sender;
    auto answer = detail::run_handler<Rep>(handler, std::move(request.payload));
    auto env = detail::seal(std::move(answer), client, seq_);
    auto& out = *cb_;
    out.now([&] {
      out.trace(EventKind::reply, env.id, detail::digest_of(env));
      out.put(client, std::move(env));
    });
  }

 private:
  std::shared_ptr<QueueConduit<Req>> send_;
  std::shared_ptr<CallbackConduit<Rep>> cb_;
  std::uint64_t seq_ = 0;
};

// ---------------------------------------------------------------------------
// Connectors: conduit(s) plus the endpoint factory. Component code only ever
// sees the endpoints.

template <typename T>
class BufferConnector final : public ConnectorBase {
 public:
  explicit BufferConnector(const ConnectorOptions& options)
      : ConnectorBase(ConnectorKind::message_buffer, options.message_type),
        conduit_(std::make_shared<BufferConduit<T>>(options.trace)) {}

  BufferSender<T> sender() {
    count_endpoint(End::sender);
    return BufferSender<T>(conduit_);
  }
  BufferReceiver<T> receiver() {
    count_endpoint(End::receiver);
    return BufferReceiver<T>(conduit_);
  }

  const BufferConduit<T>& conduit() const { return *conduit_; }

  std::vector<ConduitId> conduit_ids() const override { return {conduit_->id()}; }
  std::unique_ptr<EndpointBase> make_endpoint(End end) override {
    if (end == End::sender) return std::make_unique<EndpointSlot<BufferSender<T>>>(sender());
    return std::make_unique<EndpointSlot<BufferReceiver<T>>>(receiver());
  }
  void close() override { conduit_->close(); }

 private:
  std::shared_ptr<BufferConduit<T>> conduit_;
};

template <typename T>
class QueueConnector final : public ConnectorBase {
 public:
  explicit QueueConnector(const ConnectorOptions& options)
      : ConnectorBase(ConnectorKind::message_queue, options.message_type),
        conduit_(std::make_shared<QueueConduit<T>>(options.trace, options.capacity)) {}

  QueueSender<T> sender() {
    count_endpoint(End::sender);
    return QueueSender<T>(conduit_);
  }
  QueueReceiver<T> receiver() {
    count_endpoint(End::receiver);
    return QueueReceiver<T>(conduit_);
  }

  const QueueConduit<T>& conduit() const { return *conduit_; }

  std::vector<ConduitId> conduit_ids() const override { return {conduit_->id()}; }
  std::unique_ptr<EndpointBase> make_endpoint(End end) override {
    if (end == End::sender) return std::make_unique<EndpointSlot<QueueSender<T>>>(sender());
    return std::make_unique<EndpointSlot<QueueReceiver<T>>>(receiver());
  }
  void close() override { conduit_->close(); }

 private:
  std::shared_ptr<QueueConduit<T>> conduit_;
};

template <typename Req, typename Rep>
class ReplyConnector final : public ConnectorBase {
 public:
  explicit ReplyConnector(const ConnectorOptions& options)
      : ConnectorBase(ConnectorKind::buffer_and_reply, options.message_type),
        conduit_(std::make_shared<ReplyConduit<Req, Rep>>(options.trace)) {}

  ReplySender<Req, Rep> sender() {
    count_endpoint(End::sender);
    return ReplySender<Req, Rep>(conduit_);
  }
  ReplyReceiver<Req, Rep> receiver() {
    count_endpoint(End::receiver);
    return ReplyReceiver<Req, Rep>(conduit_);
  }

  const ReplyConduit<Req, Rep>& conduit() const { return *conduit_; }

  std::vector<ConduitId> conduit_ids() const override { return {conduit_->id()}; }
  std::unique_ptr<EndpointBase> make_endpoint(End end) override {
    if (end == End::sender) return std::make_unique<EndpointSlot<ReplySender<Req, Rep>>>(sender());
    return std::make_unique<EndpointSlot<ReplyReceiver<Req, Rep>>>(receiver());
  }
  void close() override { conduit_->close(); }

 private:
  std::shared_ptr<ReplyConduit<Req, Rep>> conduit_;
};

template <typename Req, typename Rep>
class CallbackConnector final : public ConnectorBase {
 public:
  explicit CallbackConnector(const ConnectorOptions& options)
      : ConnectorBase(ConnectorKind::queue_and_callback, options.message_type),
        send_(std::make_shared<QueueConduit<Req>>(options.trace, options.capacity)),
        cb_(std::make_shared<CallbackConduit<Rep>>(options.trace)) {}

  /// Each sender endpoint gets a fresh client id.
  CallbackSender<Req, Rep> sender() {
    count_endpoint(End::sender);
    return CallbackSender<Req, Rep>(send_, cb_);
  }
  CallbackReceiver<Req, Rep> receiver() {
    count_endpoint(End::receiver);
    return CallbackReceiver<Req, Rep>(send_, cb_);
  }

  const QueueConduit<Req>& send_conduit() const { return *send_; }
  const CallbackConduit<Rep>& callback_conduit() const { return *cb_; }

  std::vector<ConduitId> conduit_ids() const override { return {send_->id(), cb_->id()}; }
  std::unique_ptr<EndpointBase> make_endpoint(End end) override {
    if (end == End::sender) return std::make_unique<EndpointSlot<CallbackSender<Req, Rep>>>(sender());
    return std::make_unique<EndpointSlot<CallbackReceiver<Req, Rep>>>(receiver());
  }
  void close() override {
    send_->close();
    cb_->close();
  }

 private:
  std::shared_ptr<QueueConduit<Req>> send_;
  std::shared_ptr<CallbackConduit<Rep>> cb_;
};

// ---------------------------------------------------------------------------
// Constructors, one per connector family.

template <typename Sender, typename Receiver, typename Connector>
struct ConnectorParts {
  Sender sender;
  Receiver receiver;
  std::shared_ptr<Connector> connector;
};

template <typename T>
using BufferParts = ConnectorParts<BufferSender<T>, BufferReceiver<T>, BufferConnector<T>>;
template <typename T>
using QueueParts = ConnectorParts<QueueSender<T>, QueueReceiver<T>, QueueConnector<T>>;
template <typename Req, typename Rep>
using ReplyParts = ConnectorParts<ReplySender<Req, Rep>, ReplyReceiver<Req, Rep>, ReplyConnector<Req, Rep>>;
template <typename Req, typename Rep>
using CallbackParts =
    ConnectorParts<CallbackSender<Req, Rep>, CallbackReceiver<Req, Rep>, CallbackConnector<Req, Rep>>;

template <typename T>
BufferParts<T> make_buffer(const ConnectorOptions& options = {}) {
  auto connector = std::make_shared<BufferConnector<T>>(options);
  auto sender = connector->sender();
  auto receiver = connector->receiver();
  return {std::move(sender), std::move(receiver), std::move(connector)};
}

template <typename T>
QueueParts<T> make_queue(const ConnectorOptions& options = {}) {
  auto connector = std::make_shared<QueueConnector<T>>(options);
  auto sender = connector->sender();
  auto receiver = connector->receiver();
  return {std::move(sender), std::move(receiver), std::move(connector)};
}

template <typename Req, typename Rep>
ReplyParts<Req, Rep> make_reply(const ConnectorOptions& options = {}) {
  auto connector = std::make_shared<ReplyConnector<Req, Rep>>(options);
  auto sender = connector->sender();
  auto receiver = connector->receiver();
  return {std::move(sender), std::move(receiver), std::move(connector)};
}

template <typename Req, typename Rep>
CallbackParts<Req, Rep> make_callback(const ConnectorOptions& options = {}) {
  auto connector = std::make_shared<CallbackConnector<Req, Rep>>(options);
  auto sender = connector->sender();
  auto receiver = connector->receiver();
  return {std::move(sender), std::move(receiver), std::move(connector)};
}

}  // namespace comet
