#pragma once

#include <chrono>
#include <functional>
#include <latch>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "comet/conduit.hpp"
#include "comet/context.hpp"
#include "comet/errors.hpp"
#include "comet/ids.hpp"
#include "comet/trace.hpp"

namespace comet {

enum class RoleStereotype { io, control, algorithm, entity, coordinator };
enum class ConcurrencyType { event_driven, demand_driven, periodic, passive };

std::string_view to_string(RoleStereotype role);
std::string_view to_string(ConcurrencyType concurrency);
std::optional<RoleStereotype> parse_role(std::string_view text);
std::optional<ConcurrencyType> parse_concurrency(std::string_view text);

using Params = std::map<std::string, std::string, std::less<>>;

/// What the runtime needs to know to create one component.
struct ComponentDescriptor {
  std::string name;
  RoleStereotype role = RoleStereotype::control;
  ConcurrencyType concurrency = ConcurrencyType::demand_driven;
  std::optional<ComponentId> host;  // passive components only
  Params params;
};

/// Connects a component port to one end of a registered connector.
struct EndpointBinding {
  std::string port;
  ConnectorId connector;
  End end = End::sender;
};

struct ComponentHandle {
  ComponentId component_id;
  ContextId context_id;
  RoleStereotype role = RoleStereotype::control;
  ConcurrencyType concurrency = ConcurrencyType::demand_driven;
  std::string name;

  bool passive() const { return concurrency == ConcurrencyType::passive; }
  friend bool operator==(const ComponentHandle&, const ComponentHandle&) = default;
};

/// Endpoints handed to a component, keyed by port name. Each endpoint can be
/// taken exactly once.
class Ports {
 public:
  void add(std::string port, std::unique_ptr<EndpointBase> endpoint);
  bool has(std::string_view port) const;
  std::vector<std::string> names() const;

  template <typename E>
  E take(std::string_view port) {
    auto it = slots_.find(port);
    if (it == slots_.end() || !it->second) {
      throw PortError("no endpoint bound to port '" + std::string(port) + "'");
    }
    auto* slot = dynamic_cast<EndpointSlot<E>*>(it->second.get());
    if (slot == nullptr) {
      throw PortError("port '" + std::string(port) + "' holds a different endpoint type");
    }
    E endpoint = slot->take();
    it->second.reset();
    return endpoint;
  }

 private:
  std::map<std::string, std::unique_ptr<EndpointBase>, std::less<>> slots_;
};

class ComponentContext;

/// Application logic of a component. Active components run `run` on their
/// own context; passive ones are only reached through their host.
class Behavior {
 public:
  virtual ~Behavior() = default;
  virtual void run(ComponentContext& self) { (void)self; }
  /// Called at spawn with the context the component is confined to.
  virtual void attached(ContextId context) { (void)context; }
};

using BehaviorPtr = std::shared_ptr<Behavior>;

/// The view a running component has of itself.
class ComponentContext {
 public:
  ComponentContext(ComponentHandle handle, Params params, std::shared_ptr<TraceSink> trace);

  const ComponentHandle& handle() const { return handle_; }
  ComponentId id() const { return handle_.component_id; }
  const std::string& name() const { return handle_.name; }
  const std::string& source() const { return source_; }

  const Params& params() const { return params_; }
  std::string param(std::string_view key, std::string_view fallback = {}) const;

  Ports& ports() { return ports_; }

  void emit(EventKind kind, std::string digest = {}) const;
  void step(std::string digest = {}) const { emit(EventKind::step, std::move(digest)); }
  void state_change(std::string_view from, std::string_view to) const;

  bool stop_requested() const { return current_stop_token().stop_requested(); }

  /// Passive component hosted by this one.
  template <typename T>
  T& passive(std::string_view name) {
    auto it = passives_.find(name);
    if (it == passives_.end()) {
      throw PortError("component '" + handle_.name + "' hosts no passive component '" + std::string(name) + "'");
    }
    auto* typed = dynamic_cast<T*>(it->second.get());
    if (typed == nullptr) throw PortError("passive component '" + std::string(name) + "' has another type");
    return *typed;
  }

  /// First hosted passive component of type T, or nullptr.
  template <typename T>
  T* find_passive() {
    for (auto& [name, behavior] : passives_) {
      if (auto* typed = dynamic_cast<T*>(behavior.get())) return typed;
    }
    return nullptr;
  }

  /// Starts an auxiliary context owned by this component (e.g. a pacemaker).
  /// It is stopped together with the component.
  ExecutionContext& spawn_companion(std::string name, std::function<void()> body);

  const std::shared_ptr<TraceSink>& trace() const { return trace_; }

 private:
  friend class System;

  ComponentHandle handle_;
  std::string source_;
  Params params_;
  std::shared_ptr<TraceSink> trace_;
  Ports ports_;
  std::map<std::string, BehaviorPtr, std::less<>> passives_;
  std::mutex companions_mutex_;
  std::vector<std::unique_ptr<ExecutionContext>> companions_;
};

/// Owns the trace sink, the registered connectors, and every component with
/// its execution context.
class System {
 public:
  using Clock = std::chrono::steady_clock;
  static constexpr std::chrono::milliseconds kDefaultGrace{2000};

  System();
  ~System();

  System(const System&) = delete;
  System& operator=(const System&) = delete;

  const std::shared_ptr<TraceSink>& trace_sink() const { return trace_; }

  /// Options for building a connector whose events go to this system's trace.
  ConnectorOptions connector_options(std::size_t capacity = kDefaultQueueCapacity,
                                     std::string message_type = {}) const;

  ConnectorId add_connector(std::shared_ptr<ConnectorBase> connector);
  bool has_connector(ConnectorId id) const;
  ConnectorBase& connector(ConnectorId id) const;

  /// Endpoints created on `connector` by spawn_component so far.
  std::vector<EndpointId> endpoints_of(ConnectorId connector) const;

  /// Creates a component (and, unless passive, its own context) with the
  /// given endpoint bindings. The component does not execute until start_all.
  ComponentHandle spawn_component(ComponentDescriptor descriptor, const std::vector<EndpointBinding>& wiring,
                                  BehaviorPtr behavior);

  void start_all(std::span<const ComponentHandle> handles);
  /// Starts every component that is still in status created.
  void start_all();

  ContextStatus status(const ComponentHandle& handle) const;
  bool finished(const ComponentHandle& handle) const;
  bool wait_finished(std::span<const ComponentHandle> handles, Clock::time_point deadline) const;

  /// Emits a forced_stop event for every started component whose loop has
  /// not returned yet.
  void mark_unfinished_forced();

  /// Stops everything and returns the final trace. Idempotent.
  const SystemTrace& shutdown(std::chrono::milliseconds grace = kDefaultGrace);
  bool is_shut_down() const { return shut_down_; }

  void emit(TraceEvent event) { trace_->emit(std::move(event)); }

  std::vector<ComponentHandle> handles() const;
  std::optional<ComponentHandle> find(std::string_view name) const;

  /// Behavior object of a component. Safe to inspect after shutdown, or
  /// from the component's own context.
  Behavior& behavior(const ComponentHandle& handle) const;
  template <typename B>
  B& behavior_as(const ComponentHandle& handle) const {
    auto* typed = dynamic_cast<B*>(&behavior(handle));
    if (typed == nullptr) throw PortError("component '" + handle.name + "' has another behavior type");
    return *typed;
  }

  /// Contexts dedicated to components (companions excluded).
  std::size_t component_context_count() const;
  std::size_t companion_context_count() const;
  std::size_t conduit_count() const;
  std::size_t component_count() const;

  /// Error message of a component whose run ended with an exception.
  std::optional<std::string> fault(const ComponentHandle& handle) const;

  /// Drops every component and connector; only valid before start.
  void discard();

 private:
  struct Record;

  Record& record(ComponentId id) const;
  void launch(const std::shared_ptr<Record>& rec, const std::shared_ptr<std::latch>& launched);

  std::shared_ptr<TraceSink> trace_;
  mutable std::mutex mutex_;
  std::map<ComponentId, std::shared_ptr<Record>> components_;
  std::vector<ComponentId> order_;
  std::map<ConnectorId, std::shared_ptr<ConnectorBase>> connectors_;
  std::map<ConnectorId, std::vector<EndpointId>> connector_endpoints_;
  bool started_ = false;
  bool shut_down_ = false;
  SystemTrace final_trace_;
};

}  // namespace comet
