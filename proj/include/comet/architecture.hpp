#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "comet/connectors.hpp"
#include "comet/runtime.hpp"
#include "comet/trace.hpp"

namespace comet {

// ---------------------------------------------------------------------------
// Declarative description

struct BindingSpec {
  std::string port;
  std::string connector;
  End end = End::sender;
  std::size_t line = 0;

  friend bool operator==(const BindingSpec& a, const BindingSpec& b) {
    return a.port == b.port && a.connector == b.connector && a.end == b.end;
  }
};

struct ComponentSpec {
  std::string name;
  RoleStereotype role = RoleStereotype::control;
  ConcurrencyType concurrency = ConcurrencyType::demand_driven;
  std::optional<std::string> host;
  std::vector<BindingSpec> bindings;
  Params params;
  std::size_t line = 0;

  bool passive() const { return concurrency == ConcurrencyType::passive; }
  std::string param(std::string_view key, std::string_view fallback = {}) const;

  friend bool operator==(const ComponentSpec& a, const ComponentSpec& b) {
    return a.name == b.name && a.role == b.role && a.concurrency == b.concurrency && a.host == b.host &&
           a.bindings == b.bindings && a.params == b.params;
  }
};

struct ConnectorSpec {
  std::string name;
  ConnectorKind kind = ConnectorKind::message_buffer;
  std::optional<std::size_t> capacity;
  std::string message_type;
  std::size_t line = 0;

  friend bool operator==(const ConnectorSpec& a, const ConnectorSpec& b) {
    return a.name == b.name && a.kind == b.kind && a.capacity == b.capacity && a.message_type == b.message_type;
  }
};

struct ArchitectureSpec {
  std::vector<ComponentSpec> components;
  std::vector<ConnectorSpec> connectors;

  const ComponentSpec* find_component(std::string_view name) const;
  const ConnectorSpec* find_connector(std::string_view name) const;

  /// Bindings of every component on `connector`, paired with the component name.
  std::vector<std::pair<std::string, BindingSpec>> bindings_on(std::string_view connector) const;

  friend bool operator==(const ArchitectureSpec&, const ArchitectureSpec&) = default;
};

/// Parses the architecture description text. See docs/architecture-grammar.md.
ArchitectureSpec parse_spec(std::string_view text);
ArchitectureSpec load_spec(const std::string& path);
std::string print_spec(const ArchitectureSpec& spec);

// ---------------------------------------------------------------------------
// Validation

enum class Severity { error, warning };
std::string_view to_string(Severity severity);

struct Finding {
  Severity severity = Severity::error;
  std::string element;
  std::string message;
  std::size_t line = 0;

  std::string str() const;
};

/// Capacities above this are treated as "meant to be unbounded" and warned about.
inline constexpr std::size_t kLargeCapacity = 1'000'000;

std::vector<Finding> validate(const ArchitectureSpec& spec);
std::size_t error_count(const std::vector<Finding>& findings);

// ---------------------------------------------------------------------------
// Registries

/// Message type tag -> connector factory. The reply type only matters for the
/// reply and callback kinds.
class MessageTypes {
 public:
  using Factory = std::function<std::shared_ptr<ConnectorBase>(ConnectorKind, const ConnectorOptions&)>;

  /// Registers "text" (std::string) and "int".
  MessageTypes();

  template <typename Req, typename Rep = Req>
  void add(std::string tag) {
    factories_[std::move(tag)] = [](ConnectorKind kind, const ConnectorOptions& options) -> std::shared_ptr<ConnectorBase> {
      switch (kind) {
        case ConnectorKind::message_buffer:
          return std::make_shared<BufferConnector<Req>>(options);
        case ConnectorKind::message_queue:
          return std::make_shared<QueueConnector<Req>>(options);
        case ConnectorKind::buffer_and_reply:
          return std::make_shared<ReplyConnector<Req, Rep>>(options);
        case ConnectorKind::queue_and_callback:
          return std::make_shared<CallbackConnector<Req, Rep>>(options);
      }
      return nullptr;
    };
  }

  bool has(std::string_view tag) const { return factories_.count(std::string(tag)) != 0; }
  std::shared_ptr<ConnectorBase> make(const ConnectorSpec& spec, const ConnectorOptions& options) const;

 private:
  std::map<std::string, Factory> factories_;
};

/// Component name -> behavior factory. A component is looked up by its
/// `behavior` param when it has one, by its name otherwise.
class BehaviorRegistry {
 public:
  using Factory = std::function<BehaviorPtr(const ComponentSpec&)>;

  void add(std::string name, Factory factory) { factories_[std::move(name)] = std::move(factory); }
  bool covers(const ComponentSpec& spec) const;
  BehaviorPtr make(const ComponentSpec& spec) const;

  static std::string key_of(const ComponentSpec& spec);

 private:
  std::map<std::string, Factory> factories_;
};

// ---------------------------------------------------------------------------
// Traceability

enum class DesignKind { component, connector };

class TraceabilityMap {
 public:
  void add(const std::string& design, DesignKind kind, const std::string& object);
  void declare(const std::string& design, DesignKind kind);

  /// Runtime object ids ("component:3", "conduit:7", ...) realizing `design`.
  const std::set<std::string>& forward(std::string_view design) const;
  /// Design element owning `object`; throws UnknownObject.
  const std::string& backward(std::string_view object) const;
  bool knows(std::string_view object) const { return backward_.count(std::string(object)) != 0; }

  DesignKind kind_of(std::string_view design) const;
  std::vector<std::string> designs() const;
  std::size_t object_count() const { return backward_.size(); }

 private:
  std::map<std::string, std::set<std::string>, std::less<>> forward_;
  std::map<std::string, std::string, std::less<>> backward_;
  std::map<std::string, DesignKind, std::less<>> kinds_;
};

/// Splits the trace into one stream per design element (every element gets
/// an entry, possibly empty). Throws UnknownObject for an unmapped source.
std::map<std::string, std::vector<TraceEvent>> trace_to_design(const TraceabilityMap& map, const SystemTrace& trace);

// ---------------------------------------------------------------------------
// Instantiation

/// A system created from a spec, ready for start_all.
class Deployment {
 public:
  Deployment(std::unique_ptr<System> system, ArchitectureSpec spec);

  System& system() { return *system_; }
  const System& system() const { return *system_; }
  const ArchitectureSpec& spec() const { return spec_; }
  const TraceabilityMap& traceability() const { return map_; }

  const ComponentHandle& component(std::string_view name) const;
  ConnectorId connector(std::string_view name) const;
  ConnectorBase& connector_object(std::string_view name) const;
  std::vector<ComponentHandle> handles() const;

  void start() { system_->start_all(); }
  const SystemTrace& shutdown(std::chrono::milliseconds grace = System::kDefaultGrace) {
    return system_->shutdown(grace);
  }

 private:
  friend Deployment instantiate(const ArchitectureSpec&, const BehaviorRegistry&, const MessageTypes&);

  std::unique_ptr<System> system_;
  ArchitectureSpec spec_;
  TraceabilityMap map_;
  std::map<std::string, ComponentHandle, std::less<>> components_;
  std::map<std::string, ConnectorId, std::less<>> connectors_;
};

/// Creates all conduits, then the active components (controllers first),
/// then the passive ones. Nothing is started.
Deployment instantiate(const ArchitectureSpec& spec, const BehaviorRegistry& behaviors,
                       const MessageTypes& types = MessageTypes{});

/// Copies every component and connector without `param shared=true` n times,
/// suffixing names with `_1` .. `_n`. n == 1 returns the spec unchanged.
ArchitectureSpec replicate(const ArchitectureSpec& spec, std::size_t n);

/// Name of replica `index` (1-based) of a design element.
std::string replica_name(std::string_view base, std::size_t index, std::size_t n);

}  // namespace comet
