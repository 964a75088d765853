#include "comet/runtime.hpp"

#include <array>
#include <atomic>

namespace comet {

namespace {

constexpr std::array<std::pair<RoleStereotype, std::string_view>, 5> kRoles{{
    {RoleStereotype::io, "io"},
    {RoleStereotype::control, "control"},
    {RoleStereotype::algorithm, "algorithm"},
    {RoleStereotype::entity, "entity"},
    {RoleStereotype::coordinator, "coordinator"},
}};

constexpr std::array<std::pair<ConcurrencyType, std::string_view>, 4> kConcurrency{{
    {ConcurrencyType::event_driven, "event_driven"},
    {ConcurrencyType::demand_driven, "demand_driven"},
    {ConcurrencyType::periodic, "periodic"},
    {ConcurrencyType::passive, "passive"},
}};

template <typename E, std::size_t N>
std::string_view name_of(const std::array<std::pair<E, std::string_view>, N>& table, E value) {
  for (const auto& [v, name] : table) {
    if (v == value) return name;
  }
  return "unknown";
}

template <typename E, std::size_t N>
std::optional<E> value_of(const std::array<std::pair<E, std::string_view>, N>& table, std::string_view text) {
  for (const auto& [v, name] : table) {
    if (name == text) return v;
  }
  return std::nullopt;
}

void emit_quietly(TraceSink& sink, const std::string& source, EventKind kind, std::string digest = {}) {
  try {
    sink.emit(source, kind, std::move(digest));
  } catch (const SinkClosed&) {
  }
}

}  // namespace

std::string_view to_string(RoleStereotype role) { return name_of(kRoles, role); }
std::string_view to_string(ConcurrencyType concurrency) { return name_of(kConcurrency, concurrency); }
std::optional<RoleStereotype> parse_role(std::string_view text) { return value_of(kRoles, text); }
std::optional<ConcurrencyType> parse_concurrency(std::string_view text) {
  return value_of(kConcurrency, text);
}

// Ports

void Ports::add(std::string port, std::unique_ptr<EndpointBase> endpoint) {
  if (slots_.contains(port)) throw PortError("port '" + port + "' bound twice");
  slots_.emplace(std::move(port), std::move(endpoint));
}

bool Ports::has(std::string_view port) const {
  auto it = slots_.find(port);
  return it != slots_.end() && it->second != nullptr;
}

std::vector<std::string> Ports::names() const {
  std::vector<std::string> out;
  for (const auto& [name, slot] : slots_) out.push_back(name);
  return out;
}

// ComponentContext

ComponentContext::ComponentContext(ComponentHandle handle, Params params, std::shared_ptr<TraceSink> trace)
    : handle_(std::move(handle)),
      source_(handle_.component_id.str()),
      params_(std::move(params)),
      trace_(std::move(trace)) {}

std::string ComponentContext::param(std::string_view key, std::string_view fallback) const {
  auto it = params_.find(key);
  return it == params_.end() ? std::string(fallback) : it->second;
}

void ComponentContext::emit(EventKind kind, std::string digest) const {
  trace_->emit(source_, kind, std::move(digest));
}

void ComponentContext::state_change(std::string_view from, std::string_view to) const {
  emit(EventKind::state_change, std::string(from) + "->" + std::string(to));
}

ExecutionContext& ComponentContext::spawn_companion(std::string name, std::function<void()> body) {
  auto context = std::make_unique<ExecutionContext>(handle_.name + "/" + name);
  auto& ref = *context;
  {
    std::lock_guard lock(companions_mutex_);
    companions_.push_back(std::move(context));
  }
  ref.start(std::move(body));
  return ref;
}

// System

struct System::Record {
  ComponentHandle handle;
  BehaviorPtr behavior;
  std::unique_ptr<ExecutionContext> context;  // null for passive components
  const ExecutionContext* host_context = nullptr;
  std::shared_ptr<ComponentContext> self;
  std::vector<ComponentId> passives;
  bool passive_started = false;
  mutable std::mutex fault_mutex;
  std::optional<std::string> fault;
};

System::System() : trace_(std::make_shared<TraceSink>()) {}

System::~System() {
  if (started_ && !shut_down_) shutdown();
}

ConnectorOptions System::connector_options(std::size_t capacity, std::string message_type) const {
  return ConnectorOptions{trace_, capacity, std::move(message_type)};
}

ConnectorId System::add_connector(std::shared_ptr<ConnectorBase> connector) {
  std::lock_guard lock(mutex_);
  auto id = connector->id();
  connectors_.emplace(id, std::move(connector));
  connector_endpoints_[id];
  return id;
}

bool System::has_connector(ConnectorId id) const {
  std::lock_guard lock(mutex_);
  return connectors_.contains(id);
}

ConnectorBase& System::connector(ConnectorId id) const {
  std::lock_guard lock(mutex_);
  auto it = connectors_.find(id);
  if (it == connectors_.end()) throw UnknownConduit("unknown connector " + id.str());
  return *it->second;
}

std::vector<EndpointId> System::endpoints_of(ConnectorId connector) const {
  std::lock_guard lock(mutex_);
  auto it = connector_endpoints_.find(connector);
  if (it == connector_endpoints_.end()) throw UnknownConduit("unknown connector " + connector.str());
  return it->second;
}

System::Record& System::record(ComponentId id) const {
  std::lock_guard lock(mutex_);
  auto it = components_.find(id);
  if (it == components_.end()) throw UnknownObject("unknown component " + id.str());
  return *it->second;
}

ComponentHandle System::spawn_component(ComponentDescriptor descriptor, const std::vector<EndpointBinding>& wiring,
                                        BehaviorPtr behavior) {
  if (!behavior) throw MissingBehavior("component '" + descriptor.name + "' has no behavior");
  std::lock_guard lock(mutex_);
  if (shut_down_) throw AlreadyStarted("system already shut down");

  for (const auto& binding : wiring) {
    if (!connectors_.contains(binding.connector)) {
      throw UnknownConduit("component '" + descriptor.name + "' port '" + binding.port +
                           "' references unknown connector " + binding.connector.str());
    }
  }

  auto rec = std::make_shared<Record>();
  rec->handle.component_id = ComponentId::next();
  rec->handle.role = descriptor.role;
  rec->handle.concurrency = descriptor.concurrency;
  rec->handle.name = descriptor.name;

  std::shared_ptr<Record> host;
  if (descriptor.concurrency == ConcurrencyType::passive) {
    if (!descriptor.host) {
      throw HostRequired("passive component '" + descriptor.name + "' needs a host");
    }
    auto it = components_.find(*descriptor.host);
    if (it == components_.end() || it->second->handle.passive()) {
      throw HostRequired("passive component '" + descriptor.name + "' needs an active host");
    }
    host = it->second;
    if (host->context->status() != ContextStatus::created) {
      throw AlreadyStarted("host '" + host->handle.name + "' is already running");
    }
    if (!wiring.empty()) {
      throw PortError("passive component '" + descriptor.name + "' cannot own connector endpoints");
    }
    rec->handle.context_id = host->handle.context_id;
    rec->host_context = host->context.get();
  } else {
    rec->context = std::make_unique<ExecutionContext>(descriptor.name);
    rec->handle.context_id = rec->context->id();
  }

  rec->self = std::make_shared<ComponentContext>(rec->handle, std::move(descriptor.params), trace_);
  // Endpoints are created only after every check passed, so a failed spawn
  // leaves the connectors untouched.
  for (const auto& binding : wiring) {
    auto& connector = *connectors_.at(binding.connector);
    auto endpoint = connector.make_endpoint(binding.end);
    connector_endpoints_[binding.connector].push_back(endpoint->id());
    rec->self->ports_.add(binding.port, std::move(endpoint));
  }

  rec->behavior = std::move(behavior);
  rec->behavior->attached(rec->handle.context_id);

  if (host) {
    host->passives.push_back(rec->handle.component_id);
    host->self->passives_.emplace(rec->handle.name, rec->behavior);
  }

  components_.emplace(rec->handle.component_id, rec);
  order_.push_back(rec->handle.component_id);
  return rec->handle;
}

void System::launch(const std::shared_ptr<Record>& rec, const std::shared_ptr<std::latch>& launched) {
  rec->context->start([rec, launched] {
    auto& self = *rec->self;
    try {
      self.emit(EventKind::start, std::string(to_string(rec->handle.concurrency)));
    } catch (const SinkClosed&) {
    }
    launched->count_down();
    try {
      rec->behavior->run(self);
    } catch (const Stopped&) {
    } catch (const SinkClosed&) {
    } catch (const std::exception& e) {
      {
        std::lock_guard lock(rec->fault_mutex);
        rec->fault = e.what();
      }
      emit_quietly(*self.trace(), self.source(), EventKind::custom, std::string("fault: ") + e.what());
    }
    {
      std::lock_guard lock(self.companions_mutex_);
      for (auto& companion : self.companions_) companion->request_stop();
    }
    emit_quietly(*self.trace(), self.source(), EventKind::stop);
  });
}

void System::start_all(std::span<const ComponentHandle> handles) {
  std::vector<std::shared_ptr<Record>> active;
  {
    std::lock_guard lock(mutex_);
    if (shut_down_) throw AlreadyStarted("system already shut down");
    for (const auto& h : handles) {
      auto it = components_.find(h.component_id);
      if (it == components_.end()) throw UnknownObject("unknown component " + h.component_id.str());
      const auto& rec = it->second;
      bool fresh = rec->context ? rec->context->status() == ContextStatus::created : !rec->passive_started;
      if (!fresh) throw AlreadyStarted("component '" + rec->handle.name + "' already started");
    }
    for (const auto& h : handles) {
      const auto& rec = components_.at(h.component_id);
      if (rec->context) {
        active.push_back(rec);
      } else {
        rec->passive_started = true;
      }
    }
    started_ = started_ || !handles.empty();
  }
  auto launched = std::make_shared<std::latch>(static_cast<std::ptrdiff_t>(active.size()));
  for (const auto& rec : active) launch(rec, launched);
  launched->wait();
}

void System::start_all() {
  std::vector<ComponentHandle> fresh;
  {
    std::lock_guard lock(mutex_);
    for (auto id : order_) {
      const auto& rec = components_.at(id);
      bool created = rec->context ? rec->context->status() == ContextStatus::created : !rec->passive_started;
      if (created) fresh.push_back(rec->handle);
    }
  }
  start_all(fresh);
}

ContextStatus System::status(const ComponentHandle& handle) const {
  auto& rec = record(handle.component_id);
  return rec.context ? rec.context->status() : rec.host_context->status();
}

bool System::finished(const ComponentHandle& handle) const {
  auto& rec = record(handle.component_id);
  return rec.context ? rec.context->finished() : rec.host_context->finished();
}

bool System::wait_finished(std::span<const ComponentHandle> handles, Clock::time_point deadline) const {
  for (const auto& h : handles) {
    auto& rec = record(h.component_id);
    if (rec.context && !rec.context->wait_finished(deadline)) return false;
  }
  return true;
}

void System::mark_unfinished_forced() {
  std::vector<std::shared_ptr<Record>> records;
  {
    std::lock_guard lock(mutex_);
    for (auto id : order_) records.push_back(components_.at(id));
  }
  for (const auto& rec : records) {
    if (rec->context && rec->context->status() == ContextStatus::running && !rec->context->finished()) {
      emit_quietly(*trace_, rec->self->source(), EventKind::forced_stop, "timeout");
    }
  }
}

const SystemTrace& System::shutdown(std::chrono::milliseconds grace) {
  if (shut_down_) return final_trace_;
  std::vector<std::shared_ptr<Record>> records;
  {
    std::lock_guard lock(mutex_);
    for (auto id : order_) records.push_back(components_.at(id));
  }

  auto companions_of = [](Record& rec) {
    std::vector<ExecutionContext*> out;
    std::lock_guard lock(rec.self->companions_mutex_);
    for (auto& c : rec.self->companions_) out.push_back(c.get());
    return out;
  };

  std::vector<bool> never_started;
  for (const auto& rec : records) {
    never_started.push_back(rec->context && rec->context->status() == ContextStatus::created);
    if (rec->context) rec->context->request_stop();
    for (auto* companion : companions_of(*rec)) companion->request_stop();
  }

  const auto deadline = Clock::now() + grace;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto& rec = *records[i];
    if (!rec.context) continue;
    if (never_started[i]) {
      emit_quietly(*trace_, rec.self->source(), EventKind::stop, "never started");
    } else if (!rec.context->wait_finished(deadline)) {
      emit_quietly(*trace_, rec.self->source(), EventKind::forced_stop, "grace expired");
    }
    rec.context->retire();
    for (auto* companion : companions_of(rec)) {
      if (!companion->wait_finished(deadline)) {
        emit_quietly(*trace_, rec.self->source(), EventKind::forced_stop, "companion " + companion->name());
      }
      companion->retire();
    }
  }
  for (const auto& rec : records) {
    if (!rec->context) emit_quietly(*trace_, rec->self->source(), EventKind::stop, "passive");
  }

  trace_->close();
  final_trace_ = trace_->snapshot();
  shut_down_ = true;
  return final_trace_;
}

std::vector<ComponentHandle> System::handles() const {
  std::lock_guard lock(mutex_);
  std::vector<ComponentHandle> out;
  for (auto id : order_) out.push_back(components_.at(id)->handle);
  return out;
}

std::optional<ComponentHandle> System::find(std::string_view name) const {
  std::lock_guard lock(mutex_);
  for (auto id : order_) {
    const auto& rec = components_.at(id);
    if (rec->handle.name == name) return rec->handle;
  }
  return std::nullopt;
}

Behavior& System::behavior(const ComponentHandle& handle) const { return *record(handle.component_id).behavior; }

std::size_t System::component_context_count() const {
  std::lock_guard lock(mutex_);
  std::size_t n = 0;
  for (const auto& [id, rec] : components_) n += rec->context ? 1 : 0;
  return n;
}

std::size_t System::companion_context_count() const {
  std::lock_guard lock(mutex_);
  std::size_t n = 0;
  for (const auto& [id, rec] : components_) {
    std::lock_guard companions(rec->self->companions_mutex_);
    n += rec->self->companions_.size();
  }
  return n;
}

std::size_t System::conduit_count() const {
  std::lock_guard lock(mutex_);
  std::size_t n = 0;
  for (const auto& [id, connector] : connectors_) n += connector->conduit_ids().size();
  return n;
}

std::size_t System::component_count() const {
  std::lock_guard lock(mutex_);
  return components_.size();
}

std::optional<std::string> System::fault(const ComponentHandle& handle) const {
  auto& rec = record(handle.component_id);
  std::lock_guard lock(rec.fault_mutex);
  return rec.fault;
}

void System::discard() {
  std::lock_guard lock(mutex_);
  if (started_) throw AlreadyStarted("cannot discard a started system");
  components_.clear();
  order_.clear();
  connectors_.clear();
  connector_endpoints_.clear();
}

}  // namespace comet
