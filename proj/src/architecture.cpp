#include "comet/architecture.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace comet {

// ---------------------------------------------------------------------------
// Spec helpers

std::string ComponentSpec::param(std::string_view key, std::string_view fallback) const {
  auto it = params.find(key);
  return it == params.end() ? std::string(fallback) : it->second;
}

const ComponentSpec* ArchitectureSpec::find_component(std::string_view name) const {
  auto it = std::find_if(components.begin(), components.end(), [&](const auto& c) { return c.name == name; });
  return it == components.end() ? nullptr : &*it;
}

const ConnectorSpec* ArchitectureSpec::find_connector(std::string_view name) const {
  auto it = std::find_if(connectors.begin(), connectors.end(), [&](const auto& c) { return c.name == name; });
  return it == connectors.end() ? nullptr : &*it;
}

std::vector<std::pair<std::string, BindingSpec>> ArchitectureSpec::bindings_on(std::string_view connector) const {
  std::vector<std::pair<std::string, BindingSpec>> out;
  for (const auto& c : components) {
    for (const auto& b : c.bindings) {
      if (b.connector == connector) out.emplace_back(c.name, b);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Parser

namespace {

struct Token {
  std::string_view text;
  std::size_t column;
};

std::vector<Token> tokenize(std::string_view line) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < line.size()) {
    char ch = line[i];
    if (ch == '#') break;
    if (ch == ' ' || ch == '\t' || ch == '\r') {
      ++i;
      continue;
    }
    if (ch == '{' || ch == '}') {
      out.push_back({line.substr(i, 1), i + 1});
      ++i;
      continue;
    }
    std::size_t begin = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r' && line[i] != '#' &&
           line[i] != '{' && line[i] != '}') {
      ++i;
    }
    out.push_back({line.substr(begin, i - begin), begin + 1});
  }
  return out;
}

bool is_identifier(std::string_view text) {
  if (text.empty()) return false;
  return std::all_of(text.begin(), text.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '-' ||
           c == '.';
  });
}

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  ArchitectureSpec run() {
    while (next_line()) {
      if (tokens_.empty()) continue;
      if (block_ == Block::none) {
        open_block();
      } else if (tokens_[0].text == "}") {
        expect_count(1);
        close_block();
      } else if (block_ == Block::connector) {
        connector_statement();
      } else {
        component_statement();
      }
    }
    if (block_ != Block::none) {
      throw SyntaxError("unterminated block '" + block_name_ + "' (missing '}')", line_no_ + 1, 1);
    }
    resolve_references();
    return std::move(spec_);
  }

 private:
  enum class Block { none, connector, component };

  bool next_line() {
    if (rest_.data() == nullptr) rest_ = text_;
    if (done_) return false;
    ++line_no_;
    auto nl = rest_.find('\n');
    auto line = rest_.substr(0, nl);
    if (nl == std::string_view::npos) {
      done_ = true;
    } else {
      rest_ = rest_.substr(nl + 1);
    }
    tokens_ = tokenize(line);
    return true;
  }

  [[noreturn]] void fail(const std::string& message, const Token& at) const {
    throw SyntaxError(message, line_no_, at.column);
  }

  void expect_count(std::size_t n) const {
    if (tokens_.size() > n) fail("unexpected '" + std::string(tokens_[n].text) + "'", tokens_[n]);
    if (tokens_.size() < n) {
      const auto& last = tokens_.back();
      throw SyntaxError("statement '" + std::string(tokens_[0].text) + "' is incomplete", line_no_,
                        last.column + last.text.size());
    }
  }

  std::string identifier(std::size_t index, std::string_view what) const {
    const auto& tok = tokens_[index];
    if (!is_identifier(tok.text)) fail("expected " + std::string(what) + ", found '" + std::string(tok.text) + "'", tok);
    return std::string(tok.text);
  }

  void claim_name(const std::string& name, const Token& at) {
    if (!names_.insert(name).second) throw DuplicateName("duplicate name '" + name + "'", line_no_, at.column);
  }

  void open_block() {
    const auto& head = tokens_[0];
    if (head.text != "connector" && head.text != "component") {
      fail("expected 'connector' or 'component', found '" + std::string(head.text) + "'", head);
    }
    expect_count(3);
    auto name = identifier(1, "a name");
    if (tokens_[2].text != "{") fail("expected '{' after the name", tokens_[2]);
    claim_name(name, tokens_[1]);
    block_name_ = name;
    block_line_ = line_no_;
    seen_.clear();
    if (head.text == "connector") {
      block_ = Block::connector;
      spec_.connectors.push_back(ConnectorSpec{name, ConnectorKind::message_buffer, std::nullopt, "text", line_no_});
    } else {
      block_ = Block::component;
      spec_.components.push_back(ComponentSpec{});
      spec_.components.back().name = name;
      spec_.components.back().line = line_no_;
    }
  }

  void close_block() {
    auto require = [&](std::string_view key) {
      if (!seen_.count(std::string(key))) {
        throw SyntaxError("block '" + block_name_ + "' lacks '" + std::string(key) + "'", block_line_, 1);
      }
    };
    if (block_ == Block::connector) {
      require("kind");
    } else {
      require("role");
      require("concurrency");
    }
    block_ = Block::none;
  }

  void once(const Token& key) {
    if (!seen_.insert(std::string(key.text)).second) fail("'" + std::string(key.text) + "' given twice", key);
  }

  void connector_statement() {
    auto& conn = spec_.connectors.back();
    const auto& key = tokens_[0];
    if (key.text == "kind") {
      expect_count(2);
      once(key);
      auto kind = parse_connector_kind(tokens_[1].text);
      if (!kind) fail("unknown connector kind '" + std::string(tokens_[1].text) + "'", tokens_[1]);
      conn.kind = *kind;
    } else if (key.text == "capacity") {
      expect_count(2);
      once(key);
      const auto& tok = tokens_[1];
      std::size_t value = 0;
      auto [ptr, ec] = std::from_chars(tok.text.data(), tok.text.data() + tok.text.size(), value);
      if (ec != std::errc{} || ptr != tok.text.data() + tok.text.size()) {
        fail("capacity must be a non-negative integer, found '" + std::string(tok.text) + "'", tok);
      }
      conn.capacity = value;
    } else if (key.text == "message") {
      expect_count(2);
      once(key);
      conn.message_type = identifier(1, "a message type");
    } else {
      fail("unknown connector statement '" + std::string(key.text) + "'", key);
    }
  }

  void component_statement() {
    auto& comp = spec_.components.back();
    const auto& key = tokens_[0];
    if (key.text == "role") {
      expect_count(2);
      once(key);
      auto role = parse_role(tokens_[1].text);
      if (!role) fail("unknown role '" + std::string(tokens_[1].text) + "'", tokens_[1]);
      comp.role = *role;
    } else if (key.text == "concurrency") {
      expect_count(2);
      once(key);
      auto type = parse_concurrency(tokens_[1].text);
      if (!type) fail("unknown concurrency type '" + std::string(tokens_[1].text) + "'", tokens_[1]);
      comp.concurrency = *type;
    } else if (key.text == "host") {
      expect_count(2);
      once(key);
      comp.host = identifier(1, "a component name");
      host_refs_.push_back({comp.name, *comp.host, line_no_, tokens_[1].column});
    } else if (key.text == "bind") {
      expect_count(6);
      auto port = identifier(1, "a port name");
      if (tokens_[2].text != "->") fail("expected '->'", tokens_[2]);
      auto connector = identifier(3, "a connector name");
      if (tokens_[4].text != "as") fail("expected 'as'", tokens_[4]);
      End end;
      if (tokens_[5].text == "sender") {
        end = End::sender;
      } else if (tokens_[5].text == "receiver") {
        end = End::receiver;
      } else {
        fail("expected 'sender' or 'receiver', found '" + std::string(tokens_[5].text) + "'", tokens_[5]);
      }
      comp.bindings.push_back({port, connector, end, line_no_});
      bind_refs_.push_back({comp.name, connector, line_no_, tokens_[3].column});
    } else if (key.text == "param") {
      expect_count(2);
      const auto& tok = tokens_[1];
      auto eq = tok.text.find('=');
      if (eq == std::string_view::npos || eq == 0) fail("expected 'param key=value'", tok);
      std::string k(tok.text.substr(0, eq));
      if (!comp.params.emplace(k, std::string(tok.text.substr(eq + 1))).second) {
        fail("param '" + k + "' given twice", tok);
      }
    } else {
      fail("unknown component statement '" + std::string(key.text) + "'", key);
    }
  }

  void resolve_references() {
    for (const auto& ref : bind_refs_) {
      if (!spec_.find_connector(ref.target)) {
        throw DanglingReference("component '" + ref.owner + "' binds to undeclared connector '" + ref.target + "'",
                                ref.line, ref.column);
      }
    }
    for (const auto& ref : host_refs_) {
      if (!spec_.find_component(ref.target)) {
        throw DanglingReference("component '" + ref.owner + "' names undeclared host '" + ref.target + "'", ref.line,
                                ref.column);
      }
    }
  }

  struct Reference {
    std::string owner;
    std::string target;
    std::size_t line;
    std::size_t column;
  };

  std::string_view text_;
  std::string_view rest_;
  bool done_ = false;
  std::size_t line_no_ = 0;
  std::vector<Token> tokens_;
  Block block_ = Block::none;
  std::string block_name_;
  std::size_t block_line_ = 0;
  std::set<std::string> seen_;
  std::set<std::string> names_;
  std::vector<Reference> bind_refs_;
  std::vector<Reference> host_refs_;
  ArchitectureSpec spec_;
};

}  // namespace

ArchitectureSpec parse_spec(std::string_view text) { return Parser(text).run(); }

ArchitectureSpec load_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open architecture file '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_spec(buffer.str());
}

std::string print_spec(const ArchitectureSpec& spec) {
  std::ostringstream out;
  bool first = true;
  auto separate = [&] {
    if (!first) out << '\n';
    first = false;
  };
  for (const auto& c : spec.connectors) {
    separate();
    out << "connector " << c.name << " {\n";
    out << "  kind " << to_string(c.kind) << '\n';
    if (c.capacity) out << "  capacity " << *c.capacity << '\n';
    out << "  message " << c.message_type << '\n';
    out << "}\n";
  }
  for (const auto& c : spec.components) {
    separate();
    out << "component " << c.name << " {\n";
    out << "  role " << to_string(c.role) << '\n';
    out << "  concurrency " << to_string(c.concurrency) << '\n';
    if (c.host) out << "  host " << *c.host << '\n';
    for (const auto& b : c.bindings) {
      out << "  bind " << b.port << " -> " << b.connector << " as " << to_string(b.end) << '\n';
    }
    for (const auto& [k, v] : c.params) out << "  param " << k << '=' << v << '\n';
    out << "}\n";
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Validation

std::string_view to_string(Severity severity) { return severity == Severity::error ? "error" : "warning"; }

std::string Finding::str() const {
  std::string out(to_string(severity));
  if (line) out += " (line " + std::to_string(line) + ")";
  out += ": " + element + ": " + message;
  return out;
}

std::vector<Finding> validate(const ArchitectureSpec& spec) {
  std::vector<Finding> findings;
  auto error = [&](const std::string& element, std::size_t line, std::string message) {
    findings.push_back({Severity::error, element, std::move(message), line});
  };

  std::set<std::string> names;
  for (const auto& c : spec.connectors) {
    if (!names.insert(c.name).second) error(c.name, c.line, "duplicate name");
  }
  for (const auto& c : spec.components) {
    if (!names.insert(c.name).second) error(c.name, c.line, "duplicate name");
  }

  for (const auto& conn : spec.connectors) {
    std::size_t senders = 0;
    std::size_t receivers = 0;
    for (const auto& [owner, b] : spec.bindings_on(conn.name)) (b.end == End::sender ? senders : receivers)++;
    auto kind = std::string(to_string(conn.kind));
    if (senders == 0) error(conn.name, conn.line, "connector has no sender");
    if (receivers == 0) error(conn.name, conn.line, "connector has no receiver");
    if (single_ended(conn.kind)) {
      if (senders > 1) error(conn.name, conn.line, kind + " permits exactly one sender");
      if (receivers > 1) error(conn.name, conn.line, kind + " permits exactly one receiver");
    }
    if (conn.capacity) {
      if (!is_queue_based(conn.kind)) {
        error(conn.name, conn.line, "capacity is only allowed on queue-based connectors");
      } else if (*conn.capacity < 1) {
        error(conn.name, conn.line, "capacity must be at least 1");
      } else if (*conn.capacity > kLargeCapacity) {
        findings.push_back({Severity::warning, conn.name,
                            "capacity " + std::to_string(*conn.capacity) + " is effectively unbounded", conn.line});
      }
    }
  }

  for (const auto& comp : spec.components) {
    if (comp.passive()) {
      if (!comp.host) {
        error(comp.name, comp.line, "passive component needs a host");
      } else if (const auto* host = spec.find_component(*comp.host); host == nullptr) {
        error(comp.name, comp.line, "host '" + *comp.host + "' is not declared");
      } else if (host->passive()) {
        error(comp.name, comp.line, "host '" + *comp.host + "' is itself passive");
      }
      if (!comp.bindings.empty()) error(comp.name, comp.line, "passive component cannot bind to connectors");
    } else if (comp.host) {
      error(comp.name, comp.line, "only passive components have a host");
    }
    if (comp.concurrency == ConcurrencyType::periodic) {
      auto period = comp.param("period_ms");
      long value = 0;
      auto [ptr, ec] = std::from_chars(period.data(), period.data() + period.size(), value);
      if (period.empty() || ec != std::errc{} || ptr != period.data() + period.size() || value <= 0) {
        error(comp.name, comp.line, "periodic component needs 'param period_ms=<positive integer>'");
      }
    }
    std::set<std::string> ports;
    for (const auto& b : comp.bindings) {
      if (!ports.insert(b.port).second) error(comp.name, b.line, "port '" + b.port + "' bound twice");
      if (!spec.find_connector(b.connector)) error(comp.name, b.line, "undeclared connector '" + b.connector + "'");
    }
  }
  return findings;
}

std::size_t error_count(const std::vector<Finding>& findings) {
  return static_cast<std::size_t>(
      std::count_if(findings.begin(), findings.end(), [](const Finding& f) { return f.severity == Severity::error; }));
}

// ---------------------------------------------------------------------------
// Registries

MessageTypes::MessageTypes() {
  add<std::string>("text");
  add<int>("int");
}

std::shared_ptr<ConnectorBase> MessageTypes::make(const ConnectorSpec& spec, const ConnectorOptions& options) const {
  auto it = factories_.find(spec.message_type);
  if (it == factories_.end()) {
    throw Error("connector '" + spec.name + "': unknown message type '" + spec.message_type + "'");
  }
  return it->second(spec.kind, options);
}

std::string BehaviorRegistry::key_of(const ComponentSpec& spec) { return spec.param("behavior", spec.name); }

bool BehaviorRegistry::covers(const ComponentSpec& spec) const { return factories_.count(key_of(spec)) != 0; }

BehaviorPtr BehaviorRegistry::make(const ComponentSpec& spec) const {
  auto it = factories_.find(key_of(spec));
  if (it == factories_.end()) throw MissingBehavior("no behavior registered for component '" + spec.name + "'");
  auto behavior = it->second(spec);
  if (!behavior) throw MissingBehavior("behavior factory for '" + spec.name + "' returned nothing");
  return behavior;
}

// ---------------------------------------------------------------------------
// Traceability

void TraceabilityMap::declare(const std::string& design, DesignKind kind) {
  forward_[design];
  kinds_[design] = kind;
}

void TraceabilityMap::add(const std::string& design, DesignKind kind, const std::string& object) {
  auto [it, inserted] = backward_.emplace(object, design);
  if (!inserted && it->second != design) {
    throw std::logic_error(object + " already belongs to '" + it->second + "'");
  }
  declare(design, kind);
  forward_[design].insert(object);
}

const std::set<std::string>& TraceabilityMap::forward(std::string_view design) const {
  auto it = forward_.find(design);
  if (it == forward_.end()) throw UnknownObject("no design element '" + std::string(design) + "'");
  return it->second;
}

const std::string& TraceabilityMap::backward(std::string_view object) const {
  auto it = backward_.find(object);
  if (it == backward_.end()) throw UnknownObject("object '" + std::string(object) + "' is not part of the design");
  return it->second;
}

DesignKind TraceabilityMap::kind_of(std::string_view design) const {
  auto it = kinds_.find(design);
  if (it == kinds_.end()) throw UnknownObject("no design element '" + std::string(design) + "'");
  return it->second;
}

std::vector<std::string> TraceabilityMap::designs() const {
  std::vector<std::string> out;
  for (const auto& [name, objects] : forward_) out.push_back(name);
  return out;
}

std::map<std::string, std::vector<TraceEvent>> trace_to_design(const TraceabilityMap& map, const SystemTrace& trace) {
  std::map<std::string, std::vector<TraceEvent>> streams;
  for (const auto& name : map.designs()) streams[name];
  for (const auto& event : trace.events()) streams[map.backward(event.source)].push_back(event);
  return streams;
}

// ---------------------------------------------------------------------------
// Instantiation

Deployment::Deployment(std::unique_ptr<System> system, ArchitectureSpec spec)
    : system_(std::move(system)), spec_(std::move(spec)) {}

const ComponentHandle& Deployment::component(std::string_view name) const {
  auto it = components_.find(name);
  if (it == components_.end()) throw UnknownObject("no component '" + std::string(name) + "'");
  return it->second;
}

ConnectorId Deployment::connector(std::string_view name) const {
  auto it = connectors_.find(name);
  if (it == connectors_.end()) throw UnknownObject("no connector '" + std::string(name) + "'");
  return it->second;
}

ConnectorBase& Deployment::connector_object(std::string_view name) const {
  return system_->connector(connector(name));
}

std::vector<ComponentHandle> Deployment::handles() const {
  std::vector<ComponentHandle> out;
  for (const auto& c : spec_.components) out.push_back(component(c.name));
  return out;
}

namespace {

int creation_rank(const ComponentSpec& c) {
  if (c.passive()) return 2;
  if (c.role == RoleStereotype::control || c.role == RoleStereotype::coordinator) return 0;
  return 1;
}

}  // namespace

Deployment instantiate(const ArchitectureSpec& spec, const BehaviorRegistry& behaviors, const MessageTypes& types) {
  auto findings = validate(spec);
  if (error_count(findings) > 0) {
    for (const auto& f : findings) {
      if (f.severity == Severity::error) throw Error("invalid architecture: " + f.str());
    }
  }
  for (const auto& c : spec.components) {
    if (!behaviors.covers(c)) throw MissingBehavior("no behavior registered for component '" + c.name + "'");
  }
  for (const auto& c : spec.connectors) {
    if (!types.has(c.message_type)) {
      throw Error("connector '" + c.name + "': unknown message type '" + c.message_type + "'");
    }
  }

  Deployment deployment(std::make_unique<System>(), spec);
  auto& system = *deployment.system_;
  auto& map = deployment.map_;

  try {
    for (const auto& c : spec.connectors) {
      auto options = system.connector_options(c.capacity.value_or(kDefaultQueueCapacity), c.message_type);
      auto id = system.add_connector(types.make(c, options));
      deployment.connectors_.emplace(c.name, id);
      map.add(c.name, DesignKind::connector, id.str());
      for (auto conduit : system.connector(id).conduit_ids()) map.add(c.name, DesignKind::connector, conduit.str());
    }

    std::vector<const ComponentSpec*> order;
    for (const auto& c : spec.components) order.push_back(&c);
    std::stable_sort(order.begin(), order.end(),
                     [](const auto* a, const auto* b) { return creation_rank(*a) < creation_rank(*b); });

    for (const auto* c : order) {
      ComponentDescriptor descriptor{c->name, c->role, c->concurrency, std::nullopt, c->params};
      if (c->host) descriptor.host = deployment.components_.at(*c->host).component_id;
      std::vector<EndpointBinding> wiring;
      for (const auto& b : c->bindings) wiring.push_back({b.port, deployment.connectors_.at(b.connector), b.end});
      auto handle = system.spawn_component(descriptor, wiring, behaviors.make(*c));
      deployment.components_.emplace(c->name, handle);
      map.add(c->name, DesignKind::component, handle.component_id.str());
      if (!handle.passive()) map.add(c->name, DesignKind::component, handle.context_id.str());
    }

    // Endpoints belong to the connector they were cut from.
    for (const auto& c : spec.connectors) {
      for (auto endpoint : system.endpoints_of(deployment.connectors_.at(c.name))) {
        map.add(c.name, DesignKind::connector, endpoint.str());
      }
    }
  } catch (...) {
    system.discard();
    throw;
  }
  return deployment;
}

std::string replica_name(std::string_view base, std::size_t index, std::size_t n) {
  if (n == 1) return std::string(base);
  return std::string(base) + "_" + std::to_string(index);
}

ArchitectureSpec replicate(const ArchitectureSpec& spec, std::size_t n) {
  if (n == 0) throw std::invalid_argument("replica count must be at least 1");
  if (n == 1) return spec;

  auto is_shared = [](const ComponentSpec& c) { return c.param("shared") == "true"; };
  std::set<std::string> shared_connectors;
  std::set<std::string> shared_components;
  for (const auto& c : spec.components) {
    if (!is_shared(c)) continue;
    shared_components.insert(c.name);
    for (const auto& b : c.bindings) shared_connectors.insert(b.connector);
  }

  ArchitectureSpec out;
  for (const auto& conn : spec.connectors) {
    if (shared_connectors.count(conn.name)) {
      out.connectors.push_back(conn);
      continue;
    }
    for (std::size_t i = 1; i <= n; ++i) {
      auto copy = conn;
      copy.name = replica_name(conn.name, i, n);
      out.connectors.push_back(std::move(copy));
    }
  }
  for (const auto& comp : spec.components) {
    if (shared_components.count(comp.name)) {
      out.components.push_back(comp);
      continue;
    }
    for (std::size_t i = 1; i <= n; ++i) {
      auto copy = comp;
      copy.name = replica_name(comp.name, i, n);
      copy.params.emplace("behavior", comp.name);
      copy.params["replica"] = std::to_string(i);
      if (copy.host && !shared_components.count(*copy.host)) copy.host = replica_name(*copy.host, i, n);
      for (auto& b : copy.bindings) {
        if (!shared_connectors.count(b.connector)) b.connector = replica_name(b.connector, i, n);
      }
      out.components.push_back(std::move(copy));
    }
  }
  return out;
}

}  // namespace comet
