#include <doctest.h>

#include <random>

#include "comet/architecture.hpp"
#include "comet/components.hpp"
#include "support.hpp"

using namespace comet;
using namespace comet::test;
using namespace std::chrono_literals;

namespace {

const char* kProducerConsumer = R"(# smallest closed design
connector link {
  kind message_buffer
  message int
}

component producer {
  role io
  concurrency event_driven
  bind out -> link as sender
  param count=5
}

component consumer {
  role control
  concurrency demand_driven
  bind in -> link as receiver
}
)";

struct Produce : Behavior {
  void run(ComponentContext& self) override {
    auto out = self.ports().take<BufferSender<int>>("out");
    int n = std::stoi(self.param("count", "1"));
    for (int i = 0; i < n; ++i) out.send(int{i});
  }
};

BehaviorRegistry producer_consumer_registry(std::shared_ptr<std::vector<int>> seen) {
  BehaviorRegistry registry;
  registry.add("producer", [](const ComponentSpec&) { return std::make_shared<Produce>(); });
  registry.add("consumer", [seen](const ComponentSpec&) {
    return std::make_shared<DemandDrivenComponent<BufferReceiver<int>>>(
        "in", [seen](ComponentContext&, int x) { seen->push_back(x); });
  });
  return registry;
}

template <typename E>
std::size_t error_line(const std::string& text) {
  try {
    parse_spec(text);
  } catch (const E& e) {
    return e.line();
  }
  return 0;
}

}  // namespace

TEST_CASE("minimal document parses into two components and one connector") {
  auto spec = parse_spec(kProducerConsumer);
  REQUIRE(spec.components.size() == 2);
  REQUIRE(spec.connectors.size() == 1);
  CHECK(spec.connectors[0].kind == ConnectorKind::message_buffer);
  CHECK(spec.connectors[0].message_type == "int");
  CHECK_FALSE(spec.connectors[0].capacity.has_value());
  const auto* producer = spec.find_component("producer");
  REQUIRE(producer);
  CHECK(producer->role == RoleStereotype::io);
  CHECK(producer->concurrency == ConcurrencyType::event_driven);
  REQUIRE(producer->bindings.size() == 1);
  CHECK(producer->bindings[0] == BindingSpec{"out", "link", End::sender});
  CHECK(producer->bindings[0].line == 10);
  CHECK(producer->param("count") == "5");
  CHECK(validate(spec).empty());
}

TEST_CASE("printing and parsing again gives the same spec") {
  auto spec = parse_spec(kProducerConsumer);
  auto printed = print_spec(spec);
  CHECK(parse_spec(printed) == spec);
  CHECK(print_spec(parse_spec(printed)) == printed);
}

TEST_CASE("round trip holds for generated specs") {
  std::mt19937 rng(11);
  const ConnectorKind kinds[] = {ConnectorKind::message_buffer, ConnectorKind::message_queue,
                                 ConnectorKind::buffer_and_reply, ConnectorKind::queue_and_callback};
  for (int round = 0; round < 50; ++round) {
    ArchitectureSpec spec;
    int nconn = 1 + static_cast<int>(rng() % 4);
    for (int i = 0; i < nconn; ++i) {
      ConnectorSpec c{"c" + std::to_string(i), kinds[rng() % 4], std::nullopt, rng() % 2 ? "text" : "int", 0};
      if (is_queue_based(c.kind) && rng() % 2) c.capacity = 1 + rng() % 64;
      spec.connectors.push_back(c);
    }
    int ncomp = 1 + static_cast<int>(rng() % 5);
    for (int i = 0; i < ncomp; ++i) {
      ComponentSpec c;
      c.name = "k" + std::to_string(i);
      c.role = static_cast<RoleStereotype>(rng() % 5);
      c.concurrency = static_cast<ConcurrencyType>(rng() % 3);
      for (int b = 0; b < static_cast<int>(rng() % 3); ++b) {
        c.bindings.push_back({"p" + std::to_string(b), "c" + std::to_string(rng() % nconn),
                              rng() % 2 ? End::sender : End::receiver, 0});
      }
      if (rng() % 2) c.params["period_ms"] = std::to_string(1 + rng() % 100);
      spec.components.push_back(c);
    }
    if (rng() % 2) {
      ComponentSpec passive;
      passive.name = "entity";
      passive.role = RoleStereotype::entity;
      passive.concurrency = ConcurrencyType::passive;
      passive.host = "k0";
      spec.components.push_back(passive);
    }
    CHECK(parse_spec(print_spec(spec)) == spec);
  }
}

TEST_CASE("parse errors carry line and column") {
  SUBCASE("undeclared connector") {
    std::string text = "component a {\n  role io\n  concurrency event_driven\n  bind out -> q9 as sender\n}\n";
    try {
      parse_spec(text);
      FAIL("expected DanglingReference");
    } catch (const DanglingReference& e) {
      CHECK(e.line() == 4);
      CHECK(e.column() == 15);
      CHECK(std::string(e.what()).find("q9") != std::string::npos);
    }
  }
  SUBCASE("undeclared host") {
    CHECK(error_line<DanglingReference>("component t {\n role entity\n concurrency passive\n host atm\n}\n") == 4);
  }
  SUBCASE("duplicate name across kinds") {
    CHECK(error_line<DuplicateName>("connector x {\n kind message_queue\n}\ncomponent x {\n role io\n "
                                    "concurrency periodic\n}\n") == 4);
  }
  SUBCASE("unknown kind") {
    CHECK(error_line<SyntaxError>("connector x {\n kind pipe\n}\n") == 2);
  }
  SUBCASE("missing brace") {
    CHECK_THROWS_AS(parse_spec("connector x {\n kind message_queue\n"), SyntaxError);
  }
  SUBCASE("missing required statement") {
    CHECK(error_line<SyntaxError>("\ncomponent a {\n role io\n}\n") == 2);
  }
  SUBCASE("bad bind arrow") {
    CHECK(error_line<SyntaxError>("connector x {\n kind message_queue\n}\ncomponent a {\n role io\n "
                                  "concurrency event_driven\n bind p => x as sender\n}\n") == 7);
  }
  SUBCASE("statement repeated") {
    CHECK(error_line<SyntaxError>("connector x {\n kind message_queue\n kind message_buffer\n}\n") == 3);
  }
  SUBCASE("stray token at top level") {
    CHECK(error_line<SyntaxError>("# c\nkind message_queue\n") == 2);
  }
}

TEST_CASE("validation findings") {
  auto base = parse_spec(kProducerConsumer);
  auto messages = [](const std::vector<Finding>& fs) {
    std::string all;
    for (const auto& f : fs) all += f.str() + "\n";
    return all;
  };

  SUBCASE("buffer with two senders") {
    auto spec = base;
    auto extra = spec.components[0];
    extra.name = "producer2";
    spec.components.push_back(extra);
    auto fs = validate(spec);
    CHECK(error_count(fs) == 1);
    CHECK(messages(fs).find("message_buffer permits exactly one sender") != std::string::npos);
  }
  SUBCASE("queue with two senders is fine") {
    auto spec = base;
    spec.connectors[0].kind = ConnectorKind::message_queue;
    auto extra = spec.components[0];
    extra.name = "producer2";
    spec.components.push_back(extra);
    CHECK(validate(spec).empty());
  }
  SUBCASE("connector without receiver") {
    auto spec = base;
    spec.components.pop_back();
    CHECK(messages(validate(spec)).find("no receiver") != std::string::npos);
  }
  SUBCASE("passive without host") {
    auto spec = base;
    ComponentSpec t;
    t.name = "transaction";
    t.role = RoleStereotype::entity;
    t.concurrency = ConcurrencyType::passive;
    spec.components.push_back(t);
    CHECK(messages(validate(spec)).find("passive component needs a host") != std::string::npos);
  }
  SUBCASE("passive host and bindings on passive") {
    auto spec = base;
    ComponentSpec t1;
    t1.name = "t1";
    t1.concurrency = ConcurrencyType::passive;
    t1.host = "consumer";
    ComponentSpec t2 = t1;
    t2.name = "t2";
    t2.host = "t1";
    t2.bindings.push_back({"x", "link", End::receiver, 0});
    spec.components.push_back(t1);
    spec.components.push_back(t2);
    auto all = messages(validate(spec));
    CHECK(all.find("is itself passive") != std::string::npos);
    CHECK(all.find("cannot bind") != std::string::npos);
  }
  SUBCASE("host on an active component") {
    auto spec = base;
    spec.components[0].host = "consumer";
    CHECK(error_count(validate(spec)) == 1);
  }
  SUBCASE("capacity rules") {
    auto spec = base;
    spec.connectors[0].capacity = 4;
    CHECK(messages(validate(spec)).find("only allowed on queue-based") != std::string::npos);
    spec.connectors[0].kind = ConnectorKind::message_queue;
    spec.connectors[0].capacity = 0;
    CHECK(error_count(validate(spec)) == 1);
    spec.connectors[0].capacity = kLargeCapacity + 1;
    auto fs = validate(spec);
    REQUIRE(fs.size() == 1);
    CHECK(fs[0].severity == Severity::warning);
  }
  SUBCASE("periodic needs a period") {
    auto spec = base;
    spec.components[1].concurrency = ConcurrencyType::periodic;
    CHECK(error_count(validate(spec)) == 1);
    spec.components[1].params["period_ms"] = "20";
    CHECK(validate(spec).empty());
  }
  SUBCASE("port bound twice") {
    auto spec = base;
    spec.connectors.push_back({"other", ConnectorKind::message_queue, std::nullopt, "int", 0});
    spec.components[0].bindings.push_back({"out", "other", End::sender, 0});
    spec.components[1].bindings.push_back({"in2", "other", End::receiver, 0});
    CHECK(messages(validate(spec)).find("bound twice") != std::string::npos);
  }
}

TEST_CASE("instantiation creates conduits, contexts and a total traceability map") {
  auto seen = std::make_shared<std::vector<int>>();
  auto spec = parse_spec(kProducerConsumer);
  auto deployment = instantiate(spec, producer_consumer_registry(seen));
  auto& system = deployment.system();
  CHECK(system.component_context_count() == 2);
  CHECK(system.conduit_count() == 1);
  const auto& map = deployment.traceability();
  CHECK(map.designs() == std::vector<std::string>{"consumer", "link", "producer"});
  CHECK(map.forward("link").size() == 4);  // connector, conduit, two endpoints
  CHECK(map.forward("producer").size() == 2);
  for (const auto& h : deployment.handles()) {
    CHECK(system.status(h) == ContextStatus::created);
    CHECK(map.backward(h.component_id.str()) == h.name);
    CHECK(map.backward(h.context_id.str()) == h.name);
  }

  deployment.start();
  REQUIRE(eventually([&] { return seen->size() == 5; }));
  const auto& trace = deployment.shutdown();
  auto streams = trace_to_design(map, trace);
  std::size_t total = 0;
  for (const auto& [name, events] : streams) total += events.size();
  CHECK(total == trace.size());
  CHECK(streams.at("link").size() >= 15);
  CHECK(streams.at("producer").front().kind == EventKind::start);
}

TEST_CASE("trace_to_design on an empty trace gives empty streams, unknown sources are refused") {
  auto seen = std::make_shared<std::vector<int>>();
  auto deployment = instantiate(parse_spec(kProducerConsumer), producer_consumer_registry(seen));
  auto streams = trace_to_design(deployment.traceability(), SystemTrace{});
  CHECK(streams.size() == 3);
  for (const auto& [name, events] : streams) CHECK(events.empty());
  TraceSink sink;
  sink.emit("component:999999", EventKind::step);
  CHECK_THROWS_AS(trace_to_design(deployment.traceability(), sink.snapshot()), UnknownObject);
}

TEST_CASE("a registry gap fails before anything is created") {
  BehaviorRegistry registry;
  registry.add("producer", [](const ComponentSpec&) { return std::make_shared<Produce>(); });
  CHECK_THROWS_AS(instantiate(parse_spec(kProducerConsumer), registry), MissingBehavior);
}

TEST_CASE("creation order puts controllers first and passives last") {
  auto spec = parse_spec(R"(
connector q {
  kind message_queue
  capacity 4
  message text
}
component sensor {
  role io
  concurrency event_driven
  bind out -> q as sender
}
component record {
  role entity
  concurrency passive
  host ctrl
}
component ctrl {
  role control
  concurrency demand_driven
  bind in -> q as receiver
}
)");
  BehaviorRegistry registry;
  for (auto name : {"sensor", "record", "ctrl"}) {
    registry.add(name, [](const ComponentSpec&) { return std::make_shared<Behavior>(); });
  }
  auto deployment = instantiate(spec, registry);
  auto ctrl = deployment.component("ctrl");
  auto sensor = deployment.component("sensor");
  auto record = deployment.component("record");
  CHECK(ctrl.component_id < sensor.component_id);
  CHECK(sensor.component_id < record.component_id);
  CHECK(record.context_id == ctrl.context_id);
  CHECK(deployment.system().component_context_count() == 2);
}

TEST_CASE("replication copies everything not marked shared") {
  auto spec = parse_spec(R"(
connector requests {
  kind queue_and_callback
  message text
}
connector log_q {
  kind message_queue
  message text
}
component server {
  role algorithm
  concurrency demand_driven
  bind in -> requests as receiver
  param shared=true
}
component atm {
  role control
  concurrency demand_driven
  bind server -> requests as sender
  bind log -> log_q as sender
}
component log {
  role io
  concurrency periodic
  bind in -> log_q as receiver
  param period_ms=10
}
component tx {
  role entity
  concurrency passive
  host atm
}
)");
  CHECK(replicate(spec, 1) == spec);
  auto three = replicate(spec, 3);
  CHECK(three.connectors.size() == 1 + 3);
  CHECK(three.components.size() == 1 + 3 * 3);
  CHECK(validate(three).empty());
  const auto* atm2 = three.find_component("atm_2");
  REQUIRE(atm2);
  CHECK(atm2->param("behavior") == "atm");
  CHECK(atm2->bindings[0].connector == "requests");
  CHECK(atm2->bindings[1].connector == "log_q_2");
  CHECK(three.find_component("tx_3")->host == "atm_3");
  CHECK(three.bindings_on("requests").size() == 4);
}
