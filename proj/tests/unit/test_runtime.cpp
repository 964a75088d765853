#include <doctest.h>

#include <atomic>
#include <set>

#include "comet/connectors.hpp"
#include "comet/runtime.hpp"
#include "support.hpp"

using namespace comet;
using namespace comet::test;
using namespace std::chrono_literals;

namespace {

struct Idle : Behavior {};

/// Receives from a queue port forever.
struct Sink : Behavior {
  std::atomic<int> received{0};
  void run(ComponentContext& self) override {
    auto in = self.ports().take<QueueReceiver<int>>("in");
    while (true) {
      in.receive();
      ++received;
      self.step();
    }
  }
};

struct Stepper : Behavior {
  int steps;
  explicit Stepper(int n) : steps(n) {}
  void run(ComponentContext& self) override {
    for (int i = 0; i < steps; ++i) self.step(std::to_string(i));
  }
};

ComponentDescriptor active(std::string name, ConcurrencyType c = ConcurrencyType::demand_driven) {
  return {std::move(name), RoleStereotype::control, c, std::nullopt, {}};
}

}  // namespace

TEST_CASE("spawn gives an active component a fresh context") {
  System system;
  auto q = std::make_shared<QueueConnector<int>>(system.connector_options());
  auto qid = system.add_connector(q);
  auto a = system.spawn_component(active("a"), {{"in", qid, End::receiver}}, std::make_shared<Sink>());
  auto b = system.spawn_component(active("b"), {}, std::make_shared<Idle>());
  CHECK(a.context_id.valid());
  CHECK(a.context_id != b.context_id);
  CHECK(a.component_id != b.component_id);
  CHECK(system.status(a) == ContextStatus::created);
  CHECK(system.component_context_count() == 2);
  CHECK(system.endpoints_of(qid).size() == 1);
}

TEST_CASE("a passive component shares its host's context") {
  System system;
  auto atm = system.spawn_component(active("atm"), {}, std::make_shared<Idle>());
  ComponentDescriptor tx{"transaction", RoleStereotype::entity, ConcurrencyType::passive, atm.component_id, {}};
  auto t = system.spawn_component(tx, {}, std::make_shared<Idle>());
  CHECK(t.passive());
  CHECK(t.context_id == atm.context_id);
  CHECK(system.component_context_count() == 1);
}

TEST_CASE("spawn errors") {
  System system;
  SUBCASE("binding to a connector that does not exist") {
    CHECK_THROWS_AS(system.spawn_component(active("x"), {{"in", ConnectorId{999999}, End::receiver}},
                                           std::make_shared<Idle>()),
                    UnknownConduit);
    CHECK(system.component_count() == 0);
  }
  SUBCASE("passive without host") {
    ComponentDescriptor tx{"transaction", RoleStereotype::entity, ConcurrencyType::passive, std::nullopt, {}};
    CHECK_THROWS_AS(system.spawn_component(tx, {}, std::make_shared<Idle>()), HostRequired);
  }
  SUBCASE("passive hosted by a passive component") {
    auto atm = system.spawn_component(active("atm"), {}, std::make_shared<Idle>());
    ComponentDescriptor tx{"t1", RoleStereotype::entity, ConcurrencyType::passive, atm.component_id, {}};
    auto t1 = system.spawn_component(tx, {}, std::make_shared<Idle>());
    ComponentDescriptor nested{"t2", RoleStereotype::entity, ConcurrencyType::passive, t1.component_id, {}};
    CHECK_THROWS_AS(system.spawn_component(nested, {}, std::make_shared<Idle>()), HostRequired);
  }
  SUBCASE("second sender on a buffer") {
    auto buf = std::make_shared<BufferConnector<int>>(system.connector_options());
    auto id = system.add_connector(buf);
    system.spawn_component(active("p1"), {{"out", id, End::sender}}, std::make_shared<Idle>());
    CHECK_THROWS_AS(system.spawn_component(active("p2"), {{"out", id, End::sender}}, std::make_shared<Idle>()),
                    PortError);
  }
}

TEST_CASE("start_all launches every loop before returning") {
  System system;
  auto a = system.spawn_component(active("server"), {}, std::make_shared<Stepper>(0));
  auto b = system.spawn_component(active("atm"), {}, std::make_shared<Stepper>(0));
  std::vector<ComponentHandle> both{a, b};
  system.start_all(both);
  auto trace = system.trace_sink()->snapshot();
  CHECK(trace.by_kind(EventKind::start).size() == 2);
  CHECK(system.status(a) != ContextStatus::created);
  CHECK_THROWS_AS(system.start_all(both), AlreadyStarted);
  system.shutdown();
}

TEST_CASE("start_all with no handles is a no-op") {
  System system;
  system.start_all(std::vector<ComponentHandle>{});
  CHECK(system.trace_sink()->size() == 0);
}

TEST_CASE("shutdown unblocks a component waiting on an empty queue") {
  System system;
  auto q = std::make_shared<QueueConnector<int>>(system.connector_options());
  auto qid = system.add_connector(q);
  auto sink = std::make_shared<Sink>();
  auto h = system.spawn_component(active("consumer"), {{"in", qid, End::receiver}}, sink);
  system.start_all();
  REQUIRE(system.trace_sink()->await([](const TraceEvent& e) { return e.kind == EventKind::receive_begin; }, 1,
                                     TraceSink::Clock::now() + 2s));
  const auto& trace = system.shutdown();
  CHECK(trace.by_kind(EventKind::receive_end).empty());
  CHECK(trace.by_kind(EventKind::forced_stop).empty());
  auto stops = trace.by_kind(EventKind::stop);
  REQUIRE(stops.size() == 1);
  CHECK(stops[0].source == h.component_id.str());
  CHECK(system.status(h) == ContextStatus::stopped);

  SUBCASE("a second shutdown returns the same trace") {
    const auto& again = system.shutdown();
    CHECK(&again == &trace);
    CHECK(again.size() == trace.size());
  }
  SUBCASE("the sink is closed afterwards") {
    CHECK_THROWS_AS(system.emit(TraceEvent{}), SinkClosed);
  }
}

TEST_CASE("shutdown records stop events for every component, passive ones included") {
  System system;
  auto a = system.spawn_component(active("a"), {}, std::make_shared<Stepper>(3));
  ComponentDescriptor tx{"tx", RoleStereotype::entity, ConcurrencyType::passive, a.component_id, {}};
  auto t = system.spawn_component(tx, {}, std::make_shared<Idle>());
  auto b = system.spawn_component(active("b"), {}, std::make_shared<Stepper>(1));
  system.start_all();
  const auto& trace = system.shutdown();
  std::set<std::string> stopped;
  for (const auto& e : trace.by_kind(EventKind::stop)) stopped.insert(e.source);
  CHECK(stopped == std::set<std::string>{a.component_id.str(), b.component_id.str(), t.component_id.str()});
}

TEST_CASE("a component that ignores the stop signal is forced after the grace period") {
  System system;
  auto release = std::make_shared<std::atomic<bool>>(false);
  struct Stubborn : Behavior {
    std::shared_ptr<std::atomic<bool>> release;
    explicit Stubborn(std::shared_ptr<std::atomic<bool>> r) : release(std::move(r)) {}
    void run(ComponentContext&) override {
      while (!release->load()) std::this_thread::sleep_for(1ms);
    }
  };
  auto h = system.spawn_component(active("stubborn"), {}, std::make_shared<Stubborn>(release));
  system.start_all();
  const auto& trace = system.shutdown(50ms);
  auto forced = trace.by_kind(EventKind::forced_stop);
  REQUIRE(forced.size() == 1);
  CHECK(forced[0].source == h.component_id.str());
  CHECK(system.status(h) == ContextStatus::stopped);
  release->store(true);
}

TEST_CASE("step events carry the context of the component that emitted them") {
  System system;
  std::vector<ComponentHandle> hs;
  for (int i = 0; i < 4; ++i) hs.push_back(system.spawn_component(active("s" + std::to_string(i)), {}, std::make_shared<Stepper>(20)));
  system.start_all();
  REQUIRE(system.wait_finished(hs, System::Clock::now() + 2s));
  const auto& trace = system.shutdown();
  std::map<std::string, ContextId> context_of;
  for (const auto& h : hs) context_of[h.component_id.str()] = h.context_id;
  std::size_t checked = 0;
  for (const auto& e : trace.by_kind(EventKind::step)) {
    CHECK(e.context == context_of.at(e.source));
    ++checked;
  }
  CHECK(checked == 80);
}

TEST_CASE("a component whose run throws records a fault and stops") {
  System system;
  struct Broken : Behavior {
    void run(ComponentContext&) override { throw std::runtime_error("boom"); }
  };
  auto h = system.spawn_component(active("broken"), {}, std::make_shared<Broken>());
  system.start_all();
  REQUIRE(system.wait_finished(std::vector{h}, System::Clock::now() + 2s));
  CHECK(system.fault(h) == std::optional<std::string>("boom"));
  const auto& trace = system.shutdown();
  CHECK(trace.find([](const TraceEvent& e) { return e.digest == "fault: boom"; }) != nullptr);
}

TEST_CASE("ports hand out each endpoint once and check its type") {
  System system;
  auto buf = std::make_shared<BufferConnector<int>>(system.connector_options());
  auto id = system.add_connector(buf);
  struct Taker : Behavior {
    std::string outcome;
    void run(ComponentContext& self) override {
      try {
        self.ports().take<BufferSender<std::string>>("out");
      } catch (const PortError&) {
        outcome += "type;";
      }
      auto ok = self.ports().take<BufferSender<int>>("out");
      (void)ok;
      try {
        self.ports().take<BufferSender<int>>("out");
      } catch (const PortError&) {
        outcome += "twice;";
      }
    }
  };
  auto taker = std::make_shared<Taker>();
  auto h = system.spawn_component(active("p"), {{"out", id, End::sender}}, taker);
  system.start_all();
  REQUIRE(system.wait_finished(std::vector{h}, System::Clock::now() + 2s));
  system.shutdown();
  CHECK(taker->outcome == "type;twice;");
}
