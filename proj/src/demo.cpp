#include "comet/demo.hpp"

#include <stdexcept>
#include <thread>

#include "comet/components.hpp"

namespace comet {

namespace {

using namespace std::chrono_literals;

ComponentDescriptor active(std::string name, RoleStereotype role, ConcurrencyType type) {
  return {std::move(name), role, type, std::nullopt, {}};
}

SystemTrace only_connectors(const SystemTrace& trace) {
  return SystemTrace(trace.filter([](const TraceEvent& e) { return e.source.rfind("conduit:", 0) == 0; }));
}

/// Runs `body` on a component of its own and waits until it returns.
template <typename Body>
struct Driver : Behavior {
  Body body;
  explicit Driver(Body b) : body(std::move(b)) {}
  void run(ComponentContext& self) override { body(self); }
};

template <typename Body>
BehaviorPtr driver(Body body) {
  return std::make_shared<Driver<Body>>(std::move(body));
}

void finish(System& system, const std::vector<ComponentHandle>& wait_for) {
  system.start_all();
  if (!system.wait_finished(wait_for, System::Clock::now() + 10s)) {
    system.mark_unfinished_forced();
  }
}

DemoResult buffer_demo(std::size_t n) {
  System system;
  auto conn = system.add_connector(std::make_shared<BufferConnector<int>>(system.connector_options()));
  auto producer = system.spawn_component(active("producer", RoleStereotype::io, ConcurrencyType::event_driven),
                                         {{"out", conn, End::sender}}, driver([n](ComponentContext& self) {
                                           auto out = self.ports().take<BufferSender<int>>("out");
                                           for (std::size_t i = 0; i < n; ++i) out.send(static_cast<int>(i));
                                         }));
  auto consumer = system.spawn_component(active("consumer", RoleStereotype::control, ConcurrencyType::demand_driven),
                                         {{"in", conn, End::receiver}}, driver([n](ComponentContext& self) {
                                           auto in = self.ports().take<BufferReceiver<int>>("in");
                                           for (std::size_t i = 0; i < n; ++i) in.receive();
                                         }));
  finish(system, {producer, consumer});
  DemoResult out{only_connectors(system.shutdown()), {}};
  out.summary.push_back(std::to_string(n) + " rendezvous");
  return out;
}

DemoResult queue_demo(std::size_t n) {
  System system;
  auto conn = system.add_connector(std::make_shared<QueueConnector<int>>(system.connector_options(4)));
  auto producer = system.spawn_component(active("producer", RoleStereotype::io, ConcurrencyType::event_driven),
                                         {{"out", conn, End::sender}}, driver([n](ComponentContext& self) {
                                           auto out = self.ports().take<QueueSender<int>>("out");
                                           for (std::size_t i = 0; i < n; ++i) out.send(static_cast<int>(i));
                                         }));
  auto consumer = system.spawn_component(active("consumer", RoleStereotype::control, ConcurrencyType::demand_driven),
                                         {{"in", conn, End::receiver}}, driver([n](ComponentContext& self) {
                                           auto in = self.ports().take<QueueReceiver<int>>("in");
                                           for (std::size_t i = 0; i < n; ++i) in.receive();
                                         }));
  finish(system, {producer, consumer});
  DemoResult out{only_connectors(system.shutdown()), {}};
  out.summary.push_back(std::to_string(n) + " messages through a capacity-4 queue");
  return out;
}

DemoResult reply_demo(std::size_t n) {
  System system;
  auto conn = system.add_connector(std::make_shared<ReplyConnector<int, int>>(system.connector_options()));
  auto summary = std::make_shared<std::vector<std::string>>();
  auto client = system.spawn_component(active("client", RoleStereotype::control, ConcurrencyType::demand_driven),
                                       {{"server", conn, End::sender}}, driver([n, summary](ComponentContext& self) {
                                         auto server = self.ports().take<ReplySender<int, int>>("server");
                                         for (std::size_t i = 0; i < n; ++i) {
                                           auto r = server.request(static_cast<int>(i));
                                           summary->push_back("request " + std::to_string(i) + " -> reply " +
                                                              std::to_string(r.value()));
                                         }
                                       }));
  system.spawn_component(active("doubler", RoleStereotype::algorithm, ConcurrencyType::demand_driven),
                         {{"requests", conn, End::receiver}},
                         std::make_shared<ServiceComponent<ReplyReceiver<int, int>>>(
                             "requests", [](ComponentContext&, int x) { return 2 * x; }));
  finish(system, {client});
  DemoResult out{only_connectors(system.shutdown()), *summary};
  return out;
}

DemoResult callback_demo(std::size_t n) {
  System system;
  auto conn = system.add_connector(std::make_shared<CallbackConnector<std::string, std::string>>(system.connector_options()));
  std::vector<ComponentHandle> clients;
  std::vector<std::shared_ptr<std::vector<std::string>>> pairs;
  for (int c = 1; c <= 2; ++c) {
    auto lines = std::make_shared<std::vector<std::string>>();
    pairs.push_back(lines);
    std::string name = "client" + std::to_string(c);
    clients.push_back(system.spawn_component(
        active(name, RoleStereotype::control, ConcurrencyType::demand_driven), {{"server", conn, End::sender}},
        driver([n, name, lines](ComponentContext& self) {
          auto server = self.ports().take<CallbackSender<std::string, std::string>>("server");
          for (std::size_t i = 0; i < n; ++i) server.send(name + "/req" + std::to_string(i));
          for (std::size_t i = 0; i < n; ++i) {
            auto r = server.accept();
            lines->push_back(server.client_id().str() + " " + name + "/req" + std::to_string(i) + " -> " + r.value());
          }
        })));
  }
  system.spawn_component(active("echo", RoleStereotype::algorithm, ConcurrencyType::demand_driven),
                         {{"requests", conn, End::receiver}},
                         std::make_shared<ServiceComponent<CallbackReceiver<std::string, std::string>>>(
                             "requests", [](ComponentContext&, std::string s) { return "echo:" + s; }));
  finish(system, clients);
  DemoResult out{only_connectors(system.shutdown()), {}};
  for (const auto& p : pairs) out.summary.insert(out.summary.end(), p->begin(), p->end());
  return out;
}

DemoResult periodic_demo(std::size_t n) {
  System system;
  auto task = std::make_shared<FunctionTask>(10ms, [n](ComponentContext&, std::uint64_t step) { return step < n; });
  auto h = system.spawn_component(active("ticker", RoleStereotype::control, ConcurrencyType::periodic), {}, task);
  system.start_all();
  auto deadline = System::Clock::now() + 10s;
  while (n > 0 && !task->query_is_done() && System::Clock::now() < deadline) std::this_thread::sleep_for(1ms);
  const auto& trace = system.shutdown();
  DemoResult out{SystemTrace(trace.filter([&](const TraceEvent& e) {
                   return e.source == h.component_id.str() && e.kind == EventKind::step;
                 })),
                 {}};
  out.summary.push_back(std::to_string(out.trace.size()) + " steps");
  return out;
}

}  // namespace

const std::vector<std::string>& demo_patterns() {
  static const std::vector<std::string> names{"buffer", "queue", "reply", "callback", "periodic"};
  return names;
}

DemoResult run_demo(std::string_view pattern, std::size_t n) {
  if (pattern == "buffer") return buffer_demo(n);
  if (pattern == "queue") return queue_demo(n);
  if (pattern == "reply") return reply_demo(n);
  if (pattern == "callback") return callback_demo(n);
  if (pattern == "periodic") return periodic_demo(n);
  throw std::invalid_argument("unknown pattern '" + std::string(pattern) + "'");
}

}  // namespace comet
