#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "atm_reference.hpp"
#include "comet/atm.hpp"
#include "support.hpp"

using namespace comet;
using namespace comet::atm;
using namespace comet::test;
using namespace std::chrono_literals;

namespace {

RunSettings quick() {
  RunSettings s;
  s.timeout = 5s;
  s.jitter = 0ms;
  return s;
}

RunResult run_file(const std::string& scenario, RunSettings settings = quick()) {
  return run(load_spec(data_path("atm.arch")), load_accounts(data_path("accounts.txt")),
             {load_scenario(data_path("scenarios/" + scenario))}, settings);
}

std::vector<std::string> events_of(const std::vector<LogLine>& log) {
  std::vector<std::string> out;
  for (const auto& l : log) out.push_back(l.event);
  return out;
}

std::vector<std::string> texts_of(const std::vector<Receipt>& receipts) {
  std::vector<std::string> out;
  for (const auto& r : receipts) out.push_back(r.text);
  return out;
}

}  // namespace

TEST_CASE("accounts file") {
  auto bank = load_accounts(data_path("accounts.txt"));
  CHECK(bank.cards.at("42").account_ids == std::vector<std::string>{"A", "B"});
  CHECK(bank.accounts.at("A") == 10000);
  CHECK(bank.total() == 10000 + 2500 + 50000 + 100000);
  CHECK_THROWS_AS(parse_accounts("card 1 pin 2 account X balance -5\n"), SyntaxError);
  CHECK_THROWS_AS(parse_accounts("card 1 pin 2 account X\n"), SyntaxError);
  CHECK_THROWS_AS(parse_accounts("card 1 pin 2 account X balance 5\ncard 2 pin 2 account X balance 6\n"), SyntaxError);
}

TEST_CASE("scenario file") {
  auto s = load_scenario(data_path("scenarios/mixed.scn"));
  REQUIRE(s.sessions.size() == 4);
  CHECK(s.sessions[0].screen_inputs() == std::vector<ScreenInput>{ScreenInput{}});
  CHECK(s.sessions[2].screen_inputs()[1] == ScreenInput{InputKind::withdraw, "", "B", "", 2500});
  CHECK(s.sessions[2].takes_cash());
  CHECK_FALSE(s.sessions[1].takes_cash());
  CHECK(s.sessions[3].number == 4);
  CHECK_THROWS_AS(parse_scenario("customer enter_pin 1\n"), SyntaxError);
  CHECK_THROWS_AS(parse_scenario("customer insert_card 1\ncustomer fly\n"), SyntaxError);
  CHECK_THROWS_AS(parse_scenario("customer insert_card 1\ncustomer choose_withdraw lots\n"), SyntaxError);
  CHECK_THROWS_AS(parse_scenario("robot insert_card 1\n"), SyntaxError);
  CHECK_THROWS_AS(parse_scenario("customer insert_card 1\ncustomer screen_timeout\n"), SyntaxError);
}

TEST_CASE("server request handling") {
  Server server(load_accounts(data_path("accounts.txt")));
  CHECK(std::holds_alternative<PinOk>(server.handle(ValidatePin{"42", "1234"})));
  CHECK(std::holds_alternative<PinBad>(server.handle(ValidatePin{"42", "9999"})));
  CHECK(std::holds_alternative<PinBad>(server.handle(ValidatePin{"404", "1234"})));
  auto ok = server.handle(Withdraw{"A", 3000});
  REQUIRE(std::holds_alternative<Ok>(ok));
  CHECK(std::get<Ok>(ok).new_balance == 7000);
  CHECK(server.bank().accounts.at("A") == 7000);
  CHECK(std::holds_alternative<InsufficientFunds>(server.handle(Withdraw{"A", 15000})));
  CHECK(server.bank().accounts.at("A") == 7000);
  CHECK(std::holds_alternative<Rejected>(server.handle(Withdraw{"Z", 1})));
  CHECK(std::get<Amount>(server.handle(BalanceQuery{"B"})).balance == 2500);
  CHECK(std::get<Ok>(server.handle(Transfer{"A", "B", 7000})).new_balance == 0);
  CHECK(server.min_balance() == 0);
  CHECK(std::holds_alternative<InsufficientFunds>(server.handle(Transfer{"A", "B", 1})));
  CHECK(std::holds_alternative<Rejected>(server.handle(Transfer{"B", "B", 1})));
}

TEST_CASE("state chart") {
  using S = AtmState;
  const S all[] = {S::idle, S::waiting_pin, S::validating, S::menu, S::processing, S::dispensing, S::printing, S::ejecting};
  std::size_t allowed = 0;
  for (auto from : all) {
    for (auto to : all) allowed += transition_allowed(from, to);
  }
  // Main line (7 edges) + processing->printing + ejecting from 6 states.
  CHECK(allowed == 7 + 1 + 6);
  CHECK_FALSE(transition_allowed(S::idle, S::ejecting));
  CHECK(transition_allowed(S::ejecting, S::idle));
  CHECK_FALSE(transition_allowed(S::printing, S::idle));
}

TEST_CASE("happy-path withdraw") {
  auto r = run_file("withdraw.scn");
  INFO(r.diagnostic);
  CHECK(r.exit_code == 0);
  CHECK(r.final_bank.accounts.at("A") == 7000);
  CHECK(r.report.dispensed_total == 3000);
  CHECK(r.report.holds());
  CHECK(texts_of(r.receipts) == std::vector<std::string>{"withdraw 3000 from A balance 7000"});

  // Interaction order: card insert received, PIN answered, server round
  // trip, log enqueue, cash dispensed, card returned.
  const auto& trace = r.trace;
  const auto& map = r.traceability;
  auto first = [&](const std::string& design, EventKind kind, std::size_t after = 0) {
    const auto& events = trace.events();
    for (std::size_t i = after; i < events.size(); ++i) {
      if (events[i].kind == kind && map.backward(events[i].source) == design) return i;
    }
    return static_cast<std::size_t>(-1);
  };
  auto insert = first("card_in", EventKind::receive_end);
  auto pin = first("screen", EventKind::reply, insert);
  auto server = first("bank", EventKind::reply, pin);
  auto accepted = first("bank", EventKind::receive_end, server);
  auto logged = first("log_queue", EventKind::send_end, accepted);
  auto dispensed = first("cash", EventKind::receive_end, logged);
  auto returned = first("card_out", EventKind::receive_end, dispensed);
  CHECK(returned != static_cast<std::size_t>(-1));
}

TEST_CASE("scenarios agree with the sequential reference model") {
  for (auto name : {"withdraw.scn", "wrong_pin.scn", "balance.scn", "unknown_card.scn", "transfer.scn", "mixed.scn"}) {
    CAPTURE(name);
    auto bank = load_accounts(data_path("accounts.txt"));
    auto scenario = load_scenario(data_path(std::string("scenarios/") + name));
    auto expected = replay(bank, scenario);
    auto r = run_file(name);
    INFO(r.diagnostic);
    CHECK(r.exit_code == 0);
    CHECK(r.final_bank.accounts == expected.bank.accounts);
    CHECK(r.report.dispensed_total == expected.dispensed);
    CHECK(texts_of(r.receipts) == expected.receipts);
    CHECK(events_of(r.log) == expected.log_events);
    CHECK(r.report.cards_returned == scenario.sessions.size());
  }
}

TEST_CASE("wrong pin and unknown card end with the card returned and nothing dispensed") {
  for (auto name : {"wrong_pin.scn", "unknown_card.scn"}) {
    auto r = run_file(name);
    CHECK(r.exit_code == 0);
    CHECK(r.report.dispensed_total == 0);
    CHECK(events_of(r.log) == std::vector<std::string>{"card_inserted", "pin_bad", "card_returned"});
    CHECK(r.trace.by_kind(EventKind::receive_end).size() > 0);
  }
}

TEST_CASE("ATM traces only legal transitions and the transaction lives on the ATM context") {
  auto r = run_file("mixed.scn");
  REQUIRE(r.exit_code == 0);
  for (const auto& e : r.trace.by_kind(EventKind::state_change)) {
    if (r.traceability.backward(e.source) != "atm") continue;
    auto arrow = e.digest.find("->");
    REQUIRE(arrow != std::string::npos);
    auto from = e.digest.substr(0, arrow);
    auto to = e.digest.substr(arrow + 2);
    bool legal = false;
    for (int a = 0; a < 8; ++a) {
      for (int b = 0; b < 8; ++b) {
        auto sa = static_cast<AtmState>(a);
        auto sb = static_cast<AtmState>(b);
        if (to_string(sa) == from && to_string(sb) == to) legal = transition_allowed(sa, sb);
      }
    }
    CHECK_MESSAGE(legal, e.digest);
  }
}

TEST_CASE("every card insert is followed by exactly one card return and the log is complete") {
  auto r = run_file("mixed.scn");
  REQUIRE(r.exit_code == 0);
  std::size_t inserts = 0;
  std::size_t returns = 0;
  std::size_t log_sends = 0;
  for (const auto& e : r.trace.events()) {
    const auto& design = r.traceability.backward(e.source);
    if (design == "card_in" && e.kind == EventKind::receive_end) ++inserts;
    if (design == "card_out" && e.kind == EventKind::receive_end) ++returns;
    if (design == "log_queue" && e.kind == EventKind::send_end) ++log_sends;
  }
  CHECK(inserts == 4);
  CHECK(returns == 4);
  CHECK(log_sends == r.log.size());
  for (std::size_t i = 0; i < r.log.size(); ++i) CHECK(r.log[i].seq == i + 1);
}

TEST_CASE("log format round trips") {
  std::vector<LogLine> lines{{1, "atm", "card_inserted", "card=42 session=1"}, {2, "atm", "pin_ok", ""}};
  CHECK(parse_log(format_log(lines)) == lines);
}

TEST_CASE("log drains pending records at shutdown") {
  System system;
  auto q = std::make_shared<QueueConnector<LogRecord>>(system.connector_options());
  auto qid = system.add_connector(q);
  auto tx = q->sender();
  auto log = std::make_shared<Log>(10s);
  ComponentDescriptor d{"log", RoleStereotype::io, ConcurrencyType::periodic, std::nullopt, {}};
  system.spawn_component(d, {{"in", qid, End::receiver}}, log);
  system.start_all();
  REQUIRE(eventually([&] { return log->query_step_count() == 1; }));
  tx.send(LogRecord{"atm", "a", ""});
  tx.send(LogRecord{"atm", "b", ""});
  system.shutdown();
  REQUIRE(log->lines().size() == 2);
  CHECK(log->lines()[1].event == "b");
}

TEST_CASE("a mis-wired design times out with forced stops") {
  auto spec = load_spec(data_path("atm_miswired.arch"));
  CHECK(error_count(validate(spec)) == 0);
  auto settings = quick();
  settings.timeout = 300ms;
  settings.grace = 200ms;
  auto r = run(spec, load_accounts(data_path("accounts.txt")), {load_scenario(data_path("scenarios/withdraw.scn"))},
               settings);
  CHECK(r.exit_code == 1);
  CHECK(r.timed_out);
  CHECK_FALSE(r.trace.by_kind(EventKind::forced_stop).empty());
}

TEST_CASE("two ATMs transferring between two accounts conserve money") {
  auto bank = load_accounts(data_path("accounts.txt"));
  auto one = parse_scenario(
      "customer insert_card 42\ncustomer enter_pin 1234\ncustomer choose_transfer A B 700\ncustomer take_card\n"
      "customer insert_card 42\ncustomer enter_pin 1234\ncustomer choose_transfer B A 300\ncustomer take_card\n");
  auto report = multi_atm_run(load_spec(data_path("atm.arch")), bank, {one, one}, quick());
  INFO(report.str());
  CHECK(report.holds());
  CHECK(report.final_total == bank.total());
  CHECK(report.sessions == 4);
}

TEST_CASE("four ATMs racing on one account never overdraw") {
  auto bank = load_accounts(data_path("accounts.txt"));
  auto scenario = load_scenario(data_path("scenarios/contention.scn"));
  auto settings = quick();
  settings.timeout = 20s;
  settings.atms = 4;
  auto r = run(load_spec(data_path("atm.arch")), bank, {scenario}, settings);
  INFO(r.diagnostic);
  CHECK(r.exit_code == 0);
  CHECK(r.report.holds());
  CHECK(r.final_bank.accounts.at("SHARED") + r.report.dispensed_total == 100000);
  CHECK(r.report.dispensed_total == 100000);
  CHECK(r.report.requests == 400);
}

TEST_CASE("a single ATM through multi_atm_run matches run") {
  auto bank = load_accounts(data_path("accounts.txt"));
  auto scenario = load_scenario(data_path("scenarios/mixed.scn"));
  auto spec = load_spec(data_path("atm.arch"));
  auto single = run(spec, bank, {scenario}, quick()).report;
  auto multi = multi_atm_run(spec, bank, {scenario}, quick());
  CHECK(single.final_total == multi.final_total);
  CHECK(single.dispensed_total == multi.dispensed_total);
  CHECK(single.sessions == multi.sessions);
}

TEST_CASE("run_scenario writes trace and log artifacts") {
  auto dir = std::filesystem::temp_directory_path() / "comet_atm_artifacts";
  std::filesystem::create_directories(dir);
  ScenarioFiles files{data_path("atm.arch"), data_path("accounts.txt"), data_path("scenarios/withdraw.scn"),
                      (dir / "trace.tsv").string(), (dir / "log.tsv").string()};
  auto r = run_scenario(files, quick());
  REQUIRE(r.exit_code == 0);
  std::ifstream trace_in(*files.trace);
  std::stringstream trace_text;
  trace_text << trace_in.rdbuf();
  CHECK(SystemTrace::parse_text(trace_text.str()).size() == r.trace.size());
  std::ifstream log_in(*files.log);
  std::stringstream log_text;
  log_text << log_in.rdbuf();
  CHECK(parse_log(log_text.str()) == r.log);

  files.accounts = data_path("missing.txt");
  auto bad = run_scenario(files, quick());
  CHECK(bad.exit_code == 1);
  CHECK(bad.diagnostic.find("cannot open") != std::string::npos);
}
