#include "comet/atm.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace comet::atm {

namespace {

std::vector<std::string_view> words(std::string_view line) {
  if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t begin = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > begin) out.push_back(line.substr(begin, i - begin));
  }
  return out;
}

template <typename F>
void for_each_line(std::string_view text, F&& f) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    auto nl = text.find('\n');
    f(text.substr(0, nl), line_no);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
  }
}

std::optional<Cents> parse_cents(std::string_view text) {
  Cents value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || value < 0) return std::nullopt;
  return value;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

template <class... Fs>
struct Overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

}  // namespace

// ---------------------------------------------------------------------------
// Bank data

Cents Bank::total() const {
  Cents sum = 0;
  for (const auto& [id, balance] : accounts) sum += balance;
  return sum;
}

Bank parse_accounts(std::string_view text) {
  Bank bank;
  for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    auto w = words(line);
    if (w.empty()) return;
    if (w.size() != 8 || w[0] != "card" || w[2] != "pin" || w[4] != "account" || w[6] != "balance") {
      throw SyntaxError("expected 'card <number> pin <pin> account <id> balance <cents>'", line_no, 1);
    }
    auto balance = parse_cents(w[7]);
    if (!balance) throw SyntaxError("balance must be a non-negative integer", line_no, 1);
    std::string card(w[1]);
    std::string account(w[5]);
    auto [it, fresh] = bank.cards.try_emplace(card, CardRecord{card, std::string(w[3]), {}});
    if (!fresh && it->second.pin != w[3]) throw SyntaxError("card " + card + " listed with two pins", line_no, 1);
    auto& ids = it->second.account_ids;
    if (std::find(ids.begin(), ids.end(), account) == ids.end()) ids.push_back(account);
    auto [acc, new_account] = bank.accounts.try_emplace(account, *balance);
    if (!new_account && acc->second != *balance) {
      throw SyntaxError("account " + account + " listed with two balances", line_no, 1);
    }
  });
  return bank;
}

Bank load_accounts(const std::string& path) { return parse_accounts(read_file(path)); }

// ---------------------------------------------------------------------------
// Messages

std::ostream& operator<<(std::ostream& out, const CardMessage& m) {
  return out << "card=" << m.card << " session=" << m.session;
}

std::ostream& operator<<(std::ostream& out, const ReturnCard& m) { return out << "return_card session=" << m.session; }

std::ostream& operator<<(std::ostream& out, const ScreenPrompt& m) {
  return out << "prompt=" << (m.kind == PromptKind::pin ? "pin" : "menu") << " session=" << m.session;
}

std::ostream& operator<<(std::ostream& out, const ScreenInput& m) {
  switch (m.kind) {
    case InputKind::pin:
      return out << "pin ****";
    case InputKind::withdraw:
      return out << "withdraw " << m.amount << (m.account.empty() ? "" : " from " + m.account);
    case InputKind::balance:
      return out << "balance" << (m.account.empty() ? "" : " " + m.account);
    case InputKind::transfer:
      return out << "transfer " << m.amount << " " << m.account << "->" << m.to_account;
    case InputKind::timeout:
      return out << "timeout";
  }
  return out;
}

std::ostream& operator<<(std::ostream& out, const CashOrder& m) {
  return out << "dispense " << m.amount << " session=" << m.session;
}

std::ostream& operator<<(std::ostream& out, const Receipt& m) {
  return out << "receipt session=" << m.session << " " << m.text;
}

std::ostream& operator<<(std::ostream& out, const LogRecord& m) {
  return out << m.atm << " " << m.event << " " << m.detail;
}

std::ostream& operator<<(std::ostream& out, const ServerRequest& m) {
  std::visit(Overloaded{
                 [&](const ValidatePin& r) { out << "validate_pin card=" << r.card; },
                 [&](const Withdraw& r) { out << "withdraw " << r.account << " " << r.amount; },
                 [&](const Transfer& r) { out << "transfer " << r.from << "->" << r.to << " " << r.amount; },
                 [&](const BalanceQuery& r) { out << "balance " << r.account; },
             },
             m);
  return out;
}

std::ostream& operator<<(std::ostream& out, const ServerResponse& m) {
  std::visit(Overloaded{
                 [&](const PinOk& r) {
                   out << "pin_ok";
                   for (const auto& a : r.accounts) out << " " << a;
                 },
                 [&](const PinBad&) { out << "pin_bad"; },
                 [&](const Ok& r) { out << "ok " << r.new_balance; },
                 [&](const InsufficientFunds&) { out << "insufficient_funds"; },
                 [&](const Amount& r) { out << "amount " << r.balance; },
                 [&](const Rejected& r) { out << "rejected " << r.reason; },
             },
             m);
  return out;
}

MessageTypes message_types() {
  MessageTypes types;
  types.add<CardMessage>("card");
  types.add<ReturnCard>("card_return");
  types.add<ScreenPrompt, ScreenInput>("screen");
  types.add<Receipt>("receipt");
  types.add<CashOrder>("cash");
  types.add<LogRecord>("log");
  types.add<ServerRequest, ServerResponse>("bank");
  return types;
}

// ---------------------------------------------------------------------------
// Scenarios

std::vector<ScreenInput> Session::screen_inputs() const {
  std::vector<ScreenInput> out;
  for (const auto& s : steps) {
    ScreenInput in;
    if (s.action == "enter_pin") {
      in.kind = InputKind::pin;
      in.pin = s.args.at(0);
    } else if (s.action == "choose_withdraw") {
      in.kind = InputKind::withdraw;
      in.amount = *parse_cents(s.args.at(0));
      if (s.args.size() > 1) in.account = s.args[1];
    } else if (s.action == "choose_balance") {
      in.kind = InputKind::balance;
      if (!s.args.empty()) in.account = s.args[0];
    } else if (s.action == "choose_transfer") {
      in.kind = InputKind::transfer;
      in.account = s.args.at(0);
      in.to_account = s.args.at(1);
      in.amount = *parse_cents(s.args.at(2));
    } else if (s.action == "screen_timeout") {
      in.kind = InputKind::timeout;
    } else {
      continue;
    }
    out.push_back(std::move(in));
  }
  return out;
}

bool Session::takes_cash() const {
  return std::any_of(steps.begin(), steps.end(), [](const auto& s) { return s.action == "take_cash"; });
}

bool Session::takes_card() const {
  return std::any_of(steps.begin(), steps.end(), [](const auto& s) { return s.action == "take_card"; });
}

Scenario parse_scenario(std::string_view text) {
  struct Shape {
    Actor actor;
    std::size_t min_args;
    std::size_t max_args;
    std::size_t amount_arg;  // index of an amount argument, or npos
  };
  constexpr auto none = std::numeric_limits<std::size_t>::max();
  static const std::map<std::string, Shape, std::less<>> shapes{
      {"insert_card", {Actor::customer, 1, 1, none}},     {"enter_pin", {Actor::customer, 1, 1, none}},
      {"choose_withdraw", {Actor::customer, 1, 2, 0}},    {"choose_balance", {Actor::customer, 0, 1, none}},
      {"choose_transfer", {Actor::customer, 3, 3, 2}},    {"take_cash", {Actor::customer, 0, 0, none}},
      {"take_card", {Actor::customer, 0, 0, none}},       {"screen_timeout", {Actor::device, 0, 0, none}},
  };

  Scenario scenario;
  for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    auto w = words(line);
    if (w.empty()) return;
    Actor actor;
    if (w[0] == "customer") {
      actor = Actor::customer;
    } else if (w[0] == "device") {
      actor = Actor::device;
    } else {
      throw SyntaxError("actor must be 'customer' or 'device', found '" + std::string(w[0]) + "'", line_no, 1);
    }
    if (w.size() < 2) throw SyntaxError("missing action", line_no, 1);
    auto shape = shapes.find(w[1]);
    if (shape == shapes.end() || shape->second.actor != actor) {
      throw SyntaxError("unknown " + std::string(w[0]) + " action '" + std::string(w[1]) + "'", line_no, 1);
    }
    std::size_t nargs = w.size() - 2;
    if (nargs < shape->second.min_args || nargs > shape->second.max_args) {
      throw SyntaxError("wrong number of arguments for '" + std::string(w[1]) + "'", line_no, 1);
    }
    if (shape->second.amount_arg != none && !parse_cents(w[2 + shape->second.amount_arg])) {
      throw SyntaxError("amount must be a non-negative integer", line_no, 1);
    }
    ScenarioStep step{actor, std::string(w[1]), {}, line_no};
    for (std::size_t i = 2; i < w.size(); ++i) step.args.emplace_back(w[i]);
    if (step.action == "insert_card") {
      scenario.sessions.push_back(Session{scenario.sessions.size() + 1, step.args[0], {}});
    } else if (scenario.sessions.empty()) {
      throw SyntaxError("'" + step.action + "' before any insert_card", line_no, 1);
    }
    scenario.sessions.back().steps.push_back(std::move(step));
  });
  return scenario;
}

Scenario load_scenario(const std::string& path) { return parse_scenario(read_file(path)); }

// ---------------------------------------------------------------------------
// State machine

std::string_view to_string(AtmState state) {
  switch (state) {
    case AtmState::idle: return "idle";
    case AtmState::waiting_pin: return "waiting_pin";
    case AtmState::validating: return "validating";
    case AtmState::menu: return "menu";
    case AtmState::processing: return "processing";
    case AtmState::dispensing: return "dispensing";
    case AtmState::printing: return "printing";
    case AtmState::ejecting: return "ejecting";
  }
  return "?";
}

bool transition_allowed(AtmState from, AtmState to) {
  using S = AtmState;
  if (to == S::ejecting) return from != S::idle && from != S::ejecting;
  switch (from) {
    case S::idle: return to == S::waiting_pin;
    case S::waiting_pin: return to == S::validating;
    case S::validating: return to == S::menu;
    case S::menu: return to == S::processing;
    case S::processing: return to == S::dispensing || to == S::printing;
    case S::dispensing: return to == S::printing;
    case S::printing: return false;
    case S::ejecting: return to == S::idle;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Server

Server::Server(Bank bank) : bank_(std::move(bank)) {
  if (!bank_.accounts.empty()) {
    min_balance_ = bank_.accounts.begin()->second;
    for (const auto& [id, balance] : bank_.accounts) min_balance_ = std::min(min_balance_, balance);
  }
}

void Server::check(const std::string& account) {
  Cents balance = bank_.accounts.at(account);
  if (balance < 0) throw std::logic_error("account " + account + " overdrawn");
  min_balance_ = std::min(min_balance_, balance);
}

ServerResponse Server::handle(const ServerRequest& request) {
  ++served_;
  auto& accounts = bank_.accounts;
  return std::visit(
      Overloaded{
          [&](const ValidatePin& r) -> ServerResponse {
            auto it = bank_.cards.find(r.card);
            if (it == bank_.cards.end() || it->second.pin != r.pin) return PinBad{};
            return PinOk{it->second.account_ids};
          },
          [&](const Withdraw& r) -> ServerResponse {
            auto it = accounts.find(r.account);
            if (it == accounts.end()) return Rejected{"unknown account " + r.account};
            if (r.amount <= 0) return Rejected{"invalid amount"};
            if (it->second < r.amount) return InsufficientFunds{};
            it->second -= r.amount;
            check(r.account);
            return Ok{it->second};
          },
          [&](const Transfer& r) -> ServerResponse {
            auto from = accounts.find(r.from);
            auto to = accounts.find(r.to);
            if (from == accounts.end()) return Rejected{"unknown account " + r.from};
            if (to == accounts.end()) return Rejected{"unknown account " + r.to};
            if (from == to) return Rejected{"same account"};
            if (r.amount <= 0) return Rejected{"invalid amount"};
            if (from->second < r.amount) return InsufficientFunds{};
            from->second -= r.amount;
            to->second += r.amount;
            check(r.from);
            check(r.to);
            return Ok{from->second};
          },
          [&](const BalanceQuery& r) -> ServerResponse {
            auto it = accounts.find(r.account);
            if (it == accounts.end()) return Rejected{"unknown account " + r.account};
            return Amount{it->second};
          },
      },
      request);
}

void Server::run(ComponentContext& self) {
  auto requests = self.ports().take<CallbackReceiver<ServerRequest, ServerResponse>>("requests");
  while (true) {
    requests.serve([&](ServerRequest request) { return handle(request); });
    self.step("served " + std::to_string(served_));
  }
}

// ---------------------------------------------------------------------------
// ATM controller

namespace {

struct AtmPorts {
  BufferReceiver<CardMessage> card_in;
  BufferSender<ReturnCard> card_out;
  ReplySender<ScreenPrompt, ScreenInput> screen;
  BufferSender<Receipt> printer;
  BufferSender<CashOrder> dispenser;
  QueueSender<LogRecord> log;
  CallbackSender<ServerRequest, ServerResponse> bank;
};

AtmPorts take_ports(Ports& ports) {
  return AtmPorts{
      ports.take<BufferReceiver<CardMessage>>("card_in"),
      ports.take<BufferSender<ReturnCard>>("card_out"),
      ports.take<ReplySender<ScreenPrompt, ScreenInput>>("screen"),
      ports.take<BufferSender<Receipt>>("printer"),
      ports.take<BufferSender<CashOrder>>("dispenser"),
      ports.take<QueueSender<LogRecord>>("log"),
      ports.take<CallbackSender<ServerRequest, ServerResponse>>("bank"),
  };
}

}  // namespace

void AtmController::go(ComponentContext& self, AtmState to) {
  if (!transition_allowed(state_, to)) {
    throw std::logic_error("illegal transition " + std::string(to_string(state_)) + "->" + std::string(to_string(to)));
  }
  self.state_change(to_string(state_), to_string(to));
  state_ = to;
  if (auto* tx = self.find_passive<TransactionEntity>()) {
    tx->access([&](std::optional<Transaction>& t) {
      if (t) t->phase = to;
    });
  }
}

void AtmController::run(ComponentContext& self) {
  auto io = take_ports(self.ports());
  auto* tx = self.find_passive<TransactionEntity>();
  if (tx == nullptr) throw PortError("ATM '" + self.name() + "' hosts no transaction entity");
  const std::string atm_id = self.name();

  auto log = [&](std::string event, std::string detail) {
    io.log.send(LogRecord{atm_id, std::move(event), std::move(detail)});
  };
  auto ask = [&](ServerRequest request) -> std::optional<ServerResponse> {
    ++requests_;
    io.bank.send(std::move(request));
    auto answer = io.bank.accept();
    ++responses_;
    if (!answer.has_value()) {
      log("server_error", answer.error().message);
      return std::nullopt;
    }
    return answer.value();
  };
  auto print = [&](std::uint64_t session, std::string text) {
    go(self, AtmState::printing);
    io.printer.send(Receipt{session, std::move(text)});
  };

  // One card session; returning ends it and the card is ejected.
  auto session = [&](const CardMessage& card) {
    auto pin = io.screen.request(ScreenPrompt{card.session, PromptKind::pin});
    if (!pin.has_value() || pin.value().kind != InputKind::pin) {
      log("screen_timeout", "prompt=pin");
      return;
    }
    tx->access([&](std::optional<Transaction>& t) { t->entered_pin = pin.value().pin; });

    go(self, AtmState::validating);
    auto validated = ask(ValidatePin{card.card, pin.value().pin});
    if (!validated) return;
    if (std::holds_alternative<PinBad>(*validated)) {
      log("pin_bad", "card=" + card.card);
      return;
    }
    const auto* ok = std::get_if<PinOk>(&*validated);
    if (ok == nullptr) {
      ++mismatches_;
      return;
    }
    log("pin_ok", "card=" + card.card);

    go(self, AtmState::menu);
    auto choice_reply = io.screen.request(ScreenPrompt{card.session, PromptKind::menu});
    if (!choice_reply.has_value() || choice_reply.value().kind == InputKind::timeout ||
        choice_reply.value().kind == InputKind::pin) {
      log("screen_timeout", "prompt=menu");
      return;
    }
    const auto choice = choice_reply.value();
    std::string account = choice.account;
    if (account.empty() && !ok->accounts.empty()) account = ok->accounts.front();
    tx->access([&](std::optional<Transaction>& t) {
      t->selected_account = account;
      t->amount = choice.amount;
    });

    go(self, AtmState::processing);
    switch (choice.kind) {
      case InputKind::withdraw: {
        auto answer = ask(Withdraw{account, choice.amount});
        if (!answer) return;
        if (const auto* done = std::get_if<Ok>(&*answer)) {
          log("withdraw_ok", "account=" + account + " amount=" + std::to_string(choice.amount) +
                                 " balance=" + std::to_string(done->new_balance));
          go(self, AtmState::dispensing);
          io.dispenser.send(CashOrder{card.session, choice.amount});
          print(card.session, "withdraw " + std::to_string(choice.amount) + " from " + account + " balance " +
                                  std::to_string(done->new_balance));
        } else if (std::holds_alternative<InsufficientFunds>(*answer)) {
          log("withdraw_denied", "account=" + account + " insufficient_funds");
          print(card.session, "withdraw denied: insufficient funds");
        } else if (const auto* no = std::get_if<Rejected>(&*answer)) {
          log("withdraw_denied", "account=" + account + " " + no->reason);
          print(card.session, "withdraw denied: " + no->reason);
        } else {
          ++mismatches_;
        }
        return;
      }
      case InputKind::balance: {
        auto answer = ask(BalanceQuery{account});
        if (!answer) return;
        if (const auto* amount = std::get_if<Amount>(&*answer)) {
          log("balance", "account=" + account + " balance=" + std::to_string(amount->balance));
          print(card.session, "balance " + account + " " + std::to_string(amount->balance));
        } else if (const auto* no = std::get_if<Rejected>(&*answer)) {
          log("balance_denied", no->reason);
          print(card.session, "balance denied: " + no->reason);
        } else {
          ++mismatches_;
        }
        return;
      }
      case InputKind::transfer: {
        auto answer = ask(Transfer{choice.account, choice.to_account, choice.amount});
        if (!answer) return;
        std::string what = std::to_string(choice.amount) + " " + choice.account + "->" + choice.to_account;
        if (const auto* done = std::get_if<Ok>(&*answer)) {
          log("transfer_ok", what + " balance=" + std::to_string(done->new_balance));
          print(card.session, "transfer " + what + " balance " + std::to_string(done->new_balance));
        } else if (std::holds_alternative<InsufficientFunds>(*answer)) {
          log("transfer_denied", what + " insufficient_funds");
          print(card.session, "transfer denied: insufficient funds");
        } else if (const auto* no = std::get_if<Rejected>(&*answer)) {
          log("transfer_denied", what + " " + no->reason);
          print(card.session, "transfer denied: " + no->reason);
        } else {
          ++mismatches_;
        }
        return;
      }
      case InputKind::pin:
      case InputKind::timeout:
        return;
    }
  };

  while (true) {
    auto card = io.card_in.receive();
    go(self, AtmState::waiting_pin);
    tx->access([&](std::optional<Transaction>& t) {
      t = Transaction{card.session, card.card, {}, {}, 0, AtmState::waiting_pin};
    });
    log("card_inserted", "card=" + card.card + " session=" + std::to_string(card.session));
    session(card);
    go(self, AtmState::ejecting);
    io.card_out.send(ReturnCard{card.session});
    log("card_returned", "session=" + std::to_string(card.session));
    tx->access([](std::optional<Transaction>& t) { t.reset(); });
    ++sessions_;
    go(self, AtmState::idle);
  }
}

// ---------------------------------------------------------------------------
// Devices

namespace {

ScriptedEventSource insertions(const Scenario& scenario, std::uint64_t seed, std::chrono::milliseconds jitter) {
  std::vector<SourceEvent> events;
  for (const auto& s : scenario.sessions) {
    events.push_back({std::chrono::milliseconds{0}, "insert_card", {s.card, std::to_string(s.number)}});
  }
  return ScriptedEventSource(std::move(events), seed, jitter);
}

}  // namespace

CardReader::CardReader(Scenario scenario, std::uint64_t seed, std::chrono::milliseconds jitter)
    : scenario_(std::move(scenario)), source_(insertions(scenario_, seed, jitter)) {}

void CardReader::run(ComponentContext& self) {
  auto insert = self.ports().take<BufferSender<CardMessage>>("insert");
  auto eject = self.ports().take<BufferReceiver<ReturnCard>>("eject");
  std::size_t index = 0;
  while (auto event = source_.next()) {
    const auto& session = scenario_.sessions.at(index++);
    self.step("insert_card " + session.card);
    insert.send(CardMessage{session.card, session.number});
    auto returned = eject.receive();
    ++returned_;
    self.step((session.takes_card() ? "card_taken session=" : "card_returned session=") +
              std::to_string(returned.session));
  }
}

Touchscreen::Touchscreen(const Scenario& scenario) {
  for (const auto& s : scenario.sessions) inputs_[s.number] = s.screen_inputs();
}

ScreenInput Touchscreen::answer(const ScreenPrompt& prompt) {
  auto it = inputs_.find(prompt.session);
  if (it == inputs_.end()) return ScreenInput{};
  auto& at = cursor_[prompt.session];
  if (at >= it->second.size()) return ScreenInput{};
  return it->second[at++];
}

void Touchscreen::run(ComponentContext& self) {
  auto requests = self.ports().take<ReplyReceiver<ScreenPrompt, ScreenInput>>("requests");
  while (true) {
    requests.serve([&](ScreenPrompt prompt) { return answer(prompt); });
    self.step();
  }
}

void Printer::run(ComponentContext& self) {
  auto in = self.ports().take<BufferReceiver<Receipt>>("in");
  while (true) {
    receipts_.push_back(in.receive());
    self.step("printed session=" + std::to_string(receipts_.back().session));
  }
}

Dispenser::Dispenser(const Scenario& scenario) {
  for (const auto& s : scenario.sessions) takes_cash_[s.number] = s.takes_cash();
}

void Dispenser::run(ComponentContext& self) {
  auto in = self.ports().take<BufferReceiver<CashOrder>>("in");
  while (true) {
    auto order = in.receive();
    dispensed_ += order.amount;
    orders_.push_back(order);
    self.step((takes_cash_[order.session] ? "cash_taken " : "cash_dispensed ") + std::to_string(order.amount));
  }
}

// ---------------------------------------------------------------------------
// Log

void Log::drain(ComponentContext& self) {
  if (!inbox_) inbox_.emplace(self.ports().take<QueueReceiver<LogRecord>>("in"));
  while (auto record = inbox_->try_receive()) {
    lines_.push_back(LogLine{lines_.size() + 1, record->atm, record->event, record->detail});
  }
}

void Log::step(ComponentContext& self) { drain(self); }

void Log::finished(ComponentContext& self) { drain(self); }

std::string format_log(const std::vector<LogLine>& lines) {
  std::string out;
  for (const auto& l : lines) {
    out += std::to_string(l.seq) + '\t' + l.atm + '\t' + l.event + '\t' + l.detail + '\n';
  }
  return out;
}

std::vector<LogLine> parse_log(std::string_view text) {
  std::vector<LogLine> out;
  for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    if (line.empty()) return;
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    for (int i = 0; i < 3; ++i) {
      auto tab = line.find('\t', start);
      if (tab == std::string_view::npos) throw SyntaxError("expected four tab-separated fields", line_no, 1);
      fields.push_back(line.substr(start, tab - start));
      start = tab + 1;
    }
    fields.push_back(line.substr(start));
    auto seq = parse_cents(fields[0]);
    if (!seq) throw SyntaxError("bad sequence number", line_no, 1);
    out.push_back(LogLine{static_cast<std::uint64_t>(*seq), std::string(fields[1]), std::string(fields[2]),
                          std::string(fields[3])});
  });
  return out;
}

// ---------------------------------------------------------------------------
// Registry

BehaviorRegistry behaviors(Bank bank, std::vector<Scenario> scenarios, std::uint64_t seed,
                           std::chrono::milliseconds jitter) {
  if (scenarios.empty()) throw std::invalid_argument("at least one scenario is required");
  auto shared = std::make_shared<std::vector<Scenario>>(std::move(scenarios));
  auto replica = [](const ComponentSpec& spec) -> std::size_t { return std::stoul(spec.param("replica", "1")); };
  auto scenario_for = [shared, replica](const ComponentSpec& spec) -> const Scenario& {
    if (shared->size() == 1) return shared->front();
    auto index = replica(spec);
    if (index < 1 || index > shared->size()) throw std::out_of_range("no scenario for replica " + spec.name);
    return (*shared)[index - 1];
  };

  BehaviorRegistry registry;
  registry.add("server", [bank](const ComponentSpec&) { return std::make_shared<Server>(bank); });
  registry.add("atm", [](const ComponentSpec&) { return std::make_shared<AtmController>(); });
  registry.add("transaction", [](const ComponentSpec&) { return std::make_shared<TransactionEntity>(); });
  registry.add("card_reader", [=](const ComponentSpec& spec) {
    return std::make_shared<CardReader>(scenario_for(spec), seed + replica(spec), jitter);
  });
  registry.add("touchscreen", [=](const ComponentSpec& spec) { return std::make_shared<Touchscreen>(scenario_for(spec)); });
  registry.add("printer", [](const ComponentSpec&) { return std::make_shared<Printer>(); });
  registry.add("dispenser", [=](const ComponentSpec& spec) { return std::make_shared<Dispenser>(scenario_for(spec)); });
  registry.add("log", [](const ComponentSpec& spec) {
    return std::make_shared<Log>(std::chrono::milliseconds{std::stol(spec.param("period_ms", "50"))});
  });
  return registry;
}

// ---------------------------------------------------------------------------
// Runs

std::string ConservationReport::str() const {
  std::ostringstream out;
  out << "initial_total=" << initial_total << " final_total=" << final_total << " dispensed_total=" << dispensed_total
      << " min_balance=" << min_balance << " requests=" << requests << " responses=" << responses
      << " mismatches=" << mismatches << " sessions=" << sessions << " cards_returned=" << cards_returned
      << (holds() ? " invariants_ok" : " invariants_violated");
  return out.str();
}

RunResult run(const ArchitectureSpec& spec, const Bank& bank, const std::vector<Scenario>& scenarios,
              const RunSettings& settings) {
  if (settings.atms == 0) throw std::invalid_argument("at least one ATM is required");
  if (scenarios.size() != 1 && scenarios.size() != settings.atms) {
    throw std::invalid_argument("need one scenario, or one per ATM");
  }

  auto design = replicate(spec, settings.atms);
  auto deployment = instantiate(design, behaviors(bank, scenarios, settings.seed, settings.jitter), message_types());
  auto& system = deployment.system();

  std::set<std::string> atm_sources;
  std::size_t expected_sessions = 0;
  for (const auto& c : design.components) {
    if (BehaviorRegistry::key_of(c) != "atm") continue;
    atm_sources.insert(deployment.component(c.name).component_id.str());
    auto replica = std::stoul(c.param("replica", "1"));
    expected_sessions += scenarios.size() == 1 ? scenarios[0].sessions.size() : scenarios.at(replica - 1).sessions.size();
  }

  RunResult result;
  result.traceability = deployment.traceability();
  deployment.start();
  bool completed = system.trace_sink()->await(
      [&](const TraceEvent& e) {
        return e.kind == EventKind::state_change && e.digest == "ejecting->idle" && atm_sources.count(e.source);
      },
      expected_sessions, TraceSink::Clock::now() + settings.timeout);
  if (!completed) {
    result.timed_out = true;
    system.mark_unfinished_forced();
  }
  result.trace = deployment.shutdown(settings.grace);

  auto& report = result.report;
  report.initial_total = bank.total();
  for (const auto& c : design.components) {
    const auto& h = deployment.component(c.name);
    if (auto fault = system.fault(h); fault && result.diagnostic.empty()) {
      result.diagnostic = "component '" + c.name + "' failed: " + *fault;
    }
    auto key = BehaviorRegistry::key_of(c);
    if (key == "server") {
      const auto& server = system.behavior_as<Server>(h);
      result.final_bank = server.bank();
      report.final_total = server.bank().total();
      report.min_balance = server.min_balance();
    } else if (key == "atm") {
      const auto& atm = system.behavior_as<AtmController>(h);
      report.requests += atm.requests();
      report.responses += atm.responses();
      report.mismatches += atm.mismatches();
      report.sessions += atm.sessions();
    } else if (key == "dispenser") {
      report.dispensed_total += system.behavior_as<Dispenser>(h).dispensed();
    } else if (key == "card_reader") {
      report.cards_returned += system.behavior_as<CardReader>(h).returned();
    } else if (key == "printer") {
      const auto& receipts = system.behavior_as<Printer>(h).receipts();
      result.receipts.insert(result.receipts.end(), receipts.begin(), receipts.end());
    } else if (key == "log") {
      const auto& lines = system.behavior_as<Log>(h).lines();
      result.log.insert(result.log.end(), lines.begin(), lines.end());
    }
  }
  if (result.final_bank.accounts.empty()) {
    result.final_bank = bank;
    report.final_total = bank.total();
  }
  std::stable_sort(result.log.begin(), result.log.end(),
                   [](const LogLine& a, const LogLine& b) { return a.atm < b.atm; });

  if (result.timed_out) {
    result.exit_code = 1;
    result.diagnostic = "timed out after " + std::to_string(settings.timeout.count()) + " ms; " +
                        std::to_string(report.sessions) + " of " + std::to_string(expected_sessions) +
                        " sessions completed" + (result.diagnostic.empty() ? "" : "; " + result.diagnostic);
  } else if (!result.diagnostic.empty()) {
    result.exit_code = 1;
  } else if (!report.holds()) {
    result.exit_code = 1;
    result.diagnostic = "invariant violated: " + report.str();
  }
  return result;
}

ConservationReport multi_atm_run(const ArchitectureSpec& spec, const Bank& bank, const std::vector<Scenario>& scenarios,
                                 const RunSettings& settings) {
  auto s = settings;
  s.atms = scenarios.size();
  return run(spec, bank, scenarios, s).report;
}

RunResult run_scenario(const ScenarioFiles& files, const RunSettings& settings) {
  RunResult result;
  try {
    auto spec = load_spec(files.arch);
    auto findings = validate(spec);
    if (error_count(findings) > 0) {
      result.exit_code = 1;
      for (const auto& f : findings) {
        if (f.severity == Severity::error) result.diagnostic += f.str() + "\n";
      }
      return result;
    }
    auto bank = load_accounts(files.accounts);
    auto scenario = load_scenario(files.scenario);
    result = run(spec, bank, {scenario}, settings);
  } catch (const std::exception& e) {
    result.exit_code = 1;
    result.diagnostic = e.what();
    return result;
  }
  if (files.trace) {
    std::ofstream out(*files.trace);
    if (!out) throw Error("cannot write '" + *files.trace + "'");
    result.trace.write_text(out);
  }
  if (files.log) {
    std::ofstream out(*files.log);
    if (!out) throw Error("cannot write '" + *files.log + "'");
    out << format_log(result.log);
  }
  return result;
}

}  // namespace comet::atm
