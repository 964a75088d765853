#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "comet/architecture.hpp"
#include "comet/components.hpp"

namespace comet::atm {

using Cents = std::int64_t;

// ---------------------------------------------------------------------------
// Bank data

struct Account {
  std::string id;
  Cents balance = 0;
};

struct CardRecord {
  std::string card_number;
  std::string pin;
  std::vector<std::string> account_ids;
};

/// Cards and accounts as loaded from an accounts file.
struct Bank {
  std::map<std::string, CardRecord> cards;
  std::map<std::string, Cents> accounts;

  Cents total() const;
};

/// Lines of the form `card <number> pin <pin> account <id> balance <cents>`.
/// A card listed twice gets both accounts; an account listed twice must
/// carry the same balance.
Bank parse_accounts(std::string_view text);
Bank load_accounts(const std::string& path);

// ---------------------------------------------------------------------------
// Messages

struct CardMessage {
  std::string card;
  std::uint64_t session = 0;
};

struct ReturnCard {
  std::uint64_t session = 0;
};

enum class PromptKind { pin, menu };

struct ScreenPrompt {
  std::uint64_t session = 0;
  PromptKind kind = PromptKind::pin;
};

enum class InputKind { pin, withdraw, balance, transfer, timeout };

struct ScreenInput {
  InputKind kind = InputKind::timeout;
  std::string pin;
  std::string account;
  std::string to_account;
  Cents amount = 0;

  friend bool operator==(const ScreenInput&, const ScreenInput&) = default;
};

struct CashOrder {
  std::uint64_t session = 0;
  Cents amount = 0;
};

struct Receipt {
  std::uint64_t session = 0;
  std::string text;
};

struct LogRecord {
  std::string atm;
  std::string event;
  std::string detail;
};

struct ValidatePin {
  std::string card;
  std::string pin;
};
struct Withdraw {
  std::string account;
  Cents amount = 0;
};
struct Transfer {
  std::string from;
  std::string to;
  Cents amount = 0;
};
struct BalanceQuery {
  std::string account;
};
using ServerRequest = std::variant<ValidatePin, Withdraw, Transfer, BalanceQuery>;

struct PinOk {
  std::vector<std::string> accounts;
};
struct PinBad {};
struct Ok {
  Cents new_balance = 0;
};
struct InsufficientFunds {};
struct Amount {
  Cents balance = 0;
};
struct Rejected {
  std::string reason;
};
using ServerResponse = std::variant<PinOk, PinBad, Ok, InsufficientFunds, Amount, Rejected>;

std::ostream& operator<<(std::ostream& out, const CardMessage& m);
std::ostream& operator<<(std::ostream& out, const ReturnCard& m);
std::ostream& operator<<(std::ostream& out, const ScreenPrompt& m);
std::ostream& operator<<(std::ostream& out, const ScreenInput& m);
std::ostream& operator<<(std::ostream& out, const CashOrder& m);
std::ostream& operator<<(std::ostream& out, const Receipt& m);
std::ostream& operator<<(std::ostream& out, const LogRecord& m);
std::ostream& operator<<(std::ostream& out, const ServerRequest& m);
std::ostream& operator<<(std::ostream& out, const ServerResponse& m);

/// Registers every message type tag used by the ATM architecture.
MessageTypes message_types();

// ---------------------------------------------------------------------------
// Scenarios

enum class Actor { customer, device };

struct ScenarioStep {
  Actor actor = Actor::customer;
  std::string action;
  std::vector<std::string> args;
  std::size_t line = 0;
};

/// Everything that happens between one card insertion and the next.
struct Session {
  std::uint64_t number = 0;
  std::string card;
  std::vector<ScenarioStep> steps;

  /// Touchscreen answers for this session, in prompt order.
  std::vector<ScreenInput> screen_inputs() const;
  bool takes_cash() const;
  bool takes_card() const;
};

struct Scenario {
  std::vector<Session> sessions;
};

/// Lines `<actor> <action> [args]`, `#` comments. Customer actions:
/// insert_card <card>, enter_pin <pin>, choose_withdraw <amount> [account],
/// choose_balance [account], choose_transfer <from> <to> <amount>,
/// take_cash, take_card. Device actions: screen_timeout.
Scenario parse_scenario(std::string_view text);
Scenario load_scenario(const std::string& path);

// ---------------------------------------------------------------------------
// State machine

enum class AtmState { idle, waiting_pin, validating, menu, processing, dispensing, printing, ejecting };

std::string_view to_string(AtmState state);
bool transition_allowed(AtmState from, AtmState to);

struct Transaction {
  std::uint64_t session = 0;
  std::string card;
  std::string entered_pin;
  std::string selected_account;
  Cents amount = 0;
  AtmState phase = AtmState::idle;
};

using TransactionEntity = PassiveEntity<std::optional<Transaction>>;

// ---------------------------------------------------------------------------
// Components

/// Bank server: answers requests from every ATM, one at a time, and owns the
/// account store.
class Server : public Behavior {
 public:
  explicit Server(Bank bank);

  void run(ComponentContext& self) override;
  ServerResponse handle(const ServerRequest& request);

  // Read after shutdown.
  const Bank& bank() const { return bank_; }
  Cents min_balance() const { return min_balance_; }
  std::uint64_t served() const { return served_; }

 private:
  void check(const std::string& account);

  Bank bank_;
  Cents min_balance_ = 0;
  std::uint64_t served_ = 0;
};

/// The state-dependent controller of one ATM.
class AtmController : public Behavior {
 public:
  void run(ComponentContext& self) override;

  AtmState state() const { return state_; }
  std::uint64_t sessions() const { return sessions_; }
  std::uint64_t requests() const { return requests_; }
  std::uint64_t responses() const { return responses_; }
  std::uint64_t mismatches() const { return mismatches_; }

 private:
  void go(ComponentContext& self, AtmState to);

  AtmState state_ = AtmState::idle;
  std::uint64_t sessions_ = 0;
  std::uint64_t requests_ = 0;
  std::uint64_t responses_ = 0;
  std::uint64_t mismatches_ = 0;
};

/// Raises card insertions from the scenario and waits for each card to come back.
class CardReader : public Behavior {
 public:
  CardReader(Scenario scenario, std::uint64_t seed, std::chrono::milliseconds jitter);
  void run(ComponentContext& self) override;

  std::uint64_t returned() const { return returned_; }

 private:
  Scenario scenario_;
  ScriptedEventSource source_;
  std::uint64_t returned_ = 0;
};

/// Answers prompts with the scenario's inputs for the prompt's session.
class Touchscreen : public Behavior {
 public:
  explicit Touchscreen(const Scenario& scenario);
  void run(ComponentContext& self) override;

  ScreenInput answer(const ScreenPrompt& prompt);

 private:
  std::map<std::uint64_t, std::vector<ScreenInput>> inputs_;
  std::map<std::uint64_t, std::size_t> cursor_;
};

class Printer : public Behavior {
 public:
  void run(ComponentContext& self) override;
  const std::vector<Receipt>& receipts() const { return receipts_; }

 private:
  std::vector<Receipt> receipts_;
};

class Dispenser : public Behavior {
 public:
  explicit Dispenser(const Scenario& scenario);
  void run(ComponentContext& self) override;

  Cents dispensed() const { return dispensed_; }
  const std::vector<CashOrder>& orders() const { return orders_; }

 private:
  std::map<std::uint64_t, bool> takes_cash_;
  std::vector<CashOrder> orders_;
  Cents dispensed_ = 0;
};

struct LogLine {
  std::uint64_t seq = 0;
  std::string atm;
  std::string event;
  std::string detail;

  friend bool operator==(const LogLine&, const LogLine&) = default;
};

/// Periodic log: each step moves every queued record into the append-only store.
class Log : public PeriodicTask {
 public:
  using PeriodicTask::PeriodicTask;

  const std::vector<LogLine>& lines() const { return lines_; }

 protected:
  void step(ComponentContext& self) override;
  void finished(ComponentContext& self) override;

 private:
  void drain(ComponentContext& self);

  std::optional<QueueReceiver<LogRecord>> inbox_;
  std::vector<LogLine> lines_;
};

std::string format_log(const std::vector<LogLine>& lines);
std::vector<LogLine> parse_log(std::string_view text);

/// Behavior factories for every component of the ATM architecture. Replica
/// `i` (param `replica`) runs `scenarios[i - 1]`; a single scenario serves all.
BehaviorRegistry behaviors(Bank bank, std::vector<Scenario> scenarios, std::uint64_t seed,
                           std::chrono::milliseconds jitter);

// ---------------------------------------------------------------------------
// Runs

struct RunSettings {
  std::size_t atms = 1;
  std::chrono::milliseconds timeout{10'000};
  std::uint64_t seed = 0;
  std::chrono::milliseconds jitter{2};
  std::chrono::milliseconds grace{1'000};
};

struct ConservationReport {
  Cents initial_total = 0;
  Cents final_total = 0;
  Cents dispensed_total = 0;
  Cents min_balance = 0;
  std::uint64_t requests = 0;
  std::uint64_t responses = 0;
  std::uint64_t mismatches = 0;
  std::uint64_t sessions = 0;
  std::uint64_t cards_returned = 0;

  bool conserved() const { return initial_total == final_total + dispensed_total; }
  bool holds() const {
    return conserved() && min_balance >= 0 && requests == responses && mismatches == 0 && cards_returned == sessions;
  }
  std::string str() const;
};

struct RunResult {
  int exit_code = 0;
  bool timed_out = false;
  std::string diagnostic;
  SystemTrace trace;
  std::vector<LogLine> log;
  std::vector<Receipt> receipts;
  Bank final_bank;
  ConservationReport report;
  TraceabilityMap traceability;
};

/// Instantiates `spec` replicated `settings.atms` times, runs every scenario
/// to completion or timeout and shuts down.
RunResult run(const ArchitectureSpec& spec, const Bank& bank, const std::vector<Scenario>& scenarios,
              const RunSettings& settings);

/// Multi-ATM run; `scenarios` holds one scenario per ATM.
ConservationReport multi_atm_run(const ArchitectureSpec& spec, const Bank& bank, const std::vector<Scenario>& scenarios,
                                 const RunSettings& settings);

struct ScenarioFiles {
  std::string arch;
  std::string accounts;
  std::string scenario;
  std::optional<std::string> trace;
  std::optional<std::string> log;
};

/// File-level entry point behind `comet run`. Writes the trace and log
/// artifacts when paths are given.
RunResult run_scenario(const ScenarioFiles& files, const RunSettings& settings);

}  // namespace comet::atm
