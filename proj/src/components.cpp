#include "comet/components.hpp"

#include <charconv>
#include <sstream>

namespace comet {

namespace {

constexpr std::size_t kMailboxCapacity = 64;

std::vector<std::string_view> words(std::string_view line) {
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

}  // namespace

PeriodicTask::PeriodicTask(Duration period)
    : period_(period),
      mailbox_(std::make_shared<QueueConnector<Command>>(ConnectorOptions{nullptr, kMailboxCapacity, "mailbox"})),
      inbox_(mailbox_->receiver()) {
  if (period.count() <= 0) throw std::invalid_argument("period must be positive");
}

void PeriodicTask::post(std::function<void()> query) {
  auto sender = mailbox_->sender();
  sender.send(Command{std::move(query)});
}

void PeriodicTask::notify(ComponentContext& self, BufferSender<Tick>& pacemaker) {
  if (done_) return;
  step(self);
  ++steps_;
  self.step("step " + std::to_string(steps_));
  if (!done_) pacemaker.send(Tick{});
}

void PeriodicTask::run(ComponentContext& self) {
  auto schedule = make_buffer<Tick>();
  auto pacer = std::make_shared<Pacemaker>(period_, std::move(schedule.receiver), mailbox_->sender());
  auto& companion = self.spawn_companion("pacemaker", [pacer] {
    try {
      pacer->run();
    } catch (const Stopped&) {
    }
  });
  pacemaker_context_.store(companion.id());

  auto wrap_up = [&] {
    try {
      finished(self);
    } catch (...) {
    }
    // Close first so no query can slip in after the drain.
    mailbox_->close();
    while (auto cmd = inbox_.try_receive()) {
      if (auto* q = std::get_if<std::function<void()>>(&*cmd)) (*q)();
    }
  };

  try {
    // The first step runs right away; later ones one period after the
    // previous step completed.
    mailbox_->sender().send(Command{Tick{}});
    while (true) {
      auto cmd = inbox_.receive();
      if (std::holds_alternative<Tick>(cmd)) {
        notify(self, schedule.sender);
      } else {
        std::get<std::function<void()>>(cmd)();
      }
    }
  } catch (...) {
    wrap_up();
    throw;
  }
}

void Pacemaker::run() {
  while (true) {
    requests_.receive();
    sleep_for(period_);
    target_.send(PeriodicTask::Command{PeriodicTask::Tick{}});
  }
}

ScriptedEventSource ScriptedEventSource::parse(std::string_view text, std::uint64_t seed,
                                               std::chrono::milliseconds jitter) {
  std::vector<SourceEvent> events;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    auto nl = text.find('\n');
    auto line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    auto fields = words(line);
    if (fields.empty()) continue;
    if (fields.size() < 2) throw SyntaxError("expected '<delay_ms> <event_name> [<arg>...]'", line_no, 1);
    long long delay = 0;
    auto [ptr, ec] = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), delay);
    if (ec != std::errc{} || ptr != fields[0].data() + fields[0].size() || delay < 0) {
      throw SyntaxError("bad delay '" + std::string(fields[0]) + "'", line_no, 1);
    }
    SourceEvent event{std::chrono::milliseconds{delay}, std::string(fields[1]), {}};
    for (std::size_t i = 2; i < fields.size(); ++i) event.args.emplace_back(fields[i]);
    events.push_back(std::move(event));
  }
  return ScriptedEventSource(std::move(events), seed, jitter);
}

std::string ScriptedEventSource::to_text() const {
  std::ostringstream out;
  for (const auto& e : events_) {
    out << e.delay.count() << ' ' << e.name;
    for (const auto& a : e.args) out << ' ' << a;
    out << '\n';
  }
  return out.str();
}

std::optional<SourceEvent> ScriptedEventSource::next() {
  if (cursor_ >= events_.size()) return std::nullopt;
  const auto& event = events_[cursor_++];
  auto delay = event.delay;
  if (jitter_.count() > 0) {
    std::uniform_int_distribution<long long> extra(0, jitter_.count());
    delay += std::chrono::milliseconds{extra(rng_)};
  }
  if (delay.count() > 0) sleep_for(delay);
  return event;
}

}  // namespace comet
