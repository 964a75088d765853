#include "comet/trace.hpp"

#include <array>
#include <charconv>
#include <ostream>
#include <sstream>

#include "comet/context.hpp"
#include "comet/errors.hpp"

namespace comet {

namespace {

constexpr std::array<std::pair<EventKind, std::string_view>, 11> kKindNames{{
    {EventKind::send_begin, "send_begin"},
    {EventKind::send_end, "send_end"},
    {EventKind::receive_begin, "receive_begin"},
    {EventKind::receive_end, "receive_end"},
    {EventKind::reply, "reply"},
    {EventKind::step, "step"},
    {EventKind::state_change, "state_change"},
    {EventKind::custom, "custom"},
    {EventKind::start, "start"},
    {EventKind::stop, "stop"},
    {EventKind::forced_stop, "forced_stop"},
}};

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t begin = 0;
  while (true) {
    auto tab = line.find('\t', begin);
    if (tab == std::string_view::npos) {
      fields.push_back(line.substr(begin));
      return fields;
    }
    fields.push_back(line.substr(begin, tab - begin));
    begin = tab + 1;
  }
}

}  // namespace

std::string_view to_string(EventKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "custom";
}

std::optional<EventKind> parse_event_kind(std::string_view text) {
  for (const auto& [k, name] : kKindNames) {
    if (name == text) return k;
  }
  return std::nullopt;
}

std::string sanitize_digest(std::string_view text, std::size_t max_length) {
  std::string out;
  out.reserve(std::min(text.size(), max_length));
  for (char c : text) {
    if (out.size() >= max_length) break;
    out.push_back(c == '\t' || c == '\n' || c == '\r' ? ' ' : c);
  }
  return out;
}

// SystemTrace

std::vector<TraceEvent> SystemTrace::filter(const std::function<bool(const TraceEvent&)>& pred) const {
  std::vector<TraceEvent> out;
  for (const auto& e : events_) {
    if (pred(e)) out.push_back(e);
  }
  return out;
}

std::vector<TraceEvent> SystemTrace::by_source(std::string_view source) const {
  return filter([&](const TraceEvent& e) { return e.source == source; });
}

std::vector<TraceEvent> SystemTrace::by_kind(EventKind kind) const {
  return filter([&](const TraceEvent& e) { return e.kind == kind; });
}

std::vector<TraceEvent> SystemTrace::by_envelope(EnvelopeId envelope) const {
  return filter([&](const TraceEvent& e) { return e.envelope == envelope; });
}

const TraceEvent* SystemTrace::find(const std::function<bool(const TraceEvent&)>& pred) const {
  for (const auto& e : events_) {
    if (pred(e)) return &e;
  }
  return nullptr;
}

void SystemTrace::write_text(std::ostream& out) const {
  for (const auto& e : events_) {
    out << e.seq << '\t' << e.source << '\t' << to_string(e.kind) << '\t' << e.digest << '\n';
  }
}

std::string SystemTrace::to_text() const {
  std::ostringstream out;
  write_text(out);
  return out.str();
}

SystemTrace SystemTrace::parse_text(std::string_view text) {
  std::vector<TraceEvent> events;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    auto nl = text.find('\n');
    auto line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    if (fields.size() != 4) throw SyntaxError("expected 4 tab-separated fields", line_no, 1);
    TraceEvent e;
    auto [ptr, ec] = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), e.seq);
    if (ec != std::errc{} || ptr != fields[0].data() + fields[0].size()) {
      throw SyntaxError("bad sequence number", line_no, 1);
    }
    e.source = std::string(fields[1]);
    auto kind = parse_event_kind(fields[2]);
    if (!kind) throw SyntaxError("unknown event kind '" + std::string(fields[2]) + "'", line_no, 1);
    e.kind = *kind;
    e.digest = std::string(fields[3]);
    events.push_back(std::move(e));
  }
  return SystemTrace(std::move(events));
}

// TraceSink

std::uint64_t TraceSink::emit(std::string source, EventKind kind, std::string digest,
                              EnvelopeId envelope) {
  TraceEvent event;
  event.source = std::move(source);
  event.kind = kind;
  event.digest = sanitize_digest(digest);
  event.envelope = envelope;
  return emit(std::move(event));
}

std::uint64_t TraceSink::emit(TraceEvent event) {
  event.context = current_context_id();
  std::uint64_t seq;
  {
    std::lock_guard lock(mutex_);
    if (closed_) throw SinkClosed();
    seq = next_seq_++;
    event.seq = seq;
    events_.push_back(std::move(event));
  }
  changed_.notify_all();
  return seq;
}

void TraceSink::close() {
  {
    std::lock_guard lock(mutex_);
    closed_ = true;
  }
  changed_.notify_all();
}

bool TraceSink::closed() const {
  std::lock_guard lock(mutex_);
  return closed_;
}

std::size_t TraceSink::size() const {
  std::lock_guard lock(mutex_);
  return events_.size();
}

SystemTrace TraceSink::snapshot() const {
  std::lock_guard lock(mutex_);
  return SystemTrace(events_);
}

bool TraceSink::await(const std::function<bool(const TraceEvent&)>& match, std::size_t count,
                      Clock::time_point deadline) const {
  std::unique_lock lock(mutex_);
  std::size_t scanned = 0;
  std::size_t found = 0;
  while (true) {
    for (; scanned < events_.size(); ++scanned) {
      if (match(events_[scanned])) ++found;
    }
    if (found >= count) return true;
    if (closed_) return false;
    if (changed_.wait_until(lock, deadline) == std::cv_status::timeout) {
      for (; scanned < events_.size(); ++scanned) {
        if (match(events_[scanned])) ++found;
      }
      return found >= count;
    }
  }
}

}  // namespace comet
