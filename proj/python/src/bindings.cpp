#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "comet/architecture.hpp"
#include "comet/atm.hpp"
#include "comet/demo.hpp"

namespace py = pybind11;
using namespace comet;

namespace {

py::tuple event_tuple(const TraceEvent& e) {
  return py::make_tuple(e.seq, e.source, std::string(to_string(e.kind)), e.digest);
}

py::list trace_list(const SystemTrace& trace) {
  py::list out;
  for (const auto& e : trace.events()) out.append(event_tuple(e));
  return out;
}

SystemTrace trace_from_list(const std::vector<std::tuple<std::uint64_t, std::string, std::string, std::string>>& rows) {
  std::vector<TraceEvent> events;
  for (const auto& [seq, source, kind, digest] : rows) {
    auto parsed = parse_event_kind(kind);
    if (!parsed) throw py::value_error("unknown event kind '" + kind + "'");
    TraceEvent e;
    e.seq = seq;
    e.source = source;
    e.kind = *parsed;
    e.digest = digest;
    events.push_back(std::move(e));
  }
  return SystemTrace(std::move(events));
}

py::dict spec_dict(const ArchitectureSpec& spec) {
  py::list components;
  for (const auto& c : spec.components) {
    py::dict d;
    d["name"] = c.name;
    d["role"] = std::string(to_string(c.role));
    d["concurrency"] = std::string(to_string(c.concurrency));
    d["host"] = c.host ? py::cast(*c.host) : py::none();
    py::list bindings;
    for (const auto& b : c.bindings) {
      bindings.append(py::make_tuple(b.port, b.connector, std::string(to_string(b.end))));
    }
    d["bindings"] = bindings;
    py::dict params;
    for (const auto& [k, v] : c.params) params[py::str(k)] = v;
    d["params"] = params;
    components.append(d);
  }
  py::list connectors;
  for (const auto& c : spec.connectors) {
    py::dict d;
    d["name"] = c.name;
    d["kind"] = std::string(to_string(c.kind));
    d["capacity"] = c.capacity ? py::cast(*c.capacity) : py::none();
    d["message"] = c.message_type;
    connectors.append(d);
  }
  py::dict out;
  out["components"] = components;
  out["connectors"] = connectors;
  return out;
}

py::list findings_list(const std::vector<Finding>& findings) {
  py::list out;
  for (const auto& f : findings) {
    py::dict d;
    d["severity"] = std::string(to_string(f.severity));
    d["element"] = f.element;
    d["message"] = f.message;
    d["line"] = f.line;
    d["text"] = f.str();
    out.append(d);
  }
  return out;
}

py::dict report_dict(const atm::ConservationReport& r) {
  py::dict d;
  d["initial_total"] = r.initial_total;
  d["final_total"] = r.final_total;
  d["dispensed_total"] = r.dispensed_total;
  d["min_balance"] = r.min_balance;
  d["requests"] = r.requests;
  d["responses"] = r.responses;
  d["mismatches"] = r.mismatches;
  d["sessions"] = r.sessions;
  d["cards_returned"] = r.cards_returned;
  d["conserved"] = r.conserved();
  d["holds"] = r.holds();
  return d;
}

py::dict run_dict(const atm::RunResult& r) {
  py::dict d;
  d["exit_code"] = r.exit_code;
  d["timed_out"] = r.timed_out;
  d["diagnostic"] = r.diagnostic;
  d["trace"] = trace_list(r.trace);
  py::list log;
  for (const auto& line : r.log) log.append(py::make_tuple(line.seq, line.atm, line.event, line.detail));
  d["log"] = log;
  py::list receipts;
  for (const auto& receipt : r.receipts) receipts.append(receipt.text);
  d["receipts"] = receipts;
  d["balances"] = r.final_bank.accounts;
  d["report"] = report_dict(r.report);
  return d;
}

}  // namespace

PYBIND11_MODULE(_comet, m) {
  m.doc() = "Bindings for the comet runtime";

  auto error = py::register_exception<Error>(m, "CometError", PyExc_RuntimeError);
  py::register_exception<ParseError>(m, "ParseError", error.ptr());

  m.def("parse_spec", [](const std::string& text) { return spec_dict(parse_spec(text)); }, py::arg("text"),
        "Parse architecture text into plain dicts and lists.");
  m.def("normalize_spec", [](const std::string& text) { return print_spec(parse_spec(text)); }, py::arg("text"),
        "Parse and print back in canonical form.");
  m.def("validate", [](const std::string& text) { return findings_list(validate(parse_spec(text))); },
        py::arg("text"));

  m.def("demo_patterns", &demo_patterns);
  m.def(
      "run_demo",
      [](const std::string& pattern, std::size_t n) {
        DemoResult result;
        {
          py::gil_scoped_release release;
          result = run_demo(pattern, n);
        }
        py::dict d;
        d["trace"] = trace_list(result.trace);
        d["summary"] = result.summary;
        return d;
      },
      py::arg("pattern"), py::arg("n") = 3);

  m.def(
      "run_scenario",
      [](const std::string& arch, const std::string& accounts, const std::string& scenario, std::size_t atms,
         long timeout_ms, std::uint64_t seed, std::optional<std::string> trace, std::optional<std::string> log) {
        atm::ScenarioFiles files{arch, accounts, scenario, std::move(trace), std::move(log)};
        atm::RunSettings settings;
        settings.atms = atms;
        settings.timeout = std::chrono::milliseconds(timeout_ms);
        settings.seed = seed;
        atm::RunResult result;
        {
          py::gil_scoped_release release;
          result = atm::run_scenario(files, settings);
        }
        return run_dict(result);
      },
      py::arg("arch"), py::arg("accounts"), py::arg("scenario"), py::arg("atms") = 1, py::arg("timeout_ms") = 10'000,
      py::arg("seed") = 0, py::arg("trace") = py::none(), py::arg("log") = py::none());

  m.def("parse_trace", [](const std::string& text) { return trace_list(SystemTrace::parse_text(text)); },
        py::arg("text"));
  m.def("format_trace", [](const std::vector<std::tuple<std::uint64_t, std::string, std::string, std::string>>& rows) {
    return trace_from_list(rows).to_text();
  }, py::arg("events"));
}
