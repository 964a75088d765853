#include <CLI11.hpp>

#include <iostream>

#include "comet/architecture.hpp"
#include "comet/atm.hpp"
#include "comet/demo.hpp"

namespace {

constexpr const char* kGrammar = R"(usage:
  comet run --arch F --accounts F --scenario F [--atms N] [--timeout-ms T]
            [--trace F] [--seed S] [--log F]
  comet validate FILE
  comet demo --pattern buffer|queue|reply|callback|periodic [--n N]
)";

int validate_file(const std::string& path) {
  comet::ArchitectureSpec spec;
  try {
    spec = comet::load_spec(path);
  } catch (const comet::Error& e) {
    std::cout << path << ": " << e.what() << "\n1 errors\n";
    return 1;
  }
  auto findings = comet::validate(spec);
  for (const auto& f : findings) std::cout << f.str() << '\n';
  auto errors = comet::error_count(findings);
  auto warnings = findings.size() - errors;
  std::cout << errors << " errors";
  if (warnings) std::cout << ", " << warnings << " warnings";
  std::cout << '\n';
  return errors == 0 ? 0 : 1;
}

int demo(const std::string& pattern, std::size_t n) {
  auto result = comet::run_demo(pattern, n);
  result.trace.write_text(std::cout);
  for (const auto& line : result.summary) std::cout << "# " << line << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"COMET behavioral pattern runtime"};
  app.require_subcommand(1);
  app.footer(kGrammar);

  auto* run = app.add_subcommand("run", "Run the ATM case study on a scenario");
  comet::atm::ScenarioFiles files;
  comet::atm::RunSettings settings;
  std::string trace_path;
  std::string log_path;
  long timeout_ms = settings.timeout.count();
  run->add_option("--arch", files.arch, "Architecture file")->required()->check(CLI::ExistingFile);
  run->add_option("--accounts", files.accounts, "Accounts file")->required()->check(CLI::ExistingFile);
  run->add_option("--scenario", files.scenario, "Scenario file")->required()->check(CLI::ExistingFile);
  run->add_option("--atms", settings.atms, "Number of ATMs")->check(CLI::PositiveNumber);
  run->add_option("--timeout-ms", timeout_ms, "Wall-clock limit")->check(CLI::PositiveNumber);
  run->add_option("--trace", trace_path, "Write the trace here");
  run->add_option("--seed", settings.seed, "Seed for scripted device jitter");
  run->add_option("--log", log_path, "Write the ATM log here");

  auto* validate = app.add_subcommand("validate", "Check an architecture file");
  std::string arch_file;
  validate->add_option("file", arch_file, "Architecture file")->required();

  auto* demo_cmd = app.add_subcommand("demo", "Show one connector pattern at work");
  std::string pattern;
  std::size_t n = 3;
  demo_cmd->add_option("--pattern", pattern, "Pattern")
      ->required()
      ->check(CLI::IsMember(comet::demo_patterns()));
  demo_cmd->add_option("--n", n, "Repetitions")->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << kGrammar;
    return 2;
  }

  try {
    if (run->parsed()) {
      settings.timeout = std::chrono::milliseconds{timeout_ms};
      if (!trace_path.empty()) files.trace = trace_path;
      if (!log_path.empty()) files.log = log_path;
      auto result = comet::atm::run_scenario(files, settings);
      if (!result.diagnostic.empty()) std::cerr << result.diagnostic << '\n';
      std::cout << result.report.str() << '\n';
      std::cout << (result.exit_code == 0 ? "ok" : "failed") << '\n';
      return result.exit_code;
    }
    if (validate->parsed()) return validate_file(arch_file);
    if (demo_cmd->parsed()) return demo(pattern, n);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
