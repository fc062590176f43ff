#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "plurisym/cli_runner.hpp"

using namespace plurisym;

namespace {

void apply_thread_cap() {
  const char* env = std::getenv("PLURISYM_THREADS");
  if (env == nullptr || *env == '\0') return;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1) throw ConfigError("PLURISYM_THREADS: must be a positive integer");
#ifdef _OPENMP
  omp_set_num_threads(static_cast<int>(n));
#endif
}

RunConfig load_config(const std::string& path) {
  if (path.empty()) return parse_config("{}");
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

OutputFormat parse_format(const std::string& s) {
  if (s == "csv") return OutputFormat::csv;
  if (s == "json") return OutputFormat::json;
  throw ConfigError("format: must be csv or json");
}

void emit(const std::string& report, const std::string& output) {
  if (output.empty()) {
    std::cout << report;
    return;
  }
  std::ofstream out(output, std::ios::binary);
  if (!out) throw ConfigError("output: cannot open " + output);
  out << report;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hermitian-symplectic flow lab on flat complex tori"};
  app.require_subcommand(1);

  std::string config_path, output, format;
  std::optional<std::uint64_t> seed;
  bool inject_fault = false;
  ObstructArgs obstruct;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON configuration file");
    sub->add_option("--output", output, "Write the report here instead of stdout");
    sub->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
    sub->add_option("--seed", seed, "Override initial.seed");
  };

  CLI::App* verify = app.add_subcommand("verify", "Pointwise and spectral invariant suites");
  add_common(verify);
  verify->add_flag("--inject-fault", inject_fault)->group("");
  CLI::App* flow = app.add_subcommand("flow", "Integrate the flow and print the diagnostics series");
  add_common(flow);
  CLI::App* volume = app.add_subcommand("volume", "Volume polynomial and derivative identity checks");
  add_common(volume);
  CLI::App* obs = app.add_subcommand("obstruct", "Dimension-two obstruction classifier");
  add_common(obs);
  obs->add_option("--a0", obstruct.a0);
  obs->add_option("--a1", obstruct.a1);
  obs->add_option("--a2", obstruct.a2);
  obs->add_option("--preset", obstruct.preset, "ruled:f=<genus>");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : exit_code::config_error;
  }

  try {
    apply_thread_cap();
    if (obs->parsed()) {
      const CommandResult r = cmd_obstruct(obstruct, format.empty() ? OutputFormat::csv : parse_format(format));
      emit(r.report, output);
      return r.exit_code;
    }
    RunConfig config = load_config(config_path);
    if (seed) config.initial.seed = *seed;
    if (!format.empty()) config.format = parse_format(format);
    if (!output.empty()) config.output = output;

    CommandResult r;
    if (verify->parsed()) {
      r = cmd_verify(config, VerifyOptions{inject_fault});
    } else if (flow->parsed()) {
      r = cmd_flow(config);
    } else {
      r = cmd_volume(config);
    }
    emit(r.report, config.output);
    if (r.exit_code == exit_code::positivity_lost) std::cerr << "positivity lost\n";
    return r.exit_code;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return exit_code::config_error;
  } catch (const ConstraintViolationError& e) {
    std::cerr << "invariant violation: " << e.what() << "\n";
    return exit_code::invariant_violation;
  } catch (const PositivityLostError& e) {
    std::cerr << "positivity lost: " << e.what() << "\n";
    return exit_code::positivity_lost;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code::invariant_violation;
  }
}
