#pragma once

// Configuration, orchestration and report output for the verify, flow,
// volume and obstruct workflows.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "plurisym/hs_flow.hpp"
#include "plurisym/volume_analyzer.hpp"

namespace plurisym {

enum class InitialType { flat_kahler, perturbed_flat, perturbed_kahler };
enum class OutputFormat { csv, json };

struct InitialConfig {
  InitialType type = InitialType::perturbed_flat;
  double epsilon = 0.05;
  std::uint64_t seed = 42;
  int mode_cutoff = 2;
};

struct VolumeSettings {
  /// Sample times at which the derivative identities are probed.
  int probe_count = 5;
  /// Spacing of the five-point probe stencil.
  double probe_spacing = 1e-5;
};

struct CheckTolerances {
  double constraint = 1e-8;
  double beta_pluriclosed = 1e-8;
  double fit_residual = 1e-6;
  double a0_relative = 1e-10;
  double a1_relative = 1e-3;
  /// |fitted a_n| and the next-degree coefficient, relative to a_0.
  double top_coefficient = 1e-6;
  double derivative_relative = 1e-4;
  double monotonicity_slack = 1e-10;
};

struct RunConfig {
  int dimension = 2;
  int grid = 16;
  InitialConfig initial;
  FlowConfig flow;
  VolumeSettings volume;
  CheckTolerances tolerances;
  std::string output;
  OutputFormat format = OutputFormat::csv;
};

/// Parses a JSON configuration.  Unknown keys are rejected; missing keys
/// take their defaults (grid 16 for n = 2 and 8 for n = 3).  Throws
/// ConfigError with a message that starts with the offending key.
RunConfig parse_config(std::string_view text);

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int positivity_lost = 2;
inline constexpr int config_error = 3;
inline constexpr int invariant_violation = 4;
}  // namespace exit_code

struct CommandResult {
  int exit_code = exit_code::ok;
  std::string report;
};

/// Column names of the flow series, in output order.
const std::vector<std::string>& flow_columns();

/// Header line plus one line per record, "%.17g" values.
std::string flow_csv(const std::vector<DiagnosticsRecord>& records);

FlowState make_initial_state(const RunConfig& config);

struct SuiteResult {
  std::string name;
  double worst_error = 0.0;
  double tolerance = 0.0;
  int instances = 0;
  bool pass = false;
};

struct VerifyOptions {
  /// Test hook: flips the sign of the trace term in the star-trace identity.
  bool flip_trace_sign = false;
};

/// Pointwise and spectral invariant suites, seeded from config.initial.seed.
std::vector<SuiteResult> run_verify_suites(const RunConfig& config, const VerifyOptions& options = {});

struct NamedCheck {
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct VolumeAnalysis {
  FlowResult flow;
  VolumePolynomial fitted;
  VolumePolynomial formula;
  /// Leading coefficient of a fit one degree higher.
  double next_degree_coefficient = 0.0;
  std::vector<double> beta_residual_max;  // per s = 0 .. n
  DerivativeReport derivatives;
  std::vector<NamedCheck> checks;
  bool all_pass = false;
};

/// Runs the flow and every volume check.  Throws ConfigError when the
/// configuration yields too few samples for the fit.
VolumeAnalysis analyze_volume(const RunConfig& config);

CommandResult cmd_verify(const RunConfig& config, const VerifyOptions& options = {});
CommandResult cmd_flow(const RunConfig& config);
CommandResult cmd_volume(const RunConfig& config);

struct ObstructArgs {
  std::optional<double> a0, a1, a2;
  /// "ruled:f=<genus>"; fixes a2 = 4 (1 - genus).
  std::string preset;
};

CommandResult cmd_obstruct(const ObstructArgs& args, OutputFormat format);

}  // namespace plurisym
