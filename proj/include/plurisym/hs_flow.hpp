#pragma once

// The Hermitian-symplectic flow on a flat torus:
//   d omega / dt = del del^* omega + dbar dbar^* omega + sqrt(-1) del dbar log det g
//   d phi / dt   = -del tr_g(dbar phi)
// integrated with classical RK4.  Right-hand sides are band-limited: every
// nonlinear intermediate (torsion trace, log det g) is truncated before it is
// differentiated.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "plurisym/torus_calculus.hpp"

namespace plurisym {

struct FlowState {
  double t = 0.0;
  FormField phi;    // (2,0)
  FormField omega;  // (1,1), real, positive
  MetricField metric;

  /// Rebuilds the metric cache from omega (throws PositivityLostError).
  void refresh_metric();
};

struct FlowTolerances {
  /// Abort threshold for ||del omega + dbar phi|| and ||del phi||.
  double constraint = 1e-8;
};

struct FlowConfig {
  double dt = 1e-4;
  std::int64_t steps = 2000;
  std::int64_t sample_every = 10;
  double safety = 0.5;
  FlowTolerances tolerances;
};

struct DiagnosticsRecord {
  double t = 0.0;
  double V = 0.0;
  double F = 0.0;
  double d_omega_residual = 0.0;
  double hs_constraint_residual = 0.0;
  double del_phi_residual = 0.0;
  double pluriclosed_residual = 0.0;
  double min_eig_margin = 0.0;
};

enum class FlowStatus { completed, positivity_lost, constraint_violation };

struct FlowResult {
  FlowStatus status = FlowStatus::completed;
  std::vector<DiagnosticsRecord> records;
  /// Diagnostics of the last state that passed every check.
  DiagnosticsRecord last_valid;
  FlowState final_state;
  std::int64_t steps_taken = 0;
  /// Whether dt exceeded the advisory step bound at the start.
  bool step_bound_exceeded = false;
  std::string message;
};

/// Called at every sample with the current state and its record.
using FlowObserver = std::function<void(const FlowState&, const DiagnosticsRecord&)>;

/// dbar^* omega evaluated as tr_g(del omega), truncated.
FormField torsion_trace(const FormField& omega, const MetricField& g);

FormField pluriclosed_rhs(const FormField& omega);
FormField phi_rhs(const FormField& phi, const FormField& omega);

/// safety * h^2 * min margin / max eigenvalue.
double step_bound(const FlowState& state, double safety);

FlowState step_rk4(const FlowState& state, double dt);

FlowState make_flat_state(const GridPtr& grid);
/// omega_0 = omega_flat + dbar zeta + conj(dbar zeta), phi_0 = del zeta, with
/// zeta a random band-limited (1,0)-form scaled so that the largest spectral
/// norm of the metric perturbation equals epsilon.
FlowState make_initial_hs(const GridPtr& grid, std::uint64_t seed, double epsilon, int mode_cutoff);
/// omega_0 = omega_flat + sqrt(-1) del dbar u, phi_0 = 0, same scaling rule.
FlowState make_initial_kahler(const GridPtr& grid, std::uint64_t seed, double epsilon, int mode_cutoff);

DiagnosticsRecord diagnose(const FlowState& state);

FlowResult run_flow(const FlowConfig& config, const FlowState& initial, const FlowObserver& observer = {});

}  // namespace plurisym
