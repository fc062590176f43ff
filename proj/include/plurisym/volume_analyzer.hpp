#pragma once

// Analysis of the volume function V(t) along a flow: polynomial fits, the
// coefficient formulas, derivative identities and the dimension-two
// obstruction classifier.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "plurisym/hs_flow.hpp"

namespace plurisym {

enum class Provenance { fitted, integral_formula };

const char* to_string(Provenance p);

struct VolumePolynomial {
  int degree = 0;
  /// Monomial coefficients a_0 .. a_degree.
  std::vector<double> coeffs;
  std::vector<Provenance> provenance;
  /// ||fit - samples|| / ||samples|| (zero for formula polynomials).
  double relative_residual = 0.0;

  double operator()(double t) const;
};

/// Least-squares fit in a Legendre basis on [min t, max t], mapped back to
/// monomial coefficients.  Needs at least 2 (degree + 1) samples; throws
/// NumericalError if the sample times do not determine the fit.
VolumePolynomial fit_polynomial(std::span<const double> t, std::span<const double> v, int degree);

/// a_i = coefficient_a_i(phi, omega, i) for i = 0 .. n.
VolumePolynomial formula_polynomial(const FormField& phi, const FormField& omega);

struct ObstructionVerdict {
  double a0 = 0.0, a1 = 0.0, a2 = 0.0;
  double discriminant = 0.0;
  std::optional<double> min_positive_root;
  bool obstructed = false;
};

/// Smallest t > 0 with a0 + a1 t + a2 t^2 = 0.  Throws PreconditionError
/// unless a0 > 0 and all coefficients are finite.
ObstructionVerdict surface_obstruction(double a0, double a1, double a2);

/// a_2 = c_1^2 / 2 for a ruled surface over a curve of genus f, c_1^2 = 8 (1 - f).
double ruled_surface_a2(int genus);

struct IdentityCheck {
  std::string name;
  double t = 0.0;
  double numeric = 0.0;
  double analytic = 0.0;
  /// |numeric - analytic| / max(|analytic|, |value|, 1e-12 V), with value the
  /// differentiated quantity at t and V the volume at t.
  double relative_error = 0.0;
};

struct DerivativeReport {
  std::vector<IdentityCheck> checks;
  /// Largest relative error among checks with the given name (0 if none).
  double worst(const std::string& name) const;
};

/// Five equally spaced states s(t - 2h) .. s(t + 2h) around `state`, built
/// with single RK4 steps of size +-h and +-2h.
std::vector<FlowState> probe_stencil(const FlowState& state, double h);

/// Compares five-point centered differences of V, F and P[k,0;1] at the
/// middle of each window of five consecutive, equally spaced states with
///   dV/dt       = Q[1; sqrt(-1) d dbar log det g]
///   dF/dt       = -2 (dbar omega, dbar omega)          (n = 2)
///   dP[k,0;1]/dt = -k^2 (A + conj A) + m (m-1) (B + conj B)
///                  + m integral alpha[k,1] ^ sqrt(-1) d dbar log det g,
///   m = n - 2k, A = integral dbar^* omega ^ alpha[k-1,2] ^ dbar omega,
///   B = integral dbar^* omega ^ alpha[k,2] ^ dbar omega.
/// Throws PreconditionError for fewer than five states or uneven spacing.
DerivativeReport check_derivative_identities(std::span<const FlowState> trajectory);

}  // namespace plurisym
