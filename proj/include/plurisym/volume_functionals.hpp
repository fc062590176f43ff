#pragma once

// Auxiliary forms and integral functionals built from a pair (phi, omega):
//   alpha[k,s] = phi^k ^ conj(phi)^k ^ omega^{n-2k-s}   (zero when out of range)
//   beta[s]    = sum_k alpha[k,s] / ((k!)^2 (n-2k-s)!)
//   V          = integral of beta[0]
//   P[k,s;psi] = integral of alpha[k,s] ^ psi,   Q[s;psi] = integral of beta[s] ^ psi
// Top-degree integrands are built from wedge products and integrated in
// coordinates.

#include "plurisym/torus_calculus.hpp"

namespace plurisym {

FormField alpha_ks(const FormField& phi, const FormField& omega, int k, int s);
FormField beta_s(const FormField& phi, const FormField& omega, int s);

/// Exponential-type volume sum_k (1/(k!)^2) (phi^k, phi^k)_omega, evaluated
/// as the integral of beta[0].
double volume_V(const FormField& phi, const FormField& omega);

/// F = (phi, phi)_omega.
double functional_F(const FormField& phi, const MetricField& g);

/// (1/i!) integral of beta[i] ^ rho^i with rho = sqrt(-1) d dbar log det g.
double coefficient_a_i(const FormField& phi, const FormField& omega, int i);

/// Throws PreconditionError unless psi is d- and dbar-closed to 1e-10
/// (relative to 1 + ||psi||) and the degrees add up to 2n.
double functional_P(const FormField& phi, const FormField& omega, int k, int s, const FormField& psi);
double functional_Q(const FormField& phi, const FormField& omega, int s, const FormField& psi);

/// ||d dbar beta[s]||.  Products are formed on a zero-padded grid large enough
/// to hold them without aliasing.
double check_beta_pluriclosed(const FormField& phi, const FormField& omega, int s);

/// Smallest even grid size that represents a product of `factors` fields of
/// the given band without aliasing (never smaller than N).
int padded_points(const TorusGrid& grid, int factors);

/// The constant function 1 as a (0,0) field.
FormField unit_field(const GridPtr& grid);

}  // namespace plurisym
