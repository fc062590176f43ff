#include "plurisym/volume_functionals.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace plurisym {

namespace {

FormField power(const FormField& a, int k) {
  const int n = a.dimension();
  FormField out = FormField::constant(a.grid_ptr(), Form::constant(n, 1.0));
  for (int i = 0; i < k; ++i) out = wedge(out, a);
  return out;
}

bool alpha_in_range(int n, int k, int s) { return k >= 0 && s >= 0 && n - 2 * k - s >= 0; }

void require_pair(const FormField& phi, const FormField& omega) {
  if (phi.bidegree() != Bidegree{2, 0} || omega.bidegree() != Bidegree{1, 1}) {
    throw StructuralError("expected phi of bidegree (2,0) and omega of bidegree (1,1)");
  }
  if (!phi.grid().same_shape(omega.grid())) throw StructuralError("phi and omega live on different grids");
}

void require_closed(const FormField& psi) {
  const double scale = 1.0 + l2_norm(psi);
  const double r = std::max(l2_norm(del(psi)), l2_norm(del_bar(psi)));
  if (r > 1e-10 * scale) {
    throw PreconditionError("test form is not closed (residual " + std::to_string(r) + ")");
  }
}

double integrate_against(const FormField& a, const FormField& psi) {
  const int n = a.dimension();
  const Bidegree b = a.bidegree();
  if (b.p + psi.bidegree().p != n || b.q + psi.bidegree().q != n) {
    throw PreconditionError("test form degree does not complement the integrand to top degree");
  }
  return integrate(wedge(a, psi)).real();
}

}  // namespace

FormField unit_field(const GridPtr& grid) { return FormField::constant(grid, Form::constant(grid->dimension(), 1.0)); }

FormField alpha_ks(const FormField& phi, const FormField& omega, int k, int s) {
  require_pair(phi, omega);
  const int n = omega.dimension();
  if (!alpha_in_range(n, k, s)) {
    const int d = std::clamp(n - s, 0, n);
    return FormField(omega.grid_ptr(), {d, d});
  }
  FormField out = power(omega, n - 2 * k - s);
  if (k > 0) {
    out = wedge(power(phi, k), out);
    out = wedge(power(conjugate(phi), k), out);
  }
  return out;
}

FormField beta_s(const FormField& phi, const FormField& omega, int s) {
  require_pair(phi, omega);
  const int n = omega.dimension();
  const int d = std::clamp(n - s, 0, n);
  FormField out(omega.grid_ptr(), {d, d});
  if (s < 0 || s > n) return out;
  for (int k = 0; alpha_in_range(n, k, s); ++k) {
    const double w = 1.0 / (factorial(k) * factorial(k) * factorial(n - 2 * k - s));
    out.axpy(w, alpha_ks(phi, omega, k, s));
  }
  return out;
}

double volume_V(const FormField& phi, const FormField& omega) { return integrate(beta_s(phi, omega, 0)).real(); }

double functional_F(const FormField& phi, const MetricField& g) { return global_inner_product(phi, phi, g).real(); }

double coefficient_a_i(const FormField& phi, const FormField& omega, int i) {
  require_pair(phi, omega);
  const int n = omega.dimension();
  if (i < 0 || i > n) throw PreconditionError("coefficient index must lie in [0, n]");
  FormField integrand = beta_s(phi, omega, i);
  if (i > 0) {
    const FormField rho = chern_form(MetricField::from_omega(omega));
    integrand = wedge(integrand, power(rho, i));
  }
  return integrate(integrand).real() / factorial(i);
}

double functional_P(const FormField& phi, const FormField& omega, int k, int s, const FormField& psi) {
  require_closed(psi);
  return integrate_against(alpha_ks(phi, omega, k, s), psi);
}

double functional_Q(const FormField& phi, const FormField& omega, int s, const FormField& psi) {
  require_closed(psi);
  return integrate_against(beta_s(phi, omega, s), psi);
}

int padded_points(const TorusGrid& grid, int factors) {
  const int band = factors * grid.dealias_cutoff();
  int m = 2 * band + 1;
  if (m % 2 != 0) ++m;
  return std::max(m, grid.points_per_axis());
}

double check_beta_pluriclosed(const FormField& phi, const FormField& omega, int s) {
  require_pair(phi, omega);
  const int n = omega.dimension();
  // beta[s] has bidegree (n-s, n-s); d dbar of it vanishes by degree for s = 0.
  if (s <= 0 || s > n) return 0.0;
  const int m = padded_points(omega.grid(), n - s);
  if (m == omega.grid().points_per_axis()) return l2_norm(del(del_bar(beta_s(phi, omega, s))));
  const GridPtr fine = TorusGrid::create(n, m);
  const FormField b = beta_s(spectral_resample(phi, fine), spectral_resample(omega, fine), s);
  return l2_norm(del(del_bar(b)));
}

}  // namespace plurisym
