#include "plurisym/volume_analyzer.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "plurisym/volume_functionals.hpp"

namespace plurisym {

namespace {

using Poly = std::vector<double>;

Poly poly_mul_linear(const Poly& p, double slope, double shift) {
  Poly r(p.size() + 1, 0.0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    r[i] += shift * p[i];
    r[i + 1] += slope * p[i];
  }
  return r;
}

// Legendre polynomials P_0 .. P_degree in x = slope t + shift, as monomials in t.
std::vector<Poly> legendre_in_t(int degree, double slope, double shift) {
  std::vector<Poly> p;
  p.push_back({1.0});
  if (degree >= 1) p.push_back({shift, slope});
  for (int k = 1; k < degree; ++k) {
    Poly next = poly_mul_linear(p[k], slope, shift);
    for (double& c : next) c *= (2.0 * k + 1.0) / (k + 1.0);
    for (std::size_t i = 0; i < p[k - 1].size(); ++i) next[i] -= k / (k + 1.0) * p[k - 1][i];
    p.push_back(std::move(next));
  }
  return p;
}

double legendre(int k, double x) {
  double a = 1.0, b = x;
  if (k == 0) return a;
  for (int j = 1; j < k; ++j) {
    const double c = ((2.0 * j + 1.0) * x * b - j * a) / (j + 1.0);
    a = b;
    b = c;
  }
  return b;
}

double five_point(std::span<const double> f, double h) { return (f[0] - 8.0 * f[1] + 8.0 * f[3] - f[4]) / (12.0 * h); }

double relative_to(double numeric, double analytic, double value, double volume) {
  const double scale = std::max({std::abs(analytic), std::abs(value), 1e-12 * std::abs(volume)});
  return scale > 0.0 ? std::abs(numeric - analytic) / scale : std::abs(numeric - analytic);
}

}  // namespace

const char* to_string(Provenance p) { return p == Provenance::fitted ? "fitted" : "integral-formula"; }

double VolumePolynomial::operator()(double t) const {
  double r = 0.0;
  for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) r = r * t + *it;
  return r;
}

VolumePolynomial fit_polynomial(std::span<const double> t, std::span<const double> v, int degree) {
  if (degree < 0) throw PreconditionError("fit degree must be nonnegative");
  if (t.size() != v.size()) throw PreconditionError("sample times and values differ in length");
  const auto m = static_cast<Eigen::Index>(t.size());
  const int cols = degree + 1;
  if (m < 2 * cols) {
    throw PreconditionError("a degree " + std::to_string(degree) + " fit needs at least " + std::to_string(2 * cols) +
                            " samples, got " + std::to_string(m));
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    if (!std::isfinite(t[i]) || !std::isfinite(v[i])) throw NumericalError("non-finite sample");
  }
  const auto [lo, hi] = std::minmax_element(t.begin(), t.end());
  const double a = *lo, b = *hi;
  if (!(b > a)) throw NumericalError("sample times span an empty interval");
  const double slope = 2.0 / (b - a), shift = -(a + b) / (b - a);

  Eigen::MatrixXd basis(m, cols);
  Eigen::VectorXd rhs(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double x = slope * t[i] + shift;
    for (int k = 0; k < cols; ++k) basis(i, k) = legendre(k, x);
    rhs(i) = v[i];
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(basis);
  if (qr.rank() < cols) throw NumericalError("sample times do not determine a degree " + std::to_string(degree) + " fit");
  const Eigen::VectorXd c = qr.solve(rhs);

  VolumePolynomial p;
  p.degree = degree;
  p.coeffs.assign(cols, 0.0);
  p.provenance.assign(cols, Provenance::fitted);
  const std::vector<Poly> legendre_t = legendre_in_t(degree, slope, shift);
  for (int k = 0; k < cols; ++k)
    for (std::size_t i = 0; i < legendre_t[k].size(); ++i) p.coeffs[i] += c(k) * legendre_t[k][i];
  const double norm = rhs.norm();
  const double res = (basis * c - rhs).norm();
  p.relative_residual = norm > 0.0 ? res / norm : res;
  return p;
}

VolumePolynomial formula_polynomial(const FormField& phi, const FormField& omega) {
  const int n = omega.dimension();
  VolumePolynomial p;
  p.degree = n;
  p.provenance.assign(n + 1, Provenance::integral_formula);
  for (int i = 0; i <= n; ++i) p.coeffs.push_back(coefficient_a_i(phi, omega, i));
  return p;
}

ObstructionVerdict surface_obstruction(double a0, double a1, double a2) {
  if (!std::isfinite(a0) || !std::isfinite(a1) || !std::isfinite(a2)) {
    throw PreconditionError("coefficients must be finite");
  }
  if (!(a0 > 0.0)) throw PreconditionError("a0 must be positive");
  ObstructionVerdict v{a0, a1, a2, a1 * a1 - 4.0 * a2 * a0, std::nullopt, false};
  if (a2 == 0.0) {
    if (a1 < 0.0) v.min_positive_root = -a0 / a1;
  } else if (v.discriminant >= 0.0) {
    // Cancellation-free pair of roots; q != 0 because a0 > 0.
    const double q = -0.5 * (a1 + std::copysign(std::sqrt(v.discriminant), a1));
    for (double r : {q / a2, a0 / q}) {
      if (r > 0.0 && (!v.min_positive_root || r < *v.min_positive_root)) v.min_positive_root = r;
    }
  }
  v.obstructed = v.min_positive_root.has_value();
  return v;
}

double ruled_surface_a2(int genus) {
  if (genus < 0) throw PreconditionError("genus must be nonnegative");
  return 4.0 * (1.0 - genus);
}

double DerivativeReport::worst(const std::string& name) const {
  double w = 0.0;
  for (const IdentityCheck& c : checks)
    if (c.name == name) w = std::max(w, c.relative_error);
  return w;
}

std::vector<FlowState> probe_stencil(const FlowState& state, double h) {
  if (!(h > 0.0)) throw PreconditionError("probe spacing must be positive");
  return {step_rk4(state, -2.0 * h), step_rk4(state, -h), state, step_rk4(state, h), step_rk4(state, 2.0 * h)};
}

DerivativeReport check_derivative_identities(std::span<const FlowState> trajectory) {
  if (trajectory.size() < 5) throw PreconditionError("derivative checks need at least five states");
  const double h = trajectory[1].t - trajectory[0].t;
  if (!(h > 0.0)) throw PreconditionError("trajectory times must increase");
  for (std::size_t i = 1; i < trajectory.size(); ++i) {
    const double d = trajectory[i].t - trajectory[i - 1].t;
    if (std::abs(d - h) > 1e-9 * h) throw PreconditionError("trajectory samples must be equally spaced");
  }
  const int n = trajectory.front().omega.dimension();
  const GridPtr grid = trajectory.front().omega.grid_ptr();
  const FormField one = unit_field(grid);

  const std::size_t m = trajectory.size();
  std::vector<double> V(m), F(m);
  std::vector<std::vector<double>> P(n / 2 + 1, std::vector<double>(m));
  for (std::size_t i = 0; i < m; ++i) {
    const FlowState& s = trajectory[i];
    V[i] = volume_V(s.phi, s.omega);
    F[i] = functional_F(s.phi, s.metric);
    for (int k = 0; 2 * k <= n; ++k) P[k][i] = functional_P(s.phi, s.omega, k, 0, one);
  }

  DerivativeReport report;
  for (std::size_t c = 2; c + 2 < m; ++c) {
    const FlowState& s = trajectory[c];
    const double t = s.t;
    const auto window = [&](const std::vector<double>& f) { return std::span<const double>(f).subspan(c - 2, 5); };
    const FormField rho = chern_form(s.metric);

    const double q1 = functional_Q(s.phi, s.omega, 1, rho);
    const double dv = five_point(window(V), h);
    report.checks.push_back({"dV/dt", t, dv, q1, relative_to(dv, q1, V[c], V[c])});

    const FormField dbar_omega = del_bar(s.omega);
    if (n == 2) {
      const double rhs = -2.0 * global_inner_product(dbar_omega, dbar_omega, s.metric).real();
      const double df = five_point(window(F), h);
      report.checks.push_back({"dF/dt", t, df, rhs, relative_to(df, rhs, F[c], V[c])});
    }

    const FormField torsion = torsion_trace(s.omega, s.metric);
    for (int k = 0; 2 * k <= n; ++k) {
      const int mk = n - 2 * k;
      auto torsion_pairing = [&](int kk) {
        const FormField a = alpha_ks(s.phi, s.omega, kk, 2);
        return integrate(wedge(wedge(torsion, a), dbar_omega));
      };
      double rhs = 0.0;
      if (k > 0) rhs -= k * k * 2.0 * torsion_pairing(k - 1).real();
      if (mk >= 2) rhs += mk * (mk - 1) * 2.0 * torsion_pairing(k).real();
      if (mk >= 1) rhs += mk * integrate(wedge(alpha_ks(s.phi, s.omega, k, 1), rho)).real();
      const double dp = five_point(window(P[k]), h);
      report.checks.push_back(
          {"dP[" + std::to_string(k) + ",0;1]/dt", t, dp, rhs, relative_to(dp, rhs, P[k][c], V[c])});
    }
  }
  return report;
}

}  // namespace plurisym
