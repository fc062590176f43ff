#include <bit>
#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Dense>

#include "doctest.h"
#include "field_helpers.hpp"
#include "plurisym/hs_flow.hpp"
#include "plurisym/volume_functionals.hpp"

using namespace plurisym;
using plurisym::testing::flat_omega;
using plurisym::testing::sample_scalar;

namespace {
const Complex I{0.0, 1.0};
constexpr double pi = std::numbers::pi;

Eigen::MatrixXcd metric_matrix(const FormField& omega, std::size_t node) {
  const int n = omega.dimension();
  Eigen::MatrixXcd g(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) g(i, j) = -I * omega.node(node)[i * n + j];
  return g;
}

// Riemannian volume: mean over nodes of det g (the torus has unit volume).
double volume_oracle(const FormField& omega) {
  double s = 0.0;
  for (std::size_t i = 0; i < omega.nodes(); ++i) s += metric_matrix(omega, i).determinant().real();
  return s / static_cast<double>(omega.nodes());
}

// (phi, phi) for a (2,0) field: |dz^I|^2 pairings are 2x2 minors of g^{-1}
// (as cotangent Gram matrix, transposed), weighted by det g.
double norm_sq_oracle(const FormField& phi, const FormField& omega) {
  const int n = phi.dimension();
  const Form probe(n, {2, 0});
  double s = 0.0;
  for (std::size_t node = 0; node < phi.nodes(); ++node) {
    const Eigen::MatrixXcd g = metric_matrix(omega, node);
    const Eigen::MatrixXcd h = g.inverse().transpose();
    Complex acc = 0.0;
    for (int a = 0; a < probe.size(); ++a) {
      const IndexMask ma = probe.holomorphic_mask(a);
      const int a0 = std::countr_zero(ma), a1 = 31 - std::countl_zero(ma);
      for (int b = 0; b < probe.size(); ++b) {
        const IndexMask mb = probe.holomorphic_mask(b);
        const int b0 = std::countr_zero(mb), b1 = 31 - std::countl_zero(mb);
        // <dz^a0 ^ dz^a1, dz^b0 ^ dz^b1> = det of the 2x2 Gram block.
        const Complex gram = h(a0, b0) * h(a1, b1) - h(a0, b1) * h(a1, b0);
        acc += phi.node(node)[a] * std::conj(phi.node(node)[b]) * gram;
      }
    }
    s += acc.real() * g.determinant().real();
  }
  return s / static_cast<double>(phi.nodes());
}

FormField constant_phi(const GridPtr& grid, Complex c) {
  Form p(grid->dimension(), {2, 0});
  p.set_coeff(0b011, 0, c);
  return FormField::constant(grid, p);
}

}  // namespace

TEST_CASE("flat volume is one") {
  for (int n : {2, 3}) {
    auto grid = TorusGrid::create(n, 8);
    CHECK(volume_V(FormField(grid, {2, 0}), flat_omega(grid)) == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("constant phi on the flat torus adds |c|^2") {
  auto grid = TorusGrid::create(2, 8);
  const Complex c{0.3, -0.4};
  CHECK(volume_V(constant_phi(grid, c), flat_omega(grid)) == doctest::Approx(1.0 + std::norm(c)).epsilon(1e-14));
  CHECK(functional_F(constant_phi(grid, c), MetricField::flat(grid)) ==
        doctest::Approx(std::norm(c)).epsilon(1e-14));
}

TEST_CASE("V equals volume plus F for Hermitian-symplectic data") {
  struct Case {
    int n, points, cutoff;
  };
  for (const Case c : {Case{2, 8, 2}, Case{3, 8, 1}}) {
    auto grid = TorusGrid::create(c.n, c.points);
    // Large phi so that F is not negligible against the volume.
    FlowState s = make_initial_hs(grid, 11, 0.3, c.cutoff);
    s.phi *= 20.0;
    const double vol = volume_oracle(s.omega);
    const double f = norm_sq_oracle(s.phi, s.omega);
    CAPTURE(c.n);
    CHECK(f > 1e-3);
    CHECK(functional_F(s.phi, s.metric) == doctest::Approx(f).epsilon(1e-12));
    CHECK(volume_V(s.phi, s.omega) == doctest::Approx(vol + f).epsilon(1e-12));
  }
}

TEST_CASE("F in two dimensions is the coordinate mean of |phi_12|^2") {
  auto grid = TorusGrid::create(2, 8);
  FlowState s = make_initial_hs(grid, 5, 0.2, 2);
  double m = 0.0;
  for (std::size_t i = 0; i < grid->nodes(); ++i) m += std::norm(s.phi.node(i)[0]);
  m /= static_cast<double>(grid->nodes());
  CHECK(functional_F(s.phi, s.metric) == doctest::Approx(m).epsilon(1e-12));
}

TEST_CASE("alpha and beta outside their range vanish") {
  auto grid = TorusGrid::create(2, 8);
  FlowState s = make_initial_hs(grid, 3, 0.1, 2);
  CHECK(alpha_ks(s.phi, s.omega, 2, 0).max_abs() == 0.0);
  CHECK(alpha_ks(s.phi, s.omega, 1, 1).max_abs() == 0.0);
  CHECK(beta_s(s.phi, s.omega, 3).max_abs() == 0.0);
  CHECK(beta_s(s.phi, s.omega, 2).bidegree() == Bidegree{0, 0});
  // beta[2] = 1 and beta[1] = omega in two dimensions.
  CHECK((beta_s(s.phi, s.omega, 2) - unit_field(grid)).max_abs() == 0.0);
  CHECK((beta_s(s.phi, s.omega, 1) - s.omega).max_abs() == 0.0);
}

TEST_CASE("Q and P against the constant test form") {
  for (int n : {2, 3}) {
    auto grid = TorusGrid::create(n, 8);
    FlowState s = make_initial_hs(grid, 17, 0.2, 1);
    const FormField one = unit_field(grid);
    CAPTURE(n);
    CHECK(functional_Q(s.phi, s.omega, 0, one) == doctest::Approx(volume_V(s.phi, s.omega)).epsilon(1e-14));
    const double nf = std::tgamma(n + 1.0);
    CHECK(functional_P(s.phi, s.omega, 0, 0, one) == doctest::Approx(nf * volume_oracle(s.omega)).epsilon(1e-12));
  }
}

TEST_CASE("test forms must be closed and of complementary degree") {
  auto grid = TorusGrid::create(2, 8);
  FlowState s = make_initial_hs(grid, 2, 0.1, 2);
  const FormField bump = sample_scalar(grid, [](const auto& x) { return Complex(std::cos(2 * pi * x[0])); });
  CHECK_THROWS_AS(functional_Q(s.phi, s.omega, 0, bump), PreconditionError);
  CHECK_THROWS_AS(functional_Q(s.phi, s.omega, 1, unit_field(grid)), PreconditionError);
  // A closed (1,1) test form: sqrt(-1) dz^1 ^ dzbar^1.
  Form e(2, {1, 1});
  e.set_coeff(0b01, 0b01, I);
  const FormField closed = FormField::constant(grid, e);
  const double q1 = functional_Q(s.phi, s.omega, 1, closed);
  CHECK(std::isfinite(q1));
  CHECK(q1 == doctest::Approx(integrate(wedge(s.omega, closed)).real()).epsilon(1e-14));
}

TEST_CASE("padded grid sizes") {
  auto g8 = TorusGrid::create(3, 8);
  CHECK(padded_points(*g8, 1) == 8);
  CHECK(padded_points(*g8, 2) == 10);
  CHECK(padded_points(*g8, 3) == 14);
  auto g16 = TorusGrid::create(2, 16);
  CHECK(padded_points(*g16, 1) == 16);
  CHECK(padded_points(*g16, 2) == 22);
}

TEST_CASE("beta is pluriclosed for Hermitian-symplectic data") {
  {
    auto grid = TorusGrid::create(2, 16);
    FlowState s = make_initial_hs(grid, 42, 0.05, 2);
    for (int k = 0; k <= 2; ++k) CHECK(check_beta_pluriclosed(s.phi, s.omega, k) <= 1e-10);
  }
  {
    auto grid = TorusGrid::create(3, 8);
    FlowState s = make_initial_hs(grid, 42, 0.05, 1);
    for (int k = 0; k <= 3; ++k) {
      CAPTURE(k);
      CHECK(check_beta_pluriclosed(s.phi, s.omega, k) <= 1e-10);
    }
  }
}

TEST_CASE("beta pluriclosedness fails once the constraint is broken") {
  auto grid = TorusGrid::create(2, 16);
  FlowState s = make_initial_hs(grid, 42, 0.05, 2);
  Form e(2, {1, 1});
  e.set_coeff(0b01, 0b01, I);
  FormField bump = sample_scalar(grid, [](const auto& x) { return Complex(0.1 * std::cos(2 * pi * x[2])); });
  s.omega += wedge(bump, FormField::constant(grid, e));
  CHECK(check_beta_pluriclosed(s.phi, s.omega, 1) > 1e-3);
}

TEST_CASE("higher coefficients vanish on the torus") {
  auto grid = TorusGrid::create(2, 16);
  FlowState s = make_initial_hs(grid, 42, 0.05, 2);
  const double a0 = coefficient_a_i(s.phi, s.omega, 0);
  CHECK(a0 == doctest::Approx(volume_V(s.phi, s.omega)).epsilon(1e-14));
  // rho is exact; omega is pluriclosed, so the pairing with rho integrates to zero.
  CHECK(std::abs(coefficient_a_i(s.phi, s.omega, 1)) <= 1e-12 * a0);
  CHECK(std::abs(coefficient_a_i(s.phi, s.omega, 2)) <= 1e-12 * a0);
  CHECK_THROWS_AS(coefficient_a_i(s.phi, s.omega, 3), PreconditionError);
}

TEST_CASE("V is half the squared norm of Omega in two dimensions") {
  auto grid = TorusGrid::create(2, 8);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    FlowState s = make_initial_hs(grid, seed, 0.3, 2);
    s.phi *= 10.0;
    const FormField phi_bar = conjugate(s.phi);
    const double omega_sq = global_inner_product(s.omega, s.omega, s.metric).real();
    const double phi_sq = global_inner_product(s.phi, s.phi, s.metric).real();
    const double phi_bar_sq = global_inner_product(phi_bar, phi_bar, s.metric).real();
    CHECK(volume_V(s.phi, s.omega) == doctest::Approx(0.5 * (omega_sq + phi_sq + phi_bar_sq)).epsilon(1e-10));
  }
}
