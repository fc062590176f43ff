#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "field_helpers.hpp"
#include "plurisym/torus_calculus.hpp"

using namespace plurisym;
using plurisym::testing::coordinates;
using plurisym::testing::flat_omega;
using plurisym::testing::perturbed_omega;
using plurisym::testing::sample_scalar;

namespace {
const Complex I{0.0, 1.0};
constexpr double pi = std::numbers::pi;
constexpr IndexMask z1 = 0b01, z2 = 0b10;

double max_diff(const FormField& a, const FormField& b) { return (a - b).max_abs(); }
}  // namespace

TEST_CASE("grid construction validates its arguments") {
  CHECK_THROWS_AS(TorusGrid::create(2, 7), PreconditionError);
  CHECK_THROWS_AS(TorusGrid::create(0, 8), PreconditionError);
  CHECK_THROWS_AS(TorusGrid::create(3, 64), PreconditionError);
  auto g = TorusGrid::create(2, 8);
  CHECK(g->nodes() == 4096);
  CHECK(g->dealias_cutoff() == 2);
  CHECK(g->wavenumber(3) == 3);
  CHECK(g->wavenumber(4) == 0);
  CHECK(g->wavenumber(5) == -3);
}

TEST_CASE("derivatives of a trigonometric polynomial match hand-computed values") {
  auto grid = TorusGrid::create(2, 8);
  // f = sin(2 pi x1) cos(4 pi y2)
  auto f = sample_scalar(grid, [](const auto& x) { return std::sin(2 * pi * x[0]) * std::cos(4 * pi * x[3]); });
  const FormField df = del(f);
  const FormField dbf = del_bar(f);
  double err = 0.0;
  for (std::size_t i = 0; i < grid->nodes(); ++i) {
    const auto x = coordinates(*grid, i);
    const double s1 = std::sin(2 * pi * x[0]), c1 = std::cos(2 * pi * x[0]);
    const double s2 = std::sin(4 * pi * x[3]), c2 = std::cos(4 * pi * x[3]);
    const Complex d1 = pi * c1 * c2;            // (1/2) d/dx1
    const Complex d2 = 2.0 * pi * I * s1 * s2;  // -(i/2) d/dy2
    const Complex db2 = -d2;
    const Form a = df.form_at(i), b = dbf.form_at(i);
    err = std::max({err, std::abs(a.coeff(z1, 0) - d1), std::abs(a.coeff(z2, 0) - d2),
                    std::abs(b.coeff(0, z1) - d1), std::abs(b.coeff(0, z2) - db2)});
  }
  CHECK(err < 1e-12);
}

TEST_CASE("the Nyquist mode is differentiated to zero") {
  auto grid = TorusGrid::create(1, 8);
  auto f = sample_scalar(grid, [](const auto& x) { return std::cos(8 * pi * x[0]); });
  CHECK(del(f).max_abs() < 1e-12);
  CHECK(dealias(f).max_abs() < 1e-12);
}

TEST_CASE("del and del_bar square to zero and anticommute") {
  std::mt19937_64 rng(11);
  for (int n : {2, 3}) {
    auto grid = TorusGrid::create(n, 8);
    for (Bidegree b : {Bidegree{0, 0}, Bidegree{1, 0}, Bidegree{0, 1}, Bidegree{1, 1}}) {
      const FormField a = random_band_limited(grid, b, rng, 2);
      const double scale = l2_norm(del(del_bar(a))) + 1.0;
      CHECK(del(del(a)).max_abs() < 1e-10 * scale);
      CHECK(del_bar(del_bar(a)).max_abs() < 1e-10 * scale);
      CHECK((del(del_bar(a)) + del_bar(del(a))).max_abs() < 1e-10 * scale);
    }
  }
}

TEST_CASE("integrals: unit flat volume, det G for constant metrics, Stokes") {
  auto grid = TorusGrid::create(2, 8);
  const Form flat_dv = volume_form(HermitianMetric::identity(2));
  CHECK(std::abs(integrate(FormField::constant(grid, flat_dv)) - 1.0) < 1e-14);

  std::mt19937_64 rng(5);
  const std::vector<Complex> gm = {Complex(2.0), Complex(0.3, 0.4), Complex(0.3, -0.4), Complex(1.5)};
  const HermitianMetric g(2, gm);
  CHECK(std::abs(integrate(FormField::constant(grid, volume_form(g))) - g.det()) < 1e-13);

  const FormField eta = random_band_limited(grid, {1, 2}, rng, 3);
  const FormField eta2 = random_band_limited(grid, {2, 1}, rng, 3);
  CHECK(std::abs(integrate(del(eta))) < 1e-12);
  CHECK(std::abs(integrate(del_bar(eta2))) < 1e-12);
  CHECK_THROWS_AS(integrate(eta), StructuralError);
}

TEST_CASE("dealiasing, band checks and spectral resampling") {
  std::mt19937_64 rng(3);
  auto grid = TorusGrid::create(2, 8);
  const FormField a = random_band_limited(grid, {1, 0}, rng, 2);
  CHECK(out_of_band_fraction(a) < 1e-14);
  CHECK(max_diff(dealias(a), a) < 1e-13);

  auto wide = sample_scalar(grid, [](const auto& x) { return std::cos(6 * pi * x[1]); });
  CHECK(out_of_band_fraction(wide) > 0.5);
  CHECK(dealias(wide).max_abs() < 1e-13);

  auto fine = TorusGrid::create(2, 12);
  const FormField up = spectral_resample(a, fine);
  CHECK(max_diff(spectral_resample(up, grid), a) < 1e-13);
  // A band-limited field evaluated on the fine grid agrees with direct sampling.
  auto s = [](const std::vector<double>& x) { return Complex(std::sin(2 * pi * (x[0] + 2 * x[3])), std::cos(2 * pi * x[2])); };
  CHECK(max_diff(spectral_resample(sample_scalar(grid, s), fine), sample_scalar(fine, s)) < 1e-13);
}

TEST_CASE("random band-limited fields are reproducible from the seed") {
  auto grid = TorusGrid::create(2, 8);
  std::mt19937_64 r1(99), r2(99);
  const FormField a = random_band_limited(grid, {1, 1}, r1, 2);
  const FormField b = random_band_limited(grid, {1, 1}, r2, 2);
  CHECK(a.data() == b.data());
  CHECK(std::abs(integrate(wedge(a, FormField::constant(grid, Form::basis(2, z2, z2))))) < 1e-12);
}

TEST_CASE("global inner product against the flat L2 norm") {
  std::mt19937_64 rng(7);
  auto grid = TorusGrid::create(2, 8);
  const FormField a = random_band_limited(grid, {1, 1}, rng, 2);
  const Complex ip = global_inner_product(a, a, MetricField::flat(grid));
  CHECK(std::abs(ip - l2_norm(a) * l2_norm(a)) < 1e-12 * std::abs(ip));
}

TEST_CASE("codifferentials are adjoint to del and del_bar") {
  std::mt19937_64 rng(21);
  for (int n : {2, 3}) {
    auto grid = TorusGrid::create(n, 8);
    const MetricField g = MetricField::from_omega(perturbed_omega(grid, rng, 0.2));
    for (Bidegree b : {Bidegree{1, 0}, Bidegree{0, 1}, Bidegree{1, 1}}) {
      const FormField a = random_band_limited(grid, b, rng, 2);
      const FormField c1 = random_band_limited(grid, {b.p, b.q + 1}, rng, 2);
      const FormField c2 = random_band_limited(grid, {b.p + 1, b.q}, rng, 2);
      const Complex lhs1 = global_inner_product(del_bar(a), c1, g);
      const Complex rhs1 = global_inner_product(a, codifferential_del_bar_star(c1, g), g);
      CHECK(std::abs(lhs1 - rhs1) < 1e-10 * (std::abs(lhs1) + 1.0));
      const Complex lhs2 = global_inner_product(del(a), c2, g);
      const Complex rhs2 = global_inner_product(a, codifferential_del_star(c2, g), g);
      CHECK(std::abs(lhs2 - rhs2) < 1e-10 * (std::abs(lhs2) + 1.0));
    }
  }
}

TEST_CASE("dbar^* omega equals the trace of del omega") {
  std::mt19937_64 rng(8);
  for (int n : {2, 3}) {
    auto grid = TorusGrid::create(n, 8);
    // Cutoff 1 keeps omega^{n-1} free of aliasing.
    const FormField omega = perturbed_omega(grid, rng, 0.2, n == 2 ? 2 : 1);
    const MetricField g = MetricField::from_omega(omega);
    const FormField lhs = codifferential_del_bar_star(omega, g);
    const FormField rhs = trace_g(del(omega), g);
    CHECK(max_diff(lhs, rhs) < 1e-10 * (rhs.max_abs() + 1.0));
    CHECK(rhs.max_abs() > 1e-3);
  }
}

TEST_CASE("Chern form of a conformally flat metric") {
  for (int n : {2, 3}) {
    auto grid = TorusGrid::create(n, 8);
    const double amp = 0.3;
    // omega = e^u omega_flat with u = amp cos(2 pi x1): rho = sqrt(-1) n d dbar u.
    const auto u = [&](const std::vector<double>& x) { return amp * std::cos(2 * pi * x[0]); };
    FormField omega(grid, {1, 1});
    const Form w0 = fundamental_form(HermitianMetric::identity(n));
    for (std::size_t i = 0; i < grid->nodes(); ++i) omega.set_form(i, w0 * std::exp(u(coordinates(*grid, i))));
    const FormField rho = chern_form(MetricField::from_omega(omega));
    double err = 0.0;
    for (std::size_t i = 0; i < grid->nodes(); ++i) {
      const auto x = coordinates(*grid, i);
      // d_1 dbar_1 u = (1/4) u_{x1 x1}
      const Complex expected = I * double(n) * (-pi * pi * amp * std::cos(2 * pi * x[0]));
      const Form r = rho.form_at(i);
      err = std::max(err, std::abs(r.coeff(z1, z1) - expected));
      for (int k = 0; k < r.size(); ++k)
        if (k != r.index_of(z1, z1)) err = std::max(err, std::abs(r[k]));
    }
    CHECK(err < 1e-12);
  }
  auto grid = TorusGrid::create(2, 8);
  CHECK(chern_form(MetricField::flat(grid)).max_abs() < 1e-14);
}

TEST_CASE("Chern form is real and closed") {
  std::mt19937_64 rng(17);
  auto grid = TorusGrid::create(2, 8);
  const FormField rho = chern_form(MetricField::from_omega(perturbed_omega(grid, rng, 0.3)));
  CHECK(rho.max_abs() > 1e-2);
  CHECK(max_diff(conjugate(rho), rho) == 0.0);
  CHECK(del(rho).max_abs() < 1e-11);
  CHECK(del_bar(rho).max_abs() < 1e-11);
}

TEST_CASE("metric field positivity and margins") {
  auto grid = TorusGrid::create(2, 8);
  const MetricField flat = MetricField::from_omega(flat_omega(grid));
  CHECK(flat.min_margin() == doctest::Approx(1.0));
  CHECK(flat.hermiticity_defect() == 0.0);
  FormField bad = flat_omega(grid);
  bad.node(17)[0] = Complex(0.0, -0.5);
  CHECK_THROWS_AS(MetricField::from_omega(bad), PositivityLostError);
  CHECK_THROWS_AS(MetricField::from_omega(FormField(grid, {1, 0})), StructuralError);
}

TEST_CASE("residual norms on Hermitian-symplectic and perturbed data") {
  std::mt19937_64 rng(4);
  auto grid = TorusGrid::create(2, 8);
  const FormField zeta = random_band_limited(grid, {1, 0}, rng, 2) * 1e-4;
  const FormField phi = del(zeta);
  FormField omega = flat_omega(grid) + real_part(del_bar(zeta)) * 2.0;
  const ResidualNorms r = residual_norms(phi, omega, MetricField::from_omega(omega));
  CHECK(r.d_omega < 1e-13);
  CHECK(r.hs_constraint < 1e-13);
  CHECK(r.del_phi < 1e-13);
  CHECK(r.pluriclosed < 1e-13);
  CHECK(r.min_margin > 0.5);
  CHECK(l2_norm(phi) > 1e-3);

  // sqrt(-1) f dz^1 ^ dzbar^1 with non-constant f breaks pluriclosedness.
  auto f = sample_scalar(grid, [](const auto& x) { return 0.1 * std::cos(2 * pi * x[2]); });
  FormField bump(grid, {1, 1});
  for (std::size_t i = 0; i < grid->nodes(); ++i) bump.set_form(i, Form::basis(2, z1, z1, I * f.node(i)[0]));
  omega += bump;
  const ResidualNorms s = residual_norms(phi, omega, MetricField::from_omega(omega));
  CHECK(s.pluriclosed > 0.1);
  CHECK(s.hs_constraint > 0.1);
  CHECK(s.d_omega >= s.hs_constraint);
}
