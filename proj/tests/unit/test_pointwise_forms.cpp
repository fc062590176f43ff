#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "plurisym/pointwise_forms.hpp"

using namespace plurisym;

namespace {
constexpr IndexMask z1 = 0b0001, z2 = 0b0010, z3 = 0b0100;
const Complex I{0.0, 1.0};
}  // namespace

TEST_CASE("multi-index tables follow lexicographic order") {
  auto s = multi_index::subsets(3, 2);
  REQUIRE(s.size() == 3);
  CHECK(s[0] == (z1 | z2));
  CHECK(s[1] == (z1 | z3));
  CHECK(s[2] == (z2 | z3));
  CHECK(multi_index::rank(3, z2 | z3) == 2);
  CHECK(multi_index::merge_sign(z2, z1) == -1);
  CHECK(multi_index::merge_sign(z1, z2) == 1);
  CHECK(multi_index::merge_sign(z1 | z3, z2) == -1);
}

TEST_CASE("coefficient count is C(n,p) C(n,q)") {
  for (int n = 1; n <= kMaxDimension; ++n)
    for (int p = 0; p <= n; ++p)
      for (int q = 0; q <= n; ++q)
        CHECK(Form(n, {p, q}).size() == multi_index::binomial(n, p) * multi_index::binomial(n, q));
  CHECK_THROWS_AS(Form(2, {3, 0}), StructuralError);
}

TEST_CASE("wedge basics") {
  const Form dz1 = Form::basis(2, z1, 0);
  const Form dzb1 = Form::basis(2, 0, z1);
  CHECK(wedge(dz1, dz1).is_zero());
  const Form m = wedge(dz1, dzb1);
  CHECK(m.bidegree() == Bidegree{1, 1});
  CHECK(m.coeff(z1, z1) == Complex(1.0));
  CHECK(wedge(dzb1, dz1).coeff(z1, z1) == Complex(-1.0));
  // Exceeding (n, n) gives the zero form of the clamped bidegree.
  const Form top = wedge(Form::basis(2, z1 | z2, 0), Form::basis(2, z1, 0));
  CHECK(top.is_zero());
  CHECK(top.bidegree() == Bidegree{2, 0});
  CHECK_THROWS_AS(wedge(dz1, Form::basis(3, z1, 0)), StructuralError);
}

TEST_CASE("wedge matches the signed permutation-sum oracle") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const Form a = oracle::random_form(rng, 3, {1, 0});
    const Form b = oracle::random_form(rng, 3, {1, 1});
    CHECK(oracle::max_diff(wedge(a, b), oracle::wedge(a, b)) < 1e-13);
  }
  const int degs[][4] = {{1, 1, 1, 1}, {2, 0, 0, 1}, {1, 2, 1, 0}, {2, 1, 1, 1}};
  for (const auto& d : degs) {
    const Form a = oracle::random_form(rng, 4, {d[0], d[1]});
    const Form b = oracle::random_form(rng, 4, {d[2], d[3]});
    CHECK(oracle::max_diff(wedge(a, b), oracle::wedge(a, b)) < 1e-12);
  }
}

TEST_CASE("wedge is associative and graded commutative") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 2 + trial % 3;
    const Bidegree ba{trial % 2, 1}, bb{1, trial % 2}, bc{1, 0};
    const Form a = oracle::random_form(rng, n, ba);
    const Form b = oracle::random_form(rng, n, bb);
    const Form c = oracle::random_form(rng, n, bc);
    CHECK(oracle::max_diff(wedge(wedge(a, b), c), wedge(a, wedge(b, c))) < 1e-12);
    const double sign = ((ba.total() * bb.total()) & 1) ? -1.0 : 1.0;
    CHECK(oracle::max_diff(wedge(b, a), wedge(a, b) * sign) < 1e-12);
  }
}

TEST_CASE("conjugation") {
  const Complex c{0.3, -1.2};
  const Form f = Form::basis(2, z1 | z2, 0, c);
  const Form g = conjugate(f);
  CHECK(g.bidegree() == Bidegree{0, 2});
  CHECK(g.coeff(0, z1 | z2) == std::conj(c));
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const HermitianMetric h = oracle::random_metric(rng, 3);
    const Form w = fundamental_form(h);
    CHECK(oracle::max_diff(conjugate(w), w) < 1e-15);
    const Form a = oracle::random_form(rng, 3, {2, 1});
    const Form b = oracle::random_form(rng, 3, {2, 1});
    CHECK(oracle::max_diff(conjugate(a + b), conjugate(a) + conjugate(b)) < 1e-15);
    CHECK(oracle::max_diff(conjugate(conjugate(a)), a) == 0.0);
  }
}

TEST_CASE("hermitian metric validation") {
  const Complex bad[] = {1.0, 0.5, 0.2, 1.0};
  CHECK_THROWS_AS(HermitianMetric(2, bad), StructuralError);
  const Complex indefinite[] = {1.0, 2.0, 2.0, 1.0};
  CHECK_THROWS_AS(HermitianMetric(2, indefinite), PositivityLostError);
  std::mt19937_64 rng(5);
  const HermitianMetric g = oracle::random_metric(rng, 3);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      Complex s = 0.0;
      for (int k = 0; k < 3; ++k) s += g.g(i, k) * g.g_inverse(k, j);
      CHECK(std::abs(s - (i == j ? 1.0 : 0.0)) < 1e-12);
    }
  }
}

TEST_CASE("pointwise inner product") {
  const HermitianMetric id = HermitianMetric::identity(2);
  const Form dz1 = Form::basis(2, z1, 0);
  CHECK(std::abs(inner_product_point(dz1, dz1, id) - 1.0) < 1e-15);
  CHECK_THROWS_AS(inner_product_point(dz1, Form::basis(2, 0, z1), id), StructuralError);

  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 25; ++trial) {
    const int n = 2 + trial % 3;
    const HermitianMetric g = oracle::random_metric(rng, n);
    const Bidegree b{trial % 3 % (n + 1), (trial / 3) % 3 % (n + 1)};
    const Form x = oracle::random_form(rng, n, b);
    const Form y = oracle::random_form(rng, n, b);
    const Complex xy = inner_product_point(x, y, g);
    CHECK(std::abs(xy - oracle::inner(x, y, g)) < 1e-11 * (1.0 + std::abs(xy)));
    CHECK(std::abs(xy - std::conj(inner_product_point(y, x, g))) < 1e-12 * (1.0 + std::abs(xy)));
    const Complex xx = inner_product_point(x, x, g);
    CHECK(xx.real() > 0.0);
    CHECK(std::abs(xx.imag()) < 1e-12 * xx.real());
    // <omega, omega> = n in the metric's own inner product.
    const Form w = fundamental_form(g);
    CHECK(std::abs(inner_product_point(w, w, g) - static_cast<double>(n)) < 1e-12);
  }
  CHECK(inner_product_point(Form(2, {1, 1}), Form(2, {1, 1}), id) == 0.0);
}

TEST_CASE("volume form is omega^n / n!") {
  std::mt19937_64 rng(23);
  for (int n = 1; n <= 4; ++n) {
    const HermitianMetric g = oracle::random_metric(rng, n);
    const Form expected = form_power(fundamental_form(g), n) * (1.0 / factorial(n));
    CHECK(oracle::max_diff(volume_form(g), expected) < 1e-12 * g.det());
    CHECK(oracle::max_diff(volume_form(g), oracle::volume(g)) < 1e-12 * g.det());
  }
  // omega^2 = 2 dV for n = 2, g = identity.
  const HermitianMetric id = HermitianMetric::identity(2);
  CHECK(oracle::max_diff(form_power(fundamental_form(id), 2), volume_form(id) * 2.0) < 1e-15);
}

TEST_CASE("hodge star examples") {
  const HermitianMetric id = HermitianMetric::identity(2);
  CHECK(oracle::max_diff(hodge_star_point(Form::constant(2, 1.0), id), volume_form(id)) < 1e-15);
  const Form beta = Form::basis(2, z1 | z2, z2);
  const Form sb = hodge_star_point(beta, id);
  CHECK(sb.bidegree() == Bidegree{1, 0});
  CHECK(oracle::max_diff(sb, Form::basis(2, z1, 0, -1.0)) < 1e-15);
  const Form w = fundamental_form(id);
  CHECK(oracle::max_diff(hodge_star_point(w, id), w) < 1e-15);
}

TEST_CASE("hodge star matches the defining-property oracle") {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + trial % 2;
    const HermitianMetric g = oracle::random_metric(rng, n);
    const Bidegree b{trial % (n + 1), (trial / 2) % (n + 1)};
    const Form a = oracle::random_form(rng, n, b);
    const Form s = hodge_star_point(a, g);
    CHECK(oracle::max_diff(s, oracle::star(a, g)) < 1e-10 * (1.0 + s.max_abs()));
  }
}

TEST_CASE("star defining property and involution") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 2 + trial % 3;
    const HermitianMetric g = oracle::random_metric(rng, n);
    const Bidegree b{trial % (n + 1), (trial / 3) % (n + 1)};
    const Form a = oracle::random_form(rng, n, b);
    const Form c = oracle::random_form(rng, n, b);
    const Form lhs = wedge(a, hodge_star_point(conjugate(c), g));
    const Form rhs = volume_form(g) * inner_product_point(a, c, g);
    CHECK(oracle::max_diff(lhs, rhs) < 1e-11 * (1.0 + rhs.max_abs()));
    // ** = (-1)^deg on a real operator that commutes with conjugation.
    const double sign = (b.total() & 1) ? -1.0 : 1.0;
    CHECK(oracle::max_diff(hodge_star_point(hodge_star_point(a, g), g), a * sign) < 1e-10 * (1.0 + a.max_abs()));
    CHECK(oracle::max_diff(conjugate(hodge_star_point(a, g)), hodge_star_point(conjugate(a), g)) < 1e-11 * (1.0 + a.max_abs()));
  }
}

TEST_CASE("trace examples") {
  const HermitianMetric id = HermitianMetric::identity(2);
  const Form beta = Form::basis(2, z1 | z2, z2);
  CHECK(oracle::max_diff(trace_g_point(beta, id), Form::basis(2, z1, 0)) < 1e-15);
  const Form phi = Form::basis(2, z1 | z2, 0, {0.4, 0.1});
  CHECK(trace_g_point(phi, id).is_zero());
  std::mt19937_64 rng(37);
  for (int n = 1; n <= 4; ++n) {
    const HermitianMetric g = oracle::random_metric(rng, n);
    const Form w = fundamental_form(g);
    // Lambda omega = n, so tr_g omega = sqrt(-1) n.
    CHECK(std::abs(lefschetz_adjoint_point(w, g)[0] - static_cast<double>(n)) < 1e-12);
    CHECK(std::abs(trace_g_point(w, g)[0] - I * static_cast<double>(n)) < 1e-12);
  }
}

TEST_CASE("trace is sqrt(-1) times the adjoint of the Lefschetz operator") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + trial % 2;
    const HermitianMetric g = oracle::random_metric(rng, n);
    const Bidegree b{1 + trial % n, 1 + (trial / 2) % n};
    const Form a = oracle::random_form(rng, n, b);
    const Form t = trace_g_point(a, g);
    CHECK(oracle::max_diff(t, oracle::trace_by_adjointness(a, g)) < 1e-10 * (1.0 + t.max_abs()));
  }
  // Adjointness over basis pairs, compared through the library inner product.
  for (int n = 2; n <= 3; ++n) {
    const HermitianMetric g = oracle::random_metric(rng, n);
    const Form w = fundamental_form(g);
    const Bidegree b{2, 1}, c_b{1, 0};
    double worst = 0.0;
    for (int ia = 0; ia < Form(n, b).size(); ++ia) {
      const Form a = oracle::basis_element(n, b, ia);
      for (int ic = 0; ic < Form(n, c_b).size(); ++ic) {
        const Form c = oracle::basis_element(n, c_b, ic);
        const Complex lhs = inner_product_point(lefschetz_adjoint_point(a, g), c, g);
        const Complex rhs = inner_product_point(a, wedge(w, c), g);
        worst = std::max(worst, std::abs(lhs - rhs));
      }
    }
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("star-trace identity *(omega^{n-2} ^ beta) = -(n-2)! tr_g beta") {
  std::mt19937_64 rng(43);
  for (int n = 2; n <= 4; ++n) {
    for (int trial = 0; trial < 20; ++trial) {
      const HermitianMetric g = oracle::random_metric(rng, n);
      const Form beta = oracle::random_form(rng, n, {2, 1});
      const Form lhs = hodge_star_point(wedge(form_power(fundamental_form(g), n - 2), beta), g);
      const Form rhs = trace_g_point(beta, g) * (-factorial(n - 2));
      CHECK(oracle::max_diff(lhs, rhs) <= 1e-12 * beta.max_abs() * (1.0 + rhs.max_abs()));
    }
  }
}

TEST_CASE("primitivity and pointwise Lefschetz identity") {
  std::mt19937_64 rng(47);
  for (int n = 2; n <= 4; ++n) {
    const HermitianMetric g = oracle::random_metric(rng, n);
    const Form w = fundamental_form(g);
    const Form phi = oracle::random_form(rng, n, {2, 0});
    for (int k = 0; 2 * k <= n; ++k) {
      const Form pk = form_power(phi, k);
      if (k > 0) CHECK(trace_g_point(pk, g).is_zero());
      const Form lhs = volume_form(g) * inner_product_point(pk, pk, g);
      const Form rhs = wedge(wedge(pk, conjugate(pk)), form_power(w, n - 2 * k)) * (1.0 / factorial(n - 2 * k));
      CHECK(oracle::max_diff(lhs, rhs) < 1e-12 * (1.0 + rhs.max_abs()));
    }
  }
}

TEST_CASE("form powers") {
  // phi^2 = 0 for a (2,0)-form when n = 2.
  const Form phi = Form::basis(2, z1 | z2, 0, 2.0);
  CHECK(form_power(phi, 2).is_zero());
  CHECK(form_power(phi, 0)[0] == Complex(1.0));
  // Repeated-wedge oracle for n = 4, k = 2.
  const Form c = Form::basis(4, 0b0011, 0, {0.5, 0.5}) + Form::basis(4, 0b1100, 0, {1.0, -0.25});
  CHECK(oracle::max_diff(form_power(c, 2), oracle::wedge(c, c)) < 1e-15);
  CHECK(std::abs(form_power(c, 2).coeff(0b1111, 0) - 2.0 * Complex(0.5, 0.5) * Complex(1.0, -0.25)) < 1e-15);
}

TEST_CASE("metric_of_form") {
  const HermitianMetric id = HermitianMetric::identity(2);
  const auto m = metric_of_form(fundamental_form(id));
  CHECK(m.margin == doctest::Approx(1.0));
  Form w(2, {1, 1});
  w.set_coeff(z1, z1, 2.0 * I);
  w.set_coeff(z2, z2, I);
  const auto m2 = metric_of_form(w);
  CHECK(m2.metric.g(0, 0) == Complex(2.0));
  CHECK(m2.margin == doctest::Approx(1.0));
  // Off-diagonal perturbation: eigenvalues 1 +- |eps|.
  const Complex eps{0.3, 0.4};
  Form p = fundamental_form(id);
  p.set_coeff(z1, z2, I * eps);
  p.set_coeff(z2, z1, I * std::conj(eps));
  CHECK(metric_of_form(p).margin == doctest::Approx(1.0 - std::abs(eps)).epsilon(1e-14));
  Form nonreal = fundamental_form(id);
  nonreal.set_coeff(z1, z2, 0.1);
  CHECK_THROWS_AS(metric_of_form(nonreal), StructuralError);
  CHECK_THROWS_AS(metric_of_form(fundamental_form(id) * -1.0), PositivityLostError);
}
