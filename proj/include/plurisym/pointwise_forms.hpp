#pragma once

// Multilinear algebra of complex (p,q)-forms and Hermitian metrics at one point.
//
// A (p,q)-form over C^n is stored by its coefficients on the basis
//   dz^I ^ dzbar^J,   I = i_1 < ... < i_p,  J = j_1 < ... < j_q,
// with all holomorphic factors written first.  Multi-indices are bitmasks
// (bit i <-> coordinate i, zero based) and are enumerated in lexicographic
// order of the increasing tuples.
//
// Conventions:
//   omega = sqrt(-1) g_{i jbar} dz^i ^ dzbar^j,
//   <dz^i, dz^k> = g^{kbar i} (no factor of two),
//   dV = omega^n / n!,
//   a ^ *conj(b) = <a, b> dV   (complex-linear Hodge star),
//   tr_g = sqrt(-1) Lambda_omega.

#include <array>
#include <complex>
#include <cstdint>
#include <span>
#include <vector>

#include "plurisym/errors.hpp"

namespace plurisym {

using Complex = std::complex<double>;

inline constexpr int kMaxDimension = 4;
/// Largest C(n,p) * C(n,q) for n <= kMaxDimension.
inline constexpr int kMaxCoefficients = 36;

using IndexMask = std::uint32_t;

struct Bidegree {
  int p = 0;
  int q = 0;

  constexpr int total() const { return p + q; }
  friend constexpr bool operator==(Bidegree, Bidegree) = default;
};

namespace multi_index {

int binomial(int n, int k);

/// Bitmasks of all k-subsets of {0..n-1} in lexicographic order.
std::span<const IndexMask> subsets(int n, int k);

/// Position of `mask` within subsets(n, popcount(mask)).
int rank(int n, IndexMask mask);

int popcount(IndexMask mask);

/// Sign of the permutation sorting the concatenation (A, B) of two
/// disjoint increasing tuples.
int merge_sign(IndexMask a, IndexMask b);

IndexMask full(int n);

}  // namespace multi_index

class Form {
 public:
  Form() = default;
  Form(int n, Bidegree bidegree);

  static Form constant(int n, Complex value);
  static Form basis(int n, IndexMask holomorphic, IndexMask antiholomorphic, Complex value = 1.0);

  int dimension() const { return n_; }
  Bidegree bidegree() const { return bidegree_; }
  int size() const { return count_; }

  Complex& operator[](int i) { return coeffs_[i]; }
  const Complex& operator[](int i) const { return coeffs_[i]; }

  int index_of(IndexMask holomorphic, IndexMask antiholomorphic) const;
  Complex coeff(IndexMask holomorphic, IndexMask antiholomorphic) const;
  void set_coeff(IndexMask holomorphic, IndexMask antiholomorphic, Complex value);
  IndexMask holomorphic_mask(int i) const;
  IndexMask antiholomorphic_mask(int i) const;

  std::span<Complex> coeffs() { return {coeffs_.data(), static_cast<std::size_t>(count_)}; }
  std::span<const Complex> coeffs() const {
    return {coeffs_.data(), static_cast<std::size_t>(count_)};
  }

  double max_abs() const;
  bool is_zero() const { return max_abs() == 0.0; }

  Form& operator+=(const Form& other);
  Form& operator-=(const Form& other);
  Form& operator*=(Complex s);

  friend Form operator+(Form a, const Form& b) { return a += b; }
  friend Form operator-(Form a, const Form& b) { return a -= b; }
  friend Form operator*(Form a, Complex s) { return a *= s; }
  friend Form operator*(Complex s, Form a) { return a *= s; }
  friend Form operator-(Form a) { return a *= -1.0; }

 private:
  void require_compatible(const Form& other) const;

  int n_ = 0;
  Bidegree bidegree_{};
  int count_ = 1;
  std::array<Complex, kMaxCoefficients> coeffs_{};
};

/// Positive definite Hermitian matrix g_{i jbar} with cached inverse and
/// determinant.
class HermitianMetric {
 public:
  HermitianMetric() = default;

  /// `g` is row-major n x n.  Throws StructuralError if g is not Hermitian
  /// to 1e-13 (relative) and PositivityLostError if it is not positive
  /// definite.
  HermitianMetric(int n, std::span<const Complex> g);

  static HermitianMetric identity(int n);

  int dimension() const { return n_; }
  Complex g(int i, int j) const { return g_[i * n_ + j]; }
  /// Entry (i, j) of the matrix inverse of g.
  Complex g_inverse(int i, int j) const { return inv_[i * n_ + j]; }
  /// <dz^i, dz^k> = g^{kbar i}.
  Complex cotangent_product(int i, int k) const { return inv_[k * n_ + i]; }
  double det() const { return det_; }
  /// Smallest eigenvalue (the positivity margin).
  double min_eigenvalue() const;
  /// Largest eigenvalue.
  double max_eigenvalue() const;

 private:
  int n_ = 0;
  std::array<Complex, kMaxDimension * kMaxDimension> g_{};
  std::array<Complex, kMaxDimension * kMaxDimension> inv_{};
  double det_ = 1.0;
};

struct MetricWithMargin {
  HermitianMetric metric;
  double margin = 0.0;
};

Form wedge(const Form& a, const Form& b);
Form conjugate(const Form& a);
Complex inner_product_point(const Form& a, const Form& b, const HermitianMetric& g);
Form hodge_star_point(const Form& a, const HermitianMetric& g);
/// sqrt(-1) Lambda_omega, by direct contraction with g^{tbar s}.
Form trace_g_point(const Form& a, const HermitianMetric& g);
/// One term of trace_g_point: out[out] += sign * <dz^s, dz^t> * a[in].
struct TraceTerm {
  int out;
  int in;
  int s;
  int t;
  double sign;
};

/// Contraction table of trace_g_point for forms of bidegree b.
std::vector<TraceTerm> trace_terms(int n, Bidegree b);

/// One term of wedge: out[out] += sign * a[a] * b[b].
struct WedgeTerm {
  int out;
  int a;
  int b;
  double sign;
};

/// Product table of wedge for bidegrees a and b (empty when the product
/// exceeds top degree).
std::vector<WedgeTerm> wedge_terms(int n, Bidegree a, Bidegree b);

/// Lambda_omega, the adjoint of omega ^ (.).
Form lefschetz_adjoint_point(const Form& a, const HermitianMetric& g);
Form form_power(const Form& a, int k);

/// sqrt(-1) sum g_{i jbar} dz^i ^ dzbar^j.
Form fundamental_form(const HermitianMetric& g);
/// omega^n / n! expressed in the canonical top-degree basis.
Form volume_form(const HermitianMetric& g);
/// Coefficient of the flat volume form (g = identity) on dz^{1..n} ^ dzbar^{1..n}.
Complex flat_volume_coefficient(int n);

/// Reads g_{i jbar} = -sqrt(-1) w_{i jbar} from a real (1,1)-form.
MetricWithMargin metric_of_form(const Form& w);

/// Same extraction without the reality check or eigenvalue scan; used on
/// hot paths where positivity is the only thing that can fail.
HermitianMetric metric_of_form_unchecked(int n, std::span<const Complex> w_coeffs);

double factorial(int k);

}  // namespace plurisym
