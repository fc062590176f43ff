#include "plurisym/pointwise_forms.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace plurisym {

namespace multi_index {
namespace {

struct Tables {
  // subsets[n][k]
  std::array<std::array<std::vector<IndexMask>, kMaxDimension + 1>, kMaxDimension + 1> subsets;
  // rank[n][mask]
  std::array<std::array<int, 1u << kMaxDimension>, kMaxDimension + 1> rank{};

  Tables() {
    for (int n = 0; n <= kMaxDimension; ++n) {
      for (int k = 0; k <= n; ++k) {
        // Lexicographic order of increasing tuples via recursive generation.
        std::vector<IndexMask>& out = subsets[n][k];
        std::vector<int> tuple(k);
        auto emit = [&](auto&& self, int pos, int start) -> void {
          if (pos == k) {
            IndexMask m = 0;
            for (int v : tuple) m |= IndexMask{1} << v;
            out.push_back(m);
            return;
          }
          for (int v = start; v < n; ++v) {
            tuple[pos] = v;
            self(self, pos + 1, v + 1);
          }
        };
        emit(emit, 0, 0);
        for (std::size_t r = 0; r < out.size(); ++r) rank[n][out[r]] = static_cast<int>(r);
      }
    }
  }
};

const Tables& tables() {
  static const Tables t;
  return t;
}

}  // namespace

int binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  int r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

std::span<const IndexMask> subsets(int n, int k) {
  if (n < 0 || n > kMaxDimension || k < 0 || k > n) return {};
  return tables().subsets[n][k];
}

int rank(int n, IndexMask mask) { return tables().rank[n][mask]; }

int popcount(IndexMask mask) { return std::popcount(mask); }

int merge_sign(IndexMask a, IndexMask b) {
  int inversions = 0;
  for (IndexMask rest = b; rest != 0; rest &= rest - 1) {
    const int y = std::countr_zero(rest);
    inversions += std::popcount(a & ~((IndexMask{2} << y) - 1));
  }
  return (inversions & 1) ? -1 : 1;
}

IndexMask full(int n) { return (IndexMask{1} << n) - 1; }

}  // namespace multi_index

namespace {

int parity_sign(int k) { return (k & 1) ? -1 : 1; }

void require_dimension(int n) {
  if (n < 0 || n > kMaxDimension) {
    throw StructuralError("form dimension " + std::to_string(n) + " outside [0, " +
                          std::to_string(kMaxDimension) + "]");
  }
}

// Determinant of a k x k row-major matrix, k <= 4, by partial-pivot elimination.
Complex small_det(std::array<Complex, 16> m, int k) {
  Complex det = 1.0;
  for (int c = 0; c < k; ++c) {
    int piv = c;
    for (int r = c + 1; r < k; ++r) {
      if (std::abs(m[r * k + c]) > std::abs(m[piv * k + c])) piv = r;
    }
    if (m[piv * k + c] == 0.0) return 0.0;
    if (piv != c) {
      for (int j = 0; j < k; ++j) std::swap(m[c * k + j], m[piv * k + j]);
      det = -det;
    }
    det *= m[c * k + c];
    for (int r = c + 1; r < k; ++r) {
      const Complex f = m[r * k + c] / m[c * k + c];
      for (int j = c; j < k; ++j) m[r * k + j] -= f * m[c * k + j];
    }
  }
  return det;
}

// Table of minors det(Y[I, K]) of the cotangent Gram matrix Y_{ik} = <dz^i, dz^k>
// for all size-k subsets I, K.
struct MinorTable {
  int count = 0;
  std::array<Complex, kMaxCoefficients> values{};  // C(4,2)^2 = 36 is the largest

  Complex at(int r, int c) const { return values[r * count + c]; }
};

MinorTable cotangent_minors(const HermitianMetric& g, int k) {
  const int n = g.dimension();
  MinorTable t;
  const auto sets = multi_index::subsets(n, k);
  t.count = static_cast<int>(sets.size());
  if (k == 0) {
    t.values[0] = 1.0;
    return t;
  }
  for (int r = 0; r < t.count; ++r) {
    std::array<int, kMaxDimension> rows{};
    int nr = 0;
    for (IndexMask m = sets[r]; m; m &= m - 1) rows[nr++] = std::countr_zero(m);
    for (int c = 0; c < t.count; ++c) {
      std::array<int, kMaxDimension> cols{};
      int nc = 0;
      for (IndexMask m = sets[c]; m; m &= m - 1) cols[nc++] = std::countr_zero(m);
      std::array<Complex, 16> sub{};
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) sub[i * k + j] = g.cotangent_product(rows[i], cols[j]);
      t.values[r * t.count + c] = small_det(sub, k);
    }
  }
  return t;
}

}  // namespace

// ---------------------------------------------------------------- Form

Form::Form(int n, Bidegree bidegree) : n_(n), bidegree_(bidegree) {
  require_dimension(n);
  if (bidegree.p < 0 || bidegree.q < 0 || bidegree.p > n || bidegree.q > n) {
    throw StructuralError("bidegree (" + std::to_string(bidegree.p) + "," +
                          std::to_string(bidegree.q) + ") invalid for dimension " +
                          std::to_string(n));
  }
  count_ = multi_index::binomial(n, bidegree.p) * multi_index::binomial(n, bidegree.q);
}

Form Form::constant(int n, Complex value) {
  Form f(n, {0, 0});
  f[0] = value;
  return f;
}

Form Form::basis(int n, IndexMask holomorphic, IndexMask antiholomorphic, Complex value) {
  Form f(n, {multi_index::popcount(holomorphic), multi_index::popcount(antiholomorphic)});
  f.set_coeff(holomorphic, antiholomorphic, value);
  return f;
}

int Form::index_of(IndexMask holomorphic, IndexMask antiholomorphic) const {
  return multi_index::rank(n_, holomorphic) * multi_index::binomial(n_, bidegree_.q) +
         multi_index::rank(n_, antiholomorphic);
}

Complex Form::coeff(IndexMask holomorphic, IndexMask antiholomorphic) const {
  return coeffs_[index_of(holomorphic, antiholomorphic)];
}

void Form::set_coeff(IndexMask holomorphic, IndexMask antiholomorphic, Complex value) {
  coeffs_[index_of(holomorphic, antiholomorphic)] = value;
}

IndexMask Form::holomorphic_mask(int i) const {
  return multi_index::subsets(n_, bidegree_.p)[i / multi_index::binomial(n_, bidegree_.q)];
}

IndexMask Form::antiholomorphic_mask(int i) const {
  return multi_index::subsets(n_, bidegree_.q)[i % multi_index::binomial(n_, bidegree_.q)];
}

double Form::max_abs() const {
  double m = 0.0;
  for (int i = 0; i < count_; ++i) m = std::max(m, std::abs(coeffs_[i]));
  return m;
}

void Form::require_compatible(const Form& other) const {
  if (n_ != other.n_ || bidegree_ != other.bidegree_) {
    throw StructuralError("forms of different dimension or bidegree cannot be combined");
  }
}

Form& Form::operator+=(const Form& other) {
  require_compatible(other);
  for (int i = 0; i < count_; ++i) coeffs_[i] += other.coeffs_[i];
  return *this;
}

Form& Form::operator-=(const Form& other) {
  require_compatible(other);
  for (int i = 0; i < count_; ++i) coeffs_[i] -= other.coeffs_[i];
  return *this;
}

Form& Form::operator*=(Complex s) {
  for (int i = 0; i < count_; ++i) coeffs_[i] *= s;
  return *this;
}

// ---------------------------------------------------------------- metric

HermitianMetric::HermitianMetric(int n, std::span<const Complex> g) : n_(n) {
  require_dimension(n);
  if (n == 0 || g.size() != static_cast<std::size_t>(n * n)) {
    throw StructuralError("metric matrix has wrong size");
  }
  double scale = 1.0;
  for (const Complex& v : g) scale = std::max(scale, std::abs(v));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      if (std::abs(g[i * n + j] - std::conj(g[j * n + i])) > 1e-13 * scale) {
        throw StructuralError("metric matrix is not Hermitian");
      }
    }
  }
  std::copy(g.begin(), g.end(), g_.begin());

  // Cholesky g = L L^H; failure means g is not positive definite.
  std::array<Complex, 16> l{};
  for (int j = 0; j < n; ++j) {
    double d = g_[j * n + j].real();
    for (int k = 0; k < j; ++k) d -= std::norm(l[j * n + k]);
    if (!(d > 0.0)) throw PositivityLostError("metric is not positive definite");
    const double ljj = std::sqrt(d);
    l[j * n + j] = ljj;
    for (int i = j + 1; i < n; ++i) {
      Complex s = g_[i * n + j];
      for (int k = 0; k < j; ++k) s -= l[i * n + k] * std::conj(l[j * n + k]);
      l[i * n + j] = s / ljj;
    }
  }
  det_ = 1.0;
  for (int j = 0; j < n; ++j) det_ *= std::norm(l[j * n + j]);

  // m = L^{-1} by forward substitution; g^{-1} = m^H m.
  std::array<Complex, 16> m{};
  for (int c = 0; c < n; ++c) {
    for (int r = c; r < n; ++r) {
      Complex s = (r == c) ? 1.0 : 0.0;
      for (int k = c; k < r; ++k) s -= l[r * n + k] * m[k * n + c];
      m[r * n + c] = s / l[r * n + r];
    }
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      Complex s = 0.0;
      for (int k = std::max(i, j); k < n; ++k) s += std::conj(m[k * n + i]) * m[k * n + j];
      inv_[i * n + j] = s;
    }
  }
}

HermitianMetric HermitianMetric::identity(int n) {
  std::array<Complex, 16> g{};
  for (int i = 0; i < n; ++i) g[i * n + i] = 1.0;
  return HermitianMetric(n, std::span<const Complex>(g.data(), static_cast<std::size_t>(n * n)));
}

namespace {
Eigen::VectorXd metric_eigenvalues(int n, const std::array<Complex, 16>& g) {
  Eigen::MatrixXcd m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = g[i * n + j];
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(m, Eigen::EigenvaluesOnly);
  return solver.eigenvalues();
}
}  // namespace

double HermitianMetric::min_eigenvalue() const { return metric_eigenvalues(n_, g_).minCoeff(); }

double HermitianMetric::max_eigenvalue() const { return metric_eigenvalues(n_, g_).maxCoeff(); }

// ---------------------------------------------------------------- algebra

Form wedge(const Form& a, const Form& b) {
  const int n = a.dimension();
  if (b.dimension() != n) throw StructuralError("wedge of forms over different dimensions");
  const int p = a.bidegree().p + b.bidegree().p;
  const int q = a.bidegree().q + b.bidegree().q;
  if (p > n || q > n) return Form(n, {std::min(p, n), std::min(q, n)});
  Form r(n, {p, q});
  const int qa = a.bidegree().q;
  for (int ia = 0; ia < a.size(); ++ia) {
    if (a[ia] == 0.0) continue;
    const IndexMask hi = a.holomorphic_mask(ia);
    const IndexMask ai = a.antiholomorphic_mask(ia);
    for (int ib = 0; ib < b.size(); ++ib) {
      if (b[ib] == 0.0) continue;
      const IndexMask hk = b.holomorphic_mask(ib);
      const IndexMask ak = b.antiholomorphic_mask(ib);
      if ((hi & hk) || (ai & ak)) continue;
      const int sign = multi_index::merge_sign(hi, hk) * multi_index::merge_sign(ai, ak) *
                       parity_sign(qa * b.bidegree().p);
      r[r.index_of(hi | hk, ai | ak)] += static_cast<double>(sign) * a[ia] * b[ib];
    }
  }
  return r;
}

std::vector<WedgeTerm> wedge_terms(int n, Bidegree a, Bidegree b) {
  require_dimension(n);
  std::vector<WedgeTerm> terms;
  const int p = a.p + b.p;
  const int q = a.q + b.q;
  if (p > n || q > n) return terms;
  const Form fa(n, a), fb(n, b), r(n, {p, q});
  for (int ia = 0; ia < fa.size(); ++ia) {
    const IndexMask hi = fa.holomorphic_mask(ia);
    const IndexMask ai = fa.antiholomorphic_mask(ia);
    for (int ib = 0; ib < fb.size(); ++ib) {
      const IndexMask hk = fb.holomorphic_mask(ib);
      const IndexMask ak = fb.antiholomorphic_mask(ib);
      if ((hi & hk) || (ai & ak)) continue;
      const int sign = multi_index::merge_sign(hi, hk) * multi_index::merge_sign(ai, ak) * parity_sign(a.q * b.p);
      terms.push_back({r.index_of(hi | hk, ai | ak), ia, ib, static_cast<double>(sign)});
    }
  }
  return terms;
}

Form conjugate(const Form& a) {
  const auto [p, q] = a.bidegree();
  Form r(a.dimension(), {q, p});
  const double sign = parity_sign(p * q);
  for (int i = 0; i < a.size(); ++i) {
    r.set_coeff(a.antiholomorphic_mask(i), a.holomorphic_mask(i), sign * std::conj(a[i]));
  }
  return r;
}

Complex inner_product_point(const Form& a, const Form& b, const HermitianMetric& g) {
  if (a.bidegree() != b.bidegree() || a.dimension() != b.dimension()) {
    throw StructuralError("inner product of forms with different bidegree");
  }
  if (g.dimension() != a.dimension()) throw StructuralError("metric dimension mismatch");
  const auto [p, q] = a.bidegree();
  const MinorTable hol = cotangent_minors(g, p);
  const MinorTable anti = cotangent_minors(g, q);
  Complex sum = 0.0;
  for (int ia = 0; ia < a.size(); ++ia) {
    if (a[ia] == 0.0) continue;
    const int ri = ia / anti.count;
    const int rj = ia % anti.count;
    Complex inner = 0.0;
    for (int ib = 0; ib < b.size(); ++ib) {
      const int rk = ib / anti.count;
      const int rl = ib % anti.count;
      inner += std::conj(b[ib]) * hol.at(ri, rk) * std::conj(anti.at(rj, rl));
    }
    sum += a[ia] * inner;
  }
  return sum;
}

Complex flat_volume_coefficient(int n) {
  // (sqrt(-1))^n dz^1 ^ dzbar^1 ^ ... reordered to dz^{1..n} ^ dzbar^{1..n}.
  Complex c = std::pow(Complex(0.0, 1.0), n);
  return c * static_cast<double>(parity_sign(n * (n - 1) / 2));
}

Form volume_form(const HermitianMetric& g) {
  const int n = g.dimension();
  const IndexMask all = multi_index::full(n);
  return Form::basis(n, all, all, g.det() * flat_volume_coefficient(n));
}

Form hodge_star_point(const Form& a, const HermitianMetric& g) {
  const int n = a.dimension();
  if (g.dimension() != n) throw StructuralError("metric dimension mismatch");
  const auto [p, q] = a.bidegree();
  // For each basis e_{K L} of bidegree (q, p):
  //   e_{KL} ^ *a = <e_{KL}, conj(a)> dV  determines the (K^c, L^c) coefficient.
  Form r(n, {n - q, n - p});
  const MinorTable mq = cotangent_minors(g, q);
  const MinorTable mp = cotangent_minors(g, p);
  const Complex vol = g.det() * flat_volume_coefficient(n);
  const IndexMask all = multi_index::full(n);
  const auto sets_q = multi_index::subsets(n, q);
  const auto sets_p = multi_index::subsets(n, p);
  const double conj_sign = parity_sign(p * q);
  for (int rk = 0; rk < mq.count; ++rk) {
    const IndexMask k = sets_q[rk];
    for (int rl = 0; rl < mp.count; ++rl) {
      const IndexMask l = sets_p[rl];
      // <e_{KL}, conj(a)> = (-1)^{pq} sum a_{L'K'} det Y[K,K'] conj(det Y[L,L'])
      Complex pairing = 0.0;
      for (int ia = 0; ia < a.size(); ++ia) {
        if (a[ia] == 0.0) continue;
        const int rlp = ia / mq.count;  // a's holomorphic index L' (size p)
        const int rkp = ia % mq.count;  // a's antiholomorphic index K' (size q)
        pairing += a[ia] * mq.at(rk, rkp) * std::conj(mp.at(rl, rlp));
      }
      pairing *= conj_sign;
      const IndexMask kc = all & ~k;
      const IndexMask lc = all & ~l;
      const int s = multi_index::merge_sign(k, kc) * multi_index::merge_sign(l, lc) *
                    parity_sign(p * (n - q));
      r.set_coeff(kc, lc, pairing * vol * static_cast<double>(s));
    }
  }
  return r;
}

std::vector<TraceTerm> trace_terms(int n, Bidegree b) {
  require_dimension(n);
  const auto [p, q] = b;
  std::vector<TraceTerm> terms;
  if (p == 0 || q == 0) return terms;
  const Form r(n, {p - 1, q - 1});
  const Form a(n, b);
  for (int ir = 0; ir < r.size(); ++ir) {
    const IndexMask ip = r.holomorphic_mask(ir);
    const IndexMask jp = r.antiholomorphic_mask(ir);
    for (int s = 0; s < n; ++s) {
      const IndexMask sb = IndexMask{1} << s;
      if (ip & sb) continue;
      // a_{[I' s] ...}: move s from the last slot into sorted position.
      const int sign_s = parity_sign(multi_index::popcount(ip & ~((sb << 1) - 1)));
      for (int t = 0; t < n; ++t) {
        const IndexMask tb = IndexMask{1} << t;
        if (jp & tb) continue;
        // a_{... [t J']}: move t from the first slot into sorted position.
        const int sign_t = parity_sign(multi_index::popcount(jp & (tb - 1)));
        terms.push_back({ir, a.index_of(ip | sb, jp | tb), s, t, static_cast<double>(sign_s * sign_t)});
      }
    }
  }
  return terms;
}

namespace {
const std::vector<TraceTerm>& cached_trace_terms(int n, Bidegree b) {
  using Table = std::array<std::array<std::array<std::vector<TraceTerm>, kMaxDimension + 1>, kMaxDimension + 1>,
                           kMaxDimension + 1>;
  static const Table table = [] {
    Table t;
    for (int d = 1; d <= kMaxDimension; ++d)
      for (int p = 0; p <= d; ++p)
        for (int q = 0; q <= d; ++q) t[d][p][q] = trace_terms(d, {p, q});
    return t;
  }();
  return table[n][b.p][b.q];
}
}  // namespace

Form trace_g_point(const Form& a, const HermitianMetric& g) {
  const int n = a.dimension();
  if (g.dimension() != n) throw StructuralError("metric dimension mismatch");
  const auto [p, q] = a.bidegree();
  Form r(n, {std::max(p - 1, 0), std::max(q - 1, 0)});
  for (const TraceTerm& t : cached_trace_terms(n, a.bidegree())) r[t.out] += t.sign * g.cotangent_product(t.s, t.t) * a[t.in];
  return r;
}

Form lefschetz_adjoint_point(const Form& a, const HermitianMetric& g) {
  return trace_g_point(a, g) * Complex(0.0, -1.0);
}

Form form_power(const Form& a, int k) {
  if (k < 0) throw PreconditionError("negative form power");
  Form r = Form::constant(a.dimension(), 1.0);
  for (int i = 0; i < k; ++i) r = wedge(a, r);
  return r;
}

Form fundamental_form(const HermitianMetric& g) {
  const int n = g.dimension();
  Form w(n, {1, 1});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) w[i * n + j] = Complex(0.0, 1.0) * g.g(i, j);
  return w;
}

HermitianMetric metric_of_form_unchecked(int n, std::span<const Complex> w_coeffs) {
  std::array<Complex, 16> g{};
  for (int i = 0; i < n * n; ++i) g[i] = Complex(0.0, -1.0) * w_coeffs[i];
  return HermitianMetric(n, std::span<const Complex>(g.data(), static_cast<std::size_t>(n * n)));
}

MetricWithMargin metric_of_form(const Form& w) {
  if (w.bidegree() != Bidegree{1, 1}) throw StructuralError("metric_of_form needs a (1,1)-form");
  const double defect = (conjugate(w) - w).max_abs();
  if (defect > 1e-12 * std::max(1.0, w.max_abs())) {
    throw StructuralError("metric_of_form needs a real (1,1)-form");
  }
  MetricWithMargin out{metric_of_form_unchecked(w.dimension(), w.coeffs()), 0.0};
  out.margin = out.metric.min_eigenvalue();
  if (!(out.margin > 0.0)) throw PositivityLostError("(1,1)-form is not positive");
  return out;
}

double factorial(int k) {
  double r = 1.0;
  for (int i = 2; i <= k; ++i) r *= i;
  return r;
}

}  // namespace plurisym
