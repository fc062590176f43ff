#pragma once

// Exterior calculus for form fields on the flat torus C^n / Z^{2n}.
//
// Coordinates z^j = x^j + sqrt(-1) y^j with x^j, y^j in [0, 1).  The grid has
// N points per real axis, axes ordered (x^1, y^1, x^2, y^2, ...), row-major
// with the first axis slowest.  Derivatives are Fourier multipliers
//   d/dz^j    = (d/dx^j - sqrt(-1) d/dy^j) / 2,
//   d/dzbar^j = (d/dx^j + sqrt(-1) d/dy^j) / 2,
// with the Nyquist wavenumber differentiated to zero.  Dealiasing keeps the
// modes with |k| <= N/3 on every axis.
//
// Integrals of top forms identify a with density * dV_flat and return the
// grid mean of the density, so the flat torus has unit volume.

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "plurisym/pointwise_forms.hpp"

namespace plurisym {

class TorusGrid;
using GridPtr = std::shared_ptr<const TorusGrid>;

class TorusGrid {
 public:
  static constexpr std::size_t kDefaultNodeBudget = std::size_t{1} << 23;

  /// Requires 1 <= n <= kMaxDimension, N even and N >= 8 (N >= 4 is accepted
  /// for padded evaluation grids created internally), N^{2n} <= node_budget.
  static GridPtr create(int n, int points_per_axis, std::size_t node_budget = kDefaultNodeBudget);

  int dimension() const { return n_; }
  int points_per_axis() const { return points_; }
  int real_axes() const { return 2 * n_; }
  std::size_t nodes() const { return nodes_; }
  double spacing() const { return 1.0 / points_; }
  /// Largest |k| kept by the 2/3 rule.
  int dealias_cutoff() const { return points_ / 3; }

  /// Signed wavenumber of grid index m along one axis; 0 for the Nyquist index.
  int wavenumber(int m) const;

  /// Fourier-space visitor: f(node, k) with k the signed wavenumbers of all
  /// real axes (Nyquist reported as N/2, flagged via is_nyquist).
  template <class F>
  void for_each_mode(F&& f) const;

  bool is_nyquist(int k) const { return points_ % 2 == 0 && (k == points_ / 2 || k == -points_ / 2); }

  /// In-place FFT of `count` interleaved components (stride = count).
  void forward(std::span<Complex> data, int count) const;
  /// In-place normalized inverse FFT.
  void inverse(std::span<Complex> data, int count) const;

  /// Symbols of d/dz^j and d/dzbar^j at the wavenumbers (k_x, k_y) of x^j, y^j.
  Complex del_symbol(int kx, int ky) const;
  Complex del_bar_symbol(int kx, int ky) const;
  /// Whether every wavenumber lies inside the dealiasing band.
  bool in_band(const std::vector<int>& k) const;

  bool same_shape(const TorusGrid& other) const {
    return n_ == other.n_ && points_ == other.points_;
  }

  ~TorusGrid();
  TorusGrid(const TorusGrid&) = delete;
  TorusGrid& operator=(const TorusGrid&) = delete;

 private:
  TorusGrid(int n, int points);
  void transform(std::span<Complex> data, int count, int sign) const;

  int n_;
  int points_;
  std::size_t nodes_;
  struct PlanCache;
  std::unique_ptr<PlanCache> plans_;
};

template <class F>
void TorusGrid::for_each_mode(F&& f) const {
  const int axes = real_axes();
  std::vector<int> idx(axes, 0);
  std::vector<int> k(axes, 0);
  for (std::size_t node = 0; node < nodes_; ++node) {
    f(node, static_cast<const std::vector<int>&>(k));
    for (int a = axes - 1; a >= 0; --a) {
      if (++idx[a] < points_) {
        k[a] = idx[a] <= points_ / 2 ? idx[a] : idx[a] - points_;
        break;
      }
      idx[a] = 0;
      k[a] = 0;
    }
  }
}

/// A Form of one bidegree at every grid node, stored node-major.
/// A ScalarField is a FormField of bidegree (0,0).
class FormField {
 public:
  FormField() = default;
  FormField(GridPtr grid, Bidegree bidegree);

  static FormField constant(GridPtr grid, const Form& value);

  const TorusGrid& grid() const { return *grid_; }
  const GridPtr& grid_ptr() const { return grid_; }
  int dimension() const { return grid_->dimension(); }
  Bidegree bidegree() const { return bidegree_; }
  int components() const { return components_; }
  std::size_t nodes() const { return grid_->nodes(); }

  Complex* node(std::size_t i) { return data_.data() + i * components_; }
  const Complex* node(std::size_t i) const { return data_.data() + i * components_; }
  Form form_at(std::size_t i) const;
  void set_form(std::size_t i, const Form& f);

  std::vector<Complex>& data() { return data_; }
  const std::vector<Complex>& data() const { return data_; }

  FormField& operator+=(const FormField& other);
  FormField& operator-=(const FormField& other);
  FormField& operator*=(Complex s);
  /// this += s * x
  void axpy(Complex s, const FormField& x);

  friend FormField operator+(FormField a, const FormField& b) { return a += b; }
  friend FormField operator-(FormField a, const FormField& b) { return a -= b; }
  friend FormField operator*(FormField a, Complex s) { return a *= s; }
  friend FormField operator*(Complex s, FormField a) { return a *= s; }

  double max_abs() const;

 private:
  void require_compatible(const FormField& other) const;

  GridPtr grid_;
  Bidegree bidegree_{};
  int components_ = 0;
  std::vector<Complex> data_;
};

using ScalarField = FormField;

/// Hermitian metric at every node, read off a real positive (1,1) field.
class MetricField {
 public:
  /// Throws PositivityLostError if any node is not positive definite.
  static MetricField from_omega(const FormField& omega);
  static MetricField flat(GridPtr grid);

  const TorusGrid& grid() const { return *grid_; }
  const GridPtr& grid_ptr() const { return grid_; }
  const HermitianMetric& at(std::size_t i) const { return metrics_[i]; }
  std::size_t nodes() const { return metrics_.size(); }

  /// Smallest eigenvalue over all nodes.
  double min_margin() const;
  /// Largest eigenvalue over all nodes.
  double max_eigenvalue() const;
  /// Largest Hermiticity defect |g - g^H| over nodes (identically zero when
  /// built from a real (1,1) field).
  double hermiticity_defect() const;
  /// log det g, real, not truncated.
  ScalarField log_det() const;

 private:
  GridPtr grid_;
  std::vector<HermitianMetric> metrics_;
};

// ---------------------------------------------------------------- spectral

/// One term of a first-order operator: out[out] += sign * D_coordinate a[in].
struct DerivativeTerm {
  int out;
  int in;
  int coordinate;
  double sign;
};

/// Coefficient map of del (holomorphic = true) or del_bar on bidegree b.
/// Empty when the output degree would exceed (n, n).
std::vector<DerivativeTerm> derivative_terms(int n, Bidegree b, bool holomorphic);

/// Whether input spectra are truncated to the dealiasing band first.
enum class Truncate : bool { no = false, yes = true };

FormField del(const FormField& a, Truncate truncate = Truncate::no);
FormField del_bar(const FormField& a, Truncate truncate = Truncate::no);
/// 2/3-rule spectral truncation.
FormField dealias(const FormField& a);
/// Largest Fourier amplitude outside the dealiasing band, relative to the
/// largest amplitude overall.
double out_of_band_fraction(const FormField& a);
/// Zero-padding (or truncation) onto a grid of the same dimension.
FormField spectral_resample(const FormField& a, const GridPtr& target);

// ---------------------------------------------------------------- pointwise lifts

FormField wedge(const FormField& a, const FormField& b);
FormField conjugate(const FormField& a);
/// (a + conj a) / 2 for (p,p) fields.
FormField real_part(const FormField& a);
FormField hodge_star(const FormField& a, const MetricField& g);
FormField trace_g(const FormField& a, const MetricField& g);
/// Fundamental form of a metric field.
FormField fundamental_form(const MetricField& g);

// ---------------------------------------------------------------- global

/// Integral of a top (n,n) field; StructuralError otherwise.
Complex integrate(const FormField& top);
/// (a, b) = integral of <a, b>_g dV_g.
Complex global_inner_product(const FormField& a, const FormField& b, const MetricField& g);
/// Coordinate L2 norm: sqrt(mean over nodes of sum |coefficient|^2).
double l2_norm(const FormField& a);

/// dbar^* = - * d *  (complex-linear star, pointwise, no truncation).
FormField codifferential_del_bar_star(const FormField& a, const MetricField& g);
/// d^* = - * dbar *.
FormField codifferential_del_star(const FormField& a, const MetricField& g);

/// sqrt(-1) d dbar log det g with log det g truncated before and the result
/// truncated and made exactly real after differentiation.
FormField chern_form(const MetricField& g);

struct ResidualNorms {
  double d_omega = 0.0;        // ||d Omega||, Omega = phi + omega + conj(phi)
  double hs_constraint = 0.0;  // ||del omega + del_bar phi||
  double del_phi = 0.0;        // ||del phi||
  double pluriclosed = 0.0;    // ||del del_bar omega||
  double min_margin = 0.0;     // smallest metric eigenvalue over nodes
};

ResidualNorms residual_norms(const FormField& phi, const FormField& omega, const MetricField& g);

// ---------------------------------------------------------------- sampling

/// Random field whose Fourier coefficients are uniform in the unit complex
/// square for modes with |k| <= cutoff on every axis (mean mode excluded
/// unless include_mean), zero elsewhere.
FormField random_band_limited(const GridPtr& grid, Bidegree b, std::mt19937_64& rng, int cutoff,
                              bool include_mean = false);

/// Pairwise summation in a fixed order.
double pairwise_sum(std::span<const double> values);
Complex pairwise_sum(std::span<const Complex> values);

/// Uniform double in [-1, 1) from the raw engine output.
double uniform_signed(std::mt19937_64& rng);

}  // namespace plurisym
