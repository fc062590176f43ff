#include "plurisym/torus_calculus.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstddef>
#include <map>
#include <mutex>
#include <numbers>
#include <string>
#include <utility>

#include <fftw3.h>

namespace plurisym {

namespace {

// The FFTW planner is not thread-safe.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

using std::ptrdiff_t;

int parity(int k) { return (k & 1) ? -1 : 1; }

int count_below(IndexMask mask, int j) { return std::popcount(mask & ((IndexMask{1} << j) - 1)); }

bool in_band(const std::vector<int>& k, int cutoff) {
  for (int v : k)
    if (v > cutoff || v < -cutoff) return false;
  return true;
}

// Per-axis derivative symbol 2 pi i k, zero at the Nyquist index.
double axis_symbol(const TorusGrid& grid, int k) {
  return grid.is_nyquist(k) ? 0.0 : 2.0 * std::numbers::pi * k;
}

FormField first_order(const FormField& a, bool holomorphic, Truncate truncate) {
  const TorusGrid& grid = a.grid();
  const int n = grid.dimension();
  const auto [p, q] = a.bidegree();
  const Bidegree ob = holomorphic ? Bidegree{p + 1, q} : Bidegree{p, q + 1};
  if (ob.p > n || ob.q > n) return FormField(a.grid_ptr(), {std::min(ob.p, n), std::min(ob.q, n)});

  FormField out(a.grid_ptr(), ob);
  const std::vector<DerivativeTerm> terms = derivative_terms(n, a.bidegree(), holomorphic);
  const int nin = a.components(), nout = out.components();
  std::vector<Complex> spec = a.data();
  grid.forward(spec, nin);
  std::array<Complex, kMaxDimension> symbol{};
  grid.for_each_mode([&](std::size_t node, const std::vector<int>& k) {
    if (truncate == Truncate::yes && !grid.in_band(k)) return;
    for (int j = 0; j < n; ++j) {
      symbol[j] = holomorphic ? grid.del_symbol(k[2 * j], k[2 * j + 1]) : grid.del_bar_symbol(k[2 * j], k[2 * j + 1]);
    }
    const Complex* src = spec.data() + node * nin;
    Complex* dst = out.data().data() + node * nout;
    for (const DerivativeTerm& t : terms) dst[t.out] += t.sign * symbol[t.coordinate] * src[t.in];
  });
  grid.inverse(out.data(), nout);
  return out;
}

template <class F>
FormField pointwise_map(const FormField& a, Bidegree ob, F&& f) {
  FormField out(a.grid_ptr(), ob);
  const auto nodes = static_cast<ptrdiff_t>(a.nodes());
#pragma omp parallel for schedule(static)
  for (ptrdiff_t i = 0; i < nodes; ++i) out.set_form(i, f(static_cast<std::size_t>(i), a.form_at(i)));
  return out;
}

}  // namespace

// ---------------------------------------------------------------- grid

std::vector<DerivativeTerm> derivative_terms(int n, Bidegree b, bool holomorphic) {
  const auto [p, q] = b;
  const Bidegree ob = holomorphic ? Bidegree{p + 1, q} : Bidegree{p, q + 1};
  std::vector<DerivativeTerm> terms;
  if (ob.p > n || ob.q > n) return terms;
  const Form in_shape(n, b);
  const Form out_shape(n, ob);
  for (int o = 0; o < out_shape.size(); ++o) {
    const IndexMask hi = out_shape.holomorphic_mask(o);
    const IndexMask an = out_shape.antiholomorphic_mask(o);
    const IndexMask moving = holomorphic ? hi : an;
    for (int j = 0; j < n; ++j) {
      if (!(moving & (IndexMask{1} << j))) continue;
      const IndexMask rest = moving & ~(IndexMask{1} << j);
      // dz^j moves past the lower entries of I; dzbar^j also past all of dz^I.
      if (holomorphic) {
        terms.push_back({o, in_shape.index_of(rest, an), j, double(parity(count_below(rest, j)))});
      } else {
        terms.push_back({o, in_shape.index_of(hi, rest), j, double(parity(p) * parity(count_below(rest, j)))});
      }
    }
  }
  return terms;
}

Complex TorusGrid::del_symbol(int kx, int ky) const {
  const double dx = axis_symbol(*this, kx), dy = axis_symbol(*this, ky);
  // (i dx - i (i dy)) / 2
  return Complex(0.5 * dy, 0.5 * dx);
}

Complex TorusGrid::del_bar_symbol(int kx, int ky) const {
  const double dx = axis_symbol(*this, kx), dy = axis_symbol(*this, ky);
  return Complex(-0.5 * dy, 0.5 * dx);
}

bool TorusGrid::in_band(const std::vector<int>& k) const { return plurisym::in_band(k, dealias_cutoff()); }

struct TorusGrid::PlanCache {
  std::map<std::pair<int, int>, fftw_plan> plans;
  std::mutex mutex;
};

TorusGrid::TorusGrid(int n, int points) : n_(n), points_(points), plans_(std::make_unique<PlanCache>()) {
  nodes_ = 1;
  for (int a = 0; a < 2 * n; ++a) nodes_ *= static_cast<std::size_t>(points);
}

TorusGrid::~TorusGrid() {
  std::lock_guard<std::mutex> lock(planner_mutex());
  for (auto& [key, plan] : plans_->plans) fftw_destroy_plan(plan);
}

GridPtr TorusGrid::create(int n, int points_per_axis, std::size_t node_budget) {
  if (n < 1 || n > kMaxDimension) {
    throw PreconditionError("torus dimension must be between 1 and " + std::to_string(kMaxDimension));
  }
  if (points_per_axis < 4 || points_per_axis % 2 != 0) {
    throw PreconditionError("points per axis must be even and at least 4, got " +
                            std::to_string(points_per_axis));
  }
  double nodes = 1.0;
  for (int a = 0; a < 2 * n; ++a) nodes *= points_per_axis;
  if (nodes > static_cast<double>(node_budget)) {
    throw PreconditionError("grid of " + std::to_string(points_per_axis) + "^" + std::to_string(2 * n) +
                            " nodes exceeds the memory budget of " + std::to_string(node_budget) + " nodes");
  }
  return GridPtr(new TorusGrid(n, points_per_axis));
}

int TorusGrid::wavenumber(int m) const {
  const int k = m <= points_ / 2 ? m : m - points_;
  return is_nyquist(k) ? 0 : k;
}

void TorusGrid::transform(std::span<Complex> data, int count, int sign) const {
  if (data.size() != nodes_ * static_cast<std::size_t>(count)) {
    throw StructuralError("FFT buffer size does not match the grid");
  }
  fftw_plan plan = nullptr;
  {
    std::lock_guard<std::mutex> cache_lock(plans_->mutex);
    auto it = plans_->plans.find({1, sign});
    if (it == plans_->plans.end()) {
      std::lock_guard<std::mutex> lock(planner_mutex());
      std::vector<int> dims(2 * n_, points_);
      auto* buf = fftw_alloc_complex(nodes_);
      plan = fftw_plan_dft(2 * n_, dims.data(), buf, buf, sign, FFTW_ESTIMATE);
      fftw_free(buf);
      if (plan == nullptr) throw NumericalError("FFTW failed to create a plan");
      plans_->plans.emplace(std::make_pair(1, sign), plan);
    } else {
      plan = it->second;
    }
  }
  // Transpose to component-major, one aligned transform per component.
  const std::size_t total = nodes_ * static_cast<std::size_t>(count);
  std::unique_ptr<fftw_complex, decltype(&fftw_free)> scratch(fftw_alloc_complex(total), &fftw_free);
  auto* work = reinterpret_cast<Complex*>(scratch.get());
  if (count == 1) {
    std::copy(data.begin(), data.end(), work);
  } else {
    for (std::size_t i = 0; i < nodes_; ++i)
      for (int c = 0; c < count; ++c) work[c * nodes_ + i] = data[i * count + c];
  }
  for (int c = 0; c < count; ++c) {
    fftw_execute_dft(plan, scratch.get() + c * nodes_, scratch.get() + c * nodes_);
  }
  if (count == 1) {
    std::copy(work, work + total, data.begin());
  } else {
    for (std::size_t i = 0; i < nodes_; ++i)
      for (int c = 0; c < count; ++c) data[i * count + c] = work[c * nodes_ + i];
  }
}

void TorusGrid::forward(std::span<Complex> data, int count) const { transform(data, count, FFTW_FORWARD); }

void TorusGrid::inverse(std::span<Complex> data, int count) const {
  transform(data, count, FFTW_BACKWARD);
  const double scale = 1.0 / static_cast<double>(nodes_);
  for (Complex& v : data) v *= scale;
}

// ---------------------------------------------------------------- fields

FormField::FormField(GridPtr grid, Bidegree bidegree) : grid_(std::move(grid)), bidegree_(bidegree) {
  if (!grid_) throw StructuralError("form field needs a grid");
  const int n = grid_->dimension();
  if (bidegree.p < 0 || bidegree.q < 0 || bidegree.p > n || bidegree.q > n) {
    throw StructuralError("bidegree out of range for dimension " + std::to_string(n));
  }
  components_ = multi_index::binomial(n, bidegree.p) * multi_index::binomial(n, bidegree.q);
  data_.assign(grid_->nodes() * components_, Complex(0.0));
}

FormField FormField::constant(GridPtr grid, const Form& value) {
  FormField f(std::move(grid), value.bidegree());
  if (value.dimension() != f.dimension()) throw StructuralError("constant form has the wrong dimension");
  for (std::size_t i = 0; i < f.nodes(); ++i) f.set_form(i, value);
  return f;
}

Form FormField::form_at(std::size_t i) const {
  Form f(dimension(), bidegree_);
  std::copy_n(node(i), components_, f.coeffs().begin());
  return f;
}

void FormField::set_form(std::size_t i, const Form& f) {
  if (f.bidegree() != bidegree_ || f.dimension() != dimension()) {
    throw StructuralError("form does not match the field bidegree");
  }
  std::copy_n(f.coeffs().begin(), components_, node(i));
}

void FormField::require_compatible(const FormField& other) const {
  if (!grid_->same_shape(*other.grid_) || bidegree_ != other.bidegree_) {
    throw StructuralError("form fields live on different grids or bidegrees");
  }
}

FormField& FormField::operator+=(const FormField& other) {
  require_compatible(other);
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

FormField& FormField::operator-=(const FormField& other) {
  require_compatible(other);
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

FormField& FormField::operator*=(Complex s) {
  for (Complex& v : data_) v *= s;
  return *this;
}

void FormField::axpy(Complex s, const FormField& x) {
  require_compatible(x);
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += s * x.data_[i];
}

double FormField::max_abs() const {
  double m = 0.0;
  for (const Complex& v : data_) m = std::max(m, std::abs(v));
  return m;
}

// ---------------------------------------------------------------- metric field

MetricField MetricField::from_omega(const FormField& omega) {
  if (omega.bidegree() != Bidegree{1, 1}) throw StructuralError("metric field needs a (1,1) field");
  MetricField out;
  out.grid_ = omega.grid_ptr();
  out.metrics_.resize(omega.nodes());
  const int n = omega.dimension();
  const auto nodes = static_cast<ptrdiff_t>(omega.nodes());
  std::atomic<ptrdiff_t> failed{nodes};
#pragma omp parallel for schedule(static)
  for (ptrdiff_t i = 0; i < nodes; ++i) {
    try {
      out.metrics_[i] =
          metric_of_form_unchecked(n, std::span<const Complex>(omega.node(i), static_cast<std::size_t>(n * n)));
    } catch (const Error&) {
      ptrdiff_t cur = failed.load();
      while (i < cur && !failed.compare_exchange_weak(cur, i)) {
      }
    }
  }
  if (failed.load() < nodes) {
    throw PositivityLostError("metric is not positive definite at grid node " + std::to_string(failed.load()));
  }
  return out;
}

MetricField MetricField::flat(GridPtr grid) {
  MetricField out;
  out.metrics_.assign(grid->nodes(), HermitianMetric::identity(grid->dimension()));
  out.grid_ = std::move(grid);
  return out;
}

double MetricField::min_margin() const {
  double m = std::numeric_limits<double>::infinity();
  const auto nodes = static_cast<ptrdiff_t>(metrics_.size());
#pragma omp parallel for reduction(min : m) schedule(static)
  for (ptrdiff_t i = 0; i < nodes; ++i) m = std::min(m, metrics_[i].min_eigenvalue());
  return m;
}

double MetricField::max_eigenvalue() const {
  double m = -std::numeric_limits<double>::infinity();
  const auto nodes = static_cast<ptrdiff_t>(metrics_.size());
#pragma omp parallel for reduction(max : m) schedule(static)
  for (ptrdiff_t i = 0; i < nodes; ++i) m = std::max(m, metrics_[i].max_eigenvalue());
  return m;
}

double MetricField::hermiticity_defect() const {
  double m = 0.0;
  for (const HermitianMetric& g : metrics_) {
    const int n = g.dimension();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) m = std::max(m, std::abs(g.g(i, j) - std::conj(g.g(j, i))));
  }
  return m;
}

ScalarField MetricField::log_det() const {
  ScalarField out(grid_, {0, 0});
  for (std::size_t i = 0; i < metrics_.size(); ++i) out.node(i)[0] = std::log(metrics_[i].det());
  return out;
}

// ---------------------------------------------------------------- spectral

FormField del(const FormField& a, Truncate truncate) { return first_order(a, true, truncate); }

FormField del_bar(const FormField& a, Truncate truncate) { return first_order(a, false, truncate); }

FormField dealias(const FormField& a) {
  const TorusGrid& grid = a.grid();
  FormField out = a;
  const int c = a.components();
  grid.forward(out.data(), c);
  const int cutoff = grid.dealias_cutoff();
  grid.for_each_mode([&](std::size_t node, const std::vector<int>& k) {
    if (!in_band(k, cutoff)) std::fill_n(out.node(node), c, Complex(0.0));
  });
  grid.inverse(out.data(), c);
  return out;
}

double out_of_band_fraction(const FormField& a) {
  const TorusGrid& grid = a.grid();
  std::vector<Complex> spec = a.data();
  const int c = a.components();
  grid.forward(spec, c);
  const int cutoff = grid.dealias_cutoff();
  double outside = 0.0, overall = 0.0;
  grid.for_each_mode([&](std::size_t node, const std::vector<int>& k) {
    const bool inside = in_band(k, cutoff);
    for (int i = 0; i < c; ++i) {
      const double v = std::abs(spec[node * c + i]);
      overall = std::max(overall, v);
      if (!inside) outside = std::max(outside, v);
    }
  });
  return overall == 0.0 ? 0.0 : outside / overall;
}

FormField spectral_resample(const FormField& a, const GridPtr& target) {
  const TorusGrid& src = a.grid();
  if (target->dimension() != src.dimension()) throw StructuralError("resampling needs equal dimensions");
  const int c = a.components();
  const int m = target->points_per_axis();
  std::vector<Complex> spec = a.data();
  src.forward(spec, c);
  FormField out(target, a.bidegree());
  const double scale = static_cast<double>(target->nodes()) / static_cast<double>(src.nodes());
  const int axes = src.real_axes();
  src.for_each_mode([&](std::size_t node, const std::vector<int>& k) {
    std::size_t dst = 0;
    for (int ax = 0; ax < axes; ++ax) {
      if (src.is_nyquist(k[ax]) || 2 * std::abs(k[ax]) >= m) return;
      dst = dst * m + static_cast<std::size_t>((k[ax] + m) % m);
    }
    for (int i = 0; i < c; ++i) out.node(dst)[i] = scale * spec[node * c + i];
  });
  target->inverse(out.data(), c);
  return out;
}

// ---------------------------------------------------------------- pointwise lifts

FormField wedge(const FormField& a, const FormField& b) {
  if (!a.grid().same_shape(b.grid())) throw StructuralError("wedge of fields on different grids");
  const int n = a.dimension();
  const Bidegree ba = a.bidegree(), bb = b.bidegree();
  FormField out(a.grid_ptr(), {std::min(ba.p + bb.p, n), std::min(ba.q + bb.q, n)});
  const std::vector<WedgeTerm> terms = wedge_terms(n, ba, bb);
  if (terms.empty()) return out;
  const auto nodes = static_cast<ptrdiff_t>(a.nodes());
#pragma omp parallel for schedule(static)
  for (ptrdiff_t i = 0; i < nodes; ++i) {
    const Complex* x = a.node(i);
    const Complex* y = b.node(i);
    Complex* r = out.node(i);
    for (const WedgeTerm& t : terms) r[t.out] += t.sign * x[t.a] * y[t.b];
  }
  return out;
}

FormField conjugate(const FormField& a) {
  const Bidegree b = a.bidegree();
  return pointwise_map(a, {b.q, b.p}, [](std::size_t, const Form& x) { return conjugate(x); });
}

FormField real_part(const FormField& a) {
  if (a.bidegree().p != a.bidegree().q) throw StructuralError("real part needs a (p,p) field");
  FormField out = conjugate(a);
  out += a;
  out *= 0.5;
  return out;
}

FormField hodge_star(const FormField& a, const MetricField& g) {
  const int n = a.dimension();
  const Bidegree b = a.bidegree();
  return pointwise_map(a, {n - b.q, n - b.p},
                       [&](std::size_t i, const Form& x) { return hodge_star_point(x, g.at(i)); });
}

FormField trace_g(const FormField& a, const MetricField& g) {
  const Bidegree b = a.bidegree();
  return pointwise_map(a, {std::max(b.p - 1, 0), std::max(b.q - 1, 0)},
                       [&](std::size_t i, const Form& x) { return trace_g_point(x, g.at(i)); });
}

FormField fundamental_form(const MetricField& g) {
  FormField out(g.grid_ptr(), {1, 1});
  for (std::size_t i = 0; i < g.nodes(); ++i) out.set_form(i, fundamental_form(g.at(i)));
  return out;
}

// ---------------------------------------------------------------- global

double pairwise_sum(std::span<const double> values) {
  if (values.size() <= 8) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

Complex pairwise_sum(std::span<const Complex> values) {
  if (values.size() <= 8) {
    Complex s = 0.0;
    for (const Complex& v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

Complex integrate(const FormField& top) {
  const int n = top.dimension();
  if (top.bidegree() != Bidegree{n, n}) throw StructuralError("only top-degree fields can be integrated");
  std::vector<Complex> density(top.nodes());
  for (std::size_t i = 0; i < top.nodes(); ++i) density[i] = top.node(i)[0];
  return pairwise_sum(density) / static_cast<double>(top.nodes()) / flat_volume_coefficient(n);
}

Complex global_inner_product(const FormField& a, const FormField& b, const MetricField& g) {
  if (a.bidegree() != b.bidegree() || !a.grid().same_shape(b.grid())) {
    throw StructuralError("inner product of incompatible fields");
  }
  std::vector<Complex> density(a.nodes());
  const auto nodes = static_cast<ptrdiff_t>(a.nodes());
#pragma omp parallel for schedule(static)
  for (ptrdiff_t i = 0; i < nodes; ++i) {
    density[i] = inner_product_point(a.form_at(i), b.form_at(i), g.at(i)) * g.at(i).det();
  }
  return pairwise_sum(density) / static_cast<double>(a.nodes());
}

double l2_norm(const FormField& a) {
  std::vector<double> density(a.nodes(), 0.0);
  const int c = a.components();
  for (std::size_t i = 0; i < a.nodes(); ++i) {
    const Complex* x = a.node(i);
    for (int j = 0; j < c; ++j) density[i] += std::norm(x[j]);
  }
  return std::sqrt(pairwise_sum(density) / static_cast<double>(a.nodes()));
}

FormField codifferential_del_bar_star(const FormField& a, const MetricField& g) {
  const auto [p, q] = a.bidegree();
  if (q == 0) return FormField(a.grid_ptr(), {p, 0});
  FormField out = hodge_star(del(hodge_star(a, g)), g);
  out *= -1.0;
  return out;
}

FormField codifferential_del_star(const FormField& a, const MetricField& g) {
  const auto [p, q] = a.bidegree();
  if (p == 0) return FormField(a.grid_ptr(), {0, q});
  FormField out = hodge_star(del_bar(hodge_star(a, g)), g);
  out *= -1.0;
  return out;
}

FormField chern_form(const MetricField& g) {
  const TorusGrid& grid = g.grid();
  const int n = grid.dimension();
  ScalarField l = g.log_det();
  grid.forward(l.data(), 1);
  FormField out(g.grid_ptr(), {1, 1});
  const Form shape(n, {1, 1});
  const int c = shape.size();
  const int cutoff = grid.dealias_cutoff();
  grid.for_each_mode([&](std::size_t node, const std::vector<int>& k) {
    if (!in_band(k, cutoff)) return;
    const Complex v = Complex(0.0, 1.0) * l.node(node)[0];
    Complex* dst = out.node(node);
    for (int i = 0; i < n; ++i) {
      const Complex di = grid.del_symbol(k[2 * i], k[2 * i + 1]) * v;
      for (int j = 0; j < n; ++j) dst[i * n + j] = di * grid.del_bar_symbol(k[2 * j], k[2 * j + 1]);
    }
  });
  grid.inverse(out.data(), c);
  return real_part(out);
}

ResidualNorms residual_norms(const FormField& phi, const FormField& omega, const MetricField& g) {
  ResidualNorms r;
  const FormField phi_bar = conjugate(phi);
  const FormField d_phi = del(phi);
  FormField constraint = del(omega);
  constraint += del_bar(phi);
  FormField conj_constraint = del_bar(omega);
  conj_constraint += del(phi_bar);
  const FormField d_phi_bar = del_bar(phi_bar);
  const double a = l2_norm(d_phi), b = l2_norm(constraint), c = l2_norm(conj_constraint), d = l2_norm(d_phi_bar);
  r.d_omega = std::sqrt(a * a + b * b + c * c + d * d);
  r.hs_constraint = b;
  r.del_phi = a;
  r.pluriclosed = l2_norm(del(del_bar(omega)));
  r.min_margin = g.min_margin();
  return r;
}

// ---------------------------------------------------------------- sampling

double uniform_signed(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53 * 2.0 - 1.0; }

FormField random_band_limited(const GridPtr& grid, Bidegree b, std::mt19937_64& rng, int cutoff, bool include_mean) {
  if (cutoff < 0 || 2 * cutoff >= grid->points_per_axis()) {
    throw PreconditionError("mode cutoff must stay below the Nyquist wavenumber");
  }
  FormField out(grid, b);
  const int c = out.components();
  const double scale = static_cast<double>(grid->nodes());
  grid->for_each_mode([&](std::size_t node, const std::vector<int>& k) {
    if (!in_band(k, cutoff)) return;
    if (!include_mean && std::all_of(k.begin(), k.end(), [](int v) { return v == 0; })) return;
    for (int i = 0; i < c; ++i) {
      const double re = uniform_signed(rng);
      const double im = uniform_signed(rng);
      out.node(node)[i] = scale * Complex(re, im);
    }
  });
  grid->inverse(out.data(), c);
  return out;
}

}  // namespace plurisym
