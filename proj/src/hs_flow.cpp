#include "plurisym/hs_flow.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "plurisym/volume_functionals.hpp"

namespace plurisym {

namespace {

using std::ptrdiff_t;
constexpr Complex kI{0.0, 1.0};

// Cholesky factorization of a Hermitian g; writes g^{-1} row-major and
// log det g.  Returns false if g is not positive definite.
template <int n>
bool factor_metric(const Complex* g, Complex* inv, double& log_det) {
  Complex l[n * n]{};
  double inv_diag[n];
  log_det = 0.0;
  for (int j = 0; j < n; ++j) {
    double d = g[j * n + j].real();
    for (int k = 0; k < j; ++k) d -= std::norm(l[j * n + k]);
    if (!(d > 0.0)) return false;
    const double ljj = std::sqrt(d);
    log_det += std::log(d);
    l[j * n + j] = ljj;
    inv_diag[j] = 1.0 / ljj;
    for (int i = j + 1; i < n; ++i) {
      Complex s = g[i * n + j];
      for (int k = 0; k < j; ++k) s -= l[i * n + k] * std::conj(l[j * n + k]);
      l[i * n + j] = s * inv_diag[j];
    }
  }
  Complex m[n * n]{};
  for (int c = 0; c < n; ++c) {
    for (int r = c; r < n; ++r) {
      Complex s = (r == c) ? 1.0 : 0.0;
      for (int k = c; k < r; ++k) s -= l[r * n + k] * m[k * n + c];
      m[r * n + c] = s * inv_diag[r];
    }
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      Complex s = 0.0;
      for (int k = std::max(i, j); k < n; ++k) s += std::conj(m[k * n + i]) * m[k * n + j];
      inv[i * n + j] = s;
    }
  }
  return true;
}

// Mean square of a field from its unnormalized spectrum (Parseval).
double spectral_mean_square(std::vector<double>& per_node, double nodes) {
  return pairwise_sum(per_node) / (nodes * nodes);
}

// Flow right-hand side evaluated with the state held in Fourier space.
class FlowKernel {
 public:
  struct Spectral {
    std::vector<Complex> omega;
    std::vector<Complex> phi;
  };

  struct Norms {
    double d_omega = 0.0;
    double constraint = 0.0;
    double del_phi = 0.0;
    double pluriclosed = 0.0;
  };

  explicit FlowKernel(GridPtr grid)
      : grid_(std::move(grid)),
        n_(grid_->dimension()),
        nodes_(grid_->nodes()),
        n_omega_(n_ * n_),
        n_phi_(multi_index::binomial(n_, 2)),
        n_upper_(n_ * (n_ + 1) / 2),
        n_21_(multi_index::binomial(n_, 2) * n_),
        del_omega_(derivative_terms(n_, {1, 1}, true)),
        del_bar_omega_(derivative_terms(n_, {1, 1}, false)),
        del_bar_phi_(derivative_terms(n_, {2, 0}, false)),
        del_phi_(derivative_terms(n_, {2, 0}, true)),
        del_bar_x_(derivative_terms(n_, {1, 0}, false)),
        del_z_(derivative_terms(n_, {1, 0}, true)),
        del_conj_phi_(derivative_terms(n_, {0, 2}, true)),
        del_12_(derivative_terms(n_, {1, 2}, true)),
        trace_21_(trace_terms(n_, {2, 1})) {
    for (int i = 0; i < n_; ++i)
      for (int j = i; j < n_; ++j) upper_.push_back(i * n_ + j);
    sym_del_.resize(nodes_ * n_);
    sym_del_bar_.resize(nodes_ * n_);
    band_.resize(nodes_);
    mirror_.resize(nodes_);
    const int points = grid_->points_per_axis();
    grid_->for_each_mode([&](std::size_t node, const std::vector<int>& k) {
      for (int j = 0; j < n_; ++j) {
        sym_del_[node * n_ + j] = grid_->del_symbol(k[2 * j], k[2 * j + 1]);
        sym_del_bar_[node * n_ + j] = grid_->del_bar_symbol(k[2 * j], k[2 * j + 1]);
      }
      band_[node] = grid_->in_band(k);
      if (band_[node]) band_nodes_.push_back(node);
      std::size_t m = 0;
      for (int v : k) m = m * points + static_cast<std::size_t>(((-v) % points + points) % points);
      mirror_[node] = m;
    });
    c1_ = n_upper_ + 2 * n_21_;
    c2_ = 2 * n_ + 1;
    b1_.resize(nodes_ * c1_);
    b2_.resize(nodes_ * c2_);
    s_.resize(nodes_ * n_omega_);
  }

  const GridPtr& grid() const { return grid_; }

  Spectral to_spectral(const FormField& phi, const FormField& omega) const {
    Spectral s{omega.data(), phi.data()};
    grid_->forward(s.omega, n_omega_);
    grid_->forward(s.phi, n_phi_);
    for (std::size_t node = 0; node < nodes_; ++node) {
      if (band_[node]) continue;
      std::fill_n(s.omega.begin() + node * n_omega_, n_omega_, Complex(0.0));
      std::fill_n(s.phi.begin() + node * n_phi_, n_phi_, Complex(0.0));
    }
    return s;
  }

  // omega is rebuilt from its upper triangle so that it is exactly real.
  void to_physical(const Spectral& s, FormField& phi, FormField& omega) const {
    phi = FormField(grid_, {2, 0});
    phi.data() = s.phi;
    grid_->inverse(phi.data(), n_phi_);
    std::vector<Complex> up(nodes_ * n_upper_);
    for (std::size_t node = 0; node < nodes_; ++node)
      for (int u = 0; u < n_upper_; ++u) up[node * n_upper_ + u] = s.omega[node * n_omega_ + upper_[u]];
    grid_->inverse(up, n_upper_);
    omega = FormField(grid_, {1, 1});
    for (std::size_t node = 0; node < nodes_; ++node) {
      Complex* w = omega.node(node);
      for (int u = 0; u < n_upper_; ++u) {
        const int i = upper_[u] / n_, j = upper_[u] % n_;
        const Complex v = up[node * n_upper_ + u];
        if (i == j) {
          w[i * n_ + i] = Complex(0.0, v.imag());
        } else {
          w[i * n_ + j] = v;
          w[j * n_ + i] = -std::conj(v);
        }
      }
    }
  }

  void rhs(const Spectral& s, Spectral& out) {
    // Spectra of the upper triangle of omega, del omega and dbar phi.
    std::fill(b1_.begin(), b1_.end(), Complex(0.0));
    for (const std::size_t node : band_nodes_) {
      const Complex* w = s.omega.data() + node * n_omega_;
      const Complex* p = s.phi.data() + node * n_phi_;
      const Complex* sd = sym_del_.data() + node * n_;
      const Complex* sb = sym_del_bar_.data() + node * n_;
      Complex* b = b1_.data() + node * c1_;
      for (int u = 0; u < n_upper_; ++u) b[u] = w[upper_[u]];
      for (const DerivativeTerm& t : del_omega_) b[n_upper_ + t.out] += t.sign * sd[t.coordinate] * w[t.in];
      for (const DerivativeTerm& t : del_bar_phi_)
        b[n_upper_ + n_21_ + t.out] += t.sign * sb[t.coordinate] * p[t.in];
    }
    grid_->inverse(b1_, c1_);

    // Pointwise: metric, X = tr_g(del omega), Z = tr_g(dbar phi), log det g.
    std::ptrdiff_t failed = -1;
    switch (n_) {
      case 1: failed = pointwise<1>(); break;
      case 2: failed = pointwise<2>(); break;
      case 3: failed = pointwise<3>(); break;
      default: failed = pointwise<4>(); break;
    }
    if (failed >= 0) {
      throw PositivityLostError("metric is not positive definite at grid node " + std::to_string(failed));
    }
    grid_->forward(b2_, c2_);

    // S = dbar P[X] + (sqrt(-1)/2) del dbar P[log det g];  omega rhs = S + conj(S).
    out.omega.assign(nodes_ * n_omega_, Complex(0.0));
    out.phi.assign(nodes_ * n_phi_, Complex(0.0));
    std::fill(s_.begin(), s_.end(), Complex(0.0));
    for (const std::size_t node : band_nodes_) {
      const Complex* x = b2_.data() + node * c2_;
      const Complex* sd = sym_del_.data() + node * n_;
      const Complex* sb = sym_del_bar_.data() + node * n_;
      Complex* sv = s_.data() + node * n_omega_;
      for (const DerivativeTerm& t : del_bar_x_) sv[t.out] += t.sign * sb[t.coordinate] * x[t.in];
      const Complex half_l = 0.5 * kI * x[2 * n_];
      for (int i = 0; i < n_; ++i)
        for (int j = 0; j < n_; ++j) sv[i * n_ + j] += sd[i] * sb[j] * half_l;
      Complex* dp = out.phi.data() + node * n_phi_;
      for (const DerivativeTerm& t : del_z_) dp[t.out] -= t.sign * sd[t.coordinate] * x[n_ + t.in];
    }
    for (const std::size_t node : band_nodes_) {
      const Complex* a = s_.data() + node * n_omega_;
      const Complex* b = s_.data() + mirror_[node] * n_omega_;
      Complex* r = out.omega.data() + node * n_omega_;
      for (int i = 0; i < n_; ++i)
        for (int j = 0; j < n_; ++j) r[i * n_ + j] = a[i * n_ + j] - std::conj(b[j * n_ + i]);
    }
  }

  // Returns the first node where g fails to be positive, or -1.
  template <int n>
  std::ptrdiff_t pointwise() {
    const auto nodes = static_cast<std::ptrdiff_t>(nodes_);
    std::atomic<std::ptrdiff_t> failed{nodes};
    constexpr int n_upper = n * (n + 1) / 2;
    constexpr int c2 = 2 * n + 1;
    const int c1 = c1_;
    const int n_21 = n_21_;
    const TraceTerm* terms = trace_21_.data();
    const std::size_t n_terms = trace_21_.size();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t node = 0; node < nodes; ++node) {
      const Complex* b = b1_.data() + node * c1;
      Complex g[n * n];
      int u = 0;
      for (int i = 0; i < n; ++i) {
        g[i * n + i] = b[u++].imag();
        for (int j = i + 1; j < n; ++j, ++u) {
          g[i * n + j] = Complex(b[u].imag(), -b[u].real());
          g[j * n + i] = std::conj(g[i * n + j]);
        }
      }
      Complex inv[n * n];
      double log_det = 0.0;
      Complex* x = b2_.data() + node * c2;
      if (!factor_metric<n>(g, inv, log_det)) {
        std::ptrdiff_t cur = failed.load();
        while (node < cur && !failed.compare_exchange_weak(cur, node)) {
        }
        std::fill_n(x, c2, Complex(0.0));
        continue;
      }
      std::fill_n(x, 2 * n, Complex(0.0));
      const Complex* dw = b + n_upper;
      const Complex* dp = b + n_upper + n_21;
      for (std::size_t k = 0; k < n_terms; ++k) {
        const TraceTerm& t = terms[k];
        const Complex c = t.sign * inv[t.t * n + t.s];
        x[t.out] += c * dw[t.in];
        x[n + t.out] += c * dp[t.in];
      }
      x[2 * n] = log_det;
    }
    const std::ptrdiff_t f = failed.load();
    return f < nodes ? f : -1;
  }

  Norms residuals(const Spectral& s) const {
    std::vector<double> c(nodes_), cc(nodes_), dp(nodes_), dpb(nodes_), pc(nodes_);
    const int n_30 = multi_index::binomial(n_, 3);
    const int n_12 = n_21_;
    const int n_22 = n_phi_ * n_phi_;
    const int n_03 = n_30;
    std::vector<Complex> t21(n_21_), t12(n_12), t30(std::max(n_30, 1)), t03(std::max(n_03, 1)), t22(n_22);
    for (const std::size_t node : band_nodes_) {
      const Complex* w = s.omega.data() + node * n_omega_;
      const Complex* p = s.phi.data() + node * n_phi_;
      const Complex* sd = sym_del_.data() + node * n_;
      const Complex* sb = sym_del_bar_.data() + node * n_;
      // conj(phi) at this mode: coefficient of dzbar^I is conj(phi_I(-k)).
      const Complex* pm = s.phi.data() + mirror_[node] * n_phi_;
      std::fill(t21.begin(), t21.end(), Complex(0.0));
      std::fill(t12.begin(), t12.end(), Complex(0.0));
      std::fill(t30.begin(), t30.end(), Complex(0.0));
      std::fill(t03.begin(), t03.end(), Complex(0.0));
      std::fill(t22.begin(), t22.end(), Complex(0.0));
      for (const DerivativeTerm& t : del_omega_) t21[t.out] += t.sign * sd[t.coordinate] * w[t.in];
      for (const DerivativeTerm& t : del_bar_phi_) t21[t.out] += t.sign * sb[t.coordinate] * p[t.in];
      for (const DerivativeTerm& t : del_bar_omega_) t12[t.out] += t.sign * sb[t.coordinate] * w[t.in];
      for (const DerivativeTerm& t : del_conj_phi_) t12[t.out] += t.sign * sd[t.coordinate] * std::conj(pm[t.in]);
      for (const DerivativeTerm& t : del_phi_) t30[t.out] += t.sign * sd[t.coordinate] * p[t.in];
      // dbar conj(phi) = conj(del phi) has the same norm as del phi.
      for (const DerivativeTerm& t : del_12_) {
        Complex v = 0.0;
        for (const DerivativeTerm& u : del_bar_omega_)
          if (u.out == t.in) v += u.sign * sb[u.coordinate] * w[u.in];
        t22[t.out] += t.sign * sd[t.coordinate] * v;
      }
      auto sq = [](const std::vector<Complex>& v) {
        double a = 0.0;
        for (const Complex& z : v) a += std::norm(z);
        return a;
      };
      c[node] = sq(t21);
      cc[node] = sq(t12);
      dp[node] = n_30 > 0 ? sq(t30) : 0.0;
      pc[node] = sq(t22);
    }
    const double nn = static_cast<double>(nodes_);
    Norms r;
    const double mc = spectral_mean_square(c, nn), mcc = spectral_mean_square(cc, nn);
    const double mdp = spectral_mean_square(dp, nn);
    r.constraint = std::sqrt(mc);
    r.del_phi = std::sqrt(mdp);
    r.d_omega = std::sqrt(mc + mcc + 2.0 * mdp);
    r.pluriclosed = std::sqrt(spectral_mean_square(pc, nn));
    return r;
  }

  // Constraint and del phi norms only (checked after every step).
  std::pair<double, double> constraint_norms(const Spectral& s) const {
    std::vector<double> c(nodes_), dp(nodes_);
    std::vector<Complex> t21(n_21_), t30(std::max(multi_index::binomial(n_, 3), 1));
    for (const std::size_t node : band_nodes_) {
      const Complex* w = s.omega.data() + node * n_omega_;
      const Complex* p = s.phi.data() + node * n_phi_;
      const Complex* sd = sym_del_.data() + node * n_;
      const Complex* sb = sym_del_bar_.data() + node * n_;
      std::fill(t21.begin(), t21.end(), Complex(0.0));
      std::fill(t30.begin(), t30.end(), Complex(0.0));
      for (const DerivativeTerm& t : del_omega_) t21[t.out] += t.sign * sd[t.coordinate] * w[t.in];
      for (const DerivativeTerm& t : del_bar_phi_) t21[t.out] += t.sign * sb[t.coordinate] * p[t.in];
      for (const DerivativeTerm& t : del_phi_) t30[t.out] += t.sign * sd[t.coordinate] * p[t.in];
      double a = 0.0, b = 0.0;
      for (const Complex& z : t21) a += std::norm(z);
      for (const Complex& z : t30) b += std::norm(z);
      c[node] = a;
      dp[node] = b;
    }
    const double nn = static_cast<double>(nodes_);
    return {std::sqrt(spectral_mean_square(c, nn)), std::sqrt(spectral_mean_square(dp, nn))};
  }

  void rk4(Spectral& y, double dt) {
    auto combine = [](const Spectral& a, double h, const Spectral& k) {
      Spectral r = a;
      for (std::size_t i = 0; i < r.omega.size(); ++i) r.omega[i] += h * k.omega[i];
      for (std::size_t i = 0; i < r.phi.size(); ++i) r.phi[i] += h * k.phi[i];
      return r;
    };
    Spectral k1, k2, k3, k4;
    rhs(y, k1);
    rhs(combine(y, 0.5 * dt, k1), k2);
    rhs(combine(y, 0.5 * dt, k2), k3);
    rhs(combine(y, dt, k3), k4);
    const double w = dt / 6.0;
    for (std::size_t i = 0; i < y.omega.size(); ++i)
      y.omega[i] += w * (k1.omega[i] + 2.0 * k2.omega[i] + 2.0 * k3.omega[i] + k4.omega[i]);
    for (std::size_t i = 0; i < y.phi.size(); ++i)
      y.phi[i] += w * (k1.phi[i] + 2.0 * k2.phi[i] + 2.0 * k3.phi[i] + k4.phi[i]);
  }

 private:
  GridPtr grid_;
  int n_;
  std::size_t nodes_;
  int n_omega_, n_phi_, n_upper_, n_21_;
  int c1_ = 0, c2_ = 0;
  std::vector<DerivativeTerm> del_omega_, del_bar_omega_, del_bar_phi_, del_phi_, del_bar_x_, del_z_, del_conj_phi_,
      del_12_;
  std::vector<TraceTerm> trace_21_;
  std::vector<int> upper_;
  std::vector<Complex> sym_del_, sym_del_bar_;
  std::vector<char> band_;
  std::vector<std::size_t> band_nodes_;
  std::vector<std::size_t> mirror_;
  std::vector<Complex> b1_, b2_, s_;
};

FormField flat_omega(const GridPtr& grid) {
  return FormField::constant(grid, fundamental_form(HermitianMetric::identity(grid->dimension())));
}

// Largest |eigenvalue| over nodes of the Hermitian matrix -sqrt(-1) w.
double max_spectral_norm(const FormField& w) {
  const int n = w.dimension();
  double m = 0.0;
  for (std::size_t node = 0; node < w.nodes(); ++node) {
    Eigen::MatrixXcd a(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) a(i, j) = -kI * w.node(node)[i * n + j];
    Eigen::MatrixXcd h = 0.5 * (a + a.adjoint());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(h, Eigen::EigenvaluesOnly);
    m = std::max(m, solver.eigenvalues().cwiseAbs().maxCoeff());
  }
  return m;
}

void require_initial_args(const GridPtr& grid, double epsilon, int mode_cutoff) {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw PreconditionError("epsilon must be finite and >= 0");
  if (mode_cutoff < 1 || mode_cutoff > grid->dealias_cutoff()) {
    throw PreconditionError("mode cutoff must lie in [1, " + std::to_string(grid->dealias_cutoff()) + "]");
  }
}

FlowState assemble(const GridPtr& grid, FormField phi, FormField perturbation) {
  FlowState s;
  s.phi = std::move(phi);
  s.omega = flat_omega(grid);
  s.omega += perturbation;
  s.refresh_metric();
  return s;
}

DiagnosticsRecord record_from(const FlowState& state, const FlowKernel::Norms& norms) {
  DiagnosticsRecord r;
  r.t = state.t;
  r.V = volume_V(state.phi, state.omega);
  r.F = functional_F(state.phi, state.metric);
  r.d_omega_residual = norms.d_omega;
  r.hs_constraint_residual = norms.constraint;
  r.del_phi_residual = norms.del_phi;
  r.pluriclosed_residual = norms.pluriclosed;
  r.min_eig_margin = state.metric.min_margin();
  return r;
}

}  // namespace

void FlowState::refresh_metric() { metric = MetricField::from_omega(omega); }

FormField torsion_trace(const FormField& omega, const MetricField& g) { return dealias(trace_g(del(omega), g)); }

FormField pluriclosed_rhs(const FormField& omega) {
  const MetricField g = MetricField::from_omega(omega);
  const FormField y = del_bar(torsion_trace(omega, g));
  FormField out = conjugate(y);
  out += y;
  out += chern_form(g);
  return out;
}

FormField phi_rhs(const FormField& phi, const FormField& omega) {
  const MetricField g = MetricField::from_omega(omega);
  FormField out = del(trace_g(del_bar(phi), g), Truncate::yes);
  out *= -1.0;
  return out;
}

double step_bound(const FlowState& state, double safety) {
  const MetricField g = state.metric.nodes() == state.omega.nodes() ? state.metric : MetricField::from_omega(state.omega);
  const double h = state.omega.grid().spacing();
  return safety * h * h * g.min_margin() / g.max_eigenvalue();
}

FlowState step_rk4(const FlowState& state, double dt) {
  FlowKernel kernel(state.omega.grid_ptr());
  auto y = kernel.to_spectral(state.phi, state.omega);
  kernel.rk4(y, dt);
  FlowState out;
  out.t = state.t + dt;
  kernel.to_physical(y, out.phi, out.omega);
  out.refresh_metric();
  return out;
}

FlowState make_flat_state(const GridPtr& grid) {
  return assemble(grid, FormField(grid, {2, 0}), FormField(grid, {1, 1}));
}

FlowState make_initial_hs(const GridPtr& grid, std::uint64_t seed, double epsilon, int mode_cutoff) {
  require_initial_args(grid, epsilon, mode_cutoff);
  if (epsilon == 0.0) return make_flat_state(grid);
  std::mt19937_64 rng(seed);
  FormField zeta = random_band_limited(grid, {1, 0}, rng, mode_cutoff);
  FormField delta = real_part(del_bar(zeta));
  delta *= 2.0;
  const double scale = epsilon / max_spectral_norm(delta);
  zeta *= scale;
  delta *= scale;
  return assemble(grid, del(zeta), std::move(delta));
}

FlowState make_initial_kahler(const GridPtr& grid, std::uint64_t seed, double epsilon, int mode_cutoff) {
  require_initial_args(grid, epsilon, mode_cutoff);
  if (epsilon == 0.0) return make_flat_state(grid);
  std::mt19937_64 rng(seed);
  FormField u = random_band_limited(grid, {0, 0}, rng, mode_cutoff);
  for (Complex& v : u.data()) v = v.real();
  FormField delta = del(del_bar(u));
  delta *= kI;
  delta = real_part(delta);
  delta *= epsilon / max_spectral_norm(delta);
  return assemble(grid, FormField(grid, {2, 0}), std::move(delta));
}

DiagnosticsRecord diagnose(const FlowState& state) {
  FlowKernel kernel(state.omega.grid_ptr());
  return record_from(state, kernel.residuals(kernel.to_spectral(state.phi, state.omega)));
}

FlowResult run_flow(const FlowConfig& config, const FlowState& initial, const FlowObserver& observer) {
  if (!(config.dt > 0.0) || !std::isfinite(config.dt)) throw PreconditionError("dt must be positive");
  if (config.steps < 0) throw PreconditionError("steps must be nonnegative");
  if (config.sample_every < 1) throw PreconditionError("sample_every must be at least 1");
  if (!(config.safety > 0.0 && config.safety <= 1.0)) throw PreconditionError("safety must lie in (0, 1]");

  FlowResult result;
  FlowKernel kernel(initial.omega.grid_ptr());
  auto y = kernel.to_spectral(initial.phi, initial.omega);
  const double tol = config.tolerances.constraint;
  FlowState state;

  auto violated = [&](double constraint, double del_phi) {
    return !(constraint <= tol) || !(del_phi <= tol);
  };

  // Returns false when the flow has to stop.
  auto sample = [&](std::int64_t step) {
    FlowState next;
    next.t = initial.t + static_cast<double>(step) * config.dt;
    kernel.to_physical(y, next.phi, next.omega);
    try {
      next.refresh_metric();
    } catch (const PositivityLostError& e) {
      result.status = FlowStatus::positivity_lost;
      result.message = e.what();
      return false;
    }
    const auto norms = kernel.residuals(y);
    const DiagnosticsRecord r = record_from(next, norms);
    if (violated(r.hs_constraint_residual, r.del_phi_residual)) {
      result.status = FlowStatus::constraint_violation;
      result.message = "constraint residual " + std::to_string(r.hs_constraint_residual) + " at t = " +
                       std::to_string(r.t);
      return false;
    }
    state = std::move(next);
    result.records.push_back(r);
    result.last_valid = r;
    if (observer) observer(state, r);
    return true;
  };

  result.step_bound_exceeded = config.dt > step_bound(initial, config.safety);
  if (sample(0)) {
    for (std::int64_t step = 1; step <= config.steps; ++step) {
      try {
        kernel.rk4(y, config.dt);
      } catch (const PositivityLostError& e) {
        // Past the step bound a failed stage is blamed on the integrator.
        result.status = result.step_bound_exceeded ? FlowStatus::constraint_violation : FlowStatus::positivity_lost;
        result.message = std::string(e.what()) + " during step " + std::to_string(step);
        if (result.step_bound_exceeded) result.message = "unstable step: " + result.message;
        break;
      }
      result.steps_taken = step;
      const auto [c, dp] = kernel.constraint_norms(y);
      if (violated(c, dp)) {
        result.status = FlowStatus::constraint_violation;
        result.message = "constraint residual " + std::to_string(c) + " after step " + std::to_string(step);
        break;
      }
      if (step % config.sample_every == 0 || step == config.steps) {
        if (!sample(step)) break;
      }
    }
  }
  result.final_state = std::move(state);
  return result;
}

}  // namespace plurisym
