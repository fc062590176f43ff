#include "plurisym/cli_runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "plurisym/volume_functionals.hpp"

namespace plurisym {

namespace {

using nlohmann::json;

[[noreturn]] void config_fail(const std::string& key, const std::string& what) { throw ConfigError(key + ": " + what); }

std::string join(const std::string& prefix, const std::string& key) { return prefix.empty() ? key : prefix + "." + key; }

void reject_unknown(const json& obj, const std::string& prefix, std::initializer_list<const char*> allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return it.key() == a; });
    if (!known) config_fail(join(prefix, it.key()), "unknown key");
  }
}

const json* find(const json& obj, const char* key) {
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

const json& object_at(const json& obj, const char* key, const std::string& prefix) {
  static const json empty = json::object();
  const json* v = find(obj, key);
  if (v == nullptr) return empty;
  if (!v->is_object()) config_fail(join(prefix, key), "must be an object");
  return *v;
}

void read_double(const json& obj, const char* key, const std::string& prefix, double& out) {
  const json* v = find(obj, key);
  if (v == nullptr) return;
  if (!v->is_number()) config_fail(join(prefix, key), "must be a number");
  out = v->get<double>();
  if (!std::isfinite(out)) config_fail(join(prefix, key), "must be finite");
}

template <class Int>
void read_int(const json& obj, const char* key, const std::string& prefix, Int& out) {
  const json* v = find(obj, key);
  if (v == nullptr) return;
  if (!v->is_number_integer()) config_fail(join(prefix, key), "must be an integer");
  if (v->is_number_unsigned()) {
    const auto u = v->get<std::uint64_t>();
    if (u > static_cast<std::uint64_t>(std::numeric_limits<Int>::max())) config_fail(join(prefix, key), "out of range");
    out = static_cast<Int>(u);
  } else {
    const auto s = v->get<std::int64_t>();
    if (s < static_cast<std::int64_t>(std::numeric_limits<Int>::min()) ||
        (s > 0 && static_cast<std::uint64_t>(s) > static_cast<std::uint64_t>(std::numeric_limits<Int>::max()))) {
      config_fail(join(prefix, key), "out of range");
    }
    out = static_cast<Int>(s);
  }
}

void read_string(const json& obj, const char* key, const std::string& prefix, std::string& out) {
  const json* v = find(obj, key);
  if (v == nullptr) return;
  if (!v->is_string()) config_fail(join(prefix, key), "must be a string");
  out = v->get<std::string>();
}

void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) config_fail(key, what);
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

const char* status_name(FlowStatus s) {
  switch (s) {
    case FlowStatus::completed: return "completed";
    case FlowStatus::positivity_lost: return "positivity_lost";
    case FlowStatus::constraint_violation: return "constraint_violation";
  }
  return "unknown";
}

int exit_for(FlowStatus s) {
  switch (s) {
    case FlowStatus::completed: return exit_code::ok;
    case FlowStatus::positivity_lost: return exit_code::positivity_lost;
    case FlowStatus::constraint_violation: return exit_code::invariant_violation;
  }
  return exit_code::invariant_violation;
}

std::vector<double> record_values(const DiagnosticsRecord& r) {
  return {r.t, r.V, r.F, r.d_omega_residual, r.hs_constraint_residual, r.del_phi_residual, r.pluriclosed_residual,
          r.min_eig_margin};
}

json flow_json(const FlowResult& r) {
  json rows = json::array();
  for (const DiagnosticsRecord& d : r.records) rows.push_back(record_values(d));
  return {{"columns", flow_columns()},
          {"rows", rows},
          {"status", status_name(r.status)},
          {"message", r.message},
          {"steps_taken", r.steps_taken},
          {"step_bound_exceeded", r.step_bound_exceeded}};
}

// ---------------------------------------------------------------- verify

double uniform_pm(std::mt19937_64& rng) { return std::uniform_real_distribution<double>(-1.0, 1.0)(rng); }

Form random_form(std::mt19937_64& rng, int n, Bidegree b) {
  Form f(n, b);
  for (Complex& c : f.coeffs()) c = {uniform_pm(rng), uniform_pm(rng)};
  return f;
}

// g = A A^H + I/2 with A uniform in the unit square scaled by 1/2.
HermitianMetric random_metric(std::mt19937_64& rng, int n) {
  std::vector<Complex> a(n * n), g(n * n);
  for (Complex& c : a) c = 0.5 * Complex(uniform_pm(rng), uniform_pm(rng));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      Complex s = (i == j) ? 0.5 : 0.0;
      for (int k = 0; k < n; ++k) s += a[i * n + k] * std::conj(a[j * n + k]);
      g[i * n + j] = s;
    }
  }
  for (int i = 0; i < n; ++i) g[i * n + i] = g[i * n + i].real();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < i; ++j) g[i * n + j] = std::conj(g[j * n + i]);
  return HermitianMetric(n, g);
}

SuiteResult make_suite(std::string name, double tolerance) {
  SuiteResult s;
  s.name = std::move(name);
  s.tolerance = tolerance;
  return s;
}

void record(SuiteResult& s, double err) {
  s.worst_error = std::max(s.worst_error, std::isfinite(err) ? err : std::numeric_limits<double>::infinity());
  ++s.instances;
}

SuiteResult star_trace_suite(std::mt19937_64& rng, const VerifyOptions& options) {
  SuiteResult s = make_suite("star_trace_identity", 1e-12);
  const double sign = options.flip_trace_sign ? -1.0 : 1.0;
  for (int n : {2, 3, 4}) {
    for (int i = 0; i < 100; ++i) {
      const HermitianMetric g = random_metric(rng, n);
      const Form beta = random_form(rng, n, {2, 1});
      const Form lhs = hodge_star_point(wedge(form_power(fundamental_form(g), n - 2), beta), g);
      const Form rhs = trace_g_point(beta, g) * Complex(sign * factorial(n - 2));
      record(s, (lhs + rhs).max_abs() / beta.max_abs());
    }
  }
  return s;
}

SuiteResult star_suite(std::mt19937_64& rng) {
  SuiteResult s = make_suite("hodge_star_inner_product", 1e-12);
  for (int n : {2, 3, 4}) {
    for (int i = 0; i < 40; ++i) {
      const HermitianMetric g = random_metric(rng, n);
      const int p = static_cast<int>(rng() % (n + 1)), q = static_cast<int>(rng() % (n + 1));
      const Form a = random_form(rng, n, {p, q}), b = random_form(rng, n, {p, q});
      const Form lhs = wedge(a, hodge_star_point(conjugate(b), g));
      const Form rhs = volume_form(g) * inner_product_point(a, b, g);
      record(s, (lhs - rhs).max_abs() / std::max(rhs.max_abs(), 1.0));
    }
  }
  return s;
}

SuiteResult trace_suite(std::mt19937_64& rng) {
  SuiteResult s = make_suite("trace_lefschetz_adjoint", 1e-12);
  const Complex i_unit{0.0, 1.0};
  for (int n : {2, 3, 4}) {
    for (int i = 0; i < 40; ++i) {
      const HermitianMetric g = random_metric(rng, n);
      const int p = 1 + static_cast<int>(rng() % n), q = 1 + static_cast<int>(rng() % n);
      const Form a = random_form(rng, n, {p, q}), b = random_form(rng, n, {p - 1, q - 1});
      const Complex lhs = inner_product_point(trace_g_point(a, g), b, g);
      const Complex rhs = i_unit * inner_product_point(a, wedge(fundamental_form(g), b), g);
      record(s, std::abs(lhs - rhs) / std::max(std::abs(rhs), 1.0));
    }
  }
  return s;
}

struct SpectralCase {
  int n;
  int points;
};

constexpr SpectralCase kSpectralCases[] = {{2, 16}, {3, 8}};

SuiteResult nilpotency_suite(std::mt19937_64& rng) {
  SuiteResult s = make_suite("spectral_nilpotency", 1e-12);
  for (const SpectralCase c : kSpectralCases) {
    const GridPtr grid = TorusGrid::create(c.n, c.points);
    for (Bidegree b : {Bidegree{0, 0}, Bidegree{1, 0}, Bidegree{0, 1}, Bidegree{1, 1}, Bidegree{2, 1}}) {
      const FormField a = random_band_limited(grid, b, rng, grid->dealias_cutoff());
      // Size of a second derivative of a at the top of the band.
      const double k = 2.0 * std::numbers::pi * grid->dealias_cutoff();
      const double scale = l2_norm(a) * k * k;
      record(s, l2_norm(del(del(a))) / scale);
      record(s, l2_norm(del_bar(del_bar(a))) / scale);
      record(s, l2_norm(del(del_bar(a)) + del_bar(del(a))) / scale);
    }
  }
  return s;
}

SuiteResult stokes_suite(std::mt19937_64& rng) {
  SuiteResult s = make_suite("stokes", 1e-10);
  for (const SpectralCase c : kSpectralCases) {
    const GridPtr grid = TorusGrid::create(c.n, c.points);
    for (int i = 0; i < 3; ++i) {
      const FormField a = random_band_limited(grid, {c.n - 1, c.n}, rng, grid->dealias_cutoff(), true);
      const FormField b = random_band_limited(grid, {c.n, c.n - 1}, rng, grid->dealias_cutoff(), true);
      const FormField da = del(a), db = del_bar(b);
      record(s, std::abs(integrate(da)) / l2_norm(da));
      record(s, std::abs(integrate(db)) / l2_norm(db));
    }
  }
  return s;
}

SuiteResult adjoint_suite(std::mt19937_64& rng) {
  SuiteResult s = make_suite("codifferential_adjoint", 1e-10);
  for (const SpectralCase c : kSpectralCases) {
    const GridPtr grid = TorusGrid::create(c.n, c.points);
    FormField h = real_part(random_band_limited(grid, {1, 1}, rng, 2));
    h *= 0.2 / h.max_abs();
    h += FormField::constant(grid, fundamental_form(HermitianMetric::identity(c.n)));
    const MetricField g = MetricField::from_omega(h);
    for (Bidegree b : {Bidegree{1, 0}, Bidegree{0, 1}, Bidegree{1, 1}}) {
      const FormField a = random_band_limited(grid, b, rng, 2);
      const FormField c1 = random_band_limited(grid, {b.p, b.q + 1}, rng, 2);
      const FormField c2 = random_band_limited(grid, {b.p + 1, b.q}, rng, 2);
      const Complex l1 = global_inner_product(del_bar(a), c1, g);
      const Complex r1 = global_inner_product(a, codifferential_del_bar_star(c1, g), g);
      const Complex l2 = global_inner_product(del(a), c2, g);
      const Complex r2 = global_inner_product(a, codifferential_del_star(c2, g), g);
      record(s, std::abs(l1 - r1) / std::abs(l1));
      record(s, std::abs(l2 - r2) / std::abs(l2));
    }
  }
  return s;
}

// ---------------------------------------------------------------- volume

std::int64_t sample_count(const FlowConfig& f) {
  return 1 + f.steps / f.sample_every + (f.steps % f.sample_every != 0 ? 1 : 0);
}

NamedCheck at_most(std::string name, double value, double tolerance) {
  return {std::move(name), value, tolerance, value <= tolerance};
}

std::string checks_csv(const std::vector<NamedCheck>& checks) {
  std::string out = "name,value,tolerance,pass\n";
  for (const NamedCheck& c : checks) {
    out += c.name + "," + fmt17(c.value) + "," + fmt17(c.tolerance) + "," + (c.pass ? "true" : "false") + "\n";
  }
  return out;
}

json checks_json(const std::vector<NamedCheck>& checks) {
  json a = json::array();
  for (const NamedCheck& c : checks) a.push_back({{"name", c.name}, {"value", c.value}, {"tolerance", c.tolerance}, {"pass", c.pass}});
  return a;
}

}  // namespace

// ---------------------------------------------------------------- config

RunConfig parse_config(std::string_view text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: malformed JSON (") + e.what() + ")");
  }
  if (!root.is_object()) throw ConfigError("config: top level must be an object");
  reject_unknown(root, "", {"dimension", "grid", "initial", "flow", "volume", "tolerances", "output", "format"});

  RunConfig c;
  read_int(root, "dimension", "", c.dimension);
  require(c.dimension == 2 || c.dimension == 3, "dimension", "must be 2 or 3");
  c.grid = c.dimension == 2 ? 16 : 8;
  read_int(root, "grid", "", c.grid);
  require(c.grid >= 4 && c.grid <= 64 && c.grid % 2 == 0, "grid", "must be an even integer in [4, 64]");
  require(std::pow(static_cast<double>(c.grid), 2.0 * c.dimension) <= double(1 << 23), "grid",
          "too many nodes for this dimension");

  const json& init = object_at(root, "initial", "");
  reject_unknown(init, "initial", {"type", "epsilon", "seed", "mode_cutoff"});
  std::string type = "perturbed_flat";
  read_string(init, "type", "initial", type);
  if (type == "flat_kahler") {
    c.initial.type = InitialType::flat_kahler;
  } else if (type == "perturbed_flat") {
    c.initial.type = InitialType::perturbed_flat;
  } else if (type == "perturbed_kahler") {
    c.initial.type = InitialType::perturbed_kahler;
  } else {
    config_fail("initial.type", "must be flat_kahler, perturbed_flat or perturbed_kahler");
  }
  read_double(init, "epsilon", "initial", c.initial.epsilon);
  require(c.initial.epsilon >= 0.0 && c.initial.epsilon <= 10.0, "initial.epsilon", "must lie in [0, 10]");
  read_int(init, "seed", "initial", c.initial.seed);
  c.initial.mode_cutoff = std::min(2, c.grid / 3);
  read_int(init, "mode_cutoff", "initial", c.initial.mode_cutoff);
  require(c.initial.mode_cutoff >= 1 && c.initial.mode_cutoff <= c.grid / 3, "initial.mode_cutoff",
          "must lie in [1, grid / 3]");

  const json& flow = object_at(root, "flow", "");
  reject_unknown(flow, "flow", {"dt", "steps", "sample_every", "safety"});
  read_double(flow, "dt", "flow", c.flow.dt);
  require(c.flow.dt > 0.0 && c.flow.dt <= 1.0, "flow.dt", "must lie in (0, 1]");
  read_int(flow, "steps", "flow", c.flow.steps);
  require(c.flow.steps >= 0 && c.flow.steps <= 10000000, "flow.steps", "must lie in [0, 10000000]");
  read_int(flow, "sample_every", "flow", c.flow.sample_every);
  require(c.flow.sample_every >= 1, "flow.sample_every", "must be at least 1");
  read_double(flow, "safety", "flow", c.flow.safety);
  require(c.flow.safety > 0.0 && c.flow.safety <= 1.0, "flow.safety", "must lie in (0, 1]");

  const json& vol = object_at(root, "volume", "");
  reject_unknown(vol, "volume", {"probe_count", "probe_spacing"});
  read_int(vol, "probe_count", "volume", c.volume.probe_count);
  require(c.volume.probe_count >= 0 && c.volume.probe_count <= 100, "volume.probe_count", "must lie in [0, 100]");
  read_double(vol, "probe_spacing", "volume", c.volume.probe_spacing);
  require(c.volume.probe_spacing > 0.0 && c.volume.probe_spacing <= 1e-2, "volume.probe_spacing",
          "must lie in (0, 0.01]");

  const json& tol = object_at(root, "tolerances", "");
  reject_unknown(tol, "tolerances",
                 {"constraint", "beta_pluriclosed", "fit_residual", "a0_relative", "a1_relative", "top_coefficient",
                  "derivative_relative", "monotonicity_slack"});
  CheckTolerances& t = c.tolerances;
  const std::pair<const char*, double*> tolerance_keys[] = {
      {"constraint", &t.constraint},     {"beta_pluriclosed", &t.beta_pluriclosed},
      {"fit_residual", &t.fit_residual}, {"a0_relative", &t.a0_relative},
      {"a1_relative", &t.a1_relative},   {"top_coefficient", &t.top_coefficient},
      {"derivative_relative", &t.derivative_relative}, {"monotonicity_slack", &t.monotonicity_slack}};
  for (const auto& [key, slot] : tolerance_keys) {
    read_double(tol, key, "tolerances", *slot);
    require(*slot > 0.0, std::string("tolerances.") + key, "must be positive");
  }
  c.flow.tolerances.constraint = t.constraint;

  read_string(root, "output", "", c.output);
  std::string format = "csv";
  read_string(root, "format", "", format);
  if (format == "csv") {
    c.format = OutputFormat::csv;
  } else if (format == "json") {
    c.format = OutputFormat::json;
  } else {
    config_fail("format", "must be csv or json");
  }
  return c;
}

// ---------------------------------------------------------------- output

const std::vector<std::string>& flow_columns() {
  static const std::vector<std::string> cols{"t",
                                             "V",
                                             "F",
                                             "d_omega_residual",
                                             "hs_constraint_residual",
                                             "del_phi_residual",
                                             "pluriclosed_residual",
                                             "min_eig_margin"};
  return cols;
}

std::string flow_csv(const std::vector<DiagnosticsRecord>& records) {
  std::string out;
  for (std::size_t i = 0; i < flow_columns().size(); ++i) out += (i ? "," : "") + flow_columns()[i];
  out += "\n";
  for (const DiagnosticsRecord& r : records) {
    const std::vector<double> v = record_values(r);
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + fmt17(v[i]);
    out += "\n";
  }
  return out;
}

FlowState make_initial_state(const RunConfig& config) {
  const GridPtr grid = TorusGrid::create(config.dimension, config.grid);
  const InitialConfig& i = config.initial;
  switch (i.type) {
    case InitialType::flat_kahler: return make_flat_state(grid);
    case InitialType::perturbed_flat: return make_initial_hs(grid, i.seed, i.epsilon, i.mode_cutoff);
    case InitialType::perturbed_kahler: return make_initial_kahler(grid, i.seed, i.epsilon, i.mode_cutoff);
  }
  throw ConfigError("initial.type: unsupported");
}

// ---------------------------------------------------------------- commands

std::vector<SuiteResult> run_verify_suites(const RunConfig& config, const VerifyOptions& options) {
  std::mt19937_64 rng(config.initial.seed);
  std::vector<SuiteResult> out;
  out.push_back(star_trace_suite(rng, options));
  out.push_back(star_suite(rng));
  out.push_back(trace_suite(rng));
  out.push_back(nilpotency_suite(rng));
  out.push_back(stokes_suite(rng));
  out.push_back(adjoint_suite(rng));
  for (SuiteResult& s : out) s.pass = s.worst_error <= s.tolerance;
  return out;
}

CommandResult cmd_verify(const RunConfig& config, const VerifyOptions& options) {
  const std::vector<SuiteResult> suites = run_verify_suites(config, options);
  const bool all = std::all_of(suites.begin(), suites.end(), [](const SuiteResult& s) { return s.pass; });
  CommandResult r;
  r.exit_code = all ? exit_code::ok : exit_code::invariant_violation;
  if (config.format == OutputFormat::json) {
    json a = json::array();
    for (const SuiteResult& s : suites) {
      a.push_back({{"name", s.name},
                   {"worst_error", s.worst_error},
                   {"tolerance", s.tolerance},
                   {"instances", s.instances},
                   {"pass", s.pass}});
    }
    r.report = json{{"suites", a}, {"pass", all}}.dump(2) + "\n";
  } else {
    r.report = "suite,worst_error,tolerance,instances,pass\n";
    for (const SuiteResult& s : suites) {
      r.report += s.name + "," + fmt17(s.worst_error) + "," + fmt17(s.tolerance) + "," + std::to_string(s.instances) +
                  "," + (s.pass ? "true" : "false") + "\n";
    }
  }
  return r;
}

CommandResult cmd_flow(const RunConfig& config) {
  CommandResult out;
  FlowResult r;
  try {
    r = run_flow(config.flow, make_initial_state(config));
  } catch (const PositivityLostError& e) {
    r.status = FlowStatus::positivity_lost;
    r.message = std::string("initial data: ") + e.what();
  }
  out.exit_code = exit_for(r.status);
  out.report = config.format == OutputFormat::json ? flow_json(r).dump(2) + "\n" : flow_csv(r.records);
  return out;
}

VolumeAnalysis analyze_volume(const RunConfig& config) {
  const int n = config.dimension;
  const std::int64_t m = sample_count(config.flow);
  if (m < 2 * (n + 2)) {
    throw ConfigError("flow.steps: volume analysis needs at least " + std::to_string(2 * (n + 2)) +
                      " samples, the configuration yields " + std::to_string(m));
  }
  const CheckTolerances& tol = config.tolerances;
  VolumeAnalysis a;
  const FlowState initial = make_initial_state(config);
  a.formula = formula_polynomial(initial.phi, initial.omega);

  // Sample indices at which the derivative identities are probed.
  std::vector<std::int64_t> probes;
  const int pc = config.volume.probe_count;
  for (int j = 0; j < pc; ++j) probes.push_back(pc == 1 ? 0 : (j * (m - 1)) / (pc - 1));

  std::vector<double> ts, vs, fs;
  a.beta_residual_max.assign(n + 1, 0.0);
  std::int64_t index = 0;
  a.flow = run_flow(config.flow, initial, [&](const FlowState& s, const DiagnosticsRecord& r) {
    ts.push_back(r.t);
    vs.push_back(r.V);
    fs.push_back(r.F);
    for (int k = 0; k <= n; ++k) {
      a.beta_residual_max[k] = std::max(a.beta_residual_max[k], check_beta_pluriclosed(s.phi, s.omega, k));
    }
    if (std::find(probes.begin(), probes.end(), index) != probes.end()) {
      const DerivativeReport d = check_derivative_identities(probe_stencil(s, config.volume.probe_spacing));
      a.derivatives.checks.insert(a.derivatives.checks.end(), d.checks.begin(), d.checks.end());
    }
    ++index;
  });
  if (a.flow.status != FlowStatus::completed) return a;

  a.fitted = fit_polynomial(ts, vs, n);
  const VolumePolynomial higher = fit_polynomial(ts, vs, n + 1);
  a.next_degree_coefficient = higher.coeffs.back();
  const double a0 = a.formula.coeffs[0];
  const double horizon = ts.back();

  auto& c = a.checks;
  c.push_back(at_most("fit relative residual", a.fitted.relative_residual, tol.fit_residual));
  c.push_back(at_most("a_0 fitted vs formula (relative)", std::abs(a.fitted.coeffs[0] - a0) / a0, tol.a0_relative));
  c.push_back(at_most("a_1 fitted vs formula (relative to max(|a_1|, a_0))",
                      std::abs(a.fitted.coeffs[1] - a.formula.coeffs[1]) / std::max(std::abs(a.formula.coeffs[1]), a0),
                      tol.a1_relative));
  for (int i = 2; i <= n; ++i) {
    c.push_back(at_most("a_" + std::to_string(i) + " fitted vs formula (relative to a_0)",
                        std::abs(a.fitted.coeffs[i] - a.formula.coeffs[i]) / a0, tol.top_coefficient));
  }
  c.push_back(at_most("|fitted a_" + std::to_string(n) + "| / a_0", std::abs(a.fitted.coeffs[n]) / a0,
                      tol.top_coefficient));
  c.push_back(at_most("|degree " + std::to_string(n + 1) + " coefficient| / a_0", std::abs(a.next_degree_coefficient) / a0,
                      tol.top_coefficient));
  for (int k = 0; k <= std::min(n, 1); ++k) {
    c.push_back(at_most("beta[" + std::to_string(k) + "] pluriclosed residual", a.beta_residual_max[k],
                        tol.beta_pluriclosed));
  }
  double v_min = *std::min_element(vs.begin(), vs.end());
  for (int j = 0; j <= 1000; ++j) v_min = std::min(v_min, a.fitted(horizon * j / 1000.0));
  c.push_back({"V and fitted V positive on the horizon (minimum)", v_min, 0.0, v_min > 0.0});

  double worst_constraint = 0.0;
  for (const DiagnosticsRecord& r : a.flow.records) {
    worst_constraint = std::max({worst_constraint, r.d_omega_residual, r.hs_constraint_residual, r.del_phi_residual});
  }
  c.push_back(at_most("constraint residuals (maximum)", worst_constraint, tol.constraint));

  if (n == 2 && fs.size() > 1) {
    double rise = 0.0, drop = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < fs.size(); ++i) {
      rise = std::max(rise, fs[i] - fs[i - 1]);
      if (fs[i - 1] > 0.0) drop = std::min(drop, (fs[i - 1] - fs[i]) / fs[i - 1]);
    }
    c.push_back(at_most("F increase between samples (maximum)", rise, tol.monotonicity_slack));
    if (fs.front() > 0.0) {
      c.push_back({"F relative drop per sample window (minimum)", drop, tol.monotonicity_slack,
                   drop >= tol.monotonicity_slack});
    }
  }

  std::vector<std::string> names;
  for (const IdentityCheck& d : a.derivatives.checks)
    if (std::find(names.begin(), names.end(), d.name) == names.end()) names.push_back(d.name);
  for (const std::string& name : names) {
    c.push_back(at_most(name + " identity (worst relative error)", a.derivatives.worst(name), tol.derivative_relative));
  }
  a.all_pass = std::all_of(c.begin(), c.end(), [](const NamedCheck& x) { return x.pass; });
  return a;
}

CommandResult cmd_volume(const RunConfig& config) {
  CommandResult out;
  VolumeAnalysis a;
  try {
    a = analyze_volume(config);
  } catch (const PositivityLostError& e) {
    a.flow.status = FlowStatus::positivity_lost;
    a.flow.message = std::string("initial data: ") + e.what();
  }
  const bool completed = a.flow.status == FlowStatus::completed;
  out.exit_code = !completed ? exit_for(a.flow.status) : (a.all_pass ? exit_code::ok : exit_code::invariant_violation);
  const int n = config.dimension;

  if (config.format == OutputFormat::json) {
    json coeffs = json::array();
    if (completed) {
      for (int i = 0; i <= n; ++i) {
        coeffs.push_back({{"i", i},
                          {"fitted", a.fitted.coeffs[i]},
                          {"fitted_provenance", to_string(a.fitted.provenance[i])},
                          {"formula", a.formula.coeffs[i]},
                          {"formula_provenance", to_string(a.formula.provenance[i])}});
      }
    }
    json ids = json::array();
    for (const IdentityCheck& d : a.derivatives.checks) {
      ids.push_back({{"name", d.name},
                     {"t", d.t},
                     {"numeric", d.numeric},
                     {"analytic", d.analytic},
                     {"relative_error", d.relative_error}});
    }
    json report = {{"status", status_name(a.flow.status)},
                   {"message", a.flow.message},
                   {"samples", a.flow.records.size()},
                   {"coefficients", coeffs},
                   {"fit_relative_residual", a.fitted.relative_residual},
                   {"next_degree_coefficient", a.next_degree_coefficient},
                   {"beta_residual_max", a.beta_residual_max},
                   {"derivative_identities", ids},
                   {"checks", checks_json(a.checks)},
                   {"pass", completed && a.all_pass}};
    out.report = report.dump(2) + "\n";
  } else {
    std::vector<NamedCheck> rows;
    if (completed) {
      for (int i = 0; i <= n; ++i) {
        const std::string ai = "a_" + std::to_string(i);
        rows.push_back({ai + " (" + to_string(a.fitted.provenance[i]) + ")", a.fitted.coeffs[i], 0.0, true});
        rows.push_back({ai + " (" + to_string(a.formula.provenance[i]) + ")", a.formula.coeffs[i], 0.0, true});
      }
    }
    rows.insert(rows.end(), a.checks.begin(), a.checks.end());
    out.report = checks_csv(rows);
    if (!completed) out.report += "# flow stopped: " + std::string(status_name(a.flow.status)) + "\n";
  }
  return out;
}

CommandResult cmd_obstruct(const ObstructArgs& args, OutputFormat format) {
  ObstructArgs v = args;
  if (!v.preset.empty()) {
    const std::string prefix = "ruled:f=";
    if (v.preset.rfind(prefix, 0) != 0) throw ConfigError("preset: expected ruled:f=<genus>");
    const std::string digits = v.preset.substr(prefix.size());
    if (digits.empty() || digits.size() > 6 || !std::all_of(digits.begin(), digits.end(), ::isdigit)) {
      throw ConfigError("preset: genus must be a nonnegative integer");
    }
    if (v.a2) throw ConfigError("a2: fixed by the preset");
    v.a2 = ruled_surface_a2(std::stoi(digits));
  }
  if (!v.a0 || !v.a1 || !v.a2) throw ConfigError("a0, a1, a2: all three coefficients are required");
  ObstructionVerdict verdict;
  try {
    verdict = surface_obstruction(*v.a0, *v.a1, *v.a2);
  } catch (const PreconditionError& e) {
    throw ConfigError(std::string("a0: ") + e.what());
  }
  CommandResult out;
  if (format == OutputFormat::json) {
    json j = {{"a0", verdict.a0},
              {"a1", verdict.a1},
              {"a2", verdict.a2},
              {"discriminant", verdict.discriminant},
              {"min_positive_root", verdict.min_positive_root ? json(*verdict.min_positive_root) : json(nullptr)},
              {"obstructed", verdict.obstructed}};
    out.report = j.dump(2) + "\n";
  } else {
    out.report = "a0,a1,a2,discriminant,min_positive_root,obstructed\n" + fmt17(verdict.a0) + "," + fmt17(verdict.a1) +
                 "," + fmt17(verdict.a2) + "," + fmt17(verdict.discriminant) + "," +
                 (verdict.min_positive_root ? fmt17(*verdict.min_positive_root) : std::string("none")) + "," +
                 (verdict.obstructed ? "true" : "false") + "\n";
  }
  return out;
}

}  // namespace plurisym
