#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "plurisym/cli_runner.hpp"
#include "plurisym/volume_functionals.hpp"

namespace py = pybind11;
using namespace plurisym;

namespace {

const char* status_name(FlowStatus s) {
  switch (s) {
    case FlowStatus::completed: return "completed";
    case FlowStatus::positivity_lost: return "positivity_lost";
    case FlowStatus::constraint_violation: return "constraint_violation";
  }
  return "unknown";
}

py::array_t<double> records_array(const std::vector<DiagnosticsRecord>& recs) {
  py::array_t<double> out({static_cast<py::ssize_t>(recs.size()), py::ssize_t{8}});
  auto m = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const DiagnosticsRecord& r = recs[i];
    const double v[8] = {r.t, r.V, r.F, r.d_omega_residual, r.hs_constraint_residual, r.del_phi_residual,
                         r.pluriclosed_residual, r.min_eig_margin};
    for (int j = 0; j < 8; ++j) m(i, j) = v[j];
  }
  return out;
}

py::dict verdict_dict(const ObstructionVerdict& v) {
  py::dict d;
  d["a0"] = v.a0;
  d["a1"] = v.a1;
  d["a2"] = v.a2;
  d["discriminant"] = v.discriminant;
  d["min_positive_root"] = v.min_positive_root ? py::object(py::float_(*v.min_positive_root)) : py::none();
  d["obstructed"] = v.obstructed;
  return d;
}

py::dict run_flow_py(const std::string& config_json) {
  const RunConfig c = parse_config(config_json);
  FlowResult r;
  {
    py::gil_scoped_release release;
    r = run_flow(c.flow, make_initial_state(c));
  }
  py::dict d;
  d["columns"] = flow_columns();
  d["records"] = records_array(r.records);
  d["status"] = status_name(r.status);
  d["message"] = r.message;
  d["steps_taken"] = r.steps_taken;
  d["step_bound_exceeded"] = r.step_bound_exceeded;
  return d;
}

py::dict initial_summary(const std::string& config_json) {
  const RunConfig c = parse_config(config_json);
  const FlowState s = make_initial_state(c);
  py::dict d;
  d["V"] = volume_V(s.phi, s.omega);
  d["F"] = functional_F(s.phi, s.metric);
  std::vector<double> a;
  for (int i = 0; i <= c.dimension; ++i) a.push_back(coefficient_a_i(s.phi, s.omega, i));
  d["a"] = a;
  d["min_eig_margin"] = s.metric.min_margin();
  return d;
}

py::list verify_py(const std::string& config_json, bool inject_fault) {
  const RunConfig c = parse_config(config_json);
  std::vector<SuiteResult> suites;
  {
    py::gil_scoped_release release;
    suites = run_verify_suites(c, VerifyOptions{inject_fault});
  }
  py::list out;
  for (const SuiteResult& s : suites) {
    py::dict d;
    d["name"] = s.name;
    d["worst_error"] = s.worst_error;
    d["tolerance"] = s.tolerance;
    d["instances"] = s.instances;
    d["pass"] = s.pass;
    out.append(d);
  }
  return out;
}

py::dict analyze_volume_py(const std::string& config_json) {
  const RunConfig c = parse_config(config_json);
  VolumeAnalysis a;
  {
    py::gil_scoped_release release;
    a = analyze_volume(c);
  }
  py::dict d;
  d["status"] = status_name(a.flow.status);
  d["records"] = records_array(a.flow.records);
  d["fitted"] = a.fitted.coeffs;
  d["formula"] = a.formula.coeffs;
  d["fit_relative_residual"] = a.fitted.relative_residual;
  d["beta_residual_max"] = a.beta_residual_max;
  py::list checks;
  for (const NamedCheck& ch : a.checks) checks.append(py::make_tuple(ch.name, ch.value, ch.tolerance, ch.pass));
  d["checks"] = checks;
  d["pass"] = a.flow.status == FlowStatus::completed && a.all_pass;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Hermitian-symplectic flow lab on flat complex tori";

  static py::exception<PositivityLostError> positivity(m, "PositivityLostError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    } catch (const PreconditionError& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    } catch (const PositivityLostError& e) {
      PyErr_SetString(positivity.ptr(), e.what());
    }
  });

  m.def("flow_columns", &flow_columns);
  m.def("run_flow", &run_flow_py, py::arg("config_json"));
  m.def("initial_summary", &initial_summary, py::arg("config_json"));
  m.def("verify", &verify_py, py::arg("config_json"), py::arg("inject_fault") = false);
  m.def("analyze_volume", &analyze_volume_py, py::arg("config_json"));
  m.def(
      "surface_obstruction", [](double a0, double a1, double a2) { return verdict_dict(surface_obstruction(a0, a1, a2)); },
      py::arg("a0"), py::arg("a1"), py::arg("a2"));
  m.def("ruled_surface_a2", &ruled_surface_a2, py::arg("genus"));
  m.def(
      "fit_polynomial",
      [](const std::vector<double>& t, const std::vector<double>& v, int degree) {
        const VolumePolynomial p = fit_polynomial(t, v, degree);
        return py::make_tuple(p.coeffs, p.relative_residual);
      },
      py::arg("t"), py::arg("v"), py::arg("degree"));
}
