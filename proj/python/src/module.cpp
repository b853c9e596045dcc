#include <optional>
#include <string>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "nvloc/dipole.hpp"
#include "nvloc/errors.hpp"
#include "nvloc/extract.hpp"
#include "nvloc/pipeline.hpp"
#include "nvloc/spin.hpp"

namespace py = pybind11;
using namespace nvloc;

namespace {

// config arrives as JSON text; the Python side handles dicts and paths
PipelineConfig make_config(const std::string& config_json, const std::string& base_dir,
                           const std::optional<std::string>& out, std::optional<std::size_t> threads) {
  PipelineConfig cfg = config_json.empty() ? PipelineConfig{}
                                           : PipelineConfig::from_json(nlohmann::json::parse(config_json), base_dir);
  if (out) cfg.output_dir = *out;
  if (threads) cfg.threads = std::max<std::size_t>(1, *threads);
  cfg.validate();
  return cfg;
}

py::tuple command_result(const CommandResult& r) { return py::make_tuple(r.exit_code, r.report.dump(), r.files); }

}  // namespace

PYBIND11_MODULE(_nvloc, m) {
  m.attr("__version__") = kVersion;

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<DomainError>(m, "DomainError", base.ptr());
  py::register_exception<InputError>(m, "InputError", base.ptr());
  py::register_exception<IdentifiabilityError>(m, "IdentifiabilityError", base.ptr());
  py::register_exception<ConvergenceError>(m, "ConvergenceError", base.ptr());

  m.def("nominal_tau", &nominal_tau, py::arg("f0"), py::arg("f_m1"));

  m.def(
      "extract_couplings",
      [](double f0, double f_m1, double fR, std::optional<double> tau) {
        const CouplingEstimate e = extract_couplings(f0, f_m1, fR, tau ? *tau : nominal_tau(f0, f_m1));
        return py::make_tuple(e.a_par.value, e.a_perp.value, e.warnings);
      },
      py::arg("f0"), py::arg("f_m1"), py::arg("fR"), py::arg("tau") = py::none(),
      "(a_par, a_perp, warnings) in Hz from the coil-off triplet in Hz; tau in s.");

  m.def(
      "forward_triplet",
      [](double a_par, double a_perp, double f_larmor, double tau) {
        const RabiTriplet t = forward_triplet(a_par, a_perp, f_larmor, tau);
        return py::make_tuple(t.f0, t.f_m1, t.fR, t.tau);
      },
      py::arg("a_par"), py::arg("a_perp"), py::arg("f_larmor"), py::arg("tau") = 0.0);

  m.def(
      "invert_dipole",
      [](double a_par, double a_perp, double a_iso) {
        const SphericalPosition p = invert_dipole(a_par, a_perp, a_iso);
        return py::make_tuple(p.r, p.theta);
      },
      py::arg("a_par"), py::arg("a_perp"), py::arg("a_iso") = 0.0, "(r in m, theta in rad)");

  m.def(
      "dipole_tensor",
      [](double r, double theta, double phi, double a_iso) { return dipole_tensor({r, theta, phi}, a_iso).tensor; },
      py::arg("r"), py::arg("theta"), py::arg("phi"), py::arg("a_iso") = 0.0);

  m.def(
      "precession_frequency",
      [](const Eigen::Vector3d& B0, const Eigen::Vector3d& dB, const Eigen::Matrix3d& tensor, int m_s,
         const std::string& variant) {
        return precession_frequency_raw(B0, dB, tensor, m_s, enhancement_variant_from_string(variant), {});
      },
      py::arg("B0"), py::arg("dB"), py::arg("tensor"), py::arg("m_s"), py::arg("variant") = "general-field",
      "Nuclear precession frequency in Hz; fields in T in the NV frame.");

  m.def(
      "odmr_lines",
      [](const Eigen::Vector3d& B_nv) {
        const auto l = spin1_spectrum(B_nv).lines;
        return py::make_tuple(l.f_minus, l.f_plus);
      },
      py::arg("B_nv"));

  m.def(
      "_calibrate",
      [](const std::string& file, const std::string& cfg, const std::string& base, std::optional<std::string> out,
         std::optional<std::size_t> threads) {
        return command_result(cmd_calibrate(file, make_config(cfg, base, out, threads)));
      },
      py::arg("file"), py::arg("config"), py::arg("base_dir"), py::arg("out"), py::arg("threads"));
  m.def(
      "_localize",
      [](const std::string& file, const std::string& cfg, const std::string& base, std::optional<std::string> out,
         std::optional<std::size_t> threads, std::optional<std::uint64_t> seed, std::optional<std::size_t> samples,
         std::optional<std::string> a_iso) {
        PipelineConfig c = make_config(cfg, base, out, threads);
        if (seed) c.mc.seed = *seed;
        if (samples) c.mc.n_samples = *samples;
        if (a_iso) c.a_iso_override = AIsoChoice::parse(*a_iso);
        CommandResult r;
        {
          py::gil_scoped_release release;
          r = cmd_localize(file, c);
        }
        return command_result(r);
      },
      py::arg("file"), py::arg("config"), py::arg("base_dir"), py::arg("out"), py::arg("threads"), py::arg("seed"),
      py::arg("samples"), py::arg("a_iso"));
  m.def(
      "_simulate",
      [](const std::string& file, const std::string& cfg, const std::string& base, std::optional<std::string> out,
         std::optional<std::uint64_t> seed, bool traces) {
        return command_result(cmd_simulate(file, make_config(cfg, base, out, std::nullopt), seed, traces));
      },
      py::arg("file"), py::arg("config"), py::arg("base_dir"), py::arg("out"), py::arg("seed"), py::arg("traces"));
  m.def(
      "_dft_residuals",
      [](const std::string& file, const std::string& cfg, const std::string& base, std::optional<std::string> out) {
        return command_result(cmd_dft_residuals(file, make_config(cfg, base, out, std::nullopt)));
      },
      py::arg("file"), py::arg("config"), py::arg("base_dir"), py::arg("out"));
}
