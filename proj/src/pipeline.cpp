#include "nvloc/pipeline.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "nvloc/errors.hpp"
#include "nvloc/random.hpp"
#include "text_util.hpp"

namespace nvloc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kHz = kKiloHertz;
constexpr double kUs = 1e-6;

std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string fmt(double v, int digits = 17) {
  std::ostringstream os;
  os << std::setprecision(digits) << v;
  return os.str();
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw InputError("config: '" + where + "' must be an object");
  for (const auto& [k, v] : j.items()) {
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; }) == allowed.end()) {
      throw InputError("config: unknown key '" + k + "' in " + where);
    }
  }
}

// Line-oriented reader shared by the measurement and truth formats.
class Lines {
 public:
  explicit Lines(std::istream& in) : in_(in) {}

  bool next(std::vector<std::string>& tok) {
    std::string line;
    while (std::getline(in_, line)) {
      ++no_;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const auto t = detail::trim(line);
      if (t.empty()) continue;
      tok = detail::split_fields(t);
      return true;
    }
    return false;
  }

  [[nodiscard]] InputError error(const std::string& msg) const {
    return InputError("line " + std::to_string(no_) + ": " + msg);
  }

  double number(const std::string& s) const {
    try {
      return detail::parse_double(s);
    } catch (const InputError& e) {
      throw error(e.what());
    }
  }

  void expect(const std::vector<std::string>& tok, std::size_t n, const std::string& usage) const {
    if (tok.size() != n) throw error("expected '" + usage + "'");
  }

  void header(const std::string& magic) {
    std::vector<std::string> tok;
    if (!next(tok)) throw InputError("empty file: expected header '" + magic + " 1'");
    if (tok.size() != 2 || tok[0] != magic) throw error("expected header '" + magic + " 1'");
    if (tok[1] != "1") throw error("unsupported " + magic + " version '" + tok[1] + "'");
  }

  [[nodiscard]] std::size_t line_no() const { return no_; }

 private:
  std::istream& in_;
  std::size_t no_ = 0;
};

Eigen::Vector3d vec3(const Lines& l, const std::vector<std::string>& t, std::size_t at, double scale) {
  return {l.number(t[at]) * scale, l.number(t[at + 1]) * scale, l.number(t[at + 2]) * scale};
}

// Per-component sigmas of R diag(s^2) R^T.
Eigen::Vector3d rotate_sigma(const Eigen::Matrix3d& R, const Eigen::Vector3d& s) {
  const Eigen::Matrix3d C = R * s.cwiseAbs2().asDiagonal() * R.transpose();
  return C.diagonal().cwiseMax(0.0).cwiseSqrt();
}

Eigen::Matrix3d rotation_between(const FrameRegistry& frames, const std::string& from, const std::string& to) {
  return frames.at(to).rotation_to_lab.transpose() * frames.at(from).rotation_to_lab;
}

std::string fmt15(double v) { return fmt(v, 15); }

json vec_json(const Eigen::Vector3d& v, double scale) { return json::array({v[0] / scale, v[1] / scale, v[2] / scale}); }

json provenance(const std::string& command, const PipelineConfig& cfg, const std::string& input_path,
                const std::string& input_text, std::uint64_t seed) {
  const json c = cfg.to_json();
  return {{"version", kVersion},
          {"command", command},
          {"seed", seed},
          {"samples", cfg.mc.n_samples},
          {"config_hash", "fnv1a:" + hex64(detail::fnv1a(c.dump()))},
          {"input_file", fs::path(input_path).filename().string()},
          {"input_hash", "fnv1a:" + hex64(detail::fnv1a(input_text))},
          {"config", c}};
}

void emit(CommandResult& res, const PipelineConfig& cfg, const std::string& name, const std::string& content) {
  detail::write_file_atomic((fs::path(cfg.output_dir) / name).string(), content);
  res.files.push_back(name);
}

void finish(CommandResult& res, const PipelineConfig& cfg) {
  // report.json lists itself and report.txt so the file set is fixed before writing
  res.report["files"] = res.files;
  res.report["files"].push_back("report.json");
  res.report["files"].push_back("report.txt");
  emit(res, cfg, "report.json", res.report.dump(2) + "\n");
  emit(res, cfg, "report.txt", res.text);
}

std::string safe_stem(const std::string& s) {
  std::string out = s;
  for (char& ch : out) {
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_' && ch != '.') ch = '_';
  }
  return out;
}

}  // namespace

// ---- config -------------------------------------------------------------------

AIsoChoice AIsoChoice::parse(const std::string& s) {
  if (s == "auto") return {AIsoMode::Auto, 0.0};
  if (s == "free") return {AIsoMode::Free, 0.0};
  try {
    return {AIsoMode::Fixed, detail::parse_double(s) * kHz};
  } catch (const InputError&) {
    throw InputError("a_iso must be 'auto', 'free' or a value in kHz, got '" + s + "'");
  }
}

namespace {
AIsoChoice a_iso_from_json(const json& j) {
  if (j.is_number()) return {AIsoMode::Fixed, j.get<double>() * kHz};
  if (j.is_string()) return AIsoChoice::parse(j.get<std::string>());
  throw InputError("config: a_iso must be \"auto\", \"free\" or a number in kHz");
}

json a_iso_to_json(const AIsoChoice& a) {
  if (a.mode == AIsoMode::Auto) return "auto";
  if (a.mode == AIsoMode::Free) return "free";
  return a.value / kHz;
}

std::string resolve(const std::string& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? p : (fs::path(base) / path).lexically_normal().string();
}
}  // namespace

PipelineConfig PipelineConfig::from_json(const json& j, const std::string& base_dir) {
  check_keys(j, {"constants", "frames", "sensor_frame", "inputs", "nuclei", "fit", "monte_carlo", "threads",
                 "output_dir", "verbosity"},
             "top level");
  PipelineConfig c;
  if (j.contains("constants")) c.constants = constants_from_json(j.at("constants"));
  if (j.contains("frames")) c.frames = FrameRegistry::from_json(j.at("frames"));
  if (j.contains("sensor_frame")) c.sensor_frame = j.at("sensor_frame").get<std::string>();
  if (j.contains("inputs")) {
    const auto& in = j.at("inputs");
    check_keys(in, {"measurements", "odmr", "truth", "dft"}, "inputs");
    auto path = [&](const char* key, std::optional<std::string>& dst) {
      if (in.contains(key)) dst = resolve(base_dir, in.at(key).get<std::string>());
    };
    path("measurements", c.measurements_file);
    path("odmr", c.odmr_file);
    path("truth", c.truth_file);
    path("dft", c.dft_file);
  }
  if (j.contains("nuclei")) {
    if (!j.at("nuclei").is_array()) throw InputError("config: 'nuclei' must be an array");
    for (const auto& n : j.at("nuclei")) {
      check_keys(n, {"label", "a_iso", "threshold_radius_A"}, "nuclei[]");
      NucleusOptions o;
      if (!n.contains("label")) throw InputError("config: nucleus entry without 'label'");
      o.label = n.at("label").get<std::string>();
      if (n.contains("a_iso")) o.a_iso = a_iso_from_json(n.at("a_iso"));
      if (n.contains("threshold_radius_A")) o.threshold_radius = n.at("threshold_radius_A").get<double>() * kAngstrom;
      c.nuclei.push_back(o);
    }
  }
  if (j.contains("fit")) {
    const auto& f = j.at("fit");
    check_keys(f, {"variant", "cost", "phi_step_deg", "a_iso_range_kHz", "a_iso_step_kHz", "degenerate_factor",
                   "degenerate_floor_kHz", "max_refinements", "identifiability_threshold_uT", "z_offset_A",
                   "cost_curve_points"},
               "fit");
    if (f.contains("variant")) c.fit.variant = enhancement_variant_from_string(f.at("variant").get<std::string>());
    if (f.contains("cost")) {
      const auto m = f.at("cost").get<std::string>();
      if (m == "difference") {
        c.fit.mode = CostMode::Difference;
      } else if (m == "absolute") {
        c.fit.mode = CostMode::Absolute;
      } else {
        throw InputError("config: fit.cost must be 'difference' or 'absolute'");
      }
    }
    if (f.contains("phi_step_deg")) c.fit.phi_step = deg2rad(f.at("phi_step_deg").get<double>());
    if (f.contains("a_iso_range_kHz")) c.fit.a_iso_range = f.at("a_iso_range_kHz").get<double>() * kHz;
    if (f.contains("a_iso_step_kHz")) c.fit.a_iso_step = f.at("a_iso_step_kHz").get<double>() * kHz;
    if (f.contains("degenerate_factor")) c.fit.degenerate_factor = f.at("degenerate_factor").get<double>();
    if (f.contains("degenerate_floor_kHz")) c.fit.degenerate_floor = f.at("degenerate_floor_kHz").get<double>() * kHz;
    if (f.contains("max_refinements")) c.fit.max_refinements = f.at("max_refinements").get<std::size_t>();
    if (f.contains("identifiability_threshold_uT")) {
      c.fit.identifiability_threshold = f.at("identifiability_threshold_uT").get<double>() * kMicroTesla;
    }
    if (f.contains("z_offset_A")) c.z_offset = f.at("z_offset_A").get<double>() * kAngstrom;
    if (f.contains("cost_curve_points")) c.cost_curve_points = f.at("cost_curve_points").get<std::size_t>();
  }
  if (j.contains("monte_carlo")) {
    const auto& m = j.at("monte_carlo");
    check_keys(m, {"samples", "seed", "levels", "full_refit", "max_failed_fraction", "histogram_bins"}, "monte_carlo");
    if (m.contains("samples")) c.mc.n_samples = m.at("samples").get<std::size_t>();
    if (m.contains("seed")) c.mc.seed = m.at("seed").get<std::uint64_t>();
    if (m.contains("levels")) c.mc.confidence_levels = m.at("levels").get<std::vector<double>>();
    if (m.contains("full_refit")) c.mc.full_refit = m.at("full_refit").get<bool>();
    if (m.contains("max_failed_fraction")) c.mc.max_failed_fraction = m.at("max_failed_fraction").get<double>();
    if (m.contains("histogram_bins")) c.histogram_bins = m.at("histogram_bins").get<std::size_t>();
  }
  if (j.contains("threads")) c.threads = std::max<std::size_t>(1, j.at("threads").get<std::size_t>());
  if (j.contains("output_dir")) c.output_dir = resolve(base_dir, j.at("output_dir").get<std::string>());
  if (j.contains("verbosity")) c.verbosity = j.at("verbosity").get<int>();
  c.fit.constants = c.constants;
  c.validate();
  return c;
}

PipelineConfig PipelineConfig::load(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw InputError("config '" + path + "': " + e.what());
  }
  const fs::path p(path);
  return from_json(j, p.has_parent_path() ? p.parent_path().string() : ".");
}

json PipelineConfig::to_json() const {
  json nuc = json::array();
  for (const auto& n : nuclei) {
    nuc.push_back({{"label", n.label}, {"a_iso", a_iso_to_json(n.a_iso)}, {"threshold_radius_A", n.threshold_radius / kAngstrom}});
  }
  json j = {{"constants", constants_to_json(constants)},
            {"frames", frames.to_json()},
            {"sensor_frame", sensor_frame},
            {"nuclei", nuc},
            {"fit",
             {{"variant", to_string(fit.variant)},
              {"cost", fit.mode == CostMode::Difference ? "difference" : "absolute"},
              {"phi_step_deg", rad2deg(fit.phi_step)},
              {"a_iso_range_kHz", fit.a_iso_range / kHz},
              {"a_iso_step_kHz", fit.a_iso_step / kHz},
              {"degenerate_factor", fit.degenerate_factor},
              {"degenerate_floor_kHz", fit.degenerate_floor / kHz},
              {"max_refinements", fit.max_refinements},
              {"identifiability_threshold_uT", fit.identifiability_threshold / kMicroTesla},
              {"z_offset_A", z_offset / kAngstrom},
              {"cost_curve_points", cost_curve_points}}},
            {"monte_carlo",
             {{"samples", mc.n_samples},
              {"seed", mc.seed},
              {"levels", mc.confidence_levels},
              {"full_refit", mc.full_refit},
              {"max_failed_fraction", mc.max_failed_fraction},
              {"histogram_bins", histogram_bins}}}};
  if (a_iso_override) j["a_iso_override"] = a_iso_to_json(*a_iso_override);
  return j;
}

void PipelineConfig::validate() const {
  if (!frames.contains(sensor_frame)) throw InputError("config: unknown sensor frame '" + sensor_frame + "'");
  std::set<std::string> seen;
  for (const auto& n : nuclei) {
    if (n.label.empty()) throw InputError("config: empty nucleus label");
    if (!seen.insert(n.label).second) throw InputError("config: duplicate nucleus label '" + n.label + "'");
    if (!(n.threshold_radius > 0.0)) throw InputError("config: threshold radius of '" + n.label + "' must be positive");
  }
  if (mc.n_samples != 0) mc.validate();
  if (cost_curve_points < 2) throw InputError("config: cost_curve_points must be at least 2");
  if (!(fit.phi_step > 0.0) || !(fit.a_iso_step > 0.0)) throw InputError("config: fit steps must be positive");
  for (const char* key : {"measurements", "odmr", "truth", "dft"}) {
    const std::optional<std::string>* p = nullptr;
    if (std::string(key) == "measurements") p = &measurements_file;
    if (std::string(key) == "odmr") p = &odmr_file;
    if (std::string(key) == "truth") p = &truth_file;
    if (std::string(key) == "dft") p = &dft_file;
    if (*p && !fs::exists(**p)) throw InputError(std::string("config: ") + key + " file '" + **p + "' does not exist");
  }
}

// ---- measurement files ----------------------------------------------------------

MeasurementSet read_measurements(std::istream& in, const FrameRegistry& frames, const std::string& sensor_frame) {
  Lines l(in);
  l.header("nvloc-measurements");
  MeasurementSet set;
  std::string frame = sensor_frame;
  std::vector<std::string> t;
  auto find = [&](const std::string& label) -> NucleusData* {
    for (auto& n : set.nuclei) {
      if (n.label == label) return &n;
    }
    return nullptr;
  };
  while (l.next(t)) {
    if (t[0] == "frame") {
      l.expect(t, 2, "frame <name>");
      if (!frames.contains(t[1])) throw l.error("unknown frame '" + t[1] + "'");
      frame = t[1];
    } else if (t[0] == "nucleus") {
      l.expect(t, 9, "nucleus <label> <f0_kHz> <sigma> <f_m1_kHz> <sigma> <fR_kHz> <sigma> <tau_us|auto>");
      if (find(t[1])) throw l.error("duplicate nucleus '" + t[1] + "'");
      NucleusData n;
      n.label = t[1];
      n.f0 = {l.number(t[2]) * kHz, l.number(t[3]) * kHz};
      n.f_m1 = {l.number(t[4]) * kHz, l.number(t[5]) * kHz};
      n.fR = {l.number(t[6]) * kHz, l.number(t[7]) * kHz};
      if (n.f0.sigma < 0 || n.f_m1.sigma < 0 || n.fR.sigma < 0) throw l.error("negative sigma");
      if (!(n.f0.value > 0) || !(n.f_m1.value > 0) || !(n.fR.value > 0)) throw l.error("frequencies must be positive");
      n.tau = t[8] == "auto" ? nominal_tau(n.f0.value, n.f_m1.value) : l.number(t[8]) * kUs;
      if (!(n.tau > 0)) throw l.error("tau must be positive");
      set.nuclei.push_back(n);
    } else if (t[0] == "record") {
      l.expect(t, 19,
               "record <nucleus> <label> <fp0_kHz> <sigma> <fp_m1_kHz> <sigma> <B0_mT x y z> <sigma x y z> "
               "<dB_mT x y z> <sigma x y z>");
      NucleusData* n = find(t[1]);
      if (!n) throw l.error("record for undeclared nucleus '" + t[1] + "'");
      for (const auto& r : n->records) {
        if (r.label == t[2]) throw l.error("duplicate record '" + t[2] + "' for nucleus '" + t[1] + "'");
      }
      MeasurementRecord r;
      r.label = t[2];
      r.f0 = n->f0;
      r.f_m1 = n->f_m1;
      r.fp0 = {l.number(t[3]) * kHz, l.number(t[4]) * kHz};
      r.fp_m1 = {l.number(t[5]) * kHz, l.number(t[6]) * kHz};
      const Eigen::Matrix3d R = rotation_between(frames, frame, sensor_frame);
      r.B0 = Vector3(R * vec3(l, t, 7, kMilliTesla), sensor_frame);
      r.B0_sigma = rotate_sigma(R, vec3(l, t, 10, kMilliTesla));
      r.dB = Vector3(R * vec3(l, t, 13, kMilliTesla), sensor_frame);
      r.dB_sigma = rotate_sigma(R, vec3(l, t, 16, kMilliTesla));
      if (r.fp0.sigma < 0 || r.fp_m1.sigma < 0 || (vec3(l, t, 10, 1.0).array() < 0).any() ||
          (vec3(l, t, 16, 1.0).array() < 0).any()) {
        throw l.error("negative sigma");
      }
      try {
        r.validate();
      } catch (const InputError& e) {
        throw l.error(e.what());
      }
      n->records.push_back(r);
    } else {
      throw l.error("unknown directive '" + t[0] + "'");
    }
  }
  if (set.nuclei.empty()) throw InputError("measurement file declares no nuclei");
  for (const auto& n : set.nuclei) {
    if (n.records.empty()) set.warnings.push_back("nucleus '" + n.label + "' has no coil records");
  }
  return set;
}

void write_measurements(std::ostream& out, const MeasurementSet& set, const std::string& sensor_frame) {
  out << "nvloc-measurements 1\n";
  out << "# nucleus label f0_kHz sigma f_m1_kHz sigma fR_kHz sigma tau_us\n";
  out << "# record nucleus label fp0_kHz sigma fp_m1_kHz sigma B0_mT(x y z) sigma(x y z) dB_mT(x y z) sigma(x y z)\n";
  out << "frame " << sensor_frame << "\n";
  auto f = [](const Measured& m) { return fmt(m.value / kHz) + " " + fmt(m.sigma / kHz); };
  auto v = [](const Eigen::Vector3d& x) {
    return fmt(x[0] / kMilliTesla) + " " + fmt(x[1] / kMilliTesla) + " " + fmt(x[2] / kMilliTesla);
  };
  for (const auto& n : set.nuclei) {
    out << "nucleus " << n.label << ' ' << f(n.f0) << ' ' << f(n.f_m1) << ' ' << f(n.fR) << ' ' << fmt(n.tau / kUs)
        << '\n';
  }
  for (const auto& n : set.nuclei) {
    for (const auto& r : n.records) {
      if (r.B0.frame() != sensor_frame) throw InputError("record '" + r.label + "' is not in the sensor frame");
      out << "record " << n.label << ' ' << r.label << ' ' << f(r.fp0) << ' ' << f(r.fp_m1) << ' '
          << v(r.B0.components()) << ' ' << v(r.B0_sigma) << ' ' << v(r.dB.components()) << ' ' << v(r.dB_sigma)
          << '\n';
    }
  }
}

// ---- truth files ------------------------------------------------------------------

TruthSet read_truth(std::istream& in, const FrameRegistry& frames, const std::string& sensor_frame) {
  Lines l(in);
  l.header("nvloc-truth");
  TruthSet truth;
  std::string frame = sensor_frame;
  bool have_b0 = false;
  std::set<std::string> nuclei, coils;
  std::vector<std::string> t;
  while (l.next(t)) {
    const std::string& k = t[0];
    if (k == "frame") {
      l.expect(t, 2, "frame <name>");
      if (!frames.contains(t[1])) throw l.error("unknown frame '" + t[1] + "'");
      frame = t[1];
    } else if (k == "seed") {
      l.expect(t, 2, "seed <integer>");
      try {
        std::size_t used = 0;
        if (t[1].empty() || t[1][0] == '-' || t[1][0] == '+') throw std::invalid_argument("sign");
        truth.seed = std::stoull(t[1], &used);
        if (used != t[1].size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw l.error("seed must be a non-negative integer");
      }
    } else if (k == "B0_mT") {
      l.expect(t, 4, "B0_mT <x> <y> <z>");
      truth.B0 = rotation_between(frames, frame, sensor_frame) * vec3(l, t, 1, kMilliTesla);
      have_b0 = true;
    } else if (k == "coil") {
      l.expect(t, 5, "coil <label> <dB_mT x y z>");
      if (!coils.insert(t[1]).second) throw l.error("duplicate coil '" + t[1] + "'");
      truth.coils.push_back({t[1], rotation_between(frames, frame, sensor_frame) * vec3(l, t, 2, kMilliTesla)});
    } else if (k == "nucleus") {
      l.expect(t, 6, "nucleus <label> <r_A> <theta_deg> <phi_deg> <a_iso_kHz>");
      if (!nuclei.insert(t[1]).second) throw l.error("duplicate nucleus '" + t[1] + "'");
      TruthNucleus n;
      n.label = t[1];
      n.position = {l.number(t[2]) * kAngstrom, deg2rad(l.number(t[3])), deg2rad(l.number(t[4]))};
      n.a_iso = l.number(t[5]) * kHz;
      if (!(n.position.r > 0)) throw l.error("r must be positive");
      truth.nuclei.push_back(n);
    } else if (k == "sigma") {
      if (t.size() < 3 || t.size() % 2 != 1) throw l.error("expected 'sigma <key> <value> ...'");
      for (std::size_t i = 1; i < t.size(); i += 2) {
        const double v = l.number(t[i + 1]);
        if (!(v >= 0)) throw l.error("sigma must be non-negative");
        if (t[i] == "f_kHz") {
          truth.sigma_f = v * kHz;
        } else if (t[i] == "fR_kHz") {
          truth.sigma_fR = v * kHz;
        } else if (t[i] == "fp_kHz") {
          truth.sigma_fp = v * kHz;
        } else if (t[i] == "field_uT") {
          truth.sigma_field = v * kMicroTesla;
        } else {
          throw l.error("unknown sigma key '" + t[i] + "' (f_kHz, fR_kHz, fp_kHz, field_uT)");
        }
      }
    } else if (k == "noise") {
      l.expect(t, 2, "noise on|off");
      if (t[1] != "on" && t[1] != "off") throw l.error("noise must be 'on' or 'off'");
      truth.noise = t[1] == "on";
    } else if (k == "trace") {
      l.expect(t, 4, "trace <duration_us> <dt_us> <noise>");
      TraceSpec s{l.number(t[1]) * kUs, l.number(t[2]) * kUs, l.number(t[3])};
      if (!(s.duration > 0) || !(s.dt > 0) || !(s.noise >= 0)) throw l.error("trace parameters must be positive");
      truth.trace = s;
    } else {
      throw l.error("unknown directive '" + k + "'");
    }
  }
  if (!have_b0) throw InputError("truth file has no B0_mT line");
  if (truth.nuclei.empty()) throw InputError("truth file declares no nuclei");
  if (truth.coils.empty()) throw InputError("truth file declares no coils");
  return truth;
}

void write_truth(std::ostream& out, const TruthSet& truth) {
  auto v = [](const Eigen::Vector3d& x) {
    return fmt15(x[0] / kMilliTesla) + " " + fmt15(x[1] / kMilliTesla) + " " + fmt15(x[2] / kMilliTesla);
  };
  out << "nvloc-truth 1\n";
  out << "seed " << truth.seed << '\n';
  out << "B0_mT " << v(truth.B0) << '\n';
  for (const auto& c : truth.coils) out << "coil " << c.label << ' ' << v(c.dB) << '\n';
  for (const auto& n : truth.nuclei) {
    out << "nucleus " << n.label << ' ' << fmt15(n.position.r / kAngstrom) << ' ' << fmt15(rad2deg(n.position.theta)) << ' '
        << fmt15(rad2deg(n.position.phi)) << ' ' << fmt15(n.a_iso / kHz) << '\n';
  }
  out << "sigma f_kHz " << fmt15(truth.sigma_f / kHz) << " fR_kHz " << fmt15(truth.sigma_fR / kHz) << " fp_kHz "
      << fmt15(truth.sigma_fp / kHz) << " field_uT " << fmt15(truth.sigma_field / kMicroTesla) << '\n';
  out << "noise " << (truth.noise ? "on" : "off") << '\n';
  if (truth.trace) {
    out << "trace " << fmt15(truth.trace->duration / kUs) << ' ' << fmt15(truth.trace->dt / kUs) << ' '
        << fmt15(truth.trace->noise) << '\n';
  }
}

// ---- simulate -----------------------------------------------------------------------

namespace {

// Two tones through the signal chain; returns them in the order given.
std::pair<Measured, Measured> traced_pair(double fa, double fb, const TraceSpec& spec, std::uint64_t seed,
                                          const std::string& stem, SimulationResult& out) {
  const TimeTrace tr = synth_trace({{fa, 1.0, 0.3}, {fb, 1.0, 1.1}}, spec.duration, spec.dt, spec.noise, seed);
  out.traces.emplace_back(stem, tr);
  const auto est = estimate_frequencies(tr, 2);
  const bool swapped = fa > fb;
  const auto& ea = est[swapped ? 1 : 0];
  const auto& eb = est[swapped ? 0 : 1];
  return {{ea.f, ea.sigma_f}, {eb.f, eb.sigma_f}};
}

}  // namespace

SimulationResult simulate(const TruthSet& truth, const PipelineConfig& cfg) {
  const PhysicalConstants& c = cfg.constants;
  const CounterNormal rng(truth.seed);
  SimulationResult out;
  const std::size_t stride = truth.coils.size() + 1;
  for (std::size_t ni = 0; ni < truth.nuclei.size(); ++ni) {
    const TruthNucleus& tn = truth.nuclei[ni];
    // stream = 16 (ni * stride + k) + quantity
    auto noisy = [&](double v, double s, std::size_t k, std::size_t q) {
      return truth.noise ? v + s * rng(16 * (ni * stride + k) + q, 0) : v;
    };
    try {
      const HyperfineModel hf = dipole_tensor(tn.position, tn.a_iso, c);
      const RabiTriplet tr = forward_triplet(hf.a_par, hf.a_perp, c.gamma_n * truth.B0.norm());
      NucleusData n;
      n.label = tn.label;
      n.tau = tr.tau;
      n.fR = {noisy(tr.fR, truth.sigma_fR, 0, 2), truth.sigma_fR};
      if (!(n.fR.value > 0)) throw DomainError("simulated fR is not positive");
      if (truth.trace) {
        const auto [a, b] = traced_pair(tr.f0, tr.f_m1, *truth.trace, detail::fnv1a(tn.label + "/aligned", truth.seed),
                                        safe_stem(tn.label) + "_aligned", out);
        n.f0 = a;
        n.f_m1 = b;
      } else {
        n.f0 = {noisy(tr.f0, truth.sigma_f, 0, 0), truth.sigma_f};
        n.f_m1 = {noisy(tr.f_m1, truth.sigma_f, 0, 1), truth.sigma_f};
      }
      for (std::size_t k = 0; k < truth.coils.size(); ++k) {
        const TruthCoil& coil = truth.coils[k];
        const double fp0 = precession_frequency_raw(truth.B0, coil.dB, hf.tensor, 0, cfg.fit.variant, c);
        const double fp_m1 = precession_frequency_raw(truth.B0, coil.dB, hf.tensor, -1, cfg.fit.variant, c);
        MeasurementRecord r;
        r.label = coil.label;
        r.f0 = n.f0;
        r.f_m1 = n.f_m1;
        if (truth.trace) {
          const auto [a, b] = traced_pair(fp0, fp_m1, *truth.trace, detail::fnv1a(tn.label + "/" + coil.label, truth.seed),
                                          safe_stem(tn.label) + "_" + safe_stem(coil.label), out);
          r.fp0 = a;
          r.fp_m1 = b;
        } else {
          r.fp0 = {noisy(fp0, truth.sigma_fp, k + 1, 0), truth.sigma_fp};
          r.fp_m1 = {noisy(fp_m1, truth.sigma_fp, k + 1, 1), truth.sigma_fp};
        }
        Eigen::Vector3d b0 = truth.B0, db = coil.dB;
        for (int i = 0; i < 3; ++i) {
          b0[i] = noisy(b0[i], truth.sigma_field, k + 1, 2 + i);
          db[i] = noisy(db[i], truth.sigma_field, k + 1, 5 + i);
        }
        r.B0 = Vector3(b0, cfg.sensor_frame);
        r.dB = Vector3(db, cfg.sensor_frame);
        r.B0_sigma.setConstant(truth.sigma_field);
        r.dB_sigma.setConstant(truth.sigma_field);
        n.records.push_back(r);
      }
      out.set.nuclei.push_back(n);
    } catch (const InputError&) {
      throw;
    } catch (const Error& e) {
      out.failures.push_back({tn.label, e.what()});
    }
  }
  return out;
}

// ---- commands -------------------------------------------------------------------------

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const InputError*>(&e)) return 2;
  if (dynamic_cast<const json::exception*>(&e)) return 2;
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return 2;
  return 1;
}

CommandResult cmd_calibrate(const std::string& odmr_file, const PipelineConfig& cfg) {
  const std::string text = read_text(odmr_file);
  std::istringstream in(text);
  const OdmrDataset ds = read_odmr(in, cfg.frames);
  CalibrateOptions opt;
  opt.constants = cfg.constants;
  const FieldSolution sol = solve_field(ds, cfg.frames, std::nullopt, opt);

  const Eigen::Matrix3d R = cfg.frames.at(cfg.sensor_frame).rotation_to_lab.transpose();
  const Eigen::Vector3d b_sensor = R * sol.B.components();
  const Eigen::Vector3d s_sensor = (R * sol.covariance * R.transpose()).diagonal().cwiseMax(0.0).cwiseSqrt();
  const AlignmentReport al = alignment_report(sol, cfg.frames.at(cfg.sensor_frame));

  CommandResult res;
  json residuals = json::array();
  for (std::size_t k = 0; k < ds.entries.size(); ++k) {
    residuals.push_back({{"nv_id", ds.entries[k].nv_id},
                         {"frame", ds.entries[k].frame},
                         {"minus_kHz", sol.residuals[2 * k] / kHz},
                         {"plus_kHz", sol.residuals[2 * k + 1] / kHz}});
  }
  res.report = {{"format", "nvloc-report 1"},
                {"provenance", provenance("calibrate", cfg, odmr_file, text, cfg.mc.seed)},
                {"field",
                 {{"context", to_string(ds.context)},
                  {"B_lab_mT", vec_json(sol.B.components(), kMilliTesla)},
                  {"sigma_lab_uT", vec_json(sol.sigma, kMicroTesla)},
                  {"sensor_frame", cfg.sensor_frame},
                  {"B_sensor_mT", vec_json(b_sensor, kMilliTesla)},
                  {"sigma_sensor_uT", vec_json(s_sensor, kMicroTesla)},
                  {"norm_mT", sol.B.norm() / kMilliTesla},
                  {"residual_rms_kHz", sol.residual_rms / kHz},
                  {"mirrored_residual_rms_kHz", sol.mirrored_residual_rms / kHz},
                  {"chi2", sol.chi2},
                  {"dof", sol.dof},
                  {"condition", sol.condition},
                  {"iterations", sol.iterations},
                  {"residuals", residuals},
                  {"warnings", sol.warnings}}},
                {"alignment", nullptr}};
  // alignment only means something for the bias field
  const bool bias = ds.context == FieldContext::BiasField;
  if (bias) {
    res.report["alignment"] = {{"frame", cfg.sensor_frame},
                               {"transverse_uT", al.transverse / kMicroTesla},
                               {"tilt_deg", rad2deg(al.tilt)},
                               {"threshold_uT", 50.0},
                               {"pass", al.pass}};
  }

  std::ostringstream txt;
  txt << std::fixed;
  txt << "nvloc " << kVersion << " calibrate " << fs::path(odmr_file).filename().string() << " ("
      << to_string(ds.context) << ", " << ds.entries.size() << " NV)\n";
  txt << std::setprecision(4);
  txt << "B lab    [mT]  " << std::setw(10) << sol.B[0] / kMilliTesla << std::setw(10) << sol.B[1] / kMilliTesla
      << std::setw(10) << sol.B[2] / kMilliTesla << "\n";
  txt << std::setprecision(2);
  txt << "sigma    [uT]  " << std::setw(10) << sol.sigma[0] / kMicroTesla << std::setw(10) << sol.sigma[1] / kMicroTesla
      << std::setw(10) << sol.sigma[2] / kMicroTesla << "\n";
  txt << std::setprecision(4);
  txt << "B " << cfg.sensor_frame << " [mT]  " << std::setw(10) << b_sensor[0] / kMilliTesla << std::setw(10)
      << b_sensor[1] / kMilliTesla << std::setw(10) << b_sensor[2] / kMilliTesla << "\n";
  txt << std::setprecision(3);
  txt << "residual rms " << sol.residual_rms / kHz << " kHz (mirrored branch " << sol.mirrored_residual_rms / kHz
      << " kHz), chi2/dof " << (sol.dof ? sol.chi2 / static_cast<double>(sol.dof) : 0.0) << "\n";
  if (bias) {
    txt << "alignment to " << cfg.sensor_frame << ": transverse " << std::setprecision(1) << al.transverse / kMicroTesla
        << " uT, tilt " << std::setprecision(2) << rad2deg(al.tilt) << " deg, " << (al.pass ? "pass" : "fail")
        << " at 50 uT\n";
  }
  for (const auto& w : sol.warnings) txt << "warning: " << w << "\n";
  res.text = txt.str();

  // the field in measurement-record units
  std::ostringstream field;
  field << "# frame " << cfg.sensor_frame << ": B_mT x y z sigma_mT x y z\n";
  field << fmt(b_sensor[0] / kMilliTesla) << ' ' << fmt(b_sensor[1] / kMilliTesla) << ' '
        << fmt(b_sensor[2] / kMilliTesla) << ' ' << fmt(s_sensor[0] / kMilliTesla) << ' '
        << fmt(s_sensor[1] / kMilliTesla) << ' ' << fmt(s_sensor[2] / kMilliTesla) << '\n';
  emit(res, cfg, "field.txt", field.str());
  finish(res, cfg);
  return res;
}

namespace {

AIsoChoice choice_for(const PipelineConfig& cfg, const std::string& label) {
  if (cfg.a_iso_override) return *cfg.a_iso_override;
  for (const auto& n : cfg.nuclei) {
    if (n.label == label) return n.a_iso;
  }
  return {};
}

double threshold_for(const PipelineConfig& cfg, const std::string& label) {
  for (const auto& n : cfg.nuclei) {
    if (n.label == label) return n.threshold_radius;
  }
  return 10 * kAngstrom;
}

json intervals_json(const std::vector<Interval>& iv, double scale) {
  json a = json::array();
  for (const auto& i : iv) a.push_back({{"level", i.level}, {"low", i.low / scale}, {"high", i.high / scale}});
  return a;
}

constexpr double kRad = std::numbers::pi / 180.0;

struct NucleusOutcome {
  json report;
  std::string row;
  bool failed = false;
};

std::string pm(double v, double s, int prec) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  if (s > 0) os << " +- " << s;
  return os.str();
}

std::string range(double v, const Interval& iv, int prec) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v << " [" << iv.low << ", " << iv.high << "]";
  return os.str();
}

NucleusOutcome localize_one(const NucleusData& n, const PipelineConfig& cfg, CommandResult& res) {
  NucleusOutcome out;
  json& r = out.report;
  r["label"] = n.label;
  r["triplet"] = {{"f0_kHz", n.f0.value / kHz},     {"f0_sigma_kHz", n.f0.sigma / kHz},
                  {"f_m1_kHz", n.f_m1.value / kHz}, {"f_m1_sigma_kHz", n.f_m1.sigma / kHz},
                  {"fR_kHz", n.fR.value / kHz},     {"fR_sigma_kHz", n.fR.sigma / kHz},
                  {"tau_us", n.tau / kUs}};
  json warnings = json::array();
  const std::string stem = safe_stem(n.label);
  std::ostringstream row;
  row << std::left << std::setw(10) << n.label;

  CouplingEstimate coupling;
  try {
    coupling = extract_couplings(n.f0.value, n.f_m1.value, n.fR.value, n.tau);
  } catch (const Error& e) {
    r["status"] = "failed";
    r["error"] = std::string("coupling extraction: ") + e.what();
    out.failed = true;
    row << "failed: " << e.what();
    out.row = row.str();
    return out;
  }
  for (const auto& w : coupling.warnings) warnings.push_back(w);

  const AIsoChoice choice = choice_for(cfg, n.label);
  FitOptions fo = cfg.fit;
  fo.constants = cfg.constants;
  if (choice.mode == AIsoMode::Fixed) {
    fo.fix_a_iso = choice.value;
  } else if (choice.mode == AIsoMode::Auto) {
    fo.fix_a_iso = default_fix_a_iso(coupling, threshold_for(cfg, n.label), cfg.constants);
  }
  r["a_iso_treatment"] = fo.fix_a_iso ? "fixed" : "fitted";

  NucleusData nd = n;
  nd.fix_a_iso = fo.fix_a_iso;
  EstimateResult est;
  bool have_mc = false;
  try {
    if (cfg.mc.n_samples > 0) {
      McConfig mc = cfg.mc;
      mc.parallel_chunks = cfg.threads;
      est = propagate(nd, fo, mc);
      coupling.a_par.sigma = est.coupling.a_par.sigma;
      coupling.a_perp.sigma = est.coupling.a_perp.sigma;
      have_mc = true;
    } else {
      est.fit = fit_azimuth(n.records, coupling, fo);
    }
  } catch (const IdentifiabilityError& e) {
    // phi is lost but (r, theta) still follow from the couplings
    const double a_iso = fo.fix_a_iso.value_or(0.0);
    r["status"] = "phi-unidentifiable";
    r["error"] = e.what();
    r["couplings"] = {{"a_par_kHz", coupling.a_par.value / kHz}, {"a_perp_kHz", coupling.a_perp.value / kHz}};
    try {
      const SphericalPosition p = invert_dipole(coupling.a_par.value, coupling.a_perp.value, a_iso, cfg.constants);
      r["position"] = {{"r_A", p.r / kAngstrom}, {"theta_deg", rad2deg(p.theta)}, {"phi_deg", nullptr},
                       {"a_iso_kHz", a_iso / kHz}};
      row << std::setw(18) << pm(coupling.a_par.value / kHz, 0, 2) << std::setw(18)
          << pm(coupling.a_perp.value / kHz, 0, 2) << std::setw(18) << pm(a_iso / kHz, 0, 1) << std::setw(24)
          << pm(p.r / kAngstrom, 0, 2) << std::setw(24) << pm(rad2deg(p.theta), 0, 1) << std::setw(26) << "-"
          << "phi not identifiable";
    } catch (const Error& e2) {
      r["position_error"] = e2.what();
      row << "failed: " << e2.what();
    }
    r["warnings"] = warnings;
    out.failed = true;
    out.row = row.str();
    return out;
  } catch (const Error& e) {
    r["status"] = "failed";
    r["error"] = e.what();
    r["warnings"] = warnings;
    out.failed = true;
    row << "failed: " << e.what();
    out.row = row.str();
    return out;
  }

  const AzimuthFit& fit = est.fit;
  const LocatedNucleus loc = assemble_position(coupling, fit, cfg.z_offset, cfg.constants);
  r["status"] = "ok";
  r["couplings"] = {{"a_par_kHz", coupling.a_par.value / kHz},
                    {"a_par_sigma_kHz", coupling.a_par.sigma / kHz},
                    {"a_perp_kHz", coupling.a_perp.value / kHz},
                    {"a_perp_sigma_kHz", coupling.a_perp.sigma / kHz},
                    {"method", coupling.method == CouplingMethod::Exact ? "exact" : "approximate"}};
  json recs = json::array();
  for (std::size_t k = 0; k < n.records.size(); ++k) {
    const auto& m = n.records[k];
    const double split = m.fp_m1.value - m.fp0.value;
    const double x = fit.per_record_xi[k];
    recs.push_back({{"label", m.label},
                    {"fp0_kHz", m.fp0.value / kHz},
                    {"fp_m1_kHz", m.fp_m1.value / kHz},
                    {"splitting_kHz", split / kHz},
                    {"xi_kHz", x / kHz},
                    {"B0_mT", vec_json(m.B0.components(), kMilliTesla)},
                    {"dB_mT", vec_json(m.dB.components(), kMilliTesla)}});
  }
  r["records"] = recs;
  json minima = json::array();
  for (const auto& mn : fit.minima) {
    minima.push_back({{"phi_deg", rad2deg(mn.phi)}, {"a_iso_kHz", mn.a_iso / kHz}, {"cost_kHz2", mn.cost / (kHz * kHz)}});
  }
  json degenerate = json::array();
  for (double p : fit.degenerate_minima) degenerate.push_back(rad2deg(p));
  r["fit"] = {{"phi_deg", rad2deg(fit.phi)},
              {"a_iso_kHz", fit.a_iso / kHz},
              {"a_iso_fixed", fit.a_iso_fixed},
              {"residual_kHz", fit.residual / kHz},
              {"degenerate_minima_deg", degenerate},
              {"minima", minima}};
  if (fit.degenerate_minima.size() > 1) {
    std::ostringstream w;
    w << fit.degenerate_minima.size() << " near-degenerate azimuth minima at" << std::fixed << std::setprecision(1);
    for (std::size_t i = 0; i < fit.degenerate_minima.size(); ++i) {
      w << (i ? ", " : " ") << rad2deg(fit.degenerate_minima[i]);
    }
    w << " deg; phi intervals cover the reported one";
    warnings.push_back(w.str());
  }
  r["position"] = {{"r_A", loc.position.r / kAngstrom},
                   {"theta_deg", rad2deg(loc.position.theta)},
                   {"phi_deg", rad2deg(loc.position.phi)},
                   {"a_iso_kHz", fit.a_iso / kHz},
                   {"x_A", loc.cartesian.x() / kAngstrom},
                   {"y_A", loc.cartesian.y() / kAngstrom},
                   {"z_A", loc.cartesian.z() / kAngstrom},
                   {"z_offset_A", cfg.z_offset / kAngstrom}};

  // cost curve at the fitted a_iso
  const Eigen::MatrixXd cc = cost_curve(n.records, coupling, fit.a_iso, cfg.cost_curve_points, fo);
  std::ostringstream cs;
  cs << "phi_deg";
  for (const auto& m : n.records) cs << ",xi_" << safe_stem(m.label) << "_kHz";
  cs << ",cost_kHz2\n";
  for (Eigen::Index i = 0; i < cc.rows(); ++i) {
    cs << fmt(rad2deg(cc(i, 0)), 12);
    for (Eigen::Index j = 1; j + 1 < cc.cols(); ++j) cs << ',' << fmt(cc(i, j) / kHz, 12);
    cs << ',' << fmt(cc(i, cc.cols() - 1) / (kHz * kHz), 12) << '\n';
  }
  const std::string cost_file = stem + "_cost.csv";
  emit(res, cfg, cost_file, cs.str());
  json files = {{"cost_curve", cost_file}};

  if (have_mc) {
    const std::array<double, 4> scale{kRad, kHz, kAngstrom, kRad};
    const std::array<const char*, 4> keys{"phi_deg", "a_iso_kHz", "r_A", "theta_deg"};
    json mode, ci;
    for (std::size_t p = 0; p < 4; ++p) {
      mode[keys[p]] = est.mode[p] / scale[p];
      ci[keys[p]] = intervals_json(est.ci[p], scale[p]);
    }
    r["monte_carlo"] = {{"samples", cfg.mc.n_samples}, {"failed", est.n_failed}, {"mode", mode}, {"intervals", ci}};

    std::ostringstream sc;
    write_scatter(sc, est.scatter);
    const std::string scatter_file = stem + "_scatter.csv";
    emit(res, cfg, scatter_file, sc.str());
    files["scatter"] = scatter_file;
    std::size_t bins = cfg.histogram_bins;
    if (bins == 0) {
      bins = std::clamp<std::size_t>(static_cast<std::size_t>(std::sqrt(static_cast<double>(est.scatter.size()))), 10,
                                     200);
    }
    for (std::size_t p = 0; p < 4; ++p) {
      const auto param = static_cast<Parameter>(p);
      if (fit.a_iso_fixed && param == Parameter::AIso) continue;
      std::ostringstream hs;
      write_histogram(hs, histogram(est.scatter, param, bins, param == Parameter::Phi), param);
      const std::string hf = stem + "_hist_" + to_string(param) + ".csv";
      emit(res, cfg, hf, hs.str());
      files["histogram_" + to_string(param)] = hf;
    }
  }
  r["files"] = files;
  r["warnings"] = warnings;

  const double phi_deg = rad2deg(fit.phi);
  row << std::setw(18) << pm(coupling.a_par.value / kHz, coupling.a_par.sigma / kHz, 2) << std::setw(18)
      << pm(coupling.a_perp.value / kHz, coupling.a_perp.sigma / kHz, 2);
  if (have_mc) {
    auto scaled = [](const Interval& iv, double s) { return Interval{iv.level, iv.low / s, iv.high / s}; };
    row << std::setw(18)
        << (fit.a_iso_fixed ? pm(fit.a_iso / kHz, 0, 1) + " (fixed)"
                            : range(fit.a_iso / kHz, scaled(est.ci[1][0], kHz), 1))
        << std::setw(24) << range(loc.position.r / kAngstrom, scaled(est.ci[2][0], kAngstrom), 2) << std::setw(24)
        << range(rad2deg(loc.position.theta), scaled(est.ci[3][0], kRad), 1) << std::setw(26)
        << range(phi_deg, scaled(est.ci[0][0], kRad), 1);
  } else {
    row << std::setw(18) << pm(fit.a_iso / kHz, 0, 1) + (fit.a_iso_fixed ? " (fixed)" : "") << std::setw(24)
        << pm(loc.position.r / kAngstrom, 0, 2) << std::setw(24) << pm(rad2deg(loc.position.theta), 0, 1)
        << std::setw(26) << pm(phi_deg, 0, 1);
  }
  row << "ok";
  out.row = row.str();
  return out;
}

}  // namespace

CommandResult cmd_localize(const std::string& measurements_file, const PipelineConfig& cfg) {
  cfg.validate();
  const std::string text = read_text(measurements_file);
  std::istringstream in(text);
  const MeasurementSet set = read_measurements(in, cfg.frames, cfg.sensor_frame);

  CommandResult res;
  json warnings = set.warnings;
  for (const auto& o : cfg.nuclei) {
    const bool present = std::any_of(set.nuclei.begin(), set.nuclei.end(), [&](const auto& n) { return n.label == o.label; });
    if (!present) warnings.push_back("config nucleus '" + o.label + "' is not in the measurement file");
  }
  json nuclei = json::array();
  std::ostringstream txt;
  txt << "nvloc " << kVersion << " localize " << fs::path(measurements_file).filename().string() << "  seed "
      << cfg.mc.seed << "  samples " << cfg.mc.n_samples << "\n";
  if (cfg.mc.n_samples > 0) {
    txt << "intervals in brackets at level " << cfg.mc.confidence_levels.front() << "\n";
  }
  txt << std::left << std::setw(10) << "nucleus" << std::setw(18) << "a_par_kHz" << std::setw(18) << "a_perp_kHz"
      << std::setw(18) << "a_iso_kHz" << std::setw(24) << "r_A" << std::setw(24) << "theta_deg" << std::setw(26)
      << "phi_deg"
      << "status\n";
  std::size_t failed = 0;
  for (const auto& n : set.nuclei) {
    NucleusOutcome o = localize_one(n, cfg, res);
    failed += o.failed;
    nuclei.push_back(o.report);
    txt << o.row << "\n";
  }
  for (const auto& w : warnings) txt << "warning: " << w.get<std::string>() << "\n";
  for (const auto& n : nuclei) {
    for (const auto& w : n.value("warnings", json::array())) {
      txt << "warning (" << n["label"].get<std::string>() << "): " << w.get<std::string>() << "\n";
    }
  }

  res.report = {{"format", "nvloc-report 1"},
                {"provenance", provenance("localize", cfg, measurements_file, text, cfg.mc.seed)},
                {"nuclei", nuclei},
                {"warnings", warnings},
                {"summary", {{"nuclei", set.nuclei.size()}, {"failed", failed}}}};
  res.text = txt.str();
  res.exit_code = failed ? 1 : 0;
  finish(res, cfg);
  return res;
}

CommandResult cmd_simulate(const std::string& truth_file, const PipelineConfig& cfg,
                           std::optional<std::uint64_t> seed_override, bool write_traces) {
  cfg.validate();
  const std::string text = read_text(truth_file);
  std::istringstream in(text);
  TruthSet truth = read_truth(in, cfg.frames, cfg.sensor_frame);
  if (seed_override) truth.seed = *seed_override;
  const SimulationResult sim = simulate(truth, cfg);

  CommandResult res;
  std::ostringstream meas;
  write_measurements(meas, sim.set, cfg.sensor_frame);
  emit(res, cfg, "measurements.txt", meas.str());
  if (write_traces) {
    for (const auto& [stem, tr] : sim.traces) {
      std::ostringstream ts;
      write_trace(ts, tr);
      emit(res, cfg, "trace_" + stem + ".csv", ts.str());
    }
  }
  json failures = json::array();
  for (const auto& f : sim.failures) failures.push_back({{"label", f.label}, {"error", f.message}});
  json nuclei = json::array();
  for (const auto& n : sim.set.nuclei) {
    json recs = json::array();
    for (const auto& r : n.records) {
      recs.push_back({{"label", r.label}, {"fp0_kHz", r.fp0.value / kHz}, {"fp_m1_kHz", r.fp_m1.value / kHz}});
    }
    nuclei.push_back({{"label", n.label},
                      {"f0_kHz", n.f0.value / kHz},
                      {"f_m1_kHz", n.f_m1.value / kHz},
                      {"fR_kHz", n.fR.value / kHz},
                      {"tau_us", n.tau / kUs},
                      {"records", recs}});
  }
  res.report = {{"format", "nvloc-report 1"},
                {"provenance", provenance("simulate", cfg, truth_file, text, truth.seed)},
                {"noise", truth.noise},
                {"traces", truth.trace.has_value()},
                {"nuclei", nuclei},
                {"failures", failures}};
  std::ostringstream txt;
  txt << "nvloc " << kVersion << " simulate " << fs::path(truth_file).filename().string() << "  seed " << truth.seed
      << "\n";
  txt << std::fixed << std::setprecision(3);
  for (const auto& n : sim.set.nuclei) {
    txt << n.label << ": f0 " << n.f0.value / kHz << "  f_m1 " << n.f_m1.value / kHz << "  fR " << n.fR.value / kHz
        << " kHz\n";
    for (const auto& r : n.records) {
      txt << "  " << r.label << ": fp0 " << r.fp0.value / kHz << "  fp_m1 " << r.fp_m1.value / kHz << " kHz\n";
    }
  }
  for (const auto& f : sim.failures) txt << f.label << ": failed: " << f.message << "\n";
  res.text = txt.str();
  res.exit_code = sim.failures.empty() ? 0 : 1;
  finish(res, cfg);
  return res;
}

CommandResult cmd_dft_residuals(const std::string& table_file, const PipelineConfig& cfg) {
  const std::string text = read_text(table_file);
  std::istringstream in(text);
  std::vector<DftRowError> parse_errors;
  const std::vector<DftRow> rows = read_dft_table(in, parse_errors);
  if (rows.empty()) {
    std::string msg = "DFT table has no usable rows";
    if (!parse_errors.empty()) msg += " (line " + std::to_string(parse_errors.front().row) + ": " + parse_errors.front().message + ")";
    throw InputError(msg);
  }
  DftResidualReport rep = dft_residual_map(rows, cfg.constants);
  for (const auto& e : parse_errors) rep.errors.push_back(e);

  CommandResult res;
  std::ostringstream csv;
  write_dft_report(csv, rep);
  emit(res, cfg, "dft_residuals.csv", csv.str());

  json bins = json::array();
  for (const auto& b : rep.bins) {
    bins.push_back({{"r_low_A", b.r_low / kAngstrom},
                    {"r_high_A", b.r_high / kAngstrom},
                    {"count", b.count},
                    {"median_dr_A", b.median_dr / kAngstrom},
                    {"median_dtheta_deg", rad2deg(b.median_dtheta)}});
  }
  json errors = json::array();
  for (const auto& e : rep.errors) errors.push_back({{"row", e.row}, {"error", e.message}});
  res.report = {{"format", "nvloc-report 1"},
                {"provenance", provenance("dft-residuals", cfg, table_file, text, cfg.mc.seed)},
                {"rows", rep.rows.size()},
                {"bins", bins},
                {"errors", errors}};
  std::ostringstream txt;
  txt << "nvloc " << kVersion << " dft-residuals " << fs::path(table_file).filename().string() << ": "
      << rep.rows.size() << " rows inverted, " << rep.errors.size() << " rejected\n";
  txt << std::fixed << std::setprecision(2);
  txt << std::left << std::setw(16) << "r_bin_A" << std::setw(8) << "count" << std::setw(16) << "median_dr_A"
      << "median_dtheta_deg\n";
  for (const auto& b : rep.bins) {
    std::ostringstream bin;
    bin << std::fixed << std::setprecision(1) << b.r_low / kAngstrom << "-" << b.r_high / kAngstrom;
    txt << std::setw(16) << bin.str() << std::setw(8) << b.count << std::setw(16) << b.median_dr / kAngstrom
        << rad2deg(b.median_dtheta) << "\n";
  }
  for (const auto& e : rep.errors) txt << "row " << e.row << ": " << e.message << "\n";
  res.text = txt.str();
  finish(res, cfg);
  return res;
}

}  // namespace nvloc
