#include <algorithm>
#include <cmath>
#include <istream>
#include <mutex>
#include <numbers>
#include <ostream>
#include <string>

#include <fftw3.h>

#include "nvloc/errors.hpp"
#include "nvloc/lsq.hpp"
#include "nvloc/random.hpp"
#include "nvloc/signal.hpp"
#include "text_util.hpp"

namespace nvloc {

using std::numbers::pi;

void TimeTrace::validate() const {
  if (y.size() != t.size()) throw InputError("trace: time and signal lengths differ");
  if (!sigma_y.empty() && sigma_y.size() != t.size()) throw InputError("trace: sigma length differs");
  if (t.size() < 2) throw InputError("trace: need at least two samples");
  const double h = t[1] - t[0];
  if (!(h > 0.0)) throw InputError("trace: time must increase");
  for (std::size_t i = 1; i < t.size(); ++i) {
    // compare against the grid, not neighbours, so drift cannot accumulate
    const double expect = t[0] + static_cast<double>(i) * h;
    if (std::abs(t[i] - expect) > 1e-9 * std::max(std::abs(expect), h) + 1e-9 * h * static_cast<double>(i)) {
      throw InputError("trace: non-uniform sampling at index " + std::to_string(i));
    }
  }
  for (double s : sigma_y) {
    if (!(s >= 0.0)) throw InputError("trace: negative sigma");
  }
}

TimeTrace synth_trace(const std::vector<ToneComponent>& components, double duration, double dt, double noise_sigma,
                      std::uint64_t seed, double decay) {
  if (!(dt > 0.0) || !(duration > 0.0)) throw DomainError("synth_trace: duration and dt must be positive");
  if (noise_sigma < 0.0) throw DomainError("synth_trace: negative noise sigma");
  if (!(decay > 0.0)) throw DomainError("synth_trace: decay must be positive");
  const double nyquist = 0.5 / dt;
  for (const auto& c : components) {
    if (!(c.f >= 0.0) || c.f >= nyquist) {
      throw DomainError("synth_trace: component at " + std::to_string(c.f) + " Hz aliases (Nyquist " +
                        std::to_string(nyquist) + " Hz)");
    }
  }
  const auto n = static_cast<std::size_t>(std::llround(duration / dt));
  if (n < 2) throw DomainError("synth_trace: fewer than two samples");
  CounterNormal rng(seed);
  TimeTrace tr;
  tr.t.resize(n);
  tr.y.resize(n);
  if (noise_sigma > 0.0) tr.sigma_y.assign(n, noise_sigma);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) * dt;
    double y = 0.0;
    for (const auto& c : components) y += c.amplitude * std::cos(2.0 * pi * c.f * t + c.phase);
    if (std::isfinite(decay)) y *= std::exp(-t / decay);
    if (noise_sigma > 0.0) y += noise_sigma * rng(0, i);
    tr.t[i] = t;
    tr.y[i] = y;
  }
  return tr;
}

std::vector<std::pair<double, double>> periodogram(const TimeTrace& trace, std::size_t zero_pad) {
  trace.validate();
  const std::size_t n = trace.size();
  const std::size_t m = n * std::max<std::size_t>(1, zero_pad);
  double mean = 0.0;
  for (double v : trace.y) mean += v;
  mean /= static_cast<double>(n);

  double* in = fftw_alloc_real(m);
  fftw_complex* out = fftw_alloc_complex(m / 2 + 1);
  std::fill(in, in + m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double w = 0.5 - 0.5 * std::cos(2.0 * pi * static_cast<double>(i) / static_cast<double>(n - 1));
    in[i] = w * (trace.y[i] - mean);
  }
  std::vector<std::pair<double, double>> spec(m / 2 + 1);
  {
    // planner is not thread safe
    static std::mutex planner;
    fftw_plan plan;
    {
      std::lock_guard<std::mutex> lock(planner);
      plan = fftw_plan_dft_r2c_1d(static_cast<int>(m), in, out, FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    {
      std::lock_guard<std::mutex> lock(planner);
      fftw_destroy_plan(plan);
    }
  }
  const double df = 1.0 / (static_cast<double>(m) * trace.dt());
  for (std::size_t k = 0; k < spec.size(); ++k) {
    spec[k] = {static_cast<double>(k) * df, out[k][0] * out[k][0] + out[k][1] * out[k][1]};
  }
  fftw_free(in);
  fftw_free(out);
  return spec;
}

namespace {

struct Model {
  const TimeTrace& tr;
  std::size_t k;
  bool weighted;

  // parameters per tone: f, a (cos), b (sin)
  [[nodiscard]] Eigen::VectorXd residuals(const Eigen::VectorXd& p) const {
    const auto n = static_cast<Eigen::Index>(tr.size());
    Eigen::VectorXd r(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double t = tr.t[static_cast<std::size_t>(i)];
      double m = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        const auto o = static_cast<Eigen::Index>(3 * j);
        const double w = 2.0 * pi * p[o] * t;
        m += p[o + 1] * std::cos(w) + p[o + 2] * std::sin(w);
      }
      r[i] = tr.y[static_cast<std::size_t>(i)] - m;
      if (weighted) r[i] /= tr.sigma_y[static_cast<std::size_t>(i)];
    }
    return r;
  }

  [[nodiscard]] Eigen::MatrixXd jacobian(const Eigen::VectorXd& p) const {
    const auto n = static_cast<Eigen::Index>(tr.size());
    Eigen::MatrixXd J(n, p.size());
    for (Eigen::Index i = 0; i < n; ++i) {
      const double t = tr.t[static_cast<std::size_t>(i)];
      const double s = weighted ? tr.sigma_y[static_cast<std::size_t>(i)] : 1.0;
      for (std::size_t j = 0; j < k; ++j) {
        const auto o = static_cast<Eigen::Index>(3 * j);
        const double w = 2.0 * pi * p[o] * t;
        const double c = std::cos(w), sn = std::sin(w);
        J(i, o) = -2.0 * pi * t * (-p[o + 1] * sn + p[o + 2] * c) / s;
        J(i, o + 1) = -c / s;
        J(i, o + 2) = -sn / s;
      }
    }
    return J;
  }
};

}  // namespace

std::vector<FrequencyEstimate> estimate_frequencies(const TimeTrace& trace, std::size_t n_components,
                                                    const EstimateOptions& opt) {
  trace.validate();
  if (n_components < 1) throw InputError("estimate_frequencies: n_components must be >= 1");
  if (trace.size() <= 4 * n_components + 2) throw InputError("estimate_frequencies: trace too short");
  const double duration = trace.dt() * static_cast<double>(trace.size());
  const double nyquist = 0.5 / trace.dt();

  const auto spec = periodogram(trace, opt.zero_pad);
  double pmax = 0.0;
  for (const auto& s : spec) pmax = std::max(pmax, s.second);
  if (!(pmax > 0.0)) throw IdentifiabilityError("fewer resolvable peaks than requested (flat spectrum)");

  std::vector<std::pair<double, double>> peaks;  // (power, f)
  for (std::size_t i = 1; i + 1 < spec.size(); ++i) {
    const double p = spec[i].second;
    if (p < opt.peak_threshold * pmax) continue;
    if (p < spec[i - 1].second || p <= spec[i + 1].second) continue;
    if (spec[i].first < 1.0 / duration) continue;
    peaks.emplace_back(p, spec[i].first);
  }
  std::sort(peaks.begin(), peaks.end(), [](auto& a, auto& b) { return a.first > b.first; });
  std::vector<double> seeds;
  for (const auto& pk : peaks) {
    bool far = true;
    for (double f : seeds) {
      if (std::abs(f - pk.second) < 1.0 / duration) far = false;
    }
    if (far) seeds.push_back(pk.second);
    if (seeds.size() == n_components) break;
  }
  if (seeds.size() < n_components) {
    throw IdentifiabilityError("fewer resolvable peaks than requested: found " + std::to_string(seeds.size()) +
                               ", need " + std::to_string(n_components));
  }
  std::sort(seeds.begin(), seeds.end());

  bool weighted = !trace.sigma_y.empty();
  for (double s : trace.sigma_y) weighted = weighted && s > 0.0;
  Model model{trace, n_components, weighted};

  // amplitudes by linear least squares at the seed frequencies
  Eigen::VectorXd p(static_cast<Eigen::Index>(3 * n_components));
  {
    Eigen::VectorXd p0 = Eigen::VectorXd::Zero(p.size());
    for (std::size_t j = 0; j < n_components; ++j) p0[static_cast<Eigen::Index>(3 * j)] = seeds[j];
    const Eigen::MatrixXd J = model.jacobian(p0);
    Eigen::MatrixXd A(J.rows(), static_cast<Eigen::Index>(2 * n_components));
    for (std::size_t j = 0; j < n_components; ++j) {
      A.col(static_cast<Eigen::Index>(2 * j)) = -J.col(static_cast<Eigen::Index>(3 * j + 1));
      A.col(static_cast<Eigen::Index>(2 * j + 1)) = -J.col(static_cast<Eigen::Index>(3 * j + 2));
    }
    Eigen::VectorXd rhs = model.residuals(p0);  // y (weighted) since amplitudes are zero
    const Eigen::VectorXd ab = A.colPivHouseholderQr().solve(rhs);
    for (std::size_t j = 0; j < n_components; ++j) {
      p[static_cast<Eigen::Index>(3 * j)] = seeds[j];
      p[static_cast<Eigen::Index>(3 * j + 1)] = ab[static_cast<Eigen::Index>(2 * j)];
      p[static_cast<Eigen::Index>(3 * j + 2)] = ab[static_cast<Eigen::Index>(2 * j + 1)];
    }
  }

  LmOptions lm;
  lm.max_iterations = opt.max_iterations;
  lm.xtol = 1e-15;
  Eigen::VectorXd scale(p.size());
  for (std::size_t j = 0; j < n_components; ++j) {
    scale[static_cast<Eigen::Index>(3 * j)] = 1.0 / duration;
    scale[static_cast<Eigen::Index>(3 * j + 1)] = 1e-12;
    scale[static_cast<Eigen::Index>(3 * j + 2)] = 1e-12;
  }
  const LmResult res = levenberg_marquardt([&](const Eigen::VectorXd& x) { return model.residuals(x); }, p, lm,
                                           [&](const Eigen::VectorXd& x) { return model.jacobian(x); }, scale);
  if (!res.converged) throw ConvergenceError("frequency fit did not converge in " + std::to_string(lm.max_iterations) + " iterations");

  const auto dof = static_cast<double>(trace.size() - 3 * n_components);
  const double s2 = weighted ? 1.0 : res.cost / dof;
  const Eigen::MatrixXd cov = normal_covariance(res.jacobian) * s2;

  std::vector<FrequencyEstimate> out;
  for (std::size_t j = 0; j < n_components; ++j) {
    const auto o = static_cast<Eigen::Index>(3 * j);
    FrequencyEstimate e;
    e.f = res.x[o];
    // noiseless data leaves a zero covariance; keep sigma_f strictly positive at rounding level
    e.sigma_f = std::max(std::sqrt(std::max(cov(o, o), 0.0)), 1e-15 * std::abs(e.f));
    e.amplitude = std::hypot(res.x[o + 1], res.x[o + 2]);
    e.phase = std::atan2(-res.x[o + 2], res.x[o + 1]);
    if (e.f < 0.0) {
      e.f = -e.f;
      e.phase = -e.phase;
    }
    if (!(e.f > 0.0) || e.f >= nyquist) throw ConvergenceError("frequency fit left (0, Nyquist)");
    out.push_back(e);
  }
  std::sort(out.begin(), out.end(), [](auto& a, auto& b) { return a.f < b.f; });
  return out;
}

TimeTrace read_trace(std::istream& in) {
  TimeTrace tr;
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  std::size_t ncols = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string s(detail::trim(line));
    if (s.empty() || s[0] == '#') continue;
    const auto f = detail::split_fields(s);
    if (!header_seen) {
      header_seen = true;
      if (f.size() < 2 || f.size() > 3 || f[0] != "time_s" || f[1] != "signal" || (f.size() == 3 && f[2] != "sigma")) {
        throw InputError("trace line " + std::to_string(lineno) + ": expected header 'time_s, signal[, sigma]'");
      }
      ncols = f.size();
      continue;
    }
    if (f.size() != ncols) throw InputError("trace line " + std::to_string(lineno) + ": wrong column count");
    try {
      tr.t.push_back(detail::parse_double(f[0]));
      tr.y.push_back(detail::parse_double(f[1]));
      if (ncols == 3) tr.sigma_y.push_back(detail::parse_double(f[2]));
    } catch (const InputError& e) {
      throw InputError("trace line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!header_seen) throw InputError("trace: empty file");
  tr.validate();
  return tr;
}

void write_trace(std::ostream& out, const TimeTrace& trace) {
  const bool sig = !trace.sigma_y.empty();
  out << (sig ? "time_s,signal,sigma\n" : "time_s,signal\n");
  out.precision(17);
  for (std::size_t i = 0; i < trace.size(); ++i) {
    out << trace.t[i] << ',' << trace.y[i];
    if (sig) out << ',' << trace.sigma_y[i];
    out << '\n';
  }
}

}  // namespace nvloc
