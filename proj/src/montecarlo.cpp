#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include "nvloc/errors.hpp"
#include "nvloc/montecarlo.hpp"
#include "nvloc/parallel.hpp"
#include "nvloc/random.hpp"

namespace nvloc {

using std::numbers::pi;

void McConfig::validate() const {
  if (n_samples < 100) throw InputError("montecarlo: n_samples must be >= 100");
  if (confidence_levels.empty()) throw InputError("montecarlo: no confidence level");
  for (double l : confidence_levels) {
    if (!(l > 0.0 && l < 1.0)) throw InputError("montecarlo: confidence level outside (0, 1)");
  }
  if (!(max_failed_fraction >= 0.0 && max_failed_fraction < 1.0)) throw InputError("montecarlo: bad failure fraction");
}

std::string to_string(Parameter p) {
  switch (p) {
    case Parameter::Phi: return "phi";
    case Parameter::AIso: return "a_iso";
    case Parameter::R: return "r";
    case Parameter::Theta: return "theta";
  }
  return "?";
}

double circular_mean(const std::vector<double>& angles) {
  double s = 0.0, c = 0.0;
  for (double a : angles) {
    s += std::sin(a);
    c += std::cos(a);
  }
  return wrap_two_pi(std::atan2(s, c));
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw InputError("quantile of empty data");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

namespace {

// Variable slots per record in the counter stream; fixed so adding fields later
// does not shift earlier draws.
constexpr std::uint64_t kNucleusSlots = 3;
constexpr std::uint64_t kRecordSlots = 16;

struct SampleOutcome {
  EstimatePoint point{};
  CouplingEstimate coupling;
  bool ok = false;
};

double draw(const CounterNormal& rng, std::uint64_t slot, std::uint64_t sample, const Measured& m) {
  return m.sigma > 0.0 ? m.value + m.sigma * rng(slot, sample) : m.value;
}

SampleOutcome run_sample(const NucleusData& nuc, const FitOptions& fo, const McConfig& mc,
                         const std::vector<CostMinimum>& seeds, const CounterNormal& rng, std::uint64_t i) {
  SampleOutcome out;
  const double f0 = draw(rng, 0, i, nuc.f0);
  const double f1 = draw(rng, 1, i, nuc.f_m1);
  const double fr = draw(rng, 2, i, nuc.fR);
  std::vector<MeasurementRecord> recs = nuc.records;
  for (std::size_t k = 0; k < recs.size(); ++k) {
    auto& r = recs[k];
    const std::uint64_t base = kNucleusSlots + kRecordSlots * k;
    r.fp0.value = draw(rng, base + 0, i, r.fp0);
    r.fp_m1.value = draw(rng, base + 1, i, r.fp_m1);
    Eigen::Vector3d b0 = r.B0.components(), db = r.dB.components();
    for (int c = 0; c < 3; ++c) {
      b0[c] = draw(rng, base + 2 + static_cast<std::uint64_t>(c), i, {b0[c], r.B0_sigma[c]});
      db[c] = draw(rng, base + 5 + static_cast<std::uint64_t>(c), i, {db[c], r.dB_sigma[c]});
    }
    r.B0 = Vector3(b0, r.B0.frame());
    r.dB = Vector3(db, r.dB.frame());
  }
  try {
    out.coupling = extract_couplings(f0, f1, fr, nuc.tau);
  } catch (const DomainError&) {
    return out;
  }
  try {
    const AzimuthFit fit =
        mc.full_refit ? fit_azimuth(recs, out.coupling, fo) : refine_azimuth(recs, out.coupling, seeds, fo);
    const SphericalPosition p = invert_dipole(out.coupling.a_par.value, out.coupling.a_perp.value, fit.a_iso, fo.constants);
    out.point = {fit.phi, fit.a_iso, p.r, p.theta};
    out.ok = std::isfinite(p.r) && std::isfinite(fit.phi);
  } catch (const DomainError&) {
  } catch (const ConvergenceError&) {
  }
  return out;
}

// Interval around the point estimate, widened to include it.
Interval make_interval(std::vector<double> values, double level, double centre, double point) {
  std::sort(values.begin(), values.end());
  const double a = 0.5 * (1.0 - level);
  Interval iv{level, centre + quantile_sorted(values, a), centre + quantile_sorted(values, 1.0 - a)};
  iv.low = std::min(iv.low, point);
  iv.high = std::max(iv.high, point);
  return iv;
}

double marginal_mode(const std::vector<EstimatePoint>& scatter, Parameter p) {
  const std::size_t bins = std::clamp<std::size_t>(static_cast<std::size_t>(std::sqrt(scatter.size())), 2, 200);
  const Histogram h = histogram(scatter, p, bins, p == Parameter::Phi);
  const auto it = std::max_element(h.counts.begin(), h.counts.end());
  const auto k = static_cast<std::size_t>(it - h.counts.begin());
  const double v = 0.5 * (h.edges[k] + h.edges[k + 1]);
  return p == Parameter::Phi ? wrap_two_pi(v) : v;
}

}  // namespace

EstimateResult propagate(const NucleusData& nucleus, const FitOptions& fit_options, const McConfig& mc) {
  mc.validate();
  FitOptions fo = fit_options;
  if (nucleus.fix_a_iso && !fo.fix_a_iso) fo.fix_a_iso = nucleus.fix_a_iso;

  EstimateResult res;
  res.coupling = extract_couplings(nucleus.f0.value, nucleus.f_m1.value, nucleus.fR.value, nucleus.tau);
  res.fit = fit_azimuth(nucleus.records, res.coupling, fo);
  const LocatedNucleus loc = assemble_position(res.coupling, res.fit, 0.0, fo.constants);
  res.point = {res.fit.phi, res.fit.a_iso, loc.position.r, loc.position.theta};

  // sample refits start from every minimum inside the degeneracy band
  std::vector<CostMinimum> seeds;
  for (const auto& m : res.fit.minima) {
    for (double phi : res.fit.degenerate_minima) {
      if (m.phi == phi) seeds.push_back(m);
    }
  }

  const CounterNormal rng(mc.seed);
  std::vector<SampleOutcome> samples(mc.n_samples);
  parallel_for(mc.n_samples, mc.parallel_chunks, [&](std::size_t i) {
    samples[i] = run_sample(nucleus, fo, mc, seeds, rng, static_cast<std::uint64_t>(i));
  });

  // merge in sample order
  double sum_par = 0.0, sum_perp = 0.0;
  std::vector<double> pars, perps;
  for (const auto& s : samples) {
    if (!s.ok) {
      ++res.n_failed;
      continue;
    }
    res.scatter.push_back(s.point);
    pars.push_back(s.coupling.a_par.value);
    perps.push_back(s.coupling.a_perp.value);
    sum_par += s.coupling.a_par.value;
    sum_perp += s.coupling.a_perp.value;
  }
  const double failed = static_cast<double>(res.n_failed) / static_cast<double>(mc.n_samples);
  if (failed > mc.max_failed_fraction) {
    throw ConvergenceError("montecarlo: " + std::to_string(res.n_failed) + " of " + std::to_string(mc.n_samples) +
                           " samples failed (inconsistent couplings or inversion outside domain)");
  }
  if (res.scatter.size() < 2) throw ConvergenceError("montecarlo: fewer than two successful samples");

  const double n = static_cast<double>(pars.size());
  auto sd = [n](const std::vector<double>& v, double sum) {
    const double m = sum / n;
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / (n - 1.0));
  };
  res.coupling.a_par.sigma = sd(pars, sum_par);
  res.coupling.a_perp.sigma = sd(perps, sum_perp);

  for (int p = 0; p < 4; ++p) {
    std::vector<double> v;
    v.reserve(res.scatter.size());
    double centre = 0.0;
    double point = res.point[static_cast<std::size_t>(p)];
    if (p == static_cast<int>(Parameter::Phi)) {
      std::vector<double> phis;
      for (const auto& s : res.scatter) phis.push_back(s[0]);
      const double mu = circular_mean(phis);
      // express everything relative to the point so the interval brackets it literally
      const double dp = wrap_pi(point - mu);
      centre = point - dp;
      for (double a : phis) v.push_back(wrap_pi(a - mu));
      point = centre + dp;
    } else {
      for (const auto& s : res.scatter) v.push_back(s[static_cast<std::size_t>(p)]);
    }
    for (double level : mc.confidence_levels) {
      res.ci[static_cast<std::size_t>(p)].push_back(make_interval(v, level, centre, point));
    }
    res.mode[static_cast<std::size_t>(p)] = marginal_mode(res.scatter, static_cast<Parameter>(p));
  }
  return res;
}

Histogram histogram(const std::vector<EstimatePoint>& scatter, Parameter p, std::size_t bins, bool circular) {
  if (scatter.empty()) throw InputError("histogram: empty scatter");
  if (bins < 2) throw InputError("histogram: need at least two bins");
  const auto idx = static_cast<std::size_t>(p);
  Histogram h;
  h.counts.assign(bins, 0);
  double lo = 0.0, hi = 0.0;
  std::vector<double> v;
  v.reserve(scatter.size());
  if (circular) {
    std::vector<double> a;
    for (const auto& s : scatter) a.push_back(s[idx]);
    const double mu = circular_mean(a);
    lo = mu - pi;
    hi = mu + pi;
    for (double x : a) v.push_back(mu + wrap_pi(x - mu));
  } else {
    for (const auto& s : scatter) v.push_back(s[idx]);
    lo = *std::min_element(v.begin(), v.end());
    hi = *std::max_element(v.begin(), v.end());
    if (hi == lo) {
      const double w = std::max(std::abs(lo) * 1e-9, 1e-300);
      lo -= w;
      hi += w;
    }
  }
  const double width = (hi - lo) / static_cast<double>(bins);
  for (std::size_t k = 0; k <= bins; ++k) h.edges.push_back(lo + width * static_cast<double>(k));
  for (double x : v) {
    auto k = static_cast<long>(std::floor((x - lo) / width));
    k = std::clamp<long>(k, 0, static_cast<long>(bins) - 1);
    ++h.counts[static_cast<std::size_t>(k)];
  }
  return h;
}

namespace {
double file_units(Parameter p, double v) {
  switch (p) {
    case Parameter::Phi:
    case Parameter::Theta: return rad2deg(v);
    case Parameter::AIso: return v / kKiloHertz;
    case Parameter::R: return v / kAngstrom;
  }
  return v;
}
}  // namespace

void write_scatter(std::ostream& out, const std::vector<EstimatePoint>& scatter) {
  out << "phi_deg,a_iso_kHz,r_A,theta_deg\n";
  out.precision(10);
  for (const auto& s : scatter) {
    out << file_units(Parameter::Phi, s[0]) << ',' << file_units(Parameter::AIso, s[1]) << ','
        << file_units(Parameter::R, s[2]) << ',' << file_units(Parameter::Theta, s[3]) << '\n';
  }
}

void write_histogram(std::ostream& out, const Histogram& h, Parameter p) {
  out << "edge_low,edge_high,count\n";
  out.precision(10);
  for (std::size_t k = 0; k < h.counts.size(); ++k) {
    out << file_units(p, h.edges[k]) << ',' << file_units(p, h.edges[k + 1]) << ',' << h.counts[k] << '\n';
  }
}

}  // namespace nvloc
