#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "nvloc/localize.hpp"

namespace nvloc {

struct McConfig {
  std::size_t n_samples = 40000;
  std::uint64_t seed = 1;
  std::vector<double> confidence_levels{0.6827, 0.95};
  std::size_t parallel_chunks = 1;
  bool full_refit = false;  // rerun the grid scan per sample instead of refining the point minima
  double max_failed_fraction = 0.05;

  /// Throws InputError for n_samples < 100 or levels outside (0, 1).
  void validate() const;
};

enum class Parameter { Phi = 0, AIso = 1, R = 2, Theta = 3 };
std::string to_string(Parameter p);

/// (phi rad, a_iso Hz, r m, theta rad)
using EstimatePoint = std::array<double, 4>;

struct Interval {
  double level = 0.0;
  double low = 0.0;
  double high = 0.0;
};

struct EstimateResult {
  EstimatePoint point{};  // fit on unperturbed inputs
  EstimatePoint mode{};   // peak of each marginal histogram
  CouplingEstimate coupling;  // central values with Monte Carlo sigmas
  AzimuthFit fit;
  /// ci[p] holds one interval per level. For phi the interval is expressed around the
  /// point estimate, so low may be negative or high may exceed 2 pi near the seam.
  std::array<std::vector<Interval>, 4> ci;
  std::vector<EstimatePoint> scatter;
  std::size_t n_failed = 0;
};

/// Normal resampling of every frequency of the nucleus (f0, f_m1, fR and each record's
/// fp0, fp_m1) and all six field components per record; each draw goes through
/// extract, azimuth fit and dipole inversion. Deterministic for a given seed whatever
/// parallel_chunks is. Throws ConvergenceError when more than max_failed_fraction of
/// the samples fail.
EstimateResult propagate(const NucleusData& nucleus, const FitOptions& fit_options, const McConfig& mc);

struct Histogram {
  std::vector<double> edges;  // bins + 1
  std::vector<std::size_t> counts;
};

/// Equal-width histogram of one parameter. With `circular` the range is the 2 pi window
/// centred on the circular mean, so a mode at the 0/2 pi seam stays contiguous.
Histogram histogram(const std::vector<EstimatePoint>& scatter, Parameter p, std::size_t bins, bool circular = false);

/// Circular mean of angles (rad) in [0, 2 pi).
double circular_mean(const std::vector<double>& angles);

/// Type-7 empirical quantile of sorted data.
double quantile_sorted(const std::vector<double>& sorted, double q);

/// phi_deg, a_iso_kHz, r_A, theta_deg
void write_scatter(std::ostream& out, const std::vector<EstimatePoint>& scatter);
/// edge_low, edge_high, count (edges in file units for the parameter)
void write_histogram(std::ostream& out, const Histogram& h, Parameter p);

}  // namespace nvloc
