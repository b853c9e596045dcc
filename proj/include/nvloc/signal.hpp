#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <vector>

namespace nvloc {

/// Uniformly sampled trace. sigma_y is empty or one value per sample.
struct TimeTrace {
  std::vector<double> t;  // s
  std::vector<double> y;
  std::vector<double> sigma_y;

  [[nodiscard]] std::size_t size() const { return t.size(); }
  [[nodiscard]] double dt() const { return t.size() > 1 ? t[1] - t[0] : 0.0; }
  /// Throws InputError on unequal lengths or spacing off by more than 1e-9 relative.
  void validate() const;
};

struct ToneComponent {
  double f = 0.0;  // Hz
  double amplitude = 1.0;
  double phase = 0.0;  // rad
};

/// y(t_i) = exp(-t_i / decay) sum_k a_k cos(2 pi f_k t_i + phi_k) + noise, t_i = i dt.
/// Noise is drawn from a counter-based generator keyed by (seed, i).
/// Throws DomainError for components at or above Nyquist.
TimeTrace synth_trace(const std::vector<ToneComponent>& components, double duration, double dt, double noise_sigma,
                      std::uint64_t seed, double decay = std::numeric_limits<double>::infinity());

struct FrequencyEstimate {
  double f = 0.0;        // Hz
  double sigma_f = 0.0;  // Hz
  double amplitude = 0.0;
  double phase = 0.0;    // rad
};

struct EstimateOptions {
  int max_iterations = 200;
  std::size_t zero_pad = 8;
  double peak_threshold = 0.05;  // fraction of the largest periodogram peak
};

/// Periodogram peak picking seeds a multi-sinusoid least-squares fit. Results sorted by f.
/// sigma_f comes from the fit covariance, scaled by the residual variance unless the trace
/// carries per-point sigmas. Throws IdentifiabilityError when fewer resolvable peaks than
/// requested are present and ConvergenceError when the fit does not converge.
std::vector<FrequencyEstimate> estimate_frequencies(const TimeTrace& trace, std::size_t n_components,
                                                    const EstimateOptions& opt = {});

/// Power spectrum of the Hann-windowed trace as (f, power) columns.
std::vector<std::pair<double, double>> periodogram(const TimeTrace& trace, std::size_t zero_pad = 8);

/// Columns time_s, signal[, sigma]; comma or whitespace delimited, '#' comments.
TimeTrace read_trace(std::istream& in);
void write_trace(std::ostream& out, const TimeTrace& trace);

}  // namespace nvloc
