#pragma once

#include "adtp/series.hpp"

#include <cstdint>
#include <string>

namespace adtp {

/// Labeled synthetic KPI: amplitude * sin(2 pi t / period) plus Gaussian
/// noise, with spikes of `anomaly_magnitude` noise standard deviations at
/// Bernoulli(`anomaly_rate`) positions. Output is minute-level, starting at
/// `start_timestamp`.
struct SyntheticSpec {
  std::size_t length = 20000;
  std::size_t period = 1440;
  double noise_std = 0.05;
  double anomaly_rate = 0.005;
  double anomaly_magnitude = 8.0;
  std::uint64_t seed = 0;
  double amplitude = 1.0;
  std::int64_t start_timestamp = 1500000000;
  std::string id = "synthetic";

  /// Throws ConfigError; the rate must lie in [0, 0.1].
  void validate() const;
};

/// Draw order per point: noise, anomaly coin, then the spike sign when the
/// coin comes up.
TimeSeries generate_synthetic(const SyntheticSpec& spec);

/// Adds spikes to [begin, end): each point independently with
/// probability `rate`, shifted by +-`magnitude` (absolute units). Injected
/// points are labeled anomalous.
TimeSeries inject_spikes(const TimeSeries& series, double rate, double magnitude,
                         std::size_t begin, std::size_t end, std::uint64_t seed);

} // namespace adtp
