#include "adtp/synth.hpp"

#include "adtp/errors.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace adtp {

void SyntheticSpec::validate() const {
  if (length == 0) throw ConfigError("synth.length must be positive");
  if (period == 0) throw ConfigError("synth.period must be positive");
  if (!(noise_std >= 0.0)) throw ConfigError("synth.noise_std must be non-negative");
  if (!(anomaly_rate >= 0.0 && anomaly_rate <= 0.1))
    throw ConfigError("synth.anomaly_rate must lie in [0, 0.1]");
  if (!(anomaly_magnitude >= 0.0))
    throw ConfigError("synth.anomaly_magnitude must be non-negative");
}

TimeSeries generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::bernoulli_distribution coin(spec.anomaly_rate);
  std::bernoulli_distribution sign(0.5);

  TimeSeries s;
  s.id = spec.id;
  s.granularity = Granularity::minute;
  s.timestamps.resize(spec.length);
  s.values.resize(spec.length);
  s.labels.assign(spec.length, 0);
  s.missing.assign(spec.length, 0);
  const double step = 2.0 * std::numbers::pi / static_cast<double>(spec.period);
  for (std::size_t i = 0; i < spec.length; ++i) {
    s.timestamps[i] = spec.start_timestamp + static_cast<std::int64_t>(i) * 60;
    double v = spec.amplitude * std::sin(step * static_cast<double>(i)) +
               spec.noise_std * noise(rng);
    if (coin(rng)) {
      const double spike = spec.anomaly_magnitude * spec.noise_std;
      v += sign(rng) ? spike : -spike;
      s.labels[i] = 1;
    }
    s.values[i] = v;
  }
  return s;
}

TimeSeries inject_spikes(const TimeSeries& series, double rate, double magnitude,
                         std::size_t begin, std::size_t end, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw ConfigError("spike rate must lie in [0, 1]");
  TimeSeries out = series;
  if (out.labels.empty()) out.labels.assign(out.size(), 0);
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(rate);
  std::bernoulli_distribution sign(0.5);
  end = std::min(end, out.size());
  for (std::size_t i = begin; i < end; ++i) {
    if (coin(rng)) {
      out.values[i] += sign(rng) ? magnitude : -magnitude;
      out.labels[i] = 1;
    }
  }
  return out;
}

} // namespace adtp
