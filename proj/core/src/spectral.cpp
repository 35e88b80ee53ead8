#include "adtp/spectral.hpp"

#include "adtp/errors.hpp"
#include "adtp/text.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

namespace adtp {

namespace {

// exp(-2 pi i k / n) with k reduced first, which keeps the angle small.
Complex unit_root(std::size_t k, std::size_t n) {
  const double angle = -2.0 * std::numbers::pi * static_cast<double>(k % n) /
                       static_cast<double>(n);
  return {std::cos(angle), std::sin(angle)};
}

void bit_reverse(std::span<Complex> data) {
  const std::size_t n = data.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i], data[j]);
  }
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

} // namespace

std::vector<Complex> dft_naive(std::span<const Complex> signal) {
  const std::size_t n = signal.size();
  std::vector<Complex> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    Complex acc{};
    for (std::size_t j = 0; j < n; ++j) acc += signal[j] * unit_root(j * k, n);
    out[k] = acc;
  }
  return out;
}

FftPlan::FftPlan(std::size_t n) : n_(n) {
  if (n == 0) throw ConfigError("FFT length must be positive");
  const bool pow2 = std::has_single_bit(n);
  m_ = pow2 ? n : std::bit_ceil(2 * n - 1);
  twiddles_.resize(m_ / 2);
  for (std::size_t k = 0; k < m_ / 2; ++k) twiddles_[k] = unit_root(k, m_);
  if (pow2) return;

  // chirp[k] = exp(-i pi k^2 / n); k^2 is reduced mod 2n before scaling.
  chirp_.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t k2 = (k * k) % (2 * n);
    const double angle =
        -std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n);
    chirp_[k] = {std::cos(angle), std::sin(angle)};
  }
  chirp_spectrum_.assign(m_, Complex{});
  chirp_spectrum_[0] = std::conj(chirp_[0]);
  for (std::size_t k = 1; k < n; ++k) {
    chirp_spectrum_[k] = std::conj(chirp_[k]);
    chirp_spectrum_[m_ - k] = std::conj(chirp_[k]);
  }
  radix2(chirp_spectrum_, twiddles_);
}

void FftPlan::radix2(std::span<Complex> data,
                     const std::vector<Complex>& twiddles) const {
  const std::size_t n = data.size();
  bit_reverse(data);
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t stride = n / len;
    for (std::size_t start = 0; start < n; start += len) {
      for (std::size_t k = 0; k < half; ++k) {
        const Complex t = data[start + k + half] * twiddles[k * stride];
        data[start + k + half] = data[start + k] - t;
        data[start + k] += t;
      }
    }
  }
}

void FftPlan::forward(std::span<Complex> data) const {
  if (data.size() != n_) throw ConfigError("FFT plan/data length mismatch");
  if (n_ == m_) {
    radix2(data, twiddles_);
    return;
  }
  std::vector<Complex> work(m_, Complex{});
  for (std::size_t k = 0; k < n_; ++k) work[k] = data[k] * chirp_[k];
  radix2(work, twiddles_);
  for (std::size_t k = 0; k < m_; ++k) work[k] *= chirp_spectrum_[k];
  // Inverse radix-2 via conjugation.
  for (auto& v : work) v = std::conj(v);
  radix2(work, twiddles_);
  const double scale = 1.0 / static_cast<double>(m_);
  for (std::size_t k = 0; k < n_; ++k)
    data[k] = std::conj(work[k]) * scale * chirp_[k];
}

void FftPlan::inverse(std::span<Complex> data) const {
  for (auto& v : data) v = std::conj(v);
  forward(data);
  const double scale = 1.0 / static_cast<double>(n_);
  for (auto& v : data) v = std::conj(v) * scale;
}

std::vector<Complex> fft(std::span<const Complex> signal) {
  std::vector<Complex> out(signal.begin(), signal.end());
  FftPlan(out.size()).forward(out);
  return out;
}

std::vector<Complex> ifft(std::span<const Complex> spectrum) {
  std::vector<Complex> out(spectrum.begin(), spectrum.end());
  FftPlan(out.size()).inverse(out);
  return out;
}

SaliencyMap saliency_map(std::span<const double> segment, std::size_t q,
                         double eps) {
  return saliency_map(FftPlan(segment.size()), segment, q, eps);
}

SaliencyMap saliency_map(const FftPlan& plan, std::span<const double> segment,
                         std::size_t q, double eps) {
  const std::size_t n = segment.size();
  if (q == 0 || n < q) throw ConfigError("saliency_map requires 1 <= q <= segment length");
  // Constant segment: DC-only residual, exp(0) spread evenly.
  const auto [lo, hi] = std::minmax_element(segment.begin(), segment.end());
  const double scale = std::max(std::abs(*lo), std::abs(*hi));
  if (*hi - *lo <= 64.0 * std::numeric_limits<double>::epsilon() * scale)
    return SaliencyMap{std::vector<double>(n, 1.0 / static_cast<double>(n))};

  std::vector<Complex> spec(segment.begin(), segment.end());
  plan.forward(spec);

  std::vector<double> log_amp(n), phase(n);
  for (std::size_t k = 0; k < n; ++k) {
    log_amp[k] = std::log(std::abs(spec[k]) + eps);
    phase[k] = std::arg(spec[k]);
  }
  // Trailing moving average; the first q-1 bins average what is available.
  double running = 0.0;
  std::vector<Complex> residual(n);
  for (std::size_t k = 0; k < n; ++k) {
    running += log_amp[k];
    if (k >= q) running -= log_amp[k - q];
    const double avg = running / static_cast<double>(std::min(k + 1, q));
    residual[k] = std::polar(std::exp(log_amp[k] - avg), phase[k]);
  }
  plan.inverse(residual);

  SaliencyMap out;
  out.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.values[i] = std::abs(residual[i]);
  return out;
}

NormalityWeights normality_confidence(const SaliencyMap& saliency, double d0,
                                      std::size_t m, double eps) {
  if (m == 0) throw ConfigError("local-average width m must be >= 1");
  const auto& s = saliency.values;
  const std::size_t n = s.size();
  NormalityWeights out;
  out.weights.resize(n);
  constexpr double lo = std::numeric_limits<double>::min();
  const double hi = std::nextafter(1.0, 0.0);

  double running = 0.0;  // sum of s[i-m .. i-1]
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double local;
    if (i == 0) {
      const std::size_t cnt = std::min(m, n - 1);
      double sum = 0.0;
      for (std::size_t j = 1; j <= cnt; ++j) sum += s[j];
      local = cnt ? sum / static_cast<double>(cnt) : s[0];
    } else {
      running += s[i - 1];
      if (i > m) running -= s[i - 1 - m];
      local = running / static_cast<double>(std::min(i, m));
    }
    local = std::max(local, eps);
    const double d = (s[i] - local) / local;
    const double w = std::clamp(sigmoid(d0 - d), lo, hi);
    out.weights[i] = w;
    total += w;
  }
  out.mean_weight = n ? total / static_cast<double>(n) : 0.0;
  return out;
}

std::vector<NormalityWeights> segment_weights(std::span<const Segment> segments,
                                              const SpectralConfig& config) {
  std::vector<NormalityWeights> out;
  out.reserve(segments.size());
  if (segments.empty()) return out;
  const FftPlan plan(segments.front().points.size());
  for (const auto& seg : segments) {
    out.push_back(normality_confidence(
        saliency_map(plan, seg.points, config.q, config.eps), config.d0,
        config.m, config.eps));
  }
  return out;
}

void write_weights_csv(std::ostream& out, std::span<const Segment> segments,
                       const SpectralConfig& config) {
  out << "end_index,offset,saliency,weight\n";
  if (segments.empty()) return;
  const FftPlan plan(segments.front().points.size());
  for (const auto& seg : segments) {
    const auto sal = saliency_map(plan, seg.points, config.q, config.eps);
    const auto w = normality_confidence(sal, config.d0, config.m, config.eps);
    for (std::size_t i = 0; i < sal.values.size(); ++i) {
      out << seg.end_index << ',' << i << ',' << format_double(sal.values[i])
          << ',' << format_double(w.weights[i]) << '\n';
    }
  }
}

} // namespace adtp
