#pragma once

#include "adtp/series.hpp"

#include <complex>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

namespace adtp {

using Complex = std::complex<double>;

/// Textbook O(n^2) transform, X[k] = sum_j x[j] exp(-2 pi i jk / n).
std::vector<Complex> dft_naive(std::span<const Complex> signal);

/// Precomputed transform of a fixed length. Powers of two use an iterative
/// radix-2 kernel; any other length goes through Bluestein's chirp-z
/// convolution, so the result is the exact length-n DFT with no padding
/// visible to the caller. A plan is immutable once built and may be shared
/// across threads.
class FftPlan {
public:
  explicit FftPlan(std::size_t n);

  std::size_t size() const noexcept { return n_; }

  void forward(std::span<Complex> data) const;
  /// Includes the 1/n factor.
  void inverse(std::span<Complex> data) const;

private:
  void radix2(std::span<Complex> data, const std::vector<Complex>& twiddles) const;

  std::size_t n_ = 0;
  std::size_t m_ = 0;  // radix-2 working length (n itself when n is 2^k)
  std::vector<Complex> twiddles_;        // length m/2
  std::vector<Complex> chirp_;           // Bluestein only, length n
  std::vector<Complex> chirp_spectrum_;  // Bluestein only, length m
};

std::vector<Complex> fft(std::span<const Complex> signal);
std::vector<Complex> ifft(std::span<const Complex> spectrum);

struct SaliencyMap {
  std::vector<double> values;
};

struct NormalityWeights {
  std::vector<double> weights;
  double mean_weight = 0.0;
};

struct SpectralConfig {
  std::size_t q = 3;   // log-spectrum moving-average width
  std::size_t m = 21;  // causal local-average width of the saliency map
  double d0 = 4.1;
  double eps = 1e-8;
};

/// Spectral-residual saliency: residual of the log amplitude spectrum
/// against its length-q trailing moving average, sent back to the time
/// domain with the original phase.
SaliencyMap saliency_map(std::span<const double> segment, std::size_t q,
                         double eps = 1e-8);
SaliencyMap saliency_map(const FftPlan& plan, std::span<const double> segment,
                         std::size_t q, double eps = 1e-8);

/// Per-point confidence 1 - sigmoid(D - D0) with
/// D = (S - Sbar) / Sbar and Sbar the mean of up to `m` preceding saliency
/// values (the first point uses the values that follow it).
NormalityWeights normality_confidence(const SaliencyMap& saliency, double d0,
                                      std::size_t m, double eps = 1e-8);

/// Weights of every segment, computed independently.
std::vector<NormalityWeights> segment_weights(std::span<const Segment> segments,
                                              const SpectralConfig& config);

/// Debug dump with columns end_index,offset,saliency,weight.
void write_weights_csv(std::ostream& out, std::span<const Segment> segments,
                       const SpectralConfig& config);

} // namespace adtp
