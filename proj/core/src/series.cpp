#include "adtp/series.hpp"

#include "adtp/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace adtp {

namespace {

constexpr std::size_t kMaxPeriodSearch = 7;

bool present(const TimeSeries& s, std::size_t i) {
  return std::isfinite(s.values[i]);
}

// Value at `slot` from the nearest periods before/after that hold a present
// status. Interpolated by period distance when both sides exist.
double cross_period_fill(const TimeSeries& s, std::size_t slot,
                         std::size_t period) {
  const std::size_t n = s.size();
  std::size_t back = 0, fwd = 0;
  double before = 0.0, after = 0.0;
  for (std::size_t k = 1; k <= kMaxPeriodSearch; ++k) {
    if (k * period > slot) break;
    if (present(s, slot - k * period)) {
      back = k;
      before = s.values[slot - k * period];
      break;
    }
  }
  for (std::size_t k = 1; k <= kMaxPeriodSearch; ++k) {
    if (slot + k * period >= n) break;
    if (present(s, slot + k * period)) {
      fwd = k;
      after = s.values[slot + k * period];
      break;
    }
  }
  if (back && fwd) {
    const double frac = static_cast<double>(back) / static_cast<double>(back + fwd);
    return before + (after - before) * frac;
  }
  if (back) return before;
  if (fwd) return after;
  throw DataError("irreparable gap at index " + std::to_string(slot) +
                  " of series '" + s.id + "'");
}

} // namespace

std::int64_t stride_seconds(Granularity g) noexcept {
  return g == Granularity::minute ? 60 : 3600;
}

std::size_t default_period(Granularity g) noexcept {
  return g == Granularity::minute ? 1440 : 24;
}

std::size_t default_fill_limit(Granularity g) noexcept {
  return g == Granularity::minute ? 7 : 3;
}

std::size_t default_delay(Granularity g) noexcept {
  return g == Granularity::minute ? 7 : 3;
}

const char* to_string(Granularity g) noexcept {
  return g == Granularity::minute ? "minute" : "hour";
}

Granularity granularity_from_string(const std::string& s) {
  if (s == "minute") return Granularity::minute;
  if (s == "hour") return Granularity::hour;
  throw ConfigError("unknown granularity '" + s + "' (expected minute|hour)");
}

bool TimeSeries::has_gaps() const noexcept {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) return true;
  }
  return false;
}

void TimeSeries::validate() const {
  const std::size_t n = values.size();
  if (timestamps.size() != n)
    throw DataError("series '" + id + "': timestamps/values length mismatch");
  if (!labels.empty() && labels.size() != n)
    throw DataError("series '" + id + "': labels/values length mismatch");
  if (!missing.empty() && missing.size() != n)
    throw DataError("series '" + id + "': missing-mask/values length mismatch");
  const std::int64_t step = effective_stride();
  for (std::size_t i = 1; i < n; ++i) {
    if (timestamps[i] - timestamps[i - 1] != step)
      throw DataError("series '" + id + "': non-constant stride at index " +
                      std::to_string(i));
  }
}

TimeSeries fill_missing(const TimeSeries& series, std::size_t max_linear_gap,
                        std::size_t period) {
  if (period == 0) throw ConfigError("fill period must be positive");
  if (!series.has_gaps()) return series;
  TimeSeries out = series;
  const std::size_t n = series.size();
  if (out.missing.empty()) out.missing.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(series.values[i])) out.missing[i] = 1;
  }

  std::size_t i = 0;
  while (i < n) {
    if (present(series, i)) {
      ++i;
      continue;
    }
    std::size_t end = i;
    while (end + 1 < n && !present(series, end + 1)) ++end;
    const std::size_t len = end - i + 1;
    const bool bounded = i > 0 && end + 1 < n;
    if (bounded && len <= max_linear_gap) {
      const double left = series.values[i - 1];
      const double right = series.values[end + 1];
      const double span = static_cast<double>(len + 1);
      for (std::size_t j = i; j <= end; ++j) {
        const double frac = static_cast<double>(j - i + 1) / span;
        out.values[j] = left + (right - left) * frac;
      }
    } else {
      for (std::size_t j = i; j <= end; ++j) {
        out.values[j] = cross_period_fill(series, j, period);
      }
    }
    i = end + 1;
  }
  return out;
}

NormalizationParams fit_normalization(std::span<const double> values) {
  if (values.empty()) throw DataError("cannot normalize an empty series");
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / n);
  if (!(sd > 1e-12 * std::max(1.0, std::abs(mean))))
    throw DataError("constant series");
  return {mean, sd};
}

std::pair<TimeSeries, NormalizationParams> zscore(const TimeSeries& series,
                                                  std::size_t train_length) {
  if (series.has_gaps()) throw DataError("zscore requires a gap-free series");
  train_length = std::min(train_length, series.size());
  const auto params =
      fit_normalization(std::span(series.values).first(train_length));
  TimeSeries out = series;
  for (double& v : out.values) v = params.apply(v);
  return {std::move(out), params};
}

std::pair<TimeSeries, NormalizationParams> zscore(const TimeSeries& series) {
  return zscore(series, series.size());
}

std::vector<double> inverse_zscore(std::span<const double> values,
                                   const NormalizationParams& params) {
  std::vector<double> out(values.size());
  std::transform(values.begin(), values.end(), out.begin(),
                 [&](double z) { return params.invert(z); });
  return out;
}

std::vector<Segment> segment_series(std::span<const double> values,
                                    std::size_t w0) {
  if (w0 == 0) throw ConfigError("window size must be positive");
  if (values.size() < w0) throw DataError("series too short");
  std::vector<Segment> out;
  out.reserve(values.size() - w0 + 1);
  for (std::size_t end = w0 - 1; end < values.size(); ++end) {
    out.push_back({values.subspan(end + 1 - w0, w0), end});
  }
  return out;
}

std::vector<SegmentSequence> make_sequences(std::span<const Segment> segments,
                                            std::size_t length,
                                            std::span<const double> values) {
  if (length == 0) throw ConfigError("sequence length must be positive");
  std::vector<SegmentSequence> out;
  for (std::size_t start = 0; start < segments.size(); start += length) {
    const std::size_t stop = std::min(segments.size(), start + length);
    SegmentSequence seq;
    seq.segments.assign(segments.begin() + static_cast<std::ptrdiff_t>(start),
                        segments.begin() + static_cast<std::ptrdiff_t>(stop));
    seq.next_values.reserve(seq.segments.size());
    for (const auto& s : seq.segments) {
      seq.next_values.push_back(s.end_index + 1 < values.size()
                                    ? values[s.end_index + 1]
                                    : std::numeric_limits<double>::quiet_NaN());
    }
    out.push_back(std::move(seq));
  }
  return out;
}

} // namespace adtp
