#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace adtp {

enum class Granularity { minute, hour };

/// Sampling stride in seconds.
std::int64_t stride_seconds(Granularity g) noexcept;
/// One day expressed in points (1440 minutes, 24 hours).
std::size_t default_period(Granularity g) noexcept;
/// Longest gap repaired by plain linear interpolation (7 minutes, 3 hours).
std::size_t default_fill_limit(Granularity g) noexcept;
/// Detection delay used by the delay-adjusted scoring (7 minutes, 3 hours).
std::size_t default_delay(Granularity g) noexcept;

const char* to_string(Granularity g) noexcept;
Granularity granularity_from_string(const std::string& s);

/// A uni-variate operation series sampled on a fixed stride.
///
/// Missing statuses are NaN values; `missing[i] == 1` marks points that were
/// originally absent, both before and after `fill_missing` repairs them.
/// `labels` is empty for unlabeled series. `stride` is the timestamp step;
/// 0 means the natural stride of the granularity (60 s or 3600 s). Index-like
/// timestamps (stride 1) are kept as read.
struct TimeSeries {
  std::string id;
  Granularity granularity = Granularity::minute;
  std::int64_t stride = 0;
  std::vector<std::int64_t> timestamps;
  std::vector<double> values;
  std::vector<std::uint8_t> labels;
  std::vector<std::uint8_t> missing;

  std::size_t size() const noexcept { return values.size(); }
  bool has_labels() const noexcept { return !labels.empty(); }
  bool has_gaps() const noexcept;
  std::int64_t effective_stride() const noexcept {
    return stride > 0 ? stride : stride_seconds(granularity);
  }

  /// Throws DataError when lengths disagree or the stride is not constant.
  void validate() const;
};

struct NormalizationParams {
  double mean = 0.0;
  double std = 1.0;

  double apply(double x) const noexcept { return (x - mean) / std; }
  double invert(double z) const noexcept { return z * std + mean; }
};

/// Length-w0 window ending at `end_index`. The points view aliases the
/// series it was cut from; keep that series alive while the segment is used.
struct Segment {
  std::span<const double> points;
  std::size_t end_index = 0;
};

/// A run of consecutive segments. `next_values[i]` is the status right after
/// `segments[i]`, NaN when the segment ends at the last point of the series.
struct SegmentSequence {
  std::vector<Segment> segments;
  std::vector<double> next_values;

  std::size_t size() const noexcept { return segments.size(); }
};

/// Repairs missing statuses. Gaps of at most `max_linear_gap` points with a
/// present value on both sides are linearly interpolated; longer gaps (and
/// gaps touching either end of the series) are filled slot by slot from the
/// same time-of-day slot of the nearest present periods, searching up to
/// seven periods on each side.
TimeSeries fill_missing(const TimeSeries& series, std::size_t max_linear_gap,
                        std::size_t period);

/// Population mean/std of `values`. Throws DataError("constant series").
NormalizationParams fit_normalization(std::span<const double> values);

/// Z-scores the whole series using statistics of its first `train_length`
/// points.
std::pair<TimeSeries, NormalizationParams> zscore(const TimeSeries& series,
                                                  std::size_t train_length);
/// Same as above with the whole series as the training portion.
std::pair<TimeSeries, NormalizationParams> zscore(const TimeSeries& series);

std::vector<double> inverse_zscore(std::span<const double> values,
                                   const NormalizationParams& params);

/// Sliding windows with step 1: n - w0 + 1 segments ending at w0-1 .. n-1.
std::vector<Segment> segment_series(std::span<const double> values,
                                    std::size_t w0);

/// Groups segments into non-overlapping runs of `length`; a trailing run
/// shorter than `length` is kept.
std::vector<SegmentSequence> make_sequences(std::span<const Segment> segments,
                                            std::size_t length,
                                            std::span<const double> values);

/// First index of the evaluation half.
inline std::size_t train_split(std::size_t n) noexcept { return n / 2; }

} // namespace adtp
