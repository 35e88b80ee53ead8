#pragma once

#include "adtp/model.hpp"
#include "adtp/series.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace adtp {

/// Absolute reconstruction error of the last status of every segment, using
/// the mean reconstruction. Points before w0-1 have no segment and get NaN.
std::vector<double> anomaly_scores(const VaeParams& vae,
                                   std::span<const double> normalized,
                                   double offset);

/// Which scores define sigma_r.
enum class SigmaPopulation { train, test, all };

const char* to_string(SigmaPopulation p) noexcept;
SigmaPopulation sigma_population_from_string(const std::string& s);

/// Population std of the finite scores in [begin, end). Throws DataError when
/// the range holds no finite score.
double score_sigma(std::span<const double> scores, std::size_t begin,
                   std::size_t end);

/// sigma_r for a series whose evaluation half starts at `split`.
double score_sigma(std::span<const double> scores, SigmaPopulation population,
                   std::size_t split);

struct DetectionResult {
  std::vector<double> scores;
  std::vector<std::uint8_t> flags;
  double threshold = 0.0;
  double k = 0.0;
  double sigma_r = 0.0;
};

/// flags[t] = scores[t] > k * sigma_r. NaN scores are never flagged.
DetectionResult detect(std::span<const double> scores, double k, double sigma_r);

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;

  ConfusionCounts& operator+=(const ConfusionCounts& o) noexcept {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
};

/// Interval-level scoring. An anomaly interval whose first flag falls at
/// offset <= delay counts entirely as TP, otherwise entirely as FN; flags
/// inside a missed interval are not false positives.
ConfusionCounts delay_adjust(std::span<const std::uint8_t> flags,
                             std::span<const std::uint8_t> labels,
                             std::size_t delay);

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Zero denominators yield 0.
Prf prf(std::size_t tp, std::size_t fp, std::size_t fn) noexcept;
inline Prf prf(const ConfusionCounts& c) noexcept { return prf(c.tp, c.fp, c.fn); }

/// Labeled anomalies become missing and are refilled like preprocessing gaps.
TimeSeries build_prediction_truth(const TimeSeries& series,
                                  std::size_t max_linear_gap, std::size_t period);

struct PredictionMetrics {
  double mse = 0.0;
  double rmse = 0.0;
  double mae = 0.0;
};

/// predictions[t] is the forecast of truth[t+1]. Averages over
/// t = w0-1 .. N-2, i.e. N - w0 terms. Throws DataError on an empty overlap
/// or a non-finite term.
PredictionMetrics prediction_metrics(std::span<const double> predictions,
                                     std::span<const double> truth,
                                     std::size_t w0);

/// One-step forecasts y_t for t >= w0-1 (NaN before). Reconstructions come
/// from the mean encoding; the LSTM state restarts every `sequence_length`
/// segments, as in training.
std::vector<double> predict_series(const AdtpParams& params,
                                   std::span<const double> normalized,
                                   double offset, std::size_t sequence_length);

/// Per-series inputs to threshold selection, restricted to the evaluation
/// range.
struct ScoredSeries {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  double sigma_r = 0.0;
  std::size_t delay = 7;
};

std::vector<double> k_grid(double k_min, double k_max, double k_step);

struct KSweepResult {
  double k = 0.0;
  ConfusionCounts pooled;
  Prf prf;
};

/// Picks the k with the best pooled F1 over all series; ties keep the
/// smallest k.
KSweepResult sweep_k(std::span<const ScoredSeries> series, std::span<const double> grid);

ConfusionCounts score_series(const ScoredSeries& s, double k);

struct SeriesReport {
  std::string series_id;
  ConfusionCounts counts;
  Prf prf;
  PredictionMetrics prediction;
};

struct EvalReport {
  std::vector<SeriesReport> series;  // ordered by series id
  double k = 0.0;
  ConfusionCounts pooled;
  Prf pooled_prf;
  Prf mean_prf;
  PredictionMetrics mean_prediction;
};

/// Sorts rows by id and computes the pooled and averaged summaries.
EvalReport summarize(std::vector<SeriesReport> rows, double k);

/// `series_id,tp,fp,fn,precision,recall,f1,mse,rmse,mae`, one row per
/// series, then `__pooled__` (summed counts) and `__mean__` (per-series
/// averages) rows.
void write_report_csv(std::ostream& out, const EvalReport& report);
void print_report_table(std::ostream& out, const EvalReport& report);

/// `timestamp,score,flag,label` for every point from `begin` on.
void write_flags_csv(std::ostream& out, const TimeSeries& series,
                     const DetectionResult& detection, std::size_t begin);

} // namespace adtp
