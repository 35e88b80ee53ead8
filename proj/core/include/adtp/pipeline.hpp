#pragma once

#include "adtp/config.hpp"
#include "adtp/evaluation.hpp"
#include "adtp/model_io.hpp"
#include "adtp/series.hpp"
#include "adtp/training.hpp"

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace adtp {

struct SeriesSettings {
  std::size_t fill_limit = 7;
  std::size_t period = 1440;
  std::size_t delay = 7;
};

/// Granularity defaults overridden by any non-zero config value.
SeriesSettings resolve_settings(Granularity granularity, const PipelineConfig& config);

struct PreparedSeries {
  TimeSeries repaired;
  TimeSeries normalized;
  NormalizationParams normalization;
  std::size_t split = 0;
  SeriesSettings settings;
};

/// Repairs gaps, then z-scores with statistics of the first half.
PreparedSeries prepare_series(const TimeSeries& raw, const SeriesSettings& settings);

/// Trains on the normalized first half.
TrainResult train_series(const PreparedSeries& series, const TrainConfig& config,
                         const TrainerState* resume = nullptr,
                         const CheckpointFn& checkpoint = {},
                         std::size_t checkpoint_every = 0);

ModelFile make_model_file(const PreparedSeries& series, const AdtpParams& params,
                          const TrainConfig& config, std::string hash);

/// Full-length per-point outputs of one trained series. Detection and
/// prediction are scored on [split, N).
struct SeriesEvaluation {
  std::string id;
  std::vector<double> scores;
  std::vector<double> predictions;  // y_t forecasts point t+1
  std::vector<double> truth;        // normalized, labeled anomalies refilled
  std::vector<std::uint8_t> labels;
  double sigma_r = 0.0;
  std::size_t split = 0;
  std::size_t window = 0;
  std::size_t delay = 7;

  ScoredSeries scored() const;
  PredictionMetrics prediction() const;
};

SeriesEvaluation evaluate_series(const PreparedSeries& series, const ModelFile& model,
                                 SigmaPopulation population, std::size_t sequence_length);

/// With `k` unset the k grid is swept for the best pooled F1.
EvalReport build_report(std::span<const SeriesEvaluation> series,
                        std::optional<double> k, std::span<const double> grid);

/// Worker count from ADTP_THREADS (unset or 0: hardware concurrency).
std::size_t thread_budget();

/// Runs fn(0..n-1) on up to `threads` workers. When calls throw, the
/// exception of the lowest index is rethrown after all workers finish.
void parallel_for(std::size_t n, std::size_t threads,
                  const std::function<void(std::size_t)>& fn);

} // namespace adtp
