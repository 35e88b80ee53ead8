#include "adtp/pipeline.hpp"

#include "adtp/errors.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <thread>

namespace adtp {

SeriesSettings resolve_settings(Granularity g, const PipelineConfig& c) {
  SeriesSettings s;
  s.fill_limit = c.fill_limit > 0 ? c.fill_limit : default_fill_limit(g);
  s.period = c.period > 0 ? c.period : default_period(g);
  s.delay = c.delay > 0 ? c.delay : default_delay(g);
  return s;
}

PreparedSeries prepare_series(const TimeSeries& raw, const SeriesSettings& settings) {
  PreparedSeries p;
  p.settings = settings;
  p.repaired = fill_missing(raw, settings.fill_limit, settings.period);
  p.split = train_split(p.repaired.size());
  auto [normalized, params] = zscore(p.repaired, p.split);
  p.normalized = std::move(normalized);
  p.normalization = params;
  return p;
}

TrainResult train_series(const PreparedSeries& series, const TrainConfig& config,
                         const TrainerState* resume, const CheckpointFn& checkpoint,
                         std::size_t checkpoint_every) {
  const auto train_part = std::span<const double>(series.normalized.values).first(series.split);
  return train(train_part, config, resume, checkpoint, checkpoint_every);
}

ModelFile make_model_file(const PreparedSeries& series, const AdtpParams& params,
                          const TrainConfig& config, std::string hash) {
  ModelFile m;
  m.params = params;
  m.normalization = series.normalization;
  m.offset = config.offset;
  m.config_hash = std::move(hash);
  return m;
}

ScoredSeries SeriesEvaluation::scored() const {
  ScoredSeries s;
  s.scores.assign(scores.begin() + static_cast<std::ptrdiff_t>(split), scores.end());
  s.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(split), labels.end());
  s.sigma_r = sigma_r;
  s.delay = delay;
  return s;
}

PredictionMetrics SeriesEvaluation::prediction() const {
  if (split + 1 < window) throw DataError("series '" + id + "' too short for prediction scoring");
  const std::size_t from = split + 1 - window;
  return prediction_metrics(std::span(predictions).subspan(from),
                            std::span(truth).subspan(from), window);
}

SeriesEvaluation evaluate_series(const PreparedSeries& series, const ModelFile& model,
                                 SigmaPopulation population, std::size_t sequence_length) {
  SeriesEvaluation e;
  e.id = series.repaired.id;
  e.split = series.split;
  e.window = shape_of(model.params).window;
  e.delay = series.settings.delay;
  const auto& values = series.normalized.values;
  e.scores = anomaly_scores(model.params.vae, values, model.offset);
  e.sigma_r = score_sigma(e.scores, population, e.split);
  e.predictions = predict_series(model.params, values, model.offset, sequence_length);

  const TimeSeries truth = build_prediction_truth(series.repaired, series.settings.fill_limit,
                                                  series.settings.period);
  e.truth.resize(truth.size());
  std::transform(truth.values.begin(), truth.values.end(), e.truth.begin(),
                 [&](double v) { return model.normalization.apply(v); });
  e.labels = series.repaired.has_labels() ? series.repaired.labels
                                          : std::vector<std::uint8_t>(values.size(), 0);
  return e;
}

EvalReport build_report(std::span<const SeriesEvaluation> series,
                        std::optional<double> k, std::span<const double> grid) {
  std::vector<ScoredSeries> scored;
  scored.reserve(series.size());
  for (const auto& s : series) scored.push_back(s.scored());
  const double chosen = k ? *k : sweep_k(scored, grid).k;

  std::vector<SeriesReport> rows;
  for (std::size_t i = 0; i < series.size(); ++i) {
    SeriesReport r;
    r.series_id = series[i].id;
    r.counts = score_series(scored[i], chosen);
    r.prf = prf(r.counts);
    r.prediction = series[i].prediction();
    rows.push_back(std::move(r));
  }
  return summarize(std::move(rows), chosen);
}

std::size_t thread_budget() {
  if (const char* env = std::getenv("ADTP_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, std::size_t threads,
                  const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t count = std::min(std::max<std::size_t>(threads, 1), n);
  if (count <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < count; ++t) pool.emplace_back(worker);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

} // namespace adtp
