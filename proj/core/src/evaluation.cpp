#include "adtp/evaluation.hpp"

#include "adtp/errors.hpp"
#include "adtp/text.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

namespace adtp {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::size_t kScoreChunk = 2048;

using Eigen::Index;

Index idx(std::size_t n) { return static_cast<Index>(n); }

// Mean reconstructions of the segments ending at first .. first+count-1.
Eigen::MatrixXd reconstruct_range(const VaeParams& vae,
                                  std::span<const double> values, std::size_t w0,
                                  std::size_t first, std::size_t count,
                                  double offset) {
  Eigen::MatrixXd segs(idx(w0), idx(count));
  for (std::size_t j = 0; j < count; ++j) {
    const std::size_t end = first + j;
    segs.col(idx(j)) =
        Eigen::Map<const Eigen::VectorXd>(values.data() + end + 1 - w0, idx(w0));
  }
  return reconstruct_batch(vae, segs, offset);
}

} // namespace

std::vector<double> anomaly_scores(const VaeParams& vae,
                                   std::span<const double> normalized,
                                   double offset) {
  const auto w0 = static_cast<std::size_t>(vae.enc1.weight.cols());
  const std::size_t n = normalized.size();
  std::vector<double> scores(n, kNaN);
  if (n < w0) return scores;
  for (std::size_t first = w0 - 1; first < n; first += kScoreChunk) {
    const std::size_t count = std::min(kScoreChunk, n - first);
    const auto rec = reconstruct_range(vae, normalized, w0, first, count, offset);
    for (std::size_t j = 0; j < count; ++j)
      scores[first + j] = std::abs(normalized[first + j] - rec(idx(w0 - 1), idx(j)));
  }
  return scores;
}

const char* to_string(SigmaPopulation p) noexcept {
  switch (p) {
    case SigmaPopulation::train: return "train";
    case SigmaPopulation::test: return "test";
    case SigmaPopulation::all: return "all";
  }
  return "train";
}

SigmaPopulation sigma_population_from_string(const std::string& s) {
  if (s == "train") return SigmaPopulation::train;
  if (s == "test") return SigmaPopulation::test;
  if (s == "all") return SigmaPopulation::all;
  throw ConfigError("unknown sigma population '" + s + "' (expected train|test|all)");
}

double score_sigma(std::span<const double> scores, std::size_t begin,
                   std::size_t end) {
  end = std::min(end, scores.size());
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = begin; i < end; ++i) {
    if (std::isfinite(scores[i])) {
      sum += scores[i];
      ++n;
    }
  }
  if (n == 0) throw DataError("empty score population for sigma_r");
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = begin; i < end; ++i) {
    if (std::isfinite(scores[i])) ss += (scores[i] - mean) * (scores[i] - mean);
  }
  return std::sqrt(ss / static_cast<double>(n));
}

double score_sigma(std::span<const double> scores, SigmaPopulation population,
                   std::size_t split) {
  switch (population) {
    case SigmaPopulation::train: return score_sigma(scores, 0, split);
    case SigmaPopulation::test: return score_sigma(scores, split, scores.size());
    case SigmaPopulation::all: break;
  }
  return score_sigma(scores, 0, scores.size());
}

DetectionResult detect(std::span<const double> scores, double k, double sigma_r) {
  if (sigma_r < 0.0 || !std::isfinite(sigma_r))
    throw DataError("sigma_r must be finite and non-negative");
  DetectionResult r;
  r.scores.assign(scores.begin(), scores.end());
  r.k = k;
  r.sigma_r = sigma_r;
  r.threshold = k * sigma_r;
  r.flags.resize(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i)
    r.flags[i] = scores[i] > r.threshold ? 1 : 0;
  return r;
}

ConfusionCounts delay_adjust(std::span<const std::uint8_t> flags,
                             std::span<const std::uint8_t> labels,
                             std::size_t delay) {
  if (flags.size() != labels.size())
    throw DataError("delay_adjust: flags and labels differ in length");
  ConfusionCounts c;
  std::size_t i = 0;
  const std::size_t n = labels.size();
  while (i < n) {
    if (labels[i] == 0) {
      if (flags[i] != 0) ++c.fp;
      else ++c.tn;
      ++i;
      continue;
    }
    std::size_t end = i;
    while (end < n && labels[end] != 0) ++end;
    const std::size_t window = std::min(end, i + delay + 1);
    const bool hit = std::any_of(flags.begin() + static_cast<std::ptrdiff_t>(i),
                                 flags.begin() + static_cast<std::ptrdiff_t>(window),
                                 [](std::uint8_t f) { return f != 0; });
    (hit ? c.tp : c.fn) += end - i;
    i = end;
  }
  return c;
}

Prf prf(std::size_t tp, std::size_t fp, std::size_t fn) noexcept {
  Prf r;
  const auto t = static_cast<double>(tp);
  if (tp + fp > 0) r.precision = t / static_cast<double>(tp + fp);
  if (tp + fn > 0) r.recall = t / static_cast<double>(tp + fn);
  if (r.precision + r.recall > 0.0)
    r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

TimeSeries build_prediction_truth(const TimeSeries& series,
                                  std::size_t max_linear_gap, std::size_t period) {
  if (!series.has_labels()) return series;
  TimeSeries masked = series;
  bool any = false;
  for (std::size_t i = 0; i < masked.size(); ++i) {
    if (masked.labels[i] != 0) {
      masked.values[i] = kNaN;
      any = true;
    }
  }
  if (!any) return series;
  TimeSeries filled = fill_missing(masked, max_linear_gap, period);
  filled.missing = series.missing;
  return filled;
}

PredictionMetrics prediction_metrics(std::span<const double> predictions,
                                     std::span<const double> truth,
                                     std::size_t w0) {
  if (predictions.size() != truth.size())
    throw DataError("prediction_metrics: predictions and truth differ in length");
  const std::size_t n = truth.size();
  if (w0 == 0 || n <= w0) throw DataError("prediction_metrics: empty overlap");
  double se = 0.0;
  double ae = 0.0;
  for (std::size_t t = w0 - 1; t + 1 < n; ++t) {
    const double e = truth[t + 1] - predictions[t];
    if (!std::isfinite(e))
      throw DataError("prediction_metrics: non-finite term at index " + std::to_string(t));
    se += e * e;
    ae += std::abs(e);
  }
  const auto count = static_cast<double>(n - w0);
  PredictionMetrics m;
  m.mse = se / count;
  m.rmse = std::sqrt(m.mse);
  m.mae = ae / count;
  return m;
}

std::vector<double> predict_series(const AdtpParams& params,
                                   std::span<const double> normalized,
                                   double offset, std::size_t sequence_length) {
  const ModelShape shape = shape_of(params);
  const std::size_t w0 = shape.window;
  const std::size_t n = normalized.size();
  std::vector<double> out(n, kNaN);
  if (n < w0) return out;
  if (sequence_length == 0) throw ConfigError("sequence length must be positive");

  LstmState state = LstmState::zeros(shape.lstm_hidden);
  std::size_t step = 0;
  for (std::size_t first = w0 - 1; first < n; first += kScoreChunk) {
    const std::size_t count = std::min(kScoreChunk, n - first);
    const auto rec = reconstruct_range(params.vae, normalized, w0, first, count, offset);
    for (std::size_t j = 0; j < count; ++j, ++step) {
      if (step % sequence_length == 0) state = LstmState::zeros(shape.lstm_hidden);
      auto [next, y] = lstm_step(params.lstm, state,
                                 {rec.col(idx(j)).data(), w0});
      state = std::move(next);
      out[first + j] = y;
    }
  }
  return out;
}

std::vector<double> k_grid(double k_min, double k_max, double k_step) {
  if (!(k_step > 0.0) || k_max < k_min || k_min < 0.0)
    throw ConfigError("invalid k grid");
  std::vector<double> grid;
  const auto steps = static_cast<std::size_t>(std::floor((k_max - k_min) / k_step + 1e-9));
  for (std::size_t i = 0; i <= steps; ++i)
    grid.push_back(k_min + static_cast<double>(i) * k_step);
  return grid;
}

ConfusionCounts score_series(const ScoredSeries& s, double k) {
  const auto d = detect(s.scores, k, s.sigma_r);
  return delay_adjust(d.flags, s.labels, s.delay);
}

KSweepResult sweep_k(std::span<const ScoredSeries> series, std::span<const double> grid) {
  if (grid.empty()) throw ConfigError("empty k grid");
  KSweepResult best;
  bool first = true;
  for (double k : grid) {
    ConfusionCounts pooled;
    for (const auto& s : series) pooled += score_series(s, k);
    const Prf p = prf(pooled);
    if (first || p.f1 > best.prf.f1) {
      best = {k, pooled, p};
      first = false;
    }
  }
  return best;
}

EvalReport summarize(std::vector<SeriesReport> rows, double k) {
  std::sort(rows.begin(), rows.end(),
            [](const SeriesReport& a, const SeriesReport& b) { return a.series_id < b.series_id; });
  EvalReport r;
  r.k = k;
  r.series = std::move(rows);
  for (const auto& s : r.series) {
    r.pooled += s.counts;
    r.mean_prf.precision += s.prf.precision;
    r.mean_prf.recall += s.prf.recall;
    r.mean_prf.f1 += s.prf.f1;
    r.mean_prediction.mse += s.prediction.mse;
    r.mean_prediction.rmse += s.prediction.rmse;
    r.mean_prediction.mae += s.prediction.mae;
  }
  r.pooled_prf = prf(r.pooled);
  if (!r.series.empty()) {
    const auto n = static_cast<double>(r.series.size());
    r.mean_prf.precision /= n;
    r.mean_prf.recall /= n;
    r.mean_prf.f1 /= n;
    r.mean_prediction.mse /= n;
    r.mean_prediction.rmse /= n;
    r.mean_prediction.mae /= n;
  }
  return r;
}

void write_report_csv(std::ostream& out, const EvalReport& report) {
  const auto row = [&](const std::string& id, const ConfusionCounts& c, const Prf& p,
                       const PredictionMetrics& m) {
    out << id << ',' << c.tp << ',' << c.fp << ',' << c.fn << ','
        << format_double(p.precision) << ',' << format_double(p.recall) << ','
        << format_double(p.f1) << ',' << format_double(m.mse) << ','
        << format_double(m.rmse) << ',' << format_double(m.mae) << '\n';
  };
  out << "series_id,tp,fp,fn,precision,recall,f1,mse,rmse,mae\n";
  for (const auto& s : report.series) row(s.series_id, s.counts, s.prf, s.prediction);
  row("__pooled__", report.pooled, report.pooled_prf, report.mean_prediction);
  row("__mean__", report.pooled, report.mean_prf, report.mean_prediction);
}

void print_report_table(std::ostream& out, const EvalReport& report) {
  const auto flags = out.flags();
  out << "k = " << report.k << '\n';
  out << std::left << std::setw(24) << "series" << std::right << std::setw(8) << "tp"
      << std::setw(8) << "fp" << std::setw(8) << "fn" << std::setw(10) << "prec"
      << std::setw(10) << "recall" << std::setw(10) << "f1" << std::setw(10) << "rmse"
      << std::setw(10) << "mae" << '\n';
  const auto row = [&](const std::string& id, const ConfusionCounts& c, const Prf& p,
                       const PredictionMetrics& m) {
    out << std::left << std::setw(24) << id << std::right << std::setw(8) << c.tp
        << std::setw(8) << c.fp << std::setw(8) << c.fn << std::fixed
        << std::setprecision(4) << std::setw(10) << p.precision << std::setw(10)
        << p.recall << std::setw(10) << p.f1 << std::setw(10) << m.rmse
        << std::setw(10) << m.mae << '\n';
    out.flags(flags);
  };
  for (const auto& s : report.series) row(s.series_id, s.counts, s.prf, s.prediction);
  row("pooled", report.pooled, report.pooled_prf, report.mean_prediction);
  row("mean", report.pooled, report.mean_prf, report.mean_prediction);
}

void write_flags_csv(std::ostream& out, const TimeSeries& series,
                     const DetectionResult& detection, std::size_t begin) {
  out << "timestamp,score,flag,label\n";
  for (std::size_t i = begin; i < series.size(); ++i) {
    out << series.timestamps[i] << ',' << format_double(detection.scores[i]) << ','
        << int(detection.flags[i]) << ','
        << (series.has_labels() ? int(series.labels[i]) : 0) << '\n';
  }
}

} // namespace adtp
