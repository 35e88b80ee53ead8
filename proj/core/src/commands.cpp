#include "adtp/commands.hpp"

#include "adtp/errors.hpp"
#include "adtp/model_io.hpp"
#include "adtp/pipeline.hpp"
#include "adtp/series_io.hpp"
#include "adtp/synth.hpp"
#include "adtp/text.hpp"

#include <filesystem>
#include <fstream>
#include <mutex>
#include <ostream>

namespace adtp {

namespace fs = std::filesystem;

namespace {

std::vector<TimeSeries> load_input(const PipelineConfig& c) {
  if (c.data.empty()) throw ConfigError("no input data: set 'data'");
  auto series = read_series_csv(fs::path(c.data), c.granularity);
  if (series.empty()) throw DataError(c.data + ": no series found");
  return series;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory " + dir.string() + ": " + ec.message());
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

fs::path series_file(const fs::path& dir, const std::string& id, const char* suffix) {
  return dir / (file_stem(id) + suffix);
}

// Serializes writes to the shared log from worker threads.
class Log {
public:
  explicit Log(std::ostream& out) : out_(out) {}
  void line(const std::string& text) {
    std::lock_guard lock(mu_);
    out_ << text << '\n';
  }

private:
  std::ostream& out_;
  std::mutex mu_;
};

void write_train_log(const fs::path& path, const TrainerState& st) {
  auto out = open_out(path);
  out << "epoch,recon,kl,pred,total\n";
  for (const auto& e : st.history) {
    out << e.epoch << ',' << format_double(e.loss.recon) << ',' << format_double(e.loss.kl)
        << ',' << format_double(e.loss.pred) << ',' << format_double(e.loss.total) << '\n';
  }
}

std::vector<PreparedSeries> prepare_all(const PipelineConfig& c) {
  const auto raw = load_input(c);
  std::vector<PreparedSeries> out(raw.size());
  parallel_for(raw.size(), thread_budget(), [&](std::size_t i) {
    out[i] = prepare_series(raw[i], resolve_settings(raw[i].granularity, c));
  });
  return out;
}

std::vector<SeriesEvaluation> evaluate_all(const PipelineConfig& c,
                                           const std::vector<PreparedSeries>& prepared) {
  std::vector<SeriesEvaluation> out(prepared.size());
  parallel_for(prepared.size(), thread_budget(), [&](std::size_t i) {
    const auto path = series_file(c.models(), prepared[i].repaired.id, ".model");
    if (!fs::exists(path))
      throw DataError("no trained model for series '" + prepared[i].repaired.id + "' at " +
                      path.string());
    const ModelFile model = load_model(path);
    out[i] = evaluate_series(prepared[i], model, c.sigma_population, c.train.sequence_length);
  });
  return out;
}

double choose_k(const PipelineConfig& c, std::span<const SeriesEvaluation> evals) {
  if (c.k) return *c.k;
  std::vector<ScoredSeries> scored;
  for (const auto& e : evals) scored.push_back(e.scored());
  return sweep_k(scored, k_grid(c.k_min, c.k_max, c.k_step)).k;
}

} // namespace

std::string file_stem(const std::string& id) {
  std::string out = id.empty() ? std::string("series") : id;
  for (char& ch : out) {
    const bool ok = (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') ||
                    (ch >= '0' && ch <= '9') || ch == '.' || ch == '_' || ch == '-';
    if (!ok) ch = '_';
  }
  return out;
}

void cmd_preprocess(const PipelineConfig& c, std::ostream& log) {
  const auto prepared = prepare_all(c);
  ensure_dir(c.out_dir);
  for (const auto& p : prepared) {
    const auto& id = p.repaired.id;
    write_series_csv(series_file(c.out_dir, id, ".repaired.csv"), p.repaired, CsvLayout::repaired);
    write_series_csv(series_file(c.out_dir, id, ".normalized.csv"), p.normalized,
                     CsvLayout::repaired);
    std::size_t filled = 0;
    for (auto m : p.repaired.missing) filled += m;
    log << id << ": " << p.repaired.size() << " points, " << filled << " filled, mean "
        << format_double(p.normalization.mean) << ", std " << format_double(p.normalization.std)
        << '\n';
  }
}

void cmd_synth(const PipelineConfig& c, std::ostream& log) {
  const fs::path path = c.synth_output.empty() ? c.out_dir / "synthetic.csv" : c.synth_output;
  if (path.has_parent_path()) ensure_dir(path.parent_path());
  const TimeSeries s = generate_synthetic(c.synth);
  write_series_csv(path, s, CsvLayout::kpi);
  std::size_t anomalies = 0;
  for (auto l : s.labels) anomalies += l;
  log << "wrote " << path.string() << ": " << s.size() << " points, " << anomalies
      << " anomalies\n";
}

void cmd_train(const PipelineConfig& c, std::ostream& log) {
  const std::string text = describe(c);
  const std::string hash = config_hash(c);
  log << "# configuration (hash " << hash << ")\n" << text;
  const auto prepared = prepare_all(c);
  ensure_dir(c.out_dir);
  open_out(c.out_dir / "train_config.txt") << text;

  Log out(log);
  parallel_for(prepared.size(), thread_budget(), [&](std::size_t i) {
    const PreparedSeries& p = prepared[i];
    const auto& id = p.repaired.id;
    const auto ckpt_path = series_file(c.out_dir, id, ".ckpt");

    std::optional<TrainerState> resume;
    if (c.resume && fs::exists(ckpt_path)) {
      ModelFile ck = load_model(ckpt_path);
      if (!ck.trainer) throw DataError(ckpt_path.string() + ": not a training checkpoint");
      if (ck.config_hash != hash)
        out.line(id + ": warning: checkpoint written with config hash " + ck.config_hash);
      resume = std::move(ck.trainer);
      out.line(id + ": resuming after epoch " + std::to_string(resume->epoch));
    }

    const auto save_checkpoint = [&](const TrainerState& st) {
      ModelFile m = make_model_file(p, st.params, c.train, hash);
      m.trainer = st;
      save_model(ckpt_path, m);
    };
    const TrainResult r = train_series(p, c.train, resume ? &*resume : nullptr,
                                       save_checkpoint, c.checkpoint_every);
    save_checkpoint(r.state);
    save_model(series_file(c.out_dir, id, ".model"),
               make_model_file(p, r.params(), c.train, hash));
    write_train_log(series_file(c.out_dir, id, ".train_log.csv"), r.state);

    std::string msg = id + ": " + std::to_string(r.state.epoch) + " epochs";
    if (!r.state.history.empty())
      msg += ", final loss " + format_double(r.state.history.back().loss.total);
    if (r.early_stopped) msg += ", early stop";
    out.line(msg);
    if (r.diverged)
      throw NumericError("series '" + id + "': training diverged after epoch " +
                         std::to_string(r.state.epoch) + "; last good parameters saved");
  });
}

void cmd_detect(const PipelineConfig& c, std::ostream& log) {
  const auto prepared = prepare_all(c);
  const auto evals = evaluate_all(c, prepared);
  ensure_dir(c.out_dir);
  const double k = choose_k(c, evals);
  log << "k = " << format_double(k) << (c.k ? "" : " (swept)") << '\n';
  for (std::size_t i = 0; i < evals.size(); ++i) {
    const auto d = detect(evals[i].scores, k, evals[i].sigma_r);
    auto out = open_out(series_file(c.out_dir, evals[i].id, ".flags.csv"));
    write_flags_csv(out, prepared[i].repaired, d, evals[i].split);
    std::size_t flagged = 0;
    for (std::size_t t = evals[i].split; t < d.flags.size(); ++t) flagged += d.flags[t];
    log << evals[i].id << ": sigma_r " << format_double(d.sigma_r) << ", threshold "
        << format_double(d.threshold) << ", " << flagged << " flagged\n";
  }
}

void cmd_predict(const PipelineConfig& c, std::ostream& log) {
  const auto prepared = prepare_all(c);
  const auto evals = evaluate_all(c, prepared);
  ensure_dir(c.out_dir);
  for (std::size_t i = 0; i < evals.size(); ++i) {
    const auto& e = evals[i];
    const auto& ts = prepared[i].repaired.timestamps;
    auto out = open_out(series_file(c.out_dir, e.id, ".predictions.csv"));
    out << "timestamp,prediction,truth\n";
    for (std::size_t t = e.split; t + 1 < e.truth.size(); ++t) {
      out << ts[t + 1] << ',' << format_double(e.predictions[t]) << ','
          << format_double(e.truth[t + 1]) << '\n';
    }
    const auto m = e.prediction();
    log << e.id << ": mse " << format_double(m.mse) << ", rmse " << format_double(m.rmse)
        << ", mae " << format_double(m.mae) << '\n';
  }
}

void cmd_eval(const PipelineConfig& c, std::ostream& log) {
  const auto prepared = prepare_all(c);
  const auto evals = evaluate_all(c, prepared);
  ensure_dir(c.out_dir);
  const auto grid = k_grid(c.k_min, c.k_max, c.k_step);
  const EvalReport report = build_report(evals, c.k, grid);
  auto out = open_out(c.out_dir / "report.csv");
  write_report_csv(out, report);
  print_report_table(log, report);
}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"preprocess", "synth",   "train",
                                                 "detect",     "predict", "eval"};
  return names;
}

void run_command(const std::string& name, const PipelineConfig& c, std::ostream& log) {
  if (name == "preprocess") return cmd_preprocess(c, log);
  if (name == "synth") return cmd_synth(c, log);
  if (name == "train") return cmd_train(c, log);
  if (name == "detect") return cmd_detect(c, log);
  if (name == "predict") return cmd_predict(c, log);
  if (name == "eval") return cmd_eval(c, log);
  throw ConfigError("unknown command '" + name + "'");
}

} // namespace adtp
