#include "adtp/config.hpp"

#include "adtp/errors.hpp"
#include "adtp/text.hpp"

#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <sstream>

namespace adtp {

namespace {

std::size_t to_size(const std::string& key, const std::string& v) {
  std::int64_t x = 0;
  if (!parse_int(v, x) || x < 0)
    throw ConfigError("'" + key + "' expects a non-negative integer, got '" + v + "'");
  return static_cast<std::size_t>(x);
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t x = 0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, x);
  if (ec != std::errc{} || ptr != end || v.empty())
    throw ConfigError("'" + key + "' expects an unsigned integer, got '" + v + "'");
  return x;
}

std::int64_t to_i64(const std::string& key, const std::string& v) {
  std::int64_t x = 0;
  if (!parse_int(v, x)) throw ConfigError("'" + key + "' expects an integer, got '" + v + "'");
  return x;
}

double to_real(const std::string& key, const std::string& v) {
  double x = 0.0;
  if (!parse_double(v, x)) throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
  return x;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("'" + key + "' expects a boolean, got '" + v + "'");
}

TrainingMode training_mode_from_string(const std::string& v) {
  if (v == "joint") return TrainingMode::joint;
  if (v == "two_step") return TrainingMode::two_step;
  throw ConfigError("unknown training_mode '" + v + "' (expected joint|two_step)");
}

using Setter = std::function<void(PipelineConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    t["regime"] = [](auto& c, auto&, auto& v) { c.train.regime = regime_from_string(v); };
    t["seed"] = [](auto& c, auto& k, auto& v) { c.train.seed = to_u64(k, v); };
    t["beta"] = [](auto& c, auto& k, auto& v) { c.train.beta = to_real(k, v); };
    t["lambda"] = [](auto& c, auto& k, auto& v) { c.train.lambda = to_real(k, v); };
    t["d0"] = [](auto& c, auto& k, auto& v) { c.train.d0 = to_real(k, v); };
    t["sequence_length"] = [](auto& c, auto& k, auto& v) { c.train.sequence_length = to_size(k, v); };
    t["window"] = [](auto& c, auto& k, auto& v) { c.train.shape.window = to_size(k, v); };
    t["hidden_layer"] = [](auto& c, auto& k, auto& v) { c.train.shape.hidden_layer = to_size(k, v); };
    t["latent"] = [](auto& c, auto& k, auto& v) { c.train.shape.latent = to_size(k, v); };
    t["lstm_hidden"] = [](auto& c, auto& k, auto& v) { c.train.shape.lstm_hidden = to_size(k, v); };
    t["output_activation"] = [](auto& c, auto&, auto& v) {
      c.train.shape.output = output_activation_from_string(v);
    };
    t["epochs"] = [](auto& c, auto& k, auto& v) { c.train.epochs = to_size(k, v); };
    t["learning_rate"] = [](auto& c, auto& k, auto& v) { c.train.learning_rate = to_real(k, v); };
    t["offset"] = [](auto& c, auto& k, auto& v) { c.train.offset = to_real(k, v); };
    t["sr_q"] = [](auto& c, auto& k, auto& v) { c.train.sr_q = to_size(k, v); };
    t["sr_m"] = [](auto& c, auto& k, auto& v) { c.train.sr_m = to_size(k, v); };
    t["clip_norm"] = [](auto& c, auto& k, auto& v) { c.train.clip_norm = to_real(k, v); };
    t["patience"] = [](auto& c, auto& k, auto& v) { c.train.patience = to_size(k, v); };
    t["plateau_tolerance"] = [](auto& c, auto& k, auto& v) { c.train.plateau_tolerance = to_real(k, v); };
    t["training_mode"] = [](auto& c, auto&, auto& v) { c.train.mode = training_mode_from_string(v); };

    t["data"] = [](auto& c, auto&, auto& v) { c.data = v; };
    t["out_dir"] = [](auto& c, auto&, auto& v) { c.out_dir = v; };
    t["model_dir"] = [](auto& c, auto&, auto& v) { c.model_dir = v; };
    t["granularity"] = [](auto& c, auto&, auto& v) {
      if (v == "auto") c.granularity.reset();
      else c.granularity = granularity_from_string(v);
    };
    t["fill_limit"] = [](auto& c, auto& k, auto& v) { c.fill_limit = to_size(k, v); };
    t["period"] = [](auto& c, auto& k, auto& v) { c.period = to_size(k, v); };
    t["delay"] = [](auto& c, auto& k, auto& v) { c.delay = to_size(k, v); };
    t["k"] = [](auto& c, auto& k, auto& v) {
      if (v == "sweep") c.k.reset();
      else c.k = to_real(k, v);
    };
    t["k_min"] = [](auto& c, auto& k, auto& v) { c.k_min = to_real(k, v); };
    t["k_max"] = [](auto& c, auto& k, auto& v) { c.k_max = to_real(k, v); };
    t["k_step"] = [](auto& c, auto& k, auto& v) { c.k_step = to_real(k, v); };
    t["sigma_population"] = [](auto& c, auto&, auto& v) {
      c.sigma_population = sigma_population_from_string(v);
    };
    t["checkpoint_every"] = [](auto& c, auto& k, auto& v) { c.checkpoint_every = to_size(k, v); };
    t["resume"] = [](auto& c, auto& k, auto& v) { c.resume = to_bool(k, v); };

    t["synth.length"] = [](auto& c, auto& k, auto& v) { c.synth.length = to_size(k, v); };
    t["synth.period"] = [](auto& c, auto& k, auto& v) { c.synth.period = to_size(k, v); };
    t["synth.noise_std"] = [](auto& c, auto& k, auto& v) { c.synth.noise_std = to_real(k, v); };
    t["synth.anomaly_rate"] = [](auto& c, auto& k, auto& v) { c.synth.anomaly_rate = to_real(k, v); };
    t["synth.anomaly_magnitude"] = [](auto& c, auto& k, auto& v) {
      c.synth.anomaly_magnitude = to_real(k, v);
    };
    t["synth.amplitude"] = [](auto& c, auto& k, auto& v) { c.synth.amplitude = to_real(k, v); };
    t["synth.seed"] = [](auto& c, auto& k, auto& v) { c.synth.seed = to_u64(k, v); };
    t["synth.start_timestamp"] = [](auto& c, auto& k, auto& v) {
      c.synth.start_timestamp = to_i64(k, v);
    };
    t["synth.id"] = [](auto& c, auto&, auto& v) { c.synth.id = v; };
    t["synth.output"] = [](auto& c, auto&, auto& v) { c.synth_output = v; };
    return t;
  }();
  return table;
}

void describe_train(std::ostream& os, const TrainConfig& t) {
  os << "regime = " << to_string(t.regime) << '\n'
     << "seed = " << t.seed << '\n'
     << "beta = " << format_double(t.beta) << '\n'
     << "lambda = " << format_double(t.lambda) << '\n'
     << "d0 = " << format_double(t.d0) << '\n'
     << "sequence_length = " << t.sequence_length << '\n'
     << "window = " << t.shape.window << '\n'
     << "hidden_layer = " << t.shape.hidden_layer << '\n'
     << "latent = " << t.shape.latent << '\n'
     << "lstm_hidden = " << t.shape.lstm_hidden << '\n'
     << "output_activation = " << to_string(t.shape.output) << '\n'
     << "epochs = " << t.epochs << '\n'
     << "learning_rate = " << format_double(t.learning_rate) << '\n'
     << "offset = " << format_double(t.offset) << '\n'
     << "sr_q = " << t.sr_q << '\n'
     << "sr_m = " << t.sr_m << '\n'
     << "clip_norm = " << format_double(t.clip_norm) << '\n'
     << "patience = " << t.patience << '\n'
     << "plateau_tolerance = " << format_double(t.plateau_tolerance) << '\n'
     << "training_mode = " << to_string(t.mode) << '\n';
}

} // namespace

void PipelineConfig::validate() const {
  train.validate();
  synth.validate();
  if (k && !(*k >= 0.0)) throw ConfigError("k must be non-negative");
  k_grid(k_min, k_max, k_step);
}

DatasetRegime regime_from_string(const std::string& s) {
  if (s == "kpi") return DatasetRegime::kpi;
  if (s == "yahoo") return DatasetRegime::yahoo;
  throw ConfigError("unknown regime '" + s + "' (expected kpi|yahoo)");
}

PipelineConfig regime_preset(DatasetRegime regime) {
  PipelineConfig c;
  TrainConfig& t = c.train;
  t.regime = regime;
  t.beta = 0.01;
  t.sequence_length = 256;
  if (regime == DatasetRegime::kpi) {
    t.d0 = 4.1;
    t.lambda = 1.0;
    t.shape.window = 120;
    t.shape.hidden_layer = 100;
    t.shape.latent = 3;
    t.shape.lstm_hidden = 100;
  } else {
    t.d0 = 3.1;
    t.lambda = 10.0;
    t.shape.window = 30;
    t.shape.hidden_layer = 24;
    t.shape.latent = 8;
    t.shape.lstm_hidden = 24;
    c.granularity = Granularity::hour;
  }
  return c;
}

ConfigEntries parse_config(std::istream& in, const std::string& source) {
  ConfigEntries out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    const std::string body = trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected key = value");
    std::string key = trim(std::string_view(body).substr(0, eq));
    std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty())
      throw ConfigError(source + ":" + std::to_string(line_no) + ": empty key");
    if (setters().count(key) == 0)
      throw ConfigError(source + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

ConfigEntries read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return parse_config(in, path.string());
}

std::pair<std::string, std::string> parse_override(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override '" + text + "' is not of the form key=value");
  return {trim(std::string_view(text).substr(0, eq)),
          trim(std::string_view(text).substr(eq + 1))};
}

void apply_entry(PipelineConfig& config, const std::string& key, const std::string& value) {
  const auto it = setters().find(key);
  if (it == setters().end()) throw ConfigError("unknown config key '" + key + "'");
  it->second(config, key, value);
}

PipelineConfig resolve_config(const ConfigEntries& file, const ConfigEntries& overrides) {
  DatasetRegime regime = DatasetRegime::kpi;
  for (const auto* entries : {&file, &overrides}) {
    for (const auto& [k, v] : *entries) {
      if (k == "regime") regime = regime_from_string(v);
    }
  }
  PipelineConfig c = regime_preset(regime);
  for (const auto& [k, v] : file) apply_entry(c, k, v);
  for (const auto& [k, v] : overrides) apply_entry(c, k, v);
  c.validate();
  return c;
}

std::string describe(const PipelineConfig& c) {
  std::ostringstream os;
  describe_train(os, c.train);
  os << "data = " << c.data << '\n'
     << "out_dir = " << c.out_dir.string() << '\n'
     << "model_dir = " << c.models().string() << '\n'
     << "granularity = " << (c.granularity ? to_string(*c.granularity) : "auto") << '\n'
     << "fill_limit = " << c.fill_limit << '\n'
     << "period = " << c.period << '\n'
     << "delay = " << c.delay << '\n'
     << "k = " << (c.k ? format_double(*c.k) : std::string("sweep")) << '\n'
     << "k_min = " << format_double(c.k_min) << '\n'
     << "k_max = " << format_double(c.k_max) << '\n'
     << "k_step = " << format_double(c.k_step) << '\n'
     << "sigma_population = " << to_string(c.sigma_population) << '\n'
     << "checkpoint_every = " << c.checkpoint_every << '\n'
     << "resume = " << (c.resume ? "true" : "false") << '\n'
     << "synth.length = " << c.synth.length << '\n'
     << "synth.period = " << c.synth.period << '\n'
     << "synth.noise_std = " << format_double(c.synth.noise_std) << '\n'
     << "synth.anomaly_rate = " << format_double(c.synth.anomaly_rate) << '\n'
     << "synth.anomaly_magnitude = " << format_double(c.synth.anomaly_magnitude) << '\n'
     << "synth.amplitude = " << format_double(c.synth.amplitude) << '\n'
     << "synth.seed = " << c.synth.seed << '\n'
     << "synth.start_timestamp = " << c.synth.start_timestamp << '\n'
     << "synth.id = " << c.synth.id << '\n';
  return os.str();
}

std::string config_hash(const PipelineConfig& config) {
  std::ostringstream os;
  describe_train(os, config.train);
  os << "granularity = " << (config.granularity ? to_string(*config.granularity) : "auto") << '\n'
     << "fill_limit = " << config.fill_limit << '\n'
     << "period = " << config.period << '\n';
  return to_hex(fnv1a(os.str()));
}

} // namespace adtp
