#include "adtp/model_io.hpp"

#include "adtp/errors.hpp"

#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace adtp {

namespace {

constexpr const char* kMagic = "adtp-model";
constexpr int kVersion = 1;

std::string hex(double v) {
  std::ostringstream os;
  os << std::hexfloat << v;
  return os.str();
}

class Reader {
public:
  Reader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  std::string word() {
    std::string w;
    if (!(in_ >> w)) fail("unexpected end of file");
    return w;
  }

  void expect(const std::string& key) {
    const auto w = word();
    if (w != key) fail("expected '" + key + "', found '" + w + "'");
  }

  std::size_t count() {
    const auto w = word();
    char* end = nullptr;
    const auto v = std::strtoull(w.c_str(), &end, 10);
    if (end == w.c_str() || *end != '\0') fail("malformed count '" + w + "'");
    return static_cast<std::size_t>(v);
  }

  double real() {
    const auto w = word();
    char* end = nullptr;
    const double v = std::strtod(w.c_str(), &end);
    if (end == w.c_str() || *end != '\0') fail("malformed number '" + w + "'");
    return v;
  }

  std::string rest_of_line() {
    std::string line;
    std::getline(in_ >> std::ws, line);
    return line;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw DataError(source_ + ": " + what);
  }

private:
  std::istream& in_;
  std::string source_;
};

void write_tensors(std::ostream& out, const AdtpParams& params) {
  for (const auto& b : param_blocks(params)) {
    out << "tensor " << b.name << ' ' << b.data.size() << '\n';
    for (std::size_t i = 0; i < b.data.size(); ++i) {
      out << hex(b.data[i]) << ((i % 8 == 7 || i + 1 == b.data.size()) ? '\n' : ' ');
    }
  }
}

void read_tensors(Reader& r, AdtpParams& params) {
  for (auto& b : param_blocks(params)) {
    r.expect("tensor");
    const auto name = r.word();
    if (name != b.name) r.fail("expected tensor " + std::string(b.name) + ", found " + name);
    if (r.count() != b.data.size()) r.fail("size mismatch for tensor " + name);
    for (double& v : b.data) v = r.real();
  }
}

} // namespace

void save_model(std::ostream& out, const ModelFile& m) {
  const ModelShape s = shape_of(m.params);
  out << kMagic << ' ' << kVersion << '\n'
      << "window " << s.window << '\n'
      << "hidden_layer " << s.hidden_layer << '\n'
      << "latent " << s.latent << '\n'
      << "lstm_hidden " << s.lstm_hidden << '\n'
      << "output_activation " << to_string(s.output) << '\n'
      << "offset " << hex(m.offset) << '\n'
      << "norm_mean " << hex(m.normalization.mean) << '\n'
      << "norm_std " << hex(m.normalization.std) << '\n'
      << "config_hash " << (m.config_hash.empty() ? "-" : m.config_hash) << '\n';
  write_tensors(out, m.params);
  if (m.trainer) {
    const TrainerState& t = *m.trainer;
    out << "trainer\n"
        << "epoch " << t.epoch << '\n'
        << "phase " << t.phase << '\n'
        << "phase_epoch " << t.phase_epoch << '\n'
        << "best_total " << hex(t.best_total) << '\n'
        << "best_epoch " << t.best_epoch << '\n'
        << "adam_step " << t.adam.step << '\n'
        << "rng " << t.rng_state << '\n'
        << "adam_first\n";
    write_tensors(out, t.adam.first);
    out << "adam_second\n";
    write_tensors(out, t.adam.second);
    out << "history " << t.history.size() << '\n';
    for (const auto& e : t.history) {
      out << e.epoch << ' ' << hex(e.loss.recon) << ' ' << hex(e.loss.kl) << ' '
          << hex(e.loss.pred) << ' ' << hex(e.loss.total) << '\n';
    }
  }
  out << "end\n";
  if (!out) throw DataError("failed writing model");
}

ModelFile load_model(std::istream& in, const std::string& source) {
  Reader r(in, source);
  r.expect(kMagic);
  if (r.count() != static_cast<std::size_t>(kVersion)) r.fail("unsupported model version");
  ModelShape s;
  r.expect("window");
  s.window = r.count();
  r.expect("hidden_layer");
  s.hidden_layer = r.count();
  r.expect("latent");
  s.latent = r.count();
  r.expect("lstm_hidden");
  s.lstm_hidden = r.count();
  r.expect("output_activation");
  try {
    s.output = output_activation_from_string(r.word());
  } catch (const ConfigError& e) {
    r.fail(e.what());
  }

  ModelFile m;
  r.expect("offset");
  m.offset = r.real();
  r.expect("norm_mean");
  m.normalization.mean = r.real();
  r.expect("norm_std");
  m.normalization.std = r.real();
  r.expect("config_hash");
  m.config_hash = r.word();
  if (m.config_hash == "-") m.config_hash.clear();
  m.params = zero_params(s);
  read_tensors(r, m.params);

  auto next = r.word();
  if (next == "trainer") {
    TrainerState t;
    r.expect("epoch");
    t.epoch = r.count();
    r.expect("phase");
    t.phase = static_cast<int>(r.count());
    r.expect("phase_epoch");
    t.phase_epoch = r.count();
    r.expect("best_total");
    t.best_total = r.real();
    r.expect("best_epoch");
    t.best_epoch = r.count();
    r.expect("adam_step");
    t.adam.step = r.count();
    r.expect("rng");
    t.rng_state = r.rest_of_line();
    r.expect("adam_first");
    t.adam.first = zero_params(s);
    read_tensors(r, t.adam.first);
    r.expect("adam_second");
    t.adam.second = zero_params(s);
    read_tensors(r, t.adam.second);
    r.expect("history");
    const std::size_t n = r.count();
    t.history.resize(n);
    for (auto& e : t.history) {
      e.epoch = r.count();
      e.loss.recon = r.real();
      e.loss.kl = r.real();
      e.loss.pred = r.real();
      e.loss.total = r.real();
    }
    t.params = m.params;
    m.trainer = std::move(t);
    next = r.word();
  }
  if (next != "end") r.fail("expected 'end', found '" + next + "'");
  return m;
}

void save_model(const std::filesystem::path& path, const ModelFile& model) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  save_model(out, model);
}

ModelFile load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return load_model(in, path.string());
}

} // namespace adtp
