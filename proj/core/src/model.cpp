#include "adtp/model.hpp"

#include "adtp/errors.hpp"

#include <cmath>
#include <string>

namespace adtp {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

Index idx(std::size_t n) { return static_cast<Index>(n); }

DenseLayer zero_layer(std::size_t out, std::size_t in) {
  return {MatrixXd::Zero(idx(out), idx(in)), VectorXd::Zero(idx(out))};
}

template <class M>
std::span<double> span_of(M& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}

template <class M>
std::span<const double> span_of(const M& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}

MatrixXd relu(const MatrixXd& m) { return m.cwiseMax(0.0); }

MatrixXd apply_layer(const DenseLayer& l, const MatrixXd& x) {
  return (l.weight * x).colwise() + l.bias;
}

void require_finite(const MatrixXd& m, const char* what) {
  if (!m.allFinite()) throw NumericError(std::string("numeric overflow in ") + what);
}

MatrixXd decode_batch(const VaeParams& p, const MatrixXd& z) {
  MatrixXd g = relu(apply_layer(p.dec1, z));
  g = relu(apply_layer(p.dec2, g));
  MatrixXd o = apply_layer(p.out, g);
  if (p.output == OutputActivation::relu) o = relu(o);
  require_finite(o, "decoder");
  return o;
}

MatrixXd encode_mean_batch(const VaeParams& p, const MatrixXd& x) {
  MatrixXd h = relu(apply_layer(p.enc1, x));
  h = relu(apply_layer(p.enc2, h));
  MatrixXd mu = apply_layer(p.mu_head, h);
  require_finite(mu, "encoder");
  return mu;
}

} // namespace

const char* to_string(OutputActivation a) noexcept {
  return a == OutputActivation::relu ? "relu" : "linear";
}

OutputActivation output_activation_from_string(std::string_view s) {
  if (s == "relu") return OutputActivation::relu;
  if (s == "linear") return OutputActivation::linear;
  throw ConfigError("unknown output activation '" + std::string(s) +
                    "' (expected relu|linear)");
}

double logistic(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

ModelShape shape_of(const AdtpParams& p) {
  ModelShape s;
  s.window = static_cast<std::size_t>(p.vae.enc1.weight.cols());
  s.hidden_layer = static_cast<std::size_t>(p.vae.enc1.weight.rows());
  s.latent = static_cast<std::size_t>(p.vae.mu_head.weight.rows());
  s.lstm_hidden = static_cast<std::size_t>(p.lstm.w_c.rows());
  s.output = p.vae.output;
  return s;
}

AdtpParams zero_params(const ModelShape& s) {
  AdtpParams p;
  p.vae.enc1 = zero_layer(s.hidden_layer, s.window);
  p.vae.enc2 = zero_layer(s.hidden_layer, s.hidden_layer);
  p.vae.mu_head = zero_layer(s.latent, s.hidden_layer);
  p.vae.log_sigma_head = zero_layer(s.latent, s.hidden_layer);
  p.vae.dec1 = zero_layer(s.hidden_layer, s.latent);
  p.vae.dec2 = zero_layer(s.hidden_layer, s.hidden_layer);
  p.vae.out = zero_layer(s.window, s.hidden_layer);
  p.vae.output = s.output;
  const Index h = idx(s.lstm_hidden);
  const Index in = idx(s.lstm_hidden + s.window);
  for (MatrixXd* w : {&p.lstm.w_c, &p.lstm.w_u, &p.lstm.w_f, &p.lstm.w_o})
    *w = MatrixXd::Zero(h, in);
  for (VectorXd* b : {&p.lstm.b_c, &p.lstm.b_u, &p.lstm.b_f, &p.lstm.b_o})
    *b = VectorXd::Zero(h);
  p.lstm.w_y = VectorXd::Zero(h);
  p.lstm.b_y = 0.0;
  return p;
}

std::vector<ParamBlock> param_blocks(AdtpParams& p) {
  auto& v = p.vae;
  auto& l = p.lstm;
  return {
      {"vae.enc1.weight", span_of(v.enc1.weight)},
      {"vae.enc1.bias", span_of(v.enc1.bias)},
      {"vae.enc2.weight", span_of(v.enc2.weight)},
      {"vae.enc2.bias", span_of(v.enc2.bias)},
      {"vae.mu.weight", span_of(v.mu_head.weight)},
      {"vae.mu.bias", span_of(v.mu_head.bias)},
      {"vae.log_sigma.weight", span_of(v.log_sigma_head.weight)},
      {"vae.log_sigma.bias", span_of(v.log_sigma_head.bias)},
      {"vae.dec1.weight", span_of(v.dec1.weight)},
      {"vae.dec1.bias", span_of(v.dec1.bias)},
      {"vae.dec2.weight", span_of(v.dec2.weight)},
      {"vae.dec2.bias", span_of(v.dec2.bias)},
      {"vae.out.weight", span_of(v.out.weight)},
      {"vae.out.bias", span_of(v.out.bias)},
      {"lstm.w_c", span_of(l.w_c)},
      {"lstm.b_c", span_of(l.b_c)},
      {"lstm.w_u", span_of(l.w_u)},
      {"lstm.b_u", span_of(l.b_u)},
      {"lstm.w_f", span_of(l.w_f)},
      {"lstm.b_f", span_of(l.b_f)},
      {"lstm.w_o", span_of(l.w_o)},
      {"lstm.b_o", span_of(l.b_o)},
      {"lstm.w_y", span_of(l.w_y)},
      {"lstm.b_y", std::span<double>(&l.b_y, 1)},
  };
}

std::vector<ConstParamBlock> param_blocks(const AdtpParams& p) {
  auto blocks = param_blocks(const_cast<AdtpParams&>(p));
  std::vector<ConstParamBlock> out;
  out.reserve(blocks.size());
  for (const auto& b : blocks) out.push_back({b.name, b.data});
  return out;
}

std::size_t parameter_count(const AdtpParams& p) {
  std::size_t n = 0;
  for (const auto& b : param_blocks(p)) n += b.data.size();
  return n;
}

void check_finite(const AdtpParams& p, std::string_view what) {
  for (const auto& b : param_blocks(p)) {
    for (double v : b.data) {
      if (!std::isfinite(v))
        throw NumericError("numeric overflow: non-finite " + std::string(what) +
                           " in " + std::string(b.name));
    }
  }
}

AdtpParams init_params(const ModelShape& shape, std::mt19937_64& rng,
                       double output_bias) {
  AdtpParams p = zero_params(shape);
  const auto fill = [&](MatrixXd& w) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(w.cols()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Index j = 0; j < w.cols(); ++j)
      for (Index i = 0; i < w.rows(); ++i) w(i, j) = dist(rng);
  };
  auto& v = p.vae;
  for (MatrixXd* w : {&v.enc1.weight, &v.enc2.weight, &v.mu_head.weight,
                      &v.log_sigma_head.weight, &v.dec1.weight, &v.dec2.weight,
                      &v.out.weight, &p.lstm.w_c, &p.lstm.w_u, &p.lstm.w_f,
                      &p.lstm.w_o}) {
    fill(*w);
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(shape.lstm_hidden));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Index i = 0; i < p.lstm.w_y.size(); ++i) p.lstm.w_y(i) = dist(rng);
  v.out.bias.setConstant(output_bias);
  return p;
}

Encoding encode(const VaeParams& p, std::span<const double> segment) {
  if (static_cast<Index>(segment.size()) != p.enc1.weight.cols())
    throw ConfigError("encode: segment length does not match the model window");
  const Eigen::Map<const VectorXd> x(segment.data(), idx(segment.size()));
  VectorXd h = (p.enc1.weight * x + p.enc1.bias).cwiseMax(0.0);
  h = (p.enc2.weight * h + p.enc2.bias).cwiseMax(0.0);
  Encoding e{p.mu_head.weight * h + p.mu_head.bias,
             p.log_sigma_head.weight * h + p.log_sigma_head.bias};
  if (!e.mu.allFinite() || !e.log_sigma.allFinite())
    throw NumericError("numeric overflow in encoder");
  return e;
}

VectorXd reparameterize(const VectorXd& mu, const VectorXd& log_sigma,
                        const VectorXd& noise) {
  return mu + (log_sigma.array().exp() * noise.array()).matrix();
}

VectorXd decode(const VaeParams& p, const VectorXd& z) {
  VectorXd g = (p.dec1.weight * z + p.dec1.bias).cwiseMax(0.0);
  g = (p.dec2.weight * g + p.dec2.bias).cwiseMax(0.0);
  VectorXd o = p.out.weight * g + p.out.bias;
  if (p.output == OutputActivation::relu) o = o.cwiseMax(0.0);
  if (!o.allFinite()) throw NumericError("numeric overflow in decoder");
  return o;
}

VectorXd reconstruct(const VaeParams& p, std::span<const double> segment,
                     ReconstructMode mode, double offset, std::mt19937_64* rng) {
  const Encoding e = encode(p, segment);
  VectorXd out;
  if (mode.kind == ReconstructMode::Kind::mean) {
    out = decode(p, e.mu);
  } else {
    if (rng == nullptr || mode.samples == 0)
      throw ConfigError("sampled reconstruction needs an RNG and samples >= 1");
    std::normal_distribution<double> normal;
    out = VectorXd::Zero(idx(segment.size()));
    VectorXd noise(e.mu.size());
    for (std::size_t s = 0; s < mode.samples; ++s) {
      for (Index k = 0; k < noise.size(); ++k) noise(k) = normal(*rng);
      out += decode(p, reparameterize(e.mu, e.log_sigma, noise));
    }
    out /= static_cast<double>(mode.samples);
  }
  out.array() -= offset;
  return out;
}

MatrixXd reconstruct_batch(const VaeParams& p, const MatrixXd& segments,
                           double offset) {
  MatrixXd out = decode_batch(p, encode_mean_batch(p, segments));
  out.array() -= offset;
  return out;
}

std::pair<LstmState, double> lstm_step(const LstmParams& p,
                                       const LstmState& state,
                                       std::span<const double> x_prime) {
  const Index h = p.w_c.rows();
  if (static_cast<Index>(x_prime.size()) + h != p.w_c.cols())
    throw ConfigError("lstm_step: input length does not match the model window");
  VectorXd in(p.w_c.cols());
  in.head(h) = state.h;
  in.tail(idx(x_prime.size())) =
      Eigen::Map<const VectorXd>(x_prime.data(), idx(x_prime.size()));

  const auto sig = [](double v) { return logistic(v); };
  const VectorXd cand = (p.w_c * in + p.b_c).array().tanh();
  const VectorXd upd = (p.w_u * in + p.b_u).unaryExpr(sig);
  const VectorXd fgt = (p.w_f * in + p.b_f).unaryExpr(sig);
  const VectorXd outg = (p.w_o * in + p.b_o).unaryExpr(sig);

  LstmState next;
  next.c = upd.cwiseProduct(cand) + fgt.cwiseProduct(state.c);
  next.h = outg.cwiseProduct(next.c.array().tanh().matrix());
  const double y = p.w_y.dot(next.h) + p.b_y;
  if (!next.c.allFinite() || !next.h.allFinite() || !std::isfinite(y))
    throw NumericError("numeric overflow in LSTM step");
  return {std::move(next), y};
}

} // namespace adtp
