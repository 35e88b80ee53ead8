#include "adtp/errors.hpp"
#include "adtp/model.hpp"
#include "adtp/model_io.hpp"
#include "toy.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <random>
#include <sstream>

namespace adtp {
namespace {

const ModelShape kSmall{8, 6, 2, 5, OutputActivation::relu};

AdtpParams random_params(const ModelShape& shape, std::uint64_t seed, double spread = 0.3) {
  std::mt19937_64 rng(seed);
  auto p = init_params(shape, rng, 0.2);
  std::normal_distribution<double> normal(0.0, spread);
  for (auto& b : param_blocks(p))
    for (auto& x : b.data) x += normal(rng);
  return p;
}

std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  std::vector<double> v(n);
  for (auto& x : v) x = normal(rng);
  return v;
}

Eigen::Map<const Eigen::VectorXd> as_vector(const std::vector<double>& v) {
  return {v.data(), static_cast<Eigen::Index>(v.size())};
}

Eigen::VectorXd relu(const Eigen::VectorXd& v) { return v.cwiseMax(0.0); }

bool bit_equal(const AdtpParams& a, const AdtpParams& b) {
  const auto x = param_blocks(a);
  const auto y = param_blocks(b);
  if (x.size() != y.size()) return false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i].name != y[i].name || x[i].data.size() != y[i].data.size()) return false;
    if (std::memcmp(x[i].data.data(), y[i].data.data(), x[i].data.size_bytes()) != 0)
      return false;
  }
  return true;
}

TEST(Model, ZeroNetwork) {
  const auto p = zero_params(kSmall);
  const std::vector<double> x{1, -2, 3, 0.5, 0, 7, -1, 2};
  const auto e = encode(p.vae, x);
  EXPECT_TRUE(e.mu.isZero(0.0));
  EXPECT_TRUE(e.log_sigma.isZero(0.0));
  EXPECT_TRUE(decode(p.vae, Eigen::VectorXd::Constant(2, 3.0)).isZero(0.0));
  EXPECT_TRUE(reconstruct(p.vae, x, ReconstructMode::mean()).isZero(0.0));
  std::mt19937_64 rng(1);
  EXPECT_TRUE(reconstruct(p.vae, x, ReconstructMode::sample(16), 0.0, &rng).isZero(0.0));
}

TEST(Model, ForwardMatchesDirectEvaluation) {
  const auto p = random_params(kSmall, 2);
  std::mt19937_64 rng(3);
  const auto x = random_vector(8, rng);
  const auto& v = p.vae;
  const Eigen::VectorXd h1 = relu(v.enc1.weight * as_vector(x) + v.enc1.bias);
  const Eigen::VectorXd h2 = relu(v.enc2.weight * h1 + v.enc2.bias);
  const auto e = encode(v, x);
  EXPECT_LT((e.mu - (v.mu_head.weight * h2 + v.mu_head.bias)).norm(), 1e-14);
  EXPECT_LT((e.log_sigma - (v.log_sigma_head.weight * h2 + v.log_sigma_head.bias)).norm(),
            1e-14);

  const Eigen::VectorXd z = Eigen::VectorXd::Random(2);
  const Eigen::VectorXd d1 = relu(v.dec1.weight * z + v.dec1.bias);
  const Eigen::VectorXd d2 = relu(v.dec2.weight * d1 + v.dec2.bias);
  EXPECT_LT((decode(v, z) - relu(v.out.weight * d2 + v.out.bias)).norm(), 1e-14);

  // Decoder in the shifted space, encoder on the raw segment.
  const double offset = 1.5;
  const Eigen::VectorXd expect =
      relu(v.out.weight *
               relu(v.dec2.weight * relu(v.dec1.weight * e.mu + v.dec1.bias) + v.dec2.bias) +
           v.out.bias)
          .array() -
      offset;
  EXPECT_LT((reconstruct(v, x, ReconstructMode::mean(), offset) - expect).norm(), 1e-14);
}

TEST(Model, EncoderJacobianMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto p = random_params(kSmall, 10 + seed);
    const auto& v = p.vae;
    std::mt19937_64 rng(seed);
    auto x = random_vector(8, rng);
    const Eigen::VectorXd a1 = v.enc1.weight * as_vector(x) + v.enc1.bias;
    const Eigen::VectorXd a2 = v.enc2.weight * relu(a1) + v.enc2.bias;
    const Eigen::VectorXd m1 = (a1.array() > 0.0).cast<double>();
    const Eigen::VectorXd m2 = (a2.array() > 0.0).cast<double>();
    const Eigen::MatrixXd jac =
        v.mu_head.weight * m2.asDiagonal() * v.enc2.weight * m1.asDiagonal() * v.enc1.weight;

    constexpr double h = 1e-6;
    Eigen::MatrixXd fd(2, 8);
    for (std::size_t j = 0; j < 8; ++j) {
      const double orig = x[j];
      x[j] = orig + h;
      const Eigen::VectorXd up = encode(v, x).mu;
      x[j] = orig - h;
      const Eigen::VectorXd down = encode(v, x).mu;
      x[j] = orig;
      fd.col(static_cast<Eigen::Index>(j)) = (up - down) / (2.0 * h);
    }
    EXPECT_LT((fd - jac).norm() / std::max(1e-12, jac.norm()), 1e-4) << seed;
  }
}

TEST(Model, Reparameterize) {
  const Eigen::VectorXd mu = (Eigen::VectorXd(3) << 0.5, -1.0, 2.0).finished();
  const Eigen::VectorXd ls = (Eigen::VectorXd(3) << 0.3, std::log(2.0), -1.0).finished();
  EXPECT_EQ(reparameterize(mu, ls, Eigen::VectorXd::Zero(3)), mu);
  const Eigen::VectorXd e1 = Eigen::VectorXd::Unit(3, 0);
  const auto z = reparameterize(mu, Eigen::VectorXd::Zero(3), e1);
  EXPECT_EQ(z, mu + e1);
  const auto z2 = reparameterize(mu, ls, Eigen::VectorXd::Ones(3));
  EXPECT_NEAR(z2(1), 1.0, 1e-15);
}

TEST(Model, ReparameterizeMonteCarlo) {
  const Eigen::VectorXd mu = (Eigen::VectorXd(2) << 1.5, -3.0).finished();
  const Eigen::VectorXd ls = (Eigen::VectorXd(2) << -0.7, 0.4).finished();
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal;
  constexpr int n = 100000;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(2), sq = Eigen::VectorXd::Zero(2);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd e = (Eigen::VectorXd(2) << normal(rng), normal(rng)).finished();
    const auto z = reparameterize(mu, ls, e);
    sum += z;
    sq += z.cwiseProduct(z);
  }
  for (Eigen::Index k = 0; k < 2; ++k) {
    const double mean = sum(k) / n;
    const double sd = std::sqrt(sq(k) / n - mean * mean);
    EXPECT_NEAR(mean, mu(k), 0.02 * std::abs(mu(k)));
    EXPECT_NEAR(sd, std::exp(ls(k)), 0.02 * std::exp(ls(k)));
  }
}

TEST(Model, ReluOutputIsNonNegative) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> normal(0.0, 3.0);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto p = random_params(kSmall, 100 + seed, 1.0);
    const Eigen::VectorXd z = (Eigen::VectorXd(2) << normal(rng), normal(rng)).finished();
    EXPECT_GE(decode(p.vae, z).minCoeff(), 0.0);
    const auto x = random_vector(8, rng);
    EXPECT_GE(reconstruct(p.vae, x, ReconstructMode::mean(), 5.0).minCoeff(), -5.0);
  }
}

TEST(Model, LinearOutputCanGoNegative) {
  ModelShape shape = kSmall;
  shape.output = OutputActivation::linear;
  auto p = random_params(shape, 7);
  p.vae.out.bias.setConstant(-100.0);
  EXPECT_LT(decode(p.vae, Eigen::VectorXd::Zero(2)).maxCoeff(), 0.0);
}

TEST(Model, MeanModeIsDeterministic) {
  const auto p = random_params(kSmall, 8);
  std::mt19937_64 rng(9);
  const auto x = random_vector(8, rng);
  const auto a = reconstruct(p.vae, x, ReconstructMode::mean(), 5.0);
  const auto b = reconstruct(p.vae, x, ReconstructMode::mean(), 5.0);
  EXPECT_EQ(std::memcmp(a.data(), b.data(), sizeof(double) * 8), 0);

  std::mt19937_64 r1(4), r2(4);
  const auto s1 = reconstruct(p.vae, x, ReconstructMode::sample(8), 5.0, &r1);
  const auto s2 = reconstruct(p.vae, x, ReconstructMode::sample(8), 5.0, &r2);
  EXPECT_EQ(s1, s2);
  EXPECT_THROW(reconstruct(p.vae, x, ReconstructMode::sample(8), 5.0, nullptr), ConfigError);
}

TEST(Model, BatchMatchesSingleReconstruction) {
  const auto p = random_params(kSmall, 11);
  std::mt19937_64 rng(12);
  Eigen::MatrixXd segs(8, 5);
  for (Eigen::Index i = 0; i < segs.size(); ++i) segs(i) = std::normal_distribution<double>()(rng);
  const auto batch = reconstruct_batch(p.vae, segs, 5.0);
  for (Eigen::Index c = 0; c < 5; ++c) {
    const std::vector<double> col(segs.col(c).data(), segs.col(c).data() + 8);
    EXPECT_LT((batch.col(c) - reconstruct(p.vae, col, ReconstructMode::mean(), 5.0)).norm(),
              1e-13);
  }
}

TEST(Model, EncodeRejectsWrongLength) {
  const auto p = zero_params(kSmall);
  const std::vector<double> x(7, 0.0);
  EXPECT_THROW(encode(p.vae, x), ConfigError);
}

TEST(Lstm, ZeroWeightClosedForm) {
  const auto p = zero_params(kSmall);
  LstmState s = LstmState::zeros(5);
  s.c << 1.0, -2.0, 0.5, 4.0, 0.0;
  const std::vector<double> x{1, 2, 3, 4, 5, 6, 7, 8};
  const auto [next, y] = lstm_step(p.lstm, s, x);
  for (Eigen::Index i = 0; i < 5; ++i) {
    EXPECT_DOUBLE_EQ(next.c(i), 0.5 * s.c(i));
    EXPECT_DOUBLE_EQ(next.h(i), 0.5 * std::tanh(0.5 * s.c(i)));
  }
  EXPECT_EQ(y, 0.0);
}

TEST(Lstm, MatchesCellEquations) {
  const auto p = random_params(kSmall, 13);
  std::mt19937_64 rng(14);
  LstmState s{Eigen::VectorXd::Random(5), Eigen::VectorXd::Random(5)};
  const auto x = random_vector(8, rng);
  Eigen::VectorXd in(13);
  in << s.h, as_vector(x);
  const auto sig = [](const Eigen::VectorXd& v) -> Eigen::VectorXd {
    return (1.0 / (1.0 + (-v.array()).exp())).matrix();
  };
  const auto& l = p.lstm;
  const Eigen::VectorXd cand = (l.w_c * in + l.b_c).array().tanh().matrix();
  const Eigen::VectorXd u = sig(l.w_u * in + l.b_u);
  const Eigen::VectorXd f = sig(l.w_f * in + l.b_f);
  const Eigen::VectorXd o = sig(l.w_o * in + l.b_o);
  const Eigen::VectorXd c = u.cwiseProduct(cand) + f.cwiseProduct(s.c);
  const Eigen::VectorXd h = o.cwiseProduct(c.array().tanh().matrix());
  const auto [next, y] = lstm_step(l, s, x);
  EXPECT_LT((next.c - c).norm(), 1e-14);
  EXPECT_LT((next.h - h).norm(), 1e-14);
  EXPECT_NEAR(y, l.w_y.dot(h) + l.b_y, 1e-14);
}

TEST(Lstm, SaturatedGatesKeepTheCell) {
  auto p = random_params(kSmall, 15);
  p.lstm.b_f.setConstant(1000.0);
  p.lstm.b_u.setConstant(-1000.0);
  std::mt19937_64 rng(16);
  LstmState s = LstmState::zeros(5);
  s.c << 0.3, -1.2, 2.0, 0.0, 5.0;
  const Eigen::VectorXd c0 = s.c;
  for (int t = 0; t < 50; ++t) {
    const auto x = random_vector(8, rng);
    s = lstm_step(p.lstm, s, x).first;
  }
  EXPECT_EQ(s.c, c0);
}

TEST(Lstm, StateStaysBounded) {
  const auto p = random_params(kSmall, 17, 1.0);
  std::mt19937_64 rng(18);
  LstmState s = LstmState::zeros(5);
  for (int t = 0; t < 2000; ++t) {
    const auto x = random_vector(8, rng);
    s = lstm_step(p.lstm, s, x).first;
    EXPECT_LE(s.h.cwiseAbs().maxCoeff(), 1.0);
  }
  EXPECT_TRUE(s.c.allFinite());
  EXPECT_LT(s.c.cwiseAbs().maxCoeff(), 1e4);
}

TEST(Params, InitRangesAndCounts) {
  const ModelShape shape;
  std::mt19937_64 rng(19);
  const auto p = init_params(shape, rng, 5.0);
  // enc 120-100-100-(3,3), dec 3-100-100-120, lstm 4 gates of 100 x 220 plus head.
  const std::size_t vae = (120 * 100 + 100) + (100 * 100 + 100) + 2 * (100 * 3 + 3) +
                          (3 * 100 + 100) + (100 * 100 + 100) + (100 * 120 + 120);
  const std::size_t lstm = 4 * (100 * 220 + 100) + 100 + 1;
  EXPECT_EQ(parameter_count(p), vae + lstm);
  EXPECT_EQ(shape_of(p), shape);

  EXPECT_LE(p.vae.enc1.weight.cwiseAbs().maxCoeff(), 1.0 / std::sqrt(120.0));
  EXPECT_LE(p.vae.dec1.weight.cwiseAbs().maxCoeff(), 1.0 / std::sqrt(3.0));
  EXPECT_LE(p.lstm.w_f.cwiseAbs().maxCoeff(), 1.0 / std::sqrt(220.0));
  EXPECT_GT(p.vae.enc1.weight.cwiseAbs().maxCoeff(), 0.9 / std::sqrt(120.0));
  EXPECT_TRUE(p.vae.enc1.bias.isZero(0.0));
  EXPECT_TRUE(p.lstm.b_f.isZero(0.0));
  EXPECT_EQ(p.lstm.b_y, 0.0);
  EXPECT_TRUE((p.vae.out.bias.array() == 5.0).all());

  std::mt19937_64 again(19);
  EXPECT_TRUE(bit_equal(p, init_params(shape, again, 5.0)));
}

TEST(Params, CheckFiniteNamesTheBlock) {
  auto p = random_params(kSmall, 20);
  EXPECT_NO_THROW(check_finite(p, "parameters"));
  p.lstm.w_f(1, 2) = std::numeric_limits<double>::infinity();
  try {
    check_finite(p, "parameters");
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("lstm.w_f"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("numeric overflow"), std::string::npos);
  }
}

TEST(ModelIo, BitExactRoundTrip) {
  ModelFile m;
  m.params = random_params(kSmall, 21);
  m.params.lstm.b_y = 1.0 / 3.0;
  m.normalization = {0.1 + 1e-17, 2.0 / 7.0};
  m.offset = 5.0;
  m.config_hash = "0123456789abcdef";
  TrainerState t;
  t.params = m.params;
  t.adam = AdamState::zeros_like(m.params);
  t.adam.first = random_params(kSmall, 22);
  t.adam.second = random_params(kSmall, 23);
  t.adam.step = 77;
  std::mt19937_64 rng(24);
  rng.discard(1000);
  std::ostringstream rs;
  rs << rng;
  t.rng_state = rs.str();
  t.epoch = 12;
  t.phase = 1;
  t.phase_epoch = 4;
  t.best_total = 0.123456789;
  t.best_epoch = 9;
  t.history = {{1, {1.0 / 3.0, 0.25, std::nextafter(1.0, 2.0), 4.0}}, {2, {1e-300, 0, 3, 5}}};
  m.trainer = t;

  std::stringstream buf;
  save_model(buf, m);
  const auto back = load_model(buf, "mem");
  EXPECT_TRUE(bit_equal(back.params, m.params));
  EXPECT_EQ(shape_of(back.params), kSmall);
  EXPECT_EQ(back.normalization.mean, m.normalization.mean);
  EXPECT_EQ(back.normalization.std, m.normalization.std);
  EXPECT_EQ(back.offset, 5.0);
  EXPECT_EQ(back.config_hash, m.config_hash);
  ASSERT_TRUE(back.trainer.has_value());
  const auto& bt = *back.trainer;
  EXPECT_TRUE(bit_equal(bt.params, t.params));
  EXPECT_TRUE(bit_equal(bt.adam.first, t.adam.first));
  EXPECT_TRUE(bit_equal(bt.adam.second, t.adam.second));
  EXPECT_EQ(bt.adam.step, 77u);
  EXPECT_EQ(bt.rng_state, t.rng_state);
  EXPECT_EQ(bt.epoch, 12u);
  EXPECT_EQ(bt.phase, 1);
  EXPECT_EQ(bt.phase_epoch, 4u);
  EXPECT_EQ(bt.best_total, t.best_total);
  EXPECT_EQ(bt.best_epoch, 9u);
  ASSERT_EQ(bt.history.size(), 2u);
  EXPECT_EQ(bt.history[0].loss.recon, 1.0 / 3.0);
  EXPECT_EQ(bt.history[0].loss.pred, std::nextafter(1.0, 2.0));
  EXPECT_EQ(bt.history[1].loss.recon, 1e-300);

  std::stringstream again;
  save_model(again, back);
  EXPECT_EQ(again.str(), buf.str());
}

TEST(ModelIo, WithoutTrainerAndLinearHead) {
  ModelShape shape = kSmall;
  shape.output = OutputActivation::linear;
  ModelFile m;
  m.params = random_params(shape, 25);
  std::stringstream buf;
  save_model(buf, m);
  const auto back = load_model(buf);
  EXPECT_FALSE(back.trainer.has_value());
  EXPECT_EQ(back.params.vae.output, OutputActivation::linear);
  EXPECT_TRUE(back.config_hash.empty());
  EXPECT_TRUE(bit_equal(back.params, m.params));
}

TEST(ModelIo, RejectsBrokenInput) {
  std::istringstream bad_header("not-a-model 1\n");
  EXPECT_THROW(load_model(bad_header, "x"), DataError);

  ModelFile m;
  m.params = random_params(kSmall, 26);
  std::stringstream buf;
  save_model(buf, m);
  const std::string text = buf.str();
  std::istringstream truncated(text.substr(0, text.size() / 2));
  EXPECT_THROW(load_model(truncated, "x"), DataError);
  try {
    std::istringstream t2(text.substr(0, text.size() / 2));
    load_model(t2, "half.model");
  } catch (const DataError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("half.model", 0), 0u);
  }
}

TEST(TrainedToy, ReconstructsCleanSinusoid) {
  const auto& toy = toy::trained();
  const auto& v = toy.series.normalized.values;
  const std::size_t w0 = toy.model.params.vae.enc1.weight.cols();
  ASSERT_EQ(w0, 30u);
  double se = 0.0, diff = 0.0, norm = 0.0;
  std::size_t n = 0;
  std::mt19937_64 rng(1);
  for (std::size_t t = toy.series.split; t < v.size(); t += 37) {
    const std::span<const double> seg(v.data() + t + 1 - w0, w0);
    const auto rec = reconstruct(toy.model.params.vae, seg, ReconstructMode::mean(),
                                 toy.model.offset);
    for (std::size_t i = 0; i < w0; ++i) {
      se += (rec(static_cast<Eigen::Index>(i)) - seg[i]) * (rec(static_cast<Eigen::Index>(i)) - seg[i]);
      ++n;
    }
    const auto a = reconstruct(toy.model.params.vae, seg, ReconstructMode::sample(64),
                               toy.model.offset, &rng);
    const auto b = reconstruct(toy.model.params.vae, seg, ReconstructMode::sample(4096),
                               toy.model.offset, &rng);
    diff += (a - b).squaredNorm();
    norm += b.squaredNorm();
  }
  EXPECT_LT(std::sqrt(se / static_cast<double>(n)), 0.1);
  EXPECT_LT(std::sqrt(diff / norm), 0.05);
}

} // namespace
} // namespace adtp
