#include "adtp/training.hpp"

#include "adtp/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace adtp {

namespace {

using Eigen::ArrayXXd;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd affine(const DenseLayer& l, const MatrixXd& x) {
  return (l.weight * x).colwise() + l.bias;
}

MatrixXd relu_mask(const MatrixXd& pre) {
  return (pre.array() > 0.0).cast<double>().matrix();
}

double sigmoid(double x) { return logistic(x); }

// Cached activations of one sequence.
struct Forward {
  MatrixXd u, a1, h1, a2, h2, mu, log_sigma, sigma, z, d1, g1, d2, g2, o, xr, xp;
  MatrixXd hs, cs;  // h x (T+1); column t holds the state entering step t
  MatrixXd cand, upd, fgt, outg, tanh_c;
  VectorXd y;
  LossBreakdown loss;
};

Forward run_forward(const AdtpParams& p, const SequenceBatch& b,
                    const MatrixXd& noise, const LossTerms& terms) {
  const Index t_steps = b.segments.cols();
  const Index w0 = b.segments.rows();
  const Index hid = p.lstm.w_c.rows();
  if (t_steps == 0) throw DataError("empty training sequence");
  if (noise.cols() != t_steps || noise.rows() != p.vae.mu_head.weight.rows())
    throw ConfigError("noise must be K x T");
  if (p.vae.enc1.weight.cols() != w0)
    throw ConfigError("sequence window does not match the model window");

  Forward f;
  const auto& v = p.vae;
  f.u = b.segments;
  f.a1 = affine(v.enc1, f.u);
  f.h1 = f.a1.cwiseMax(0.0);
  f.a2 = affine(v.enc2, f.h1);
  f.h2 = f.a2.cwiseMax(0.0);
  f.mu = affine(v.mu_head, f.h2);
  f.log_sigma = affine(v.log_sigma_head, f.h2);
  f.sigma = f.log_sigma.array().exp();
  f.z = f.mu + f.sigma.cwiseProduct(noise);
  f.d1 = affine(v.dec1, f.z);
  f.g1 = f.d1.cwiseMax(0.0);
  f.d2 = affine(v.dec2, f.g1);
  f.g2 = f.d2.cwiseMax(0.0);
  f.o = affine(v.out, f.g2);
  f.xr = v.output == OutputActivation::relu ? MatrixXd(f.o.cwiseMax(0.0)) : f.o;
  f.xp = f.xr.array() - terms.offset;

  const auto& l = p.lstm;
  const MatrixXd in_c = (l.w_c.rightCols(w0) * f.xp).colwise() + l.b_c;
  const MatrixXd in_u = (l.w_u.rightCols(w0) * f.xp).colwise() + l.b_u;
  const MatrixXd in_f = (l.w_f.rightCols(w0) * f.xp).colwise() + l.b_f;
  const MatrixXd in_o = (l.w_o.rightCols(w0) * f.xp).colwise() + l.b_o;
  f.hs = MatrixXd::Zero(hid, t_steps + 1);
  f.cs = MatrixXd::Zero(hid, t_steps + 1);
  f.cand.resize(hid, t_steps);
  f.upd.resize(hid, t_steps);
  f.fgt.resize(hid, t_steps);
  f.outg.resize(hid, t_steps);
  f.tanh_c.resize(hid, t_steps);
  f.y.resize(t_steps);
  for (Index t = 0; t < t_steps; ++t) {
    const auto h_prev = f.hs.col(t);
    f.cand.col(t) = (in_c.col(t) + l.w_c.leftCols(hid) * h_prev).array().tanh();
    f.upd.col(t) = (in_u.col(t) + l.w_u.leftCols(hid) * h_prev).unaryExpr(&sigmoid);
    f.fgt.col(t) = (in_f.col(t) + l.w_f.leftCols(hid) * h_prev).unaryExpr(&sigmoid);
    f.outg.col(t) = (in_o.col(t) + l.w_o.leftCols(hid) * h_prev).unaryExpr(&sigmoid);
    f.cs.col(t + 1) = f.upd.col(t).cwiseProduct(f.cand.col(t)) +
                      f.fgt.col(t).cwiseProduct(f.cs.col(t));
    f.tanh_c.col(t) = f.cs.col(t + 1).array().tanh();
    f.hs.col(t + 1) = f.outg.col(t).cwiseProduct(f.tanh_c.col(t));
    f.y(t) = l.w_y.dot(f.hs.col(t + 1)) + l.b_y;
  }

  const double inv_t = 1.0 / static_cast<double>(t_steps);
  const ArrayXXd resid = (b.weights.array() * (b.segments - f.xp).array());
  const VectorXd recon = resid.square().colwise().sum().transpose();
  const VectorXd kl_raw =
      0.5 * (-2.0 * f.log_sigma.array() + f.mu.array().square() +
             f.sigma.array().square() - 1.0)
                .colwise()
                .sum()
                .transpose();
  const VectorXd kl = terms.beta * b.mean_weights.cwiseProduct(kl_raw);
  const VectorXd pred =
      b.mean_weights.array() * (b.next - f.y).array().square();
  f.loss.recon = recon.sum() * inv_t;
  f.loss.kl = kl.sum() * inv_t;
  f.loss.pred = pred.sum() * inv_t;
  f.loss.total = f.loss.recon + f.loss.kl + terms.lambda * f.loss.pred;
  return f;
}

void accumulate_layer(DenseLayer& g, const MatrixXd& delta, const MatrixXd& input) {
  g.weight.noalias() = delta * input.transpose();
  g.bias = delta.rowwise().sum();
}

std::string save_rng(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

} // namespace

const char* to_string(DatasetRegime r) noexcept {
  return r == DatasetRegime::kpi ? "kpi" : "yahoo";
}

const char* to_string(TrainingMode m) noexcept {
  return m == TrainingMode::joint ? "joint" : "two_step";
}

void TrainConfig::validate() const {
  if (!(beta > 0.0)) throw ConfigError("beta must be > 0");
  if (!(lambda > 0.0)) throw ConfigError("lambda must be > 0");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (sequence_length < 1) throw ConfigError("L must be >= 1");
  if (shape.window < 1 || shape.hidden_layer < 1 || shape.latent < 1 ||
      shape.lstm_hidden < 1)
    throw ConfigError("model sizes must be >= 1");
  if (sr_q < 1 || sr_q > shape.window) throw ConfigError("sr_q must be in [1, w0]");
  if (sr_m < 1) throw ConfigError("sr_m must be >= 1");
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be > 0");
}

VaeLoss loss_vae(std::span<const double> x, std::span<const double> x_prime,
                 const VectorXd& mu, const VectorXd& log_sigma,
                 const NormalityWeights& weights, double beta) {
  if (x.size() != x_prime.size() || x.size() != weights.weights.size())
    throw ConfigError("loss_vae: length mismatch");
  VaeLoss out;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = weights.weights[i] * (x[i] - x_prime[i]);
    out.recon += r * r;
  }
  double kl = 0.0;
  for (Index k = 0; k < mu.size(); ++k) {
    const double ls = log_sigma(k);
    kl += -2.0 * ls + mu(k) * mu(k) + std::exp(2.0 * ls) - 1.0;
  }
  out.kl = beta * weights.mean_weight * 0.5 * kl;
  return out;
}

double loss_lstm(double y, double x_next, double mean_weight) {
  const double e = x_next - y;
  return mean_weight * e * e;
}

LossBreakdown loss_adtp(const VaeLoss& vae, double lstm_term, double lambda) {
  return {vae.recon, vae.kl, lstm_term, vae.recon + vae.kl + lambda * lstm_term};
}

SequenceBatch make_batch(const SegmentSequence& seq,
                         std::span<const NormalityWeights> weights) {
  if (weights.size() != seq.size())
    throw ConfigError("make_batch: one weight vector per segment required");
  SequenceBatch b;
  const Index t_steps = static_cast<Index>(seq.size());
  const Index w0 = t_steps ? static_cast<Index>(seq.segments[0].points.size()) : 0;
  b.segments.resize(w0, t_steps);
  b.weights.resize(w0, t_steps);
  b.next.resize(t_steps);
  b.mean_weights.resize(t_steps);
  for (Index t = 0; t < t_steps; ++t) {
    const auto& s = seq.segments[static_cast<std::size_t>(t)];
    const auto& w = weights[static_cast<std::size_t>(t)];
    b.segments.col(t) = Eigen::Map<const VectorXd>(s.points.data(), w0);
    b.weights.col(t) = Eigen::Map<const VectorXd>(w.weights.data(), w0);
    b.next(t) = seq.next_values[static_cast<std::size_t>(t)];
    b.mean_weights(t) = w.mean_weight;
  }
  b.start_index = t_steps ? seq.segments[0].end_index : 0;
  return b;
}

LossBreakdown sequence_loss(const AdtpParams& params, const SequenceBatch& batch,
                            const MatrixXd& noise, const LossTerms& terms) {
  return run_forward(params, batch, noise, terms).loss;
}

BackwardResult backward(const AdtpParams& p, const SequenceBatch& b,
                        const MatrixXd& noise, const LossTerms& terms,
                        GradientFlow flow) {
  const Forward f = run_forward(p, b, noise, terms);
  const Index t_steps = b.segments.cols();
  const Index w0 = b.segments.rows();
  const Index hid = p.lstm.w_c.rows();
  const double inv_t = 1.0 / static_cast<double>(t_steps);

  BackwardResult r;
  r.loss = f.loss;
  r.grad = zero_params(shape_of(p));
  auto& g = r.grad;
  const auto& l = p.lstm;

  // Prediction head and recurrence.
  const VectorXd dy = (-2.0 * terms.lambda * inv_t) *
                      b.mean_weights.cwiseProduct(b.next - f.y);
  g.lstm.w_y = f.hs.rightCols(t_steps) * dy;
  g.lstm.b_y = dy.sum();

  MatrixXd dp_c(hid, t_steps), dp_u(hid, t_steps), dp_f(hid, t_steps),
      dp_o(hid, t_steps);
  VectorXd dh_next = VectorXd::Zero(hid);
  VectorXd dc_next = VectorXd::Zero(hid);
  for (Index t = t_steps - 1; t >= 0; --t) {
    const VectorXd dh = l.w_y * dy(t) + dh_next;
    const auto tc = f.tanh_c.col(t).array();
    const auto og = f.outg.col(t).array();
    const auto ug = f.upd.col(t).array();
    const auto fg = f.fgt.col(t).array();
    const auto cand = f.cand.col(t).array();
    const Eigen::ArrayXd dc = dc_next.array() + dh.array() * og * (1.0 - tc * tc);
    dp_o.col(t) = (dh.array() * tc * og * (1.0 - og)).matrix();
    dp_c.col(t) = (dc * ug * (1.0 - cand * cand)).matrix();
    dp_u.col(t) = (dc * cand * ug * (1.0 - ug)).matrix();
    dp_f.col(t) = (dc * f.cs.col(t).array() * fg * (1.0 - fg)).matrix();
    dc_next = (dc * fg).matrix();
    dh_next = l.w_c.leftCols(hid).transpose() * dp_c.col(t) +
              l.w_u.leftCols(hid).transpose() * dp_u.col(t) +
              l.w_f.leftCols(hid).transpose() * dp_f.col(t) +
              l.w_o.leftCols(hid).transpose() * dp_o.col(t);
  }
  const auto h_prev = f.hs.leftCols(t_steps);
  const auto gate_grads = [&](Eigen::MatrixXd& dw, Eigen::VectorXd& db,
                              const MatrixXd& dp) {
    dw.leftCols(hid).noalias() = dp * h_prev.transpose();
    dw.rightCols(w0).noalias() = dp * f.xp.transpose();
    db = dp.rowwise().sum();
  };
  gate_grads(g.lstm.w_c, g.lstm.b_c, dp_c);
  gate_grads(g.lstm.w_u, g.lstm.b_u, dp_u);
  gate_grads(g.lstm.w_f, g.lstm.b_f, dp_f);
  gate_grads(g.lstm.w_o, g.lstm.b_o, dp_o);

  // Reconstruction term; x' = xr - offset, so d/dxr = d/dx'.
  MatrixXd dxr = (-2.0 * inv_t) *
                 (b.weights.array().square() * (b.segments - f.xp).array()).matrix();
  if (flow == GradientFlow::joint) {
    dxr.noalias() += l.w_c.rightCols(w0).transpose() * dp_c;
    dxr.noalias() += l.w_u.rightCols(w0).transpose() * dp_u;
    dxr.noalias() += l.w_f.rightCols(w0).transpose() * dp_f;
    dxr.noalias() += l.w_o.rightCols(w0).transpose() * dp_o;
  }

  const auto& v = p.vae;
  auto& gv = g.vae;
  MatrixXd d_o = v.output == OutputActivation::relu
                     ? MatrixXd(dxr.cwiseProduct(relu_mask(f.o)))
                     : dxr;
  accumulate_layer(gv.out, d_o, f.g2);
  MatrixXd d_d2 = (v.out.weight.transpose() * d_o).cwiseProduct(relu_mask(f.d2));
  accumulate_layer(gv.dec2, d_d2, f.g1);
  MatrixXd d_d1 = (v.dec2.weight.transpose() * d_d2).cwiseProduct(relu_mask(f.d1));
  accumulate_layer(gv.dec1, d_d1, f.z);
  const MatrixXd dz = v.dec1.weight.transpose() * d_d1;

  // KL: beta * wbar * 1/2 (-2 ls + mu^2 + exp(2 ls) - 1), averaged over T.
  const Eigen::RowVectorXd kl_scale =
      (terms.beta * inv_t) * b.mean_weights.transpose();
  MatrixXd d_mu = dz + (f.mu.array().rowwise() * kl_scale.array()).matrix();
  MatrixXd d_ls =
      (dz.array() * f.sigma.array() * noise.array()).matrix() +
      ((f.sigma.array().square() - 1.0).rowwise() * kl_scale.array()).matrix();
  accumulate_layer(gv.mu_head, d_mu, f.h2);
  accumulate_layer(gv.log_sigma_head, d_ls, f.h2);
  MatrixXd d_a2 = (v.mu_head.weight.transpose() * d_mu +
                   v.log_sigma_head.weight.transpose() * d_ls)
                      .cwiseProduct(relu_mask(f.a2));
  accumulate_layer(gv.enc2, d_a2, f.h1);
  MatrixXd d_a1 = (v.enc2.weight.transpose() * d_a2).cwiseProduct(relu_mask(f.a1));
  accumulate_layer(gv.enc1, d_a1, f.u);

  check_finite(g, "gradient");
  return r;
}

AdamState AdamState::zeros_like(const AdtpParams& params) {
  const auto shape = shape_of(params);
  return {zero_params(shape), zero_params(shape), 0};
}

void optimizer_step(AdtpParams& params, const AdtpParams& grads, AdamState& state,
                    const AdamConfig& c) {
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double corr1 = 1.0 - std::pow(c.beta1, t);
  const double corr2 = 1.0 - std::pow(c.beta2, t);
  auto p = param_blocks(params);
  const auto g = param_blocks(grads);
  auto m = param_blocks(state.first);
  auto v = param_blocks(state.second);
  for (std::size_t b = 0; b < p.size(); ++b) {
    for (std::size_t i = 0; i < p[b].data.size(); ++i) {
      const double gi = g[b].data[i];
      double& mi = m[b].data[i];
      double& vi = v[b].data[i];
      mi = c.beta1 * mi + (1.0 - c.beta1) * gi;
      vi = c.beta2 * vi + (1.0 - c.beta2) * gi * gi;
      const double mhat = mi / corr1;
      const double vhat = vi / corr2;
      p[b].data[i] -= c.learning_rate * mhat / (std::sqrt(vhat) + c.eps);
    }
  }
}

double clip_global_norm(AdtpParams& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& b : param_blocks(std::as_const(grads)))
    for (double x : b.data) sq += x * x;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& b : param_blocks(grads))
      for (double& x : b.data) x *= scale;
  }
  return norm;
}

TrainingSet make_training_set(std::span<const double> values,
                              const TrainConfig& config) {
  TrainingSet set;
  set.values.assign(values.begin(), values.end());
  const std::size_t w0 = config.shape.window;
  if (set.values.size() < w0 + 1)
    throw DataError("training portion shorter than one window plus one step");
  auto segments = segment_series(set.values, w0);
  segments.pop_back();  // its next status is outside the training portion
  const auto weights = segment_weights(segments, config.spectral());
  const auto sequences = make_sequences(segments, config.sequence_length, set.values);
  std::size_t offset = 0;
  for (const auto& seq : sequences) {
    set.batches.push_back(
        make_batch(seq, std::span(weights).subspan(offset, seq.size())));
    offset += seq.size();
  }
  return set;
}

TrainResult train(std::span<const double> values, const TrainConfig& config,
                  const TrainerState* resume, const CheckpointFn& checkpoint,
                  std::size_t checkpoint_every) {
  return train(make_training_set(values, config), config, resume, checkpoint,
               checkpoint_every);
}

TrainResult train(const TrainingSet& data, const TrainConfig& config,
                  const TrainerState* resume, const CheckpointFn& checkpoint,
                  std::size_t checkpoint_every) {
  config.validate();
  if (data.batches.empty()) throw DataError("no training sequences");
  constexpr double inf = std::numeric_limits<double>::infinity();

  std::mt19937_64 rng(config.seed);
  TrainResult result;
  TrainerState& st = result.state;
  if (resume != nullptr) {
    st = *resume;
    std::istringstream is(st.rng_state);
    is >> rng;
    if (!is) throw ConfigError("corrupt generator state in checkpoint");
    if (shape_of(st.params) != config.shape)
      throw ConfigError("checkpoint shape does not match the configuration");
  } else {
    st.params = init_params(config.shape, rng, config.offset);
    st.adam = AdamState::zeros_like(st.params);
    st.best_total = inf;
  }

  const int phases = config.mode == TrainingMode::two_step ? 2 : 1;
  const std::size_t latent = config.shape.latent;
  std::normal_distribution<double> normal;
  std::vector<std::size_t> order(data.batches.size());

  const auto next_phase = [&] {
    ++st.phase;
    st.phase_epoch = 0;
    st.best_total = inf;
    st.best_epoch = 0;
    st.adam = AdamState::zeros_like(st.params);
  };

  const auto phase_done = [&] {
    return st.phase_epoch >= config.epochs ||
           (config.patience > 0 && st.phase_epoch > 0 &&
            st.phase_epoch - st.best_epoch >= config.patience);
  };

  bool done = false;
  while (!done && st.phase < phases) {
    if (phase_done()) {
      if (st.phase + 1 >= phases) break;
      next_phase();
      continue;
    }
    LossTerms terms{config.beta, config.lambda, config.offset};
    GradientFlow flow = GradientFlow::joint;
    bool freeze_vae = false;
    if (config.mode == TrainingMode::two_step) {
      flow = GradientFlow::detached;
      if (st.phase == 0) terms.lambda = 0.0;
      else freeze_vae = true;
    }

    while (true) {
      const AdtpParams last_good = st.params;
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::shuffle(order.begin(), order.end(), rng);
      normal.reset();

      LossBreakdown sum;
      double steps = 0.0;
      bool finite = true;
      for (std::size_t idx : order) {
        const SequenceBatch& batch = data.batches[idx];
        MatrixXd noise(static_cast<Index>(latent), batch.segments.cols());
        for (Index t = 0; t < noise.cols(); ++t)
          for (Index k = 0; k < noise.rows(); ++k) noise(k, t) = normal(rng);
        BackwardResult br;
        try {
          br = backward(st.params, batch, noise, terms, flow);
        } catch (const NumericError&) {
          finite = false;
          break;
        }
        if (freeze_vae) {
          auto blocks = param_blocks(br.grad);
          for (auto& blk : blocks)
            if (blk.name.starts_with("vae.")) std::fill(blk.data.begin(), blk.data.end(), 0.0);
        }
        clip_global_norm(br.grad, config.clip_norm);
        optimizer_step(st.params, br.grad, st.adam, config.adam());
        const double w = static_cast<double>(batch.steps());
        sum.recon += br.loss.recon * w;
        sum.kl += br.loss.kl * w;
        sum.pred += br.loss.pred * w;
        sum.total += br.loss.total * w;
        steps += w;
      }
      LossBreakdown epoch_loss{sum.recon / steps, sum.kl / steps, sum.pred / steps,
                               sum.total / steps};
      if (!finite || !std::isfinite(epoch_loss.total)) {
        st.params = last_good;
        st.rng_state = save_rng(rng);
        result.diverged = true;
        return result;
      }
      ++st.epoch;
      ++st.phase_epoch;
      st.history.push_back({st.epoch, epoch_loss});
      if (epoch_loss.total < st.best_total - config.plateau_tolerance * std::abs(st.best_total) ||
          !std::isfinite(st.best_total)) {
        st.best_total = epoch_loss.total;
        st.best_epoch = st.phase_epoch;
      }
      const bool stop = config.patience > 0 &&
                        st.phase_epoch - st.best_epoch >= config.patience;
      if (stop) result.early_stopped = true;
      // A checkpoint written right after the last epoch of an earlier phase
      // resumes in the next phase; the final phase keeps its counters so a
      // longer run can continue it.
      const bool ended = stop || st.phase_epoch >= config.epochs;
      if (ended) {
        if (st.phase + 1 < phases) next_phase();
        else done = true;
      }
      if (checkpoint && checkpoint_every > 0 && st.epoch % checkpoint_every == 0) {
        st.rng_state = save_rng(rng);
        checkpoint(st);
      }
      if (ended) break;
    }
  }
  st.rng_state = save_rng(rng);
  return result;
}

} // namespace adtp
