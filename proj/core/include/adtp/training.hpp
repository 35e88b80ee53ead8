#pragma once

#include "adtp/model.hpp"
#include "adtp/series.hpp"
#include "adtp/spectral.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace adtp {

enum class DatasetRegime { kpi, yahoo };
enum class TrainingMode { joint, two_step };

const char* to_string(DatasetRegime r) noexcept;
const char* to_string(TrainingMode m) noexcept;

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  double beta = 0.01;
  double lambda = 1.0;
  double d0 = 4.1;
  std::size_t sequence_length = 256;
  std::size_t epochs = 50;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  DatasetRegime regime = DatasetRegime::kpi;

  ModelShape shape;
  std::size_t sr_q = 3;
  std::size_t sr_m = 21;
  /// Shift of the decoder output space so the output ReLU can represent
  /// negative statuses.
  double offset = 5.0;
  double clip_norm = 10.0;
  /// Stop after this many epochs without a relative improvement of
  /// `plateau_tolerance` in the epoch loss; 0 disables early stopping.
  std::size_t patience = 10;
  double plateau_tolerance = 1e-4;
  TrainingMode mode = TrainingMode::joint;

  SpectralConfig spectral() const { return {sr_q, sr_m, d0, 1e-8}; }
  AdamConfig adam() const { return {learning_rate, 0.9, 0.999, 1e-8}; }
  /// Throws ConfigError on out-of-range values.
  void validate() const;
};

/// `kl` is the KL term as it enters the objective (scaled by beta and the
/// mean weight); `pred` is the weighted squared prediction error before the
/// lambda factor.
struct LossBreakdown {
  double recon = 0.0;
  double kl = 0.0;
  double pred = 0.0;
  double total = 0.0;
};

struct VaeLoss {
  double recon = 0.0;
  double kl = 0.0;
};

/// recon = sum_i (w_i (x_i - x'_i))^2,
/// kl = beta * mean(w) * 1/2 sum_k (-log s_k^2 + mu_k^2 + s_k^2 - 1).
VaeLoss loss_vae(std::span<const double> x, std::span<const double> x_prime,
                 const Eigen::VectorXd& mu, const Eigen::VectorXd& log_sigma,
                 const NormalityWeights& weights, double beta);

/// mean_weight * (x_next - y)^2.
double loss_lstm(double y, double x_next, double mean_weight);

LossBreakdown loss_adtp(const VaeLoss& vae, double lstm_term, double lambda);

/// Dense form of one training sequence: column t is step t.
struct SequenceBatch {
  Eigen::MatrixXd segments;      // w0 x T, normalized units
  Eigen::VectorXd next;          // T
  Eigen::MatrixXd weights;       // w0 x T
  Eigen::VectorXd mean_weights;  // T
  std::size_t start_index = 0;   // end index of the first segment

  std::size_t steps() const noexcept { return static_cast<std::size_t>(segments.cols()); }
};

SequenceBatch make_batch(const SegmentSequence& sequence,
                         std::span<const NormalityWeights> weights);

/// joint: the prediction loss reaches the VAE through x'_t. detached: x'_t is
/// treated as a constant input of the LSTM.
enum class GradientFlow { joint, detached };

struct LossTerms {
  double beta = 0.01;
  double lambda = 1.0;
  double offset = 5.0;
};

/// Mean over steps of the joint loss for fixed reparameterization noise
/// (K x T, one column per step).
LossBreakdown sequence_loss(const AdtpParams& params, const SequenceBatch& batch,
                            const Eigen::MatrixXd& noise, const LossTerms& terms);

struct BackwardResult {
  LossBreakdown loss;
  AdtpParams grad;
};

/// Exact gradient of `sequence_loss` by backpropagation through the decoder,
/// the reparameterized latent, the encoder and the LSTM recurrence over all
/// steps. Throws NumericError naming the first non-finite gradient block.
BackwardResult backward(const AdtpParams& params, const SequenceBatch& batch,
                        const Eigen::MatrixXd& noise, const LossTerms& terms,
                        GradientFlow flow = GradientFlow::joint);

struct AdamState {
  AdtpParams first;
  AdtpParams second;
  std::uint64_t step = 0;

  static AdamState zeros_like(const AdtpParams& params);
};

/// Bias-corrected adaptive-moment update.
void optimizer_step(AdtpParams& params, const AdtpParams& grads, AdamState& state,
                    const AdamConfig& config);

/// Rescales `grads` so their global L2 norm is at most `max_norm`; returns
/// the norm before clipping.
double clip_global_norm(AdtpParams& grads, double max_norm);

struct EpochLog {
  std::size_t epoch = 0;
  LossBreakdown loss;
};

/// Everything needed to continue training exactly where it stopped.
struct TrainerState {
  AdtpParams params;
  AdamState adam;
  std::string rng_state;
  std::size_t epoch = 0;  // epochs completed across phases
  int phase = 0;          // two-step mode: 0 = VAE, 1 = LSTM
  std::size_t phase_epoch = 0;
  double best_total = 0.0;
  std::size_t best_epoch = 0;
  std::vector<EpochLog> history;
};

struct TrainResult {
  TrainerState state;
  bool diverged = false;
  bool early_stopped = false;

  const AdtpParams& params() const noexcept { return state.params; }
};

using CheckpointFn = std::function<void(const TrainerState&)>;

/// Segments, SR weights and sequences of a normalized training portion.
/// Segments whose next status lies outside `values` are dropped.
struct TrainingSet {
  std::vector<double> values;
  std::vector<SequenceBatch> batches;
};

TrainingSet make_training_set(std::span<const double> values,
                              const TrainConfig& config);

/// Trains on the normalized training portion. Sequences are visited in a
/// seeded shuffled order each epoch; all randomness (initialization, shuffle,
/// reparameterization noise) comes from one generator seeded with
/// `config.seed`. On a non-finite epoch loss the last good parameters are
/// returned with `diverged` set.
TrainResult train(std::span<const double> values, const TrainConfig& config,
                  const TrainerState* resume = nullptr,
                  const CheckpointFn& checkpoint = {},
                  std::size_t checkpoint_every = 0);

TrainResult train(const TrainingSet& data, const TrainConfig& config,
                  const TrainerState* resume = nullptr,
                  const CheckpointFn& checkpoint = {},
                  std::size_t checkpoint_every = 0);

} // namespace adtp
