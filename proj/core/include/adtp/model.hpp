#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace adtp {

enum class OutputActivation { relu, linear };

const char* to_string(OutputActivation a) noexcept;
OutputActivation output_activation_from_string(std::string_view s);

/// Sizes of the joint network: window w0, VAE hidden width h_l, latent
/// dimension K and LSTM hidden size h.
struct ModelShape {
  std::size_t window = 120;
  std::size_t hidden_layer = 100;
  std::size_t latent = 3;
  std::size_t lstm_hidden = 100;
  OutputActivation output = OutputActivation::relu;

  bool operator==(const ModelShape&) const = default;
};

/// Affine layer y = W x + b with W stored out x in.
struct DenseLayer {
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;
};

/// Encoder w0 -> h_l -> h_l -> (mu, log sigma) and the mirrored decoder
/// K -> h_l -> h_l -> w0. Hidden layers use ReLU; the heads are affine; the
/// decoder output uses `output`.
struct VaeParams {
  DenseLayer enc1, enc2, mu_head, log_sigma_head;
  DenseLayer dec1, dec2, out;
  OutputActivation output = OutputActivation::relu;
};

/// Gate weights act on the concatenation [h_{t-1}, x'_t], so every W_* is
/// h x (h + w0) with the recurrent block in the leading columns.
struct LstmParams {
  Eigen::MatrixXd w_c, w_u, w_f, w_o;
  Eigen::VectorXd b_c, b_u, b_f, b_o;
  Eigen::VectorXd w_y;
  double b_y = 0.0;
};

struct AdtpParams {
  VaeParams vae;
  LstmParams lstm;
};

struct LstmState {
  Eigen::VectorXd h;
  Eigen::VectorXd c;

  static LstmState zeros(std::size_t hidden) {
    return {Eigen::VectorXd::Zero(static_cast<Eigen::Index>(hidden)),
            Eigen::VectorXd::Zero(static_cast<Eigen::Index>(hidden))};
  }
};

struct Encoding {
  Eigen::VectorXd mu;
  Eigen::VectorXd log_sigma;
};

/// Named view over one trainable tensor, in a fixed traversal order.
struct ParamBlock {
  std::string_view name;
  std::span<double> data;
};
struct ConstParamBlock {
  std::string_view name;
  std::span<const double> data;
};

ModelShape shape_of(const AdtpParams& params);

/// All-zero parameters of the given shape.
AdtpParams zero_params(const ModelShape& shape);

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and zero biases, except
/// the decoder output bias which starts at `output_bias`. Draws are consumed
/// block by block in `param_blocks` order.
AdtpParams init_params(const ModelShape& shape, std::mt19937_64& rng,
                       double output_bias = 0.0);

std::vector<ParamBlock> param_blocks(AdtpParams& params);
std::vector<ConstParamBlock> param_blocks(const AdtpParams& params);

std::size_t parameter_count(const AdtpParams& params);

/// Throws NumericError naming the first non-finite tensor.
void check_finite(const AdtpParams& params, std::string_view what);

Encoding encode(const VaeParams& params, std::span<const double> segment);

/// z = mu + exp(log_sigma) * noise.
Eigen::VectorXd reparameterize(const Eigen::VectorXd& mu,
                               const Eigen::VectorXd& log_sigma,
                               const Eigen::VectorXd& noise);

Eigen::VectorXd decode(const VaeParams& params, const Eigen::VectorXd& z);

struct ReconstructMode {
  enum class Kind { mean, sample } kind = Kind::mean;
  std::size_t samples = 1;

  static ReconstructMode mean() { return {}; }
  static ReconstructMode sample(std::size_t s) { return {Kind::sample, s}; }
};

/// Reconstruction of a segment given in normalized units. The encoder reads
/// the segment as is; the decoder works in the shifted space `x + offset`,
/// which keeps signed statuses above the output ReLU, and the result is
/// shifted back. Sampling mode averages
/// `samples` decoded draws taken from `rng`; mean mode decodes z = mu.
Eigen::VectorXd reconstruct(const VaeParams& params,
                            std::span<const double> segment,
                            ReconstructMode mode, double offset = 0.0,
                            std::mt19937_64* rng = nullptr);

/// Mean-mode reconstruction of many segments at once, one per column.
Eigen::MatrixXd reconstruct_batch(const VaeParams& params,
                                  const Eigen::MatrixXd& segments,
                                  double offset);

/// One LSTM step; returns the new state and the prediction y_t.
std::pair<LstmState, double> lstm_step(const LstmParams& params,
                                       const LstmState& state,
                                       std::span<const double> x_prime);

double logistic(double x) noexcept;

} // namespace adtp
