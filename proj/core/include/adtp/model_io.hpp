#pragma once

#include "adtp/model.hpp"
#include "adtp/series.hpp"
#include "adtp/training.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

namespace adtp {

/// A trained model together with what is needed to use it on raw data.
/// `trainer` is present in checkpoints written mid-training and carries the
/// optimizer moments, generator state and loss history.
struct ModelFile {
  AdtpParams params;
  NormalizationParams normalization;
  double offset = 5.0;
  std::string config_hash;
  std::optional<TrainerState> trainer;
};

/// Line-oriented text format. Every real is written as a C99 hexadecimal
/// float, so loading reproduces each tensor bit for bit:
///
///   adtp-model 1
///   window <w0> / hidden_layer <h_l> / latent <K> / lstm_hidden <h>
///   output_activation relu|linear
///   offset, norm_mean, norm_std <hexfloat>
///   config_hash <16 hex digits>
///   tensor <name> <count>  followed by <count> values
///   [trainer section]
///   end
void save_model(std::ostream& out, const ModelFile& model);
ModelFile load_model(std::istream& in, const std::string& source = "<stream>");

void save_model(const std::filesystem::path& path, const ModelFile& model);
ModelFile load_model(const std::filesystem::path& path);

} // namespace adtp
