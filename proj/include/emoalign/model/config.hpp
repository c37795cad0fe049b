#pragma once

#include <string>
#include <vector>

#include "json.hpp"

namespace emoalign::model {

struct EncoderConfig {
  int audio_dim = 16;
  int dim = 64;
  int heads = 4;
  int conv_layers = 2;
  int conv_kernel = 3;
  int blocks = 2;
  int mlp_mult = 4;
};

/// Convolutional length adapter followed by a residual bottleneck.
struct AdapterConfig {
  int n_conv_layers = 3;
  int kernel = 5;
  int stride = 2;
  int padding = 2;
  int hidden_channels = 64;
  int bottleneck_dim = 64;
  int output_dim = 128;
};

struct LmConfig {
  int vocab_size = 64;
  int dim = 128;
  int heads = 4;
  int blocks = 4;
  int mlp_mult = 4;
  int max_positions = 64;
};

struct PLoRAConfig {
  int rank = 16;
  double alpha = 16.0;
  /// Subset of {"q", "k", "v", "o"}.
  std::vector<std::string> targets = {"q", "k", "v", "o"};

  double scaling() const { return alpha / static_cast<double>(rank); }
};

struct ModelConfig {
  EncoderConfig encoder;
  AdapterConfig adapter;
  LmConfig lm;
  PLoRAConfig lora;

  /// Throws ConfigError on inconsistent sizes.
  void validate() const;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(EncoderConfig, audio_dim, dim, heads, conv_layers, conv_kernel, blocks,
                                                mlp_mult)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(AdapterConfig, n_conv_layers, kernel, stride, padding, hidden_channels,
                                                bottleneck_dim, output_dim)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(LmConfig, vocab_size, dim, heads, blocks, mlp_mult, max_positions)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(PLoRAConfig, rank, alpha, targets)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ModelConfig, encoder, adapter, lm, lora)

}  // namespace emoalign::model
