#include "emoalign/datagen/oracle.hpp"

#include <algorithm>
#include <string>

#include "emoalign/errors.hpp"

namespace emoalign::datagen {

namespace {

void fill(numerics::ParameterStore& s, const std::string& name, double value) {
  for (auto& x : s.get(name).mutable_data()) x = value;
}

void set_center_tap(numerics::ParameterStore& s, const std::string& name, std::size_t channels, double value) {
  auto& w = s.get(name);
  const std::size_t cin = w.dim(1), k = w.dim(2);
  auto data = w.mutable_data();
  std::fill(data.begin(), data.end(), 0.0);
  for (std::size_t c = 0; c < channels; ++c) data[(c * cin + c) * k + k / 2] = value;
}

}  // namespace

model::ModelConfig lossless_model_config(const model::LmConfig& lm) {
  model::ModelConfig cfg;
  cfg.lm = lm;
  cfg.encoder.audio_dim = lm.vocab_size;
  cfg.encoder.dim = lm.vocab_size;
  cfg.adapter.hidden_channels = lm.vocab_size;
  cfg.adapter.output_dim = lm.dim;
  return cfg;
}

void set_inverting_speech_params(numerics::ParameterStore& s, const model::ModelConfig& cfg, double token_scale) {
  const auto v = static_cast<std::size_t>(cfg.lm.vocab_size);
  if (cfg.encoder.audio_dim != cfg.lm.vocab_size || cfg.encoder.dim != cfg.lm.vocab_size ||
      cfg.adapter.hidden_channels != cfg.lm.vocab_size) {
    throw ConfigError("inverting adapter needs encoder and adapter widths equal to the vocabulary size");
  }
  if (cfg.adapter.kernel % 2 == 0 || cfg.adapter.padding != cfg.adapter.kernel / 2) {
    throw ConfigError("inverting adapter needs an odd kernel with centered padding");
  }
  auto& in = s.get("encoder.in_proj.weight");
  auto w = in.mutable_data();
  std::fill(w.begin(), w.end(), 0.0);
  for (std::size_t i = 0; i < v; ++i) w[i * v + i] = 1.0;
  fill(s, "encoder.in_proj.bias", 0.0);
  for (int i = 0; i < cfg.encoder.conv_layers; ++i) {
    fill(s, "encoder.conv." + std::to_string(i) + ".weight", 0.0);
    fill(s, "encoder.conv." + std::to_string(i) + ".bias", 0.0);
  }
  for (int b = 0; b < cfg.encoder.blocks; ++b) {
    const std::string p = "encoder.blocks." + std::to_string(b);
    for (const char* n : {".attn.wo.weight", ".attn.wo.bias", ".mlp.fc2.weight", ".mlp.fc2.bias"}) fill(s, p + n, 0.0);
  }
  for (int i = 0; i < cfg.adapter.n_conv_layers; ++i) {
    const std::string p = "adapter.conv." + std::to_string(i);
    set_center_tap(s, p + ".weight", v, i + 1 == cfg.adapter.n_conv_layers ? token_scale : 1.0);
    fill(s, p + ".bias", 0.0);
  }
  fill(s, "adapter.bottleneck.up.weight", 0.0);
  fill(s, "adapter.bottleneck.up.bias", 0.0);
}

}  // namespace emoalign::datagen
