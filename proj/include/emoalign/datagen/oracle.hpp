#pragma once

#include "emoalign/model/config.hpp"
#include "emoalign/numerics/param_store.hpp"

namespace emoalign::datagen {

/// Student configuration whose encoder reads one-hot frames of width
/// vocab_size.
model::ModelConfig lossless_model_config(const model::LmConfig& lm);

/// Hand-sets encoder and adapter so that noiseless one-hot speech with
/// stride^layers frames per token maps exactly onto `token_scale` times the
/// one-hot token code, which is the compiled teacher's token embedding.
void set_inverting_speech_params(numerics::ParameterStore& params, const model::ModelConfig& cfg, double token_scale);

}  // namespace emoalign::datagen
