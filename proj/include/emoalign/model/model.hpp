#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "emoalign/model/config.hpp"
#include "emoalign/model/emotion.hpp"
#include "emoalign/numerics/param_store.hpp"
#include "emoalign/numerics/tensor.hpp"

namespace emoalign::model {

using numerics::ParameterStore;
using numerics::Real;
using numerics::Tensor;

struct SpeechMeta {
  std::vector<int> tokens;
  std::optional<Emotion> emotion;
  std::uint64_t seed = 0;
};

/// Acoustic frames [L, D_audio].
struct SpeechFeatureSequence {
  Tensor frames;
  SpeechMeta meta;

  std::size_t length() const { return frames.defined() ? frames.dim(0) : 0; }
};

enum class Modality : std::uint8_t { kText = 0, kSpeech = 1 };
using ModalityMask = std::vector<Modality>;

std::vector<bool> speech_rows(const ModalityMask& mask);

/// Random base LM under "lm.*".
void init_lm_params(ParameterStore& store, const LmConfig& cfg, std::uint64_t seed);

/// Encoder, adapter, SER head and LoRA parameters. LoRA down-projections are
/// small random, up-projections zero.
void init_speech_params(ParameterStore& store, const ModelConfig& cfg, std::uint64_t seed);

/// Full student: speech parameters from `seed` plus a copy of every "lm.*"
/// entry of `lm_base`, or a random LM when lm_base is null.
ParameterStore init_model(const ModelConfig& cfg, std::uint64_t seed, const ParameterStore* lm_base);

/// Frames [L, D_audio] -> hidden states [L, D_enc].
Tensor encode_speech(const ParameterStore& params, const ModelConfig& cfg, const SpeechFeatureSequence& speech);
Tensor encode_frames(const ParameterStore& params, const ModelConfig& cfg, const Tensor& frames);

std::size_t adapter_output_length(std::size_t length, const AdapterConfig& cfg);

/// Hidden states [L, D_enc] -> LM-space embeddings [L', D_lm].
Tensor adapt(const ParameterStore& params, const ModelConfig& cfg, const Tensor& hidden);

/// Causal decoder over input embeddings [N, D]; returns logits [N, V]. LoRA
/// deltas are added only at speech rows and only when LoRA entries exist in
/// the store.
Tensor lm_forward(const ParameterStore& params, const LmConfig& cfg, const PLoRAConfig& lora, const Tensor& embeddings,
                  const ModalityMask& mask);

/// Residual stream after the last block, before the final norm: [N, D].
Tensor lm_hidden(const ParameterStore& params, const LmConfig& cfg, const PLoRAConfig& lora, const Tensor& embeddings,
                 const ModalityMask& mask);

/// Text embeddings for token ids from "lm.tok_emb".
Tensor embed_tokens(const ParameterStore& params, const std::vector<int>& ids);

/// Mean-pooled linear classifier logits [1, 5].
Tensor emotion_logits(const ParameterStore& params, const Tensor& adapter_out);
std::array<Real, kNumEmotions> classify_emotion(const ParameterStore& params, const Tensor& adapter_out);

}  // namespace emoalign::model
