#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "emoalign/model/model.hpp"
#include "json.hpp"

namespace emoalign::datagen {

using model::Emotion;
using numerics::Real;
using numerics::Tensor;

/// Scales of the compiled teacher circuit.
struct TeacherConfig {
  double token_scale = 12.0;
  double pos_scale = 1.0;
  /// Logit margin of the designed continuation rule.
  double margin = 5.0;
  /// Standard deviation of the context-dependent soft logits.
  double soft_scale = 0.5;
  /// When off, emotion tokens carry no class signal.
  bool emotion_conditioning = true;
};

struct WorldConfig {
  int vocab_size = 64;
  std::uint64_t seed = 7;
  int frames_per_token = 8;
  int audio_dim = 16;
  double noise = 0.05;
  double emotion_scale = 0.5;
  int asr_size = 2000;
  int ser_size = 2000;
  int asr_heldout = 200;
  int ser_heldout = 500;
  int min_len = 5;
  int max_len = 12;
  double transcript_temperature = 4.0;
  int max_new = 32;
  TeacherConfig teacher;

  /// Throws ConfigError.
  void validate() const;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TeacherConfig, token_scale, pos_scale, margin, soft_scale,
                                                emotion_conditioning)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(WorldConfig, vocab_size, seed, frames_per_token, audio_dim, noise,
                                                emotion_scale, asr_size, ser_size, asr_heldout, ser_heldout, min_len,
                                                max_len, transcript_temperature, max_new, teacher)

/// Synthetic acoustics: each token becomes `frames_per_token` frames of its
/// audio embedding plus a scaled emotion offset plus Gaussian noise. Frame
/// values are rounded to float precision.
class SpeechWorld {
 public:
  /// Random audio embeddings and emotion offsets drawn from `seed`.
  SpeechWorld(int vocab_size, int audio_dim, int frames_per_token, double emotion_scale, double noise,
              std::uint64_t seed);
  explicit SpeechWorld(const WorldConfig& cfg);

  /// Noiseless world with one-hot audio embeddings (audio_dim == vocab_size)
  /// and no emotion offset.
  static SpeechWorld lossless(int vocab_size, int frames_per_token);

  model::SpeechFeatureSequence render(const std::vector<int>& tokens, std::optional<Emotion> emotion,
                                      std::uint64_t seed) const;

  int audio_dim() const { return audio_dim_; }
  int frames_per_token() const { return frames_; }
  const std::vector<Real>& audio_embedding() const { return audio_; }
  const std::vector<Real>& emotion_offsets() const { return offsets_; }

 private:
  SpeechWorld() = default;

  int vocab_ = 0;
  int audio_dim_ = 0;
  int frames_ = 0;
  double rho_ = 0.0;
  double sigma_ = 0.0;
  std::vector<Real> audio_;    // [V, D_audio]
  std::vector<Real> offsets_;  // [5, D_audio]
};

/// Free-function form of SpeechWorld::render.
model::SpeechFeatureSequence render_speech(const SpeechWorld& world, const std::vector<int>& tokens,
                                           std::optional<Emotion> emotion, std::uint64_t seed);

}  // namespace emoalign::datagen
