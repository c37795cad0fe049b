#include "emoalign/datagen/world.hpp"

#include <cmath>

#include "emoalign/errors.hpp"
#include "emoalign/model/vocab.hpp"
#include "emoalign/numerics/rng.hpp"

namespace emoalign::datagen {

void WorldConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("world config: " + what); };
  if (vocab_size < model::Vocab::kMinSize) fail("vocab_size must be at least " + std::to_string(model::Vocab::kMinSize));
  if (frames_per_token < 1) fail("frames_per_token must be at least 1");
  if (audio_dim < 1) fail("audio_dim must be positive");
  if (!(noise >= 0.0)) fail("noise must be non-negative");
  if (!(emotion_scale > 0.0)) fail("emotion_scale must be positive");
  if (min_len < 5 || max_len < min_len) fail("transcript lengths must satisfy 5 <= min_len <= max_len");
  if (asr_size < 0 || ser_size < 0 || asr_heldout < 0 || ser_heldout < 0) fail("corpus sizes must be non-negative");
  if (ser_size % static_cast<int>(model::kNumEmotions) != 0 || ser_heldout % static_cast<int>(model::kNumEmotions) != 0) {
    fail("SER corpus sizes must be multiples of 5");
  }
  if (!(transcript_temperature > 0.0)) fail("transcript_temperature must be positive");
  if (max_new < 2) fail("max_new must be at least 2");
}

SpeechWorld::SpeechWorld(int vocab_size, int audio_dim, int frames_per_token, double emotion_scale, double noise,
                         std::uint64_t seed)
    : vocab_(vocab_size), audio_dim_(audio_dim), frames_(frames_per_token), rho_(emotion_scale), sigma_(noise) {
  if (vocab_size < 1 || audio_dim < 1 || frames_per_token < 1) throw ConfigError("speech world sizes must be positive");
  if (emotion_scale < 0.0 || noise < 0.0) throw ConfigError("speech world scales must be non-negative");
  numerics::Rng rng(seed);
  audio_.resize(static_cast<std::size_t>(vocab_size * audio_dim));
  for (auto& x : audio_) x = rng.normal();
  offsets_.resize(model::kNumEmotions * static_cast<std::size_t>(audio_dim));
  for (auto& x : offsets_) x = rng.normal();
}

SpeechWorld::SpeechWorld(const WorldConfig& cfg)
    : SpeechWorld(cfg.vocab_size, cfg.audio_dim, cfg.frames_per_token, cfg.emotion_scale, cfg.noise,
                  numerics::derive_seed(cfg.seed, 0x5eec4)) {}

SpeechWorld SpeechWorld::lossless(int vocab_size, int frames_per_token) {
  SpeechWorld w;
  w.vocab_ = vocab_size;
  w.audio_dim_ = vocab_size;
  w.frames_ = frames_per_token;
  w.audio_.assign(static_cast<std::size_t>(vocab_size * vocab_size), 0.0);
  for (int t = 0; t < vocab_size; ++t) w.audio_[static_cast<std::size_t>(t * vocab_size + t)] = 1.0;
  w.offsets_.assign(model::kNumEmotions * static_cast<std::size_t>(vocab_size), 0.0);
  return w;
}

model::SpeechFeatureSequence SpeechWorld::render(const std::vector<int>& tokens, std::optional<Emotion> emotion,
                                                 std::uint64_t seed) const {
  if (tokens.empty()) throw ContractError("render_speech: empty transcript");
  numerics::Rng rng(seed);
  const auto d = static_cast<std::size_t>(audio_dim_);
  const auto f = static_cast<std::size_t>(frames_);
  std::vector<Real> frames(tokens.size() * f * d);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const int t = tokens[i];
    if (t < 0 || t >= vocab_) throw ContractError("render_speech: token " + std::to_string(t) + " out of range");
    const Real* a = audio_.data() + static_cast<std::size_t>(t) * d;
    const Real* o = emotion ? offsets_.data() + model::emotion_index(*emotion) * d : nullptr;
    for (std::size_t r = 0; r < f; ++r) {
      Real* out = frames.data() + (i * f + r) * d;
      for (std::size_t k = 0; k < d; ++k) {
        Real v = a[k];
        if (o != nullptr) v += rho_ * o[k];
        if (sigma_ > 0.0) v += sigma_ * rng.normal();
        out[k] = static_cast<Real>(static_cast<float>(v));
      }
    }
  }
  return {Tensor::from({tokens.size() * f, d}, std::move(frames)), {tokens, emotion, seed}};
}

model::SpeechFeatureSequence render_speech(const SpeechWorld& world, const std::vector<int>& tokens,
                                           std::optional<Emotion> emotion, std::uint64_t seed) {
  return world.render(tokens, emotion, seed);
}

}  // namespace emoalign::datagen
