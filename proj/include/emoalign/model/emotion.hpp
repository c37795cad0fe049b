#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace emoalign::model {

/// The five classes, in canonical order.
enum class Emotion { kNeutral = 0, kHappy = 1, kSad = 2, kAngry = 3, kSurprise = 4 };

inline constexpr std::size_t kNumEmotions = 5;
inline constexpr std::array<Emotion, kNumEmotions> kAllEmotions = {Emotion::kNeutral, Emotion::kHappy, Emotion::kSad,
                                                                   Emotion::kAngry, Emotion::kSurprise};

std::string_view emotion_name(Emotion e);
/// Exact lower-case name lookup.
std::optional<Emotion> emotion_from_name(std::string_view name);
inline std::size_t emotion_index(Emotion e) { return static_cast<std::size_t>(e); }
Emotion emotion_at(std::size_t index);

/// Words whose presence in a response signals the emotion; includes the name.
const std::vector<std::string>& emotion_cue_words(Emotion e);

}  // namespace emoalign::model
