#pragma once

#include <optional>
#include <string>
#include <vector>

#include "emoalign/model/emotion.hpp"

namespace emoalign::model {

/// Layout of the synthetic vocabulary.
///
/// Id 0 is end-of-sequence, 1 is begin-of-sequence, then one id per literal
/// prompt segment, then one label token per emotion, then content tokens.
/// Content tokens form a grid of `rows() x cols()` cells: row 0 carries no
/// emotion and row r > 0 carries emotion r - 1. Ids past the grid are unused
/// filler.
class Vocab {
 public:
  static constexpr int kEos = 0;
  static constexpr int kBos = 1;
  static constexpr int kSegmentBase = 2;
  static constexpr int kNumSegments = 9;
  static constexpr int kLabelBase = kSegmentBase + kNumSegments;
  static constexpr int kContentBase = kLabelBase + static_cast<int>(kNumEmotions);
  static constexpr int kRows = static_cast<int>(kNumEmotions) + 1;
  /// Smallest vocabulary with at least two grid columns.
  static constexpr int kMinSize = kContentBase + 2 * kRows;

  explicit Vocab(int size);

  int size() const { return size_; }
  int rows() const { return kRows; }
  int cols() const { return cols_; }

  bool is_content(int id) const { return id >= kContentBase && id < size_; }
  bool is_grid(int id) const { return id >= kContentBase && id < kContentBase + kRows * cols_; }
  bool is_label(int id) const { return id >= kLabelBase && id < kContentBase; }
  bool is_segment(int id) const { return id >= kSegmentBase && id < kLabelBase; }

  int label_token(Emotion e) const { return kLabelBase + static_cast<int>(emotion_index(e)); }
  std::optional<Emotion> label_of(int id) const;

  int grid_token(int row, int col) const;
  int row_of(int id) const;
  int col_of(int id) const;

  /// Surface word for a token; segments render as "<seg:k>", EOS as "".
  std::string word(int id) const;
  /// Words joined by single spaces, stopping at the first EOS.
  std::string render(const std::vector<int>& ids) const;

 private:
  int size_;
  int cols_;
};

}  // namespace emoalign::model
