#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "emoalign/datagen/corpus.hpp"
#include "emoalign/datagen/teacher.hpp"
#include "emoalign/datagen/templates.hpp"
#include "emoalign/model/checkpoint.hpp"
#include "emoalign/model/model.hpp"
#include "emoalign/numerics/optim.hpp"
#include "json.hpp"

namespace emoalign::alignment {

using datagen::Sample;
using model::ModelConfig;
using numerics::ParameterStore;
using numerics::Real;
using numerics::Tensor;

enum class Stage { kStage1, kStage2 };
enum class TrainMode { kBlspEmo, kBlspSer, kBlspMultitask, kEmoNoPretrain, kStage1Only };

std::string stage_name(Stage stage);
std::string mode_name(TrainMode mode);
/// Throws ConfigError on unknown names.
Stage stage_from_name(const std::string& name);
TrainMode mode_from_name(const std::string& name);

struct FreezeSpec {
  Stage stage;
  TrainMode mode;
  bool operator()(const std::string& name) const;
};

/// Throws ConfigError for stage/mode pairs that do not exist.
FreezeSpec trainable_params(Stage stage, TrainMode mode);

/// Desk-scale schedule. Full-scale training used one epoch at batch 768 for
/// stage 1 and three epochs at batch 128 for stage 2.
struct StageConfig {
  int epochs = 3;
  int batch_size = 32;
  /// Stops after this many optimizer steps when non-negative.
  int max_steps = -1;
  numerics::AdamWConfig optim;
  double clip_norm = 1.0;
  double lambda_cont = 1.0;
  double lambda_ser = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(StageConfig, epochs, batch_size, max_steps, optim, clip_norm, lambda_cont,
                                                lambda_ser, seed)

/// Per-step means over the batch; components a mode does not use are absent.
struct LossReport {
  std::size_t step = 0;
  std::size_t epoch = 0;
  std::optional<Real> semantic_kl;
  std::optional<Real> continuation_ce;
  std::optional<Real> ser_ce;
  Real total = 0.0;
  Real grad_norm = 0.0;
  double wall_ms = 0.0;
};

nlohmann::json to_json(const LossReport& r);

using LossSink = std::function<void(const LossReport&)>;

struct SemanticLoss {
  Tensor cross;          // differentiable cross term
  Real teacher_entropy;  // constant
  Real kl() const { return cross.item() - teacher_entropy; }
};

/// Log-probabilities [len(y), V] predicting each continuation token from the
/// speech-path prompt of a template.
Tensor speech_continuation_log_probs(const ParameterStore& params, const ModelConfig& cfg, datagen::TemplateId id,
                                     const Tensor& speech_embeds, const std::vector<int>& continuation);

/// Teacher soft targets [len(y), V] on the text path of the continuation
/// prompt.
Tensor teacher_targets(const datagen::TeacherLM& teacher, const std::vector<int>& transcript,
                       const std::vector<int>& continuation);

SemanticLoss semantic_loss(const ParameterStore& params, const ModelConfig& cfg, const Tensor& speech_embeds,
                           const std::vector<int>& continuation, const Tensor& teacher_probs);

/// Mean token cross-entropy of the continuation on the emotion-aware speech
/// prompt.
Tensor emotion_continuation_loss(const ParameterStore& params, const ModelConfig& cfg, const Tensor& speech_embeds,
                                 const std::vector<int>& continuation);

/// -log p(e | s) from the classification head.
Tensor ser_loss(const ParameterStore& params, const Tensor& speech_embeds, model::Emotion e);

/// Cross-entropy of [label, EOS] on the speech SER prompt.
Tensor ser_prompt_loss(const ParameterStore& params, const ModelConfig& cfg, const Tensor& speech_embeds,
                       model::Emotion e);

/// Cross-entropy of an emotion-agnostic continuation on the plain speech
/// continuation prompt.
Tensor continuation_loss(const ParameterStore& params, const ModelConfig& cfg, const Tensor& speech_embeds,
                         const std::vector<int>& continuation);

/// Adapter output for a sample's speech.
Tensor speech_embeddings(const ParameterStore& params, const ModelConfig& cfg, const Sample& sample);

struct Stage2Terms {
  Tensor total;
  std::optional<Tensor> continuation;
  std::optional<Tensor> ser;
};

/// The stage-2 objective of a mode for one sample. Samples carry the
/// emotion-aware continuation for blsp_emo and emo_no_pretrain, the
/// emotion-agnostic one for blsp_multitask; blsp_ser ignores it.
Stage2Terms stage2_loss(const ParameterStore& params, const ModelConfig& cfg, TrainMode mode, const StageConfig& sc,
                        const Sample& sample);

/// Semantic alignment. `init` holds the student with the teacher's LM and
/// fresh speech parameters; only adapter parameters are updated.
ParameterStore train_stage1(const std::vector<Sample>& data, const datagen::TeacherLM& teacher, const ModelConfig& cfg,
                            const ParameterStore& init, const StageConfig& sc, const LossSink& sink = {});

/// Emotion alignment and its baselines. `init` is a stage-1 result, or a fresh
/// student for emo_no_pretrain.
ParameterStore train_stage2(const std::vector<Sample>& data, const ModelConfig& cfg, TrainMode mode,
                            const ParameterStore& init, const StageConfig& sc, const LossSink& sink = {});

/// Checkpoint metadata echoing how parameters were produced.
model::Checkpoint make_checkpoint(const ParameterStore& params, const ModelConfig& cfg, Stage stage, TrainMode mode,
                                  const StageConfig& sc);

}  // namespace emoalign::alignment
