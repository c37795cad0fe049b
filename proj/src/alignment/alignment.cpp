#include "emoalign/alignment/alignment.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

#include "emoalign/datagen/prompts.hpp"
#include "emoalign/errors.hpp"
#include "emoalign/model/vocab.hpp"
#include "emoalign/numerics/ops.hpp"
#include "emoalign/numerics/rng.hpp"

namespace emoalign::alignment {

namespace ops = numerics::ops;
using datagen::TemplateId;

namespace {

bool starts_with(const std::string& s, const char* prefix) { return s.rfind(prefix, 0) == 0; }

Tensor span_rows(const Tensor& logits, const model::AssembledInput& in) {
  if (in.span_begin == 0 || in.span_end <= in.span_begin) throw ContractError("empty continuation span");
  return ops::slice_rows(logits, in.span_begin - 1, in.span_end - 1);
}

Tensor speech_log_probs(const ParameterStore& params, const ModelConfig& cfg, TemplateId id, const Tensor& speech,
                        const std::vector<int>& continuation) {
  if (continuation.empty()) throw ContractError("empty continuation");
  auto in = datagen::build_speech_input(params, id, speech, std::nullopt, continuation);
  Tensor logits = model::lm_forward(params, cfg.lm, cfg.lora, in.embeddings, in.mask);
  return ops::log_softmax(span_rows(logits, in));
}

std::vector<int> label_target(model::Emotion e) {
  return {model::Vocab::kLabelBase + static_cast<int>(model::emotion_index(e)), model::Vocab::kEos};
}

using LossFn = std::function<Tensor(const ParameterStore&, std::size_t, LossReport&)>;

/// Shared optimisation loop: `loss_of(params, i, report)` builds the loss of
/// sample i and records its components in the report.
ParameterStore run_loop(std::size_t n, const ParameterStore& init, const FreezeSpec& freeze, const StageConfig& sc,
                        const LossFn& loss_of, const LossSink& sink) {
  sc.validate();
  if (n == 0) throw ContractError("training dataset is empty");
  ParameterStore params = init.clone();
  params.set_trainable([&](const std::string& name) { return freeze(name); });
  numerics::OptimizerState state{sc.optim, 0, {}, {}};
  const auto batch = static_cast<std::size_t>(sc.batch_size);
  std::size_t step = 0;
  std::vector<std::size_t> order(n);
  for (int epoch = 0; epoch < sc.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    numerics::Rng rng(numerics::derive_seed(sc.seed, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);
    for (std::size_t start = 0; start < n; start += batch) {
      if (sc.max_steps >= 0 && step >= static_cast<std::size_t>(sc.max_steps)) {
        params.set_trainable([](const std::string&) { return false; });
        return params;
      }
      const auto t0 = std::chrono::steady_clock::now();
      const std::size_t end = std::min(n, start + batch);
      const auto scale = 1.0 / static_cast<Real>(end - start);
      params.zero_grad();
      LossReport report;
      report.step = step;
      report.epoch = static_cast<std::size_t>(epoch);
      for (std::size_t k = start; k < end; ++k) {
        LossReport part;
        Tensor loss = loss_of(params, order[k], part);
        ops::scale(loss, scale).backward();
        report.total += loss.item() * scale;
        auto acc = [&](std::optional<Real>& into, const std::optional<Real>& v) {
          if (v) into = into.value_or(0.0) + *v * scale;
        };
        acc(report.semantic_kl, part.semantic_kl);
        acc(report.continuation_ce, part.continuation_ce);
        acc(report.ser_ce, part.ser_ce);
      }
      report.grad_norm = numerics::clip_grad_norm(params, sc.clip_norm);
      numerics::adamw_step(params, state);
      report.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      if (sink) sink(report);
      ++step;
    }
  }
  params.set_trainable([](const std::string&) { return false; });
  return params;
}

}  // namespace

std::string stage_name(Stage stage) { return stage == Stage::kStage1 ? "stage1" : "stage2"; }

std::string mode_name(TrainMode mode) {
  switch (mode) {
    case TrainMode::kBlspEmo:
      return "blsp_emo";
    case TrainMode::kBlspSer:
      return "blsp_ser";
    case TrainMode::kBlspMultitask:
      return "blsp_multitask";
    case TrainMode::kEmoNoPretrain:
      return "emo_no_pretrain";
    case TrainMode::kStage1Only:
      return "stage1_only";
  }
  return "unknown";
}

Stage stage_from_name(const std::string& name) {
  if (name == "stage1" || name == "1") return Stage::kStage1;
  if (name == "stage2" || name == "2") return Stage::kStage2;
  throw ConfigError("unknown stage '" + name + "'");
}

TrainMode mode_from_name(const std::string& name) {
  for (TrainMode m : {TrainMode::kBlspEmo, TrainMode::kBlspSer, TrainMode::kBlspMultitask, TrainMode::kEmoNoPretrain,
                      TrainMode::kStage1Only}) {
    if (mode_name(m) == name) return m;
  }
  throw ConfigError("unknown train mode '" + name + "'");
}

bool FreezeSpec::operator()(const std::string& name) const {
  if (stage == Stage::kStage1) return starts_with(name, "adapter.");
  if (starts_with(name, "adapter.") || starts_with(name, "encoder.")) return true;
  if (starts_with(name, "ser_head.")) return true;
  return starts_with(name, "lm.") && name.find(".lora.") != std::string::npos;
}

FreezeSpec trainable_params(Stage stage, TrainMode mode) {
  if (stage == Stage::kStage1 && mode != TrainMode::kStage1Only) {
    throw ConfigError("stage1 only supports mode stage1_only, got " + mode_name(mode));
  }
  if (stage == Stage::kStage2 && mode == TrainMode::kStage1Only) {
    throw ConfigError("mode stage1_only has no stage2");
  }
  return {stage, mode};
}

void StageConfig::validate() const {
  if (epochs < 0 || batch_size < 1) throw ConfigError("stage config: epochs >= 0 and batch_size >= 1 required");
  if (lambda_cont < 0.0 || lambda_ser < 0.0) throw ConfigError("stage config: loss weights must be non-negative");
  if (!(clip_norm > 0.0)) throw ConfigError("stage config: clip_norm must be positive");
  if (!(optim.lr >= 0.0)) throw ConfigError("stage config: lr must be non-negative");
}

nlohmann::json to_json(const LossReport& r) {
  auto opt = [](const std::optional<Real>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"step", r.step},           {"epoch", r.epoch},    {"semantic_kl", opt(r.semantic_kl)},
          {"continuation_ce", opt(r.continuation_ce)}, {"ser_ce", opt(r.ser_ce)}, {"total", r.total},
          {"grad_norm", r.grad_norm}, {"wall_ms", r.wall_ms}};
}

Tensor speech_continuation_log_probs(const ParameterStore& params, const ModelConfig& cfg, TemplateId id,
                                     const Tensor& speech_embeds, const std::vector<int>& continuation) {
  return speech_log_probs(params, cfg, id, speech_embeds, continuation);
}

Tensor teacher_targets(const datagen::TeacherLM& teacher, const std::vector<int>& transcript,
                       const std::vector<int>& continuation) {
  numerics::NoGradGuard no_grad;
  auto in = datagen::build_text_input(teacher.params, TemplateId::kContinuation, transcript, std::nullopt, continuation);
  Tensor logits = model::lm_forward(teacher.params, teacher.lm, {}, in.embeddings, in.mask);
  return ops::softmax(span_rows(logits, in));
}

SemanticLoss semantic_loss(const ParameterStore& params, const ModelConfig& cfg, const Tensor& speech_embeds,
                           const std::vector<int>& continuation, const Tensor& teacher_probs) {
  if (teacher_probs.rank() != 2 || teacher_probs.dim(1) != static_cast<std::size_t>(cfg.lm.vocab_size)) {
    throw DimensionError("semantic_loss: teacher vocabulary does not match the student");
  }
  Tensor logp = speech_log_probs(params, cfg, TemplateId::kContinuation, speech_embeds, continuation);
  return {ops::soft_cross_entropy(teacher_probs, logp), ops::mean_entropy(teacher_probs)};
}

Tensor emotion_continuation_loss(const ParameterStore& params, const ModelConfig& cfg, const Tensor& speech_embeds,
                                 const std::vector<int>& continuation) {
  return ops::nll(speech_log_probs(params, cfg, TemplateId::kEmotionContinuationTrain, speech_embeds, continuation),
                  continuation);
}

Tensor ser_loss(const ParameterStore& params, const Tensor& speech_embeds, model::Emotion e) {
  Tensor logp = ops::log_softmax(model::emotion_logits(params, speech_embeds));
  return ops::nll(logp, {static_cast<int>(model::emotion_index(e))});
}

Tensor ser_prompt_loss(const ParameterStore& params, const ModelConfig& cfg, const Tensor& speech_embeds,
                       model::Emotion e) {
  const auto target = label_target(e);
  return ops::nll(speech_log_probs(params, cfg, TemplateId::kSer, speech_embeds, target), target);
}

Tensor continuation_loss(const ParameterStore& params, const ModelConfig& cfg, const Tensor& speech_embeds,
                         const std::vector<int>& continuation) {
  return ops::nll(speech_log_probs(params, cfg, TemplateId::kContinuation, speech_embeds, continuation), continuation);
}

Tensor speech_embeddings(const ParameterStore& params, const ModelConfig& cfg, const Sample& sample) {
  return model::adapt(params, cfg, model::encode_speech(params, cfg, sample.speech));
}

Stage2Terms stage2_loss(const ParameterStore& params, const ModelConfig& cfg, TrainMode mode, const StageConfig& sc,
                        const Sample& sample) {
  if (!sample.emotion) throw ContractError("stage 2 sample " + sample.id + " has no emotion label");
  Tensor speech = speech_embeddings(params, cfg, sample);
  Stage2Terms t;
  switch (mode) {
    case TrainMode::kBlspEmo:
    case TrainMode::kEmoNoPretrain:
      t.continuation = emotion_continuation_loss(params, cfg, speech, sample.continuation);
      t.ser = ser_loss(params, speech, *sample.emotion);
      break;
    case TrainMode::kBlspMultitask:
      t.continuation = continuation_loss(params, cfg, speech, sample.continuation);
      t.ser = ser_prompt_loss(params, cfg, speech, *sample.emotion);
      break;
    case TrainMode::kBlspSer:
      t.ser = ser_prompt_loss(params, cfg, speech, *sample.emotion);
      t.total = *t.ser;
      return t;
    case TrainMode::kStage1Only:
      throw ConfigError("mode stage1_only has no stage2 objective");
  }
  t.total = ops::weighted_sum({*t.continuation, *t.ser}, {sc.lambda_cont, sc.lambda_ser});
  return t;
}

ParameterStore train_stage1(const std::vector<Sample>& data, const datagen::TeacherLM& teacher, const ModelConfig& cfg,
                            const ParameterStore& init, const StageConfig& sc, const LossSink& sink) {
  if (data.empty()) throw ContractError("train_stage1: empty dataset");
  if (teacher.lm.vocab_size != cfg.lm.vocab_size) throw DimensionError("train_stage1: vocabulary mismatch");
  std::vector<Tensor> encoded(data.size()), targets(data.size());
  {
    numerics::NoGradGuard no_grad;
    for (std::size_t i = 0; i < data.size(); ++i) {
      encoded[i] = model::encode_speech(init, cfg, data[i].speech);
      targets[i] = teacher_targets(teacher, data[i].tokens, data[i].continuation);
    }
  }
  auto loss_of = [&](const ParameterStore& params, std::size_t i, LossReport& r) {
    // The encoder is frozen in this stage, so cached outputs are exact.
    SemanticLoss loss = semantic_loss(params, cfg, model::adapt(params, cfg, encoded[i]), data[i].continuation,
                                      targets[i]);
    r.semantic_kl = loss.kl();
    return loss.cross;
  };
  return run_loop(data.size(), init, trainable_params(Stage::kStage1, TrainMode::kStage1Only), sc, loss_of, sink);
}

ParameterStore train_stage2(const std::vector<Sample>& data, const ModelConfig& cfg, TrainMode mode,
                            const ParameterStore& init, const StageConfig& sc, const LossSink& sink) {
  const FreezeSpec freeze = trainable_params(Stage::kStage2, mode);
  for (const auto& s : data) {
    if (!s.emotion) throw ContractError("stage 2 sample " + s.id + " has no emotion label");
    if (mode != TrainMode::kBlspSer && s.continuation.empty()) {
      throw ContractError("stage 2 sample " + s.id + " has no continuation");
    }
  }
  auto loss_of = [&](const ParameterStore& params, std::size_t i, LossReport& r) {
    Stage2Terms t = stage2_loss(params, cfg, mode, sc, data[i]);
    if (t.continuation) r.continuation_ce = t.continuation->item();
    if (t.ser) r.ser_ce = t.ser->item();
    return t.total;
  };
  return run_loop(data.size(), init, freeze, sc, loss_of, sink);
}

model::Checkpoint make_checkpoint(const ParameterStore& params, const ModelConfig& cfg, Stage stage, TrainMode mode,
                                  const StageConfig& sc) {
  nlohmann::json meta = {{"stage", stage_name(stage)},
                         {"mode", mode_name(mode)},
                         {"model", cfg},
                         {"stage_config", sc},
                         {"trainable_checksum", params.checksum(trainable_params(stage, mode))}};
  return {std::move(meta), params.clone()};
}

}  // namespace emoalign::alignment
