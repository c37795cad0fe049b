#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "emoalign/alignment/alignment.hpp"
#include "emoalign/datagen/oracle.hpp"
#include "emoalign/datagen/prompts.hpp"
#include "emoalign/errors.hpp"
#include "emoalign/numerics/gradcheck.hpp"
#include "emoalign/numerics/ops.hpp"
#include "emoalign/numerics/rng.hpp"

namespace emoalign::alignment {
namespace {

namespace ops = numerics::ops;
using datagen::TemplateId;
using model::Emotion;

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.encoder.audio_dim = 8;
  cfg.encoder.dim = 16;
  cfg.encoder.heads = 2;
  cfg.encoder.blocks = 1;
  cfg.adapter.hidden_channels = 16;
  cfg.adapter.bottleneck_dim = 8;
  cfg.adapter.output_dim = 32;
  cfg.lm.vocab_size = 40;
  cfg.lm.dim = 32;
  cfg.lm.heads = 2;
  cfg.lm.blocks = 2;
  cfg.lm.max_positions = 64;
  cfg.lora.rank = 4;
  cfg.lora.alpha = 4;
  return cfg;
}

void randomize(ParameterStore& store, const std::string& needle, std::uint64_t seed, double scale = 0.3) {
  numerics::Rng rng(seed);
  for (const auto& name : store.names()) {
    if (name.find(needle) == std::string::npos) continue;
    for (auto& x : store.get(name).mutable_data()) x = scale * rng.normal();
  }
}

void zero(ParameterStore& store, const std::string& prefix) {
  for (const auto& name : store.names()) {
    if (name.rfind(prefix, 0) != 0) continue;
    for (auto& x : store.get(name).mutable_data()) x = 0.0;
  }
}

Sample tiny_sample(const ModelConfig& cfg, std::uint64_t seed, Emotion e) {
  const datagen::SpeechWorld world(cfg.lm.vocab_size, cfg.encoder.audio_dim, 8, 0.5, 0.05, 99);
  const model::Vocab vocab(cfg.lm.vocab_size);
  numerics::Rng rng(seed);
  Sample s;
  s.id = "tiny-" + std::to_string(seed);
  s.kind = datagen::CorpusKind::kSer;
  for (int i = 0; i < 5; ++i) s.tokens.push_back(vocab.grid_token(static_cast<int>(rng.below(6)), static_cast<int>(rng.below(vocab.cols()))));
  s.emotion = e;
  s.continuation = {vocab.grid_token(2, 1), vocab.grid_token(2, 2), model::Vocab::kEos};
  s.speech = world.render(s.tokens, e, seed);
  return s;
}

/// Shared teacher, student initialization and small corpora at full model
/// size.
struct Fixture {
  datagen::WorldConfig world;
  ModelConfig cfg;
  datagen::TeacherLM teacher;
  ParameterStore init;
  std::vector<Sample> asr;
  std::vector<Sample> ser;

  Fixture() : teacher(datagen::build_teacher(world, cfg.lm)) {
    const datagen::SpeechWorld speech(world);
    init = model::init_model(cfg, 11, &teacher.params);
    asr = datagen::construct_all(datagen::gen_corpus(datagen::CorpusKind::kAsr, world, teacher, speech, 40, 0), teacher,
                                 false, world.max_new);
    ser = datagen::construct_all(datagen::gen_corpus(datagen::CorpusKind::kSer, world, teacher, speech, 20, 2), teacher,
                                 true, world.max_new);
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

bool same_values(const ParameterStore& a, const ParameterStore& b, const FreezeSpec& pick, bool want_trainable) {
  for (const auto& name : a.names()) {
    if (pick(name) != want_trainable) continue;
    if (a.checksum_of(name) != b.checksum_of(name)) return false;
  }
  return true;
}

TEST(Modes, NamesRoundTrip) {
  for (TrainMode m : {TrainMode::kBlspEmo, TrainMode::kBlspSer, TrainMode::kBlspMultitask, TrainMode::kEmoNoPretrain,
                      TrainMode::kStage1Only}) {
    EXPECT_EQ(mode_from_name(mode_name(m)), m);
  }
  EXPECT_EQ(stage_from_name("stage2"), Stage::kStage2);
  EXPECT_EQ(stage_from_name("1"), Stage::kStage1);
  EXPECT_THROW(mode_from_name("blsp"), ConfigError);
  EXPECT_THROW(stage_from_name("3"), ConfigError);
}

TEST(FreezeSpec, StageOneTrainsOnlyAdapter) {
  const auto cfg = tiny_config();
  const auto store = model::init_model(cfg, 1, nullptr);
  const auto freeze = trainable_params(Stage::kStage1, TrainMode::kStage1Only);
  std::size_t trainable = 0;
  for (const auto& name : store.names()) {
    EXPECT_EQ(freeze(name), name.rfind("adapter.", 0) == 0) << name;
    trainable += freeze(name);
  }
  EXPECT_GT(trainable, 0u);
}

TEST(FreezeSpec, StageTwoTrainsSpeechSideAndLora) {
  const auto cfg = tiny_config();
  const auto store = model::init_model(cfg, 1, nullptr);
  for (TrainMode m : {TrainMode::kBlspEmo, TrainMode::kBlspSer, TrainMode::kBlspMultitask, TrainMode::kEmoNoPretrain}) {
    const auto freeze = trainable_params(Stage::kStage2, m);
    for (const auto& name : store.names()) {
      const bool lora = name.rfind("lm.", 0) == 0 && name.find(".lora.") != std::string::npos;
      const bool expect = name.rfind("adapter.", 0) == 0 || name.rfind("encoder.", 0) == 0 ||
                          name.rfind("ser_head.", 0) == 0 || lora;
      EXPECT_EQ(freeze(name), expect) << mode_name(m) << " " << name;
    }
  }
}

TEST(FreezeSpec, RejectsInconsistentPairs) {
  EXPECT_THROW(trainable_params(Stage::kStage1, TrainMode::kBlspSer), ConfigError);
  EXPECT_THROW(trainable_params(Stage::kStage1, TrainMode::kBlspEmo), ConfigError);
  EXPECT_THROW(trainable_params(Stage::kStage2, TrainMode::kStage1Only), ConfigError);
}

TEST(FreezeSpec, FrozenParametersReceiveNoGradient) {
  const auto cfg = tiny_config();
  auto store = model::init_model(cfg, 2, nullptr);
  randomize(store, ".lora.up", 3);
  const auto freeze = trainable_params(Stage::kStage2, TrainMode::kBlspEmo);
  store.set_trainable([&](const std::string& n) { return freeze(n); });
  StageConfig sc;
  stage2_loss(store, cfg, TrainMode::kBlspEmo, sc, tiny_sample(cfg, 1, Emotion::kSad)).total.backward();
  double frozen_norm = 0.0, trainable_norm = 0.0;
  for (const auto& name : store.names()) {
    const auto& t = store.get(name);
    if (!t.has_grad()) continue;
    for (Real g : t.grad()) (freeze(name) ? trainable_norm : frozen_norm) += g * g;
  }
  EXPECT_EQ(frozen_norm, 0.0);
  EXPECT_GT(trainable_norm, 0.0);
}

TEST(Losses, UniformLmGivesLogVocab) {
  const auto cfg = tiny_config();
  auto store = model::init_model(cfg, 4, nullptr);
  zero(store, "lm.head.");
  const auto s = tiny_sample(cfg, 2, Emotion::kHappy);
  const auto speech = speech_embeddings(store, cfg, s);
  EXPECT_NEAR(emotion_continuation_loss(store, cfg, speech, s.continuation).item(), std::log(40.0), 1e-12);
  EXPECT_NEAR(continuation_loss(store, cfg, speech, s.continuation).item(), std::log(40.0), 1e-12);
}

TEST(Losses, UniformClassifierGivesLogFive) {
  const auto cfg = tiny_config();
  auto store = model::init_model(cfg, 4, nullptr);
  zero(store, "ser_head.");
  const auto s = tiny_sample(cfg, 3, Emotion::kAngry);
  EXPECT_NEAR(ser_loss(store, speech_embeddings(store, cfg, s), Emotion::kAngry).item(), std::log(5.0), 1e-12);
}

TEST(Losses, ContinuationLossMatchesPerTokenSummation) {
  const auto cfg = tiny_config();
  auto store = model::init_model(cfg, 5, nullptr);
  randomize(store, ".lora.up", 6);
  const auto s = tiny_sample(cfg, 4, Emotion::kSurprise);
  const auto speech = speech_embeddings(store, cfg, s);
  const Real loss = emotion_continuation_loss(store, cfg, speech, s.continuation).item();

  const auto in = datagen::build_speech_input(store, TemplateId::kEmotionContinuationTrain, speech, std::nullopt,
                                              s.continuation);
  const auto logits = model::lm_forward(store, cfg.lm, cfg.lora, in.embeddings, in.mask);
  const std::size_t v = static_cast<std::size_t>(cfg.lm.vocab_size);
  double total = 0.0;
  for (std::size_t j = 0; j < s.continuation.size(); ++j) {
    const auto row = logits.data().subspan((in.span_begin - 1 + j) * v, v);
    double mx = row[0];
    for (Real x : row) mx = std::max(mx, x);
    double z = 0.0;
    for (Real x : row) z += std::exp(x - mx);
    total -= row[static_cast<std::size_t>(s.continuation[j])] - mx - std::log(z);
  }
  EXPECT_NEAR(loss, total / static_cast<double>(s.continuation.size()), 1e-12);
}

TEST(Losses, SerLossMatchesClassifierProbability) {
  const auto cfg = tiny_config();
  auto store = model::init_model(cfg, 7, nullptr);
  const auto s = tiny_sample(cfg, 5, Emotion::kSad);
  const auto speech = speech_embeddings(store, cfg, s);
  const auto probs = model::classify_emotion(store, speech);
  EXPECT_NEAR(ser_loss(store, speech, Emotion::kSad).item(), -std::log(probs[model::emotion_index(Emotion::kSad)]),
              1e-12);
}

TEST(Losses, SerPromptTargetsLabelThenEos) {
  const auto cfg = tiny_config();
  auto store = model::init_model(cfg, 8, nullptr);
  zero(store, "lm.head.");
  const auto s = tiny_sample(cfg, 6, Emotion::kNeutral);
  EXPECT_NEAR(ser_prompt_loss(store, cfg, speech_embeddings(store, cfg, s), Emotion::kNeutral).item(),
              std::log(40.0), 1e-12);
}

TEST(Losses, StageTwoTotalIsWeightedSum) {
  const auto cfg = tiny_config();
  auto store = model::init_model(cfg, 9, nullptr);
  randomize(store, ".lora.up", 10);
  StageConfig sc;
  sc.lambda_cont = 0.7;
  sc.lambda_ser = 2.5;
  const auto s = tiny_sample(cfg, 7, Emotion::kHappy);
  for (TrainMode m : {TrainMode::kBlspEmo, TrainMode::kEmoNoPretrain, TrainMode::kBlspMultitask}) {
    const auto t = stage2_loss(store, cfg, m, sc, s);
    ASSERT_TRUE(t.continuation && t.ser);
    EXPECT_EQ(t.total.item(), 0.7 * t.continuation->item() + 2.5 * t.ser->item()) << mode_name(m);
  }
  const auto ser_only = stage2_loss(store, cfg, TrainMode::kBlspSer, sc, s);
  EXPECT_FALSE(ser_only.continuation.has_value());
  EXPECT_EQ(ser_only.total.item(), ser_only.ser->item());
  EXPECT_THROW(stage2_loss(store, cfg, TrainMode::kStage1Only, sc, s), ConfigError);
  Sample unlabeled = s;
  unlabeled.emotion.reset();
  EXPECT_THROW(stage2_loss(store, cfg, TrainMode::kBlspEmo, sc, unlabeled), ContractError);
}

TEST(Losses, StageTwoGradientMatchesFiniteDifferences) {
  const auto cfg = tiny_config();
  auto store = model::init_model(cfg, 12, nullptr);
  randomize(store, ".lora.up", 13);
  randomize(store, "adapter.bottleneck.up", 14, 0.1);
  const auto freeze = trainable_params(Stage::kStage2, TrainMode::kBlspEmo);
  store.set_trainable([&](const std::string& n) { return freeze(n); });
  const std::vector<Sample> batch = {tiny_sample(cfg, 8, Emotion::kSad), tiny_sample(cfg, 9, Emotion::kAngry)};
  StageConfig sc;
  auto f = [&] {
    std::vector<Tensor> terms;
    for (const auto& s : batch) terms.push_back(stage2_loss(store, cfg, TrainMode::kBlspEmo, sc, s).total);
    return ops::weighted_sum(terms, {0.5, 0.5});
  };
  numerics::GradCheckOptions opt;
  opt.max_per_param = 6;
  const auto r = numerics::gradient_check(f, store, opt);
  EXPECT_GT(r.checked, 100u);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst_param << "[" << r.worst_index << "]";
}

TEST(Losses, SemanticLossIsGibbsBounded) {
  const auto& fx = fixture();
  for (std::size_t i = 0; i < 8; ++i) {
    const auto& s = fx.asr[i];
    const auto targets = teacher_targets(fx.teacher, s.tokens, s.continuation);
    const auto loss = semantic_loss(fx.init, fx.cfg, speech_embeddings(fx.init, fx.cfg, s), s.continuation, targets);
    EXPECT_GE(loss.kl(), -1e-9);
    EXPECT_GT(loss.teacher_entropy, 0.0);
  }
}

TEST(Losses, LosslessSpeechHasZeroSemanticKl) {
  const auto& fx = fixture();
  const auto cfg = datagen::lossless_model_config(fx.teacher.lm);
  auto params = model::init_model(cfg, 3, &fx.teacher.params);
  datagen::set_inverting_speech_params(params, cfg, fx.world.teacher.token_scale);
  const auto world = datagen::SpeechWorld::lossless(fx.world.vocab_size, 8);
  for (std::size_t i = 0; i < 8; ++i) {
    const auto& s = fx.asr[i];
    Sample clean = s;
    clean.speech = world.render(s.tokens, std::nullopt, 0);
    const auto targets = teacher_targets(fx.teacher, s.tokens, s.continuation);
    const auto loss = semantic_loss(params, cfg, speech_embeddings(params, cfg, clean), s.continuation, targets);
    EXPECT_NEAR(loss.cross.item(), loss.teacher_entropy, 1e-6);
  }
}

TEST(Losses, SemanticLossRejectsVocabularyMismatch) {
  const auto& fx = fixture();
  const auto& s = fx.asr[0];
  const auto speech = speech_embeddings(fx.init, fx.cfg, s);
  const Tensor wrong = Tensor::full({s.continuation.size(), 10}, 0.1);
  EXPECT_THROW(semantic_loss(fx.init, fx.cfg, speech, s.continuation, wrong), DimensionError);
}

TEST(StageConfig, ValidatesAndSerializes) {
  StageConfig sc;
  sc.optim.lr = 3e-4;
  sc.lambda_ser = 0.0;
  const StageConfig back = nlohmann::json(sc).get<StageConfig>();
  EXPECT_EQ(back.optim.lr, 3e-4);
  EXPECT_EQ(back.lambda_ser, 0.0);
  EXPECT_NO_THROW(back.validate());
  sc.lambda_cont = -1.0;
  EXPECT_THROW(sc.validate(), ConfigError);
  sc = StageConfig{};
  sc.batch_size = 0;
  EXPECT_THROW(sc.validate(), ConfigError);
}

TEST(Training, ZeroStepsReturnsInitialization) {
  const auto& fx = fixture();
  StageConfig sc;
  sc.epochs = 0;
  EXPECT_EQ(train_stage1(fx.asr, fx.teacher, fx.cfg, fx.init, sc).checksum(), fx.init.checksum());
  sc.epochs = 2;
  sc.max_steps = 0;
  EXPECT_EQ(train_stage2(fx.ser, fx.cfg, TrainMode::kBlspEmo, fx.init, sc).checksum(), fx.init.checksum());
}

TEST(Training, StageOneRespectsFreezeAndReducesKl) {
  const auto& fx = fixture();
  StageConfig sc;
  sc.epochs = 8;
  sc.batch_size = 8;
  const std::vector<Sample> train(fx.asr.begin(), fx.asr.begin() + 32);
  std::vector<LossReport> reports;
  const auto trained = train_stage1(train, fx.teacher, fx.cfg, fx.init, sc, [&](const LossReport& r) { reports.push_back(r); });
  ASSERT_EQ(reports.size(), 32u);
  const auto freeze = trainable_params(Stage::kStage1, TrainMode::kStage1Only);
  EXPECT_TRUE(same_values(trained, fx.init, freeze, false));
  EXPECT_FALSE(same_values(trained, fx.init, freeze, true));
  auto train_kl = [&](const ParameterStore& p) {
    double kl = 0.0;
    for (const auto& s : train) {
      const auto t = teacher_targets(fx.teacher, s.tokens, s.continuation);
      kl += semantic_loss(p, fx.cfg, speech_embeddings(p, fx.cfg, s), s.continuation, t).kl();
    }
    return kl;
  };
  EXPECT_LT(train_kl(trained), 0.5 * train_kl(fx.init));
  for (const auto& r : reports) {
    EXPECT_TRUE(r.semantic_kl.has_value());
    EXPECT_FALSE(r.ser_ce.has_value());
    EXPECT_TRUE(std::isfinite(r.total));
  }
}

TEST(Training, StageTwoRespectsFreeze) {
  const auto& fx = fixture();
  StageConfig sc;
  sc.epochs = 1;
  sc.batch_size = 10;
  const auto trained = train_stage2(fx.ser, fx.cfg, TrainMode::kBlspEmo, fx.init, sc);
  const auto freeze = trainable_params(Stage::kStage2, TrainMode::kBlspEmo);
  EXPECT_TRUE(same_values(trained, fx.init, freeze, false));
  for (const char* group : {"adapter.", "encoder.", "ser_head.", ".lora."}) {
    bool changed = false;
    for (const auto& name : trained.names()) {
      if (name.find(group) != std::string::npos && trained.checksum_of(name) != fx.init.checksum_of(name)) changed = true;
    }
    EXPECT_TRUE(changed) << group;
  }
}

TEST(Training, SameSeedIsBitIdentical) {
  const auto& fx = fixture();
  StageConfig sc;
  sc.epochs = 1;
  sc.batch_size = 5;
  sc.seed = 4;
  std::vector<std::string> log_a, log_b;
  const auto a = train_stage2(fx.ser, fx.cfg, TrainMode::kBlspEmo, fx.init, sc,
                              [&](const LossReport& r) { log_a.push_back(to_json(r).dump()); });
  const auto b = train_stage2(fx.ser, fx.cfg, TrainMode::kBlspEmo, fx.init, sc,
                              [&](const LossReport& r) { log_b.push_back(to_json(r).dump()); });
  EXPECT_EQ(a.checksum(), b.checksum());
  ASSERT_EQ(log_a.size(), log_b.size());
  for (std::size_t i = 0; i < log_a.size(); ++i) {
    auto ja = nlohmann::json::parse(log_a[i]), jb = nlohmann::json::parse(log_b[i]);
    ja.erase("wall_ms");
    jb.erase("wall_ms");
    EXPECT_EQ(ja, jb);
  }
  sc.seed = 5;
  EXPECT_NE(train_stage2(fx.ser, fx.cfg, TrainMode::kBlspEmo, fx.init, sc).checksum(), a.checksum());
}

TEST(Training, RejectsBadData) {
  const auto& fx = fixture();
  StageConfig sc;
  EXPECT_THROW(train_stage1({}, fx.teacher, fx.cfg, fx.init, sc), ContractError);
  EXPECT_THROW(train_stage2(fx.asr, fx.cfg, TrainMode::kBlspEmo, fx.init, sc), ContractError);
  EXPECT_THROW(train_stage2(fx.ser, fx.cfg, TrainMode::kStage1Only, fx.init, sc), ConfigError);
}

TEST(Training, CheckpointRecordsProvenance) {
  const auto& fx = fixture();
  StageConfig sc;
  const auto ck = make_checkpoint(fx.init, fx.cfg, Stage::kStage2, TrainMode::kBlspSer, sc);
  EXPECT_EQ(ck.metadata.at("stage"), "stage2");
  EXPECT_EQ(ck.metadata.at("mode"), "blsp_ser");
  EXPECT_EQ(ck.metadata.at("model").get<ModelConfig>().lm.dim, fx.cfg.lm.dim);
  EXPECT_EQ(ck.params.checksum(), fx.init.checksum());
}

}  // namespace
}  // namespace emoalign::alignment
