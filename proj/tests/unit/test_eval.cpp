#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <mutex>
#include <thread>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include "emoalign/datagen/oracle.hpp"
#include "emoalign/datagen/prompts.hpp"
#include "emoalign/errors.hpp"
#include "emoalign/eval/eval.hpp"
#include "emoalign/eval/judge.hpp"
#include "emoalign/eval/remote.hpp"
#include "emoalign/eval/suites.hpp"
#include "emoalign/numerics/rng.hpp"

namespace emoalign::eval {
namespace {

using model::Vocab;

TEST(ParseLabel, EarliestWholeWordWins) {
  EXPECT_EQ(parse_emotion_label("The emotion tone is sad."), Emotion::kSad);
  EXPECT_EQ(parse_emotion_label("surprise, or happy"), Emotion::kSurprise);
  EXPECT_EQ(parse_emotion_label("I cannot tell."), std::nullopt);
  EXPECT_EQ(parse_emotion_label("ANGRY!"), Emotion::kAngry);
  EXPECT_EQ(parse_emotion_label("unhappy saddest"), std::nullopt);
  EXPECT_EQ(parse_emotion_label(""), std::nullopt);
}

TEST(ParseLabel, FromTokenIds) {
  const Vocab vocab(64);
  EXPECT_EQ(parse_emotion_label({vocab.label_token(Emotion::kHappy), Vocab::kEos}, vocab), Emotion::kHappy);
  EXPECT_EQ(parse_emotion_label({vocab.grid_token(3, 0), vocab.label_token(Emotion::kAngry)}, vocab), Emotion::kAngry);
  EXPECT_EQ(parse_emotion_label({vocab.grid_token(3, 0), Vocab::kEos}, vocab), std::nullopt);
}

TEST(ScoreSer, PerfectPredictions) {
  std::vector<Emotion> truth;
  std::vector<std::optional<Emotion>> pred;
  for (int k = 0; k < 3; ++k) {
    for (Emotion e : model::kAllEmotions) {
      truth.push_back(e);
      pred.emplace_back(e);
    }
  }
  const auto r = score_ser(truth, pred);
  EXPECT_EQ(r.total, 15u);
  EXPECT_EQ(r.correct, 15u);
  EXPECT_DOUBLE_EQ(r.accuracy, 1.0);
  for (std::size_t i = 0; i < kNumEmotions; ++i) {
    EXPECT_DOUBLE_EQ(r.per_class[i], 1.0);
    EXPECT_EQ(r.confusion[i][i], 3u);
    EXPECT_EQ(r.class_totals[i], 3u);
  }
}

TEST(ScoreSer, ConstantPredictorAndUnparseable) {
  std::vector<Emotion> truth;
  std::vector<std::optional<Emotion>> pred;
  for (Emotion e : model::kAllEmotions) {
    truth.push_back(e);
    pred.emplace_back(Emotion::kNeutral);
  }
  truth.push_back(Emotion::kSad);
  pred.emplace_back(std::nullopt);
  const auto r = score_ser(truth, pred);
  EXPECT_EQ(r.total, 6u);
  EXPECT_EQ(r.correct, 1u);
  EXPECT_EQ(r.unparseable, 1u);
  EXPECT_DOUBLE_EQ(r.accuracy, 1.0 / 6.0);
  EXPECT_DOUBLE_EQ(r.per_class[model::emotion_index(Emotion::kSad)], 0.0);
  EXPECT_EQ(r.class_totals[model::emotion_index(Emotion::kSad)], 2u);
  std::size_t trace = 0, cells = 0;
  for (std::size_t i = 0; i < kNumEmotions; ++i) {
    trace += r.confusion[i][i];
    for (std::size_t j = 0; j < kNumEmotions; ++j) cells += r.confusion[i][j];
    EXPECT_EQ(r.confusion[i][0], 1u);
  }
  EXPECT_EQ(cells, 5u);
  EXPECT_DOUBLE_EQ(r.accuracy, static_cast<double>(trace) / static_cast<double>(r.total));
  EXPECT_THROW(score_ser(truth, {}), DimensionError);
}

TEST(JudgeParse, Scores) {
  EXPECT_EQ(parse_score("<score>7</score>"), 7);
  EXPECT_EQ(parse_score("first <score>2</score> then <score> 9 </score>"), 9);
  EXPECT_EQ(parse_score("<score>0</score>"), 0);
  EXPECT_THROW(parse_score("score: 7"), ParseError);
  EXPECT_THROW(parse_score("<score>11</score>"), ParseError);
  EXPECT_THROW(parse_score("<score>-1</score>"), ParseError);
  EXPECT_THROW(parse_score("<score>seven</score>"), ParseError);
}

TEST(JudgeParse, Choices) {
  EXPECT_EQ(parse_choice("<choice>A</choice>"), Choice::kA);
  EXPECT_EQ(parse_choice("<choice> b </choice>"), Choice::kB);
  EXPECT_EQ(parse_choice("I prefer <choice>Response A</choice>"), Choice::kA);
  EXPECT_THROW(parse_choice("<choice>both</choice>"), ParseError);
  EXPECT_THROW(parse_choice("A"), ParseError);
  EXPECT_THROW(parse_choice("<choice>A or B</choice>"), ParseError);
}

TEST(Rubric, QualityGrowsWithRelevance) {
  const std::string instr = "okay great sorry wow fun";
  const int unrelated = rubric_quality(instr, "well then and so");
  const int half = rubric_quality(instr, "okay great then so");
  const int all = rubric_quality(instr, "okay great sorry wow");
  EXPECT_LT(unrelated, half);
  EXPECT_LT(half, all);
  EXPECT_EQ(unrelated, 6);
  EXPECT_EQ(all, 10);
  EXPECT_EQ(rubric_quality(instr, ""), 0);
  EXPECT_EQ(rubric_quality(instr, "okay"), 8);
  EXPECT_EQ(rubric_quality(instr, "okay great then so"), rubric_quality(instr, "okay great then so"));
}

TEST(Rubric, EmpathyHandLabeled) {
  struct Case {
    const char* emotion;
    const char* response;
    int expected;
  };
  const std::vector<Case> cases = {
      {"sad", "", 0},
      {"sad", "the weather is fine", 2},
      {"sad", "i am sorry you feel sad", 7},
      {"sad", "sorry, i understand, i am here for you, let me help", 10},
      {"happy", "that is great news", 6},
      {"angry", "please breathe and listen", 8},
      {"surprise", "wow really", 6},
      {"neutral", "noted", 6},
      {"happy", "i understand", 3},
      {"sad", "Sorrow and tears, HUG", 7},
  };
  for (const auto& c : cases) EXPECT_EQ(rubric_empathy(c.emotion, c.response), c.expected) << c.emotion << ": " << c.response;
}

TEST(OfflineJudge, ScoresRenderedPrompts) {
  OfflineJudge judge;
  const auto q = judge_score(JudgeKind::kQuality, "okay great", "happy", "okay great fun", judge);
  ASSERT_TRUE(q.score.has_value());
  EXPECT_EQ(*q.score, rubric_quality("okay great", "okay great fun"));
  const auto e = judge_score(JudgeKind::kEmpathy, "okay great", "sad", "sorry to hear", judge);
  EXPECT_EQ(*e.score, rubric_empathy("sad", "sorry to hear"));
  EXPECT_THROW(judge.complete("rate this"), ContractError);
}

struct FixedBackend : JudgeBackend {
  std::string reply;
  explicit FixedBackend(std::string r) : reply(std::move(r)) {}
  std::string complete(const std::string&) override { return reply; }
};

Dialogue sample_dialogue() {
  return {{"well then and so", "great glad wonderful yay", "sorrow comfort gently"}, {"okay sure fine", "fun bright cheer"}};
}

TEST(Winrate, IdenticalResponsesTie) {
  OfflineJudge judge;
  const auto v = judge_winrate(sample_dialogue(), "sad", "sorry comfort", "sorry comfort", judge);
  EXPECT_EQ(v.choice, Choice::kTie);
  EXPECT_FALSE(v.consistent);
  EXPECT_EQ(v.raw.size(), 2u);
}

TEST(Winrate, SwappingResponsesInverts) {
  OfflineJudge judge;
  const auto d = sample_dialogue();
  const auto ab = judge_winrate(d, "sad", "sorrow comfort gently hug", "wow really amazing", judge);
  const auto ba = judge_winrate(d, "sad", "wow really amazing", "sorrow comfort gently hug", judge);
  EXPECT_EQ(ab.choice, Choice::kA);
  EXPECT_EQ(ba.choice, Choice::kB);
  EXPECT_TRUE(ab.consistent);
}

TEST(Winrate, PositionBiasedJudgeTies) {
  FixedBackend always_a("<choice>A</choice>");
  const auto v = judge_winrate(sample_dialogue(), "sad", "x y z", "p q r", always_a);
  EXPECT_EQ(v.choice, Choice::kTie);
  EXPECT_FALSE(v.consistent);
  EXPECT_FALSE(v.parse_failed);
}

TEST(Winrate, UnparseableReplyTies) {
  FixedBackend garbage("no idea");
  const auto v = judge_winrate(sample_dialogue(), "sad", "x y z", "p q r", garbage);
  EXPECT_EQ(v.choice, Choice::kTie);
  EXPECT_TRUE(v.parse_failed);
  const auto s = judge_score(JudgeKind::kEmpathy, "a", "sad", "b", garbage);
  EXPECT_FALSE(s.score.has_value());
  EXPECT_TRUE(s.parse_failed);
}

TEST(BackendConfig, Validates) {
  JudgeBackendConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.kind = "oracle";
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.kind = "remote_chat";
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = JudgeBackendConfig{};
  cfg.concurrency = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  const auto back = nlohmann::json(JudgeBackendConfig{}).get<JudgeBackendConfig>();
  EXPECT_EQ(back.api_key_env, "EMO_ALIGN_JUDGE_API_KEY");
}

/// Local chat endpoint with scripted statuses.
class FakeChatServer {
 public:
  explicit FakeChatServer(std::vector<int> statuses) : statuses_(std::move(statuses)) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      std::lock_guard<std::mutex> lock(mu_);
      requests_.push_back(req);
      const int status = calls_ < statuses_.size() ? statuses_[calls_] : 200;
      ++calls_;
      res.status = status;
      if (status == 200) {
        const auto body = nlohmann::json::parse(req.body);
        nlohmann::json reply = {
            {"choices", {{{"message", {{"role", "assistant"}, {"content", "echo:" + body["messages"][0]["content"].get<std::string>()}}}}}}};
        res.set_content(reply.dump(), "application/json");
      } else {
        res.set_content("{}", "application/json");
      }
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeChatServer() {
    server_.stop();
    thread_.join();
  }

  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }
  std::size_t calls() const { return calls_; }
  std::vector<httplib::Request> requests() {
    std::lock_guard<std::mutex> lock(mu_);
    return requests_;
  }

 private:
  httplib::Server server_;
  std::vector<int> statuses_;
  std::atomic<std::size_t> calls_{0};
  std::mutex mu_;
  std::vector<httplib::Request> requests_;
  int port_ = 0;
  std::thread thread_;
};

JudgeBackendConfig remote_config(const std::string& endpoint) {
  JudgeBackendConfig cfg;
  cfg.kind = "remote_chat";
  cfg.endpoint = endpoint;
  cfg.model = "judge-model";
  cfg.api_key_env = "EMOALIGN_TEST_JUDGE_KEY";
  cfg.retries = 2;
  cfg.backoff_s = 0.01;
  cfg.timeout_s = 5.0;
  return cfg;
}

constexpr const char* kSecret = "sk-test-secret-123";

TEST(RemoteJudge, SendsKeyOnlyAsBearerHeader) {
  ::setenv("EMOALIGN_TEST_JUDGE_KEY", kSecret, 1);
  FakeChatServer server({});
  auto backend = make_backend(remote_config(server.endpoint()));
  EXPECT_EQ(backend->complete("hello judge"), "echo:hello judge");
  const auto reqs = server.requests();
  ASSERT_EQ(reqs.size(), 1u);
  EXPECT_EQ(reqs[0].get_header_value("Authorization"), std::string("Bearer ") + kSecret);
  EXPECT_EQ(reqs[0].body.find(kSecret), std::string::npos);
  EXPECT_EQ(reqs[0].target.find(kSecret), std::string::npos);
  for (const auto& [name, value] : reqs[0].headers) {
    if (name != "Authorization") EXPECT_EQ(value.find(kSecret), std::string::npos) << name;
  }
  const auto body = nlohmann::json::parse(reqs[0].body);
  EXPECT_EQ(body["model"], "judge-model");
  EXPECT_EQ(body["temperature"], 0);
  EXPECT_EQ(body["messages"][0]["role"], "user");
}

TEST(RemoteJudge, RetriesServerErrors) {
  ::setenv("EMOALIGN_TEST_JUDGE_KEY", kSecret, 1);
  FakeChatServer server({500, 429});
  RemoteChatJudge judge(remote_config(server.endpoint()));
  EXPECT_EQ(judge.complete("x"), "echo:x");
  EXPECT_EQ(server.calls(), 3u);
}

TEST(RemoteJudge, GivesUpAfterRetries) {
  ::setenv("EMOALIGN_TEST_JUDGE_KEY", kSecret, 1);
  FakeChatServer server({503, 503, 503, 503});
  RemoteChatJudge judge(remote_config(server.endpoint()));
  try {
    judge.complete("x");
    FAIL() << "expected BackendError";
  } catch (const BackendError& e) {
    EXPECT_EQ(std::string(e.what()).find(kSecret), std::string::npos);
  }
  EXPECT_EQ(server.calls(), 3u);
}

TEST(RemoteJudge, ClientErrorsAreNotRetried) {
  ::setenv("EMOALIGN_TEST_JUDGE_KEY", kSecret, 1);
  FakeChatServer server({401});
  RemoteChatJudge judge(remote_config(server.endpoint()));
  EXPECT_THROW(judge.complete("x"), BackendError);
  EXPECT_EQ(server.calls(), 1u);
}

TEST(RemoteJudge, RejectsMissingKeyAndBadEndpoint) {
  auto cfg = remote_config("http://127.0.0.1:1/v1/chat/completions");
  ::unsetenv("EMOALIGN_TEST_JUDGE_KEY");
  EXPECT_THROW(RemoteChatJudge{cfg}, ConfigError);
  ::setenv("EMOALIGN_TEST_JUDGE_KEY", kSecret, 1);
  cfg.endpoint = "ftp://example.com/chat";
  EXPECT_THROW(RemoteChatJudge{cfg}, ConfigError);
}

/// Teacher, lossless student and a few labeled samples with teacher
/// continuations.
struct World {
  datagen::WorldConfig cfg;
  datagen::TeacherLM teacher;
  model::ModelConfig lossless_cfg;
  numerics::ParameterStore lossless;
  std::vector<Sample> samples;

  World() : teacher(datagen::build_teacher(cfg, model::LmConfig{})) {
    lossless_cfg = datagen::lossless_model_config(teacher.lm);
    lossless = model::init_model(lossless_cfg, 3, &teacher.params);
    datagen::set_inverting_speech_params(lossless, lossless_cfg, cfg.teacher.token_scale);
    const datagen::SpeechWorld speech(cfg);
    samples = datagen::construct_all(datagen::gen_corpus(datagen::CorpusKind::kSer, cfg, teacher, speech, 10, 5), teacher,
                                      false, cfg.max_new);
    const auto clean = datagen::SpeechWorld::lossless(cfg.vocab_size, cfg.frames_per_token);
    for (auto& s : samples) s.speech = clean.render(s.tokens, std::nullopt, 0);
  }
};

const World& world() {
  static const World w;
  return w;
}

TEST(Suites, LosslessStudentAgreesWithTeacher) {
  const auto& w = world();
  const auto r = eval_agreement(w.lossless, w.lossless_cfg, w.teacher, w.samples);
  EXPECT_EQ(r.total, w.samples.size());
  EXPECT_EQ(r.matches, r.total);
  EXPECT_NEAR(r.mean_kl, 0.0, 1e-6);
  EXPECT_THROW(eval_agreement(w.lossless, w.lossless_cfg, w.teacher, {}), ContractError);
}

TEST(Suites, SerReportMatchesParsedAnswers) {
  const auto& w = world();
  const auto answers = ser_answers(w.lossless, w.lossless_cfg, w.samples);
  std::vector<Emotion> truth;
  std::vector<std::optional<Emotion>> pred;
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    truth.push_back(*w.samples[i].emotion);
    pred.push_back(parse_emotion_label(answers[i], w.teacher.vocab));
  }
  const auto expected = score_ser(truth, pred);
  const auto r = eval_ser(w.lossless, w.lossless_cfg, w.samples, 8, 2);
  EXPECT_EQ(to_json(r), to_json(expected));
  // The lossless student hears no emotion, so the text path's neutral answer
  // carries over.
  EXPECT_EQ(r.confusion[0][0], 2u);
  EXPECT_DOUBLE_EQ(r.accuracy, 0.2);
  auto unlabeled = w.samples;
  unlabeled[0].emotion.reset();
  EXPECT_THROW(eval_ser(w.lossless, w.lossless_cfg, unlabeled), ContractError);
}

TEST(Suites, ContinuationCrossEntropyIsTeacherEntropyScale) {
  const auto& w = world();
  const double ce = continuation_cross_entropy(w.lossless, w.lossless_cfg, w.samples);
  EXPECT_GT(ce, 0.0);
  EXPECT_LT(ce, 1.0);
  EXPECT_EQ(ce, continuation_cross_entropy(w.lossless, w.lossless_cfg, w.samples, 3));
}

TEST(Suites, DialoguesUseFollowingSamples) {
  const auto& w = world();
  const auto ds = build_dialogues(w.samples, w.teacher.vocab);
  ASSERT_EQ(ds.size(), w.samples.size());
  const auto& last = ds.back();
  EXPECT_EQ(last.user[0], w.teacher.vocab.render(w.samples[0].tokens));
  EXPECT_EQ(last.assistant[0], w.teacher.vocab.render(w.samples[0].continuation));
  EXPECT_EQ(last.user[1], w.teacher.vocab.render(w.samples[1].tokens));
  EXPECT_EQ(last.user[2], w.teacher.vocab.render(w.samples.back().tokens));
}

TEST(Suites, SelfComparisonIsAllTies) {
  const auto& w = world();
  OfflineJudge judge;
  const auto r = eval_winrate(w.lossless, w.lossless, w.lossless_cfg, w.samples, judge, 2);
  EXPECT_EQ(r.total, w.samples.size());
  EXPECT_EQ(r.ties, r.total);
  EXPECT_EQ(r.wins + r.losses, 0u);
  EXPECT_DOUBLE_EQ(r.tie_rate(), 1.0);
}

TEST(Suites, ResponsesAreJudgedDeterministically) {
  const auto& w = world();
  OfflineJudge judge;
  const auto a = eval_responses(w.lossless, w.lossless_cfg, w.samples, judge, 1);
  const auto b = eval_responses(w.lossless, w.lossless_cfg, w.samples, judge, 4, 32, 2);
  EXPECT_EQ(to_json(a), to_json(b));
  ASSERT_EQ(a.items.size(), w.samples.size());
  EXPECT_EQ(a.parse_failures, 0u);
  ASSERT_TRUE(a.mean_quality.has_value());
  for (const auto& item : a.items) {
    EXPECT_EQ(*item.quality.score, rubric_quality(item.instruction, item.response));
    EXPECT_EQ(*item.empathy.score, rubric_empathy(item.emotion, item.response));
  }
}

}  // namespace
}  // namespace emoalign::eval
