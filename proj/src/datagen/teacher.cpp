#include "emoalign/datagen/teacher.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "emoalign/datagen/prompts.hpp"
#include "emoalign/errors.hpp"
#include "emoalign/model/generate.hpp"
#include "emoalign/numerics/rng.hpp"

namespace emoalign::datagen {

namespace {

using model::Vocab;
using numerics::Rng;

constexpr int kPosPairs = 8;
constexpr int kBagDims = 16;
constexpr double kPrevScore = 4.0;   // per positional pair
constexpr double kSinkScore = 80.0;
constexpr double kSlotScale = 2.0;   // magnitude of the PREV and CLASS slots
constexpr double kTextureScale = 0.3;

constexpr double kKeyEmotion = 12.0;
constexpr double kKeyStrong = 40.0;
constexpr double kKeyWeak = 4.0;

struct Layout {
  int d, tok, pos, prev, cls, bag, tex, tex_end, dh;
};

/// Row-major [rows, cols] scratch matrix that becomes a tensor.
struct Mat {
  std::size_t rows, cols;
  std::vector<Real> v;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}
  Real& operator()(std::size_t r, std::size_t c) { return v[r * cols + c]; }
  Tensor tensor() const { return Tensor::from({rows, cols}, v); }
};

Tensor vec(std::size_t n, Real value = 0.0) { return Tensor::full({n}, value); }

Mat gaussian(Rng& rng, std::size_t r, std::size_t c, Real stddev) {
  Mat m(r, c);
  for (auto& x : m.v) x = stddev * rng.normal();
  return m;
}

void put_norm(numerics::ParameterStore& s, const std::string& name, int d) {
  s.add(name + ".gamma", vec(static_cast<std::size_t>(d), 1.0));
  s.add(name + ".beta", vec(static_cast<std::size_t>(d)));
}

void put_linear(numerics::ParameterStore& s, const std::string& name, const Mat& w, Tensor bias = Tensor()) {
  s.add(name + ".weight", w.tensor());
  s.add(name + ".bias", bias.defined() ? bias : vec(w.cols));
}

int segment_key_class(TemplateId id) {
  switch (id) {
    case TemplateId::kContinuation:
      return 2;
    case TemplateId::kEmotionContinuationData:
      return 0;
    default:
      return 1;
  }
}

}  // namespace

int TeacherLM::next_column(int token) const {
  if (!vocab.is_grid(token)) return -1;
  const auto& order = row_order[static_cast<std::size_t>(vocab.row_of(token))];
  auto it = std::find(order.begin(), order.end(), vocab.col_of(token));
  ++it;
  return it == order.end() ? -1 : *it;
}

TeacherLM build_teacher(const WorldConfig& world, const model::LmConfig& lm) {
  world.validate();
  if (lm.vocab_size != world.vocab_size) throw ConfigError("teacher: lm.vocab_size must equal the world vocab_size");
  TeacherLM t;
  t.lm = lm;
  t.cfg = world.teacher;
  t.vocab = Vocab(world.vocab_size);
  const Vocab& voc = t.vocab;
  const int V = lm.vocab_size, K = voc.cols(), R = voc.rows();

  Layout L{};
  L.d = lm.dim;
  L.tok = 0;
  L.pos = V;
  L.prev = L.pos + 2 * kPosPairs;
  L.cls = L.prev + K;
  L.bag = L.cls + R;
  L.tex = L.bag + kBagDims;
  L.tex_end = L.d - 1;
  L.dh = lm.heads > 0 ? lm.dim / lm.heads : 0;
  if (L.tex_end - L.tex < 4) throw ConfigError("teacher: lm.dim too small for the compiled circuit");
  if (lm.heads < 3 || L.dh < std::max({2 * kPosPairs + 1, K, R, kBagDims})) {
    throw ConfigError("teacher: need at least 3 heads of width >= " + std::to_string(2 * kPosPairs + 1));
  }
  if (lm.blocks < 1) throw ConfigError("teacher: need at least one block");

  Rng rng(numerics::derive_seed(world.seed, 0x7eac4e));
  t.start_column.assign(static_cast<std::size_t>(V), -1);
  for (int id = 0; id < V; ++id) {
    if (voc.is_content(id)) t.start_column[static_cast<std::size_t>(id)] = static_cast<int>(rng.below(static_cast<std::uint64_t>(K)));
  }
  t.row_order.resize(static_cast<std::size_t>(R));
  for (auto& order : t.row_order) {
    order.resize(static_cast<std::size_t>(K));
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
  }

  const auto D = static_cast<std::size_t>(L.d), Vs = static_cast<std::size_t>(V);
  const double c = t.cfg.token_scale, a = t.cfg.pos_scale, M = t.cfg.margin;
  auto& s = t.params;

  Mat tok(Vs, D);
  for (int id = 0; id < V; ++id) tok(static_cast<std::size_t>(id), static_cast<std::size_t>(L.tok + id)) = c;
  s.add("lm.tok_emb", tok.tensor());
  Mat pos(static_cast<std::size_t>(lm.max_positions), D);
  for (int p = 0; p < lm.max_positions; ++p) {
    for (int k = 0; k < kPosPairs; ++k) {
      const double w = std::numbers::pi / std::pow(2.0, k);
      pos(static_cast<std::size_t>(p), static_cast<std::size_t>(L.pos + 2 * k)) = a * std::cos(w * p);
      pos(static_cast<std::size_t>(p), static_cast<std::size_t>(L.pos + 2 * k + 1)) = a * std::sin(w * p);
    }
  }
  s.add("lm.pos_emb", pos.tensor());

  // Expected inverse norm of a fresh token-plus-position residual.
  const double mu0 = c / L.d;
  const double s0 = 1.0 / std::sqrt((c * c + kPosPairs * a * a) / L.d - mu0 * mu0);
  const double per_tok = 1.0 / (s0 * c);
  const double sqrt_dh = std::sqrt(static_cast<double>(L.dh));

  std::vector<int> query_segs, key_class(Vs, -1);
  for (TemplateId id : kLmTemplates) {
    if (id != TemplateId::kSer) query_segs.push_back(query_segment(id));
    for (int seg : segment_tokens(id)) key_class[static_cast<std::size_t>(seg)] = segment_key_class(id);
  }

  {
    const std::string p = "lm.blocks.0";
    put_norm(s, p + ".ln1", L.d);
    Mat wq(D, D), wk(D, D), wv(D, D), wo(D, D);
    std::vector<Real> bq(D, 0.0);
    // Head 0: previous token at continuation queries, a null sink elsewhere.
    const double A = std::sqrt(kPrevScore * sqrt_dh) / (a * s0);
    for (int k = 0; k < kPosPairs; ++k) {
      const double w = std::numbers::pi / std::pow(2.0, k);
      const auto rc = static_cast<std::size_t>(L.pos + 2 * k), rs = rc + 1;
      const auto qc = static_cast<std::size_t>(2 * k), qs = qc + 1;
      wq(rc, qc) = A * std::cos(w);
      wq(rs, qc) = A * std::sin(w);
      wq(rc, qs) = -A * std::sin(w);
      wq(rs, qs) = A * std::cos(w);
      wk(rc, qc) = A;
      wk(rs, qs) = A;
    }
    const double sink = std::sqrt(kSinkScore * sqrt_dh) * per_tok;
    const auto sink_col = static_cast<std::size_t>(2 * kPosPairs);
    bq[sink_col] = sink / per_tok;
    for (int id : query_segs) wq(static_cast<std::size_t>(id), sink_col) = -sink;
    wk(static_cast<std::size_t>(Vocab::kBos), sink_col) = sink;
    for (int id = 0; id < V; ++id) {
      const int g = t.start_column[static_cast<std::size_t>(id)];
      if (g >= 0) wv(static_cast<std::size_t>(id), static_cast<std::size_t>(g)) = per_tok;
    }
    for (int j = 0; j < K; ++j) wo(static_cast<std::size_t>(j), static_cast<std::size_t>(L.prev + j)) = kSlotScale;

    // Head 1: class from emotion tokens, else from segment defaults.
    const auto h1 = static_cast<std::size_t>(L.dh);
    bq[h1] = sqrt_dh;
    auto set_class = [&](int id, double key, int cls) {
      wk(static_cast<std::size_t>(id), h1) = key * per_tok;
      wv(static_cast<std::size_t>(id), h1 + static_cast<std::size_t>(cls)) = per_tok;
    };
    set_class(Vocab::kBos, kKeyWeak, 0);
    for (int id = Vocab::kSegmentBase; id < Vocab::kLabelBase; ++id) {
      const int kc = key_class[static_cast<std::size_t>(id)];
      set_class(id, kc == 2 ? kKeyStrong : kc == 1 ? kKeyWeak : 0.0, 0);
    }
    if (t.cfg.emotion_conditioning) {
      for (model::Emotion e : model::kAllEmotions) {
        set_class(voc.label_token(e), kKeyEmotion, 1 + static_cast<int>(model::emotion_index(e)));
      }
    }
    for (int r = 0; r < R; ++r) wo(h1 + static_cast<std::size_t>(r), static_cast<std::size_t>(L.cls + r)) = kSlotScale;

    // Head 2: uniform average of random token codes.
    const auto h2 = static_cast<std::size_t>(2 * L.dh);
    for (int id = 0; id < V; ++id) {
      for (int i = 0; i < kBagDims; ++i) wv(static_cast<std::size_t>(id), h2 + static_cast<std::size_t>(i)) = rng.normal() * per_tok;
    }
    for (int i = 0; i < kBagDims; ++i) wo(h2 + static_cast<std::size_t>(i), static_cast<std::size_t>(L.bag + i)) = 1.0;

    put_linear(s, p + ".attn.wq", wq, Tensor::from({D}, bq));
    put_linear(s, p + ".attn.wk", wk);
    put_linear(s, p + ".attn.wv", wv);
    put_linear(s, p + ".attn.wo", wo);
    put_norm(s, p + ".ln2", L.d);
    const auto hidden = static_cast<std::size_t>(L.d * lm.mlp_mult);
    put_linear(s, p + ".mlp.fc1", Mat(D, hidden));
    put_linear(s, p + ".mlp.fc2", Mat(hidden, D));
  }

  // Texture blocks write only to the texture dims.
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(L.d));
  for (int b = 1; b < lm.blocks; ++b) {
    const std::string p = "lm.blocks." + std::to_string(b);
    put_norm(s, p + ".ln1", L.d);
    put_linear(s, p + ".attn.wq", gaussian(rng, D, D, inv_sqrt_d));
    put_linear(s, p + ".attn.wk", gaussian(rng, D, D, inv_sqrt_d));
    put_linear(s, p + ".attn.wv", gaussian(rng, D, D, inv_sqrt_d));
    Mat wo(D, D);
    for (std::size_t r = 0; r < D; ++r) {
      for (int col = L.tex; col < L.tex_end; ++col) wo(r, static_cast<std::size_t>(col)) = kTextureScale * inv_sqrt_d * rng.normal();
    }
    put_linear(s, p + ".attn.wo", wo);
    put_norm(s, p + ".ln2", L.d);
    const auto hidden = static_cast<std::size_t>(L.d * lm.mlp_mult);
    put_linear(s, p + ".mlp.fc1", gaussian(rng, D, hidden, inv_sqrt_d));
    Mat fc2(hidden, D);
    const double fc2_std = kTextureScale / std::sqrt(static_cast<double>(hidden));
    for (std::size_t r = 0; r < hidden; ++r) {
      for (int col = L.tex; col < L.tex_end; ++col) fc2(r, static_cast<std::size_t>(col)) = fc2_std * rng.normal();
    }
    put_linear(s, p + ".mlp.fc2", fc2);
  }
  put_norm(s, "lm.ln_f", L.d);
  s.add("lm.head.weight", Tensor::zeros({D, Vs}));
  s.add("lm.head.bias", Tensor::zeros({Vs}));

  // Calibrate the final norm on probe prompts.
  double sigma_sum = 0.0, bag_sq = 0.0, tex_sq = 0.0;
  std::size_t rows = 0;
  {
    numerics::NoGradGuard no_grad;
    Rng probe(numerics::derive_seed(world.seed, 0x9e0b));
    auto grid_token = [&] {
      return voc.grid_token(static_cast<int>(probe.below(static_cast<std::uint64_t>(R))),
                            static_cast<int>(probe.below(static_cast<std::uint64_t>(K))));
    };
    for (int i = 0; i < 48; ++i) {
      std::vector<int> x(static_cast<std::size_t>(world.min_len + static_cast<int>(probe.below(static_cast<std::uint64_t>(world.max_len - world.min_len + 1)))));
      for (auto& id : x) id = grid_token();
      std::vector<int> y(1 + probe.below(6));
      for (auto& id : y) id = grid_token();
      const bool emo = i % 2 == 1;
      const auto in = emo ? build_text_input(s, TemplateId::kEmotionContinuationData, x, model::emotion_at(probe.below(5)), y)
                          : build_text_input(s, TemplateId::kContinuation, x, std::nullopt, y);
      Tensor h = model::lm_hidden(s, lm, {}, in.embeddings, in.mask);
      for (std::size_t r = 0; r < h.dim(0); ++r) {
        auto row = h.data().subspan(r * D, D);
        const double mean = std::accumulate(row.begin(), row.end(), 0.0) / L.d;
        double var = 0.0;
        for (Real v : row) var += (v - mean) * (v - mean);
        const double sd = std::sqrt(var / L.d);
        sigma_sum += sd;
        for (int d = L.bag; d < L.tex; ++d) bag_sq += std::pow((row[static_cast<std::size_t>(d)] - mean) / sd, 2);
        for (int d = L.tex; d < L.tex_end; ++d) tex_sq += std::pow((row[static_cast<std::size_t>(d)] - mean) / sd, 2);
        ++rows;
      }
    }
  }
  const double sf = rows / sigma_sum;
  const double bag_rms = std::sqrt(bag_sq / static_cast<double>(rows * kBagDims));
  const double tex_rms = std::sqrt(tex_sq / static_cast<double>(rows * static_cast<std::size_t>(L.tex_end - L.tex)));

  Mat head(D, Vs);
  std::vector<Real> bias(Vs, 0.0);
  const double tok_w = M / (sf * c), slot_w = M / (sf * kSlotScale);
  auto grid_cells = [&](auto pred) {
    std::vector<std::size_t> out;
    for (int id = 0; id < V; ++id) {
      if (voc.is_grid(id) && pred(id)) out.push_back(static_cast<std::size_t>(id));
    }
    return out;
  };
  for (int id = 0; id < V; ++id) {
    const auto r = static_cast<std::size_t>(L.tok + id);
    if (voc.is_content(id)) {
      const int next = t.next_column(id);
      if (next < 0) {
        head(r, Vocab::kEos) += 3.0 * tok_w;
      } else {
        for (auto v : grid_cells([&](int u) { return voc.col_of(u) == next; })) head(r, v) += tok_w;
      }
    } else if (voc.is_label(id)) {
      head(r, Vocab::kEos) += 3.0 * tok_w;
    }
  }
  const auto ser_query = static_cast<std::size_t>(L.tok + query_segment(TemplateId::kSer));
  for (model::Emotion e : model::kAllEmotions) head(ser_query, static_cast<std::size_t>(voc.label_token(e))) += 2.0 * tok_w;
  for (int j = 0; j < K; ++j) {
    for (auto v : grid_cells([&](int u) { return voc.col_of(u) == j; })) head(static_cast<std::size_t>(L.prev + j), v) += slot_w;
  }
  for (int r = 0; r < R; ++r) {
    const auto row = static_cast<std::size_t>(L.cls + r);
    for (auto v : grid_cells([&](int u) { return voc.row_of(u) == r; })) head(row, v) += slot_w;
    if (r == 0) {
      head(row, static_cast<std::size_t>(voc.label_token(model::Emotion::kNeutral))) += 0.5 * slot_w;
    } else {
      head(row, static_cast<std::size_t>(voc.label_token(model::emotion_at(static_cast<std::size_t>(r - 1))))) += slot_w;
    }
  }
  const double bag_w = t.cfg.soft_scale / (std::sqrt(2.0 * kBagDims) * bag_rms);
  const double tex_w = t.cfg.soft_scale / (std::sqrt(2.0 * (L.tex_end - L.tex)) * tex_rms);
  for (int d = L.bag; d < L.tex; ++d) {
    for (std::size_t v = 0; v < Vs; ++v) head(static_cast<std::size_t>(d), v) = bag_w * rng.normal();
  }
  for (int d = L.tex; d < L.tex_end; ++d) {
    for (std::size_t v = 0; v < Vs; ++v) head(static_cast<std::size_t>(d), v) = tex_w * rng.normal();
  }
  bias[Vocab::kBos] = -3.0 * M;
  for (int id = Vocab::kSegmentBase; id < Vocab::kLabelBase; ++id) bias[static_cast<std::size_t>(id)] = -3.0 * M;
  {
    auto w = s.get("lm.head.weight").mutable_data();
    std::copy(head.v.begin(), head.v.end(), w.begin());
    auto b = s.get("lm.head.bias").mutable_data();
    std::copy(bias.begin(), bias.end(), b.begin());
  }
  return t;
}

std::vector<int> teacher_continue(const TeacherLM& teacher, const model::AssembledInput& prompt, int max_new) {
  if (max_new < 2) throw ContractError("teacher_continue: max_new must be at least 2");
  auto out = model::generate(teacher.params, teacher.lm, {}, prompt.embeddings, prompt.mask,
                             static_cast<std::size_t>(max_new - 1));
  if (out.empty() || out.back() != Vocab::kEos) out.push_back(Vocab::kEos);
  return out;
}

}  // namespace emoalign::datagen
