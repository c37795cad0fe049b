#include "emoalign/model/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "emoalign/errors.hpp"
#include "emoalign/numerics/ops.hpp"
#include "emoalign/numerics/rng.hpp"

namespace emoalign::model {

namespace ops = numerics::ops;
using numerics::Rng;
using numerics::Shape;

namespace {

Tensor gaussian(Rng& rng, Shape shape, Real stddev) {
  std::vector<Real> v(numerics::shape_numel(shape));
  for (auto& x : v) x = stddev * rng.normal();
  return Tensor::from(std::move(shape), std::move(v));
}

void add_linear(ParameterStore& s, Rng& rng, const std::string& name, int in, int out, bool zero = false) {
  const auto i = static_cast<std::size_t>(in), o = static_cast<std::size_t>(out);
  s.add(name + ".weight", zero ? Tensor::zeros({i, o}) : gaussian(rng, {i, o}, 1.0 / std::sqrt(in)));
  s.add(name + ".bias", Tensor::zeros({o}));
}

void add_conv(ParameterStore& s, Rng& rng, const std::string& name, int cin, int cout, int kernel, Real gain = 1.0) {
  const auto i = static_cast<std::size_t>(cin), o = static_cast<std::size_t>(cout), k = static_cast<std::size_t>(kernel);
  s.add(name + ".weight", gaussian(rng, {o, i, k}, gain / std::sqrt(cin * kernel)));
  s.add(name + ".bias", Tensor::zeros({o}));
}

void add_norm(ParameterStore& s, const std::string& name, int dim) {
  s.add(name + ".gamma", Tensor::full({static_cast<std::size_t>(dim)}, 1.0));
  s.add(name + ".beta", Tensor::zeros({static_cast<std::size_t>(dim)}));
}

void add_block(ParameterStore& s, Rng& rng, const std::string& p, int dim, int mlp_mult) {
  add_norm(s, p + ".ln1", dim);
  for (const char* w : {"wq", "wk", "wv", "wo"}) add_linear(s, rng, p + ".attn." + w, dim, dim);
  add_norm(s, p + ".ln2", dim);
  add_linear(s, rng, p + ".mlp.fc1", dim, dim * mlp_mult);
  add_linear(s, rng, p + ".mlp.fc2", dim * mlp_mult, dim);
}

Tensor linear(const ParameterStore& s, const std::string& name, const Tensor& x) {
  return ops::linear(x, s.get(name + ".weight"), s.get(name + ".bias"));
}

Tensor norm(const ParameterStore& s, const std::string& name, const Tensor& x) {
  return ops::layer_norm(x, s.get(name + ".gamma"), s.get(name + ".beta"));
}

struct LoraContext {
  const PLoRAConfig* cfg = nullptr;
  const std::vector<bool>* select = nullptr;  // null when no row is speech
};

/// Attention projection with an optional low-rank delta on selected rows.
Tensor project(const ParameterStore& s, const std::string& block, const char* which, const Tensor& x,
               const LoraContext& lora) {
  Tensor base = linear(s, block + ".attn.w" + which, x);
  if (lora.cfg == nullptr || lora.select == nullptr) return base;
  const std::string prefix = block + ".attn.lora." + which;
  if (!s.contains(prefix + ".down")) return base;
  if (std::find(lora.cfg->targets.begin(), lora.cfg->targets.end(), which) == lora.cfg->targets.end()) return base;
  Tensor delta = ops::matmul(ops::matmul(x, s.get(prefix + ".down")), s.get(prefix + ".up"));
  delta = ops::scale(delta, lora.cfg->scaling());
  return ops::masked_add(base, delta, *lora.select);
}

Tensor block_forward(const ParameterStore& s, const std::string& p, const Tensor& h, int heads, bool causal,
                     const LoraContext& lora) {
  Tensor a = norm(s, p + ".ln1", h);
  Tensor q = project(s, p, "q", a, lora);
  Tensor k = project(s, p, "k", a, lora);
  Tensor v = project(s, p, "v", a, lora);
  Tensor att = ops::attention(q, k, v, static_cast<std::size_t>(heads), causal);
  Tensor out = ops::add(h, project(s, p, "o", att, lora));
  Tensor m = norm(s, p + ".ln2", out);
  return ops::add(out, linear(s, p + ".mlp.fc2", ops::gelu(linear(s, p + ".mlp.fc1", m))));
}

}  // namespace

std::vector<bool> speech_rows(const ModalityMask& mask) {
  std::vector<bool> out(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) out[i] = mask[i] == Modality::kSpeech;
  return out;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("model config: " + what); };
  if (encoder.audio_dim < 1 || encoder.dim < 1 || encoder.heads < 1 || encoder.dim % encoder.heads != 0) {
    fail("encoder width must be divisible by its head count");
  }
  if (encoder.conv_kernel < 1 || encoder.conv_kernel % 2 == 0) fail("encoder conv kernel must be odd");
  if (adapter.n_conv_layers < 1 || adapter.kernel < 1 || adapter.stride < 1 || adapter.padding < 0) {
    fail("adapter convolution parameters must be positive");
  }
  if (adapter.output_dim != lm.dim) fail("adapter output_dim must equal lm.dim");
  if (adapter.bottleneck_dim < 1 || adapter.hidden_channels < 1) fail("adapter widths must be positive");
  if (lm.dim % lm.heads != 0) fail("lm.dim must be divisible by lm.heads");
  if (lm.vocab_size < 2 || lm.max_positions < 1 || lm.blocks < 1) fail("lm sizes must be positive");
  if (lora.rank < 1) fail("lora.rank must be at least 1");
  for (const auto& t : lora.targets) {
    if (t != "q" && t != "k" && t != "v" && t != "o") fail("unknown lora target '" + t + "'");
  }
}

void init_lm_params(ParameterStore& s, const LmConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  const auto v = static_cast<std::size_t>(cfg.vocab_size), d = static_cast<std::size_t>(cfg.dim);
  s.add("lm.tok_emb", gaussian(rng, {v, d}, 1.0));
  s.add("lm.pos_emb", gaussian(rng, {static_cast<std::size_t>(cfg.max_positions), d}, 0.1));
  for (int b = 0; b < cfg.blocks; ++b) add_block(s, rng, "lm.blocks." + std::to_string(b), cfg.dim, cfg.mlp_mult);
  add_norm(s, "lm.ln_f", cfg.dim);
  add_linear(s, rng, "lm.head", cfg.dim, cfg.vocab_size);
}

void init_speech_params(ParameterStore& s, const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  const auto& e = cfg.encoder;
  add_linear(s, rng, "encoder.in_proj", e.audio_dim, e.dim);
  for (int i = 0; i < e.conv_layers; ++i) add_conv(s, rng, "encoder.conv." + std::to_string(i), e.dim, e.dim, e.conv_kernel);
  for (int b = 0; b < e.blocks; ++b) add_block(s, rng, "encoder.blocks." + std::to_string(b), e.dim, e.mlp_mult);

  const auto& a = cfg.adapter;
  for (int i = 0; i < a.n_conv_layers; ++i) {
    const int cin = i == 0 ? e.dim : a.hidden_channels;
    const bool last = i + 1 == a.n_conv_layers;
    // Last layer starts at 0.1 gain.
    add_conv(s, rng, "adapter.conv." + std::to_string(i), cin, last ? a.output_dim : a.hidden_channels, a.kernel,
             last ? 0.1 : 1.0);
  }
  add_linear(s, rng, "adapter.bottleneck.down", a.output_dim, a.bottleneck_dim);
  add_linear(s, rng, "adapter.bottleneck.up", a.bottleneck_dim, a.output_dim, /*zero=*/true);

  add_linear(s, rng, "ser_head", a.output_dim, static_cast<int>(kNumEmotions));

  const auto d = static_cast<std::size_t>(cfg.lm.dim), r = static_cast<std::size_t>(cfg.lora.rank);
  for (int b = 0; b < cfg.lm.blocks; ++b) {
    for (const auto& t : cfg.lora.targets) {
      const std::string p = "lm.blocks." + std::to_string(b) + ".attn.lora." + t;
      s.add(p + ".down", gaussian(rng, {d, r}, 1.0 / std::sqrt(static_cast<Real>(d))));
      s.add(p + ".up", Tensor::zeros({r, d}));
    }
  }
}

ParameterStore init_model(const ModelConfig& cfg, std::uint64_t seed, const ParameterStore* lm_base) {
  ParameterStore s;
  if (lm_base != nullptr) {
    for (const auto& [name, t] : lm_base->entries()) {
      if (name.rfind("lm.", 0) == 0 && name.find(".lora.") == std::string::npos) s.add(name, t.clone(false));
    }
  } else {
    init_lm_params(s, cfg.lm, numerics::derive_seed(seed, 1));
  }
  init_speech_params(s, cfg, numerics::derive_seed(seed, 2));
  return s;
}

Tensor encode_frames(const ParameterStore& s, const ModelConfig& cfg, const Tensor& frames) {
  if (!frames.defined() || frames.rank() != 2 || frames.dim(0) == 0) {
    throw ContractError("encode_speech: empty speech input");
  }
  const auto& e = cfg.encoder;
  if (frames.dim(1) != static_cast<std::size_t>(e.audio_dim)) {
    throw DimensionError("encode_speech: frames have width " + std::to_string(frames.dim(1)) + ", expected " +
                         std::to_string(e.audio_dim));
  }
  Tensor h = linear(s, "encoder.in_proj", frames);
  const auto pad = static_cast<std::size_t>(e.conv_kernel / 2);
  for (int i = 0; i < e.conv_layers; ++i) {
    const std::string p = "encoder.conv." + std::to_string(i);
    Tensor c = ops::conv1d(ops::transpose(h), s.get(p + ".weight"), s.get(p + ".bias"), 1, pad);
    h = ops::add(h, ops::transpose(ops::gelu(c)));
  }
  for (int b = 0; b < e.blocks; ++b) {
    h = block_forward(s, "encoder.blocks." + std::to_string(b), h, e.heads, /*causal=*/false, {});
  }
  return h;
}

Tensor encode_speech(const ParameterStore& s, const ModelConfig& cfg, const SpeechFeatureSequence& speech) {
  return encode_frames(s, cfg, speech.frames);
}

std::size_t adapter_output_length(std::size_t length, const AdapterConfig& cfg) {
  for (int i = 0; i < cfg.n_conv_layers; ++i) {
    length = ops::conv1d_out_length(length, static_cast<std::size_t>(cfg.kernel), static_cast<std::size_t>(cfg.stride),
                                    static_cast<std::size_t>(cfg.padding));
  }
  return length;
}

Tensor adapt(const ParameterStore& s, const ModelConfig& cfg, const Tensor& hidden) {
  const auto& a = cfg.adapter;
  Tensor x = ops::transpose(hidden);
  for (int i = 0; i < a.n_conv_layers; ++i) {
    const std::string p = "adapter.conv." + std::to_string(i);
    x = ops::conv1d(x, s.get(p + ".weight"), s.get(p + ".bias"), static_cast<std::size_t>(a.stride),
                    static_cast<std::size_t>(a.padding));
    if (i + 1 < a.n_conv_layers) x = ops::relu(x);
  }
  Tensor h = ops::transpose(x);
  Tensor b = linear(s, "adapter.bottleneck.up", ops::relu(linear(s, "adapter.bottleneck.down", h)));
  return ops::add(h, b);
}

Tensor embed_tokens(const ParameterStore& s, const std::vector<int>& ids) { return ops::embedding(s.get("lm.tok_emb"), ids); }

Tensor lm_hidden(const ParameterStore& s, const LmConfig& cfg, const PLoRAConfig& lora, const Tensor& embeddings,
                 const ModalityMask& mask) {
  const std::size_t n = embeddings.dim(0);
  if (mask.size() != n) {
    throw DimensionError("lm_forward: mask has " + std::to_string(mask.size()) + " entries for " + std::to_string(n) +
                         " positions");
  }
  if (n > static_cast<std::size_t>(cfg.max_positions)) {
    throw DimensionError("lm_forward: " + std::to_string(n) + " positions exceed max_positions " +
                         std::to_string(cfg.max_positions));
  }
  const std::vector<bool> select = speech_rows(mask);
  const bool any_speech = std::find(select.begin(), select.end(), true) != select.end();
  LoraContext ctx{&lora, any_speech ? &select : nullptr};

  Tensor h = ops::add(embeddings, ops::slice_rows(s.get("lm.pos_emb"), 0, n));
  for (int b = 0; b < cfg.blocks; ++b) h = block_forward(s, "lm.blocks." + std::to_string(b), h, cfg.heads, true, ctx);
  return h;
}

Tensor lm_forward(const ParameterStore& s, const LmConfig& cfg, const PLoRAConfig& lora, const Tensor& embeddings,
                  const ModalityMask& mask) {
  return linear(s, "lm.head", norm(s, "lm.ln_f", lm_hidden(s, cfg, lora, embeddings, mask)));
}

Tensor emotion_logits(const ParameterStore& s, const Tensor& adapter_out) {
  if (adapter_out.rank() != 2 || adapter_out.dim(0) == 0) throw ContractError("classify_emotion: empty input");
  return linear(s, "ser_head", ops::mean_rows(adapter_out));
}

std::array<Real, kNumEmotions> classify_emotion(const ParameterStore& s, const Tensor& adapter_out) {
  Tensor p = ops::softmax(emotion_logits(s, adapter_out));
  std::array<Real, kNumEmotions> out{};
  std::copy(p.data().begin(), p.data().end(), out.begin());
  return out;
}

}  // namespace emoalign::model
