#include "fadet/language.hpp"

#include <cmath>

namespace fadet {

PromptMode prompt_mode_from_string(const std::string& s) {
  if (s == "attack_agnostic") return PromptMode::attack_agnostic;
  if (s == "coop") return PromptMode::coop;
  if (s == "cocoop") return PromptMode::cocoop;
  throw ContractError("unknown prompt_mode: " + s);
}

const char* to_string(PromptMode mode) {
  switch (mode) {
    case PromptMode::attack_agnostic: return "attack_agnostic";
    case PromptMode::coop: return "coop";
    default: return "cocoop";
  }
}

BiasGenerator BiasGenerator::init(PromptClass cls, int64_t d_t, Rng& rng) {
  BiasGenerator gen;
  gen.class_id = cls;
  int64_t hidden = std::max<int64_t>(d_t / 4, 1);
  gen.in = Linear::init(d_t, hidden, rng);
  gen.out = Linear::init(hidden, d_t, rng);
  return gen;
}

Tensor BiasGenerator::operator()(const Tensor& conditioner) const {
  Tensor x = reshape(conditioner, {1, conditioner.numel()});
  Tensor y = out(relu(in(x)));
  return reshape(y, {y.numel()});
}

void BiasGenerator::collect(std::vector<std::pair<std::string, Tensor>>& out_list,
                            const std::string& prefix) const {
  in.collect(out_list, prefix + ".in");
  out.collect(out_list, prefix + ".out");
}

FusedConditioner FusedConditioner::init(int64_t image_channels,
                                        int64_t conv_channels, int64_t d_t,
                                        Rng& rng) {
  FusedConditioner c;
  double s1 = std::sqrt(2.0 / static_cast<double>(9 * image_channels));
  double s2 = std::sqrt(2.0 / static_cast<double>(9 * conv_channels));
  auto conv1 = [&] {
    return rng.gaussian_tensor({conv_channels, 3, 3, image_channels}, s1);
  };
  auto conv2 = [&] {
    return rng.gaussian_tensor({conv_channels, 3, 3, conv_channels}, s2);
  };
  c.psi1_w1 = conv1();
  c.psi1_b1 = Tensor::full({conv_channels}, 0.01, true);
  c.psi1_w2 = conv2();
  c.psi1_b2 = Tensor::full({conv_channels}, 0.01, true);
  c.psi2_w1 = conv1();
  c.psi2_b1 = Tensor::full({conv_channels}, 0.01, true);
  c.psi2_w2 = conv2();
  c.psi2_b2 = Tensor::full({conv_channels}, 0.01, true);
  c.pool_proj = Linear::init(conv_channels, d_t, rng,
                             1.0 / std::sqrt(static_cast<double>(conv_channels)));
  c.beta = Tensor::zeros({}, true);  // sigmoid(0) = 0.5
  return c;
}

void FusedConditioner::collect(std::vector<std::pair<std::string, Tensor>>& out,
                               const std::string& prefix) const {
  out.emplace_back(prefix + ".psi1_w1", psi1_w1);
  out.emplace_back(prefix + ".psi1_b1", psi1_b1);
  out.emplace_back(prefix + ".psi1_w2", psi1_w2);
  out.emplace_back(prefix + ".psi1_b2", psi1_b2);
  out.emplace_back(prefix + ".psi2_w1", psi2_w1);
  out.emplace_back(prefix + ".psi2_b1", psi2_b1);
  out.emplace_back(prefix + ".psi2_w2", psi2_w2);
  out.emplace_back(prefix + ".psi2_b2", psi2_b2);
  pool_proj.collect(out, prefix + ".pool_proj");
  out.emplace_back(prefix + ".beta", beta);
}

Tensor fuse_language_inputs(const Tensor& image, const Tensor& freq_image,
                            const FusedConditioner& cond) {
  Tensor spatial = conv2d(relu(conv2d(image, cond.psi1_w1, cond.psi1_b1)),
                          cond.psi1_w2, cond.psi1_b2);
  Tensor spectralized =
      conv2d(relu(conv2d(freq_image, cond.psi2_w1, cond.psi2_b1)),
             cond.psi2_w2, cond.psi2_b2);
  if (spatial.shape() != spectralized.shape()) {
    throw ShapeError("conditioner stacks disagree: " +
                     shape_str(spatial.shape()) + " vs " +
                     shape_str(spectralized.shape()));
  }
  Tensor gate = sigmoid(cond.beta);
  Tensor keep = sub(Tensor::scalar(1.0), gate);
  Tensor mixed = add(mul(spatial, gate), mul(spectralized, keep));
  Tensor pooled = mean(mean(mixed, 0, false), 0, false);  // [channels]
  Tensor projected = cond.pool_proj(reshape(pooled, {1, pooled.numel()}));
  return reshape(projected, {projected.numel()});
}

TextEncoder::TextEncoder(int64_t d_t, int64_t d_vt, int64_t n_layers,
                         int64_t n_heads, Rng& rng)
    : d_t_(d_t), n_heads_(n_heads) {
  pos_embed_ = rng.gaussian_tensor({kPromptLength, d_t}, 0.02);
  blocks_.resize(n_layers);
  for (auto& block : blocks_) {
    block.ln1 = LayerNormParams::init(d_t);
    block.ln2 = LayerNormParams::init(d_t);
    block.attn = AttentionParams::init(d_t, rng);
    block.mlp_in = Linear::init(d_t, 4 * d_t, rng);
    block.mlp_out = Linear::init(4 * d_t, d_t, rng);
  }
  final_ln_ = LayerNormParams::init(d_t);
  proj_ = Linear::init(d_t, d_vt, rng, 1.0 / std::sqrt(static_cast<double>(d_t)));

  // the whole encoder stays frozen
  std::vector<std::pair<std::string, Tensor>> params;
  collect(params, "text");
  for (auto& [name, tensor] : params) tensor.set_requires_grad(false);
}

Tensor TextEncoder::encode(const PromptSequence& prompt) const {
  if (prompt.tokens.dim(0) != kPromptLength || prompt.tokens.dim(1) != d_t_) {
    throw ShapeError("prompt tokens " + shape_str(prompt.tokens.shape()) +
                     " do not fit the encoder");
  }
  Tensor x = add(prompt.tokens, pos_embed_);
  std::vector<bool> key_valid(kPromptLength, false);
  for (int64_t i = 0; i <= prompt.eos_index; ++i) key_valid[i] = true;
  for (const auto& block : blocks_) {
    Tensor h = block.ln1(x);
    x = add(x, attention(block.attn, h, h, n_heads_, nullptr, true, &key_valid));
    Tensor h2 = block.ln2(x);
    x = add(x, block.mlp_out(gelu(block.mlp_in(h2))));
  }
  Tensor final = final_ln_(x);
  Tensor eos_feature = slice(final, {prompt.eos_index, 0}, {1, d_t_});
  Tensor projected = proj_(eos_feature);
  return reshape(projected, {projected.numel()});
}

void TextEncoder::collect(std::vector<std::pair<std::string, Tensor>>& out,
                          const std::string& prefix) const {
  out.emplace_back(prefix + ".pos_embed", pos_embed_);
  for (size_t i = 0; i < blocks_.size(); ++i) {
    std::string bp = prefix + ".blocks." + std::to_string(i);
    blocks_[i].ln1.collect(out, bp + ".ln1");
    blocks_[i].attn.collect(out, bp + ".attn");
    blocks_[i].ln2.collect(out, bp + ".ln2");
    blocks_[i].mlp_in.collect(out, bp + ".mlp_in");
    blocks_[i].mlp_out.collect(out, bp + ".mlp_out");
  }
  final_ln_.collect(out, prefix + ".final_ln");
  proj_.collect(out, prefix + ".proj");
}

LanguageBranch::LanguageBranch(const LanguageConfig& config, Rng& rng)
    : cfg_(config) {
  if (cfg_.context_length < 1 ||
      cfg_.context_length + 3 > kPromptLength) {
    throw ContractError("context_length " + std::to_string(cfg_.context_length) +
                        " does not fit the 77-token layout");
  }
  ffg_ = FfgParams::init(cfg_.image_channels, rng);
  cond_ = FusedConditioner::init(cfg_.image_channels, cfg_.conv_channels,
                                 cfg_.d_t, rng);

  // context initialization follows the conditional-prompt convention:
  // zero-mean gaussian, std 0.02
  ctx_live_.class_id = PromptClass::live;
  ctx_live_.vectors = rng.gaussian_tensor({cfg_.context_length, cfg_.d_t}, 0.02);
  ctx_live_.class_token_embedding =
      rng.gaussian_tensor({cfg_.d_t}, 0.02, false);
  ctx_fake_.class_id = PromptClass::fake;
  if (cfg_.mode == PromptMode::attack_agnostic) {
    ctx_fake_.vectors = rng.gaussian_tensor({cfg_.context_length, cfg_.d_t}, 0.02);
  } else {
    ctx_fake_.vectors = ctx_live_.vectors;  // shared context
  }
  ctx_fake_.class_token_embedding =
      rng.gaussian_tensor({cfg_.d_t}, 0.02, false);

  bias_live_ = BiasGenerator::init(PromptClass::live, cfg_.d_t, rng);
  if (cfg_.mode == PromptMode::attack_agnostic) {
    bias_fake_ = BiasGenerator::init(PromptClass::fake, cfg_.d_t, rng);
  } else {
    bias_fake_ = bias_live_;  // cocoop shares one generator; coop ignores it
  }

  sos_ = rng.gaussian_tensor({cfg_.d_t}, 0.02, false);
  eos_ = rng.gaussian_tensor({cfg_.d_t}, 0.02, false);
  pad_ = rng.gaussian_tensor({cfg_.d_t}, 0.02, false);
  encoder_ = TextEncoder(cfg_.d_t, cfg_.d_vt, cfg_.text_layers,
                         cfg_.text_heads, rng);
}

Tensor LanguageBranch::freq_features(const Tensor& image) const {
  return ffg_forward(image, cfg_.alpha, ffg_);
}

Tensor LanguageBranch::conditioner(const Tensor& image) const {
  return fuse_language_inputs(image, freq_features(image), cond_);
}

Tensor LanguageBranch::bias_for(PromptClass cls, const Tensor& fused_input) const {
  if (cfg_.mode == PromptMode::coop) {
    return Tensor::zeros({cfg_.d_t});
  }
  const BiasGenerator& gen =
      cls == PromptClass::live ? bias_live_ : bias_fake_;
  return gen(fused_input);
}

PromptSequence LanguageBranch::build_prompt(PromptClass cls,
                                            const Tensor& bias) const {
  const GenericContext& ctx = context(cls);
  int64_t m = cfg_.context_length;
  Tensor shifted = add(ctx.vectors, reshape(bias, {1, cfg_.d_t}));
  std::vector<Tensor> parts;
  parts.push_back(reshape(sos_, {1, cfg_.d_t}));
  parts.push_back(shifted);
  parts.push_back(reshape(ctx.class_token_embedding, {1, cfg_.d_t}));
  parts.push_back(reshape(eos_, {1, cfg_.d_t}));
  int64_t pad_count = kPromptLength - (m + 3);
  for (int64_t i = 0; i < pad_count; ++i) {
    parts.push_back(reshape(pad_, {1, cfg_.d_t}));
  }
  PromptSequence prompt;
  prompt.tokens = concat(parts, 0);
  prompt.eos_index = m + 2;
  prompt.context_length = m;
  if (cls == PromptClass::live) {
    live_built_++;
  } else {
    fake_built_++;
  }
  return prompt;
}

Tensor LanguageBranch::text_feature(PromptClass cls,
                                    const Tensor& fused_input) const {
  Tensor bias = bias_for(cls, fused_input);
  PromptSequence prompt = build_prompt(cls, bias);
  return encoder_.encode(prompt);
}

const GenericContext& LanguageBranch::context(PromptClass cls) const {
  return cls == PromptClass::live ? ctx_live_ : ctx_fake_;
}

BiasGenerator& LanguageBranch::bias_generator(PromptClass cls) {
  return cls == PromptClass::live ? bias_live_ : bias_fake_;
}

int64_t LanguageBranch::prompts_built(PromptClass cls) const {
  return cls == PromptClass::live ? live_built_ : fake_built_;
}

void LanguageBranch::reset_prompt_counters() const {
  live_built_ = 0;
  fake_built_ = 0;
}

void LanguageBranch::collect(std::vector<std::pair<std::string, Tensor>>& out,
                             const std::string& prefix) const {
  for (auto& [name, tensor] : ffg_.named_params(prefix + ".ffg")) {
    out.emplace_back(name, tensor);
  }
  cond_.collect(out, prefix + ".cond");
  out.emplace_back(prefix + ".ctx.live", ctx_live_.vectors);
  if (cfg_.mode == PromptMode::attack_agnostic) {
    out.emplace_back(prefix + ".ctx.fake", ctx_fake_.vectors);
  }
  out.emplace_back(prefix + ".vocab.class_live", ctx_live_.class_token_embedding);
  out.emplace_back(prefix + ".vocab.class_fake", ctx_fake_.class_token_embedding);
  bias_live_.collect(out, prefix + ".bias.live");
  if (cfg_.mode == PromptMode::attack_agnostic) {
    bias_fake_.collect(out, prefix + ".bias.fake");
  }
  out.emplace_back(prefix + ".vocab.sos", sos_);
  out.emplace_back(prefix + ".vocab.eos", eos_);
  out.emplace_back(prefix + ".vocab.pad", pad_);
  encoder_.collect(out, prefix + ".text");
}

Tensor l2_normalize(const Tensor& v) {
  Tensor norm = sqrt(sum(mul(v, v)));
  return div(v, norm);
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
  return sum(mul(l2_normalize(a), l2_normalize(b)));
}

Tensor classify(const Tensor& x_f, const Tensor& t_live, const Tensor& t_fake,
                double tau) {
  if (tau <= 0.0) throw ContractError("temperature must be positive");
  auto norm_of = [](const Tensor& v) {
    double s = 0.0;
    for (double x : v.data()) s += x * x;
    return std::sqrt(s);
  };
  if (norm_of(x_f) == 0.0 || norm_of(t_live) == 0.0 || norm_of(t_fake) == 0.0) {
    throw ContractError("cosine similarity undefined for zero-norm features");
  }
  Tensor sims = concat({reshape(cosine_similarity(x_f, t_live), {1}),
                        reshape(cosine_similarity(x_f, t_fake), {1})},
                       0);
  return softmax(mul_scalar(sims, 1.0 / tau), 0);
}

}  // namespace fadet
