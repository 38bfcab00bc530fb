#pragma once

#include <string>
#include <utility>
#include <vector>

#include "fadet/nn.hpp"
#include "fadet/spectral.hpp"
#include "fadet/tensor.hpp"

namespace fadet {

enum class PromptClass { live = 0, fake = 1 };
enum class PromptMode { attack_agnostic, coop, cocoop };

PromptMode prompt_mode_from_string(const std::string& s);
const char* to_string(PromptMode mode);

constexpr int64_t kPromptLength = 77;

/// Learnable generic context for one class: M context vectors plus the
/// class-token embedding (vocabulary side, frozen).
struct GenericContext {
  PromptClass class_id = PromptClass::live;
  Tensor vectors;                // [M, d_t], trainable
  Tensor class_token_embedding;  // [d_t], frozen
};

/// Conditional bias generator: bottleneck MLP d_t -> d_t/4 -> d_t.
struct BiasGenerator {
  PromptClass class_id = PromptClass::live;
  Linear in, out;

  static BiasGenerator init(PromptClass cls, int64_t d_t, Rng& rng);
  Tensor operator()(const Tensor& conditioner) const;  // [d_t] -> [d_t]
  void collect(std::vector<std::pair<std::string, Tensor>>& out,
               const std::string& prefix) const;
};

/// Fixed-layout token sequence:
/// [SOS, v_1..v_M (shifted), class, EOS, PAD...], eos at M + 2.
struct PromptSequence {
  Tensor tokens;  // [77, d_t]
  int64_t eos_index = 0;
  int64_t context_length = 0;
};

/// Spatial/frequency conditioner for the language branch: two small conv
/// stacks mixed under sigmoid(beta), pooled and projected to d_t.
struct FusedConditioner {
  Tensor psi1_w1, psi1_b1, psi1_w2, psi1_b2;
  Tensor psi2_w1, psi2_b1, psi2_w2, psi2_b2;
  Linear pool_proj;  // conv channels -> d_t
  Tensor beta;       // raw scalar, squashed at use sites

  static FusedConditioner init(int64_t image_channels, int64_t conv_channels,
                               int64_t d_t, Rng& rng);
  void collect(std::vector<std::pair<std::string, Tensor>>& out,
               const std::string& prefix) const;
};

/// I_f = sigmoid(beta) * psi1(image) + (1 - sigmoid(beta)) * psi2(freq),
/// pooled over the pixel grid and projected to a d_t vector.
Tensor fuse_language_inputs(const Tensor& image, const Tensor& freq_image,
                            const FusedConditioner& cond);

/// Causal tiny transformer over the 77 prompt positions, parameters frozen;
/// reads the feature at the EOS slot and projects it to d_vt. Gradients flow
/// through activations but never into the encoder parameters.
class TextEncoder {
 public:
  TextEncoder() = default;
  TextEncoder(int64_t d_t, int64_t d_vt, int64_t n_layers, int64_t n_heads,
              Rng& rng);

  Tensor encode(const PromptSequence& prompt) const;  // -> [d_vt]
  void collect(std::vector<std::pair<std::string, Tensor>>& out,
               const std::string& prefix) const;

 private:
  struct Block {
    LayerNormParams ln1, ln2;
    AttentionParams attn;
    Linear mlp_in, mlp_out;
  };
  int64_t d_t_ = 0;
  int64_t n_heads_ = 0;
  Tensor pos_embed_;  // [77, d_t]
  std::vector<Block> blocks_;
  LayerNormParams final_ln_;
  Linear proj_;  // d_t -> d_vt
};

struct LanguageConfig {
  int64_t d_t = 64;
  int64_t d_vt = 64;
  int64_t context_length = 6;
  int64_t text_layers = 2;
  int64_t text_heads = 4;
  int64_t image_channels = 1;
  int64_t conv_channels = 8;
  double alpha = 0.25;
  PromptMode mode = PromptMode::attack_agnostic;
};

/// Attack-agnostic prompt branch: generic live/fake contexts shifted by
/// image-conditioned biases, encoded by the frozen text encoder.
class LanguageBranch {
 public:
  LanguageBranch() = default;
  LanguageBranch(const LanguageConfig& config, Rng& rng);

  /// Frequency features of the raw image under this branch's generator.
  Tensor freq_features(const Tensor& image) const;
  /// Conditioning vector I_f for one image (computes freq features itself).
  Tensor conditioner(const Tensor& image) const;

  Tensor bias_for(PromptClass cls, const Tensor& fused_input) const;
  PromptSequence build_prompt(PromptClass cls, const Tensor& bias) const;

  /// Full path: conditioner -> bias -> prompt -> frozen encoder. [d_vt]
  Tensor text_feature(PromptClass cls, const Tensor& fused_input) const;

  const GenericContext& context(PromptClass cls) const;
  const LanguageConfig& config() const { return cfg_; }
  const FusedConditioner& fused_conditioner() const { return cond_; }
  BiasGenerator& bias_generator(PromptClass cls);

  /// Prompt-construction counters back the routing invariant checks.
  int64_t prompts_built(PromptClass cls) const;
  void reset_prompt_counters() const;

  void collect(std::vector<std::pair<std::string, Tensor>>& out,
               const std::string& prefix) const;

 private:
  LanguageConfig cfg_;
  FfgParams ffg_;  // language-side frequency generator
  FusedConditioner cond_;
  GenericContext ctx_live_, ctx_fake_;  // aliased in shared-context modes
  BiasGenerator bias_live_, bias_fake_;
  Tensor sos_, eos_, pad_;  // vocabulary embeddings, frozen
  TextEncoder encoder_;
  mutable int64_t live_built_ = 0;
  mutable int64_t fake_built_ = 0;
};

/// Two-way similarity classification: softmax over cosine similarities
/// scaled by 1/tau. Returns [p_live, p_fake].
Tensor classify(const Tensor& x_f, const Tensor& t_live, const Tensor& t_fake,
                double tau);

Tensor l2_normalize(const Tensor& v);
Tensor cosine_similarity(const Tensor& a, const Tensor& b);  // scalar

}  // namespace fadet
