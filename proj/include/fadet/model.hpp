#pragma once

#include <string>
#include <utility>
#include <vector>

#include "fadet/language.hpp"
#include "fadet/protocols.hpp"
#include "fadet/tensor.hpp"
#include "fadet/vision.hpp"

namespace fadet {

struct ModelConfig {
  VitConfig vit;           // spatial encoder dims
  int64_t d_t = 64;        // text embedding width
  int64_t d_vt = 64;       // shared feature space
  int64_t context_length = 6;
  int64_t text_layers = 2;
  int64_t text_heads = 4;
  int64_t clusters = 8;    // compression targets
  double alpha = 0.25;     // high-pass fraction
  double tau_cls = 0.07;   // similarity temperature (frozen)
  double tau_nt = 0.1;     // contrastive temperature
  PromptMode prompt_mode = PromptMode::attack_agnostic;
  VisionToggles vision_toggles;
  int64_t conv_channels = 8;  // conditioner stacks

  /// Desk-scale defaults: 16x16 images, 4x4 patches (n = 16), d_v = 64,
  /// d_t = 64, two encoder layers.
  static ModelConfig toy();
  LanguageConfig language_config() const;
};

/// Both branches plus the parameter registry used by the optimizer and the
/// checkpoint archive. Vision entries are namespaced vision.*, language
/// entries lang.*.
class Model {
 public:
  Model(const ModelConfig& config, uint64_t seed);

  struct TrainForward {
    Tensor features;  // x_f, [d_vt]
    Tensor text;      // routed class text feature, [d_vt]
    PromptClass cls;
  };
  /// Training routing: only the prompt matching the sample's label.
  TrainForward forward_train(const Tensor& image, Label label) const;

  struct EvalForward {
    Tensor features;  // x_f
    Tensor t_live, t_fake;
    Tensor probs;  // [p_live, p_fake]
  };
  /// Evaluation routing: both prompts, plus similarity probabilities.
  EvalForward forward_eval(const Tensor& image) const;

  std::vector<std::pair<std::string, Tensor>> named_params() const;
  std::vector<Tensor> trainable_params() const;
  void zero_grad() const;

  void save(const std::string& path) const;
  /// Loads by name; a dimension mismatch names the offending tensor.
  void load(const std::string& path);

  /// FNV-1a over the raw parameter bytes of entries whose name starts with
  /// `prefix` (empty prefix covers everything).
  uint64_t checksum(const std::string& prefix = "") const;

  VisionBranch& vision() { return vision_; }
  const VisionBranch& vision() const { return vision_; }
  LanguageBranch& language() { return lang_; }
  const LanguageBranch& language() const { return lang_; }
  const ModelConfig& config() const { return cfg_; }

 private:
  ModelConfig cfg_;
  VisionBranch vision_;
  LanguageBranch lang_;
};

}  // namespace fadet
