#include "fadet/model.hpp"

#include "fadet/checkpoint.hpp"

namespace fadet {

ModelConfig ModelConfig::toy() {
  ModelConfig cfg;
  cfg.vit.image_size = 16;
  cfg.vit.patch_size = 4;  // n = 16 patches
  cfg.vit.channels = 1;
  cfg.vit.d_v = 64;
  cfg.vit.n_layers = 2;
  cfg.vit.n_heads = 4;
  return cfg;
}

LanguageConfig ModelConfig::language_config() const {
  LanguageConfig lang;
  lang.d_t = d_t;
  lang.d_vt = d_vt;
  lang.context_length = context_length;
  lang.text_layers = text_layers;
  lang.text_heads = text_heads;
  lang.image_channels = vit.channels;
  lang.conv_channels = conv_channels;
  lang.alpha = alpha;
  lang.mode = prompt_mode;
  return lang;
}

Model::Model(const ModelConfig& config, uint64_t seed) : cfg_(config) {
  Rng rng(seed);
  vision_ = VisionBranch(cfg_.vit, cfg_.clusters, cfg_.d_vt, cfg_.alpha,
                         cfg_.vision_toggles, rng);
  lang_ = LanguageBranch(cfg_.language_config(), rng);
}

Model::TrainForward Model::forward_train(const Tensor& image,
                                         Label label) const {
  TrainForward out;
  out.features = vision_.forward(image).features;
  out.cls = label == Label::live ? PromptClass::live : PromptClass::fake;
  Tensor conditioner = lang_.conditioner(image);
  out.text = lang_.text_feature(out.cls, conditioner);
  return out;
}

Model::EvalForward Model::forward_eval(const Tensor& image) const {
  EvalForward out;
  out.features = vision_.forward(image).features;
  Tensor conditioner = lang_.conditioner(image);
  out.t_live = lang_.text_feature(PromptClass::live, conditioner);
  out.t_fake = lang_.text_feature(PromptClass::fake, conditioner);
  out.probs = classify(out.features, out.t_live, out.t_fake, cfg_.tau_cls);
  return out;
}

std::vector<std::pair<std::string, Tensor>> Model::named_params() const {
  std::vector<std::pair<std::string, Tensor>> out;
  vision_.collect(out, "vision");
  lang_.collect(out, "lang");
  return out;
}

std::vector<Tensor> Model::trainable_params() const {
  std::vector<Tensor> out;
  for (auto& [name, tensor] : named_params()) {
    if (tensor.requires_grad()) out.push_back(tensor);
  }
  return out;
}

void Model::zero_grad() const {
  for (auto& [name, tensor] : named_params()) {
    Tensor t = tensor;
    t.zero_grad();
  }
}

void Model::save(const std::string& path) const {
  save_checkpoint(path, named_params());
}

void Model::load(const std::string& path) {
  auto archive = load_checkpoint(path);
  auto params = named_params();
  for (auto& [name, tensor] : params) {
    auto it = archive.find(name);
    if (it == archive.end()) {
      throw CheckpointError("checkpoint is missing tensor '" + name + "'");
    }
    if (it->second.shape() != tensor.shape()) {
      throw CheckpointError("checkpoint tensor '" + name + "' has shape " +
                            shape_str(it->second.shape()) +
                            ", model expects " + shape_str(tensor.shape()));
    }
    Tensor t = tensor;
    t.mutable_data() = it->second.data();
  }
  if (archive.size() != params.size()) {
    for (const auto& [name, tensor] : archive) {
      bool known = false;
      for (const auto& [pname, p] : params) known = known || pname == name;
      if (!known) {
        throw CheckpointError("checkpoint contains unknown tensor '" + name + "'");
      }
    }
  }
}

uint64_t Model::checksum(const std::string& prefix) const {
  uint64_t hash = 1469598103934665603ULL;
  auto mix = [&hash](const void* bytes, size_t n) {
    const unsigned char* p = static_cast<const unsigned char*>(bytes);
    for (size_t i = 0; i < n; ++i) {
      hash ^= p[i];
      hash *= 1099511628211ULL;
    }
  };
  for (const auto& [name, tensor] : named_params()) {
    if (name.rfind(prefix, 0) != 0) continue;
    mix(name.data(), name.size());
    mix(tensor.data().data(), tensor.data().size() * sizeof(double));
  }
  return hash;
}

}  // namespace fadet
