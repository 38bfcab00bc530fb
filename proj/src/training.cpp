#include "fadet/training.hpp"

#include <cmath>

namespace fadet {

void Batch::validate() const {
  if (images.size() != labels.size() || images.size() != attack_types.size()) {
    throw ContractError("batch field lengths disagree");
  }
  for (size_t i = 0; i < labels.size(); ++i) {
    bool live = labels[i] == Label::live;
    bool none = attack_types[i] == AttackType::none;
    if (live != none) {
      throw ContractError("batch sample " + std::to_string(i) +
                          " violates the label/attack_type invariant");
    }
  }
}

Tensor nt_xent(const std::vector<Tensor>& text_features,
               const std::vector<Label>& labels, const Tensor& proto_live,
               const Tensor& proto_fake, double tau) {
  if (tau <= 0.0) throw ContractError("temperature must be positive");
  if (text_features.empty() || text_features.size() != labels.size()) {
    throw ContractError("nt_xent needs one label per feature");
  }
  Tensor live_n = l2_normalize(proto_live);
  Tensor fake_n = l2_normalize(proto_fake);
  Tensor total = Tensor::scalar(0.0);
  for (size_t i = 0; i < text_features.size(); ++i) {
    Tensor t_i = l2_normalize(text_features[i]);
    Tensor sim_live = sum(mul(live_n, t_i));
    Tensor sim_fake = sum(mul(fake_n, t_i));
    Tensor logits = concat({reshape(sim_live, {1}), reshape(sim_fake, {1})}, 0);
    Tensor probs = softmax(mul_scalar(logits, 1.0 / tau), 0);
    int64_t target = labels[i] == Label::live ? 0 : 1;
    Tensor p_correct = slice(probs, {target}, {1});
    total = add(total, neg(log(reshape(p_correct, {}))));
  }
  return mul_scalar(total, 1.0 / static_cast<double>(text_features.size()));
}

Tensor ce_similarity_loss(const std::vector<Tensor>& visual_features,
                          const Tensor& t_live, const Tensor& t_fake,
                          const std::vector<Label>& labels, double tau) {
  if (visual_features.empty() || visual_features.size() != labels.size()) {
    throw ContractError("ce loss needs one label per feature");
  }
  Tensor total = Tensor::scalar(0.0);
  for (size_t i = 0; i < visual_features.size(); ++i) {
    Tensor probs = classify(visual_features[i], t_live, t_fake, tau);
    int64_t target = labels[i] == Label::live ? 0 : 1;
    Tensor p_correct = slice(probs, {target}, {1});
    total = add(total, neg(log(reshape(p_correct, {}))));
  }
  return mul_scalar(total, 1.0 / static_cast<double>(visual_features.size()));
}

void Sgd::step(const std::vector<Tensor>& params) const {
  for (const Tensor& p : params) {
    Tensor param = p;
    if (!param.requires_grad() || !param.has_grad()) continue;
    auto& data = param.mutable_data();
    const auto& grad = param.grad();
    for (size_t i = 0; i < data.size(); ++i) data[i] -= lr * grad[i];
  }
}

Trainer::Trainer(Model& model, const TrainerOptions& options)
    : model_(model), opts_(options) {
  sgd_.lr = opts_.lr;
}

Tensor Trainer::prototype_for(PromptClass cls,
                              const std::vector<Tensor>& class_features) {
  if (!class_features.empty()) {
    Tensor acc = class_features[0];
    for (size_t i = 1; i < class_features.size(); ++i) {
      acc = add(acc, class_features[i]);
    }
    return l2_normalize(
        mul_scalar(acc, 1.0 / static_cast<double>(class_features.size())));
  }
  const auto& running =
      cls == PromptClass::live ? running_live_ : running_fake_;
  if (!running.has_value()) {
    // nothing seen yet: neutral unit prototype along the first coordinate
    std::vector<double> unit(static_cast<size_t>(model_.config().d_vt), 0.0);
    unit[0] = 1.0;
    return Tensor::from_data({model_.config().d_vt}, std::move(unit));
  }
  return Tensor::from_data({model_.config().d_vt}, *running);
}

void Trainer::update_running(PromptClass cls, const Tensor& proto) {
  auto& slot = cls == PromptClass::live ? running_live_ : running_fake_;
  std::vector<double> value = proto.data();
  if (slot.has_value()) {
    double m = opts_.prototype_momentum;
    for (size_t i = 0; i < value.size(); ++i) {
      value[i] = m * (*slot)[i] + (1.0 - m) * value[i];
    }
    double norm = 0.0;
    for (double v : value) norm += v * v;
    norm = std::sqrt(std::max(norm, 1e-24));
    for (double& v : value) v /= norm;
  }
  slot = std::move(value);
}

LossReport Trainer::train_step(const Batch& batch) {
  batch.validate();
  if (batch.size() == 0) throw ContractError("empty batch");
  model_.zero_grad();

  std::vector<Tensor> visual_features;
  std::vector<Tensor> text_features;
  std::vector<Tensor> live_texts, fake_texts;
  for (size_t i = 0; i < batch.size(); ++i) {
    Model::TrainForward fwd =
        model_.forward_train(batch.images[i], batch.labels[i]);
    visual_features.push_back(fwd.features);
    text_features.push_back(fwd.text);
    if (fwd.cls == PromptClass::live) {
      live_texts.push_back(fwd.text);
    } else {
      fake_texts.push_back(fwd.text);
    }
  }
  Tensor proto_live = prototype_for(PromptClass::live, live_texts);
  Tensor proto_fake = prototype_for(PromptClass::fake, fake_texts);

  const ModelConfig& cfg = model_.config();
  Tensor l_nt = opts_.enable_nt
                    ? nt_xent(text_features, batch.labels, proto_live,
                              proto_fake, cfg.tau_nt)
                    : Tensor::scalar(0.0);
  Tensor l_ce = ce_similarity_loss(visual_features, proto_live, proto_fake,
                                   batch.labels, cfg.tau_cls);
  Tensor l_total = add(l_nt, l_ce);

  LossReport report{l_nt.item(), l_ce.item(), l_total.item()};
  if (!std::isfinite(report.l_total)) {
    std::string which = !std::isfinite(report.l_nt) ? "l_nt" : "l_ce";
    throw NumericalError("non-finite loss: " + which + " (l_nt=" +
                         std::to_string(report.l_nt) + ", l_ce=" +
                         std::to_string(report.l_ce) + ")");
  }

  last_margins_.clear();
  for (const Tensor& xf : visual_features) {
    auto cosine = [](const std::vector<double>& a, const std::vector<double>& b) {
      double dot = 0, na = 0, nb = 0;
      for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
      }
      return dot / std::sqrt(std::max(na * nb, 1e-48));
    };
    last_margins_.push_back(cosine(xf.data(), proto_live.data()) -
                            cosine(xf.data(), proto_fake.data()));
  }

  backward(l_total);
  for (const auto& [name, tensor] : model_.named_params()) {
    if (!tensor.requires_grad() || !tensor.has_grad()) continue;
    for (double g : tensor.grad()) {
      if (!std::isfinite(g)) {
        throw NumericalError("non-finite gradient in tensor '" + name + "'");
      }
    }
  }
  sgd_.step(model_.trainable_params());

  if (!live_texts.empty()) update_running(PromptClass::live, l2_normalize(proto_live).detach());
  if (!fake_texts.empty()) update_running(PromptClass::fake, l2_normalize(proto_fake).detach());
  return report;
}

double score_sample(const Model& model, const Tensor& image) {
  Model::EvalForward fwd = model.forward_eval(image);
  return fwd.probs.data()[0];
}

}  // namespace fadet
