#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fadet/model.hpp"
#include "fadet/synthetic.hpp"
#include "fadet/tensor.hpp"

namespace fadet {

struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Batch {
  std::vector<Tensor> images;
  std::vector<Label> labels;
  std::vector<AttackType> attack_types;

  size_t size() const { return images.size(); }
  void validate() const;  // label == live <=> attack_type == none
};

struct LossReport {
  double l_nt = 0.0;
  double l_ce = 0.0;
  double l_total = 0.0;
};

/// Normalized temperature-scaled cross entropy: features and prototypes are
/// L2-normalized, each sample is pulled toward its class prototype against
/// the two-prototype denominator.
Tensor nt_xent(const std::vector<Tensor>& text_features,
               const std::vector<Label>& labels, const Tensor& proto_live,
               const Tensor& proto_fake, double tau);

/// Mean cross-entropy of the two-way similarity probabilities.
Tensor ce_similarity_loss(const std::vector<Tensor>& visual_features,
                          const Tensor& t_live, const Tensor& t_fake,
                          const std::vector<Label>& labels, double tau);

/// Plain gradient descent; skips parameters without gradients.
struct Sgd {
  double lr = 1e-2;
  void step(const std::vector<Tensor>& params) const;
};

struct TrainerOptions {
  double lr = 1e-2;
  bool enable_nt = true;
  double prototype_momentum = 0.9;
};

/// One optimizer step over a batch with live/fake prompt routing. Class
/// prototypes come from the batch's routed text features; a class absent
/// from the batch falls back to its running prototype. Prototype state lives
/// here, not in the checkpoint.
class Trainer {
 public:
  Trainer(Model& model, const TrainerOptions& options);

  LossReport train_step(const Batch& batch);

  /// Per-sample prototype margins (live-similarity minus fake-similarity)
  /// of the most recent batch; positive means predicted live.
  const std::vector<double>& last_margins() const { return last_margins_; }

 private:
  Tensor prototype_for(PromptClass cls,
                       const std::vector<Tensor>& class_features);
  void update_running(PromptClass cls, const Tensor& proto);

  Model& model_;
  TrainerOptions opts_;
  Sgd sgd_;
  std::optional<std::vector<double>> running_live_;
  std::optional<std::vector<double>> running_fake_;
  std::vector<double> last_margins_;
};

/// Scores p_live for one sample in eval routing.
double score_sample(const Model& model, const Tensor& image);

}  // namespace fadet
