#include <cmath>
#include <cstdio>

#include "doctest.h"
#include "fadet/checkpoint.hpp"
#include "fadet/training.hpp"
#include "support/oracles.hpp"

using namespace fadet;

namespace {

ModelConfig tiny_model_config(PromptMode mode = PromptMode::attack_agnostic) {
  ModelConfig cfg;
  cfg.vit.image_size = 8;
  cfg.vit.patch_size = 4;  // n = 4
  cfg.vit.channels = 1;
  cfg.vit.d_v = 8;
  cfg.vit.n_layers = 1;
  cfg.vit.n_heads = 2;
  cfg.d_t = 16;
  cfg.d_vt = 12;
  cfg.context_length = 4;
  cfg.text_layers = 1;
  cfg.text_heads = 2;
  cfg.clusters = 3;
  cfg.conv_channels = 4;
  cfg.prompt_mode = mode;
  return cfg;
}

Batch tiny_batch(uint64_t seed, size_t n = 4) {
  SyntheticDataSpec spec;
  spec.seed = seed;
  spec.height = 8;
  spec.width = 8;
  Batch batch;
  for (size_t i = 0; i < n; ++i) {
    bool live = i % 2 == 0;
    AttackType type = live ? AttackType::none
                           : (i % 4 == 1 ? AttackType::advanced
                                         : AttackType::physical);
    batch.images.push_back(synthesize_image(
        spec, "subj" + std::to_string(i / 2), i, type));
    batch.labels.push_back(live ? Label::live : Label::fake);
    batch.attack_types.push_back(type);
  }
  return batch;
}

}  // namespace

TEST_CASE("nt_xent with matching features and orthogonal unit prototypes") {
  Tensor proto_live = Tensor::from_data({4}, {1, 0, 0, 0});
  Tensor proto_fake = Tensor::from_data({4}, {0, 1, 0, 0});
  std::vector<Tensor> features{proto_live.detach(), proto_fake.detach(),
                               proto_live.detach()};
  std::vector<Label> labels{Label::live, Label::fake, Label::live};
  Tensor loss = nt_xent(features, labels, proto_live, proto_fake, 1.0);
  double expect = std::log(1.0 + std::exp(-1.0));  // -log(e/(e+1))
  CHECK(loss.item() == doctest::Approx(expect).epsilon(1e-12));
  CHECK(loss.item() == doctest::Approx(0.3133).epsilon(1e-3));
}

TEST_CASE("nt_xent with identical prototypes is ln 2 regardless of features") {
  Rng rng(41);
  Tensor proto = rng.gaussian_tensor({6}, 1.0, false);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Tensor> features{rng.gaussian_tensor({6}, 2.0, false),
                                 rng.gaussian_tensor({6}, 0.5, false)};
    std::vector<Label> labels{Label::live, Label::fake};
    Tensor loss = nt_xent(features, labels, proto, proto, 0.7);
    CHECK(loss.item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
}

TEST_CASE("nt_xent decreases monotonically on a separable toy problem") {
  Rng rng(42);
  std::vector<Tensor> features;
  std::vector<Label> labels;
  for (int i = 0; i < 6; ++i) {
    features.push_back(rng.gaussian_tensor({5}, 1.0, true));
    labels.push_back(i < 3 ? Label::live : Label::fake);
  }
  Tensor proto_live = Tensor::from_data({5}, {1, 0, 0, 0, 0});
  Tensor proto_fake = Tensor::from_data({5}, {0, 1, 0, 0, 0});
  Sgd sgd{0.5};
  double prev = std::numeric_limits<double>::infinity();
  for (int step = 0; step < 50; ++step) {
    for (auto& f : features) f.zero_grad();
    Tensor loss = nt_xent(features, labels, proto_live, proto_fake, 0.5);
    CHECK(loss.item() <= prev + 1e-9);  // monotone, plateau tolerated
    prev = loss.item();
    backward(loss);
    sgd.step(features);
  }
  CHECK(prev < 0.4);
}

TEST_CASE("ce loss is ln 2 at even probabilities and vanishes when separated") {
  Rng rng(43);
  Tensor proto = rng.gaussian_tensor({6}, 1.0, false);
  std::vector<Tensor> x{rng.gaussian_tensor({6}, 1.0, false)};
  Tensor even = ce_similarity_loss(x, proto, proto, {Label::live}, 1.0);
  CHECK(even.item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // perfectly separated: feature aligned with its prototype, tiny tau
  Tensor live_axis = Tensor::from_data({6}, {1, 0, 0, 0, 0, 0});
  Tensor fake_axis = Tensor::from_data({6}, {-1, 0, 0, 0, 0, 0});
  std::vector<Tensor> aligned{live_axis.detach()};
  Tensor separated =
      ce_similarity_loss(aligned, live_axis, fake_axis, {Label::live}, 0.01);
  CHECK(separated.item() < 1e-9);
}

TEST_CASE("ce loss hand batch matches the scalar oracle") {
  // cosines (0.9, 0.1) labeled live and (0.2, 0.8) labeled fake, tau = 1
  Tensor x1 = Tensor::from_data({3}, {1, 0, 0});
  Tensor x2 = Tensor::from_data({3}, {0, 1, 0});
  // prototypes chosen so cos(x1,.) = (0.9, 0.1) and cos(x2,.) = (0.2, 0.8)
  Tensor t_live = Tensor::from_data(
      {3}, {0.9, 0.2, std::sqrt(1.0 - 0.81 - 0.04)});
  Tensor t_fake = Tensor::from_data(
      {3}, {0.1, 0.8, std::sqrt(1.0 - 0.01 - 0.64)});
  std::vector<Tensor> xs{x1, x2};
  std::vector<Label> labels{Label::live, Label::fake};
  Tensor loss = ce_similarity_loss(xs, t_live, t_fake, labels, 1.0);
  // independent scalar arithmetic
  double l1 = -std::log(std::exp(0.9) / (std::exp(0.9) + std::exp(0.1)));
  double l2 = -std::log(std::exp(0.8) / (std::exp(0.2) + std::exp(0.8)));
  double expect = 0.5 * (l1 + l2);
  CHECK(loss.item() == doctest::Approx(expect).epsilon(1e-12));
  CHECK(l1 == doctest::Approx(0.3711).epsilon(1e-3));
}

TEST_CASE("nt_xent and ce reject bad temperatures and mismatched lengths") {
  Tensor p = Tensor::from_data({2}, {1, 0});
  std::vector<Tensor> f{p.detach()};
  CHECK_THROWS_AS(nt_xent(f, {Label::live}, p, p, 0.0), ContractError);
  CHECK_THROWS_AS(nt_xent(f, {}, p, p, 1.0), ContractError);
  CHECK_THROWS_AS(ce_similarity_loss(f, p, p, {}, 1.0), ContractError);
}

TEST_CASE("single-class batches still compute both prototypes") {
  Model model(tiny_model_config(), 5);
  Trainer trainer(model, TrainerOptions{0.0, true, 0.9});
  Batch batch = tiny_batch(9, 4);
  Batch live_only;
  for (size_t i = 0; i < batch.size(); ++i) {
    if (batch.labels[i] == Label::live) {
      live_only.images.push_back(batch.images[i]);
      live_only.labels.push_back(batch.labels[i]);
      live_only.attack_types.push_back(batch.attack_types[i]);
    }
  }
  LossReport report = trainer.train_step(live_only);
  CHECK(std::isfinite(report.l_total));
}

TEST_CASE("l_total is bit-exactly the sum of its parts") {
  Model model(tiny_model_config(), 6);
  Trainer trainer(model, TrainerOptions{1e-3, true, 0.9});
  for (int step = 0; step < 3; ++step) {
    LossReport report = trainer.train_step(tiny_batch(11 + step));
    CHECK(report.l_total == report.l_nt + report.l_ce);
    CHECK(report.l_nt >= 0.0);
    CHECK(report.l_ce >= 0.0);
  }
}

TEST_CASE("disabling the contrastive term reduces training to ce only") {
  Model model(tiny_model_config(), 7);
  Trainer trainer(model, TrainerOptions{1e-3, false, 0.9});
  LossReport report = trainer.train_step(tiny_batch(13));
  CHECK(report.l_nt == 0.0);
  CHECK(report.l_total == report.l_ce);
}

TEST_CASE("zero learning rate leaves every parameter checksum unchanged") {
  Model model(tiny_model_config(), 8);
  uint64_t before = model.checksum();
  Trainer trainer(model, TrainerOptions{0.0, true, 0.9});
  trainer.train_step(tiny_batch(17));
  CHECK(model.checksum() == before);
}

TEST_CASE("the text encoder stays frozen at any learning rate") {
  Model model(tiny_model_config(), 9);
  uint64_t text_before = model.checksum("lang.text");
  uint64_t vocab_before = model.checksum("lang.vocab");
  uint64_t all_before = model.checksum();
  Trainer trainer(model, TrainerOptions{0.05, true, 0.9});
  for (int step = 0; step < 3; ++step) trainer.train_step(tiny_batch(19 + step));
  CHECK(model.checksum("lang.text") == text_before);
  CHECK(model.checksum("lang.vocab") == vocab_before);
  CHECK(model.checksum() != all_before);  // everything else trained
}

TEST_CASE("training routing builds only the matching prompt per sample") {
  Model model(tiny_model_config(), 10);
  Trainer trainer(model, TrainerOptions{1e-3, true, 0.9});
  Batch batch = tiny_batch(23, 4);  // 2 live, 2 fake
  model.language().reset_prompt_counters();
  trainer.train_step(batch);
  CHECK(model.language().prompts_built(PromptClass::live) == 2);
  CHECK(model.language().prompts_built(PromptClass::fake) == 2);

  model.language().reset_prompt_counters();
  model.forward_eval(batch.images[0]);
  CHECK(model.language().prompts_built(PromptClass::live) == 1);
  CHECK(model.language().prompts_built(PromptClass::fake) == 1);
}

TEST_CASE("identical seeds give identical loss streams") {
  auto run = [] {
    Model model(tiny_model_config(), 11);
    Trainer trainer(model, TrainerOptions{1e-2, true, 0.9});
    std::vector<double> losses;
    for (int step = 0; step < 4; ++step) {
      LossReport r = trainer.train_step(tiny_batch(29 + step));
      losses.push_back(r.l_total);
      losses.push_back(r.l_nt);
      losses.push_back(r.l_ce);
    }
    return losses;
  };
  CHECK(run() == run());
}

TEST_CASE("full pipeline gradients match finite differences on a B=2 batch") {
  Model model(tiny_model_config(), 12);
  Batch batch = tiny_batch(31, 2);
  Trainer trainer(model, TrainerOptions{0.0, true, 0.9});

  auto loss_fn = [&]() -> Tensor {
    std::vector<Tensor> visual, text, live_t, fake_t;
    for (size_t i = 0; i < batch.size(); ++i) {
      auto fwd = model.forward_train(batch.images[i], batch.labels[i]);
      visual.push_back(fwd.features);
      text.push_back(fwd.text);
      (fwd.cls == PromptClass::live ? live_t : fake_t).push_back(fwd.text);
    }
    Tensor proto_live = l2_normalize(live_t[0]);
    Tensor proto_fake = l2_normalize(fake_t[0]);
    Tensor l_nt = nt_xent(text, batch.labels, proto_live, proto_fake,
                          model.config().tau_nt);
    Tensor l_ce = ce_similarity_loss(visual, proto_live, proto_fake,
                                     batch.labels, model.config().tau_cls);
    return add(l_nt, l_ce);
  };

  // a representative parameter from each stage of the pipeline
  std::vector<std::string> picks{
      "vision.vit.patch_embed.w", "vision.freq.layer0.amp_w1",
      "vision.fcb.score.w",       "vision.fusion.gamma",
      "lang.ffg.ph_w1",           "lang.cond.beta",
      "lang.ctx.live",            "lang.bias.fake.in.w",
      "vision.proj.w",            "lang.cond.pool_proj.w"};
  auto params = model.named_params();
  int checked = 0;
  for (const auto& name : picks) {
    for (auto& [pname, tensor] : params) {
      if (pname != name) continue;
      auto result = oracles::grad_check(loss_fn, tensor);
      INFO("parameter ", name, " worst rel err ", result.max_rel_err);
      CHECK(result.max_rel_err < 1e-4);
      checked++;
    }
  }
  CHECK(checked == 10);
}

TEST_CASE("synthetic generation is a pure function of seed and index") {
  SyntheticDataSpec spec;
  spec.seed = 77;
  Tensor a = synthesize_image(spec, "id0001", 42, AttackType::deepfake);
  Tensor b = synthesize_image(spec, "id0001", 42, AttackType::deepfake);
  CHECK(a.data() == b.data());
  Tensor c = synthesize_image(spec, "id0001", 43, AttackType::deepfake);
  CHECK(a.data() != c.data());
}

TEST_CASE("fake samples carry more high-band energy than live ones") {
  SyntheticDataSpec spec;
  spec.seed = 3;
  double live_sum = 0.0, fake_sum = 0.0;
  int64_t n = 200;
  for (int64_t i = 0; i < n; ++i) {
    std::string subject = "s" + std::to_string(i % 20);
    live_sum += highband_energy_fraction(
        synthesize_image(spec, subject, i, AttackType::none), 0.25);
    AttackType type = i % 3 == 0   ? AttackType::physical
                      : i % 3 == 1 ? AttackType::advanced
                                   : AttackType::deepfake;
    fake_sum += highband_energy_fraction(
        synthesize_image(spec, subject, 1000 + i, type), 0.25);
  }
  double live_mean = live_sum / n, fake_mean = fake_sum / n;
  INFO("live ", live_mean, " fake ", fake_mean);
  CHECK(fake_mean >= spec.min_highband_margin * live_mean);
}

TEST_CASE("synthetic batches satisfy the label invariant") {
  Batch batch = tiny_batch(37, 8);
  batch.validate();
  Batch bad = batch;
  bad.attack_types[0] = AttackType::physical;  // label says live
  CHECK_THROWS_AS(bad.validate(), ContractError);
}

TEST_CASE("model checkpoints round trip and reject shape mismatches") {
  Model model(tiny_model_config(), 13);
  Trainer trainer(model, TrainerOptions{1e-2, true, 0.9});
  trainer.train_step(tiny_batch(41));
  std::string path = "test_model_ckpt.bin";
  model.save(path);

  Model restored(tiny_model_config(), 999);  // different init
  CHECK(restored.checksum() != model.checksum());
  restored.load(path);
  CHECK(restored.checksum() == model.checksum());

  ModelConfig other = tiny_model_config();
  other.d_vt = 10;
  Model mismatched(other, 13);
  try {
    mismatched.load(path);
    FAIL("expected CheckpointError");
  } catch (const CheckpointError& e) {
    CHECK(std::string(e.what()).find("proj") != std::string::npos);
  }
  std::remove(path.c_str());
}
