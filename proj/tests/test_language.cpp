#include <cmath>

#include "doctest.h"
#include "fadet/language.hpp"
#include "support/oracles.hpp"

using namespace fadet;

namespace {

LanguageConfig toy_config(PromptMode mode = PromptMode::attack_agnostic) {
  LanguageConfig cfg;
  cfg.d_t = 16;
  cfg.d_vt = 12;
  cfg.context_length = 6;
  cfg.text_layers = 2;
  cfg.text_heads = 2;
  cfg.image_channels = 1;
  cfg.conv_channels = 4;
  cfg.alpha = 0.25;
  cfg.mode = mode;
  return cfg;
}

Tensor toy_image(uint64_t seed) {
  Rng rng(seed);
  return rng.uniform_tensor({8, 8, 1}, 0.0, 1.0, false);
}

}  // namespace

TEST_CASE("saturated beta selects exactly one conditioner stream") {
  Rng rng(21);
  FusedConditioner cond = FusedConditioner::init(1, 4, 16, rng);
  Tensor image = toy_image(1);
  Tensor freq_a = toy_image(2);
  Tensor freq_b = toy_image(3);

  cond.beta.mutable_data()[0] = 800.0;  // sigmoid == 1 exactly
  Tensor spatial_only_a = fuse_language_inputs(image, freq_a, cond);
  Tensor spatial_only_b = fuse_language_inputs(image, freq_b, cond);
  CHECK(spatial_only_a.data() == spatial_only_b.data());

  cond.beta.mutable_data()[0] = -800.0;  // sigmoid == 0 exactly
  Tensor freq_only_a = fuse_language_inputs(toy_image(4), freq_a, cond);
  Tensor freq_only_b = fuse_language_inputs(toy_image(5), freq_a, cond);
  CHECK(freq_only_a.data() == freq_only_b.data());
}

TEST_CASE("conditioner gradient w.r.t. beta matches finite differences") {
  Rng rng(22);
  FusedConditioner cond = FusedConditioner::init(1, 4, 16, rng);
  Tensor image = toy_image(6);
  Tensor freq = toy_image(7);
  auto forward = [&] {
    Tensor out = fuse_language_inputs(image, freq, cond);
    return sum(mul(out, out));
  };
  CHECK(oracles::grad_check(forward, cond.beta).max_rel_err < 1e-6);
}

TEST_CASE("prompt layout: 77 tokens, eos at M + 2") {
  Rng rng(23);
  LanguageBranch branch(toy_config(), rng);
  Tensor bias = Tensor::zeros({16});
  PromptSequence prompt = branch.build_prompt(PromptClass::live, bias);
  CHECK(prompt.tokens.shape() == Shape{77, 16});
  CHECK(prompt.eos_index == 8);  // M = 6
  CHECK(prompt.context_length == 6);
}

TEST_CASE("zero bias reproduces the unconditioned generic prompt") {
  Rng rng(24);
  LanguageBranch branch(toy_config(), rng);
  const GenericContext& ctx = branch.context(PromptClass::fake);
  PromptSequence prompt =
      branch.build_prompt(PromptClass::fake, Tensor::zeros({16}));
  for (int64_t m = 0; m < 6; ++m) {
    for (int64_t j = 0; j < 16; ++j) {
      CHECK(prompt.tokens.at({1 + m, j}) == ctx.vectors.at({m, j}));
    }
  }
  for (int64_t j = 0; j < 16; ++j) {
    CHECK(prompt.tokens.at({7, j}) == ctx.class_token_embedding.at({j}));
  }
}

TEST_CASE("bias shifts exactly the M context positions") {
  Rng rng(25);
  LanguageBranch branch(toy_config(), rng);
  Tensor bias = rng.gaussian_tensor({16}, 1.0, false);
  PromptSequence base =
      branch.build_prompt(PromptClass::live, Tensor::zeros({16}));
  PromptSequence shifted = branch.build_prompt(PromptClass::live, bias);
  for (int64_t p = 0; p < 77; ++p) {
    for (int64_t j = 0; j < 16; ++j) {
      double expect = base.tokens.at({p, j});
      if (p >= 1 && p <= 6) expect += bias.at({j});
      CHECK(std::fabs(shifted.tokens.at({p, j}) - expect) < 1e-15);
    }
  }
}

TEST_CASE("two images produce prompts differing only in context positions") {
  Rng rng(26);
  LanguageBranch branch(toy_config(), rng);
  Tensor cond_a = branch.conditioner(toy_image(31));
  Tensor cond_b = branch.conditioner(toy_image(32));
  PromptSequence pa = branch.build_prompt(
      PromptClass::live, branch.bias_for(PromptClass::live, cond_a));
  PromptSequence pb = branch.build_prompt(
      PromptClass::live, branch.bias_for(PromptClass::live, cond_b));
  for (int64_t p = 0; p < 77; ++p) {
    bool is_context = p >= 1 && p <= 6;
    bool differs = false;
    for (int64_t j = 0; j < 16; ++j) {
      if (pa.tokens.at({p, j}) != pb.tokens.at({p, j})) differs = true;
    }
    CHECK(differs == is_context);
  }
}

TEST_CASE("text encoder parameters are frozen, contexts still learn") {
  Rng rng(27);
  LanguageBranch branch(toy_config(), rng);
  std::vector<std::pair<std::string, Tensor>> params;
  branch.collect(params, "lang");
  for (auto& [name, tensor] : params) {
    if (name.rfind("lang.text.", 0) == 0 || name.rfind("lang.vocab.", 0) == 0) {
      CHECK_FALSE(tensor.requires_grad());
    }
  }
  Tensor cond = branch.conditioner(toy_image(41));
  Tensor feature = branch.text_feature(PromptClass::live, cond);
  Tensor loss = sum(mul(feature, feature));
  Tensor ctx_vectors = branch.context(PromptClass::live).vectors;
  ctx_vectors.zero_grad();
  backward(loss);
  double ctx_grad_norm = 0.0;
  for (double g : ctx_vectors.grad()) ctx_grad_norm += g * g;
  CHECK(ctx_grad_norm > 0.0);
}

TEST_CASE("full prompt path gradient matches finite differences") {
  Rng rng(28);
  LanguageConfig cfg = toy_config();
  cfg.text_layers = 1;
  LanguageBranch branch(cfg, rng);
  Tensor image = toy_image(51);
  std::vector<std::pair<std::string, Tensor>> params;
  branch.collect(params, "lang");
  Tensor bias_w, ctx_vec, beta;
  for (auto& [name, tensor] : params) {
    if (name == "lang.bias.live.in.w") bias_w = tensor;
    if (name == "lang.ctx.live") ctx_vec = tensor;
    if (name == "lang.cond.beta") beta = tensor;
  }
  REQUIRE(bias_w.defined());
  auto forward = [&] {
    Tensor cond = branch.conditioner(image);
    Tensor feature = branch.text_feature(PromptClass::live, cond);
    return sum(mul(feature, feature));
  };
  CHECK(oracles::grad_check(forward, bias_w).max_rel_err < 1e-4);
  CHECK(oracles::grad_check(forward, ctx_vec).max_rel_err < 1e-4);
  CHECK(oracles::grad_check(forward, beta).max_rel_err < 1e-4);
}

TEST_CASE("zeroing the live bias generator leaves fake prompts bit-identical") {
  Rng rng(29);
  LanguageBranch branch(toy_config(), rng);
  Tensor cond = branch.conditioner(toy_image(61));
  Tensor live_before = branch.text_feature(PromptClass::live, cond);
  Tensor fake_before = branch.text_feature(PromptClass::fake, cond);
  BiasGenerator& live_gen = branch.bias_generator(PromptClass::live);
  for (Tensor* t : {&live_gen.in.w, &live_gen.in.b, &live_gen.out.w, &live_gen.out.b}) {
    std::fill(t->mutable_data().begin(), t->mutable_data().end(), 0.0);
  }
  Tensor live_after = branch.text_feature(PromptClass::live, cond);
  Tensor fake_after = branch.text_feature(PromptClass::fake, cond);
  CHECK(fake_before.data() == fake_after.data());
  bool changed = false;
  for (int64_t i = 0; i < live_before.numel(); ++i) {
    if (live_before.data()[i] != live_after.data()[i]) changed = true;
  }
  CHECK(changed);
}

TEST_CASE("prompt construction counters track routing") {
  Rng rng(30);
  LanguageBranch branch(toy_config(), rng);
  branch.reset_prompt_counters();
  Tensor cond = branch.conditioner(toy_image(71));
  branch.text_feature(PromptClass::live, cond);
  branch.text_feature(PromptClass::live, cond);
  branch.text_feature(PromptClass::fake, cond);
  CHECK(branch.prompts_built(PromptClass::live) == 2);
  CHECK(branch.prompts_built(PromptClass::fake) == 1);
  branch.reset_prompt_counters();
  CHECK(branch.prompts_built(PromptClass::live) == 0);
}

TEST_CASE("coop mode forces a zero bias and a shared context") {
  Rng rng(31);
  LanguageBranch branch(toy_config(PromptMode::coop), rng);
  Tensor cond = branch.conditioner(toy_image(81));
  Tensor bias = branch.bias_for(PromptClass::live, cond);
  for (double v : bias.data()) CHECK(v == 0.0);
  // contexts are aliased: same underlying buffer
  CHECK(branch.context(PromptClass::live).vectors.impl() ==
        branch.context(PromptClass::fake).vectors.impl());
  // prompts for the two classes differ only in the class-token position
  PromptSequence pl = branch.build_prompt(PromptClass::live, bias);
  PromptSequence pf = branch.build_prompt(PromptClass::fake, bias);
  for (int64_t p = 0; p < 77; ++p) {
    bool differs = false;
    for (int64_t j = 0; j < 16; ++j) {
      if (pl.tokens.at({p, j}) != pf.tokens.at({p, j})) differs = true;
    }
    CHECK(differs == (p == 7));
  }
}

TEST_CASE("cocoop mode shares one bias generator across classes") {
  Rng rng(32);
  LanguageBranch branch(toy_config(PromptMode::cocoop), rng);
  Tensor cond = branch.conditioner(toy_image(91));
  Tensor bias_live = branch.bias_for(PromptClass::live, cond);
  Tensor bias_fake = branch.bias_for(PromptClass::fake, cond);
  CHECK(bias_live.data() == bias_fake.data());
}

TEST_CASE("classify: identical prototypes give an even split") {
  Rng rng(33);
  Tensor x = rng.gaussian_tensor({8}, 1.0, false);
  Tensor proto = rng.gaussian_tensor({8}, 1.0, false);
  Tensor p = classify(x, proto, proto, 0.5);
  CHECK(p.data()[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(p.data()[1] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(p.data()[0] + p.data()[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("classify argmax is invariant to temperature and rescaling") {
  Rng rng(34);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = rng.gaussian_tensor({8}, 1.0, false);
    Tensor tl = rng.gaussian_tensor({8}, 1.0, false);
    Tensor tf = rng.gaussian_tensor({8}, 1.0, false);
    Tensor p1 = classify(x, tl, tf, 1.0);
    Tensor p2 = classify(x, tl, tf, 0.07);
    Tensor p3 = classify(mul_scalar(x, 7.5), tl, tf, 1.0);
    int a1 = p1.data()[0] > p1.data()[1] ? 0 : 1;
    int a2 = p2.data()[0] > p2.data()[1] ? 0 : 1;
    int a3 = p3.data()[0] > p3.data()[1] ? 0 : 1;
    CHECK(a1 == a2);
    CHECK(a1 == a3);
  }
}

TEST_CASE("classify hand value: sims (0.8, 0.2) at tau 1") {
  // unit feature along e1; prototypes built to give exact cosines
  Tensor x = Tensor::from_data({3}, {1, 0, 0});
  Tensor tl = Tensor::from_data({3}, {0.8, std::sqrt(1 - 0.64), 0});
  Tensor tf = Tensor::from_data({3}, {0.2, 0, std::sqrt(1 - 0.04)});
  Tensor p = classify(x, tl, tf, 1.0);
  double expect = std::exp(0.8) / (std::exp(0.8) + std::exp(0.2));
  CHECK(p.data()[0] == doctest::Approx(expect).epsilon(1e-9));
  CHECK(p.data()[0] == doctest::Approx(0.6457).epsilon(1e-4));
}

TEST_CASE("classify rejects zero-norm features") {
  Tensor zero = Tensor::zeros({4});
  Tensor ok = Tensor::from_data({4}, {1, 0, 0, 0});
  CHECK_THROWS_AS(classify(zero, ok, ok, 1.0), ContractError);
  CHECK_THROWS_AS(classify(ok, zero, ok, 1.0), ContractError);
  CHECK_THROWS_AS(classify(ok, ok, ok, -1.0), ContractError);
}
