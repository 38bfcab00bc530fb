#include "fadet/nn.hpp"

#include <cmath>
#include <limits>

namespace fadet {

Linear Linear::init(int64_t in, int64_t out, Rng& rng, double stddev) {
  Linear l;
  l.w = rng.gaussian_tensor({in, out}, stddev);
  l.b = Tensor::zeros({out}, true);
  return l;
}

Tensor Linear::operator()(const Tensor& x) const {
  return add(matmul(x, w), b);
}

void Linear::collect(std::vector<std::pair<std::string, Tensor>>& out,
                     const std::string& prefix) const {
  out.emplace_back(prefix + ".w", w);
  out.emplace_back(prefix + ".b", b);
}

AttentionParams AttentionParams::init(int64_t dim, Rng& rng) {
  AttentionParams p;
  double stddev = 1.0 / std::sqrt(static_cast<double>(dim));
  p.q = Linear::init(dim, dim, rng, stddev);
  p.k = Linear::init(dim, dim, rng, stddev);
  p.v = Linear::init(dim, dim, rng, stddev);
  p.proj = Linear::init(dim, dim, rng, stddev);
  return p;
}

void AttentionParams::collect(std::vector<std::pair<std::string, Tensor>>& out,
                              const std::string& prefix) const {
  q.collect(out, prefix + ".q");
  k.collect(out, prefix + ".k");
  v.collect(out, prefix + ".v");
  proj.collect(out, prefix + ".proj");
}

Tensor attention(const AttentionParams& params, const Tensor& queries,
                 const Tensor& keys_values, int64_t n_heads,
                 const Tensor* extra_logit, bool causal,
                 const std::vector<bool>* key_valid) {
  int64_t tq = queries.dim(0);
  int64_t tk = keys_values.dim(0);
  int64_t d = queries.dim(1);
  if (d % n_heads != 0) {
    throw ShapeError("attention width " + std::to_string(d) +
                     " not divisible by " + std::to_string(n_heads) + " heads");
  }
  if (causal && tq != tk) {
    throw ContractError("causal attention needs square query/key counts");
  }
  int64_t dk = d / n_heads;
  double scale = 1.0 / std::sqrt(static_cast<double>(dk));

  Tensor q = params.q(queries);
  Tensor k = params.k(keys_values);
  Tensor v = params.v(keys_values);

  // additive logit mask shared across heads
  Tensor bias;
  {
    std::vector<double> mask(static_cast<size_t>(tq * tk), 0.0);
    bool any = false;
    const double ninf = -std::numeric_limits<double>::infinity();
    if (causal) {
      any = true;
      for (int64_t i = 0; i < tq; ++i)
        for (int64_t j = i + 1; j < tk; ++j) mask[i * tk + j] = ninf;
    }
    if (key_valid) {
      any = true;
      for (int64_t j = 0; j < tk; ++j) {
        if (!(*key_valid)[j]) {
          for (int64_t i = 0; i < tq; ++i) mask[i * tk + j] = ninf;
        }
      }
    }
    if (any) bias = Tensor::from_data({tq, tk}, std::move(mask));
  }

  std::vector<Tensor> heads;
  heads.reserve(n_heads);
  for (int64_t h = 0; h < n_heads; ++h) {
    Tensor qh = slice(q, {0, h * dk}, {tq, dk});
    Tensor kh = slice(k, {0, h * dk}, {tk, dk});
    Tensor vh = slice(v, {0, h * dk}, {tk, dk});
    Tensor logits = mul_scalar(matmul(qh, transpose(kh)), scale);
    if (extra_logit) {
      logits = add(logits, reshape(*extra_logit, {1, tk}));
    }
    if (bias.defined()) logits = add(logits, bias);
    Tensor weights = softmax(logits, 1);
    heads.push_back(matmul(weights, vh));
  }
  Tensor merged = n_heads == 1 ? heads[0] : concat(heads, 1);
  return params.proj(merged);
}

LayerNormParams LayerNormParams::init(int64_t dim) {
  LayerNormParams p;
  p.gain = Tensor::full({dim}, 1.0, true);
  p.bias = Tensor::zeros({dim}, true);
  return p;
}

Tensor LayerNormParams::operator()(const Tensor& x) const {
  return add(mul(layer_norm(x), gain), bias);
}

void LayerNormParams::collect(std::vector<std::pair<std::string, Tensor>>& out,
                              const std::string& prefix) const {
  out.emplace_back(prefix + ".g", gain);
  out.emplace_back(prefix + ".b", bias);
}

}  // namespace fadet
