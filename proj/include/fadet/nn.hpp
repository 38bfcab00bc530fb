#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fadet/rng.hpp"
#include "fadet/tensor.hpp"

namespace fadet {

struct Linear {
  Tensor w;  // [in, out]
  Tensor b;  // [out]

  static Linear init(int64_t in, int64_t out, Rng& rng, double stddev = 0.02);
  Tensor operator()(const Tensor& x) const;  // [n,in] -> [n,out]
  void collect(std::vector<std::pair<std::string, Tensor>>& out,
               const std::string& prefix) const;
};

struct AttentionParams {
  Linear q, k, v, proj;

  static AttentionParams init(int64_t dim, Rng& rng);
  void collect(std::vector<std::pair<std::string, Tensor>>& out,
               const std::string& prefix) const;
};

/// Multi-head scaled dot-product attention. `queries` [Tq,d] attends over
/// `keys_values` [Tk,d]. `extra_logit`, when given, is a [Tk] (or [Tk,1])
/// additive bias applied to every query row after scaling; -inf entries
/// remove a key entirely. `causal` restricts query i to keys j <= i.
Tensor attention(const AttentionParams& params, const Tensor& queries,
                 const Tensor& keys_values, int64_t n_heads,
                 const Tensor* extra_logit = nullptr, bool causal = false,
                 const std::vector<bool>* key_valid = nullptr);

/// LayerNorm with learned scale and shift over the last axis.
struct LayerNormParams {
  Tensor gain;
  Tensor bias;

  static LayerNormParams init(int64_t dim);
  Tensor operator()(const Tensor& x) const;
  void collect(std::vector<std::pair<std::string, Tensor>>& out,
               const std::string& prefix) const;
};

}  // namespace fadet
