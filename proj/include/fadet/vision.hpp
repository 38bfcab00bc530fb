#pragma once

#include <string>
#include <utility>
#include <vector>

#include "fadet/nn.hpp"
#include "fadet/spectral.hpp"
#include "fadet/tensor.hpp"

namespace fadet {

struct VitConfig {
  int64_t image_size = 16;
  int64_t patch_size = 4;
  int64_t channels = 1;
  int64_t d_v = 64;
  int64_t n_layers = 2;
  int64_t n_heads = 4;

  int64_t grid() const { return image_size / patch_size; }
  int64_t n_patches() const { return grid() * grid(); }
  void validate() const;
};

/// Pre-norm ViT block set with learned positional embeddings and a class
/// token. forward() returns the final class embedding plus the per-layer
/// patch tokens (class token excluded).
class TinyViT {
 public:
  TinyViT() = default;
  TinyViT(const VitConfig& config, Rng& rng);

  struct Output {
    Tensor cls;                       // [d_v]
    std::vector<Tensor> layer_tokens; // n_layers entries, each [n, d_v]
  };
  Output forward(const Tensor& image) const;

  const VitConfig& config() const { return cfg_; }
  void collect(std::vector<std::pair<std::string, Tensor>>& out,
               const std::string& prefix) const;

 private:
  struct Block {
    LayerNormParams ln1, ln2;
    AttentionParams attn;
    Linear mlp_in, mlp_out;
  };

  VitConfig cfg_;
  Linear patch_embed_;
  Tensor cls_token_;  // [1, d_v]
  Tensor pos_embed_;  // [1+n, d_v]
  std::vector<Block> blocks_;
  LayerNormParams final_ln_;
};

/// Splits an image into non-overlapping patches: [H,W,C] -> [n, p*p*C].
Tensor extract_patches(const Tensor& image, int64_t patch_size);

/// Per-layer frequency features: folds [n,d_v] tokens onto a sqrt(n) grid
/// with d_v channels, runs the frequency generator, unfolds back.
Tensor layer_freq(const Tensor& tokens, double alpha, const FfgParams& params);

/// Multi-layer frequency token stack: slab 0 holds the original-image
/// features, slabs 1..J the per-layer features.
struct FreqTokenStack {
  std::vector<Tensor> slabs;  // each [n, d_v]

  Tensor flat() const;  // [(slabs)*n, d_v]
  int64_t total_tokens() const;
};

struct ClusterPlan {
  std::vector<int> assignment;  // token index -> cluster id in [0,d)
  Tensor scores;                // [T,1] raw scores from the scoring layer
  int64_t d = 0;

  std::vector<std::vector<int>> members() const;
};

/// Deterministic clustering of token rows under cosine similarity:
/// farthest-point seeding, nearest-centroid assignment, one refinement
/// pass; every cluster is left non-empty. Ties resolve to the lowest index.
ClusterPlan cluster_tokens(const Tensor& tokens, int64_t d,
                           const Linear& score_layer);

/// Intra-cluster weighted summation: row i is the convex combination of
/// cluster-i tokens under softmax-normalized scores. -> [d, d_v]
Tensor compress(const Tensor& tokens, const ClusterPlan& plan);

/// Per-cluster softmax weights over all tokens ([d, T], zero outside the
/// owning cluster); exposed for invariant checks.
Tensor compression_weights(const ClusterPlan& plan);

struct FcbParams {
  Linear score;          // d_v -> 1 scoring layer
  Linear q, k, v;        // attention projections, no output projection
  Linear phi_in, phi_out;  // fusion MLP after pooling
  int64_t n_heads = 1;
  int64_t clusters = 8;

  static FcbParams init(int64_t d_v, int64_t clusters, int64_t n_heads,
                        Rng& rng);
  void collect(std::vector<std::pair<std::string, Tensor>>& out,
               const std::string& prefix) const;
};

/// The attention stage alone: softmax(Q(compressed) K^T(stack) / sqrt(d_k)
/// + S) V(stack) with S the per-key score logit broadcast over queries.
/// Returns the attended rows [d, d_v] before pooling and the fusion MLP.
Tensor fcb_attend(const Tensor& compressed, const Tensor& stack_tokens,
                  const Tensor& stack_scores, const FcbParams& params);

/// Full projection: attend, pool the query rows, run the fusion MLP. [d_v]
Tensor project_freq(const Tensor& compressed, const Tensor& stack_tokens,
                    const Tensor& stack_scores, const FcbParams& params);

/// x + (1 - sigmoid(gamma)) * x_h, elementwise over [d_v].
Tensor fuse_visual(const Tensor& x, const Tensor& x_h, const Tensor& gamma);

struct VisionToggles {
  bool enable_fcb = true;
  bool enable_multilayer_freq = true;
  bool enable_orig_freq = true;

  bool any_freq() const { return enable_multilayer_freq || enable_orig_freq; }
};

/// Full vision branch: spatial class-token path plus the compressed
/// multi-layer frequency path, fused and projected to the shared space.
class VisionBranch {
 public:
  VisionBranch() = default;
  VisionBranch(const VitConfig& config, int64_t clusters, int64_t d_vt,
               double alpha, const VisionToggles& toggles, Rng& rng);

  struct Output {
    Tensor features;  // [d_vt], projected
    Tensor fused;     // [d_v], pre-projection x_f
    Tensor cls;       // [d_v], plain spatial path
  };
  Output forward(const Tensor& image) const;

  const VitConfig& vit_config() const { return vit_.config(); }
  const VisionToggles& toggles() const { return toggles_; }
  void collect(std::vector<std::pair<std::string, Tensor>>& out,
               const std::string& prefix) const;

 private:
  FreqTokenStack build_stack(const Tensor& image,
                             const TinyViT::Output& vit_out) const;

  VitConfig cfg_;
  VisionToggles toggles_;
  double alpha_ = 0.25;
  TinyViT vit_;
  FfgParams orig_ffg_;
  Linear orig_patch_proj_;
  std::vector<FfgParams> layer_ffg_;
  FcbParams fcb_;
  Tensor gamma_;
  Linear visual_proj_;  // d_v -> d_vt
};

}  // namespace fadet
