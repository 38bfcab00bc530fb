#include "fadet/vision.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fadet {

void VitConfig::validate() const {
  if (image_size % patch_size != 0) {
    throw ContractError("image_size " + std::to_string(image_size) +
                        " not divisible by patch_size " +
                        std::to_string(patch_size));
  }
  int64_t g = grid();
  if (g < 2) throw ContractError("patch grid must be at least 2x2");
  if (d_v % n_heads != 0) {
    throw ContractError("d_v must be divisible by n_heads");
  }
  int64_t root = static_cast<int64_t>(std::llround(std::sqrt(
      static_cast<double>(n_patches()))));
  if (root * root != n_patches()) {
    throw ContractError("patch count must be a perfect square");
  }
}

TinyViT::TinyViT(const VitConfig& config, Rng& rng) : cfg_(config) {
  cfg_.validate();
  int64_t patch_dim = cfg_.patch_size * cfg_.patch_size * cfg_.channels;
  patch_embed_ = Linear::init(patch_dim, cfg_.d_v, rng);
  cls_token_ = rng.gaussian_tensor({1, cfg_.d_v}, 0.02);
  pos_embed_ = rng.gaussian_tensor({1 + cfg_.n_patches(), cfg_.d_v}, 0.02);
  blocks_.resize(cfg_.n_layers);
  for (auto& block : blocks_) {
    block.ln1 = LayerNormParams::init(cfg_.d_v);
    block.ln2 = LayerNormParams::init(cfg_.d_v);
    block.attn = AttentionParams::init(cfg_.d_v, rng);
    block.mlp_in = Linear::init(cfg_.d_v, 4 * cfg_.d_v, rng);
    block.mlp_out = Linear::init(4 * cfg_.d_v, cfg_.d_v, rng);
  }
  final_ln_ = LayerNormParams::init(cfg_.d_v);
}

Tensor extract_patches(const Tensor& image, int64_t patch_size) {
  if (image.rank() != 3) {
    throw ShapeError("extract_patches expects [H,W,C], got " +
                     shape_str(image.shape()));
  }
  int64_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  if (h % patch_size != 0 || w % patch_size != 0) {
    throw ContractError("image " + shape_str(image.shape()) +
                        " not divisible into " + std::to_string(patch_size) +
                        "-pixel patches");
  }
  std::vector<Tensor> rows;
  for (int64_t py = 0; py < h / patch_size; ++py) {
    for (int64_t px = 0; px < w / patch_size; ++px) {
      Tensor patch = slice(image, {py * patch_size, px * patch_size, 0},
                           {patch_size, patch_size, c});
      rows.push_back(reshape(patch, {1, patch_size * patch_size * c}));
    }
  }
  return concat(rows, 0);
}

TinyViT::Output TinyViT::forward(const Tensor& image) const {
  if (image.rank() != 3 || image.dim(0) != cfg_.image_size ||
      image.dim(1) != cfg_.image_size || image.dim(2) != cfg_.channels) {
    throw ShapeError("image " + shape_str(image.shape()) +
                     " does not match the configured encoder input");
  }
  Tensor patches = patch_embed_(extract_patches(image, cfg_.patch_size));
  Tensor x = add(concat({cls_token_, patches}, 0), pos_embed_);
  int64_t n = cfg_.n_patches();

  Output out;
  for (const auto& block : blocks_) {
    Tensor h = block.ln1(x);
    x = add(x, attention(block.attn, h, h, cfg_.n_heads));
    Tensor h2 = block.ln2(x);
    x = add(x, block.mlp_out(gelu(block.mlp_in(h2))));
    out.layer_tokens.push_back(slice(x, {1, 0}, {n, cfg_.d_v}));
  }
  Tensor final = final_ln_(x);
  out.cls = reshape(slice(final, {0, 0}, {1, cfg_.d_v}), {cfg_.d_v});
  return out;
}

void TinyViT::collect(std::vector<std::pair<std::string, Tensor>>& out,
                      const std::string& prefix) const {
  patch_embed_.collect(out, prefix + ".patch_embed");
  out.emplace_back(prefix + ".cls_token", cls_token_);
  out.emplace_back(prefix + ".pos_embed", pos_embed_);
  for (size_t i = 0; i < blocks_.size(); ++i) {
    std::string bp = prefix + ".blocks." + std::to_string(i);
    blocks_[i].ln1.collect(out, bp + ".ln1");
    blocks_[i].attn.collect(out, bp + ".attn");
    blocks_[i].ln2.collect(out, bp + ".ln2");
    blocks_[i].mlp_in.collect(out, bp + ".mlp_in");
    blocks_[i].mlp_out.collect(out, bp + ".mlp_out");
  }
  final_ln_.collect(out, prefix + ".final_ln");
}

Tensor layer_freq(const Tensor& tokens, double alpha, const FfgParams& params) {
  if (tokens.rank() != 2) {
    throw ShapeError("layer_freq expects [n,d_v], got " +
                     shape_str(tokens.shape()));
  }
  int64_t n = tokens.dim(0), d = tokens.dim(1);
  int64_t g = static_cast<int64_t>(std::llround(std::sqrt(static_cast<double>(n))));
  if (g * g != n) {
    throw ContractError("token count " + std::to_string(n) +
                        " is not a perfect square");
  }
  Tensor grid = reshape(tokens, {g, g, d});
  Tensor transformed = ffg_forward(grid, alpha, params);
  return reshape(transformed, {n, d});
}

Tensor FreqTokenStack::flat() const {
  if (slabs.empty()) throw ContractError("empty frequency token stack");
  return slabs.size() == 1 ? slabs[0] : concat(slabs, 0);
}

int64_t FreqTokenStack::total_tokens() const {
  int64_t n = 0;
  for (const auto& s : slabs) n += s.dim(0);
  return n;
}

std::vector<std::vector<int>> ClusterPlan::members() const {
  std::vector<std::vector<int>> out(d);
  for (size_t t = 0; t < assignment.size(); ++t) {
    out[assignment[t]].push_back(static_cast<int>(t));
  }
  return out;
}

namespace {

// Unit rows under an epsilon guard; clustering math runs on raw values.
std::vector<std::vector<double>> normalized_rows(const Tensor& tokens) {
  int64_t t = tokens.dim(0), d = tokens.dim(1);
  std::vector<std::vector<double>> rows(t, std::vector<double>(d));
  for (int64_t i = 0; i < t; ++i) {
    double norm = 0.0;
    for (int64_t j = 0; j < d; ++j) {
      double v = tokens.data()[i * d + j];
      rows[i][j] = v;
      norm += v * v;
    }
    norm = std::sqrt(std::max(norm, 1e-24));
    for (int64_t j = 0; j < d; ++j) rows[i][j] /= norm;
  }
  return rows;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

ClusterPlan cluster_tokens(const Tensor& tokens, int64_t d,
                           const Linear& score_layer) {
  int64_t t = tokens.dim(0);
  if (d < 1 || d > t) {
    throw ContractError("cluster count " + std::to_string(d) +
                        " must lie in [1, " + std::to_string(t) + "]");
  }
  auto rows = normalized_rows(tokens);

  // Tie-breaking must not depend on token order, or the partition would not
  // be permutation-equivariant: prefer larger distance, then the
  // lexicographically smaller row, then the lower index.
  auto prefer = [&](int64_t cand, double cand_dist, int64_t best,
                    double best_dist) {
    if (best < 0) return true;
    if (cand_dist > best_dist + 1e-15) return true;
    if (cand_dist < best_dist - 1e-15) return false;
    if (rows[cand] < rows[best]) return true;
    if (rows[best] < rows[cand]) return false;
    return cand < best;
  };

  // farthest-point seeding, first pick farthest from the mean direction
  std::vector<int> centroids;
  std::vector<double> min_dist(t);
  {
    std::vector<double> mean_dir(tokens.dim(1), 0.0);
    for (const auto& r : rows) {
      for (size_t j = 0; j < r.size(); ++j) mean_dir[j] += r[j];
    }
    double norm = std::sqrt(std::max(dot(mean_dir, mean_dir), 1e-24));
    for (auto& v : mean_dir) v /= norm;
    int64_t first = -1;
    double first_dist = 0.0;
    for (int64_t i = 0; i < t; ++i) {
      double dist = 1.0 - dot(rows[i], mean_dir);
      if (prefer(i, dist, first, first_dist)) {
        first = i;
        first_dist = dist;
      }
    }
    centroids.push_back(static_cast<int>(first));
    for (int64_t i = 0; i < t; ++i) {
      min_dist[i] = 1.0 - dot(rows[i], rows[first]);
    }
  }
  while (static_cast<int64_t>(centroids.size()) < d) {
    int64_t best = -1;
    double best_dist = 0.0;
    for (int64_t i = 0; i < t; ++i) {
      if (prefer(i, min_dist[i], best, best_dist)) {
        best = i;
        best_dist = min_dist[i];
      }
    }
    centroids.push_back(static_cast<int>(best));
    for (int64_t i = 0; i < t; ++i) {
      min_dist[i] = std::min(min_dist[i], 1.0 - dot(rows[i], rows[best]));
    }
  }

  auto assign = [&](const std::vector<std::vector<double>>& centers) {
    std::vector<int> out(t);
    for (int64_t i = 0; i < t; ++i) {
      int best = 0;
      double best_sim = -std::numeric_limits<double>::infinity();
      for (size_t c = 0; c < centers.size(); ++c) {
        double sim = dot(rows[i], centers[c]);
        if (sim > best_sim + 1e-15) {
          best_sim = sim;
          best = static_cast<int>(c);
        }
      }
      out[i] = best;
    }
    return out;
  };

  std::vector<std::vector<double>> centers;
  for (int c : centroids) centers.push_back(rows[c]);
  std::vector<int> assignment = assign(centers);

  // one refinement pass over normalized cluster means
  {
    int64_t dim = tokens.dim(1);
    std::vector<std::vector<double>> means(d, std::vector<double>(dim, 0.0));
    std::vector<int64_t> counts(d, 0);
    for (int64_t i = 0; i < t; ++i) {
      counts[assignment[i]]++;
      for (int64_t j = 0; j < dim; ++j) means[assignment[i]][j] += rows[i][j];
    }
    for (int64_t c = 0; c < d; ++c) {
      if (counts[c] == 0) continue;
      double norm = std::sqrt(std::max(dot(means[c], means[c]), 1e-24));
      for (auto& v : means[c]) v /= norm;
    }
    // keep previous center for clusters that emptied out
    for (int64_t c = 0; c < d; ++c) {
      if (counts[c] == 0) means[c] = centers[c];
    }
    assignment = assign(means);
    centers = std::move(means);
  }

  // non-emptiness repair: pull the farthest token out of the largest cluster
  for (;;) {
    std::vector<int64_t> counts(d, 0);
    for (int a : assignment) counts[a]++;
    int empty = -1;
    for (int64_t c = 0; c < d; ++c) {
      if (counts[c] == 0) {
        empty = static_cast<int>(c);
        break;
      }
    }
    if (empty < 0) break;
    int largest = 0;
    for (int64_t c = 1; c < d; ++c) {
      if (counts[c] > counts[largest]) largest = static_cast<int>(c);
    }
    int worst = -1;
    double worst_sim = std::numeric_limits<double>::infinity();
    for (int64_t i = 0; i < t; ++i) {
      if (assignment[i] != largest) continue;
      double sim = dot(rows[i], centers[largest]);
      if (sim < worst_sim - 1e-15) {
        worst_sim = sim;
        worst = static_cast<int>(i);
      }
    }
    assignment[worst] = empty;
  }

  ClusterPlan plan;
  plan.assignment = std::move(assignment);
  plan.d = d;
  plan.scores = score_layer(tokens);  // [T,1]
  return plan;
}

Tensor compression_weights(const ClusterPlan& plan) {
  int64_t t = static_cast<int64_t>(plan.assignment.size());
  Tensor scores_row = reshape(plan.scores, {1, t});
  const double ninf = -std::numeric_limits<double>::infinity();
  std::vector<Tensor> rows;
  rows.reserve(plan.d);
  for (int64_t c = 0; c < plan.d; ++c) {
    std::vector<double> mask(t, 0.0);
    for (int64_t i = 0; i < t; ++i) {
      if (plan.assignment[i] != c) mask[i] = ninf;
    }
    Tensor masked = add(scores_row, Tensor::from_data({1, t}, std::move(mask)));
    rows.push_back(softmax(masked, 1));
  }
  return plan.d == 1 ? rows[0] : concat(rows, 0);  // [d, T]
}

Tensor compress(const Tensor& tokens, const ClusterPlan& plan) {
  if (static_cast<int64_t>(plan.assignment.size()) != tokens.dim(0)) {
    throw ContractError("cluster plan does not cover the token stack");
  }
  return matmul(compression_weights(plan), tokens);  // [d, d_v]
}

FcbParams FcbParams::init(int64_t d_v, int64_t clusters, int64_t n_heads,
                          Rng& rng) {
  FcbParams p;
  double stddev = 1.0 / std::sqrt(static_cast<double>(d_v));
  p.score = Linear::init(d_v, 1, rng, stddev);
  p.q = Linear::init(d_v, d_v, rng, stddev);
  p.k = Linear::init(d_v, d_v, rng, stddev);
  p.v = Linear::init(d_v, d_v, rng, stddev);
  p.phi_in = Linear::init(d_v, d_v, rng);
  p.phi_out = Linear::init(d_v, d_v, rng);
  p.clusters = clusters;
  p.n_heads = n_heads;
  return p;
}

void FcbParams::collect(std::vector<std::pair<std::string, Tensor>>& out,
                        const std::string& prefix) const {
  score.collect(out, prefix + ".score");
  q.collect(out, prefix + ".q");
  k.collect(out, prefix + ".k");
  v.collect(out, prefix + ".v");
  phi_in.collect(out, prefix + ".phi_in");
  phi_out.collect(out, prefix + ".phi_out");
}

Tensor fcb_attend(const Tensor& compressed, const Tensor& stack_tokens,
                  const Tensor& stack_scores, const FcbParams& params) {
  int64_t tq = compressed.dim(0);
  int64_t tk = stack_tokens.dim(0);
  int64_t d_v = stack_tokens.dim(1);
  if (d_v % params.n_heads != 0) {
    throw ShapeError("d_v not divisible by attention head count");
  }
  int64_t dk = d_v / params.n_heads;
  double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  Tensor q = params.q(compressed);
  Tensor k = params.k(stack_tokens);
  Tensor v = params.v(stack_tokens);
  Tensor key_bias = reshape(stack_scores, {1, tk});
  std::vector<Tensor> heads;
  heads.reserve(params.n_heads);
  for (int64_t h = 0; h < params.n_heads; ++h) {
    Tensor qh = slice(q, {0, h * dk}, {tq, dk});
    Tensor kh = slice(k, {0, h * dk}, {tk, dk});
    Tensor vh = slice(v, {0, h * dk}, {tk, dk});
    Tensor logits = add(mul_scalar(matmul(qh, transpose(kh)), scale), key_bias);
    heads.push_back(matmul(softmax(logits, 1), vh));
  }
  return params.n_heads == 1 ? heads[0] : concat(heads, 1);
}

Tensor project_freq(const Tensor& compressed, const Tensor& stack_tokens,
                    const Tensor& stack_scores, const FcbParams& params) {
  Tensor attended = fcb_attend(compressed, stack_tokens, stack_scores, params);
  Tensor pooled = mean(attended, 0, true);  // [1, d_v]
  Tensor fused = params.phi_out(gelu(params.phi_in(pooled)));
  return reshape(fused, {stack_tokens.dim(1)});
}

Tensor fuse_visual(const Tensor& x, const Tensor& x_h, const Tensor& gamma) {
  if (x.shape() != x_h.shape()) {
    throw ShapeError("fuse_visual operands disagree: " + shape_str(x.shape()) +
                     " vs " + shape_str(x_h.shape()));
  }
  Tensor keep = sub(Tensor::scalar(1.0), sigmoid(gamma));
  return add(x, mul(x_h, keep));
}

VisionBranch::VisionBranch(const VitConfig& config, int64_t clusters,
                           int64_t d_vt, double alpha,
                           const VisionToggles& toggles, Rng& rng)
    : cfg_(config), toggles_(toggles), alpha_(alpha), vit_(config, rng) {
  orig_ffg_ = FfgParams::init(cfg_.channels, rng);
  int64_t patch_dim = cfg_.patch_size * cfg_.patch_size * cfg_.channels;
  orig_patch_proj_ = Linear::init(patch_dim, cfg_.d_v, rng);
  for (int64_t j = 0; j < cfg_.n_layers; ++j) {
    layer_ffg_.push_back(FfgParams::init(cfg_.d_v, rng));
  }
  fcb_ = FcbParams::init(cfg_.d_v, clusters, cfg_.n_heads, rng);
  gamma_ = Tensor::zeros({}, true);  // sigmoid(0) = 0.5
  visual_proj_ = Linear::init(cfg_.d_v, d_vt, rng,
                              1.0 / std::sqrt(static_cast<double>(cfg_.d_v)));
}

FreqTokenStack VisionBranch::build_stack(const Tensor& image,
                                         const TinyViT::Output& vit_out) const {
  FreqTokenStack stack;
  if (toggles_.enable_orig_freq) {
    Tensor freq_image = ffg_forward(image, alpha_, orig_ffg_);
    stack.slabs.push_back(
        orig_patch_proj_(extract_patches(freq_image, cfg_.patch_size)));
  }
  if (toggles_.enable_multilayer_freq) {
    for (int64_t j = 0; j < cfg_.n_layers; ++j) {
      stack.slabs.push_back(
          layer_freq(vit_out.layer_tokens[j], alpha_, layer_ffg_[j]));
    }
  }
  return stack;
}

VisionBranch::Output VisionBranch::forward(const Tensor& image) const {
  TinyViT::Output vit_out = vit_.forward(image);
  Output out;
  out.cls = vit_out.cls;
  if (!toggles_.any_freq()) {
    out.fused = vit_out.cls;
    out.features = reshape(visual_proj_(reshape(out.fused, {1, cfg_.d_v})),
                           {visual_proj_.w.dim(1)});
    return out;
  }
  FreqTokenStack stack = build_stack(image, vit_out);
  Tensor tokens = stack.flat();
  Tensor compressed;
  Tensor scores;
  if (toggles_.enable_fcb) {
    int64_t d = std::min<int64_t>(fcb_.clusters, tokens.dim(0));
    ClusterPlan plan = cluster_tokens(tokens, d, fcb_.score);
    compressed = compress(tokens, plan);
    scores = plan.scores;
  } else {
    // without compression the full stack queries itself
    compressed = tokens;
    scores = fcb_.score(tokens);
  }
  Tensor x_h = project_freq(compressed, tokens, scores, fcb_);
  out.fused = fuse_visual(vit_out.cls, x_h, gamma_);
  out.features = reshape(visual_proj_(reshape(out.fused, {1, cfg_.d_v})),
                         {visual_proj_.w.dim(1)});
  return out;
}

void VisionBranch::collect(std::vector<std::pair<std::string, Tensor>>& out,
                           const std::string& prefix) const {
  vit_.collect(out, prefix + ".vit");
  for (auto& [name, tensor] : orig_ffg_.named_params(prefix + ".freq.ori")) {
    out.emplace_back(name, tensor);
  }
  orig_patch_proj_.collect(out, prefix + ".freq.ori_proj");
  for (size_t j = 0; j < layer_ffg_.size(); ++j) {
    for (auto& [name, tensor] :
         layer_ffg_[j].named_params(prefix + ".freq.layer" + std::to_string(j))) {
      out.emplace_back(name, tensor);
    }
  }
  fcb_.collect(out, prefix + ".fcb");
  out.emplace_back(prefix + ".fusion.gamma", gamma_);
  visual_proj_.collect(out, prefix + ".proj");
}

}  // namespace fadet
