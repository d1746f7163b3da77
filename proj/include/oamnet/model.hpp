#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "nn/nn.hpp"
#include "spdc/dataset.hpp"

namespace oamnet {

using spdc::PhysicalParams;
using spdc::data::StandardizationStats;

struct ModelConfig {
  int channels = 104;
  std::vector<int> dilations{1, 2, 4, 8};
  int kernel = 3;
  int groups = 8;
  int cond_hidden = 64;
  int embed_dim = 8;
  int m_modes = 8;
  int ell_max = 12;
  int ell_p_max = 4;
  int p_p_max = 4;
  bool use_film = true;       ///< false: plain residual stack, no conditioning at all
  double param_budget = 0.95e6;

  int n_ell() const { return 2 * ell_max + 1; }
  int cond_dim() const { return StandardizationStats::kFeatures + 2 * embed_dim; }
  void validate() const;

  /// Parameter-matched baseline: no FiLM, no conditioning, wider channels.
  static ModelConfig baseline(const ModelConfig& like);

  bool operator==(const ModelConfig&) const = default;
};

/// Closed-form trainable parameter count of a configuration.
std::size_t count_parameters(const ModelConfig& cfg);

/// Network inputs for B samples: z-scored continuous features [B, 4] and the
/// raw discrete indices.
template <class S>
struct Batch {
  int size = 0;
  nn::Array<S> features;
  std::vector<int> ell_p, p_p;
};

template <class S>
Batch<S> make_batch(std::span<const PhysicalParams> params, const StandardizationStats& stats) {
  Batch<S> b;
  b.size = static_cast<int>(params.size());
  b.features.resize(b.size * StandardizationStats::kFeatures);
  for (int i = 0; i < b.size; ++i) {
    const auto z = stats.apply(params[i]);
    for (int k = 0; k < StandardizationStats::kFeatures; ++k) {
      b.features[i * StandardizationStats::kFeatures + k] = static_cast<S>(z[k]);
    }
    b.ell_p.push_back(params[i].ell_p);
    b.p_p.push_back(params[i].p_p);
  }
  return b;
}

/// Dilated FiLM residual network over the (m, ell) grid.
template <class S>
class Model {
 public:
  using Tensor = nn::Tensor<S>;
  using Parameter = nn::Parameter<S>;

  Model(const ModelConfig& cfg, const StandardizationStats& stats, std::uint64_t seed);
  // Copies are deep: the parameter tensors and Adam moments are duplicated.
  Model(const Model& o) : Model(o, 0) {}
  Model& operator=(const Model& o) {
    if (this != &o) *this = Model(o);
    return *this;
  }
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  const ModelConfig& config() const { return cfg_; }
  const StandardizationStats& stats() const { return stats_; }
  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  std::vector<Parameter*> parameter_ptrs();
  std::size_t parameter_count() const;
  Parameter& find(const std::string& name);

  /// Standardized continuous block followed by the two embedding rows.
  Tensor condition(const Batch<S>& batch);
  /// Two SiLU-activated dense layers.
  Tensor conditional_mlp(const Tensor& c);
  /// (m, ell) coordinate channels, [B, 2, M, L].
  Tensor coordinate_map(int batch) const;
  Tensor film_resblock(const Tensor& h, const Tensor& cond, int block, bool modulate);

  /// [B, 1, M, L] distributions. With modulate = false every FiLM is skipped,
  /// which is what a zeroed FiLM head computes.
  Tensor forward(const Batch<S>& batch, bool modulate = true);

 private:
  struct Block {
    int conv1_w, conv1_b, gn1_g, gn1_b, conv2_w, conv2_b, gn2_g, gn2_b;
    int film1_w = -1, film1_b = -1, film2_w = -1, film2_b = -1;
    int dilation;
  };

  Model(const Model& o, int)
      : cfg_(o.cfg_), stats_(o.stats_), emb_ell_(o.emb_ell_), emb_pp_(o.emb_pp_),
        mlp1_w_(o.mlp1_w_), mlp1_b_(o.mlp1_b_), mlp2_w_(o.mlp2_w_), mlp2_b_(o.mlp2_b_),
        stem_w_(o.stem_w_), stem_b_(o.stem_b_), stem_g_(o.stem_g_), stem_beta_(o.stem_beta_),
        head_w_(o.head_w_), head_b_(o.head_b_), blocks_(o.blocks_) {
    for (const auto& q : o.params_) {
      Parameter c(q.name, q.shape(), q.value());
      c.m = q.m;
      c.v = q.v;
      c.step = q.step;
      params_.push_back(std::move(c));
    }
  }

  int add(std::string name, nn::Shape shape, nn::Array<S> init);
  Tensor p(int i) { return params_[static_cast<std::size_t>(i)].tensor; }
  Tensor film_params(const Tensor& cond, int w, int b) { return nn::linear(cond, p(w), p(b)); }

  ModelConfig cfg_;
  StandardizationStats stats_;
  std::vector<Parameter> params_;
  int emb_ell_ = -1, emb_pp_ = -1, mlp1_w_ = -1, mlp1_b_ = -1, mlp2_w_ = -1, mlp2_b_ = -1;
  int stem_w_, stem_b_, stem_g_, stem_beta_, head_w_, head_b_;
  std::vector<Block> blocks_;
};

// ---------------------------------------------------------------------------

template <class S>
int Model<S>::add(std::string name, nn::Shape shape, nn::Array<S> init) {
  params_.emplace_back(std::move(name), std::move(shape), std::move(init));
  return static_cast<int>(params_.size()) - 1;
}

template <class S>
Model<S>::Model(const ModelConfig& cfg, const StandardizationStats& stats, std::uint64_t seed)
    : cfg_(cfg), stats_(stats) {
  cfg_.validate();
  stats_.validate();
  std::mt19937_64 rng(seed);
  const int C = cfg_.channels, k = cfg_.kernel, H = cfg_.cond_hidden;
  auto conv_w = [&](int co, int ci, int kk) {
    return nn::kaiming_uniform<S>(static_cast<Eigen::Index>(co) * ci * kk * kk, ci * kk * kk, rng);
  };
  auto zeros = [](Eigen::Index n) { return nn::Array<S>(nn::Array<S>::Zero(n)); };
  auto ones = [](Eigen::Index n) { return nn::Array<S>(nn::Array<S>::Ones(n)); };

  if (cfg_.use_film) {
    const int d = cfg_.embed_dim;
    emb_ell_ = add("embed.ell_p", {2 * cfg_.ell_p_max + 1, d},
                   nn::normal<S>((2 * cfg_.ell_p_max + 1) * d, 0.02, rng));
    emb_pp_ = add("embed.p_p", {cfg_.p_p_max + 1, d}, nn::normal<S>((cfg_.p_p_max + 1) * d, 0.02, rng));
    mlp1_w_ = add("cond.fc1.w", {H, cfg_.cond_dim()},
                  nn::kaiming_uniform<S>(H * cfg_.cond_dim(), cfg_.cond_dim(), rng));
    mlp1_b_ = add("cond.fc1.b", {H}, zeros(H));
    mlp2_w_ = add("cond.fc2.w", {H, H}, nn::kaiming_uniform<S>(H * H, H, rng));
    mlp2_b_ = add("cond.fc2.b", {H}, zeros(H));
  }
  stem_w_ = add("stem.conv.w", {C, 2, k, k}, conv_w(C, 2, k));
  stem_b_ = add("stem.conv.b", {C}, zeros(C));
  stem_g_ = add("stem.gn.gamma", {C}, ones(C));
  stem_beta_ = add("stem.gn.beta", {C}, zeros(C));
  for (std::size_t i = 0; i < cfg_.dilations.size(); ++i) {
    const std::string pre = "block" + std::to_string(i) + ".";
    Block b{};
    b.dilation = cfg_.dilations[i];
    b.conv1_w = add(pre + "conv1.w", {C, C, k, k}, conv_w(C, C, k));
    b.conv1_b = add(pre + "conv1.b", {C}, zeros(C));
    b.gn1_g = add(pre + "gn1.gamma", {C}, ones(C));
    b.gn1_b = add(pre + "gn1.beta", {C}, zeros(C));
    b.conv2_w = add(pre + "conv2.w", {C, C, k, k}, conv_w(C, C, k));
    b.conv2_b = add(pre + "conv2.b", {C}, zeros(C));
    b.gn2_g = add(pre + "gn2.gamma", {C}, ones(C));
    b.gn2_b = add(pre + "gn2.beta", {C}, zeros(C));
    if (cfg_.use_film) {
      b.film1_w = add(pre + "film1.w", {2 * C, H}, zeros(2 * C * H));
      b.film1_b = add(pre + "film1.b", {2 * C}, zeros(2 * C));
      b.film2_w = add(pre + "film2.w", {2 * C, H}, zeros(2 * C * H));
      b.film2_b = add(pre + "film2.b", {2 * C}, zeros(2 * C));
    }
    blocks_.push_back(b);
  }
  // Small head so the initial output is close to uniform.
  head_w_ = add("head.w", {1, C, 1, 1}, nn::kaiming_uniform<S>(C, C, rng, 0.1 / std::sqrt(6.0)));
  head_b_ = add("head.b", {1}, zeros(1));
}

template <class S>
std::vector<nn::Parameter<S>*> Model<S>::parameter_ptrs() {
  std::vector<Parameter*> out;
  for (auto& q : params_) out.push_back(&q);
  return out;
}

template <class S>
std::size_t Model<S>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& q : params_) n += static_cast<std::size_t>(q.tensor.size());
  return n;
}

template <class S>
nn::Parameter<S>& Model<S>::find(const std::string& name) {
  for (auto& q : params_) {
    if (q.name == name) return q;
  }
  throw std::invalid_argument("no parameter named " + name);
}

template <class S>
nn::Tensor<S> Model<S>::condition(const Batch<S>& batch) {
  if (!cfg_.use_film) throw std::logic_error("baseline model has no conditioning path");
  std::vector<int> li, pi;
  for (int i = 0; i < batch.size; ++i) {
    const int l = batch.ell_p[i], q = batch.p_p[i];
    if (l < -cfg_.ell_p_max || l > cfg_.ell_p_max) {
      throw std::invalid_argument("ell_p = " + std::to_string(l) + " outside the embedding vocabulary");
    }
    if (q < 0 || q > cfg_.p_p_max) {
      throw std::invalid_argument("p_p = " + std::to_string(q) + " outside the embedding vocabulary");
    }
    li.push_back(l + cfg_.ell_p_max);
    pi.push_back(q);
  }
  const auto z = Tensor::constant({batch.size, StandardizationStats::kFeatures}, batch.features);
  return nn::concat<S>({z, nn::embedding<S>(li, p(emb_ell_)), nn::embedding<S>(pi, p(emb_pp_))});
}

template <class S>
nn::Tensor<S> Model<S>::conditional_mlp(const Tensor& c) {
  const auto h = nn::silu(nn::linear(c, p(mlp1_w_), p(mlp1_b_)));
  return nn::silu(nn::linear(h, p(mlp2_w_), p(mlp2_b_)));
}

template <class S>
nn::Tensor<S> Model<S>::coordinate_map(int batch) const {
  const int M = cfg_.m_modes, L = cfg_.n_ell(), n = M * L;
  nn::Array<S> v(static_cast<Eigen::Index>(batch) * 2 * n);
  for (int b = 0; b < batch; ++b) {
    for (int m = 0; m < M; ++m) {
      for (int l = 0; l < L; ++l) {
        const Eigen::Index o = static_cast<Eigen::Index>(b) * 2 * n + m * L + l;
        v[o] = M > 1 ? static_cast<S>(2.0 * m / (M - 1) - 1.0) : S(0);
        v[o + n] = static_cast<S>(static_cast<double>(l - cfg_.ell_max) / cfg_.ell_max);
      }
    }
  }
  return Tensor::constant({batch, 2, M, L}, std::move(v));
}

template <class S>
nn::Tensor<S> Model<S>::film_resblock(const Tensor& h, const Tensor& cond, int block, bool modulate) {
  const Block& b = blocks_.at(static_cast<std::size_t>(block));
  const bool film = modulate && cfg_.use_film;
  auto x = nn::conv2d(h, p(b.conv1_w), p(b.conv1_b), b.dilation);
  x = nn::group_norm(x, cfg_.groups, p(b.gn1_g), p(b.gn1_b));
  if (film) x = nn::film(x, film_params(cond, b.film1_w, b.film1_b));
  x = nn::silu(x);
  x = nn::conv2d(x, p(b.conv2_w), p(b.conv2_b), b.dilation);
  x = nn::group_norm(x, cfg_.groups, p(b.gn2_g), p(b.gn2_b));
  if (film) x = nn::film(x, film_params(cond, b.film2_w, b.film2_b));
  return nn::silu(nn::add(x, h));
}

template <class S>
nn::Tensor<S> Model<S>::forward(const Batch<S>& batch, bool modulate) {
  Tensor cond;
  if (cfg_.use_film && modulate) cond = conditional_mlp(condition(batch));
  auto h = nn::conv2d(coordinate_map(batch.size), p(stem_w_), p(stem_b_), 1);
  h = nn::silu(nn::group_norm(h, cfg_.groups, p(stem_g_), p(stem_beta_)));
  for (int i = 0; i < static_cast<int>(blocks_.size()); ++i) h = film_resblock(h, cond, i, modulate);
  return nn::softmax_grid(nn::conv2d(h, p(head_w_), p(head_b_), 1));
}

}  // namespace oamnet
