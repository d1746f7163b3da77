#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "oamnet/model.hpp"
#include "spdc/metrics.hpp"

namespace oamnet {

struct LossWeights {
  double jsd = 1.0;
  double kl = 0.2;
  double mse = 0.2;
  double wemd = 0.5;
  double oam = 0.1;

  void validate() const;
  /// Ablation rows E0 .. E9.
  static LossWeights ablation(const std::string& id);
  static std::vector<std::string> ablation_ids();

  bool operator==(const LossWeights&) const = default;
};

template <class S>
struct LossTerms {
  nn::Tensor<S> total;
  double jsd = 0, kl = 0, mse = 0, wemd = 0, oam = 0;
};

template <class S>
nn::Tensor<S> oam_conservation_loss(const nn::Tensor<S>& pred, std::span<const int> ell_p) {
  return nn::oam_loss(pred, ell_p);
}

/// w_jsd JSD + w_kl KL(target || pred) + w_mse MSE + w_wemd WEMD + w_oam L_OAM.
template <class S>
LossTerms<S> hybrid_loss(const nn::Tensor<S>& pred, const nn::Array<S>& target,
                         const LossWeights& w, std::span<const int> ell_p) {
  LossTerms<S> out;
  const auto jsd = nn::jsd_loss(pred, target);
  const auto kl = nn::kl_loss(pred, target);
  const auto mse = nn::mse_loss(pred, target);
  const auto wemd = nn::wemd_loss(pred, target);
  const auto oam = oam_conservation_loss(pred, ell_p);
  out.jsd = static_cast<double>(jsd.item());
  out.kl = static_cast<double>(kl.item());
  out.mse = static_cast<double>(mse.item());
  out.wemd = static_cast<double>(wemd.item());
  out.oam = static_cast<double>(oam.item());
  out.total = nn::weighted_sum<S>(
      {jsd, kl, mse, wemd, oam},
      {static_cast<S>(w.jsd), static_cast<S>(w.kl), static_cast<S>(w.mse),
       static_cast<S>(w.wemd), static_cast<S>(w.oam)});
  return out;
}

/// Batch-averaged loss terms over a split.
struct LossStats {
  double total = 0, jsd = 0, kl = 0, mse = 0, wemd = 0, oam = 0;
};

struct EpochLog {
  int epoch = 0;
  double lr = 0;
  LossStats train, val;
  bool best = false;
};

struct TrainOptions {
  int epochs = 200;
  int batch = 64;
  double lr = 1e-3;
  double lr_min = 1e-5;
  int patience = 20;
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> history_path;  ///< JSON lines, one per epoch
  std::function<void(const EpochLog&)> on_epoch;
};

/// Best-validation model with its optimizer state and provenance.
struct Checkpoint {
  Model<float> model;
  LossWeights weights;
  std::uint64_t seed = 0;
  spdc::SimConfig sim;
  int epoch = 0;
};

struct TrainResult {
  Checkpoint best;
  std::vector<EpochLog> history;
};

/// Mini-batch Adam with cosine decay and early stopping on the validation
/// total. Standardization statistics come from the train split only.
TrainResult train(const spdc::data::Dataset& ds, const spdc::data::Split& split,
                  const ModelConfig& cfg, const LossWeights& weights, const TrainOptions& opts);

std::string history_line(const EpochLog& e);

/// Predictions for a list of parameters, [n, M, L] as (M, L) arrays in double.
std::vector<Eigen::ArrayXXd> predict_batch(Model<float>& model,
                                           std::span<const PhysicalParams> params,
                                           int batch = 64);

struct Prediction {
  spdc::ModalDistribution dist;
  double schmidt_number = 0;
  spdc::OamSpectrum spectrum;
};

Prediction predict(Model<float>& model, const PhysicalParams& params);

struct EvalOptions {
  /// Pair each target with the conditioning of another sample.
  bool shuffle_conditions = false;
  std::uint64_t shuffle_seed = 0;
  int batch = 64;
};

struct EvalReport {
  spdc::metrics::MetricReport mean;
  double oam_bias = 0;  ///< mean |E[ell] - ell_p / 2|
  std::size_t count = 0;
  std::vector<Eigen::ArrayXXd> predictions;
};

/// Per-sample metrics against the stored simulator targets, averaged.
EvalReport evaluate(Model<float>& model, const spdc::data::Dataset& ds,
                    const std::vector<std::size_t>& indices, const EvalOptions& opts = {});

/// Throws std::invalid_argument when the model grid differs from the data grid.
void require_congruent(const ModelConfig& cfg, const spdc::SimConfig& sim);

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
std::string serialize_checkpoint(const Checkpoint& ck);
Checkpoint deserialize_checkpoint(std::string_view bytes);
Checkpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const LossWeights& w);
LossWeights loss_weights_from_json(const nlohmann::json& j);

}  // namespace oamnet
