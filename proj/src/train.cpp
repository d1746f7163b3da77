#include "oamnet/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "spdc/errors.hpp"

namespace oamnet {

using spdc::data::Dataset;
using spdc::data::Split;

void LossWeights::validate() const {
  for (double w : {jsd, kl, mse, wemd, oam}) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("loss weights must be finite and >= 0");
  }
  if (!(jsd > 0.0)) throw std::invalid_argument("loss weights: w_jsd must be > 0");
}

LossWeights LossWeights::ablation(const std::string& id) {
  //                     jsd  kl   mse  wemd oam
  static const std::vector<std::pair<std::string, LossWeights>> rows{
      {"E0", {1, 0, 0, 0, 0}},         {"E1", {1, 0.2, 0, 0, 0}},
      {"E2", {1, 0, 0.2, 0, 0}},       {"E3", {1, 0, 0, 0.5, 0}},
      {"E4", {1, 0, 0, 0, 0.1}},       {"E5", {1, 0.2, 0.2, 0.5, 0}},
      {"E6", {1, 0.2, 0.2, 0.5, 0.05}}, {"E7", {1, 0.2, 0.2, 0.5, 0.1}},
      {"E8", {1, 0.2, 0.2, 0.5, 0.2}}, {"E9", {1, 0.2, 0.2, 0.5, 0.3}},
  };
  for (const auto& [name, w] : rows) {
    if (name == id) return w;
  }
  throw std::invalid_argument("unknown ablation id '" + id + "' (expected E0..E9)");
}

std::vector<std::string> LossWeights::ablation_ids() {
  std::vector<std::string> ids;
  for (int i = 0; i <= 9; ++i) ids.push_back("E" + std::to_string(i));
  return ids;
}

void require_congruent(const ModelConfig& cfg, const spdc::SimConfig& sim) {
  if (cfg.m_modes != sim.m_modes || cfg.ell_max != sim.ell_max) {
    throw std::invalid_argument("grid mismatch: model predicts " + std::to_string(cfg.m_modes) +
                                " x " + std::to_string(cfg.n_ell()) + " but data holds " +
                                std::to_string(sim.m_modes) + " x " +
                                std::to_string(2 * sim.ell_max + 1));
  }
}

namespace {

struct BatchData {
  Batch<float> inputs;
  nn::Array<float> target;
};

BatchData gather(const Dataset& ds, std::span<const std::size_t> idx,
                 const StandardizationStats& stats) {
  std::vector<PhysicalParams> ps;
  ps.reserve(idx.size());
  for (auto i : idx) ps.push_back(ds.records[i].params);
  BatchData b{make_batch<float>(ps, stats), {}};
  const auto& t0 = ds.records[idx[0]].target;
  const Eigen::Index n = t0.size();
  b.target.resize(n * static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) {
    using RM = Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<RM>(b.target.data() + k * n, t0.rows(), t0.cols()) = ds.records[idx[k]].target;
  }
  return b;
}

void add_terms(LossStats& acc, const LossTerms<float>& t, double w) {
  acc.total += w * static_cast<double>(t.total.item());
  acc.jsd += w * t.jsd;
  acc.kl += w * t.kl;
  acc.mse += w * t.mse;
  acc.wemd += w * t.wemd;
  acc.oam += w * t.oam;
}

void scale_terms(LossStats& s, double n) {
  for (double* v : {&s.total, &s.jsd, &s.kl, &s.mse, &s.wemd, &s.oam}) *v /= n;
}

LossStats validation_loss(Model<float>& model, const Dataset& ds,
                          const std::vector<std::size_t>& idx, const LossWeights& w, int batch) {
  nn::NoGradGuard guard;
  LossStats s;
  for (std::size_t off = 0; off < idx.size(); off += static_cast<std::size_t>(batch)) {
    const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(batch), idx.size() - off);
    const auto b = gather(ds, std::span(idx).subspan(off, n), model.stats());
    const auto pred = model.forward(b.inputs);
    add_terms(s, hybrid_loss(pred, b.target, w, b.inputs.ell_p), static_cast<double>(n));
  }
  scale_terms(s, static_cast<double>(idx.size()));
  return s;
}

nlohmann::json terms_json(const LossStats& s) {
  return {{"total", s.total}, {"jsd", s.jsd}, {"kl", s.kl},
          {"mse", s.mse},     {"wemd", s.wemd}, {"oam", s.oam}};
}

}  // namespace

std::string history_line(const EpochLog& e) {
  nlohmann::json j{{"epoch", e.epoch},
                   {"lr", e.lr},
                   {"train", terms_json(e.train)},
                   {"val", terms_json(e.val)},
                   {"best", e.best}};
  return j.dump();
}

TrainResult train(const Dataset& ds, const Split& split, const ModelConfig& cfg,
                  const LossWeights& weights, const TrainOptions& opts) {
  weights.validate();
  require_congruent(cfg, ds.header.sim);
  if (split.train.empty()) throw std::invalid_argument("train: empty training split");
  if (opts.epochs < 1 || opts.batch < 1) throw std::invalid_argument("train: epochs and batch must be >= 1");

  const auto stats = spdc::data::compute_stats(ds, split.train);
  Model<float> model(cfg, stats, opts.seed);
  auto params = model.parameter_ptrs();
  std::mt19937_64 rng(opts.seed ^ 0x7f4a7c159e3779b9ull);

  std::ofstream history;
  if (opts.history_path) {
    if (opts.history_path->has_parent_path()) {
      std::filesystem::create_directories(opts.history_path->parent_path());
    }
    history.open(*opts.history_path, std::ios::trunc);
    if (!history) throw spdc::IoError("cannot write history file " + opts.history_path->string());
  }

  TrainResult out{Checkpoint{model, weights, opts.seed, ds.header.sim, 0}, {}};
  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;
  std::vector<std::size_t> order = split.train;

  for (int epoch = 1; epoch <= opts.epochs; ++epoch) {
    const double frac = opts.epochs > 1 ? static_cast<double>(epoch - 1) / (opts.epochs - 1) : 0.0;
    nn::AdamConfig adam;
    adam.lr = opts.lr_min + 0.5 * (opts.lr - opts.lr_min) * (1.0 + std::cos(M_PI * frac));
    std::shuffle(order.begin(), order.end(), rng);

    EpochLog log;
    log.epoch = epoch;
    log.lr = adam.lr;
    std::size_t batch_index = 0;
    for (std::size_t off = 0; off < order.size(); off += static_cast<std::size_t>(opts.batch), ++batch_index) {
      const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(opts.batch), order.size() - off);
      const auto b = gather(ds, std::span(order).subspan(off, n), stats);
      try {
        const auto pred = model.forward(b.inputs);
        auto terms = hybrid_loss(pred, b.target, weights, b.inputs.ell_p);
        if (!std::isfinite(terms.total.item())) throw nn::NonFiniteError("loss is not finite");
        add_terms(log.train, terms, static_cast<double>(n));
        terms.total.backward();
        nn::adam_step(params, adam);
      } catch (const nn::NonFiniteError& e) {
        throw nn::NonFiniteError(std::string(e.what()) + " (epoch " + std::to_string(epoch) +
                                 ", batch " + std::to_string(batch_index) + ")");
      }
    }
    scale_terms(log.train, static_cast<double>(order.size()));
    log.val = split.val.empty() ? log.train
                                : validation_loss(model, ds, split.val, weights, opts.batch);
    if (!std::isfinite(log.val.total)) {
      throw nn::NonFiniteError("validation loss is not finite (epoch " + std::to_string(epoch) + ")");
    }
    if (log.val.total < best) {
      best = log.val.total;
      since_best = 0;
      log.best = true;
      out.best.model = model;
      out.best.epoch = epoch;
    } else {
      ++since_best;
    }
    out.history.push_back(log);
    if (history) history << history_line(log) << '\n' << std::flush;
    if (opts.on_epoch) opts.on_epoch(log);
    if (opts.patience > 0 && since_best >= opts.patience) break;
  }
  return out;
}

std::vector<Eigen::ArrayXXd> predict_batch(Model<float>& model, std::span<const PhysicalParams> params,
                                           int batch) {
  nn::NoGradGuard guard;
  const int M = model.config().m_modes, L = model.config().n_ell();
  const Eigen::Index n = static_cast<Eigen::Index>(M) * L;
  std::vector<Eigen::ArrayXXd> out;
  out.reserve(params.size());
  for (std::size_t off = 0; off < params.size(); off += static_cast<std::size_t>(batch)) {
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(batch), params.size() - off);
    const auto pred = model.forward(make_batch<float>(params.subspan(off, k), model.stats()));
    for (std::size_t i = 0; i < k; ++i) {
      using RM = Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
      Eigen::ArrayXXd w = Eigen::Map<const RM>(pred.value().data() + i * n, M, L).cast<double>();
      w /= w.sum();
      out.push_back(std::move(w));
    }
  }
  return out;
}

Prediction predict(Model<float>& model, const PhysicalParams& params) {
  params.validate();
  auto w = predict_batch(model, std::span(&params, 1)).front();
  Prediction p;
  p.dist.weights = std::move(w);
  p.dist.ell_max = model.config().ell_max;
  p.dist.ell_p = params.ell_p;
  p.dist.gain = params.g;
  p.dist.captured = 1.0;
  p.schmidt_number = spdc::schmidt_number(p.dist);
  p.spectrum = spdc::oam_spectrum_marginal(p.dist);
  return p;
}

EvalReport evaluate(Model<float>& model, const Dataset& ds, const std::vector<std::size_t>& indices,
                    const EvalOptions& opts) {
  require_congruent(model.config(), ds.header.sim);
  if (indices.empty()) throw std::invalid_argument("evaluate: empty split");
  std::vector<PhysicalParams> cond;
  for (auto i : indices) cond.push_back(ds.records.at(i).params);
  if (opts.shuffle_conditions) {
    std::mt19937_64 rng(opts.shuffle_seed);
    std::shuffle(cond.begin(), cond.end(), rng);
  }
  EvalReport r;
  r.predictions = predict_batch(model, cond, opts.batch);
  const int ell_max = model.config().ell_max;
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto& rec = ds.records[indices[k]];
    const Eigen::ArrayXXd target = rec.target.cast<double>();
    r.mean += spdc::metrics::compare(r.predictions[k], target);
    const Eigen::ArrayXd s = r.predictions[k].colwise().sum().transpose();
    double mu = 0.0;
    for (Eigen::Index l = 0; l < s.size(); ++l) mu += static_cast<double>(l - ell_max) * s[l];
    r.oam_bias += std::abs(mu - 0.5 * rec.params.ell_p);
  }
  r.count = indices.size();
  r.mean /= static_cast<double>(r.count);
  r.oam_bias /= static_cast<double>(r.count);
  return r;
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"channels", c.channels},   {"dilations", c.dilations}, {"kernel", c.kernel},
          {"groups", c.groups},       {"cond_hidden", c.cond_hidden}, {"embed_dim", c.embed_dim},
          {"m_modes", c.m_modes},     {"ell_max", c.ell_max},     {"ell_p_max", c.ell_p_max},
          {"p_p_max", c.p_p_max},     {"use_film", c.use_film},   {"param_budget", c.param_budget}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.channels = j.at("channels").get<int>();
  c.dilations = j.at("dilations").get<std::vector<int>>();
  c.kernel = j.at("kernel").get<int>();
  c.groups = j.at("groups").get<int>();
  c.cond_hidden = j.at("cond_hidden").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.m_modes = j.at("m_modes").get<int>();
  c.ell_max = j.at("ell_max").get<int>();
  c.ell_p_max = j.at("ell_p_max").get<int>();
  c.p_p_max = j.at("p_p_max").get<int>();
  c.use_film = j.at("use_film").get<bool>();
  c.param_budget = j.at("param_budget").get<double>();
  return c;
}

nlohmann::json to_json(const LossWeights& w) {
  return {{"jsd", w.jsd}, {"kl", w.kl}, {"mse", w.mse}, {"wemd", w.wemd}, {"oam", w.oam}};
}

LossWeights loss_weights_from_json(const nlohmann::json& j) {
  return {j.at("jsd").get<double>(), j.at("kl").get<double>(), j.at("mse").get<double>(),
          j.at("wemd").get<double>(), j.at("oam").get<double>()};
}

}  // namespace oamnet
