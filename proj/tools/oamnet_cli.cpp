// oamnet: simulator, dataset, training and evaluation workflow.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string_view>

#include <CLI11.hpp>
#include <json.hpp>

#include "oamnet/bench.hpp"
#include "oamnet/train.hpp"
#include "spdc/binary_io.hpp"
#include "spdc/errors.hpp"

#ifndef OAMNET_VERSION
#define OAMNET_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kIo = 1, kInvalid = 2, kInvariant = 3 };

struct Common {
  std::uint64_t seed = 0;
  bool strict = false;
  int jobs = 0;
};

struct SimFlags {
  int n_radial = 64;
  int n_angular = 256;
  double q_max = 0.0;
  int ell_max = 12;
  int m_modes = 8;
  std::string crystal;

  spdc::SimConfig config() const {
    spdc::SimConfig c;
    c.n_radial = n_radial;
    c.n_angular = n_angular;
    c.q_max_per_um = q_max;
    c.ell_max = ell_max;
    c.m_modes = m_modes;
    if (!crystal.empty()) c.crystal = spdc::CrystalSpec::load(crystal);
    return c;
  }
};

void add_params(CLI::App* cmd, spdc::PhysicalParams& p) {
  cmd->add_option("--g", p.g, "parametric gain")->capture_default_str();
  cmd->add_option("--theta", p.theta_deg, "crystal angle, degrees")->capture_default_str();
  cmd->add_option("--L", p.L_um, "crystal length, um")->capture_default_str();
  cmd->add_option("--wp", p.w_p_um, "pump waist, um")->capture_default_str();
  cmd->add_option("--ellp", p.ell_p, "pump OAM index")->capture_default_str();
  cmd->add_option("--pp", p.p_p, "pump radial index")->capture_default_str();
  cmd->add_option("--lambda-p", p.lambda_p_um, "pump wavelength, um")->capture_default_str();
  cmd->add_option("--lambda-s", p.lambda_s_um, "signal wavelength, um")->capture_default_str();
}

void add_sim(CLI::App* cmd, SimFlags& s) {
  cmd->add_option("--n", s.n_radial, "radial points per axis")->capture_default_str();
  cmd->add_option("--p", s.n_angular, "angular points (power of two)")->capture_default_str();
  cmd->add_option("--qmax", s.q_max, "radial cutoff in rad/um (0: automatic)")->capture_default_str();
  cmd->add_option("--ellmax", s.ell_max, "OAM grid half-width")->capture_default_str();
  cmd->add_option("--m-modes", s.m_modes, "radial modes kept per sector")->capture_default_str();
  cmd->add_option("--crystal", s.crystal, "crystal spec file (key = value)");
}

std::string distribution_table(const spdc::ModalDistribution& d) {
  std::ostringstream os;
  os << "m, ell, weight\n";
  char buf[64];
  for (int m = 0; m < d.m_modes(); ++m) {
    for (int l = -d.ell_max; l <= d.ell_max; ++l) {
      std::snprintf(buf, sizeof buf, "%d, %d, %.9e\n", m, l, d.at(m, l));
      os << buf;
    }
  }
  return os.str();
}

void print_summary(const spdc::ModalDistribution& d, double K) {
  std::printf("K = %.6f\n", K);
  std::vector<std::tuple<double, int, int>> modes;
  for (int m = 0; m < d.m_modes(); ++m) {
    for (int l = -d.ell_max; l <= d.ell_max; ++l) modes.emplace_back(d.at(m, l), m, l);
  }
  std::stable_sort(modes.begin(), modes.end(),
                   [](const auto& a, const auto& b) { return std::get<0>(a) > std::get<0>(b); });
  std::printf("top modes (m, ell, weight):\n");
  for (std::size_t i = 0; i < std::min<std::size_t>(5, modes.size()); ++i) {
    std::printf("  %d, %d, %.6e\n", std::get<1>(modes[i]), std::get<2>(modes[i]), std::get<0>(modes[i]));
  }
  const auto s = spdc::oam_spectrum_marginal(d);
  std::printf("S(ell):\n");
  for (int l = -s.ell_max; l <= s.ell_max; ++l) std::printf("  %d, %.6e\n", l, s.at(l));
}

/// Single-record dataset file holding one simulated distribution.
void write_distribution(const fs::path& path, const spdc::PhysicalParams& p,
                        const spdc::SimConfig& sim, const spdc::ModalDistribution& d) {
  spdc::data::Dataset ds;
  ds.header.sim = sim;
  ds.header.count = 1;
  ds.header.provenance = spdc::data::sim_config_hash(sim);
  ds.records.push_back({p, d.weights.cast<float>(), ds.header.provenance});
  spdc::io::write_file(path, spdc::data::serialize(ds));
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw std::invalid_argument("cannot parse number '" + item + "' in list '" + s + "'");
    }
  }
  return out;
}

spdc::data::Range parse_range(const std::string& s) {
  const auto v = parse_list(s);
  if (v.size() != 2) throw std::invalid_argument("range '" + s + "' must be lo,hi");
  return {v[0], v[1]};
}

std::vector<int> parse_ints(const std::string& s) {
  std::vector<int> out;
  for (double v : parse_list(s)) out.push_back(static_cast<int>(v));
  return out;
}

std::vector<std::size_t> select_split(const spdc::data::Dataset& ds, const std::string& which) {
  const auto sp = ds.splits();
  if (which == "train") return sp.train;
  if (which == "val") return sp.val;
  if (which == "test") return sp.test;
  if (which == "all") {
    std::vector<std::size_t> all(ds.records.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return all;
  }
  throw std::invalid_argument("unknown split '" + which + "' (train|val|test|all)");
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

int resolve_jobs(const Common& c) {
  if (c.strict) return 1;
  if (c.jobs > 0) return c.jobs;
  if (const char* env = std::getenv("OAMNET_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return 1;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"SPDC Schmidt-mode simulator and OAMNet surrogate"};
  app.set_version_flag("--version", OAMNET_VERSION);
  app.footer("oamnet replay MANIFEST re-runs the command line recorded in a run manifest.");
  app.require_subcommand(1);
  Common common;
  std::string manifest_path;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--seed", common.seed, "random seed")->capture_default_str();
    cmd->add_flag("--strict", common.strict, "single-threaded deterministic mode");
    cmd->add_option("--jobs", common.jobs, "worker cap (default: OAMNET_THREADS or 1)");
    cmd->add_option("--manifest", manifest_path, "where to write the run manifest");
  };

  // simulate
  spdc::PhysicalParams sim_p;
  SimFlags sim_f;
  std::string sim_out;
  auto* simulate = app.add_subcommand("simulate", "run the Schmidt-mode simulator");
  add_params(simulate, sim_p);
  add_sim(simulate, sim_f);
  simulate->add_option("--out", sim_out, "output prefix (.txt table, .oamd binary)");
  add_common(simulate);

  // phase-match
  spdc::PhysicalParams pm_p;
  std::string pm_crystal;
  auto* phase = app.add_subcommand("phase-match", "collinear type-I phase-matching angle");
  phase->add_option("--lambda-p", pm_p.lambda_p_um)->capture_default_str();
  phase->add_option("--lambda-s", pm_p.lambda_s_um)->capture_default_str();
  phase->add_option("--crystal", pm_crystal, "crystal spec file");
  add_common(phase);

  // gen-dataset
  spdc::data::GenerateOptions gen;
  SimFlags gen_f;
  std::string gen_out, gen_merge, g_range, th_range, L_range, wp_range, ellp_set, pp_set, fractions;
  auto* gen_cmd = app.add_subcommand("gen-dataset", "sample parameters and simulate labelled records");
  gen_cmd->add_option("--count", gen.n, "number of records")->capture_default_str();
  add_sim(gen_cmd, gen_f);
  gen_cmd->add_flag("--stratified", gen.stratified, "cover every (ell_p, p_p) cell");
  gen_cmd->add_option("--g-range", g_range, "lo,hi");
  gen_cmd->add_option("--theta-range", th_range, "lo,hi");
  gen_cmd->add_option("--L-range", L_range, "lo,hi");
  gen_cmd->add_option("--wp-range", wp_range, "lo,hi");
  gen_cmd->add_option("--ellp-set", ellp_set, "comma list");
  gen_cmd->add_option("--pp-set", pp_set, "comma list");
  gen_cmd->add_option("--split", fractions, "train,val,test fractions (default 0.8,0.1,0.1)");
  gen_cmd->add_option("--merge", gen_merge, "append the records of an existing dataset");
  gen_cmd->add_option("--out", gen_out, "dataset path")->required();
  add_common(gen_cmd);

  // train
  std::string tr_data, tr_out, tr_history, tr_id = "E7";
  oamnet::TrainOptions tr_opts;
  oamnet::ModelConfig tr_cfg;
  bool tr_baseline = false;
  auto* train = app.add_subcommand("train", "train OAMNet on a dataset");
  train->add_option("--data", tr_data, "dataset path")->required();
  train->add_option("--out", tr_out, "checkpoint path")->required();
  train->add_option("--history", tr_history, "history JSON-lines path (default <out>.history.jsonl)");
  train->add_option("--weights", tr_id, "loss-weight row E0..E9")->capture_default_str();
  train->add_option("--epochs", tr_opts.epochs)->capture_default_str();
  train->add_option("--batch", tr_opts.batch)->capture_default_str();
  train->add_option("--lr", tr_opts.lr)->capture_default_str();
  train->add_option("--lr-min", tr_opts.lr_min)->capture_default_str();
  train->add_option("--patience", tr_opts.patience)->capture_default_str();
  train->add_option("--channels", tr_cfg.channels)->capture_default_str();
  train->add_flag("--baseline", tr_baseline, "parameter-matched model without FiLM or conditioning");
  add_common(train);

  // eval
  std::string ev_ckpt, ev_data, ev_split = "test", ev_out;
  bool ev_shuffle = false;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint against simulator targets");
  eval->add_option("--checkpoint", ev_ckpt)->required();
  eval->add_option("--data", ev_data)->required();
  eval->add_option("--split", ev_split, "train|val|test|all")->capture_default_str();
  eval->add_option("--out", ev_out, "per-sample CSV path");
  eval->add_flag("--shuffle-conditions", ev_shuffle, "pair targets with other samples' inputs");
  add_common(eval);

  // bench
  int bn_samples = 3, bn_grid = 128, bn_reps = 5;
  std::string bn_ckpt, bn_out;
  SimFlags bn_f;
  auto* bench = app.add_subcommand("bench", "simulator vs model per-sample wall time");
  bench->add_option("--n-samples", bn_samples)->capture_default_str();
  bench->add_option("--grid", bn_grid, "radial points for the simulator")->capture_default_str();
  bench->add_option("--reps", bn_reps, "repetitions (>= 5 for a variance estimate)")->capture_default_str();
  bench->add_option("--checkpoint", bn_ckpt, "model checkpoint; omitted: simulator only");
  bench->add_option("--out", bn_out, "JSON report path");
  add_common(bench);

  // ablate
  std::string ab_data, ab_ids = "E0,E7,E9", ab_out;
  int ab_seeds = 3;
  oamnet::TrainOptions ab_opts;
  ab_opts.epochs = 30;
  int ab_channels = tr_cfg.channels;
  auto* ablate = app.add_subcommand("ablate", "train one model per loss-weight row and seed");
  ablate->add_option("--data", ab_data)->required();
  ablate->add_option("--ids", ab_ids, "comma list of E0..E9")->capture_default_str();
  ablate->add_option("--seeds", ab_seeds)->capture_default_str();
  ablate->add_option("--epochs", ab_opts.epochs)->capture_default_str();
  ablate->add_option("--patience", ab_opts.patience)->capture_default_str();
  ablate->add_option("--channels", ab_channels)->capture_default_str();
  ablate->add_option("--out", ab_out, "table path (CSV)");
  add_common(ablate);

  // predict
  spdc::PhysicalParams pr_p;
  std::string pr_ckpt;
  auto* predict = app.add_subcommand("predict", "model prediction for one parameter set");
  add_params(predict, pr_p);
  predict->add_option("--checkpoint", pr_ckpt)->required();
  add_common(predict);

  // spectrum
  spdc::PhysicalParams sp_p;
  SimFlags sp_f;
  std::string sp_source = "both", sp_ckpt, sp_out;
  auto* spectrum = app.add_subcommand("spectrum", "marginal OAM spectra from simulator and/or model");
  add_params(spectrum, sp_p);
  add_sim(spectrum, sp_f);
  spectrum->add_option("--source", sp_source, "sim|model|both")
      ->check(CLI::IsMember({"sim", "model", "both"}))
      ->capture_default_str();
  spectrum->add_option("--checkpoint", sp_ckpt);
  spectrum->add_option("--out", sp_out, "CSV path");
  add_common(spectrum);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kInvalid;
  }

  CLI::App* cmd = app.get_subcommands().front();
  const std::string name = cmd->get_name();
  const auto t0 = std::chrono::steady_clock::now();
  json outputs = json::object();
  json hashes = json::object();
  std::string out_hint;
  int rc = kOk;

  try {
    const int jobs = resolve_jobs(common);
    if (common.strict) nn::set_checked_mode(true);

    if (cmd == simulate) {
      out_hint = sim_out;
      const auto cfg = sim_f.config();
      hashes["sim"] = spdc::data::sim_config_hash(cfg);
      const auto d = spdc::simulate(sim_p, cfg);
      d.check(1e-9);
      print_summary(d, spdc::schmidt_number(d));
      if (!sim_out.empty()) {
        spdc::io::write_file(sim_out + ".txt", distribution_table(d));
        write_distribution(sim_out + ".oamd", sim_p, cfg, d);
        outputs["table"] = sim_out + ".txt";
        outputs["binary"] = sim_out + ".oamd";
      }
    } else if (cmd == phase) {
      const auto crystal = pm_crystal.empty() ? spdc::CrystalSpec::bbo() : spdc::CrystalSpec::load(pm_crystal);
      const auto pm = spdc::find_phase_matching_angle(pm_p, crystal);
      std::printf("theta_deg = %.6f\n", pm.theta_deg);
      std::printf("bracket = [%.1f, %.1f] deg, dk = (%.6e, %.6e) rad/um\n", pm.bracket_lo_deg,
                  pm.bracket_hi_deg, pm.dk_lo, pm.dk_hi);
      outputs["theta_deg"] = pm.theta_deg;
    } else if (cmd == gen_cmd) {
      out_hint = gen_out;
      gen.sim = gen_f.config();
      gen.seed = common.seed;
      gen.split.seed = common.seed;
      gen.workers = jobs;
      if (!g_range.empty()) gen.ranges.g = parse_range(g_range);
      if (!th_range.empty()) gen.ranges.theta_deg = parse_range(th_range);
      if (!L_range.empty()) gen.ranges.L_um = parse_range(L_range);
      if (!wp_range.empty()) gen.ranges.w_p_um = parse_range(wp_range);
      if (!ellp_set.empty()) gen.ranges.ell_p = parse_ints(ellp_set);
      if (!pp_set.empty()) gen.ranges.p_p = parse_ints(pp_set);
      if (!fractions.empty()) {
        const auto f = parse_list(fractions);
        if (f.size() != 3) throw std::invalid_argument("--split needs three fractions");
        gen.split.fractions = {f[0], f[1], f[2]};
      }
      hashes["sim"] = spdc::data::sim_config_hash(gen.sim);
      auto ds = spdc::data::generate_dataset(gen);
      if (!gen_merge.empty()) spdc::data::merge(ds, spdc::data::load_dataset(gen_merge));
      spdc::data::save_dataset(ds, gen_out);
      const auto sp = ds.splits();
      std::printf("records = %zu (train %zu, val %zu, test %zu), resampled = %zu\n", ds.records.size(),
                  sp.train.size(), sp.val.size(), sp.test.size(), ds.header.resampled);
      outputs["dataset"] = gen_out;
      outputs["manifest"] = gen_out + ".manifest.json";
    } else if (cmd == train) {
      out_hint = tr_out;
      const auto ds = spdc::data::load_dataset(tr_data);
      hashes["sim"] = ds.header.provenance;
      tr_cfg.m_modes = ds.header.sim.m_modes;
      tr_cfg.ell_max = ds.header.sim.ell_max;
      const auto cfg = tr_baseline ? oamnet::ModelConfig::baseline(tr_cfg) : tr_cfg;
      tr_opts.seed = common.seed;
      tr_opts.history_path = tr_history.empty() ? tr_out + ".history.jsonl" : tr_history;
      tr_opts.on_epoch = [](const oamnet::EpochLog& e) {
        std::printf("epoch %3d  lr %.2e  train %.6e  val %.6e  val_jsd %.6e%s\n", e.epoch, e.lr,
                    e.train.total, e.val.total, e.val.jsd, e.best ? "  *" : "");
        std::fflush(stdout);
      };
      std::printf("parameters = %zu\n", oamnet::count_parameters(cfg));
      auto res = oamnet::train(ds, ds.splits(), cfg, oamnet::LossWeights::ablation(tr_id), tr_opts);
      oamnet::save_checkpoint(res.best, tr_out);
      std::printf("best epoch = %d\n", res.best.epoch);
      outputs["checkpoint"] = tr_out;
      outputs["history"] = tr_opts.history_path->string();
    } else if (cmd == eval) {
      out_hint = ev_out;
      auto ck = oamnet::load_checkpoint(ev_ckpt);
      const auto ds = spdc::data::load_dataset(ev_data);
      hashes["sim"] = ds.header.provenance;
      oamnet::require_congruent(ck.model.config(), ds.header.sim);
      if (!(ck.sim == ds.header.sim)) {
        throw std::invalid_argument("grid mismatch: checkpoint was trained on a different simulator configuration");
      }
      const auto idx = select_split(ds, ev_split);
      oamnet::EvalOptions eo;
      eo.shuffle_conditions = ev_shuffle;
      eo.shuffle_seed = common.seed;
      const auto r = oamnet::evaluate(ck.model, ds, idx, eo);
      std::printf("samples = %zu\n%soam_bias = %.9e\n", r.count, r.mean.to_text().c_str(), r.oam_bias);
      if (!ev_out.empty()) {
        std::ostringstream os;
        os << "index," << spdc::metrics::MetricReport::csv_header() << ",k_pred,k_target\n";
        for (std::size_t k = 0; k < idx.size(); ++k) {
          const Eigen::ArrayXXd t = ds.records[idx[k]].target.cast<double>();
          os << idx[k] << "," << spdc::metrics::compare(r.predictions[k], t).csv_row() << ","
             << spdc::schmidt_number(r.predictions[k]) << "," << spdc::schmidt_number(t) << "\n";
        }
        spdc::io::write_file(ev_out, os.str());
      }
      outputs["jsd"] = r.mean.jsd;
      outputs["kl"] = r.mean.kl;
      outputs["mse"] = r.mean.mse;
      outputs["wemd_separable_w1"] = r.mean.wemd;
      outputs["delta_k"] = r.mean.delta_k;
      outputs["mae"] = r.mean.mae;
      outputs["cosine"] = r.mean.cosine;
      outputs["oam_bias"] = r.oam_bias;
    } else if (cmd == bench) {
      out_hint = bn_out;
      bn_f.n_radial = bn_grid;
      const auto cfg = bn_f.config();
      hashes["sim"] = spdc::data::sim_config_hash(cfg);
      const auto params = spdc::data::sample_params(spdc::data::ParamRanges{}, common.seed,
                                                    static_cast<std::size_t>(bn_samples));
      std::optional<oamnet::Checkpoint> ck;
      if (!bn_ckpt.empty()) {
        ck = oamnet::load_checkpoint(bn_ckpt);
      } else {
        std::printf("no checkpoint given: simulator column only\n");
      }
      const auto r = oamnet::run_bench(params, cfg, ck ? &ck->model : nullptr, bn_reps);
      std::printf("%s", r.to_text().c_str());
      outputs["simulator_mean_s"] = r.simulator.mean_s;
      outputs["simulator_std_s"] = r.simulator.stddev_s;
      outputs["repetitions"] = r.simulator.repetitions;
      if (r.model) {
        outputs["model_mean_s"] = r.model->mean_s;
        outputs["model_std_s"] = r.model->stddev_s;
        outputs["ratio"] = *r.ratio;
      }
      if (!bn_out.empty()) spdc::io::write_file(bn_out, outputs.dump(2) + "\n");
    } else if (cmd == ablate) {
      out_hint = ab_out;
      const auto ds = spdc::data::load_dataset(ab_data);
      hashes["sim"] = ds.header.provenance;
      const auto split = ds.splits();
      oamnet::ModelConfig cfg;
      cfg.channels = ab_channels;
      cfg.m_modes = ds.header.sim.m_modes;
      cfg.ell_max = ds.header.sim.ell_max;
      std::ostringstream table;
      table << "id,w_jsd,w_kl,w_mse,w_wemd,w_oam,avg_jsd_1e-3,avg_wemd_1e-3,avg_kl_1e-3,seeds\n";
      std::printf("%-4s %-26s %-14s %-14s %-14s\n", "ID", "weights", "Avg JSD(1e-3)", "Avg WEMD(1e-3)",
                  "Avg KL(1e-3)");
      for (const std::string& id : CLI::detail::split(ab_ids, ',')) {
        const auto w = oamnet::LossWeights::ablation(id);
        std::vector<double> jsd, wemd, kl;
        for (int s = 0; s < ab_seeds; ++s) {
          auto opts = ab_opts;
          opts.seed = common.seed + static_cast<std::uint64_t>(s);
          try {
            auto res = oamnet::train(ds, split, cfg, w, opts);
            const auto r = oamnet::evaluate(res.best.model, ds, split.test);
            jsd.push_back(r.mean.jsd);
            wemd.push_back(r.mean.wemd);
            kl.push_back(r.mean.kl);
          } catch (const nn::NonFiniteError& e) {
            throw nn::NonFiniteError("ablation " + id + ": " + e.what());
          }
        }
        std::printf("%-4s (%g, %g, %g, %g, %g)%*s %-14.4f %-14.4f %-14.4f\n", id.c_str(), w.jsd, w.kl,
                    w.mse, w.wemd, w.oam, 2, "", 1e3 * median(jsd), 1e3 * median(wemd), 1e3 * median(kl));
        std::fflush(stdout);
        table << id << "," << w.jsd << "," << w.kl << "," << w.mse << "," << w.wemd << "," << w.oam << ","
              << 1e3 * median(jsd) << "," << 1e3 * median(wemd) << "," << 1e3 * median(kl) << ","
              << ab_seeds << "\n";
        outputs[id] = {{"jsd", jsd}, {"wemd", wemd}, {"kl", kl}};
      }
      if (!ab_out.empty()) spdc::io::write_file(ab_out, table.str());
    } else if (cmd == predict) {
      auto ck = oamnet::load_checkpoint(pr_ckpt);
      hashes["sim"] = spdc::data::sim_config_hash(ck.sim);
      const auto p = oamnet::predict(ck.model, pr_p);
      print_summary(p.dist, p.schmidt_number);
      outputs["K"] = p.schmidt_number;
    } else if (cmd == spectrum) {
      out_hint = sp_out;
      const bool want_sim = sp_source != "model", want_model = sp_source != "sim";
      std::optional<spdc::OamSpectrum> s_sim, s_model;
      int ell_max = sp_f.ell_max;
      if (want_model) {
        if (sp_ckpt.empty()) throw std::invalid_argument("--source model needs --checkpoint");
        auto ck = oamnet::load_checkpoint(sp_ckpt);
        s_model = oamnet::predict(ck.model, sp_p).spectrum;
        ell_max = ck.model.config().ell_max;
        sp_f.ell_max = ell_max;
        sp_f.m_modes = ck.model.config().m_modes;
      }
      if (want_sim) {
        const auto cfg = sp_f.config();
        hashes["sim"] = spdc::data::sim_config_hash(cfg);
        s_sim = spdc::oam_spectrum_marginal(spdc::simulate(sp_p, cfg));
      }
      std::ostringstream os;
      os << "ell" << (s_sim ? ",sim" : "") << (s_model ? ",model" : "") << "\n";
      for (int l = -ell_max; l <= ell_max; ++l) {
        os << l;
        if (s_sim) os << "," << s_sim->at(l);
        if (s_model) os << "," << s_model->at(l);
        os << "\n";
      }
      std::printf("%s", os.str().c_str());
      if (s_sim && s_model) {
        const double mae = spdc::metrics::mae(s_model->probs, s_sim->probs);
        const double cos = spdc::metrics::cosine_similarity(s_model->probs, s_sim->probs);
        std::printf("mae = %.6e\ncosine = %.6f\n", mae, cos);
        outputs["mae"] = mae;
        outputs["cosine"] = cos;
      }
      if (!sp_out.empty()) spdc::io::write_file(sp_out, os.str());
    }
  } catch (const spdc::IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    rc = kIo;
  } catch (const spdc::FormatError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    rc = kInvalid;
  } catch (const nn::NonFiniteError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    rc = kInvariant;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    rc = kInvalid;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    rc = kInvariant;
  }

  const std::chrono::duration<double> wall = std::chrono::steady_clock::now() - t0;
  json flags = json::object();
  for (const CLI::Option* opt : cmd->get_options()) {
    if (opt->get_single_name() == "help") continue;
    const auto res = opt->results();
    if (opt->get_expected_min() == 0) {
      flags[opt->get_single_name()] = opt->count() > 0;
    } else {
      flags[opt->get_single_name()] = res.empty() ? opt->get_default_str() : CLI::detail::join(res, ",");
    }
  }
  json manifest{{"command", name},
                {"argv", std::vector<std::string>(argv, argv + argc)},
                {"flags", flags},
                {"seed", common.seed},
                {"strict", common.strict},
                {"config_hashes", hashes},
                {"tool_version", OAMNET_VERSION},
                {"wall_time_s", wall.count()},
                {"exit_code", rc},
                {"outputs", outputs}};
  fs::path mpath = !manifest_path.empty() ? fs::path(manifest_path)
                   : !out_hint.empty()    ? fs::path(out_hint + ".run.json")
                                          : fs::path(name + ".manifest.json");
  try {
    spdc::io::write_file(mpath, manifest.dump(2) + "\n");
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: cannot write run manifest: %s\n", e.what());
    if (rc == kOk) rc = kIo;
  }
  return rc;
}

// Re-executes the argv stored in a manifest with this binary.
int replay(int argc, char** argv) {
  if (argc != 3) {
    std::fprintf(stderr, "usage: %s replay MANIFEST\n", argv[0]);
    return kInvalid;
  }
  std::vector<std::string> args;
  try {
    const json m = json::parse(spdc::io::read_file(argv[2]));
    args = m.at("argv").get<std::vector<std::string>>();
  } catch (const spdc::IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kIo;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s is not a run manifest: %s\n", argv[2], e.what());
    return kInvalid;
  }
  if (args.size() < 2 || args[1] == "replay") {
    std::fprintf(stderr, "error: %s records no replayable command\n", argv[2]);
    return kInvalid;
  }
  args[0] = argv[0];
  std::vector<char*> ptrs;
  for (auto& a : args) ptrs.push_back(a.data());
  return run(static_cast<int>(ptrs.size()), ptrs.data());
}

int main(int argc, char** argv) {
  if (argc >= 2 && std::string_view(argv[1]) == "replay") return replay(argc, argv);
  return run(argc, argv);
}
