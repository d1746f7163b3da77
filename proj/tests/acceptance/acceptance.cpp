// End-to-end acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance --set fast      criteria 1-8, 12, 13
//   acceptance --set training  criteria 9-11 (long; caches the dataset)

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "../fixtures.hpp"
#include "../gradcheck.hpp"
#include "../lp_oracle.hpp"
#include "oamnet/train.hpp"
#include "spdc/binary_io.hpp"
#include "spdc/dataset.hpp"
#include "spdc/metrics.hpp"
#include "spdc/schmidt.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using spdc::PhysicalParams;
using spdc::SimConfig;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::vector<int> failed;

void report(int id, const std::function<Verdict()>& body) {
  const auto t0 = Clock::now();
  Verdict v;
  try {
    v = body();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  if (!v.pass) failed.push_back(id);
  std::printf("criterion %d: %s  %s (%.1f s)\n", id, v.pass ? "PASS" : "FAIL", v.detail.c_str(), seconds_since(t0));
  std::fflush(stdout);
}

void note(const std::string& name, bool pass, const std::string& detail) {
  std::printf("  check %s: %s  %s\n", name.c_str(), pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string fmt(const char* f, double a, double b) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

SimConfig grid(int n, int p = 256) {
  SimConfig c;
  c.n_radial = n;
  c.n_angular = p;
  return c;
}

// ---------------------------------------------------------------- physics

Verdict oam_conservation() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (int ellp : {-2, 0, 3}) {
    PhysicalParams p = fixtures::reference_row(0);
    p.ell_p = ellp;
    p.p_p = 0;
    const auto g = spdc::SimGrid::make(32, 128, spdc::default_q_max(p));
    const auto dec = spdc::azimuthal_decompose(spdc::evaluate_wavefunction_general(p, spdc::CrystalSpec::bbo(), g), 12);
    worst = std::max(worst, dec.off_diagonal_energy / dec.total_energy);
  }
  const double t = seconds_since(t0);
  return {worst < 1e-10 && t < 60.0, fmt("worst off-diagonal fraction %.2e, runtime %.1f s", worst, t)};
}

Verdict separable_kernel() {
  const int n = 32, P = 64;
  spdc::Wavefunction3D psi;
  psi.grid = spdc::SimGrid::make(n, P, 0.05);
  psi.values.resize(static_cast<Eigen::Index>(n) * n * P);
  for (int i = 0; i < n; ++i) {
    const double f = std::exp(-std::pow(psi.grid.q[i] / 0.012, 2));
    for (int j = 0; j < n; ++j) {
      const double g = psi.grid.q[j] / 0.02 * std::exp(-std::pow(psi.grid.q[j] / 0.02, 2));
      for (int a = 0; a < P; ++a) psi.at(i, j, a) = f * g;
    }
  }
  const auto dist = spdc::assemble_distribution(spdc::azimuthal_decompose(psi, 12).kernels, 8);
  const double K = spdc::schmidt_number(dist);
  return {std::abs(K - 1.0) < 1e-9, fmt("K = %.12f", K)};
}

Verdict spectrum_symmetry() {
  // ell_p = 0 rows are mirror-symmetric; otherwise S(ell) = S(ell_p - ell).
  double untwisted = 0.0, twisted = 0.0;
  for (int row = 0; row < 6; ++row) {
    for (bool zero : {true, false}) {
      PhysicalParams p = fixtures::reference_row(row);
      if (zero) p.ell_p = 0;
      else if (p.ell_p == 0) continue;
      const auto s = spdc::oam_spectrum_marginal(spdc::simulate(p, grid(64)));
      double& worst = zero ? untwisted : twisted;
      for (int l = -12; l <= 12; ++l) {
        if (std::abs(p.ell_p - l) <= 12) worst = std::max(worst, std::abs(s.at(l) - s.at(p.ell_p - l)));
      }
    }
  }
  return {untwisted < 1e-8 && twisted < 1e-8,
          fmt("max |S(l) - S(-l)| = %.2e at ell_p = 0, max |S(l) - S(ell_p - l)| = %.2e", untwisted, twisted)};
}

Verdict gain_narrowing() {
  const auto t0 = Clock::now();
  PhysicalParams p = fixtures::reference_row(0);
  std::vector<double> gains, K;
  for (int i = 0; i < 10; ++i) gains.push_back(0.021 * std::pow(5.364 / 0.021, i / 9.0));
  bool monotone = true;
  std::ostringstream ks;
  for (double g : gains) {
    p.g = g;
    K.push_back(spdc::schmidt_number(spdc::simulate(p, grid(64))));
    if (K.size() > 1 && K.back() > K[K.size() - 2]) monotone = false;
    ks << (K.size() > 1 ? " " : "") << fmt("%.3f", K.back());
  }
  const double t = seconds_since(t0);
  const bool narrow = K.back() < 0.9 * K.front();
  return {monotone && narrow && t < 600.0,
          "K(g) = [" + ks.str() + "], non-increasing " + (monotone ? "yes" : "no") +
              fmt(", K(5.364)/K(0.021) = %.3f, runtime %.1f s", K.back() / K.front(), t)};
}

Verdict phase_matching() {
  PhysicalParams p;
  p.lambda_p_um = 0.355;
  p.lambda_s_um = 0.710;
  const double th = spdc::find_phase_matching_angle(p, spdc::CrystalSpec::bbo()).theta_deg;
  return {th >= 32.0 && th <= 34.0, fmt("theta* = %.6f deg", th)};
}

Verdict grid_convergence() {
  double worst = 0.0;
  std::ostringstream rows;
  for (int row = 0; row < 6; ++row) {
    const auto p = fixtures::reference_row(row);
    const double k64 = spdc::schmidt_number(spdc::simulate(p, grid(64)));
    const double k128 = spdc::schmidt_number(spdc::simulate(p, grid(128)));
    const double rel = std::abs(k64 - k128) / k128;
    worst = std::max(worst, rel);
    rows << (row ? ", " : "") << fmt("%.2f%%", 100 * rel);
  }
  return {worst < 0.02, "relative |K64 - K128| per row: " + rows.str()};
}

// ---------------------------------------------------------------- autodiff

Verdict autodiff() {
  using gradcheck::check;
  using gradcheck::project;
  using gradcheck::random_array;
  using gradcheck::random_leaf;
  using T = gradcheck::T;
  std::mt19937_64 rng(77);
  std::map<std::string, double> worst;

  {
    auto x = random_leaf({4, 5}, rng), w = random_leaf({3, 5}, rng), b = random_leaf({3}, rng);
    const auto r = random_array(12, rng);
    worst["linear"] = check([&] { return project(nn::linear(x, w, b), r); }, {x, w, b}, rng).worst;
  }
  {
    auto table = random_leaf({6, 4}, rng);
    const std::vector<int> idx{0, 5, 2, 5};
    const auto r = random_array(16, rng);
    worst["embedding"] = check([&] { return project(nn::embedding<double>(idx, table), r); }, {table}, rng).worst;
  }
  {
    auto x = random_leaf({2, 3, 8, 8}, rng), w = random_leaf({4, 3, 3, 3}, rng), b = random_leaf({4}, rng);
    const auto r = random_array(2 * 4 * 64, rng);
    double wd = 0.0;
    for (int d : {1, 2, 4}) wd = std::max(wd, check([&] { return project(nn::conv2d(x, w, b, d), r); }, {x, w, b}, rng).worst);
    worst["conv2d"] = wd;
  }
  {
    auto x = random_leaf({2, 4, 3, 3}, rng, -2, 3), g = random_leaf({4}, rng, 0.5, 1.5), b = random_leaf({4}, rng);
    const auto r = random_array(72, rng);
    worst["group_norm"] = check([&] { return project(nn::group_norm(x, 2, g, b), r); }, {x, g, b}, rng).worst;
  }
  {
    auto x = random_leaf({30}, rng, -4, 4);
    const auto r = random_array(30, rng);
    worst["silu"] = check([&] { return project(nn::silu(x), r); }, {x}, rng).worst;
  }
  {
    auto h = random_leaf({2, 3, 2, 2}, rng), m = random_leaf({2, 6}, rng);
    const auto r = random_array(24, rng);
    worst["film"] = check([&] { return project(nn::film(h, m), r); }, {h, m}, rng).worst;
  }
  auto logits = random_leaf({2, 1, 4, 5}, rng);
  {
    const auto r = random_array(40, rng);
    worst["softmax_grid"] = check([&] { return project(nn::softmax_grid(logits), r); }, {logits}, rng).worst;
  }
  {
    nn::Array<double> t(40);
    for (int b = 0; b < 2; ++b) {
      t.segment(b * 20, 20) = random_array(20, rng, 0.1, 1.0);
      t.segment(b * 20, 20) /= t.segment(b * 20, 20).sum();
    }
    nn::Array<double> corner = nn::Array<double>::Zero(40);
    corner[19] = corner[39] = 1.0;
    const std::vector<int> ell{1, -2};
    auto pred = [&] { return nn::softmax_grid(logits); };
    worst["kl_loss"] = check([&] { return nn::kl_loss(pred(), t); }, {logits}, rng).worst;
    worst["jsd_loss"] = check([&] { return nn::jsd_loss(pred(), t); }, {logits}, rng).worst;
    worst["mse_loss"] = check([&] { return nn::mse_loss(pred(), t); }, {logits}, rng).worst;
    worst["wemd_loss"] = check([&] { return nn::wemd_loss(pred(), corner); }, {logits}, rng).worst;
    worst["oam_loss"] = check([&] { return nn::oam_loss<double>(pred(), ell); }, {logits}, rng).worst;
  }

  // Conditional MLP and the full model through the E7 hybrid loss, with the
  // FiLM heads moved off their zero initialization.
  oamnet::ModelConfig cfg;
  cfg.channels = 8;
  cfg.groups = 4;
  cfg.dilations = {1, 2};
  cfg.cond_hidden = 6;
  cfg.embed_dim = 3;
  cfg.m_modes = 4;
  cfg.ell_max = 3;
  spdc::data::StandardizationStats stats;
  stats.mean = {1.0, 32.95, 2000.0, 300.0};
  stats.stddev = {1.0, 0.03, 800.0, 150.0};
  oamnet::Model<double> model(cfg, stats, 3);
  for (auto& p : model.parameters()) {
    if (p.name.find("film") != std::string::npos) p.value() = random_array(p.tensor.size(), rng, -0.3, 0.3);
  }
  {
    auto c = random_leaf({3, cfg.cond_dim()}, rng);
    std::vector<T> leaves{c};
    std::vector<nn::Array<double>> saved;
    const std::vector<std::string> mlp{"cond.fc1.w", "cond.fc1.b", "cond.fc2.w", "cond.fc2.b"};
    for (const auto& n : mlp) {
      saved.push_back(model.find(n).value());
      model.find(n).value() = random_array(model.find(n).tensor.size(), rng);
      leaves.push_back(model.find(n).tensor);
    }
    const auto r = random_array(3 * cfg.cond_hidden, rng);
    worst["conditional_mlp"] = check([&] { return project(model.conditional_mlp(c), r); }, leaves, rng).worst;
    for (std::size_t i = 0; i < mlp.size(); ++i) model.find(mlp[i]).value() = saved[i];
  }
  {
    PhysicalParams a = fixtures::reference_row(2), b = fixtures::reference_row(3);
    const std::vector<PhysicalParams> ps{a, b};
    const auto batch = oamnet::make_batch<double>(ps, stats);
    nn::Array<double> t = nn::Array<double>::Zero(2 * 28);
    t[27] = t[55] = 1.0;
    std::vector<T> leaves;
    for (auto& p : model.parameters()) leaves.push_back(p.tensor);
    worst["full model (E7)"] = check([&] {
      return oamnet::hybrid_loss<double>(model.forward(batch), t, oamnet::LossWeights::ablation("E7"), batch.ell_p).total;
    }, leaves, rng).worst;
  }

  double all = 0.0;
  std::ostringstream s;
  for (const auto& [name, w] : worst) {
    all = std::max(all, w);
    s << (s.tellp() ? ", " : "") << name << fmt(" %.1e", w);
  }
  return {all < 1e-3, fmt("worst relative error %.2e over 10 probes each; ", all) + s.str()};
}

// ---------------------------------------------------------------- metrics

Verdict metric_correctness() {
  namespace mt = spdc::metrics;
  const double ln2 = std::log(2.0);
  Eigen::ArrayXd a(2), b(2);
  a << 1.0, 0.0;
  b << 0.5, 0.5;
  const int n = 16;
  Eigen::ArrayXd u = Eigen::ArrayXd::Constant(n, 1.0 / n), h = Eigen::ArrayXd::Zero(n);
  h.head(n / 2).setConstant(2.0 / n);
  Eigen::ArrayXd d1(2), d2(2);
  d1 << 1.0, 0.0;
  d2 << 0.0, 1.0;
  double closed = 0.0;
  closed = std::max(closed, std::abs(mt::kl_divergence(a, b) - ln2));
  closed = std::max(closed, std::abs(mt::kl_divergence(b, b)));
  closed = std::max(closed, std::abs(mt::jsd(d1, d2) - ln2));
  closed = std::max(closed, std::abs(mt::jsd(u, u)));
  closed = std::max(closed, std::abs(mt::mse(u, h) - 1.0 / (n * n)));
  closed = std::max(closed, std::abs(mt::mse(h, h)));

  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  double lp_gap = 0.0;
  for (int t = 0; t < 50; ++t) {
    Eigen::VectorXd p(8), q(8);
    for (int i = 0; i < 8; ++i) {
      p[i] = U(rng) < 0.3 ? 0.0 : U(rng);
      q[i] = U(rng);
    }
    if (p.sum() == 0.0) p[0] = 1.0;
    p /= p.sum();
    q /= q.sum();
    lp_gap = std::max(lp_gap, std::abs(mt::detail::w1_unit_extent(p.array(), q.array()) - lp::w1_lp(p, q)));
  }

  double jsd_max = 0.0;
  for (int t = 0; t < 1000; ++t) {
    Eigen::ArrayXXd p(8, 25), q(8, 25);
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      p.data()[i] = U(rng) < 0.5 ? 0.0 : std::pow(U(rng), 3);
      q.data()[i] = U(rng) < 0.5 ? 0.0 : std::pow(U(rng), 3);
    }
    p(0, 0) += 1e-3;
    q(7, 24) += 1e-3;
    jsd_max = std::max(jsd_max, mt::jsd(p / p.sum(), q / q.sum()));
  }
  return {closed < 1e-9 && lp_gap < 1e-9 && jsd_max <= ln2,
          fmt("closed-form error %.1e, W1 vs LP %.1e, ", closed, lp_gap) + fmt("max JSD %.4f (ln 2 = %.4f)", jsd_max, ln2)};
}

// ---------------------------------------------------------------- CLI helpers

struct Run {
  int code = -1;
  std::string out;
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

Run run_cli(const std::string& bin, const fs::path& dir, const std::string& args) {
  const std::string cmd = "cd '" + dir.string() + "' && '" + bin + "' " + args + " > out.txt 2> err.txt";
  const int st = std::system(cmd.c_str());
  return {WIFEXITED(st) ? WEXITSTATUS(st) : -1, slurp(dir / "out.txt")};
}

fs::path fresh_dir(const fs::path& root, const std::string& name) {
  const auto d = root / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

Verdict speedup(const std::string& bin, const fs::path& cache) {
  // Inference cost does not depend on the weight values, so a freshly
  // initialized full-size model is timed.
  const auto dir = fresh_dir(cache, "bench");
  spdc::data::StandardizationStats stats;
  stats.mean = {2.7, 32.95, 2000.0, 400.0};
  stats.stddev = {1.5, 0.03, 800.0, 200.0};
  oamnet::Checkpoint ck{oamnet::Model<float>(oamnet::ModelConfig{}, stats, 1), oamnet::LossWeights{}, 1, SimConfig{}, 0};
  oamnet::save_checkpoint(ck, dir / "model.oamc");
  const auto r = run_cli(bin, dir, "bench --n-samples 3 --grid 128 --reps 5 --checkpoint model.oamc --out bench.json");
  if (r.code != 0) return {false, "bench exited with " + std::to_string(r.code)};
  const auto j = json::parse(slurp(dir / "bench.json"));
  const double ratio = j.at("ratio").get<double>();
  return {ratio >= 50.0, fmt("simulator %.3f s/sample, model %.4f s/sample", j["simulator_mean_s"].get<double>(),
                             j["model_mean_s"].get<double>()) +
                             fmt(", ratio %.1f (std %.3f s over 5 repetitions)", ratio, j["simulator_std_s"].get<double>())};
}

Verdict determinism(const std::string& bin, const fs::path& cache) {
  const auto a = fresh_dir(cache, "det_a"), b = fresh_dir(cache, "det_b");
  const std::string gen = "gen-dataset --count 24 --n 16 --p 64 --m-modes 4 --ellmax 3 --seed 5 --strict --out d.oamd";
  const std::string train = "train --data d.oamd --out m.oamc --epochs 3 --batch 8 --channels 8 --seed 5 --strict";
  std::vector<std::string> bad;
  for (const auto& d : {a, b}) {
    if (run_cli(bin, d, gen).code != 0 || run_cli(bin, d, train).code != 0) return {false, "CLI run failed"};
  }
  const bool same_data = slurp(a / "d.oamd") == slurp(b / "d.oamd");
  const bool same_hist = slurp(a / "m.oamc.history.jsonl") == slurp(b / "m.oamc.history.jsonl");
  const bool replay = [&] {
    fs::rename(a / "d.oamd", a / "first.oamd");
    return run_cli(bin, a, "replay d.oamd.run.json").code == 0 && slurp(a / "first.oamd") == slurp(a / "d.oamd");
  }();

  // save -> load -> forward, bit for bit.
  auto ck = oamnet::load_checkpoint(a / "m.oamc");
  const auto ds = spdc::data::load_dataset(a / "d.oamd");
  std::vector<PhysicalParams> ps;
  for (const auto& r : ds.records) ps.push_back(r.params);
  const auto before = oamnet::predict_batch(ck.model, ps);
  oamnet::save_checkpoint(ck, a / "again.oamc");
  auto back = oamnet::load_checkpoint(a / "again.oamc");
  const auto after = oamnet::predict_batch(back.model, ps);
  bool same_forward = true;
  for (std::size_t i = 0; i < ps.size(); ++i) same_forward = same_forward && (before[i] == after[i]).all();

  // Corruptions: flipped record byte, truncated checkpoint, bad magic.
  std::string bytes = slurp(a / "d.oamd");
  bytes[bytes.size() - 9] ^= 0x10;
  std::ofstream(a / "bad.oamd", std::ios::binary) << bytes;
  std::string ckb = slurp(a / "m.oamc");
  std::ofstream(a / "short.oamc", std::ios::binary) << ckb.substr(0, ckb.size() / 3);
  ckb[1] = 'X';
  std::ofstream(a / "magic.oamc", std::ios::binary) << ckb;
  const int c1 = run_cli(bin, a, "eval --checkpoint m.oamc --data bad.oamd").code;
  const int c2 = run_cli(bin, a, "eval --checkpoint short.oamc --data d.oamd").code;
  const int c3 = run_cli(bin, a, "predict --checkpoint magic.oamc").code;
  const bool rejected = c1 != 0 && c2 != 0 && c3 != 0;

  std::ostringstream s;
  s << "dataset bytes " << (same_data ? "identical" : "DIFFER") << ", history " << (same_hist ? "identical" : "DIFFERS")
    << ", manifest replay " << (replay ? "identical" : "DIFFERS") << ", reloaded forward "
    << (same_forward ? "bit-identical" : "DIFFERS") << ", corrupted inputs exit " << c1 << "/" << c2 << "/" << c3;
  return {same_data && same_hist && replay && same_forward && rejected, s.str()};
}

// ---------------------------------------------------------------- training

struct DeskOptions {
  int full_channels = 104;
  int full_epochs = 200;
  int desk_channels = 32;
  int desk_epochs = 40;
  int seeds = 3;
  std::size_t count = 2500;
  std::uint64_t data_seed = 2024;
};

spdc::data::Dataset desk_dataset(const fs::path& cache, const DeskOptions& o) {
  const auto path = cache / ("desk-" + std::to_string(o.count) + "-s" + std::to_string(o.data_seed) + ".oamd");
  spdc::data::GenerateOptions g;
  g.n = o.count;
  g.seed = o.data_seed;
  g.split.seed = o.data_seed;
  g.stratified = true;
  if (fs::exists(path)) {
    try {
      auto ds = spdc::data::load_dataset(path);
      if (ds.header.sim == g.sim && ds.header.seed == o.data_seed && ds.records.size() == o.count) {
        std::printf("  using cached dataset %s\n", path.c_str());
        return ds;
      }
    } catch (const std::exception& e) {
      std::printf("  cached dataset unusable (%s), regenerating\n", e.what());
    }
  }
  std::printf("  generating %zu records at N = %d ...\n", o.count, g.sim.n_radial);
  std::fflush(stdout);
  const auto t0 = Clock::now();
  auto ds = spdc::data::generate_dataset(g);
  spdc::data::save_dataset(ds, path);
  std::printf("  generated in %.0f s\n", seconds_since(t0));
  return ds;
}

struct RunResult {
  double jsd = 0, shuffled_jsd = 0, delta_k = 0, oam_bias = 0;
  double first_train = 0, train_at_20 = 0;
};

RunResult train_and_score(const spdc::data::Dataset& ds, oamnet::ModelConfig cfg, const std::string& id,
                          std::uint64_t seed, int epochs, const fs::path& ckpt = {}) {
  const auto split = ds.splits();
  oamnet::TrainOptions t;
  t.epochs = epochs;
  t.seed = seed;
  const auto t0 = Clock::now();
  auto res = oamnet::train(ds, split, cfg, oamnet::LossWeights::ablation(id), t);
  RunResult r;
  r.first_train = res.history.front().train.total;
  r.train_at_20 = res.history[std::min<std::size_t>(19, res.history.size() - 1)].train.total;
  const auto rep = oamnet::evaluate(res.best.model, ds, split.test);
  r.jsd = rep.mean.jsd;
  r.delta_k = rep.mean.delta_k;
  r.oam_bias = rep.oam_bias;
  oamnet::EvalOptions sh;
  sh.shuffle_conditions = true;
  sh.shuffle_seed = seed + 1;
  r.shuffled_jsd = oamnet::evaluate(res.best.model, ds, split.test, sh).mean.jsd;
  if (!ckpt.empty()) oamnet::save_checkpoint(res.best, ckpt);
  std::printf("    %-8s seed %llu  C=%d  %zu epochs (best %d)  test JSD %.3e  dK %.4f  oam bias %.4f  shuffled JSD %.3e  (%.0f s)\n",
              id.c_str(), static_cast<unsigned long long>(seed), cfg.channels, res.history.size(), res.best.epoch, r.jsd,
              r.delta_k, r.oam_bias, r.shuffled_jsd, seconds_since(t0));
  std::fflush(stdout);
  return r;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

int majority(const std::vector<bool>& v) { return static_cast<int>(std::count(v.begin(), v.end(), true)); }

void training_criteria(const fs::path& cache, const DeskOptions& o) {
  const auto ds = desk_dataset(cache, o);
  const auto split = ds.splits();
  std::printf("  split %zu/%zu/%zu\n", split.train.size(), split.val.size(), split.test.size());

  report(9, [&] {
    oamnet::ModelConfig cfg;
    cfg.channels = o.full_channels;
    const auto t0 = Clock::now();
    const auto r = train_and_score(ds, cfg, "E7", 0, o.full_epochs, cache / "criterion9.oamc");
    const double t = seconds_since(t0);
    return Verdict{r.jsd <= 1e-2 && r.delta_k <= 0.1 && t < 7200.0,
                   fmt("E7, %.3g parameters: test Avg JSD %.3e (bound 1e-2), ", static_cast<double>(oamnet::count_parameters(cfg)), r.jsd) +
                       fmt("Avg dK %.4f (bound 0.1), wall %.0f s", r.delta_k, t)};
  });

  oamnet::ModelConfig desk;
  desk.channels = o.desk_channels;
  std::map<std::string, std::vector<RunResult>> runs;
  std::printf("  desk runs: C=%d (%zu parameters), baseline C=%d (%zu parameters), %d epochs, %d seeds\n", desk.channels,
              oamnet::count_parameters(desk), oamnet::ModelConfig::baseline(desk).channels,
              oamnet::count_parameters(oamnet::ModelConfig::baseline(desk)), o.desk_epochs, o.seeds);
  for (int s = 0; s < o.seeds; ++s) {
    for (const char* id : {"E7", "E0", "E9", "E5"}) runs[id].push_back(train_and_score(ds, desk, id, 100 + s, o.desk_epochs));
    runs["baseline"].push_back(train_and_score(ds, oamnet::ModelConfig::baseline(desk), "E7", 100 + s, o.desk_epochs));
  }
  auto med = [&](const std::string& k, double RunResult::*f) {
    std::vector<double> v;
    for (const auto& r : runs[k]) v.push_back(r.*f);
    return median(v);
  };

  report(10, [&] {
    const double e7 = med("E7", &RunResult::jsd), e0 = med("E0", &RunResult::jsd), e9 = med("E9", &RunResult::jsd);
    std::vector<bool> degraded;
    for (const auto& r : runs["E7"]) degraded.push_back(r.shuffled_jsd > r.jsd);
    const bool shuffle = 2 * majority(degraded) > static_cast<int>(degraded.size());
    return Verdict{e7 <= e0 && e7 <= e9 && shuffle,
                   fmt("median test JSD x1e-3: E7 %.3f, E0 %.3f", 1e3 * e7, 1e3 * e0) + fmt(", E9 %.3f; shuffled conditions degrade %.0f", 1e3 * e9, majority(degraded)) +
                       "/" + std::to_string(degraded.size()) + " E7 runs"};
  });

  report(11, [&] {
    const double e7 = med("E7", &RunResult::jsd), base = med("baseline", &RunResult::jsd);
    const double gain = 1.0 - e7 / base;
    return Verdict{gain >= 0.2, fmt("median test JSD x1e-3: FiLM E7 %.3f, baseline %.3f", 1e3 * e7, 1e3 * base) +
                                    fmt(", improvement %.1f%% (need 20%%)", 100 * gain)};
  });

  std::vector<bool> bias, decreasing;
  for (int s = 0; s < o.seeds; ++s) {
    bias.push_back(runs["E7"][s].oam_bias < runs["E5"][s].oam_bias);
    decreasing.push_back(runs["E7"][s].train_at_20 < runs["E7"][s].first_train);
  }
  note("oam-bias (w_oam 0.1 vs 0)", 2 * majority(bias) > o.seeds,
       fmt("median |E[l] - l_p/2|: E7 %.4f, E5 %.4f", med("E7", &RunResult::oam_bias), med("E5", &RunResult::oam_bias)));
  note("train loss falls by epoch 20", 2 * majority(decreasing) > o.seeds,
       std::to_string(majority(decreasing)) + "/" + std::to_string(o.seeds) + " seeds");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string set = "fast", cli = OAMNET_BIN, cache = "acceptance_cache";
  DeskOptions desk;
  app.add_option("--set", set, "fast|training|all")->check(CLI::IsMember({"fast", "training", "all"}));
  app.add_option("--cli", cli, "oamnet binary");
  app.add_option("--cache", cache, "scratch and dataset cache directory");
  app.add_option("--full-epochs", desk.full_epochs);
  app.add_option("--desk-epochs", desk.desk_epochs);
  app.add_option("--desk-channels", desk.desk_channels);
  app.add_option("--seeds", desk.seeds);
  std::vector<int> expect_fail;
  app.add_option("--expect-fail", expect_fail, "criteria known to be out of reach; reported, not fatal")->delimiter(',');
  CLI11_PARSE(app, argc, argv);
  std::setvbuf(stdout, nullptr, _IOLBF, 0);
  fs::create_directories(cache);
  const auto t0 = Clock::now();

  if (set != "training") {
    report(1, oam_conservation);
    report(2, separable_kernel);
    report(3, spectrum_symmetry);
    report(4, gain_narrowing);
    report(5, phase_matching);
    report(6, grid_convergence);
    report(7, autodiff);
    report(8, metric_correctness);
  }
  if (set != "fast") training_criteria(cache, desk);
  if (set != "training") {
    report(12, [&] { return speedup(cli, cache); });
    report(13, [&] { return determinism(cli, cache); });
  }
  // Criteria listed with --expect-fail still print FAIL; only the exit status
  // ignores them.
  std::vector<int> unexpected;
  for (int id : failed) {
    if (std::find(expect_fail.begin(), expect_fail.end(), id) == expect_fail.end()) unexpected.push_back(id);
  }
  std::printf("%zu failing (%zu expected), %.0f s total\n", failed.size(), failed.size() - unexpected.size(),
              seconds_since(t0));
  return unexpected.empty() ? 0 : 1;
}
