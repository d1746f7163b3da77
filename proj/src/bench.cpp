#include "oamnet/bench.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <vector>

#include "oamnet/train.hpp"

namespace oamnet {
namespace {

template <class F>
Timing time_per_sample(std::size_t n, int reps, F&& run_one) {
  std::vector<double> means;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < n; ++i) run_one(i);
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
    means.push_back(dt.count() / static_cast<double>(n));
  }
  Timing t;
  t.repetitions = reps;
  for (double m : means) t.mean_s += m;
  t.mean_s /= reps;
  for (double m : means) t.stddev_s += (m - t.mean_s) * (m - t.mean_s);
  t.stddev_s = reps > 1 ? std::sqrt(t.stddev_s / (reps - 1)) : 0.0;
  return t;
}

}  // namespace

BenchReport run_bench(std::span<const PhysicalParams> params, const spdc::SimConfig& sim,
                      Model<float>* model, int repetitions) {
  if (params.empty()) throw std::invalid_argument("bench: no samples");
  if (repetitions < 1) throw std::invalid_argument("bench: repetitions must be >= 1");
  BenchReport r;
  r.n_samples = static_cast<int>(params.size());
  r.n_radial = sim.n_radial;
  r.simulator = time_per_sample(params.size(), repetitions,
                                [&](std::size_t i) { (void)spdc::simulate(params[i], sim); });
  if (model) {
    (void)predict_batch(*model, params.subspan(0, 1), 1);  // warm-up
    r.model = time_per_sample(params.size(), repetitions, [&](std::size_t i) {
      (void)predict_batch(*model, params.subspan(i, 1), 1);
    });
    r.ratio = r.simulator.mean_s / r.model->mean_s;
  }
  return r;
}

std::string BenchReport::to_text() const {
  char buf[512];
  std::string out;
  std::snprintf(buf, sizeof buf, "samples = %d\nn_radial = %d\nrepetitions = %d\n", n_samples,
                n_radial, simulator.repetitions);
  out += buf;
  out += "source      mean_s_per_sample  std_s\n";
  std::snprintf(buf, sizeof buf, "simulator   %.6e       %.3e\n", simulator.mean_s, simulator.stddev_s);
  out += buf;
  if (model) {
    std::snprintf(buf, sizeof buf, "model       %.6e       %.3e\n", model->mean_s, model->stddev_s);
    out += buf;
    std::snprintf(buf, sizeof buf, "ratio = %.2f\n", *ratio);
    out += buf;
  }
  return out;
}

}  // namespace oamnet
