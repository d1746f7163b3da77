#include "spdc/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#include "spdc/binary_io.hpp"
#include "spdc/errors.hpp"

namespace spdc::data {
namespace {

constexpr char kMagic[4] = {'O', 'A', 'M', 'D'};
constexpr std::uint32_t kVersion = 1;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

double draw(std::mt19937_64& rng, const Range& r) {
  if (r.lo == r.hi) return r.lo;
  return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
}

int draw(std::mt19937_64& rng, const std::vector<int>& set) {
  std::uniform_int_distribution<std::size_t> pick(0, set.size() - 1);
  return set[pick(rng)];
}

std::size_t record_bytes(const SimConfig& sim) {
  const std::size_t cells =
      static_cast<std::size_t>(sim.m_modes) * (2 * sim.ell_max + 1);
  return 6 * sizeof(float) + 2 * sizeof(std::int32_t) + cells * sizeof(float) +
         sizeof(std::uint32_t);
}

void write_record(io::ByteWriter& w, const DatasetRecord& r) {
  const std::size_t start = w.size();
  const auto& p = r.params;
  for (double v : {p.g, p.theta_deg, p.L_um, p.w_p_um, p.lambda_p_um, p.lambda_s_um}) {
    w.put(static_cast<float>(v));
  }
  w.put(static_cast<std::int32_t>(p.ell_p));
  w.put(static_cast<std::int32_t>(p.p_p));
  // Row-major (m, ell).
  for (Eigen::Index m = 0; m < r.target.rows(); ++m) {
    for (Eigen::Index l = 0; l < r.target.cols(); ++l) w.put(r.target(m, l));
  }
  w.put(io::crc32(w.tail(start)));
}

DatasetRecord read_record(io::ByteReader& rd, const SimConfig& sim,
                          const std::string& provenance, std::size_t index) {
  const std::size_t start = rd.pos();
  DatasetRecord r;
  float f[6];
  rd.get_span(std::span<float>(f, 6));
  r.params.g = f[0];
  r.params.theta_deg = f[1];
  r.params.L_um = f[2];
  r.params.w_p_um = f[3];
  r.params.lambda_p_um = f[4];
  r.params.lambda_s_um = f[5];
  r.params.ell_p = rd.get<std::int32_t>();
  r.params.p_p = rd.get<std::int32_t>();
  const int L = 2 * sim.ell_max + 1;
  r.target.resize(sim.m_modes, L);
  for (int m = 0; m < sim.m_modes; ++m) {
    for (int l = 0; l < L; ++l) r.target(m, l) = rd.get<float>();
  }
  const std::uint32_t expect = io::crc32(rd.view(start, rd.pos()));
  if (rd.get<std::uint32_t>() != expect) {
    throw FormatError("checksum failure in record " + std::to_string(index));
  }
  const double total = r.target.cast<double>().sum();
  if (!r.target.allFinite() || (r.target < 0.0f).any() ||
      std::abs(total - 1.0) > 1e-6) {
    throw FormatError("record " + std::to_string(index) +
                      " violates the modal-distribution invariants");
  }
  r.provenance = provenance;
  return r;
}

}  // namespace

void ParamRanges::validate() const {
  for (const Range* r : {&g, &theta_deg, &L_um, &w_p_um}) {
    if (!(r->lo <= r->hi) || !std::isfinite(r->lo) || !std::isfinite(r->hi)) {
      throw DomainError("parameter range with lo > hi");
    }
  }
  if (ell_p.empty() || p_p.empty()) throw DomainError("empty discrete parameter set");
}

std::array<double, StandardizationStats::kFeatures> StandardizationStats::features(
    const PhysicalParams& p) {
  return {p.g, p.theta_deg, p.L_um, p.w_p_um};
}

std::array<double, StandardizationStats::kFeatures> StandardizationStats::apply(
    const PhysicalParams& p) const {
  auto f = features(p);
  for (int k = 0; k < kFeatures; ++k) f[k] = (f[k] - mean[k]) / stddev[k];
  return f;
}

void StandardizationStats::validate() const {
  for (int k = 0; k < kFeatures; ++k) {
    if (!(stddev[k] > 0.0) || !std::isfinite(mean[k])) {
      throw DomainError("standardization: std > 0 violated for feature " +
                        std::to_string(k));
    }
  }
}

Split Dataset::splits() const { return split(records.size(), header.split); }

std::string sim_config_hash(const SimConfig& cfg) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08x", io::crc32(to_json(cfg).dump()));
  return std::string("sim-v1-") + buf;
}

PhysicalParams round_to_storage(PhysicalParams p) {
  auto r = [](double v) { return static_cast<double>(static_cast<float>(v)); };
  p.g = r(p.g);
  p.theta_deg = r(p.theta_deg);
  p.L_um = r(p.L_um);
  p.w_p_um = r(p.w_p_um);
  p.lambda_p_um = r(p.lambda_p_um);
  p.lambda_s_um = r(p.lambda_s_um);
  return p;
}

PhysicalParams sample_one(const ParamRanges& ranges, std::uint64_t seed,
                          std::size_t index, std::size_t attempt,
                          bool stratified) {
  std::mt19937_64 rng(splitmix64(splitmix64(seed) ^ splitmix64(index)) +
                      attempt * 0x2545F4914F6CDD1Dull);
  PhysicalParams p;
  p.g = draw(rng, ranges.g);
  p.theta_deg = draw(rng, ranges.theta_deg);
  p.L_um = draw(rng, ranges.L_um);
  p.w_p_um = draw(rng, ranges.w_p_um);
  if (stratified) {
    const std::size_t cells = ranges.ell_p.size() * ranges.p_p.size();
    const std::size_t cell = index % cells;
    p.ell_p = ranges.ell_p[cell / ranges.p_p.size()];
    p.p_p = ranges.p_p[cell % ranges.p_p.size()];
  } else {
    p.ell_p = draw(rng, ranges.ell_p);
    p.p_p = draw(rng, ranges.p_p);
  }
  p.lambda_p_um = ranges.lambda_p_um;
  p.lambda_s_um = ranges.lambda_s_um;
  return p;
}

std::vector<PhysicalParams> sample_params(const ParamRanges& ranges,
                                          std::uint64_t seed, std::size_t n,
                                          bool stratified) {
  ranges.validate();
  if (n < 1) throw DomainError("sample count must be >= 1");
  std::vector<PhysicalParams> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(sample_one(ranges, seed, i, 0, stratified));
  }
  return out;
}

Split split(std::size_t n, const SplitSpec& spec) {
  const double total = spec.fractions[0] + spec.fractions[1] + spec.fractions[2];
  if (std::abs(total - 1.0) > 1e-9 ||
      std::any_of(spec.fractions.begin(), spec.fractions.end(),
                  [](double f) { return f < 0.0; })) {
    throw DomainError("split fractions must be non-negative and sum to 1");
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(splitmix64(spec.seed ^ 0x5u));
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(spec.fractions[0] * n));
  const auto n_val = std::min(
      n - n_train, static_cast<std::size_t>(std::llround(spec.fractions[1] * n)));
  Split s;
  s.train.assign(perm.begin(), perm.begin() + n_train);
  s.val.assign(perm.begin() + n_train, perm.begin() + n_train + n_val);
  s.test.assign(perm.begin() + n_train + n_val, perm.end());
  for (auto* v : {&s.train, &s.val, &s.test}) std::sort(v->begin(), v->end());
  return s;
}

StandardizationStats compute_stats(const Dataset& ds,
                                   const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw DomainError("standardization over an empty split");
  constexpr int F = StandardizationStats::kFeatures;
  StandardizationStats s;
  std::array<double, F> sum{}, sq{};
  for (auto i : indices) {
    const auto f = StandardizationStats::features(ds.records.at(i).params);
    for (int k = 0; k < F; ++k) sum[k] += f[k];
  }
  const double n = static_cast<double>(indices.size());
  for (int k = 0; k < F; ++k) s.mean[k] = sum[k] / n;
  for (auto i : indices) {
    const auto f = StandardizationStats::features(ds.records[i].params);
    for (int k = 0; k < F; ++k) sq[k] += (f[k] - s.mean[k]) * (f[k] - s.mean[k]);
  }
  for (int k = 0; k < F; ++k) s.stddev[k] = std::sqrt(sq[k] / n);
  s.validate();
  return s;
}

Dataset generate_dataset(const GenerateOptions& opts) {
  opts.ranges.validate();
  if (opts.n < 1) throw DomainError("dataset size must be >= 1");
  Dataset ds;
  auto& h = ds.header;
  h.sim = opts.sim;
  h.ranges = opts.ranges;
  h.seed = opts.seed;
  h.count = opts.n;
  h.stratified = opts.stratified;
  h.split = opts.split;
  h.provenance = sim_config_hash(opts.sim);
  ds.records.resize(opts.n);

  const std::size_t budget = static_cast<std::size_t>(
      std::floor(opts.max_resample_rate * static_cast<double>(opts.n)));
  std::atomic<std::size_t> next{0}, resampled{0};
  std::atomic<bool> abort{false};
  std::mutex err_mu;
  std::exception_ptr error;

  auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= opts.n || abort.load()) return;
      try {
        for (std::size_t attempt = 0;; ++attempt) {
          const PhysicalParams p = round_to_storage(
              sample_one(opts.ranges, opts.seed, i, attempt, opts.stratified));
          try {
            const ModalDistribution d = simulate(p, opts.sim);
            DatasetRecord& r = ds.records[i];
            r.params = p;
            r.target = d.weights.cast<float>();
            r.provenance = h.provenance;
            break;
          } catch (const DomainError&) {
            if (resampled.fetch_add(1) + 1 > budget) {
              throw DomainError("resample rate above " +
                                std::to_string(opts.max_resample_rate * 100.0) +
                                "% (last failure at sample " + std::to_string(i) +
                                ")");
            }
          }
        }
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (!error) error = std::current_exception();
        abort = true;
        return;
      }
    }
  };

  const int workers = std::max(1, opts.workers);
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  if (error) std::rethrow_exception(error);
  h.resampled = resampled.load();
  h.stats = compute_stats(ds, ds.splits().train);
  return ds;
}

void merge(Dataset& into, const Dataset& extra) {
  if (!(into.header.sim == extra.header.sim)) {
    throw DomainError("merge: simulator configurations differ");
  }
  into.records.insert(into.records.end(), extra.records.begin(), extra.records.end());
  into.header.count = into.records.size();
  into.header.stats = compute_stats(into, into.splits().train);
}

std::string serialize(const Dataset& ds) {
  io::ByteWriter w;
  w.put_bytes(std::string_view(kMagic, 4));
  w.put(kVersion);
  DatasetHeader h = ds.header;
  h.count = ds.records.size();
  const std::string json = to_json(h).dump();
  w.put_string(json);
  w.put(io::crc32(json));
  const int L = 2 * h.sim.ell_max + 1;
  for (const auto& r : ds.records) {
    if (r.target.rows() != h.sim.m_modes || r.target.cols() != L) {
      throw InvariantError("record target shape differs from the header grid");
    }
    write_record(w, r);
  }
  return w.bytes();
}

Dataset deserialize(std::string_view bytes) {
  io::ByteReader rd(bytes);
  char magic[4];
  rd.get_span(std::span<char>(magic, 4));
  if (std::string_view(magic, 4) != std::string_view(kMagic, 4)) {
    throw FormatError("not a dataset file (bad magic)");
  }
  if (const auto v = rd.get<std::uint32_t>(); v != kVersion) {
    throw FormatError("unsupported dataset version " + std::to_string(v));
  }
  const std::string json = rd.get_string();
  if (rd.get<std::uint32_t>() != io::crc32(json)) {
    throw FormatError("dataset header checksum failure");
  }
  Dataset ds;
  try {
    ds.header = header_from_json(nlohmann::json::parse(json));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed dataset header: ") + e.what());
  }
  const std::size_t need = ds.header.count * record_bytes(ds.header.sim);
  if (rd.remaining() != need) {
    throw FormatError(rd.remaining() < need ? "truncated payload"
                                            : "trailing bytes after payload");
  }
  ds.records.reserve(ds.header.count);
  for (std::size_t i = 0; i < ds.header.count; ++i) {
    ds.records.push_back(read_record(rd, ds.header.sim, ds.header.provenance, i));
  }
  return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  io::write_file(path, serialize(ds));
  DatasetHeader h = ds.header;
  h.count = ds.records.size();
  io::write_file(path.string() + ".manifest.json", to_json(h).dump(2) + "\n");
}

Dataset load_dataset(const std::filesystem::path& path) {
  return deserialize(io::read_file(path));
}

// ---- JSON ------------------------------------------------------------------

nlohmann::json to_json(const SimConfig& c) {
  const auto& o = c.crystal.ordinary;
  const auto& e = c.crystal.extraordinary;
  return {
      {"n_radial", c.n_radial},
      {"n_angular", c.n_angular},
      {"q_max_per_um", c.q_max_per_um},
      {"m_modes", c.m_modes},
      {"ell_max", c.ell_max},
      {"crystal",
       {{"sellmeier_o", {o.A, o.B, o.C, o.D}},
        {"sellmeier_e", {e.A, e.B, e.C, e.D}},
        {"length_um", c.crystal.length_um},
        {"theta_deg", c.crystal.theta_deg}}},
  };
}

SimConfig sim_config_from_json(const nlohmann::json& j) {
  SimConfig c;
  c.n_radial = j.at("n_radial").get<int>();
  c.n_angular = j.at("n_angular").get<int>();
  c.q_max_per_um = j.at("q_max_per_um").get<double>();
  c.m_modes = j.at("m_modes").get<int>();
  c.ell_max = j.at("ell_max").get<int>();
  const auto& cr = j.at("crystal");
  const auto o = cr.at("sellmeier_o").get<std::array<double, 4>>();
  const auto e = cr.at("sellmeier_e").get<std::array<double, 4>>();
  c.crystal.ordinary = {o[0], o[1], o[2], o[3]};
  c.crystal.extraordinary = {e[0], e[1], e[2], e[3]};
  c.crystal.length_um = cr.at("length_um").get<double>();
  c.crystal.theta_deg = cr.at("theta_deg").get<double>();
  if (c.m_modes < 1 || c.ell_max < 1) throw FormatError("invalid output grid in header");
  return c;
}

nlohmann::json to_json(const ParamRanges& r) {
  auto rng = [](const Range& x) { return nlohmann::json::array({x.lo, x.hi}); };
  return {{"g", rng(r.g)},
          {"theta_deg", rng(r.theta_deg)},
          {"L_um", rng(r.L_um)},
          {"w_p_um", rng(r.w_p_um)},
          {"ell_p", r.ell_p},
          {"p_p", r.p_p},
          {"lambda_p_um", r.lambda_p_um},
          {"lambda_s_um", r.lambda_s_um}};
}

ParamRanges ranges_from_json(const nlohmann::json& j) {
  auto rng = [](const nlohmann::json& x) {
    return Range{x.at(0).get<double>(), x.at(1).get<double>()};
  };
  ParamRanges r;
  r.g = rng(j.at("g"));
  r.theta_deg = rng(j.at("theta_deg"));
  r.L_um = rng(j.at("L_um"));
  r.w_p_um = rng(j.at("w_p_um"));
  r.ell_p = j.at("ell_p").get<std::vector<int>>();
  r.p_p = j.at("p_p").get<std::vector<int>>();
  r.lambda_p_um = j.at("lambda_p_um").get<double>();
  r.lambda_s_um = j.at("lambda_s_um").get<double>();
  return r;
}

nlohmann::json to_json(const StandardizationStats& s) {
  return {{"features", {"g", "theta_deg", "L_um", "w_p_um"}},
          {"mean", s.mean},
          {"std", s.stddev}};
}

StandardizationStats stats_from_json(const nlohmann::json& j) {
  StandardizationStats s;
  s.mean = j.at("mean").get<std::array<double, 4>>();
  s.stddev = j.at("std").get<std::array<double, 4>>();
  return s;
}

nlohmann::json to_json(const DatasetHeader& h) {
  return {{"format", "OAMD"},
          {"version", kVersion},
          {"sim", to_json(h.sim)},
          {"ranges", to_json(h.ranges)},
          {"seed", h.seed},
          {"count", h.count},
          {"stratified", h.stratified},
          {"resampled", h.resampled},
          {"split", {{"fractions", h.split.fractions}, {"seed", h.split.seed}}},
          {"stats", to_json(h.stats)},
          {"provenance", h.provenance},
          {"wemd_definition", "separable 1-D W1 over m and ell marginals"}};
}

DatasetHeader header_from_json(const nlohmann::json& j) {
  DatasetHeader h;
  h.sim = sim_config_from_json(j.at("sim"));
  h.ranges = ranges_from_json(j.at("ranges"));
  h.seed = j.at("seed").get<std::uint64_t>();
  h.count = j.at("count").get<std::size_t>();
  h.stratified = j.at("stratified").get<bool>();
  h.resampled = j.at("resampled").get<std::size_t>();
  h.split.fractions = j.at("split").at("fractions").get<std::array<double, 3>>();
  h.split.seed = j.at("split").at("seed").get<std::uint64_t>();
  h.stats = stats_from_json(j.at("stats"));
  h.provenance = j.at("provenance").get<std::string>();
  return h;
}

nlohmann::json to_json(const PhysicalParams& p) {
  return {{"g", p.g},
          {"theta_deg", p.theta_deg},
          {"L_um", p.L_um},
          {"w_p_um", p.w_p_um},
          {"ell_p", p.ell_p},
          {"p_p", p.p_p},
          {"lambda_p_um", p.lambda_p_um},
          {"lambda_s_um", p.lambda_s_um}};
}

}  // namespace spdc::data
