#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "spdc/schmidt.hpp"

namespace spdc::data {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct ParamRanges {
  Range g{0.02, 5.4};
  Range theta_deg{32.9, 33.0};
  Range L_um{850.0, 3500.0};
  Range w_p_um{130.0, 670.0};
  std::vector<int> ell_p{-2, -1, 0, 1, 2, 3, 4};
  std::vector<int> p_p{0, 1, 2, 3, 4};
  double lambda_p_um = 0.355;
  double lambda_s_um = 0.710;

  void validate() const;
};

/// One labelled sample. Continuous parameters are stored as f32 and the
/// record's target was simulated from exactly those rounded values.
struct DatasetRecord {
  PhysicalParams params;
  Eigen::ArrayXXf target;  ///< (M, 2 ell_max + 1)
  std::string provenance;
};

/// Per-feature z-score statistics over [g, theta, L, w_p].
struct StandardizationStats {
  static constexpr int kFeatures = 4;
  std::array<double, kFeatures> mean{};
  std::array<double, kFeatures> stddev{};

  static std::array<double, kFeatures> features(const PhysicalParams& p);
  std::array<double, kFeatures> apply(const PhysicalParams& p) const;
  void validate() const;

  bool operator==(const StandardizationStats&) const = default;
};

struct SplitSpec {
  std::array<double, 3> fractions{0.8, 0.1, 0.1};
  std::uint64_t seed = 0;
};

struct Split {
  std::vector<std::size_t> train, val, test;
};

struct DatasetHeader {
  SimConfig sim;
  ParamRanges ranges;
  std::uint64_t seed = 0;
  std::size_t count = 0;
  bool stratified = false;
  std::size_t resampled = 0;
  SplitSpec split;
  StandardizationStats stats;  ///< computed on the train split
  std::string provenance;
};

struct Dataset {
  DatasetHeader header;
  std::vector<DatasetRecord> records;

  Split splits() const;
};

/// Stable hash of the simulator configuration.
std::string sim_config_hash(const SimConfig& cfg);

/// Deterministic per-index draw; `attempt` > 0 gives the resample stream.
PhysicalParams sample_one(const ParamRanges& ranges, std::uint64_t seed,
                          std::size_t index, std::size_t attempt,
                          bool stratified);

std::vector<PhysicalParams> sample_params(const ParamRanges& ranges,
                                          std::uint64_t seed, std::size_t n,
                                          bool stratified = false);

/// Rounds continuous fields through f32, the storage precision.
PhysicalParams round_to_storage(PhysicalParams p);

struct GenerateOptions {
  ParamRanges ranges;
  SimConfig sim;
  std::size_t n = 2500;
  std::uint64_t seed = 0;
  int workers = 1;
  bool stratified = false;
  SplitSpec split;
  double max_resample_rate = 0.01;
};

Dataset generate_dataset(const GenerateOptions& opts);

Split split(std::size_t n, const SplitSpec& spec);

StandardizationStats compute_stats(const Dataset& ds,
                                   const std::vector<std::size_t>& indices);

/// Appends records simulated under the same configuration.
void merge(Dataset& into, const Dataset& extra);

std::string serialize(const Dataset& ds);
Dataset deserialize(std::string_view bytes);
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

nlohmann::json to_json(const SimConfig& cfg);
SimConfig sim_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ParamRanges& r);
ParamRanges ranges_from_json(const nlohmann::json& j);
nlohmann::json to_json(const StandardizationStats& s);
StandardizationStats stats_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DatasetHeader& h);
DatasetHeader header_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PhysicalParams& p);

}  // namespace spdc::data
