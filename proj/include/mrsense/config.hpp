#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "mrsense/estimation.hpp"
#include "mrsense/mrdmd.hpp"
#include "mrsense/sensing.hpp"

namespace mrsense {

using Json = nlohmann::ordered_json;

/// Every knob a subcommand or experiment may read. Validated before use and
/// echoed into the provenance block of every output.
struct RunConfig {
  // data sources
  std::string preset = "table1";  // generate: table1 | multiscale
  double dt = 0.0;                // generate: 0 keeps the preset step
  std::string input;              // snapshot matrix for dmd, mrdmd, pod
  double input_dt = 0.0;  // 0 takes the sampling recorded in the input file
  double input_t0 = 0.0;

  // decomposition
  MrDmdOptions mrdmd;
  Index dmd_delays = 1;
  bool dmd_forward_backward = true;
  Index pod_rank = 3;
  bool pod_center = false;

  // sensing and estimation
  std::string basis = "mrdmd";  // mrdmd | pod
  std::string library;          // directory written by mrdmd or pod
  AlphaFilter alpha = AlphaFilter::top_per_frequency();
  double rank_cut = kDefaultRealifyCut;
  Index sensors = 3;
  std::string sensor_file;   // sensors.json
  std::string measurements;  // p x T matrix file
  double sigma = 0.0;
  SparseSolver solver = SparseSolver::Admm;

  // reconstruction from a stored tree
  std::string tree;  // directory written by mrdmd
  std::vector<double> times;  // empty: every snapshot time

  // experiments
  Index trials = 20;
  std::vector<double> variances{1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0};
  double tracking_variance = 1e-3;
  Index test_samples = 200;
  Index oversampled_sensors = 30;
  Index ensemble_windows = 8;
  /// Per-window filter; the default keeps low-energy structures.
  AlphaFilter ensemble_alpha = AlphaFilter::amplitude(0.0);

  // global
  std::uint64_t seed = 0;
  std::string out = ".";
  Index threads = 1;

  /// Throws ConfigError naming the first invalid field.
  void validate() const;
  Json to_json() const;
  /// Strict: unknown keys are rejected. Missing keys keep their defaults.
  static RunConfig from_json(const Json& j);
};

RunConfig load_config(const std::filesystem::path& path);

Json truncation_to_json(const SvdTruncation& t);
SvdTruncation truncation_from_json(const Json& j);
Json alpha_to_json(const AlphaFilter& f);
AlphaFilter alpha_from_json(const Json& j);

}  // namespace mrsense
