#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mrsense/config.hpp"
#include "mrsense/datagen.hpp"
#include "mrsense/estimation.hpp"
#include "mrsense/pod.hpp"

namespace mrsense {

/// Everything the table1 studies share: the video, its decomposition, the
/// filtered library and both sensing bases.
struct Table1Study {
  VideoSpec spec;
  SnapshotMatrix video;
  MrDmdTree tree;
  ModeLibrary library;
  ModeLibrary filtered;
  RealBasis realified;
  PodResult pod;
  RealMatrix generators;   // n x 3 true Gaussians, unit peak
  RealMatrix mrdmd_basis;  // real mrDMD columns scaled to unit peak, column i paired with generator i
  RealMatrix pod_basis;    // leading POD modes scaled to unit peak, in variance order
  SensorSet mrdmd_sensors;
  SensorSet pod_sensors;
};

Table1Study prepare_table1(const RunConfig& config);

/// Scales each column so its largest-magnitude entry is +1.
RealMatrix peak_normalize(const RealMatrix& basis);

/// Relative Frobenius error of coefficients estimated from the sensor rows
/// of X = generators * truth, with noise of the given variance.
double coefficient_error(const RealMatrix& basis, const SensorSet& sensors, const RealMatrix& generators,
                         const RealMatrix& truth, double variance, std::uint64_t noise_seed,
                         RealMatrix* estimate = nullptr);

struct NoiseLevel {
  double variance = 0.0;
  std::vector<double> mrdmd_errors;
  std::vector<double> pod_errors;
  double mrdmd_median = 0.0;
  double pod_median = 0.0;
};

struct NoiseStudy {
  std::vector<NoiseLevel> levels;
  bool monotone = false;   // median mrDMD error nondecreasing in variance
  bool separated = false;  // mrDMD median <= 0.1 x POD median for variance <= 1e-2
};

/// Trials share coefficient and noise draws across variance levels.
NoiseStudy run_noise_study(const Table1Study& study, const RunConfig& config);

struct CoefTracking {
  RealVector times;
  RealMatrix truth;  // 3 x T
  RealMatrix mrdmd;
  RealMatrix pod;
  double mrdmd_error = 0.0;
  double pod_error = 0.0;
};

CoefTracking run_coef_tracking(const Table1Study& study, const RunConfig& config);

struct ReconstructionWindow {
  Index bin = 1;
  double t_start = 0.0;
  double t_end = 0.0;
  Index snapshots = 0;
  double max_error = 0.0;
  double mean_error = 0.0;
};

struct ReconstructionStudy {
  RealVector times;   // held-out snapshot times
  RealVector errors;  // relative l2 error per held-out snapshot
  std::vector<Index> active_columns;
  std::vector<ReconstructionWindow> windows;  // leaf bins of the training tree
  SensorSet sensors;
  Index library_columns = 0;
  bool passed = false;  // every error < 0.05
};

/// mrDMD on the even samples of the multiscale field, oversampled QR sensors
/// on the filtered library, and a least-squares lift of each odd sample
/// through the modes of the nodes active at its time.
ReconstructionStudy run_reconstruction(const RunConfig& config);

struct EnsembleStudy {
  Grid grid;
  std::vector<Index> cells;                        // grid cell of each state row
  std::vector<std::pair<double, double>> windows;  // time support of each window
  std::vector<SensorSet> selections;
  std::vector<Index> counts;  // per state row
  std::vector<bool> burst_active;
  Index burst_hits = 0;        // windows selecting a sensor near the burst center
  Index persistent_hits = 0;   // windows selecting a sensor near a persistent structure
  bool passed = false;         // burst sensors only where the burst is active
};

EnsembleStudy run_ensemble(const RunConfig& config);

MultiscaleSpec multiscale_spec(const RunConfig& config);
VideoSpec table1_spec(const RunConfig& config);

inline const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{"noise-study", "coef-tracking", "reconstruction", "ensemble"};
  return names;
}

}  // namespace mrsense
