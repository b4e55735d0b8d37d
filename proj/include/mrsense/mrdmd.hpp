#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mrsense/dmd.hpp"

namespace mrsense {

struct MrDmdOptions {
  Index levels = 4;
  SvdTruncation truncation = SvdTruncation::energy(0.99, 10);
  /// A mode is slow at a bin when it completes at most rho cycles over it.
  double rho = 1.0;
  Index delays = 2;
  bool forward_backward = true;
  AmplitudeFit amplitude_fit = AmplitudeFit::FirstSnapshot;
  /// Snapshot decimation used for each node's DMD fit. 1 keeps every sample.
  Index stride = 1;
  /// Upper bound on concurrently evaluated subtrees.
  Index threads = 1;

  void validate() const;
};

struct MrDmdNode {
  Index level = 1;  // 1-based
  Index bin = 1;    // 1-based within the level
  double t_start = 0.0;
  double t_end = 0.0;
  Index first = 0;  // first snapshot index inside the bin
  Index count = 0;  // snapshots inside the bin
  double cutoff = 0.0;  // slow-frequency bound in cycles per unit; +inf at leaves
  DmdResult slow;       // retained modes, possibly none
};

struct MrDmdTree {
  Index levels = 0;
  Index states = 0;
  Index snapshots = 0;
  double dt = 1.0;
  double t0 = 0.0;
  MrDmdOptions options;
  std::vector<MrDmdNode> nodes;  // level-major, bin-minor

  double span() const { return static_cast<double>(snapshots - 1) * dt; }
  static Index node_index(Index level, Index bin);
  const MrDmdNode& node(Index level, Index bin) const;
};

/// Bin (1-based) of snapshot k out of m at `level`. Bins are closed on the
/// right; the first bin also holds its left edge.
Index bin_of_snapshot(Index k, Index m, Index level);

/// Bin of time t at `level` for a tree; throws ConfigError outside the span.
Index bin_of_time(const MrDmdTree& tree, double t, Index level);

/// Throws ConfigError("insufficient resolution for requested levels") when a
/// leaf bin would hold fewer than 4 snapshots.
MrDmdTree mrdmd_decompose(const SnapshotMatrix& data, const MrDmdOptions& options);

/// Sum over levels of the slow reconstruction of the bin holding each time.
RealMatrix mrdmd_reconstruct(const MrDmdTree& tree, const RealVector& times);

struct LibraryColumn {
  Index level = 1;
  Index bin = 1;
  Index k = 0;  // mode index inside the node's slow set
  Complex omega;
  double frequency = 0.0;  // cycles per unit
  double amplitude = 0.0;  // |b|
  double t_start = 0.0;
  double t_end = 0.0;
  bool paired = false;  // stands for a conjugate pair
  bool repeat = false;  // near-identical to a column of a touching bin
};

/// Retained modes flattened into columns. A conjugate pair contributes one
/// column, the member with positive Re omega.
struct ModeLibrary {
  ComplexMatrix matrix;  // n x M, unit-norm columns
  std::vector<LibraryColumn> meta;

  Index states() const { return matrix.rows(); }
  Index size() const { return matrix.cols(); }
  ModeLibrary select(const std::vector<Index>& columns) const;
};

/// |<a, b>| above which two library columns count as the same structure.
inline constexpr double kRepeatSimilarity = 0.999;

/// Throws NumericalError("empty library") when the tree retained nothing.
ModeLibrary build_library(const MrDmdTree& tree);

struct AmplitudeCell {
  Index level = 1;
  Index bin = 1;
  double t_start = 0.0;
  double t_end = 0.0;
  double mean_amplitude = 0.0;
  std::vector<std::pair<double, double>> modes;  // (frequency, |b|)
};

std::vector<AmplitudeCell> amplitude_map(const MrDmdTree& tree);

}  // namespace mrsense
