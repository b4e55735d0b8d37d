#pragma once

#include "mrsense/dmd.hpp"

namespace mrsense {

struct PodResult {
  RealMatrix modes;        // n x r, orthonormal columns
  RealVector eigenvalues;  // every squared singular value / (m - 1), nonincreasing
  RealVector mean;         // subtracted mean, empty when uncentered

  Index rank() const { return modes.cols(); }
  /// Fraction of total variance in the leading k eigenvalues.
  double variance_explained(Index k) const;
};

/// Left singular vectors of the (optionally mean-centered) snapshots. A
/// request beyond the numerical rank is clamped with a warning.
PodResult compute_pod(const SnapshotMatrix& data, Index r, bool center = false);

}  // namespace mrsense
