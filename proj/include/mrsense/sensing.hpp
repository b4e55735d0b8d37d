#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mrsense/mrdmd.hpp"

namespace mrsense {

/// Real columns spanning a library's modes, with the library column each
/// real column came from.
struct RealBasis {
  RealMatrix columns;  // n x M_real, orthonormal within each source column
  std::vector<Index> source;
};

/// Directions of [Re phi, Im phi] whose singular value is below this fraction
/// of the leading one are dropped. A standing wave then yields one column and
/// a travelling wave two.
inline constexpr double kDefaultRealifyCut = 0.2;

RealBasis realify(const ModeLibrary& lib, double rank_cut = kDefaultRealifyCut);

struct AlphaFilter {
  enum class Mode { AmplitudeThreshold, TopPerLevel, Bins, TopPerFrequency };

  Mode mode = Mode::AmplitudeThreshold;
  double threshold = 0.0;                   // AmplitudeThreshold: keep |b| >= threshold
  Index top_k = 1;                          // TopPerLevel and TopPerFrequency
  std::vector<std::pair<Index, Index>> bins;  // Bins: (level, bin)
  double frequency_tolerance = 0.05;        // TopPerFrequency: relative match
  double frequency_floor = 1e-3;            // TopPerFrequency: absolute match
  double min_relative_amplitude = 0.1;      // TopPerFrequency: ignore weaker columns

  static AlphaFilter amplitude(double T);
  static AlphaFilter top_per_level(Index k);
  static AlphaFilter explicit_bins(std::vector<std::pair<Index, Index>> bins);
  static AlphaFilter top_per_frequency(Index k = 1, double rel_tol = 0.05, double min_rel_amplitude = 0.1);
};

/// Drops repeat columns (keeping the higher-amplitude copy) and applies the
/// filter. Column order is preserved. Throws ConfigError("empty alpha set").
ModeLibrary filter_library(const ModeLibrary& lib, const AlphaFilter& filter);

struct SensorSet {
  std::vector<Index> gammas;  // selection order
  std::string source;
  bool rank_deficient = false;  // pivoting ran out of rank before p
};

/// Greedy D-optimal sensor placement on the rows of `basis` (n x M). For
/// p <= M the rows are chosen by pivoted QR of basis^T. For p > M pivoting
/// runs on basis * basis^T, and once its rank is exhausted each further row
/// maximizes the gain in log det of the sensor Gram matrix.
SensorSet select_sensors(const RealMatrix& basis, Index p, std::string source = "basis");
SensorSet select_sensors(const ModeLibrary& lib, Index p, double rank_cut = kDefaultRealifyCut);

/// Row selection x -> (x[gamma_1], ..., x[gamma_p]).
class SelectionOperator {
 public:
  SelectionOperator(const SensorSet& sensors, Index n);

  Index rows() const { return static_cast<Index>(gammas_.size()); }
  Index cols() const { return n_; }
  RealVector apply(const RealVector& x) const;
  RealMatrix apply(const RealMatrix& X) const;
  RealMatrix dense() const;

 private:
  std::vector<Index> gammas_;
  Index n_;
};

SelectionOperator measurement_operator(const SensorSet& sensors, Index n);

/// log det of (C basis)^T (C basis). -inf when singular.
double sensor_log_det(const RealMatrix& basis, const std::vector<Index>& gammas);

/// Per-index selection counts of select_sensors over several windows.
std::vector<Index> sensor_ensemble(const std::vector<ModeLibrary>& windows, Index p, Index threads = 1);
std::vector<Index> sensor_ensemble(const std::vector<RealMatrix>& windows, Index p, Index threads = 1);

}  // namespace mrsense
