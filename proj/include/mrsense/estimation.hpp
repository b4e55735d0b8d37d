#pragma once

#include <vector>

#include "mrsense/sensing.hpp"

namespace mrsense {

struct Measurement {
  RealVector values;  // one entry per sensor, in sensor order
  SensorSet sensors;
  double noise_sigma = 0.0;
};

enum class SparseSolver { Admm, MatchingPursuit };

struct EstimationOptions {
  SparseSolver solver = SparseSolver::Admm;
  double activity_threshold = 1e-3;  // relative to max |a_j| ||C phi_j||
  double abs_tol = 1e-8;
  double rel_tol = 1e-6;
  Index max_iterations = 10000;
  double rank_cut = kDefaultRealifyCut;  // for library inputs
};

struct EstimationResult {
  RealVector coefficients;     // refit on the active set, zero elsewhere
  RealVector l1_coefficients;  // first-stage solution
  std::vector<Index> active_set;
  RealVector state_estimate;
  double residual = 0.0;  // ||y - C basis a||
  Index iterations = 0;
  bool least_squares_only = false;  // p >= M: the first stage is a plain solve
};

/// Two-stage estimate of basis coefficients from point measurements:
/// min ||a||_1 s.t. ||C basis a - y|| <= max(sigma sqrt(p), 1e-10) on
/// column-normalized C basis, then a least-squares refit on the active set
/// of columns whose sensor contribution |a_j| ||C phi_j|| exceeds the
/// activity threshold times the largest one.
/// With at least as many sensors as columns the first stage is a
/// least-squares solve.
EstimationResult sparse_estimate(const Measurement& y, const RealMatrix& basis, const EstimationOptions& options = {});
EstimationResult sparse_estimate(const Measurement& y, const ModeLibrary& lib, const EstimationOptions& options = {});

/// Least-squares coefficients of `basis` fitted on the sensor rows.
RealVector gappy_coefficients(const Measurement& y, const RealMatrix& basis);

/// basis * (C basis)^+ y. Warns when C basis is rank deficient.
RealVector gappy_reconstruct(const Measurement& y, const RealMatrix& basis);

struct EnvelopeEvent {
  Index begin = 0;  // inclusive
  Index end = 0;    // inclusive
  int sign = 1;     // +1 above baseline, -1 below
};

struct Envelope {
  RealVector upper;
  RealVector lower;
  RealVector baseline;  // (upper + lower) / 2
  std::vector<EnvelopeEvent> events;
};

/// Envelopes through the sliding-window extrema of a coefficient series.
/// Events are maximal runs where the baseline, measured from the series'
/// linear trend, leaves the band of one standard deviation of the detrended
/// series.
Envelope trace_envelope(const RealVector& series, Index window);

}  // namespace mrsense
