#pragma once

#include "mrsense/numerics.hpp"

namespace mrsense {

/// Column snapshots x(t0), x(t0 + dt), ... of an n-dimensional state.
struct SnapshotMatrix {
  RealMatrix data;  // n x m
  double dt = 1.0;
  double t0 = 0.0;

  Index states() const { return data.rows(); }
  Index snapshots() const { return data.cols(); }
  double time(Index k) const { return t0 + static_cast<double>(k) * dt; }
  /// Throws ConfigError unless m >= 2, dt > 0 and all entries are finite.
  void validate() const;
};

enum class AmplitudeFit { FirstSnapshot, AllSnapshots };

struct DmdOptions {
  SvdTruncation truncation = SvdTruncation::energy(0.99, 10);
  /// Number of stacked time-delay copies. With d > 1 an energy or threshold
  /// rank r is expanded to d * r so a real oscillation keeps both members of
  /// its conjugate pair.
  Index delays = 1;
  AmplitudeFit amplitude_fit = AmplitudeFit::FirstSnapshot;
};

struct DmdResult {
  ComplexMatrix modes;  // n x r, unit-norm columns
  ComplexVector lambdas;
  ComplexVector omegas;  // log(lambda) / (i dt)
  ComplexVector amplitudes;
  double dt = 1.0;
  double t0 = 0.0;

  Index rank() const { return modes.cols(); }
  /// Oscillation frequency in cycles per time unit, |Re omega| / (2 pi).
  RealVector frequencies() const;
  /// Modes kept by `mask`, in order.
  DmdResult subset(const std::vector<bool>& mask) const;
};

/// Continuous frequency for a discrete eigenvalue: log(lambda) / (i dt).
Complex continuous_omega(Complex lambda, double dt);

DmdResult exact_dmd(const SnapshotMatrix& window, const SvdTruncation& trunc);
DmdResult exact_dmd(const SnapshotMatrix& window, const DmdOptions& options);

/// Forward-backward debiased DMD. Falls back to exact_dmd with a warning when
/// the backward operator is singular, the square root branch is ambiguous or
/// a forward eigenvalue has nonpositive real part.
DmdResult fb_dmd(const SnapshotMatrix& window, const SvdTruncation& trunc);
DmdResult fb_dmd(const SnapshotMatrix& window, const DmdOptions& options);

/// Re sum_k b_k phi_k exp(i omega_k (t - t0)) at each requested time.
RealMatrix dmd_reconstruct(const DmdResult& res, const RealVector& times);

namespace detail {
/// fb_dmd with the reduced backward operator replaced by `forced_backward`
/// when non-null. Exposed for exercising the fallback path.
DmdResult fb_dmd_impl(const SnapshotMatrix& window, const DmdOptions& options, const RealMatrix* forced_backward);
}  // namespace detail

}  // namespace mrsense
