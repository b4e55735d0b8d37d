#pragma once

#include <Eigen/Dense>

#include <complex>
#include <limits>
#include <vector>

namespace mrsense {

using Index = Eigen::Index;
using Complex = std::complex<double>;
using RealMatrix = Eigen::MatrixXd;
using RealVector = Eigen::VectorXd;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;

/// Rank-selection rule applied to a singular-value spectrum.
struct SvdTruncation {
  enum class Mode { FixedRank, EnergyFraction, Threshold };

  Mode mode = Mode::EnergyFraction;
  double value = 0.99;  // r, tau or the singular-value floor depending on mode
  Index cap = std::numeric_limits<Index>::max();

  static SvdTruncation fixed_rank(Index r, Index cap = std::numeric_limits<Index>::max());
  static SvdTruncation energy(double tau, Index cap = std::numeric_limits<Index>::max());
  static SvdTruncation threshold(double s_min, Index cap = std::numeric_limits<Index>::max());

  /// Throws ConfigError on r < 1, tau outside (0, 1], negative threshold, cap < 1.
  void validate() const;
};

struct SvdResult {
  RealMatrix U;
  RealVector s;
  RealMatrix V;
};

/// Number of leading singular values kept by `trunc` (s nonincreasing).
/// Never exceeds the count of s_i > 0. Warns when a fixed rank is clamped.
Index select_rank(const RealVector& s, const SvdTruncation& trunc);

/// Thin SVD of A with all min(rows, cols) singular triplets.
SvdResult thin_svd(const RealMatrix& A);

/// Thin SVD truncated by `trunc`. Throws NumericalError("degenerate input") on
/// an all-zero matrix.
SvdResult truncated_svd(const RealMatrix& A, const SvdTruncation& trunc);

struct EigResult {
  ComplexVector values;
  ComplexMatrix vectors;  // unit 2-norm columns
};

/// Eigenpairs of a small dense matrix. Real input goes through the real
/// Schur path so complex eigenvalues come out in exact conjugate pairs.
/// Throws NumericalError when any pair violates the residual bound.
EigResult dense_eig(const RealMatrix& A);
EigResult dense_eig(const ComplexMatrix& A);

struct PivotedQr {
  std::vector<Index> pivots;       // selection order
  RealVector r_diag;               // |R_kk| in selection order
  RealMatrix R;                    // k x cols, columns permuted to `permutation`
  std::vector<Index> permutation;  // pivots first, then the remaining columns
  bool rank_deficient = false;
};

/// Householder QR with greedy column pivoting, stopped after p pivots. Each
/// step picks the column of maximum residual norm; ties within 1e-6 relative
/// go to the lowest index. Stops early and sets rank_deficient when every
/// remaining residual is numerically zero.
PivotedQr pivoted_qr(const RealMatrix& A, Index p);

/// Principal square root. Throws NumericalError("branch ambiguity") when an
/// eigenvalue lies on the closed negative real axis.
ComplexMatrix principal_sqrt(const ComplexMatrix& A);

/// Minimum-norm least-squares solution via SVD with cutoff 1e-12 * s_max.
ComplexVector least_squares(const ComplexMatrix& A, const ComplexVector& y);
RealVector least_squares(const RealMatrix& A, const RealVector& y);
RealMatrix least_squares(const RealMatrix& A, const RealMatrix& Y);

/// Numerical rank with the same cutoff as least_squares.
Index numerical_rank(const RealMatrix& A);

}  // namespace mrsense
