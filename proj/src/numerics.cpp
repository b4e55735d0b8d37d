#include "mrsense/numerics.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mrsense/diagnostics.hpp"

namespace mrsense {

namespace {

constexpr double kPositiveFloor = 1e-13;
constexpr double kPinvCutoff = 1e-12;
constexpr double kRankZero = 1e-12;
// Relative pivot norms closer than this count as ties; well above the
// accuracy of estimated modes, well below any meaningful log det gap.
constexpr double kTieTolerance = 1e-6;
constexpr double kEigResidual = 1e-8;

template <typename Matrix>
double spectral_norm(const Matrix& A) {
  if (A.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(A);
  return svd.singularValues()(0);
}

template <typename Matrix>
void check_eigenpairs(const Matrix& A, const EigResult& out) {
  const double bound = kEigResidual * spectral_norm(A) + std::numeric_limits<double>::min();
  const ComplexMatrix Ac = A.template cast<Complex>();
  for (Index k = 0; k < out.values.size(); ++k) {
    const double residual = (Ac * out.vectors.col(k) - out.values(k) * out.vectors.col(k)).norm();
    if (!(residual <= bound)) {
      std::ostringstream msg;
      msg << "eigensolver residual " << residual << " exceeds bound " << bound << " for pair " << k;
      throw NumericalError(msg.str());
    }
  }
}

void normalize_columns(ComplexMatrix& V) {
  for (Index k = 0; k < V.cols(); ++k) {
    const double nrm = V.col(k).norm();
    if (nrm > 0) V.col(k) /= nrm;
  }
}

}  // namespace

SvdTruncation SvdTruncation::fixed_rank(Index r, Index cap) {
  return {Mode::FixedRank, static_cast<double>(r), cap};
}

SvdTruncation SvdTruncation::energy(double tau, Index cap) { return {Mode::EnergyFraction, tau, cap}; }

SvdTruncation SvdTruncation::threshold(double s_min, Index cap) { return {Mode::Threshold, s_min, cap}; }

void SvdTruncation::validate() const {
  if (cap < 1) throw ConfigError("truncation cap must be >= 1");
  switch (mode) {
    case Mode::FixedRank:
      if (!(value >= 1.0) || value != std::floor(value)) throw ConfigError("fixed rank must be an integer >= 1");
      break;
    case Mode::EnergyFraction:
      if (!(value > 0.0 && value <= 1.0)) throw ConfigError("energy fraction must lie in (0, 1]");
      break;
    case Mode::Threshold:
      if (!(value >= 0.0)) throw ConfigError("singular-value threshold must be >= 0");
      break;
  }
}

Index select_rank(const RealVector& s, const SvdTruncation& trunc) {
  trunc.validate();
  if (s.size() == 0 || !(s(0) > 0)) return 0;
  Index positive = 0;
  while (positive < s.size() && s(positive) > kPositiveFloor * s(0)) ++positive;

  Index r = 0;
  switch (trunc.mode) {
    case SvdTruncation::Mode::FixedRank: {
      r = static_cast<Index>(trunc.value);
      if (r > s.size()) {
        std::ostringstream msg;
        msg << "requested rank " << r << " exceeds min(rows, cols) = " << s.size() << "; clamped";
        warn(msg.str());
        r = s.size();
      }
      break;
    }
    case SvdTruncation::Mode::EnergyFraction: {
      const double total = s.squaredNorm();
      const double target = trunc.value * total * (1.0 - 1e-12);
      double acc = 0.0;
      for (r = 0; r < s.size() && acc < target; ++r) acc += s(r) * s(r);
      break;
    }
    case SvdTruncation::Mode::Threshold: {
      while (r < s.size() && s(r) > trunc.value) ++r;
      break;
    }
  }
  return std::min({r, trunc.cap, positive});
}

SvdResult thin_svd(const RealMatrix& A) {
  SvdResult out;
  if (A.rows() >= 2 * A.cols()) {
    // Tall: compress with QR first, the SVD then runs on a square factor.
    Eigen::HouseholderQR<RealMatrix> qr(A);
    const RealMatrix R = qr.matrixQR().topRows(A.cols()).triangularView<Eigen::Upper>();
    Eigen::BDCSVD<RealMatrix> svd(R, Eigen::ComputeThinU | Eigen::ComputeThinV);
    out.U = qr.householderQ() * RealMatrix::Identity(A.rows(), A.cols()) * svd.matrixU();
    out.s = svd.singularValues();
    out.V = svd.matrixV();
  } else if (A.cols() >= 2 * A.rows()) {
    SvdResult t = thin_svd(A.transpose());
    out.U = std::move(t.V);
    out.s = std::move(t.s);
    out.V = std::move(t.U);
  } else {
    Eigen::BDCSVD<RealMatrix> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
    out.U = svd.matrixU();
    out.s = svd.singularValues();
    out.V = svd.matrixV();
  }
  return out;
}

SvdResult truncated_svd(const RealMatrix& A, const SvdTruncation& trunc) {
  trunc.validate();
  if (A.size() == 0 || !A.allFinite()) throw NumericalError("degenerate input: empty or non-finite matrix");
  if (A.cwiseAbs().maxCoeff() == 0.0) throw NumericalError("degenerate input: all-zero matrix");
  SvdResult full = thin_svd(A);
  const Index r = select_rank(full.s, trunc);
  if (r < 1) throw NumericalError("rank collapse: truncation retains no singular values");
  return {full.U.leftCols(r), full.s.head(r), full.V.leftCols(r)};
}

EigResult dense_eig(const RealMatrix& A) {
  if (A.rows() != A.cols()) throw ConfigError("dense_eig requires a square matrix");
  if (!A.allFinite()) throw NumericalError("dense_eig: non-finite input");
  Eigen::EigenSolver<RealMatrix> es(A, true);
  if (es.info() != Eigen::Success) throw NumericalError("dense_eig: real Schur iteration did not converge");
  EigResult out{es.eigenvalues(), es.eigenvectors()};
  normalize_columns(out.vectors);
  check_eigenpairs(A, out);
  return out;
}

EigResult dense_eig(const ComplexMatrix& A) {
  if (A.rows() != A.cols()) throw ConfigError("dense_eig requires a square matrix");
  if (!A.allFinite()) throw NumericalError("dense_eig: non-finite input");
  const double scale = A.norm();
  if (A.imag().norm() <= 1e-15 * scale) return dense_eig(RealMatrix(A.real()));
  Eigen::ComplexEigenSolver<ComplexMatrix> es(A, true);
  if (es.info() != Eigen::Success) throw NumericalError("dense_eig: complex Schur iteration did not converge");
  EigResult out{es.eigenvalues(), es.eigenvectors()};
  normalize_columns(out.vectors);
  check_eigenpairs(A, out);
  return out;
}

PivotedQr pivoted_qr(const RealMatrix& A, Index p) {
  const Index rows = A.rows();
  const Index cols = A.cols();
  if (p < 1 || p > cols) throw ConfigError("pivoted_qr: p must satisfy 1 <= p <= cols");

  RealMatrix W = A;
  std::vector<Index> perm(static_cast<size_t>(cols));
  for (Index j = 0; j < cols; ++j) perm[static_cast<size_t>(j)] = j;

  const double scale = cols > 0 ? W.colwise().norm().maxCoeff() : 0.0;
  const double zero_tol = kRankZero * scale;

  PivotedQr out;
  RealVector workspace(cols);
  Index k = 0;
  for (; k < p; ++k) {
    if (k >= rows) {
      out.rank_deficient = true;
      break;
    }
    const Index len = rows - k;
    Index best = -1;
    double best_norm = -1.0;
    for (Index j = k; j < cols; ++j) {
      const double nrm = W.col(j).tail(len).norm();
      if (best < 0 || nrm > best_norm * (1.0 + kTieTolerance)) {
        best = j;
        best_norm = nrm;
      } else if (nrm >= best_norm * (1.0 - kTieTolerance) && perm[static_cast<size_t>(j)] < perm[static_cast<size_t>(best)]) {
        best = j;
        best_norm = std::max(best_norm, nrm);
      }
    }
    if (!(best_norm > zero_tol)) {
      out.rank_deficient = true;
      break;
    }
    if (best != k) {
      W.col(k).swap(W.col(best));
      std::swap(perm[static_cast<size_t>(k)], perm[static_cast<size_t>(best)]);
    }
    double tau = 0.0;
    double beta = 0.0;
    W.col(k).tail(len).makeHouseholderInPlace(tau, beta);
    if (k + 1 < cols) {
      const RealVector essential = W.col(k).tail(len - 1);
      W.bottomRightCorner(len, cols - k - 1).applyHouseholderOnTheLeft(essential, tau, workspace.data());
    }
    W(k, k) = beta;
    W.col(k).tail(len - 1).setZero();
    out.pivots.push_back(perm[static_cast<size_t>(k)]);
  }

  out.R = W.topRows(k).triangularView<Eigen::Upper>();
  out.r_diag = out.R.diagonal().head(k).cwiseAbs();
  out.permutation = std::move(perm);
  return out;
}

ComplexMatrix principal_sqrt(const ComplexMatrix& A) {
  if (A.rows() != A.cols()) throw ConfigError("principal_sqrt requires a square matrix");
  if (!A.allFinite()) throw NumericalError("principal_sqrt: non-finite input");
  if (A.size() == 0) return A;
  Eigen::ComplexSchur<ComplexMatrix> schur(A);
  if (schur.info() != Eigen::Success) throw NumericalError("principal_sqrt: Schur iteration did not converge");
  const ComplexVector eig = schur.matrixT().diagonal();
  const double scale = std::max(eig.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
  for (Index k = 0; k < eig.size(); ++k) {
    const Complex z = eig(k);
    const bool on_axis = std::abs(z.imag()) <= 1e-10 * scale && z.real() <= 1e-14 * scale;
    if (on_axis) throw NumericalError("branch ambiguity: eigenvalue on the closed negative real axis");
  }
  ComplexMatrix B = A.sqrt();
  const double err = (B * B - A).norm();
  if (!(err <= 1e-8 * A.norm())) {
    std::ostringstream msg;
    msg << "principal_sqrt: residual " << err << " exceeds tolerance";
    throw NumericalError(msg.str());
  }
  return B;
}

ComplexVector least_squares(const ComplexMatrix& A, const ComplexVector& y) {
  if (A.rows() < 1 || A.rows() != y.size()) throw ConfigError("least_squares: dimension mismatch");
  if (A.cols() == 0) return ComplexVector();
  Eigen::BDCSVD<ComplexMatrix> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  svd.setThreshold(kPinvCutoff);
  return svd.solve(y);
}

RealVector least_squares(const RealMatrix& A, const RealVector& y) {
  if (A.rows() < 1 || A.rows() != y.size()) throw ConfigError("least_squares: dimension mismatch");
  if (A.cols() == 0) return RealVector();
  Eigen::BDCSVD<RealMatrix> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  svd.setThreshold(kPinvCutoff);
  return svd.solve(y);
}

RealMatrix least_squares(const RealMatrix& A, const RealMatrix& Y) {
  if (A.rows() < 1 || A.rows() != Y.rows()) throw ConfigError("least_squares: dimension mismatch");
  if (A.cols() == 0) return RealMatrix(0, Y.cols());
  Eigen::BDCSVD<RealMatrix> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  svd.setThreshold(kPinvCutoff);
  return svd.solve(Y);
}

Index numerical_rank(const RealMatrix& A) {
  if (A.size() == 0) return 0;
  Eigen::BDCSVD<RealMatrix> svd(A);
  svd.setThreshold(kPinvCutoff);
  return svd.rank();
}

}  // namespace mrsense
