#include "mrsense/dmd.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "mrsense/diagnostics.hpp"

namespace mrsense {

namespace {

// Singular values below these fractions of s_max are round-off for the
// respective route and never enter the reduced operator.
constexpr double kGramFloor = 1e-7;
constexpr double kDirectFloor = 1e-10;
constexpr double kNegligibleLambda = 1e-12;

// SVD of the delay-stacked matrix X (first N augmented snapshots) and the
// projection of the shifted matrix onto its left singular vectors.
struct Reduction {
  RealVector s;     // r
  RealMatrix V;     // N x r
  RealMatrix UtXp;  // r x N
};

Index expanded_rank(const RealVector& s_all, const DmdOptions& opt, double floor) {
  const SvdTruncation& trunc = opt.truncation;
  SvdTruncation uncapped = trunc;
  uncapped.cap = std::numeric_limits<Index>::max();
  Index r = select_rank(s_all, uncapped);
  if (trunc.mode != SvdTruncation::Mode::FixedRank) r *= opt.delays;
  Index above_floor = 0;
  while (above_floor < s_all.size() && s_all(above_floor) > floor * s_all(0)) ++above_floor;
  return std::min({r, trunc.cap, above_floor});
}

Reduction reduce_gram(const RealMatrix& D, Index d, Index N, const DmdOptions& opt) {
  const Index m = D.cols();
  RealMatrix K = RealMatrix::Zero(m, m);
  K.selfadjointView<Eigen::Lower>().rankUpdate(D.transpose());
  K = K.selfadjointView<Eigen::Lower>();

  RealMatrix XtX = RealMatrix::Zero(N, N);
  RealMatrix XtXp = RealMatrix::Zero(N, N);
  for (Index q = 0; q < d; ++q) {
    XtX += K.block(q, q, N, N);
    XtXp += K.block(q, q + 1, N, N);
  }
  Eigen::SelfAdjointEigenSolver<RealMatrix> es(XtX);
  if (es.info() != Eigen::Success) throw NumericalError("dmd: Gram eigensolver did not converge");
  const RealVector ev = es.eigenvalues().reverse().cwiseMax(0.0);
  const RealVector s_all = ev.cwiseSqrt();
  const Index r = expanded_rank(s_all, opt, kGramFloor);
  if (r < 1) throw NumericalError("rank collapse: truncation retains no singular values");

  Reduction out;
  out.s = s_all.head(r);
  out.V = es.eigenvectors().rowwise().reverse().leftCols(r);
  out.UtXp = out.s.cwiseInverse().asDiagonal() * (out.V.transpose() * XtXp);
  return out;
}

RealMatrix stacked(const RealMatrix& D, Index d, Index N, Index offset) {
  const Index n = D.rows();
  RealMatrix H(d * n, N);
  for (Index q = 0; q < d; ++q) H.middleRows(q * n, n) = D.middleCols(q + offset, N);
  return H;
}

Reduction reduce_direct(const RealMatrix& D, Index d, Index N, const DmdOptions& opt) {
  const SvdResult svd = thin_svd(stacked(D, d, N, 0));
  const Index r = expanded_rank(svd.s, opt, kDirectFloor);
  if (r < 1) throw NumericalError("rank collapse: truncation retains no singular values");
  Reduction out;
  out.s = svd.s.head(r);
  out.V = svd.V.leftCols(r);
  out.UtXp = svd.U.leftCols(r).transpose() * stacked(D, d, N, 1);
  return out;
}

struct Prepared {
  Index d = 1;
  Index N = 0;
  Reduction red;
};

Prepared prepare(const SnapshotMatrix& window, const DmdOptions& opt) {
  window.validate();
  opt.truncation.validate();
  if (opt.delays < 1) throw ConfigError("dmd: delays must be >= 1");
  const RealMatrix& D = window.data;
  if (D.cwiseAbs().maxCoeff() == 0.0) throw NumericalError("degenerate input: all-zero window");
  Prepared p;
  p.d = opt.delays;
  p.N = D.cols() - p.d;
  if (p.N < 1) throw ConfigError("dmd: window needs more snapshots than delays");
  const bool gram_route = p.d * D.rows() >= 4 * p.N;
  p.red = gram_route ? reduce_gram(D, p.d, p.N, opt) : reduce_direct(D, p.d, p.N, opt);
  return p;
}

RealMatrix forward_operator(const Reduction& red) {
  return red.UtXp * red.V * red.s.cwiseInverse().asDiagonal();
}

ComplexVector fit_first_snapshot(const RealMatrix& D, Index d, Index N, const ComplexMatrix& Z) {
  const Index n = D.rows();
  ComplexMatrix Phi_aug(d * n, Z.cols());
  ComplexVector h0(d * n);
  for (Index q = 0; q < d; ++q) {
    Phi_aug.middleRows(q * n, n) = D.middleCols(1 + q, N).cast<Complex>() * Z;
    h0.segment(q * n, n) = D.col(q).cast<Complex>();
  }
  return least_squares(Phi_aug, h0);
}

ComplexVector fit_all_snapshots(const RealMatrix& D, const ComplexMatrix& Phi, const ComplexVector& lambdas) {
  const Index r = Phi.cols();
  const Index m = D.cols();
  ComplexMatrix G(r, m);
  for (Index i = 0; i < r; ++i) {
    Complex z(1.0, 0.0);
    for (Index k = 0; k < m; ++k) {
      G(i, k) = z;
      z *= lambdas(i);
    }
  }
  const ComplexMatrix P = (Phi.adjoint() * Phi).cwiseProduct(G.conjugate() * G.transpose());
  const ComplexVector q = G.conjugate().cwiseProduct(Phi.adjoint() * D.cast<Complex>()).rowwise().sum();
  return least_squares(P, q);
}

DmdResult assemble(const SnapshotMatrix& window, const DmdOptions& opt, const Prepared& p, const RealMatrix& Atilde) {
  const EigResult eig = dense_eig(Atilde);
  const RealMatrix& D = window.data;
  const ComplexMatrix Z = (p.red.V * p.red.s.cwiseInverse().asDiagonal()).cast<Complex>() * eig.vectors;
  ComplexMatrix Phi = D.middleCols(1, p.N).cast<Complex>() * Z;

  ComplexVector b = opt.amplitude_fit == AmplitudeFit::FirstSnapshot
                        ? fit_first_snapshot(D, p.d, p.N, Z)
                        : fit_all_snapshots(D, Phi, eig.values);

  std::vector<Index> keep;
  const RealVector norms = Phi.colwise().norm();
  const double norm_scale = norms.size() > 0 ? norms.maxCoeff() : 0.0;
  for (Index k = 0; k < Phi.cols(); ++k) {
    if (std::abs(eig.values(k)) < kNegligibleLambda) {
      warn("dmd: dropping mode with negligible eigenvalue");
      continue;
    }
    if (!(norms(k) > 1e-14 * norm_scale)) continue;
    keep.push_back(k);
  }
  if (keep.empty()) throw NumericalError("rank collapse: no modes with nonzero eigenvalue");

  DmdResult out;
  out.dt = window.dt;
  out.t0 = window.t0;
  const auto r = static_cast<Index>(keep.size());
  out.modes.resize(D.rows(), r);
  out.lambdas.resize(r);
  out.omegas.resize(r);
  out.amplitudes.resize(r);
  for (Index i = 0; i < r; ++i) {
    const Index k = keep[static_cast<size_t>(i)];
    out.modes.col(i) = Phi.col(k) / norms(k);
    out.amplitudes(i) = b(k) * norms(k);
    out.lambdas(i) = eig.values(k);
    out.omegas(i) = continuous_omega(eig.values(k), window.dt);
  }
  return out;
}

}  // namespace

void SnapshotMatrix::validate() const {
  if (data.cols() < 2) throw ConfigError("snapshot matrix needs at least 2 snapshots");
  if (data.rows() < 1) throw ConfigError("snapshot matrix needs at least 1 state");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("dt must be positive");
  if (!std::isfinite(t0)) throw ConfigError("t0 must be finite");
  if (!data.allFinite()) throw ConfigError("snapshot matrix contains non-finite entries");
}

RealVector DmdResult::frequencies() const {
  return omegas.real().cwiseAbs() / (2.0 * std::numbers::pi);
}

DmdResult DmdResult::subset(const std::vector<bool>& mask) const {
  std::vector<Index> idx;
  for (Index k = 0; k < rank(); ++k) {
    if (mask.at(static_cast<size_t>(k))) idx.push_back(k);
  }
  DmdResult out;
  out.dt = dt;
  out.t0 = t0;
  const auto r = static_cast<Index>(idx.size());
  out.modes.resize(modes.rows(), r);
  out.lambdas.resize(r);
  out.omegas.resize(r);
  out.amplitudes.resize(r);
  for (Index i = 0; i < r; ++i) {
    const Index k = idx[static_cast<size_t>(i)];
    out.modes.col(i) = modes.col(k);
    out.lambdas(i) = lambdas(k);
    out.omegas(i) = omegas(k);
    out.amplitudes(i) = amplitudes(k);
  }
  return out;
}

Complex continuous_omega(Complex lambda, double dt) {
  return std::log(lambda) / (Complex(0.0, 1.0) * dt);
}

DmdResult exact_dmd(const SnapshotMatrix& window, const SvdTruncation& trunc) {
  DmdOptions opt;
  opt.truncation = trunc;
  return exact_dmd(window, opt);
}

DmdResult exact_dmd(const SnapshotMatrix& window, const DmdOptions& options) {
  const Prepared p = prepare(window, options);
  return assemble(window, options, p, forward_operator(p.red));
}

DmdResult fb_dmd(const SnapshotMatrix& window, const SvdTruncation& trunc) {
  DmdOptions opt;
  opt.truncation = trunc;
  return fb_dmd(window, opt);
}

DmdResult fb_dmd(const SnapshotMatrix& window, const DmdOptions& options) {
  return detail::fb_dmd_impl(window, options, nullptr);
}

namespace detail {

DmdResult fb_dmd_impl(const SnapshotMatrix& window, const DmdOptions& options, const RealMatrix* forced_backward) {
  const Prepared p = prepare(window, options);
  const RealMatrix Af = forward_operator(p.red);
  auto fallback = [&](const std::string& reason) {
    warn("fb_dmd: " + reason + "; falling back to exact DMD");
    return assemble(window, options, p, Af);
  };

  const EigResult forward = dense_eig(Af);
  for (Index k = 0; k < forward.values.size(); ++k) {
    if (forward.values(k).real() <= 0.0) return fallback("forward eigenvalue with nonpositive real part");
  }

  RealMatrix Ab;
  if (forced_backward != nullptr) {
    Ab = *forced_backward;
  } else {
    const RealMatrix UtX = p.red.s.asDiagonal() * p.red.V.transpose();
    Ab = least_squares(RealMatrix(p.red.UtXp.transpose()), RealMatrix(UtX.transpose())).transpose();
  }
  if (Ab.rows() != Af.rows() || Ab.cols() != Af.cols()) throw ConfigError("fb_dmd: backward operator has wrong shape");
  Eigen::FullPivLU<RealMatrix> lu(Ab);
  lu.setThreshold(1e-12);
  if (!lu.isInvertible()) return fallback("backward operator is singular");

  const RealMatrix product = Af * lu.inverse();
  ComplexMatrix root;
  try {
    root = principal_sqrt(product.cast<Complex>());
  } catch (const NumericalError& e) {
    return fallback(e.what());
  }
  if (root.imag().norm() > 1e-8 * root.norm()) return fallback("square root is not real");
  return assemble(window, options, p, root.real());
}

}  // namespace detail

RealMatrix dmd_reconstruct(const DmdResult& res, const RealVector& times) {
  const Index r = res.rank();
  ComplexMatrix coeff(r, times.size());
  const Complex i_unit(0.0, 1.0);
  for (Index t = 0; t < times.size(); ++t) {
    const double tau = times(t) - res.t0;
    for (Index k = 0; k < r; ++k) coeff(k, t) = res.amplitudes(k) * std::exp(i_unit * res.omegas(k) * tau);
  }
  if (r == 0) return RealMatrix::Zero(res.modes.rows(), times.size());
  return (res.modes * coeff).real();
}

}  // namespace mrsense
