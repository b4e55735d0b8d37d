#include "mrsense/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>

#include "mrsense/diagnostics.hpp"

namespace mrsense {

namespace {

struct StageOne {
  RealVector a;
  Index iterations = 0;
};

RealVector soft_threshold(const RealVector& v, double t) {
  return v.array().sign() * (v.array().abs() - t).max(0.0);
}

RealVector project_ball(const RealVector& v, const RealVector& center, double radius) {
  const RealVector d = v - center;
  const double nrm = d.norm();
  if (nrm <= radius) return v;
  return center + d * (radius / nrm);
}

// Exact minimizer of ||a||_1 s.t. ||A a - y|| <= eps on the support and
// signs of `guess`, kept only when the optimality conditions hold for every
// column. On the support, A_S^T r = s / g with ||r|| = eps fixes a_S in
// closed form; off it |g a_j^T r| <= 1 is required.
std::optional<RealVector> polish(const RealMatrix& A, const RealVector& y, double eps, const RealVector& guess) {
  const Index M = A.cols();
  const double floor = 1e-9 * std::max(1.0, guess.cwiseAbs().maxCoeff());
  std::vector<Index> support;
  for (Index j = 0; j < M; ++j) {
    if (std::abs(guess(j)) > floor) support.push_back(j);
  }
  if (support.empty() || static_cast<Index>(support.size()) > A.rows()) return std::nullopt;
  const Index k = static_cast<Index>(support.size());
  RealMatrix AS(A.rows(), k);
  RealVector sign(k);
  for (Index i = 0; i < k; ++i) {
    AS.col(i) = A.col(support[static_cast<size_t>(i)]);
    sign(i) = guess(support[static_cast<size_t>(i)]) > 0.0 ? 1.0 : -1.0;
  }
  const RealMatrix G = AS.transpose() * AS;
  const Eigen::LLT<RealMatrix> llt(G);
  if (llt.info() != Eigen::Success) return std::nullopt;
  const RealVector ls = llt.solve(AS.transpose() * y);
  const double outside = (y - AS * ls).squaredNorm();
  const RealVector Gs = llt.solve(sign);
  const double budget = eps * eps - outside;
  if (!(budget > 0.0) || !(sign.dot(Gs) > 0.0)) return std::nullopt;
  const double inv_g = std::sqrt(budget / sign.dot(Gs));
  const RealVector aS = ls - inv_g * Gs;
  for (Index i = 0; i < k; ++i) {
    if (aS(i) * sign(i) <= 0.0) return std::nullopt;
  }
  const RealVector r = y - AS * aS;
  const RealVector corr = A.transpose() * r / inv_g;
  constexpr double kSlack = 1e-9;
  for (Index j = 0; j < M; ++j) {
    if (std::find(support.begin(), support.end(), j) == support.end() && std::abs(corr(j)) > 1.0 + kSlack) return std::nullopt;
  }
  RealVector a = RealVector::Zero(M);
  for (Index i = 0; i < k; ++i) a(support[static_cast<size_t>(i)]) = aS(i);
  return a;
}

// Basis pursuit denoise by alternating direction multipliers on the split
// u1 = x, u2 = A x. The x-update matrix does not depend on the penalty, so
// the penalty is rebalanced freely; rebalancing happens on a doubling
// schedule so it cannot cycle. Every few iterations the support of the
// iterate is polished to an exact optimum when one is certified.
StageOne bpdn_admm(const RealMatrix& A, const RealVector& y, double eps, const EstimationOptions& opt) {
  constexpr Index kPolishEvery = 25;
  const Index M = A.cols();
  const Index p = A.rows();
  const Eigen::LDLT<RealMatrix> system(RealMatrix::Identity(M, M) + A.transpose() * A);

  RealVector x = RealVector::Zero(M);
  RealVector u1 = RealVector::Zero(M);
  RealVector u2 = RealVector::Zero(p);
  RealVector d1 = RealVector::Zero(M);
  RealVector d2 = RealVector::Zero(p);
  double mu = 1.0;
  double r_norm = 0.0;
  double s_norm = 0.0;
  for (Index it = 1; it <= opt.max_iterations; ++it) {
    x = system.solve(u1 + d1 + A.transpose() * (u2 + d2));
    const RealVector Ax = A * x;
    const RealVector u1_old = u1;
    const RealVector u2_old = u2;
    u1 = soft_threshold(x - d1, 1.0 / mu);
    u2 = project_ball(Ax - d2, y, eps);
    d1 -= x - u1;
    d2 -= Ax - u2;

    r_norm = std::sqrt((x - u1).squaredNorm() + (Ax - u2).squaredNorm());
    s_norm = mu * ((u1 - u1_old) + A.transpose() * (u2 - u2_old)).norm();
    const double primal_scale = std::max(std::sqrt(x.squaredNorm() + Ax.squaredNorm()),
                                         std::sqrt(u1.squaredNorm() + u2.squaredNorm()));
    const double dual_scale = mu * (d1 + A.transpose() * d2).norm();
    const double r_tol = std::sqrt(static_cast<double>(M + p)) * opt.abs_tol + opt.rel_tol * primal_scale;
    const double s_tol = std::sqrt(static_cast<double>(M)) * opt.abs_tol + opt.rel_tol * dual_scale;
    if (r_norm <= r_tol && s_norm <= s_tol) return {u1, it};
    if (it % kPolishEvery == 0) {
      if (auto exact = polish(A, y, eps, u1)) return {*exact, it};
    }

    const bool rebalance = it % 10 == 0 && ((it / 10) & (it / 10 - 1)) == 0;
    if (!rebalance) continue;
    if (r_norm > 10.0 * s_norm) {
      mu *= 2.0;
      d1 /= 2.0;
      d2 /= 2.0;
    } else if (s_norm > 10.0 * r_norm) {
      mu /= 2.0;
      d1 *= 2.0;
      d2 *= 2.0;
    }
  }
  std::ostringstream msg;
  msg << "sparse_estimate: l1 solver did not converge in " << opt.max_iterations
      << " iterations (primal residual " << r_norm << ", dual residual " << s_norm << ", penalty " << mu << ")";
  throw NumericalError(msg.str());
}

StageOne matching_pursuit(const RealMatrix& A, const RealVector& y, double eps) {
  const Index M = A.cols();
  const Index limit = std::min(A.rows(), M);
  std::vector<Index> support;
  std::vector<bool> used(static_cast<size_t>(M), false);
  RealVector residual = y;
  RealVector coef;
  Index it = 0;
  while (static_cast<Index>(support.size()) < limit && residual.norm() > eps) {
    ++it;
    const RealVector corr = (A.transpose() * residual).cwiseAbs();
    Index best = -1;
    for (Index j = 0; j < M; ++j) {
      if (used[static_cast<size_t>(j)]) continue;
      if (best < 0 || corr(j) > corr(best) * (1.0 + 1e-12)) best = j;
    }
    if (best < 0 || !(corr(best) > 1e-14)) break;
    used[static_cast<size_t>(best)] = true;
    support.push_back(best);
    RealMatrix As(A.rows(), static_cast<Index>(support.size()));
    for (size_t i = 0; i < support.size(); ++i) As.col(static_cast<Index>(i)) = A.col(support[i]);
    coef = least_squares(As, y);
    residual = y - As * coef;
  }
  RealVector a = RealVector::Zero(M);
  for (size_t i = 0; i < support.size(); ++i) a(support[i]) = coef(static_cast<Index>(i));
  return {a, it};
}

RealMatrix columns_of(const RealMatrix& A, const std::vector<Index>& cols) {
  RealMatrix out(A.rows(), static_cast<Index>(cols.size()));
  for (size_t i = 0; i < cols.size(); ++i) out.col(static_cast<Index>(i)) = A.col(cols[i]);
  return out;
}

}  // namespace

EstimationResult sparse_estimate(const Measurement& y, const RealMatrix& basis, const EstimationOptions& options) {
  const Index p = y.values.size();
  const Index M = basis.cols();
  if (p < 1) throw ConfigError("sparse_estimate: no measurements");
  if (static_cast<Index>(y.sensors.gammas.size()) != p) throw ConfigError("sparse_estimate: sensor count mismatch");
  if (M < 1) throw ConfigError("sparse_estimate: empty basis");
  if (!(y.noise_sigma >= 0.0)) throw ConfigError("sparse_estimate: noise sigma must be >= 0");
  if (!y.values.allFinite()) throw ConfigError("sparse_estimate: non-finite measurement");

  const RealMatrix A = measurement_operator(y.sensors, basis.rows()).apply(basis);
  EstimationResult out;
  const double y_norm = y.values.norm();

  if (p >= M) {
    out.l1_coefficients = least_squares(A, y.values);
    out.least_squares_only = true;
  } else if (y_norm == 0.0) {
    out.l1_coefficients = RealVector::Zero(M);
  } else {
    // Columns with no visible footprint at the sensors stay at zero.
    RealVector weights = A.colwise().norm().transpose();
    const double visible = 1e-12 * weights.maxCoeff();
    RealMatrix An = A;
    for (Index j = 0; j < M; ++j) {
      if (weights(j) > visible) {
        An.col(j) /= weights(j);
      } else {
        weights(j) = 0.0;
        An.col(j).setZero();
      }
    }
    const double eps = std::max(y.noise_sigma * std::sqrt(static_cast<double>(p)), 1e-10) / y_norm;
    const RealVector yn = y.values / y_norm;
    const StageOne s = options.solver == SparseSolver::Admm ? bpdn_admm(An, yn, eps, options)
                                                              : matching_pursuit(An, yn, eps);
    out.iterations = s.iterations;
    out.l1_coefficients = RealVector::Zero(M);
    for (Index j = 0; j < M; ++j) {
      if (weights(j) > 0.0) out.l1_coefficients(j) = s.a(j) / weights(j) * y_norm;
    }
  }

  // Activity is judged on each column's contribution at the sensors,
  // |a_j| ||C phi_j||, so a barely visible column cannot mask the others.
  const RealVector contribution = out.l1_coefficients.cwiseAbs().cwiseProduct(A.colwise().norm().transpose());
  const double peak = contribution.maxCoeff();
  for (Index j = 0; j < M; ++j) {
    if (peak > 0.0 && contribution(j) > options.activity_threshold * peak) out.active_set.push_back(j);
  }
  if (out.active_set.empty()) throw NumericalError("no active modes");

  const RealMatrix A_active = columns_of(A, out.active_set);
  const RealVector refit = least_squares(A_active, y.values);
  out.coefficients = RealVector::Zero(M);
  for (size_t i = 0; i < out.active_set.size(); ++i) out.coefficients(out.active_set[i]) = refit(static_cast<Index>(i));
  out.state_estimate = columns_of(basis, out.active_set) * refit;
  out.residual = (y.values - A_active * refit).norm();
  return out;
}

EstimationResult sparse_estimate(const Measurement& y, const ModeLibrary& lib, const EstimationOptions& options) {
  return sparse_estimate(y, realify(lib, options.rank_cut).columns, options);
}

RealVector gappy_coefficients(const Measurement& y, const RealMatrix& basis) {
  if (static_cast<Index>(y.sensors.gammas.size()) != y.values.size()) throw ConfigError("gappy: sensor count mismatch");
  if (y.values.size() < basis.cols()) throw ConfigError("gappy: fewer sensors than active columns");
  const RealMatrix A = measurement_operator(y.sensors, basis.rows()).apply(basis);
  if (numerical_rank(A) < basis.cols()) warn("gappy: sensor submatrix is rank deficient; using minimum-norm fit");
  return least_squares(A, y.values);
}

RealVector gappy_reconstruct(const Measurement& y, const RealMatrix& basis) {
  return basis * gappy_coefficients(y, basis);
}

namespace {

RealVector interpolate_extrema(const RealVector& series, Index window, bool maxima) {
  const Index n = series.size();
  std::vector<Index> knots;
  for (Index i = 0; i < n; ++i) {
    const Index lo = std::max<Index>(0, i - window);
    const Index len = std::min<Index>(n - 1, i + window) - lo + 1;
    const double extreme = maxima ? series.segment(lo, len).maxCoeff() : series.segment(lo, len).minCoeff();
    if (series(i) == extreme) knots.push_back(i);
  }
  RealVector out(n);
  for (Index i = 0; i <= knots.front(); ++i) out(i) = series(knots.front());
  for (size_t k = 0; k + 1 < knots.size(); ++k) {
    const Index a = knots[k];
    const Index b = knots[k + 1];
    for (Index i = a; i <= b; ++i) {
      const double w = static_cast<double>(i - a) / static_cast<double>(b - a);
      out(i) = (1.0 - w) * series(a) + w * series(b);
    }
  }
  for (Index i = knots.back(); i < n; ++i) out(i) = series(knots.back());
  return out;
}

}  // namespace

Envelope trace_envelope(const RealVector& series, Index window) {
  if (window < 1) throw ConfigError("trace_envelope: window must be >= 1");
  if (series.size() < 2 * window) throw ConfigError("trace_envelope: series shorter than twice the window");
  if (!series.allFinite()) throw ConfigError("trace_envelope: non-finite series");

  Envelope env;
  env.upper = interpolate_extrema(series, window, true);
  env.lower = interpolate_extrema(series, window, false);
  env.baseline = (env.upper + env.lower) / 2.0;

  const Index n = series.size();
  RealMatrix design(n, 2);
  design.col(0).setOnes();
  design.col(1) = RealVector::LinSpaced(n, 0.0, static_cast<double>(n - 1));
  const RealVector trend = design * least_squares(design, series);
  const RealVector detrended = series - trend;
  const double band = std::sqrt(detrended.squaredNorm() / static_cast<double>(n)) +
                      1e-12 * std::max(1.0, series.cwiseAbs().maxCoeff());
  const RealVector anomaly = env.baseline - trend;

  Index i = 0;
  while (i < n) {
    const int sign = anomaly(i) > band ? 1 : (anomaly(i) < -band ? -1 : 0);
    if (sign == 0) {
      ++i;
      continue;
    }
    Index j = i;
    while (j + 1 < n && sign * anomaly(j + 1) > band) ++j;
    env.events.push_back({i, j, sign});
    i = j + 1;
  }
  return env;
}

}  // namespace mrsense
