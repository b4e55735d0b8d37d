#include <numbers>
#include <random>
#include <set>

#include "doctest.h"
#include "mrsense/diagnostics.hpp"
#include "mrsense/numerics.hpp"
#include "oracles.hpp"

using namespace mrsense;

TEST_CASE("truncated_svd: rank-one outer product") {
  RealVector u(4), v(3);
  u << 1, 2, -1, 0.5;
  v << 3, 0, -4;
  const SvdResult r = truncated_svd(u * v.transpose(), SvdTruncation::fixed_rank(1));
  REQUIRE(r.s.size() == 1);
  CHECK(r.s(0) == doctest::Approx(u.norm() * v.norm()).epsilon(1e-12));
  CHECK(std::abs(r.U.col(0).dot(u.normalized())) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(r.V.col(0).dot(v.normalized())) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("truncated_svd: identity keeps every direction at tau = 1") {
  const SvdResult r = truncated_svd(RealMatrix::Identity(3, 3), SvdTruncation::energy(1.0));
  REQUIRE(r.s.size() == 3);
  for (Index i = 0; i < 3; ++i) CHECK(r.s(i) == doctest::Approx(1.0));
}

TEST_CASE("truncated_svd: residual matches the Jacobi oracle tail") {
  std::mt19937_64 rng(11);
  const RealMatrix A = oracle::random_matrix(10, 6, rng);
  const SvdResult r = truncated_svd(A, SvdTruncation::fixed_rank(3));
  const RealVector s = oracle::jacobi_singular_values(A);
  const double residual = (A - r.U * r.s.asDiagonal() * r.V.transpose()).norm();
  CHECK(residual == doctest::Approx(s.tail(3).norm()).epsilon(1e-10));
  for (Index i = 0; i < 3; ++i) CHECK(r.s(i) == doctest::Approx(s(i)).epsilon(1e-12));
}

TEST_CASE("truncated_svd: energy bound, orthonormal factors, errors and clamping") {
  std::mt19937_64 rng(3);
  const RealMatrix A = oracle::random_matrix(12, 8, rng);
  for (double tau : {0.5, 0.8, 0.95, 0.999}) {
    const SvdResult r = truncated_svd(A, SvdTruncation::energy(tau));
    const double resid2 = (A - r.U * r.s.asDiagonal() * r.V.transpose()).squaredNorm();
    CHECK(resid2 <= (1.0 - tau) * A.squaredNorm() + 1e-12);
    CHECK((r.U.transpose() * r.U - RealMatrix::Identity(r.s.size(), r.s.size())).norm() < 1e-12);
    CHECK((r.V.transpose() * r.V - RealMatrix::Identity(r.s.size(), r.s.size())).norm() < 1e-12);
    for (Index i = 1; i < r.s.size(); ++i) CHECK(r.s(i) <= r.s(i - 1));
  }
  CHECK_THROWS_WITH_AS(truncated_svd(RealMatrix::Zero(3, 3), SvdTruncation::fixed_rank(1)), doctest::Contains("degenerate input"), NumericalError);

  WarningCapture cap;
  const SvdResult r = truncated_svd(A, SvdTruncation::fixed_rank(20));
  CHECK(r.s.size() == 8);
  CHECK(cap.contains("clamp"));
}

TEST_CASE("truncated_svd: error is nonincreasing in retained rank") {
  std::mt19937_64 rng(5);
  const RealMatrix A = oracle::random_matrix(9, 7, rng);
  double prev = std::numeric_limits<double>::infinity();
  for (Index r = 1; r <= 7; ++r) {
    const SvdResult s = truncated_svd(A, SvdTruncation::fixed_rank(r));
    const double err = (A - s.U * s.s.asDiagonal() * s.V.transpose()).norm();
    CHECK(err <= prev + 1e-12);
    prev = err;
  }
}

TEST_CASE("dense_eig: diagonal, rotation and companion matrices") {
  RealMatrix D(2, 2);
  D << 2, 0, 0, -1;
  EigResult e = dense_eig(D);
  std::multiset<double> vals;
  for (Index i = 0; i < 2; ++i) vals.insert(e.values(i).real());
  CHECK(vals == std::multiset<double>{-1.0, 2.0});

  const double th = std::numbers::pi / 4;
  RealMatrix R(2, 2);
  R << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
  e = dense_eig(R);
  for (Index i = 0; i < 2; ++i) {
    CHECK(std::abs(e.values(i)) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(std::arg(e.values(i))) == doctest::Approx(th).epsilon(1e-12));
  }
  CHECK(std::abs(e.values(0) - std::conj(e.values(1))) < 1e-12);

  // z^3 - 1: companion matrix against the polynomial-root oracle.
  RealMatrix C = RealMatrix::Zero(3, 3);
  C(1, 0) = 1;
  C(2, 1) = 1;
  C(0, 2) = 1;
  e = dense_eig(C);
  const auto roots = oracle::polynomial_roots({-1.0, 0.0, 0.0, 1.0});
  for (const auto& root : roots) {
    double best = 1e9;
    for (Index i = 0; i < 3; ++i) best = std::min(best, std::abs(e.values(i) - root));
    CHECK(best < 1e-10);
  }
}

TEST_CASE("dense_eig: residual bound and unit vectors on random matrices") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const RealMatrix A = oracle::random_matrix(7, 7, rng);
    const EigResult e = dense_eig(A);
    const double nrm = oracle::jacobi_singular_values(A)(0);
    for (Index k = 0; k < 7; ++k) {
      const ComplexVector v = e.vectors.col(k);
      CHECK(v.norm() == doctest::Approx(1.0).epsilon(1e-12));
      CHECK((A.cast<Complex>() * v - e.values(k) * v).norm() <= 1e-8 * nrm);
    }
    // conjugate pairs for real input
    for (Index k = 0; k < 7; ++k) {
      double best = 1e9;
      for (Index j = 0; j < 7; ++j) best = std::min(best, std::abs(e.values(j) - std::conj(e.values(k))));
      CHECK(best < 1e-10);
    }
    const ComplexMatrix Ac = A.cast<Complex>() * Complex(1.0, 0.5);
    const EigResult ec = dense_eig(Ac);
    for (Index k = 0; k < 7; ++k) {
      CHECK((Ac * ec.vectors.col(k) - ec.values(k) * ec.vectors.col(k)).norm() <= 1e-8 * nrm * std::abs(Complex(1.0, 0.5)));
    }
  }
}

TEST_CASE("pivoted_qr: scaled unit vectors and duplicates") {
  RealMatrix A = RealMatrix::Zero(3, 3);
  A(0, 0) = 3;
  A(1, 1) = 1;
  A(2, 2) = 2;
  PivotedQr q = pivoted_qr(A, 3);
  CHECK(q.pivots == std::vector<Index>{0, 2, 1});

  RealMatrix B(3, 4);
  B << 1, 1, 0, 0.2, 2, 2, 1, 0.1, 0, 0, 1, 0.3;
  q = pivoted_qr(B, 2);
  REQUIRE(q.pivots.size() == 2);
  CHECK(q.pivots[0] == 0);
  CHECK(q.pivots[1] != 1);

  RealMatrix Z = RealMatrix::Zero(3, 4);
  Z.col(0) << 1, 0, 0;
  Z.col(2) << 2, 0, 0;
  q = pivoted_qr(Z, 3);
  CHECK(q.pivots.size() == 1);
  CHECK(q.rank_deficient);
}

TEST_CASE("pivoted_qr: ties go to the lowest column index") {
  RealMatrix A = RealMatrix::Identity(4, 4);
  const PivotedQr q = pivoted_qr(A, 4);
  CHECK(q.pivots == std::vector<Index>{0, 1, 2, 3});
}

TEST_CASE("pivoted_qr: near brute-force optimum on random 5x20") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 5; ++trial) {
    const RealMatrix A = oracle::random_matrix(5, 20, rng);
    const PivotedQr q = pivoted_qr(A, 5);
    REQUIRE(q.pivots.size() == 5);
    RealMatrix S(5, 5);
    for (Index i = 0; i < 5; ++i) S.col(i) = A.col(q.pivots[static_cast<size_t>(i)]);
    const double picked = std::abs(S.determinant());
    double best = 0.0;
    oracle::for_each_subset(20, 5, [&](const std::vector<Eigen::Index>& idx) {
      RealMatrix T(5, 5);
      for (Index i = 0; i < 5; ++i) T.col(i) = A.col(idx[static_cast<size_t>(i)]);
      best = std::max(best, std::abs(T.determinant()));
    });
    CHECK(picked * std::pow(2.0, 5) >= best);
    std::set<Index> distinct(q.pivots.begin(), q.pivots.end());
    CHECK(distinct.size() == 5);
  }
}

TEST_CASE("pivoted_qr: diagonal dominance holds on random matrices") {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 20; ++trial) {
    const Index rows = 4 + trial % 5;
    const RealMatrix A = oracle::random_matrix(rows, 12, rng);
    const PivotedQr q = pivoted_qr(A, rows);
    const Index k = static_cast<Index>(q.pivots.size());
    for (Index i = 0; i < k; ++i) {
      CHECK(std::abs(q.R(i, i)) == doctest::Approx(q.r_diag(i)).epsilon(1e-12));
      for (Index col = i; col < q.R.cols(); ++col) {
        const double tail = q.R.block(i, col, std::min(k, col + 1) - i, 1).squaredNorm();
        CHECK(q.R(i, i) * q.R(i, i) >= tail * (1.0 - 1e-10));
      }
    }
    // R reproduces the permuted columns through an orthonormal Q
    RealMatrix P(rows, 12);
    for (Index c = 0; c < 12; ++c) P.col(c) = A.col(q.permutation[static_cast<size_t>(c)]);
    CHECK(oracle::jacobi_singular_values(P).head(k).norm() == doctest::Approx(q.R.norm()).epsilon(1e-10));
  }
}

TEST_CASE("principal_sqrt: diagonal cases and branch errors") {
  CHECK((principal_sqrt(ComplexMatrix::Identity(3, 3)) - ComplexMatrix::Identity(3, 3)).norm() < 1e-12);
  ComplexMatrix D = ComplexMatrix::Zero(2, 2);
  D(0, 0) = 4;
  D(1, 1) = 9;
  ComplexMatrix B = principal_sqrt(D);
  CHECK(std::abs(B(0, 0) - Complex(2, 0)) < 1e-12);
  CHECK(std::abs(B(1, 1) - Complex(3, 0)) < 1e-12);

  ComplexMatrix E(1, 1);
  E(0, 0) = std::polar(1.0, std::numbers::pi / 3);
  B = principal_sqrt(E);
  CHECK(std::abs(B(0, 0) - std::polar(1.0, std::numbers::pi / 6)) < 1e-12);
  CHECK(std::abs(B(0, 0) * B(0, 0) - E(0, 0)) < 1e-12);

  ComplexMatrix N = ComplexMatrix::Identity(2, 2);
  N(1, 1) = -1.0;
  CHECK_THROWS_WITH_AS(principal_sqrt(N), doctest::Contains("branch ambiguity"), NumericalError);
}

TEST_CASE("principal_sqrt: recovers B from B*B for right half-plane spectra") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    const RealMatrix Q = oracle::random_matrix(5, 5, rng);
    RealMatrix Lam = RealMatrix::Zero(5, 5);
    for (Index i = 0; i < 5; ++i) Lam(i, i) = 0.5 + 0.3 * i;
    const ComplexMatrix B = (Q * Lam * Q.inverse()).cast<Complex>();
    const ComplexMatrix A = B * B;
    const ComplexMatrix S = principal_sqrt(A);
    CHECK((S * S - A).norm() <= 1e-8 * A.norm());
    CHECK((S - B).norm() <= 1e-7 * B.norm());
  }
}

TEST_CASE("least_squares: identity, consistent and normal-equation oracle") {
  RealVector y(3);
  y << 1, -2, 3;
  CHECK((least_squares(RealMatrix::Identity(3, 3), y) - y).norm() < 1e-14);

  std::mt19937_64 rng(37);
  const RealMatrix A = oracle::random_matrix(8, 3, rng);
  RealVector x(3);
  x << 0.5, -1, 2;
  const RealVector sol = least_squares(A, RealVector(A * x));
  CHECK((A * sol - A * x).norm() < 1e-10);

  const RealMatrix A2 = oracle::random_matrix(4, 2, rng);
  const RealMatrix y2 = oracle::random_matrix(4, 1, rng);
  CHECK((least_squares(A2, RealVector(y2.col(0))) - oracle::normal_equations(A2, y2.col(0))).norm() < 1e-8);

  const ComplexMatrix Ac = A2.cast<Complex>() * Complex(0.0, 1.0);
  const ComplexVector sc = least_squares(Ac, ComplexVector(y2.col(0).cast<Complex>()));
  const RealVector ref = oracle::normal_equations(A2, y2.col(0));
  for (Index i = 0; i < 2; ++i) CHECK(std::abs(sc(i) - Complex(0.0, -ref(i))) < 1e-8);

  // rank-deficient input takes the minimum-norm solution
  RealMatrix R(3, 2);
  R << 1, 1, 1, 1, 1, 1;
  const RealVector m = least_squares(R, RealVector(RealVector::Ones(3)));
  CHECK(m(0) == doctest::Approx(0.5));
  CHECK(m(1) == doctest::Approx(0.5));
  CHECK(numerical_rank(R) == 1);
}
