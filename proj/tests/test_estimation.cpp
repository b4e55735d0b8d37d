#include <algorithm>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

#include "doctest.h"
#include "mrsense/datagen.hpp"
#include "mrsense/diagnostics.hpp"
#include "mrsense/estimation.hpp"
#include "oracles.hpp"

using namespace mrsense;

namespace {

constexpr double kPi = std::numbers::pi;

Measurement measure(const RealMatrix& basis, const RealVector& a, const std::vector<Index>& sensors, double sigma = 0.0,
                    std::uint64_t seed = 0) {
  Measurement y;
  y.sensors = SensorSet{sensors, "test", false};
  const RealVector clean = measurement_operator(y.sensors, basis.rows()).apply(RealVector(basis * a));
  y.values = sigma > 0.0 ? add_noise(clean, sigma, seed) : clean;
  y.noise_sigma = sigma;
  return y;
}

RealVector bump(Index n, double center, double width) {
  RealVector v(n);
  for (Index i = 0; i < n; ++i) v(i) = std::exp(-(i - center) * (i - center) / width);
  return v;
}

RealMatrix sensor_rows(const RealMatrix& basis, const std::vector<Index>& sensors) {
  RealMatrix A(static_cast<Index>(sensors.size()), basis.cols());
  for (size_t i = 0; i < sensors.size(); ++i) A.row(static_cast<Index>(i)) = basis.row(sensors[i]);
  return A;
}

RealMatrix unit_columns(RealMatrix A) {
  for (Index j = 0; j < A.cols(); ++j) A.col(j).normalize();
  return A;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
}

}  // namespace

TEST_CASE("sparse_estimate: 1-sparse noiseless recovery with 3 sensors") {
  std::mt19937_64 rng(3);
  const RealMatrix B = oracle::random_matrix(30, 6, rng);
  for (Index active = 0; active < 6; ++active) {
    RealVector a = RealVector::Zero(6);
    a(active) = 1.7;
    for (SparseSolver solver : {SparseSolver::Admm, SparseSolver::MatchingPursuit}) {
      EstimationOptions opt;
      opt.solver = solver;
      const EstimationResult r = sparse_estimate(measure(B, a, {4, 17, 25}), B, opt);
      CHECK(r.active_set == std::vector<Index>{active});
      CHECK((r.coefficients - a).norm() <= 1e-6);
      CHECK_FALSE(r.least_squares_only);
      CHECK((r.state_estimate - B * a).norm() <= 1e-6 * (B * a).norm());
    }
  }
}

TEST_CASE("sparse_estimate: 2-sparse recovery with near-orthogonal footprints") {
  const Index n = 40;
  RealMatrix B(n, 6);
  for (Index j = 0; j < 6; ++j) B.col(j) = bump(n, 3.0 + 6.5 * j, 12.0);
  const std::vector<Index> sensors{3, 14, 25, 36};
  const RealMatrix A = sensor_rows(B, sensors);
  int certified = 0;
  oracle::for_each_subset(6, 2, [&](const std::vector<Index>& support) {
    RealVector a = RealVector::Zero(6);
    a(support[0]) = 1.0;
    a(support[1]) = -0.6;
    const Measurement y = measure(B, a, sensors);
    if (!oracle::unique_sparsest(A, y.values, support)) return;
    if (oracle::exact_recovery_coefficient(unit_columns(A), support) >= 1.0) return;
    ++certified;
    const EstimationResult r = sparse_estimate(y, B);
    CHECK(r.active_set == support);
    CHECK((r.coefficients - a).norm() <= 1e-6);
  });
  CHECK(certified >= 3);
}

TEST_CASE("sparse_estimate: noiseless consistency on ERC-certified instances") {
  std::mt19937_64 rng(5);
  int certified = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const RealMatrix B = oracle::random_matrix(30, 8, rng);
    std::vector<Index> sensors;
    std::vector<Index> idx(30);
    std::iota(idx.begin(), idx.end(), Index{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    sensors.assign(idx.begin(), idx.begin() + 6);
    const Index k = 1 + trial % 2;
    std::vector<Index> support(idx.begin(), idx.begin() + 8);
    for (Index& s : support) s %= 8;
    std::sort(support.begin(), support.end());
    support.erase(std::unique(support.begin(), support.end()), support.end());
    support.resize(static_cast<size_t>(k));
    const RealMatrix A = sensor_rows(B, sensors);
    if (oracle::exact_recovery_coefficient(unit_columns(A), support) >= 1.0) continue;
    ++certified;
    RealVector a = RealVector::Zero(8);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Index s : support) a(s) = normal(rng) + (normal(rng) > 0 ? 1.0 : -1.0);
    const EstimationResult r = sparse_estimate(measure(B, a, sensors), B);
    CHECK(r.active_set == support);
    CHECK((r.coefficients - a).norm() <= 1e-6 * std::max(1.0, a.norm()));
  }
  CHECK(certified >= 50);
}

TEST_CASE("sparse_estimate: least squares when sensors cover the basis") {
  std::mt19937_64 rng(7);
  const RealMatrix B = oracle::random_matrix(20, 3, rng);
  RealVector a(3);
  a << 0.5, -1.0, 2.0;
  const Measurement y = measure(B, a, {1, 5, 9, 12}, 0.01, 11);
  const EstimationResult r = sparse_estimate(y, B);
  CHECK(r.least_squares_only);
  CHECK(r.iterations == 0);
  const RealVector ls = oracle::normal_equations(sensor_rows(B, y.sensors.gammas), y.values);
  CHECK((r.l1_coefficients - ls).norm() < 1e-10);
  CHECK((r.coefficients - ls).norm() < 1e-10);
}

TEST_CASE("sparse_estimate: refit never increases the residual") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 30; ++trial) {
    const RealMatrix B = oracle::random_matrix(30, 8, rng);
    RealVector a = RealVector::Zero(8);
    a(trial % 8) = 1.0;
    a((trial + 3) % 8) = -0.7;
    const std::vector<Index> sensors{0, 4, 9, 13, 21, 27};
    const Measurement y = measure(B, a, sensors, 0.05, derive_seed(17, static_cast<std::uint64_t>(trial)));
    const EstimationResult r = sparse_estimate(y, B);
    const RealMatrix A = sensor_rows(B, sensors);
    RealVector restricted = RealVector::Zero(8);
    for (Index j : r.active_set) restricted(j) = r.l1_coefficients(j);
    CHECK(r.residual <= (y.values - A * restricted).norm() + 1e-12);
    CHECK(r.residual == doctest::Approx((y.values - A * r.coefficients).norm()).epsilon(1e-10));
    const RealVector contribution = r.l1_coefficients.cwiseAbs().cwiseProduct(A.colwise().norm().transpose());
    for (Index j = 0; j < 8; ++j) {
      const bool active = std::find(r.active_set.begin(), r.active_set.end(), j) != r.active_set.end();
      CHECK(active == (contribution(j) > 1e-3 * contribution.maxCoeff()));
      if (!active) CHECK(r.coefficients(j) == 0.0);
    }
  }
}

TEST_CASE("sparse_estimate: median error is monotone in the noise level") {
  std::mt19937_64 rng(19);
  const RealMatrix B = oracle::random_matrix(30, 6, rng);
  const std::vector<Index> sensors{2, 7, 15, 22};
  double prev = 0.0;
  for (int e = -6; e <= 0; ++e) {
    const double sigma = std::sqrt(std::pow(10.0, e));
    std::vector<double> errors;
    for (std::uint64_t trial = 0; trial < 20; ++trial) {
      RealVector a = RealVector::Zero(6);
      a(static_cast<Index>(trial % 6)) = 1.0;
      a(static_cast<Index>((trial + 2) % 6)) = 0.5;
      // A noise ball holding the origin makes zero the optimal estimate.
      RealVector estimate = RealVector::Zero(6);
      try {
        estimate = sparse_estimate(measure(B, a, sensors, sigma, derive_seed(23, trial)), B).coefficients;
      } catch (const NumericalError& e) {
        CHECK(std::string(e.what()) == "no active modes");
      }
      errors.push_back((estimate - a).norm());
    }
    const double med = median(errors);
    CHECK(med >= prev);
    prev = med;
  }
}

TEST_CASE("sparse_estimate: error paths") {
  std::mt19937_64 rng(29);
  const RealMatrix B = oracle::random_matrix(10, 5, rng);
  CHECK_THROWS_WITH_AS(sparse_estimate(measure(B, RealVector::Zero(5), {1, 2}), B), "no active modes", NumericalError);
  RealVector a = RealVector::Zero(5);
  a(2) = 1.0;
  a(4) = 0.3;
  EstimationOptions opt;
  opt.max_iterations = 2;
  CHECK_THROWS_AS(sparse_estimate(measure(B, a, {1, 2, 6}), B, opt), NumericalError);
  Measurement bad = measure(B, a, {1, 2});
  bad.sensors.gammas.push_back(3);
  CHECK_THROWS_AS(sparse_estimate(bad, B), ConfigError);
}

TEST_CASE("gappy_reconstruct: scalar, interpolation and lift identity") {
  RealVector col(5);
  col << 0.1, 0.4, 2.0, 0.3, -0.2;
  const RealMatrix one = col;
  Measurement y;
  y.sensors = SensorSet{{2}, "t", false};
  y.values = RealVector::Constant(1, 3.0);
  CHECK((gappy_reconstruct(y, one) - 1.5 * col).norm() < 1e-14);

  std::mt19937_64 rng(31);
  const RealMatrix B = oracle::random_matrix(12, 3, rng);
  Measurement sq;
  sq.sensors = SensorSet{{1, 6, 10}, "t", false};
  sq.values = RealVector::Random(3);
  const RealVector x = gappy_reconstruct(sq, B);
  for (Index i = 0; i < 3; ++i) CHECK(x(sq.sensors.gammas[static_cast<size_t>(i)]) == doctest::Approx(sq.values(i)).epsilon(1e-10));

  Measurement full;
  full.sensors = SensorSet{{3, 0, 2, 1}, "t", false};
  full.values = RealVector::Random(4);
  const RealVector lifted = gappy_reconstruct(full, RealMatrix::Identity(4, 4));
  for (Index i = 0; i < 4; ++i) CHECK(lifted(full.sensors.gammas[static_cast<size_t>(i)]) == doctest::Approx(full.values(i)).epsilon(1e-14));

  RealMatrix dup(4, 2);
  dup << 1, 2, 1, 2, 0, 0, 3, 6;
  Measurement dy;
  dy.sensors = SensorSet{{0, 1}, "t", false};
  dy.values = RealVector::Ones(2);
  WarningCapture cap;
  const RealVector c = gappy_coefficients(dy, dup);
  CHECK(cap.contains("rank deficient"));
  CHECK(c.allFinite());
  CHECK_THROWS_AS(gappy_coefficients(y, B), ConfigError);
}

TEST_CASE("trace_envelope: sinusoid, constant and burst series") {
  const Index n = 400;
  RealVector s(n);
  for (Index k = 0; k < n; ++k) s(k) = 2.0 * std::sin(2 * kPi * k / 20.0);
  const Envelope env = trace_envelope(s, 10);
  for (Index k = 20; k < n - 20; ++k) {
    CHECK(env.upper(k) == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(env.lower(k) == doctest::Approx(-2.0).epsilon(1e-9));
    CHECK(std::abs(env.baseline(k)) < 1e-9);
  }
  CHECK(env.events.empty());

  const RealVector flat = RealVector::Constant(50, 3.0);
  const Envelope fe = trace_envelope(flat, 5);
  CHECK((fe.upper - flat).norm() == 0.0);
  CHECK((fe.lower - flat).norm() == 0.0);
  CHECK(fe.events.empty());

  const Index m = 600;
  RealVector burst(m);
  for (Index k = 0; k < m; ++k) {
    const double b1 = std::exp(-std::pow((k - 150) / 25.0, 2));
    const double b2 = std::exp(-std::pow((k - 420) / 25.0, 2));
    burst(k) = std::sin(2 * kPi * k / 20.0) + 1.5 * (b1 + b2);
  }
  const Envelope be = trace_envelope(burst, 10);
  REQUIRE(be.events.size() == 2);
  for (size_t e = 0; e < 2; ++e) {
    const Index center = e == 0 ? 150 : 420;
    CHECK(be.events[e].sign == 1);
    CHECK(be.events[e].begin <= center);
    CHECK(be.events[e].end >= center);
    CHECK(be.events[e].end - be.events[e].begin < 80);
  }

  CHECK_THROWS_AS(trace_envelope(RealVector::Ones(9), 5), ConfigError);
  CHECK_THROWS_AS(trace_envelope(RealVector::Ones(9), 0), ConfigError);
}
