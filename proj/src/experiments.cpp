#include "mrsense/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numeric>

#include "mrsense/diagnostics.hpp"

namespace mrsense {

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

RealMatrix rows_of(const RealMatrix& A, const std::vector<Index>& rows) {
  RealMatrix out(static_cast<Index>(rows.size()), A.cols());
  for (size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = A.row(rows[i]);
  return out;
}

/// Runs body(i) for i in [0, count) on up to `threads` workers; results land
/// by index so the outcome does not depend on scheduling.
template <typename T, typename Body>
std::vector<T> parallel_map(Index count, Index threads, Body body) {
  std::vector<T> out(static_cast<size_t>(count));
  const Index workers = std::clamp<Index>(threads, 1, std::max<Index>(count, 1));
  if (workers == 1) {
    for (Index i = 0; i < count; ++i) out[static_cast<size_t>(i)] = body(i);
    return out;
  }
  std::vector<std::future<void>> jobs;
  for (Index w = 0; w < workers; ++w) {
    jobs.push_back(std::async(std::launch::async, [&, w] {
      for (Index i = w; i < count; i += workers) out[static_cast<size_t>(i)] = body(i);
    }));
  }
  for (auto& j : jobs) j.get();
  return out;
}

bool near_cell(const Grid& grid, Index cell, Index target, Index radius) {
  const Index dx = std::abs(cell % grid.nx - target % grid.nx);
  const Index dy = std::abs(cell / grid.nx - target / grid.nx);
  return std::max(dx, dy) <= radius;
}

SensorSet relabeled(Index p) {
  SensorSet s;
  s.gammas.resize(static_cast<size_t>(p));
  std::iota(s.gammas.begin(), s.gammas.end(), Index{0});
  s.source = "sensor rows";
  return s;
}

}  // namespace

VideoSpec table1_spec(const RunConfig& config) {
  VideoSpec spec = table1_spec();
  if (config.dt > 0.0) spec.dt = config.dt;
  spec.validate();
  return spec;
}

MultiscaleSpec multiscale_spec(const RunConfig& config) {
  MultiscaleSpec spec;
  if (config.dt > 0.0) spec.dt = config.dt;
  spec.validate();
  return spec;
}

RealMatrix peak_normalize(const RealMatrix& basis) {
  RealMatrix out = basis;
  for (Index j = 0; j < out.cols(); ++j) {
    Index at = 0;
    out.col(j).cwiseAbs().maxCoeff(&at);
    if (out(at, j) == 0.0) throw NumericalError("peak_normalize: zero column");
    out.col(j) /= out(at, j);
  }
  return out;
}

Table1Study prepare_table1(const RunConfig& config) {
  Table1Study s;
  s.spec = table1_spec(config);
  s.video = generate_video(s.spec);
  s.tree = mrdmd_decompose(s.video, config.mrdmd);
  s.library = build_library(s.tree);
  s.filtered = filter_library(s.library, config.alpha);
  s.realified = realify(s.filtered, config.rank_cut);

  const auto K = static_cast<Index>(s.spec.components.size());
  s.generators.resize(s.video.states(), K);
  for (Index i = 0; i < K; ++i) s.generators.col(i) = gaussian_field(s.spec.grid, s.spec.components[static_cast<size_t>(i)].shape);

  // Pair each generator with the unused real column of nearest frequency.
  const RealMatrix& R = s.realified.columns;
  if (R.cols() < K) throw NumericalError("filtered library has fewer real columns than generators");
  std::vector<bool> used(static_cast<size_t>(R.cols()), false);
  RealMatrix paired(R.rows(), K);
  for (Index i = 0; i < K; ++i) {
    const double f = s.spec.components[static_cast<size_t>(i)].frequency;
    Index best = -1;
    double gap = std::numeric_limits<double>::infinity();
    for (Index c = 0; c < R.cols(); ++c) {
      if (used[static_cast<size_t>(c)]) continue;
      const double fc = s.filtered.meta[static_cast<size_t>(s.realified.source[static_cast<size_t>(c)])].frequency;
      if (std::abs(fc - f) < gap) {
        gap = std::abs(fc - f);
        best = c;
      }
    }
    used[static_cast<size_t>(best)] = true;
    paired.col(i) = R.col(best);
  }
  s.mrdmd_basis = peak_normalize(paired);

  s.pod = compute_pod(s.video, std::max(config.pod_rank, K), config.pod_center);
  s.pod_basis = peak_normalize(s.pod.modes.leftCols(K));
  s.mrdmd_sensors = select_sensors(R, config.sensors, "mrdmd");
  s.pod_sensors = select_sensors(s.pod.modes.leftCols(std::min(config.pod_rank, s.pod.rank())), config.sensors, "pod");
  return s;
}

double coefficient_error(const RealMatrix& basis, const SensorSet& sensors, const RealMatrix& generators,
                         const RealMatrix& truth, double variance, std::uint64_t noise_seed, RealMatrix* estimate) {
  const auto p = static_cast<Index>(sensors.gammas.size());
  const RealMatrix rows = rows_of(basis, sensors.gammas);
  const RealMatrix clean = rows_of(generators, sensors.gammas) * truth;
  const double sigma = std::sqrt(variance);
  const RealMatrix Y = add_noise(clean, sigma, noise_seed);
  const SensorSet local = relabeled(p);
  RealMatrix A(basis.cols(), truth.cols());
  for (Index t = 0; t < truth.cols(); ++t) {
    A.col(t) = sparse_estimate(Measurement{Y.col(t), local, sigma}, rows).coefficients;
  }
  const double err = (A.topRows(truth.rows()) - truth).norm() / truth.norm();
  if (estimate != nullptr) *estimate = std::move(A);
  return err;
}

NoiseStudy run_noise_study(const Table1Study& study, const RunConfig& config) {
  const Index K = study.generators.cols();
  const auto L = static_cast<Index>(config.variances.size());
  struct Trial {
    std::vector<double> mrdmd, pod;
  };
  const auto trials = parallel_map<Trial>(config.trials, config.threads, [&](Index trial) {
    const auto tr = static_cast<std::uint64_t>(trial);
    const RealMatrix truth = generate_test_coefficients(K, config.test_samples, derive_seed(config.seed, 2 * tr));
    const std::uint64_t noise_seed = derive_seed(config.seed, 2 * tr + 1);
    Trial out;
    for (double v : config.variances) {
      out.mrdmd.push_back(coefficient_error(study.mrdmd_basis, study.mrdmd_sensors, study.generators, truth, v, noise_seed));
      out.pod.push_back(coefficient_error(study.pod_basis, study.pod_sensors, study.generators, truth, v, noise_seed));
    }
    return out;
  });

  NoiseStudy out;
  for (Index l = 0; l < L; ++l) {
    NoiseLevel level;
    level.variance = config.variances[static_cast<size_t>(l)];
    for (const Trial& t : trials) {
      level.mrdmd_errors.push_back(t.mrdmd[static_cast<size_t>(l)]);
      level.pod_errors.push_back(t.pod[static_cast<size_t>(l)]);
    }
    level.mrdmd_median = median(level.mrdmd_errors);
    level.pod_median = median(level.pod_errors);
    out.levels.push_back(std::move(level));
  }
  std::vector<size_t> order(out.levels.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return out.levels[a].variance < out.levels[b].variance; });
  out.monotone = true;
  for (size_t i = 1; i < order.size(); ++i) {
    if (out.levels[order[i]].mrdmd_median < out.levels[order[i - 1]].mrdmd_median) out.monotone = false;
  }
  out.separated = true;
  for (const NoiseLevel& l : out.levels) {
    if (l.variance <= 1e-2 && !(l.mrdmd_median <= 0.1 * l.pod_median)) out.separated = false;
  }
  return out;
}

CoefTracking run_coef_tracking(const Table1Study& study, const RunConfig& config) {
  CoefTracking out;
  const Index K = study.generators.cols();
  out.truth = generate_test_coefficients(K, config.test_samples, derive_seed(config.seed, 0));
  out.times = RealVector::LinSpaced(config.test_samples, 0.0, static_cast<double>(config.test_samples - 1) * study.spec.dt);
  const std::uint64_t noise_seed = derive_seed(config.seed, 1);
  out.mrdmd_error = coefficient_error(study.mrdmd_basis, study.mrdmd_sensors, study.generators, out.truth,
                                      config.tracking_variance, noise_seed, &out.mrdmd);
  out.pod_error = coefficient_error(study.pod_basis, study.pod_sensors, study.generators, out.truth,
                                    config.tracking_variance, noise_seed, &out.pod);
  return out;
}

ReconstructionStudy run_reconstruction(const RunConfig& config) {
  const MultiscaleSpec spec = multiscale_spec(config);
  const MultiscaleField field = generate_multiscale_field(spec);
  const RealMatrix& X = field.data.data;
  const Index m = X.cols();

  std::vector<Index> train_idx;
  for (Index k = 0; k < m; k += 2) train_idx.push_back(k);
  RealMatrix train(X.rows(), static_cast<Index>(train_idx.size()));
  for (size_t i = 0; i < train_idx.size(); ++i) train.col(static_cast<Index>(i)) = X.col(train_idx[i]);
  const SnapshotMatrix train_set{train, 2.0 * spec.dt, spec.t0};

  const MrDmdTree tree = mrdmd_decompose(train_set, config.mrdmd);
  const ModeLibrary library = build_library(tree);
  const ModeLibrary filtered = filter_library(library, config.alpha);

  ReconstructionStudy out;
  out.library_columns = library.size();
  out.sensors = select_sensors(filtered, config.oversampled_sensors, config.rank_cut);

  // Active modes depend only on the leaf bin, so each leaf's basis is built once.
  const Index leaves = Index{1} << (tree.levels - 1);
  std::vector<RealMatrix> leaf_basis(static_cast<size_t>(leaves));
  std::vector<Index> leaf_columns(static_cast<size_t>(leaves), 0);
  for (Index leaf = 1; leaf <= leaves; ++leaf) {
    std::vector<Index> active;
    for (Index c = 0; c < library.size(); ++c) {
      const LibraryColumn& meta = library.meta[static_cast<size_t>(c)];
      const Index ancestor = ((leaf - 1) >> (tree.levels - meta.level)) + 1;
      if (meta.bin == ancestor) active.push_back(c);
    }
    if (active.empty()) throw NumericalError("reconstruction: no active modes in leaf bin");
    leaf_basis[static_cast<size_t>(leaf - 1)] = realify(library.select(active), config.rank_cut).columns;
    leaf_columns[static_cast<size_t>(leaf - 1)] = static_cast<Index>(active.size());
  }

  const double train_end = train_set.time(train_set.snapshots() - 1);
  std::vector<Index> held;
  for (Index k = 1; k < m; k += 2) {
    if (spec.t0 + static_cast<double>(k) * spec.dt <= train_end) held.push_back(k);
  }
  out.times.resize(static_cast<Index>(held.size()));
  out.errors.resize(static_cast<Index>(held.size()));
  out.windows.resize(static_cast<size_t>(leaves));
  for (Index leaf = 1; leaf <= leaves; ++leaf) {
    const MrDmdNode& node = tree.node(tree.levels, leaf);
    out.windows[static_cast<size_t>(leaf - 1)] = {leaf, node.t_start, node.t_end, 0, 0.0, 0.0};
  }
  const double sigma = config.sigma;
  const auto errors = parallel_map<std::pair<Index, double>>(static_cast<Index>(held.size()), config.threads, [&](Index i) {
    const Index k = held[static_cast<size_t>(i)];
    const double t = spec.t0 + static_cast<double>(k) * spec.dt;
    const Index leaf = bin_of_time(tree, t, tree.levels);
    RealVector y(static_cast<Index>(out.sensors.gammas.size()));
    for (size_t s = 0; s < out.sensors.gammas.size(); ++s) y(static_cast<Index>(s)) = X(out.sensors.gammas[s], k);
    y = add_noise(y, sigma, derive_seed(config.seed, static_cast<std::uint64_t>(k)));
    const RealVector xhat = gappy_reconstruct(Measurement{y, out.sensors, sigma}, leaf_basis[static_cast<size_t>(leaf - 1)]);
    return std::pair<Index, double>{leaf, (xhat - X.col(k)).norm() / X.col(k).norm()};
  });
  out.passed = !held.empty();
  for (size_t i = 0; i < held.size(); ++i) {
    const auto [leaf, err] = errors[i];
    out.times(static_cast<Index>(i)) = spec.t0 + static_cast<double>(held[i]) * spec.dt;
    out.errors(static_cast<Index>(i)) = err;
    out.active_columns.push_back(leaf_columns[static_cast<size_t>(leaf - 1)]);
    ReconstructionWindow& w = out.windows[static_cast<size_t>(leaf - 1)];
    ++w.snapshots;
    w.max_error = std::max(w.max_error, err);
    w.mean_error += err;
    if (!(err < 0.05)) out.passed = false;
  }
  for (ReconstructionWindow& w : out.windows) {
    if (w.snapshots > 0) w.mean_error /= static_cast<double>(w.snapshots);
  }
  return out;
}

EnsembleStudy run_ensemble(const RunConfig& config) {
  const MultiscaleSpec spec = multiscale_spec(config);
  const MultiscaleField field = generate_multiscale_field(spec);
  const Index m = field.data.snapshots();
  const Index W = config.ensemble_windows;
  if (m / W < 4) throw ConfigError("ensemble: fewer than 4 snapshots per window");

  EnsembleStudy out;
  out.grid = spec.grid;
  out.cells = field.cells;

  MrDmdOptions options = config.mrdmd;
  options.levels = 1;
  options.threads = 1;
  std::vector<ModeLibrary> libraries;
  for (Index w = 0; w < W; ++w) {
    const Index first = w * m / W;
    const Index last = (w + 1) * m / W - 1;
    const SnapshotMatrix window{field.data.data.middleCols(first, last - first + 1), spec.dt, field.data.time(first)};
    out.windows.emplace_back(window.time(0), window.time(window.snapshots() - 1));
    libraries.push_back(filter_library(build_library(mrdmd_decompose(window, options)), config.ensemble_alpha));
  }
  out.counts = sensor_ensemble(libraries, config.sensors, config.threads);

  const Index burst_cell = spec.grid.nearest(spec.burst.cx, spec.burst.cy);
  const Index p_cell = spec.grid.nearest(spec.persistent_cos.cx, spec.persistent_cos.cy);
  const Index q_cell = spec.grid.nearest(spec.persistent_sin.cx, spec.persistent_sin.cy);
  out.passed = true;
  for (Index w = 0; w < W; ++w) {
    const auto [a, b] = out.windows[static_cast<size_t>(w)];
    const bool active = std::any_of(spec.burst_windows.begin(), spec.burst_windows.end(),
                                    [&](const auto& bw) { return bw.first <= b && bw.second >= a; });
    out.burst_active.push_back(active);
    SensorSet s = select_sensors(libraries[static_cast<size_t>(w)], config.sensors, config.rank_cut);
    bool burst_hit = false;
    bool persistent_hit = false;
    for (Index g : s.gammas) {
      const Index cell = field.cells[static_cast<size_t>(g)];
      burst_hit = burst_hit || near_cell(spec.grid, cell, burst_cell, 2);
      persistent_hit = persistent_hit || near_cell(spec.grid, cell, p_cell, 2) || near_cell(spec.grid, cell, q_cell, 2);
    }
    if (burst_hit) ++out.burst_hits;
    if (persistent_hit) ++out.persistent_hits;
    if (burst_hit && !active) out.passed = false;
    out.selections.push_back(std::move(s));
  }
  if (out.burst_hits == 0) out.passed = false;
  return out;
}

}  // namespace mrsense
