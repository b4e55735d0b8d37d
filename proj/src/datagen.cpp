#include "mrsense/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "mrsense/diagnostics.hpp"

namespace mrsense {

namespace {

constexpr double kWindowTolerance = 1e-9;

bool inside(double t, double on, double off) { return t >= on - kWindowTolerance && t <= off + kWindowTolerance; }

Index snapshot_count(double t_end, double t0, double dt) {
  return static_cast<Index>(std::llround((t_end - t0) / dt)) + 1;
}

}  // namespace

double Grid::x(Index ix) const { return x_min + (x_max - x_min) * static_cast<double>(ix) / static_cast<double>(nx - 1); }

double Grid::y(Index iy) const { return y_min + (y_max - y_min) * static_cast<double>(iy) / static_cast<double>(ny - 1); }

Index Grid::nearest(double px, double py) const {
  const auto snap = [](double v, double lo, double hi, Index count) {
    const double u = (v - lo) / (hi - lo) * static_cast<double>(count - 1);
    return std::clamp<Index>(static_cast<Index>(std::llround(u)), 0, count - 1);
  };
  return cell(snap(px, x_min, x_max, nx), snap(py, y_min, y_max, ny));
}

void Grid::validate() const {
  if (nx < 2 || ny < 2) throw ConfigError("grid needs at least 2 points per axis");
  if (!(x_max > x_min) || !(y_max > y_min)) throw ConfigError("grid bounds must be increasing");
}

Index VideoSpec::snapshots() const { return snapshot_count(t_end, 0.0, dt); }

void VideoSpec::validate() const {
  grid.validate();
  if (!(dt > 0.0)) throw ConfigError("video dt must be positive");
  if (!(t_end > 0.0)) throw ConfigError("video span must be positive");
  for (const auto& c : components) {
    if (!(c.shape.width > 0.0)) throw ConfigError("gaussian width must be positive");
    if (!(c.t_on <= c.t_off) || c.t_on < -kWindowTolerance || c.t_off > t_end + kWindowTolerance) {
      throw ConfigError("component interval must lie inside [0, T]");
    }
    if (!std::isfinite(c.frequency)) throw ConfigError("component frequency must be finite");
  }
}

VideoSpec table1_spec() {
  VideoSpec spec;
  spec.components = {
      {{-2.0, -2.0, 1.5, 1.0}, 5.55, 0.0, 5.0},
      {{0.0, 2.0, 1.5, 1.0}, 0.9, 2.5, 7.5},
      {{2.0, -2.0, 1.5, 1.0}, 0.15, 0.0, 10.0},
  };
  return spec;
}

double gaussian_value(const GaussianMode& mode, double x, double y) {
  const double dx = x - mode.cx;
  const double dy = y - mode.cy;
  return mode.weight * std::exp(-(dx * dx + dy * dy) / mode.width);
}

RealVector gaussian_field(const Grid& grid, const GaussianMode& mode) {
  RealVector out(grid.size());
  for (Index iy = 0; iy < grid.ny; ++iy) {
    for (Index ix = 0; ix < grid.nx; ++ix) out(grid.cell(ix, iy)) = gaussian_value(mode, grid.x(ix), grid.y(iy));
  }
  return out;
}

bool active_at(const VideoComponent& c, double t) { return inside(t, c.t_on, c.t_off); }

double video_value(const VideoSpec& spec, double x, double y, double t) {
  double v = 0.0;
  for (const auto& c : spec.components) {
    if (active_at(c, t)) v += std::cos(2.0 * std::numbers::pi * c.frequency * t) * gaussian_value(c.shape, x, y);
  }
  return v;
}

SnapshotMatrix generate_video(const VideoSpec& spec) {
  spec.validate();
  const Index m = spec.snapshots();
  SnapshotMatrix out;
  out.dt = spec.dt;
  out.t0 = 0.0;
  out.data = RealMatrix::Zero(spec.grid.size(), m);
  for (const auto& c : spec.components) {
    const RealVector shape = gaussian_field(spec.grid, c.shape);
    for (Index k = 0; k < m; ++k) {
      const double t = out.time(k);
      if (active_at(c, t)) out.data.col(k) += std::cos(2.0 * std::numbers::pi * c.frequency * t) * shape;
    }
  }
  return out;
}

RealMatrix generate_test_coefficients(Index k, Index m, std::uint64_t seed, double width) {
  if (k < 1 || m < 1) throw ConfigError("coefficient series needs k, m >= 1");
  if (!(width > 0.0)) throw ConfigError("kernel width must be positive");
  const double s = width / std::numbers::sqrt2;
  const auto half = static_cast<Index>(std::ceil(4.0 * s));
  RealVector kernel(2 * half + 1);
  for (Index i = -half; i <= half; ++i) kernel(i + half) = std::exp(-static_cast<double>(i * i) / (2.0 * s * s));
  kernel /= kernel.norm();

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  RealMatrix out(k, m);
  RealVector noise(m + 2 * half);
  for (Index row = 0; row < k; ++row) {
    for (Index i = 0; i < noise.size(); ++i) noise(i) = normal(rng);
    for (Index t = 0; t < m; ++t) out(row, t) = noise.segment(t, 2 * half + 1).dot(kernel);
  }
  return out;
}

RealMatrix add_noise(const RealMatrix& data, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw ConfigError("noise sigma must be >= 0");
  if (sigma == 0.0) return data;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, sigma);
  RealMatrix out = data;
  for (Index j = 0; j < out.cols(); ++j) {
    for (Index i = 0; i < out.rows(); ++i) out(i, j) += normal(rng);
  }
  return out;
}

RealVector add_noise(const RealVector& data, double sigma, std::uint64_t seed) {
  return add_noise(RealMatrix(data), sigma, seed).col(0);
}

SnapshotMatrix add_noise(const SnapshotMatrix& data, double sigma, std::uint64_t seed) {
  return {add_noise(data.data, sigma, seed), data.dt, data.t0};
}

std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) {
  std::uint64_t z = root + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Index MultiscaleSpec::snapshots() const { return snapshot_count(t_end, t0, dt); }

void MultiscaleSpec::validate() const {
  grid.validate();
  if (!(dt > 0.0) || !(t_end > t0)) throw ConfigError("multiscale field needs dt > 0 and t_end > t0");
  for (const GaussianMode* g : {&background, &persistent_cos, &persistent_sin, &burst}) {
    if (!(g->width > 0.0)) throw ConfigError("gaussian width must be positive");
  }
  for (const auto& [on, off] : burst_windows) {
    if (!(on <= off)) throw ConfigError("burst window must satisfy start <= end");
  }
  if (!mask.empty() && static_cast<Index>(mask.size()) != grid.size()) throw ConfigError("mask length must equal grid size");
  if (!mask.empty() && std::none_of(mask.begin(), mask.end(), [](bool b) { return b; })) {
    throw ConfigError("mask excludes every cell");
  }
}

MultiscaleField generate_multiscale_field(const MultiscaleSpec& spec) {
  spec.validate();
  MultiscaleField out;
  for (Index c = 0; c < spec.grid.size(); ++c) {
    if (spec.mask.empty() || spec.mask[static_cast<size_t>(c)]) out.cells.push_back(c);
  }
  const auto n = static_cast<Index>(out.cells.size());
  const auto restrict_to_cells = [&](const RealVector& full) {
    RealVector v(n);
    for (Index i = 0; i < n; ++i) v(i) = full(out.cells[static_cast<size_t>(i)]);
    return v;
  };
  out.structures.resize(n, 4);
  out.structures.col(0) = restrict_to_cells(gaussian_field(spec.grid, spec.background));
  out.structures.col(1) = restrict_to_cells(gaussian_field(spec.grid, spec.persistent_cos));
  out.structures.col(2) = restrict_to_cells(gaussian_field(spec.grid, spec.persistent_sin));
  out.structures.col(3) = restrict_to_cells(gaussian_field(spec.grid, spec.burst));
  out.background = out.structures.col(0);

  const Index m = spec.snapshots();
  out.persistent.resize(n, m);
  out.burst = RealMatrix::Zero(n, m);
  const double two_pi = 2.0 * std::numbers::pi;
  for (Index k = 0; k < m; ++k) {
    const double t = spec.t0 + static_cast<double>(k) * spec.dt;
    out.persistent.col(k) = std::cos(two_pi * spec.persistent_frequency * t) * out.structures.col(1) +
                            std::sin(two_pi * spec.persistent_frequency * t) * out.structures.col(2);
    const bool bursting = std::any_of(spec.burst_windows.begin(), spec.burst_windows.end(),
                                      [&](const auto& w) { return inside(t, w.first, w.second); });
    if (bursting) out.burst.col(k) = std::cos(two_pi * spec.burst_frequency * t) * out.structures.col(3);
  }
  out.data.dt = spec.dt;
  out.data.t0 = spec.t0;
  out.data.data = out.persistent + out.burst;
  out.data.data.colwise() += out.background;
  return out;
}

}  // namespace mrsense
