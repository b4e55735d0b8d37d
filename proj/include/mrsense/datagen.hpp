#pragma once

#include <cstdint>
#include <vector>

#include "mrsense/dmd.hpp"

namespace mrsense {

/// nx x ny points spanning the closed bounds. Flattened index of point
/// (ix, iy) is ix + nx * iy.
struct Grid {
  Index nx = 80;
  Index ny = 80;
  double x_min = -5.0;
  double x_max = 5.0;
  double y_min = -5.0;
  double y_max = 5.0;

  Index size() const { return nx * ny; }
  double x(Index ix) const;
  double y(Index iy) const;
  Index cell(Index ix, Index iy) const { return ix + nx * iy; }
  /// Cell nearest to (x, y).
  Index nearest(double px, double py) const;
  void validate() const;
};

/// weight * exp(-|xi - center|^2 / width)
struct GaussianMode {
  double cx = 0.0;
  double cy = 0.0;
  double width = 1.0;
  double weight = 1.0;
};

/// One spatial structure oscillating as cos(2 pi f t) on the closed interval
/// [t_on, t_off] and zero elsewhere.
struct VideoComponent {
  GaussianMode shape;
  double frequency = 0.0;  // cycles per unit
  double t_on = 0.0;
  double t_off = 0.0;
};

struct VideoSpec {
  Grid grid;
  double t_end = 10.0;
  double dt = 0.01;
  std::vector<VideoComponent> components;

  Index snapshots() const;
  void validate() const;
};

/// Three Gaussians at (-2,-2), (0,2), (2,-2), w = 1.5, oscillating at 5.55,
/// 0.9 and 0.15 cycles per unit on [0,5], [2.5,7.5] and [0,10], sampled on an
/// 80 x 80 grid over [-5,5]^2 with dt = 0.01 up to t = 10.
VideoSpec table1_spec();

RealVector gaussian_field(const Grid& grid, const GaussianMode& mode);
double gaussian_value(const GaussianMode& mode, double x, double y);
bool active_at(const VideoComponent& c, double t);

/// Direct evaluation of the video at a point.
double video_value(const VideoSpec& spec, double x, double y, double t);

SnapshotMatrix generate_video(const VideoSpec& spec);

/// Smooth unit-variance series: white noise convolved with a Gaussian kernel
/// of standard deviation width / sqrt(2) samples, so the autocorrelation at a
/// lag of `width` samples is exp(-1/2).
RealMatrix generate_test_coefficients(Index k, Index m, std::uint64_t seed, double width = 10.0);

RealMatrix add_noise(const RealMatrix& data, double sigma, std::uint64_t seed);
RealVector add_noise(const RealVector& data, double sigma, std::uint64_t seed);
SnapshotMatrix add_noise(const SnapshotMatrix& data, double sigma, std::uint64_t seed);

/// Independent stream seed derived from a root seed (splitmix64).
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream);

struct MultiscaleSpec {
  Grid grid{40, 40, -5.0, 5.0, -5.0, 5.0};
  double t0 = 0.0;
  double t_end = 16.0;
  double dt = 0.05;
  GaussianMode background{0.0, 0.0, 40.0, 2.0};
  /// Global oscillation P cos(2 pi f t) + Q sin(2 pi f t).
  double persistent_frequency = 1.0;
  GaussianMode persistent_cos{-2.0, 0.5, 10.0, 1.0};
  GaussianMode persistent_sin{2.0, -0.5, 10.0, 0.8};
  /// Localized structure oscillating only inside `burst_windows`.
  GaussianMode burst{1.5, -2.5, 1.0, 0.5};
  double burst_frequency = 0.5;
  std::vector<std::pair<double, double>> burst_windows{{4.0, 7.0}, {11.0, 13.0}};
  /// Optional validity mask over grid cells; empty keeps every cell.
  std::vector<bool> mask;

  Index snapshots() const;
  void validate() const;
};

struct MultiscaleField {
  SnapshotMatrix data;       // rows are the valid cells in increasing order
  std::vector<Index> cells;  // grid cell of each row
  RealVector background;
  RealMatrix persistent;
  RealMatrix burst;
  /// Spatial structures restricted to valid cells: background, P, Q, burst.
  RealMatrix structures;
};

MultiscaleField generate_multiscale_field(const MultiscaleSpec& spec);

}  // namespace mrsense
