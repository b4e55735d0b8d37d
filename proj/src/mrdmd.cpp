#include "mrsense/mrdmd.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numbers>
#include <sstream>

#include "mrsense/diagnostics.hpp"

namespace mrsense {

namespace {

constexpr double kTimeTolerance = 1e-9;
// A residual this small relative to the bin's own data is fit round-off.
constexpr double kEmptyResidual = 1e-8;
constexpr Index kMinBinSnapshots = 4;

Index bins_at(Index level) { return Index{1} << (level - 1); }

// Snapshot range [first, last] of bin j at `level`.
std::pair<Index, Index> bin_range(Index m, Index level, Index j) {
  const Index J = bins_at(level);
  const Index first = j == 1 ? 0 : ((j - 1) * (m - 1)) / J + 1;
  const Index last = (j * (m - 1)) / J;
  return {first, last};
}

struct Decomposer {
  const SnapshotMatrix& data;
  const MrDmdOptions& opt;
  std::vector<MrDmdNode>& nodes;
  double span;
  double empty_floor;  // relative to the norm of the bin's data

  void run(Index level, Index bin, RealMatrix residual, Index first, Index threads) const {
    MrDmdNode& node = nodes[static_cast<size_t>(MrDmdTree::node_index(level, bin))];
    const double width = span / static_cast<double>(bins_at(level));
    node.level = level;
    node.bin = bin;
    node.t_start = data.t0 + static_cast<double>(bin - 1) * width;
    node.t_end = data.t0 + static_cast<double>(bin) * width;
    node.first = first;
    node.count = residual.cols();
    const bool leaf = level == opt.levels;
    node.cutoff = leaf ? std::numeric_limits<double>::infinity() : opt.rho / width;
    node.slow.dt = data.dt * static_cast<double>(opt.stride);
    node.slow.t0 = data.time(first);
    node.slow.modes.resize(residual.rows(), 0);

    const double floor = empty_floor * data.data.middleCols(first, residual.cols()).norm();
    if (residual.norm() > floor) {
      SnapshotMatrix window;
      window.dt = data.dt * static_cast<double>(opt.stride);
      window.t0 = data.time(first);
      if (opt.stride == 1) {
        window.data = residual;
      } else {
        window.data = residual(Eigen::all, Eigen::seq(0, residual.cols() - 1, opt.stride));
      }
      DmdOptions dopt;
      dopt.truncation = opt.truncation;
      dopt.delays = opt.delays;
      dopt.amplitude_fit = opt.amplitude_fit;
      const DmdResult full = opt.forward_backward ? fb_dmd(window, dopt) : exact_dmd(window, dopt);
      const RealVector freq = full.frequencies();
      std::vector<bool> slow(static_cast<size_t>(full.rank()));
      for (Index k = 0; k < full.rank(); ++k) slow[static_cast<size_t>(k)] = leaf || freq(k) <= node.cutoff;
      node.slow = full.subset(slow);
    }
    if (leaf) return;

    if (node.slow.rank() > 0) {
      RealVector times(residual.cols());
      for (Index k = 0; k < residual.cols(); ++k) times(k) = data.time(first + k);
      residual -= dmd_reconstruct(node.slow, times);
    }
    const Index m = data.snapshots();
    const auto left_range = bin_range(m, level + 1, 2 * bin - 1);
    const auto right_range = bin_range(m, level + 1, 2 * bin);
    const Index lf = left_range.first;
    const Index ll = left_range.second;
    const Index rf = right_range.first;
    const Index rl = right_range.second;
    RealMatrix left = residual.middleCols(lf - first, ll - lf + 1);
    RealMatrix right = residual.middleCols(rf - first, rl - rf + 1);
    residual.resize(0, 0);
    if (threads > 1) {
      const Index left_threads = threads / 2;
      auto pending = std::async(std::launch::async, [&, left = std::move(left)]() mutable {
        run(level + 1, 2 * bin - 1, std::move(left), lf, left_threads);
      });
      run(level + 1, 2 * bin, std::move(right), rf, threads - left_threads);
      pending.get();
    } else {
      run(level + 1, 2 * bin - 1, std::move(left), lf, 1);
      run(level + 1, 2 * bin, std::move(right), rf, 1);
    }
  }
};

bool supports_touch(const LibraryColumn& a, const LibraryColumn& b) {
  const double tol = kTimeTolerance * std::max(1.0, std::abs(a.t_end - a.t_start));
  return a.t_start <= b.t_end + tol && b.t_start <= a.t_end + tol;
}

}  // namespace

void MrDmdOptions::validate() const {
  if (levels < 1 || levels > 30) throw ConfigError("levels must lie in [1, 30]");
  truncation.validate();
  if (!(rho > 0.0) || !std::isfinite(rho)) throw ConfigError("rho must be positive");
  if (delays < 1) throw ConfigError("delays must be >= 1");
  if (stride < 1) throw ConfigError("stride must be >= 1");
  if (threads < 1) throw ConfigError("threads must be >= 1");
}

Index MrDmdTree::node_index(Index level, Index bin) { return bins_at(level) - 1 + (bin - 1); }

const MrDmdNode& MrDmdTree::node(Index level, Index bin) const {
  if (level < 1 || level > levels || bin < 1 || bin > bins_at(level)) throw ConfigError("node index out of range");
  return nodes[static_cast<size_t>(node_index(level, bin))];
}

Index bin_of_snapshot(Index k, Index m, Index level) {
  const Index J = bins_at(level);
  const Index j = (k * J + (m - 2)) / (m - 1);
  return std::clamp<Index>(j, 1, J);
}

Index bin_of_time(const MrDmdTree& tree, double t, Index level) {
  const double span = tree.span();
  const double u = (t - tree.t0) / span;
  if (u < -kTimeTolerance || u > 1.0 + kTimeTolerance) {
    std::ostringstream msg;
    msg << "time " << t << " lies outside the decomposed span [" << tree.t0 << ", " << tree.t0 + span << "]";
    throw ConfigError(msg.str());
  }
  const Index J = bins_at(level);
  double x = u * static_cast<double>(J);
  const double nearest = std::round(x);
  if (std::abs(x - nearest) <= kTimeTolerance * static_cast<double>(J)) x = nearest;
  return std::clamp<Index>(static_cast<Index>(std::ceil(x)), 1, J);
}

MrDmdTree mrdmd_decompose(const SnapshotMatrix& data, const MrDmdOptions& options) {
  data.validate();
  options.validate();
  const Index m = data.snapshots();
  const Index leaves = bins_at(options.levels);
  for (Index j = 1; j <= leaves; ++j) {
    const auto [first, last] = bin_range(m, options.levels, j);
    const Index usable = (last - first) / options.stride + 1;
    if (usable < kMinBinSnapshots || usable <= options.delays) {
      throw ConfigError("insufficient resolution for requested levels");
    }
  }

  MrDmdTree tree;
  tree.levels = options.levels;
  tree.states = data.states();
  tree.snapshots = m;
  tree.dt = data.dt;
  tree.t0 = data.t0;
  tree.options = options;
  tree.nodes.resize(static_cast<size_t>(2 * leaves - 1));

  const Decomposer dec{data, options, tree.nodes, tree.span(), kEmptyResidual};
  dec.run(1, 1, data.data, 0, options.threads);
  return tree;
}

RealMatrix mrdmd_reconstruct(const MrDmdTree& tree, const RealVector& times) {
  RealMatrix out = RealMatrix::Zero(tree.states, times.size());
  for (Index level = 1; level <= tree.levels; ++level) {
    std::vector<std::vector<Index>> members(static_cast<size_t>(bins_at(level)));
    for (Index t = 0; t < times.size(); ++t) {
      members[static_cast<size_t>(bin_of_time(tree, times(t), level) - 1)].push_back(t);
    }
    for (Index j = 1; j <= bins_at(level); ++j) {
      const auto& idx = members[static_cast<size_t>(j - 1)];
      const MrDmdNode& node = tree.node(level, j);
      if (idx.empty() || node.slow.rank() == 0) continue;
      RealVector local(static_cast<Index>(idx.size()));
      for (size_t i = 0; i < idx.size(); ++i) local(static_cast<Index>(i)) = times(idx[i]);
      const RealMatrix part = dmd_reconstruct(node.slow, local);
      for (size_t i = 0; i < idx.size(); ++i) out.col(idx[i]) += part.col(static_cast<Index>(i));
    }
  }
  return out;
}

ModeLibrary ModeLibrary::select(const std::vector<Index>& columns) const {
  ModeLibrary out;
  out.matrix.resize(states(), static_cast<Index>(columns.size()));
  for (size_t i = 0; i < columns.size(); ++i) {
    const Index c = columns[i];
    if (c < 0 || c >= size()) throw ConfigError("library column out of range");
    out.matrix.col(static_cast<Index>(i)) = matrix.col(c);
    out.meta.push_back(meta[static_cast<size_t>(c)]);
  }
  return out;
}

ModeLibrary build_library(const MrDmdTree& tree) {
  std::vector<LibraryColumn> meta;
  std::vector<ComplexVector> cols;
  for (const MrDmdNode& node : tree.nodes) {
    const DmdResult& res = node.slow;
    std::vector<LibraryColumn> local;
    for (Index k = 0; k < res.rank(); ++k) {
      const Complex lam = res.lambdas(k);
      const double scale = std::abs(lam);
      const bool real_mode = std::abs(lam.imag()) <= 1e-10 * scale;
      bool partner = false;
      if (!real_mode) {
        for (Index j = 0; j < res.rank() && !partner; ++j) {
          partner = j != k && std::abs(res.lambdas(j) - std::conj(lam)) <= 1e-8 * scale;
        }
        if (lam.imag() < 0.0 && partner) continue;
      }
      LibraryColumn c;
      c.level = node.level;
      c.bin = node.bin;
      c.k = k;
      c.omega = res.omegas(k);
      c.frequency = std::abs(c.omega.real()) / (2.0 * std::numbers::pi);
      c.amplitude = std::abs(res.amplitudes(k));
      c.t_start = node.t_start;
      c.t_end = node.t_end;
      c.paired = partner;
      local.push_back(c);
    }
    std::stable_sort(local.begin(), local.end(),
                     [](const LibraryColumn& a, const LibraryColumn& b) { return a.amplitude > b.amplitude; });
    for (const LibraryColumn& c : local) {
      meta.push_back(c);
      cols.push_back(res.modes.col(c.k));
    }
  }
  if (meta.empty()) throw NumericalError("empty library: the tree retained no modes");

  ModeLibrary lib;
  lib.matrix.resize(tree.states, static_cast<Index>(cols.size()));
  for (size_t i = 0; i < cols.size(); ++i) lib.matrix.col(static_cast<Index>(i)) = cols[i];
  for (size_t a = 0; a < meta.size(); ++a) {
    for (size_t b = a + 1; b < meta.size(); ++b) {
      const bool same_node = meta[a].level == meta[b].level && meta[a].bin == meta[b].bin;
      if (same_node || !supports_touch(meta[a], meta[b])) continue;
      const double sim = std::abs(cols[a].dot(cols[b]));
      if (sim > kRepeatSimilarity) {
        meta[a].repeat = true;
        meta[b].repeat = true;
      }
    }
  }
  lib.meta = std::move(meta);
  return lib;
}

std::vector<AmplitudeCell> amplitude_map(const MrDmdTree& tree) {
  std::vector<AmplitudeCell> rows;
  for (const MrDmdNode& node : tree.nodes) {
    AmplitudeCell cell;
    cell.level = node.level;
    cell.bin = node.bin;
    cell.t_start = node.t_start;
    cell.t_end = node.t_end;
    const RealVector freq = node.slow.frequencies();
    double total = 0.0;
    for (Index k = 0; k < node.slow.rank(); ++k) {
      const double amp = std::abs(node.slow.amplitudes(k));
      cell.modes.emplace_back(freq(k), amp);
      total += amp;
    }
    cell.mean_amplitude = node.slow.rank() > 0 ? total / static_cast<double>(node.slow.rank()) : 0.0;
    rows.push_back(std::move(cell));
  }
  return rows;
}

}  // namespace mrsense
