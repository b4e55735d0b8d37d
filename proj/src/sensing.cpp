#include "mrsense/sensing.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numeric>
#include <set>

#include "mrsense/diagnostics.hpp"

namespace mrsense {

namespace {

constexpr double kTieTolerance = 1e-6;

void fix_sign(Eigen::Ref<RealVector> v) {
  Index at = 0;
  v.cwiseAbs().maxCoeff(&at);
  if (v(at) < 0) v = -v;
}

bool same_structure(const ModeLibrary& lib, Index a, Index b) {
  const LibraryColumn& ma = lib.meta[static_cast<size_t>(a)];
  const LibraryColumn& mb = lib.meta[static_cast<size_t>(b)];
  if (ma.level == mb.level && ma.bin == mb.bin) return false;
  const double tol = 1e-9 * std::max(1.0, std::abs(ma.t_end - ma.t_start));
  if (!(ma.t_start <= mb.t_end + tol && mb.t_start <= ma.t_end + tol)) return false;
  return std::abs(lib.matrix.col(a).dot(lib.matrix.col(b))) > kRepeatSimilarity;
}

std::vector<Index> by_amplitude(const ModeLibrary& lib, const std::vector<Index>& cols) {
  std::vector<Index> order = cols;
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return lib.meta[static_cast<size_t>(a)].amplitude > lib.meta[static_cast<size_t>(b)].amplitude;
  });
  return order;
}

// Index of the maximum score, ties within kTieTolerance going to the lowest index.
Index argmax_lowest(const RealVector& score, const std::vector<bool>& taken) {
  Index best = -1;
  for (Index i = 0; i < score.size(); ++i) {
    if (taken[static_cast<size_t>(i)]) continue;
    if (best < 0 || score(i) > score(best) * (1.0 + kTieTolerance) + std::numeric_limits<double>::min()) best = i;
  }
  return best;
}

}  // namespace

RealBasis realify(const ModeLibrary& lib, double rank_cut) {
  if (!(rank_cut >= 0.0 && rank_cut < 1.0)) throw ConfigError("realify: rank cut must lie in [0, 1)");
  std::vector<RealVector> cols;
  RealBasis out;
  for (Index c = 0; c < lib.size(); ++c) {
    RealMatrix pair(lib.states(), 2);
    pair.col(0) = lib.matrix.col(c).real();
    pair.col(1) = lib.matrix.col(c).imag();
    const SvdResult svd = thin_svd(pair);
    for (Index i = 0; i < svd.s.size(); ++i) {
      if (!(svd.s(i) > 0.0) || svd.s(i) <= rank_cut * svd.s(0)) continue;
      if (i > 0 && svd.s(i) <= 1e-12 * svd.s(0)) continue;
      RealVector v = svd.U.col(i);
      fix_sign(v);
      cols.push_back(std::move(v));
      out.source.push_back(c);
    }
  }
  out.columns.resize(lib.states(), static_cast<Index>(cols.size()));
  for (size_t i = 0; i < cols.size(); ++i) out.columns.col(static_cast<Index>(i)) = cols[i];
  return out;
}

AlphaFilter AlphaFilter::amplitude(double T) {
  AlphaFilter f;
  f.mode = Mode::AmplitudeThreshold;
  f.threshold = T;
  return f;
}

AlphaFilter AlphaFilter::top_per_level(Index k) {
  AlphaFilter f;
  f.mode = Mode::TopPerLevel;
  f.top_k = k;
  return f;
}

AlphaFilter AlphaFilter::explicit_bins(std::vector<std::pair<Index, Index>> bins) {
  AlphaFilter f;
  f.mode = Mode::Bins;
  f.bins = std::move(bins);
  return f;
}

AlphaFilter AlphaFilter::top_per_frequency(Index k, double rel_tol, double min_rel_amplitude) {
  AlphaFilter f;
  f.mode = Mode::TopPerFrequency;
  f.top_k = k;
  f.frequency_tolerance = rel_tol;
  f.min_relative_amplitude = min_rel_amplitude;
  return f;
}

ModeLibrary filter_library(const ModeLibrary& lib, const AlphaFilter& filter) {
  if (lib.size() == 0) throw ConfigError("filter_library: empty library");
  if (filter.top_k < 1) throw ConfigError("filter_library: k must be >= 1");

  std::vector<Index> all(static_cast<size_t>(lib.size()));
  std::iota(all.begin(), all.end(), Index{0});

  // Repeats: walk by amplitude, a flagged column survives only if no kept
  // column already carries the same structure.
  std::vector<Index> kept;
  for (Index c : by_amplitude(lib, all)) {
    bool duplicate = false;
    if (lib.meta[static_cast<size_t>(c)].repeat) {
      for (Index k : kept) {
        if (lib.meta[static_cast<size_t>(k)].repeat && same_structure(lib, c, k)) {
          duplicate = true;
          break;
        }
      }
    }
    if (!duplicate) kept.push_back(c);
  }

  std::vector<Index> chosen;
  switch (filter.mode) {
    case AlphaFilter::Mode::AmplitudeThreshold:
      for (Index c : kept) {
        if (lib.meta[static_cast<size_t>(c)].amplitude >= filter.threshold) chosen.push_back(c);
      }
      break;
    case AlphaFilter::Mode::TopPerLevel: {
      std::vector<std::pair<Index, Index>> per_level;  // (level, count)
      for (Index c : kept) {
        const Index level = lib.meta[static_cast<size_t>(c)].level;
        auto it = std::find_if(per_level.begin(), per_level.end(), [&](const auto& e) { return e.first == level; });
        if (it == per_level.end()) it = per_level.insert(per_level.end(), {level, 0});
        if (it->second < filter.top_k) {
          chosen.push_back(c);
          ++it->second;
        }
      }
      break;
    }
    case AlphaFilter::Mode::Bins:
      for (Index c : kept) {
        const LibraryColumn& m = lib.meta[static_cast<size_t>(c)];
        const bool wanted = std::any_of(filter.bins.begin(), filter.bins.end(),
                                        [&](const auto& lb) { return lb.first == m.level && lb.second == m.bin; });
        if (wanted) chosen.push_back(c);
      }
      break;
    case AlphaFilter::Mode::TopPerFrequency: {
      double top = 0.0;
      for (Index c : kept) top = std::max(top, lib.meta[static_cast<size_t>(c)].amplitude);
      std::vector<std::pair<double, Index>> groups;  // (representative frequency, count)
      for (Index c : kept) {
        const LibraryColumn& m = lib.meta[static_cast<size_t>(c)];
        if (m.amplitude < filter.min_relative_amplitude * top) continue;
        auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) {
          return std::abs(g.first - m.frequency) <=
                 filter.frequency_tolerance * std::max(g.first, m.frequency) + filter.frequency_floor;
        });
        if (it == groups.end()) it = groups.insert(groups.end(), {m.frequency, 0});
        if (it->second < filter.top_k) {
          chosen.push_back(c);
          ++it->second;
        }
      }
      break;
    }
  }
  if (chosen.empty()) throw ConfigError("empty alpha set");
  std::sort(chosen.begin(), chosen.end());
  return lib.select(chosen);
}

SensorSet select_sensors(const RealMatrix& basis, Index p, std::string source) {
  const Index n = basis.rows();
  const Index M = basis.cols();
  if (p < 1) throw ConfigError("select_sensors: p must be >= 1");
  if (p > n) throw ConfigError("select_sensors: more sensors requested than states");
  if (M < 1) throw ConfigError("select_sensors: empty basis");
  if (!basis.allFinite()) throw ConfigError("select_sensors: non-finite basis");

  SensorSet out;
  out.source = std::move(source);
  PivotedQr qr;
  if (p <= M) {
    qr = pivoted_qr(basis.transpose(), p);
  } else {
    // basis basis^T = U S^2 U^T; the orthonormal U leaves column norms and
    // projections unchanged, so pivoting on S^2 U^T is pivoting on the Gram.
    const SvdResult svd = thin_svd(basis);
    const Index r = select_rank(svd.s, SvdTruncation::threshold(1e-12 * svd.s(0)));
    const RealMatrix reduced = svd.s.head(r).array().square().matrix().asDiagonal() * svd.U.leftCols(r).transpose();
    qr = pivoted_qr(reduced, std::min(p, n));
  }
  out.gammas = qr.pivots;
  out.rank_deficient = qr.rank_deficient && p <= M;
  if (static_cast<Index>(out.gammas.size()) == p) return out;

  // Rank exhausted: continue greedily on the leverage u^T G^{-1} u in the
  // coordinates of an orthonormal basis for the row space.
  const SvdResult svd = thin_svd(basis);
  const Index r = std::max<Index>(1, select_rank(svd.s, SvdTruncation::threshold(1e-12 * svd.s(0))));
  const RealMatrix coords = svd.U.leftCols(r);
  std::vector<bool> taken(static_cast<size_t>(n), false);
  RealMatrix G = RealMatrix::Zero(r, r);
  for (Index g : out.gammas) {
    taken[static_cast<size_t>(g)] = true;
    G += coords.row(g).transpose() * coords.row(g);
  }
  Eigen::LDLT<RealMatrix> ldlt(G);
  RealMatrix Ginv;
  if (ldlt.info() == Eigen::Success && ldlt.isPositive() && ldlt.rcond() > 1e-12) {
    Ginv = ldlt.solve(RealMatrix::Identity(r, r));
  } else {
    Ginv = (G + 1e-10 * RealMatrix::Identity(r, r)).inverse();
  }
  while (static_cast<Index>(out.gammas.size()) < p) {
    const RealMatrix T = coords * Ginv;
    const RealVector score = T.cwiseProduct(coords).rowwise().sum();
    const Index best = argmax_lowest(score, taken);
    taken[static_cast<size_t>(best)] = true;
    out.gammas.push_back(best);
    const RealVector u = coords.row(best).transpose();
    const RealVector Gu = Ginv * u;
    Ginv -= Gu * Gu.transpose() / (1.0 + u.dot(Gu));
  }
  return out;
}

SensorSet select_sensors(const ModeLibrary& lib, Index p, double rank_cut) {
  const RealBasis basis = realify(lib, rank_cut);
  return select_sensors(basis.columns, p, "mode-library");
}

SelectionOperator::SelectionOperator(const SensorSet& sensors, Index n) : gammas_(sensors.gammas), n_(n) {
  std::set<Index> seen;
  for (Index g : gammas_) {
    if (g < 0 || g >= n) throw ConfigError("sensor index out of range");
    if (!seen.insert(g).second) throw ConfigError("duplicate sensor index");
  }
}

RealVector SelectionOperator::apply(const RealVector& x) const {
  if (x.size() != n_) throw ConfigError("measurement operator: state length mismatch");
  RealVector y(rows());
  for (Index i = 0; i < rows(); ++i) y(i) = x(gammas_[static_cast<size_t>(i)]);
  return y;
}

RealMatrix SelectionOperator::apply(const RealMatrix& X) const {
  if (X.rows() != n_) throw ConfigError("measurement operator: row count mismatch");
  RealMatrix Y(rows(), X.cols());
  for (Index i = 0; i < rows(); ++i) Y.row(i) = X.row(gammas_[static_cast<size_t>(i)]);
  return Y;
}

RealMatrix SelectionOperator::dense() const {
  RealMatrix C = RealMatrix::Zero(rows(), n_);
  for (Index i = 0; i < rows(); ++i) C(i, gammas_[static_cast<size_t>(i)]) = 1.0;
  return C;
}

SelectionOperator measurement_operator(const SensorSet& sensors, Index n) { return SelectionOperator(sensors, n); }

double sensor_log_det(const RealMatrix& basis, const std::vector<Index>& gammas) {
  RealMatrix rows(static_cast<Index>(gammas.size()), basis.cols());
  for (size_t i = 0; i < gammas.size(); ++i) rows.row(static_cast<Index>(i)) = basis.row(gammas[i]);
  const RealMatrix gram = rows.transpose() * rows;
  Eigen::LLT<RealMatrix> llt(gram);
  if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

namespace {

template <typename Window, typename Select>
std::vector<Index> ensemble_counts(const std::vector<Window>& windows, Index n, Index threads, Select select) {
  std::vector<SensorSet> sets(windows.size());
  const size_t stride = static_cast<size_t>(std::max<Index>(1, threads));
  std::vector<std::future<void>> workers;
  for (size_t w = 0; w < stride && w < windows.size(); ++w) {
    workers.push_back(std::async(std::launch::async, [&, w] {
      for (size_t i = w; i < windows.size(); i += stride) sets[i] = select(windows[i]);
    }));
  }
  for (auto& f : workers) f.get();
  std::vector<Index> counts(static_cast<size_t>(n), 0);
  for (const SensorSet& s : sets) {
    for (Index g : s.gammas) ++counts[static_cast<size_t>(g)];
  }
  return counts;
}

}  // namespace

std::vector<Index> sensor_ensemble(const std::vector<ModeLibrary>& windows, Index p, Index threads) {
  if (windows.empty()) throw ConfigError("sensor_ensemble: no windows");
  const Index n = windows.front().states();
  for (const auto& w : windows) {
    if (w.states() != n) throw ConfigError("sensor_ensemble: windows differ in state dimension");
  }
  return ensemble_counts(windows, n, threads, [p](const ModeLibrary& lib) { return select_sensors(lib, p); });
}

std::vector<Index> sensor_ensemble(const std::vector<RealMatrix>& windows, Index p, Index threads) {
  if (windows.empty()) throw ConfigError("sensor_ensemble: no windows");
  const Index n = windows.front().rows();
  for (const auto& w : windows) {
    if (w.rows() != n) throw ConfigError("sensor_ensemble: windows differ in state dimension");
  }
  return ensemble_counts(windows, n, threads, [p](const RealMatrix& b) { return select_sensors(b, p); });
}

}  // namespace mrsense
