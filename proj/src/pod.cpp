#include "mrsense/pod.hpp"

#include <algorithm>
#include <sstream>

#include "mrsense/diagnostics.hpp"

namespace mrsense {

double PodResult::variance_explained(Index k) const {
  const double total = eigenvalues.sum();
  if (!(total > 0.0)) return 0.0;
  k = std::clamp<Index>(k, 0, eigenvalues.size());
  return eigenvalues.head(k).sum() / total;
}

PodResult compute_pod(const SnapshotMatrix& data, Index r, bool center) {
  data.validate();
  if (r < 1) throw ConfigError("pod: r must be >= 1");
  if (r > std::min(data.states(), data.snapshots())) throw ConfigError("pod: r exceeds min(n, m)");

  PodResult out;
  RealMatrix X = data.data;
  if (center) {
    out.mean = X.rowwise().mean();
    X.colwise() -= out.mean;
  }
  if (X.cwiseAbs().maxCoeff() == 0.0) throw NumericalError("degenerate input: snapshots carry no variance");

  const SvdResult svd = thin_svd(X);
  const Index rank = select_rank(svd.s, SvdTruncation::threshold(1e-12 * svd.s(0)));
  if (r > rank) {
    std::ostringstream msg;
    msg << "pod: requested " << r << " modes but data rank is " << rank << "; clamped";
    warn(msg.str());
    r = rank;
  }
  out.modes = svd.U.leftCols(r);
  out.eigenvalues = svd.s.array().square() / static_cast<double>(data.snapshots() - 1);
  return out;
}

}  // namespace mrsense
