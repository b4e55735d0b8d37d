#include <sys/wait.h>

#include <algorithm>
#include <bit>
#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "mrsense/commands.hpp"
#include "mrsense/io.hpp"

using namespace mrsense;
namespace fs = std::filesystem;

namespace {

const fs::path kScratch = MRSENSE_SCRATCH;

int run(const std::string& args) {
  fs::create_directories(kScratch);
  const std::string cmd = std::string(MRSENSE_CLI_PATH) + " " + args + " >" + (kScratch / "last.log").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path dir(const std::string& name) {
  const fs::path d = kScratch / name;
  fs::create_directories(d);
  return d;
}

bool bit_equal(const RealMatrix& a, const RealMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (Index i = 0; i < a.size(); ++i) {
    if (std::bit_cast<std::uint64_t>(a.data()[i]) != std::bit_cast<std::uint64_t>(b.data()[i])) return false;
  }
  return true;
}

Json json_file(const fs::path& p) { return Json::parse(read_bytes(p)); }

Index csv_rows(const fs::path& p) {
  std::istringstream in(read_bytes(p));
  std::string line;
  Index rows = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] != '#') ++rows;
  }
  return rows - 1;
}

// One small dataset shared by the pipeline cases.
const fs::path& coarse_data() {
  static const fs::path d = [] {
    const fs::path g = dir("coarse");
    REQUIRE(run("--out " + g.string() + " generate --dt 0.02") == 0);
    return g;
  }();
  return d;
}

const fs::path& coarse_tree() {
  static const fs::path d = [] {
    const fs::path t = dir("coarse_tree");
    REQUIRE(run("--out " + t.string() + " mrdmd --input " + (coarse_data() / "snapshots.mdm").string()) == 0);
    return t;
  }();
  return d;
}

}  // namespace

TEST_CASE("cli: usage errors exit 2") {
  CHECK(run("") == 2);
  CHECK(run("frobnicate") == 2);
  CHECK(run("generate --bogus 1") == 2);
  CHECK(run("--help") == 0);
  CHECK(run("--out " + dir("u").string() + " generate --preset cylinder") == 2);
  CHECK(run("--out " + dir("u").string() + " mrdmd") == 2);
  CHECK(run("--out " + dir("u").string() + " mrdmd --input " + (kScratch / "absent.mdm").string()) == 2);
  CHECK(run("--out " + dir("u").string() + " experiment nonsense") == 2);
  const fs::path cfg = dir("u") / "bad.json";
  write_bytes(cfg, R"({"levels": 4, "colour": "red"})");
  CHECK(run("--config " + cfg.string() + " --out " + dir("u").string() + " generate") == 2);
}

TEST_CASE("cli: numerical failures exit 1") {
  const fs::path d = dir("zero");
  write_matrix_file(d / "zero.mdm", MatrixFile{RealMatrix::Zero(6, 10), {}, R"({"sampling":{"dt":0.1,"t0":0}})"});
  CHECK(run("--out " + d.string() + " pod --rank 2 --input " + (d / "zero.mdm").string()) == 1);
}

TEST_CASE("cli: generate shapes and sampling") {
  const fs::path full = dir("full");
  REQUIRE(run("--out " + full.string() + " generate") == 0);
  const MatrixFile snaps = read_matrix_file(full / "snapshots.mdm");
  CHECK(snaps.data.rows() == 6400);
  CHECK(snaps.data.cols() == 1001);
  const Json prov = Json::parse(snaps.provenance);
  CHECK(prov["sampling"]["dt"] == 0.01);
  CHECK(prov["tool"] == "mrsense");
  const Json truth = json_file(full / "truth.json");
  CHECK(truth["components"].size() == 3);
  CHECK(truth["provenance"]["config"]["preset"] == "table1");

  const MatrixFile coarse = read_matrix_file(coarse_data() / "snapshots.mdm");
  CHECK(coarse.data.cols() == 501);
  CHECK(Json::parse(coarse.provenance)["sampling"]["dt"] == 0.02);
  // every other full-rate snapshot
  for (Index k = 0; k < 501; k += 50) CHECK((coarse.data.col(k) - snaps.data.col(2 * k)).norm() < 1e-12);

  const fs::path ms = dir("multiscale");
  REQUIRE(run("--out " + ms.string() + " generate --preset multiscale") == 0);
  CHECK(read_matrix(ms / "structures.mdm").cols() == 4);
}

TEST_CASE("cli: mrdmd outputs, determinism and reconstruct replay") {
  const fs::path t = coarse_tree();
  CHECK(csv_rows(t / "amplitude_map.csv") == 15);
  CHECK(read_bytes(t / "amplitude_map.csv").rfind("# provenance {", 0) == 0);
  CHECK(json_file(t / "tree.json")["nodes"].size() == 15);

  // provenance records the output directory, so reruns are compared in place
  std::vector<std::string> before;
  const char* files[] = {"tree.json", "tree_modes.mdm", "library.json", "library_modes.mdm", "amplitude_map.csv"};
  for (const char* f : files) before.push_back(sha256_file(t / f));
  REQUIRE(run("--out " + t.string() + " mrdmd --input " + (coarse_data() / "snapshots.mdm").string()) == 0);
  for (size_t i = 0; i < before.size(); ++i) CHECK_MESSAGE(sha256_file(t / files[i]) == before[i], files[i]);
  const fs::path other = dir("coarse_tree_elsewhere");
  REQUIRE(run("--out " + other.string() + " mrdmd --input " + (coarse_data() / "snapshots.mdm").string()) == 0);
  CHECK(bit_equal(read_matrix(t / "library_modes.mdm"), read_matrix(other / "library_modes.mdm")));

  const fs::path rec = dir("reconstruct");
  REQUIRE(run("--out " + rec.string() + " reconstruct --tree " + t.string() + " --times 0.5 3.3 9.9") == 0);
  const MrDmdTree tree = tree_from_json(json_file(t / "tree.json"), read_matrix(t / "tree_modes.mdm"));
  RealVector times(3);
  times << 0.5, 3.3, 9.9;
  CHECK(bit_equal(read_matrix(rec / "reconstruction.mdm"), mrdmd_reconstruct(tree, times)));

  REQUIRE(run("--out " + rec.string() + " reconstruct --tree " + t.string()) == 0);
  const RealMatrix all = read_matrix(rec / "reconstruction.mdm");
  const RealMatrix X = read_matrix(coarse_data() / "snapshots.mdm");
  REQUIRE(all.cols() == X.cols());
  CHECK((all - X).norm() <= 0.05 * X.norm());
}

TEST_CASE("cli: one-level mrdmd equals whole-record DMD") {
  const fs::path input = coarse_data() / "snapshots.mdm";
  const fs::path one = dir("one_level");
  const fs::path whole = dir("whole_dmd");
  REQUIRE(run("--out " + one.string() + " mrdmd --levels 1 --input " + input.string()) == 0);
  REQUIRE(run("--out " + whole.string() + " dmd --delays 2 --input " + input.string()) == 0);
  const Json root = json_file(one / "tree.json")["nodes"][0]["slow"];
  const Json dmd = json_file(whole / "dmd.json");
  REQUIRE(root["rank"] == dmd["rank"]);
  for (size_t k = 0; k < dmd["lambdas"].size(); ++k) {
    CHECK(std::abs(root["lambdas"][k][0].get<double>() - dmd["lambdas"][k][0].get<double>()) < 1e-12);
    CHECK(std::abs(root["lambdas"][k][1].get<double>() - dmd["lambdas"][k][1].get<double>()) < 1e-12);
  }
}

TEST_CASE("cli: sensors and estimate pipeline") {
  const fs::path t = coarse_tree();
  const fs::path s = dir("sensors");
  CHECK(run("--out " + s.string() + " sensors -p 0 --library " + t.string()) == 2);
  REQUIRE(run("--out " + s.string() + " sensors -p 3 --library " + t.string()) == 0);
  const Json doc = json_file(s / "sensors.json");
  CHECK(doc["count"] == 3);
  // one real column per standing-wave generator
  CHECK(doc["basis_columns"] == 3);
  CHECK(doc["oversampled"] == false);
  CHECK(csv_rows(s / "sensors.csv") == 3);

  const fs::path over = dir("sensors_over");
  REQUIRE(run("--out " + over.string() + " sensors -p 30 --library " + t.string()) == 0);
  const Json odoc = json_file(over / "sensors.json");
  CHECK(odoc["oversampled"] == true);
  auto gammas = odoc["gammas"].get<std::vector<Index>>();
  CHECK(gammas.size() == 30);
  std::sort(gammas.begin(), gammas.end());
  CHECK(std::adjacent_find(gammas.begin(), gammas.end()) == gammas.end());

  // measurements of the data itself at the oversampled sensors
  const RealMatrix X = read_matrix(coarse_data() / "snapshots.mdm");
  const auto order = odoc["gammas"].get<std::vector<Index>>();
  RealMatrix Y(30, 5);
  for (Index r = 0; r < 30; ++r) {
    for (Index c = 0; c < 5; ++c) Y(r, c) = X(order[static_cast<size_t>(r)], 100 * c);
  }
  write_matrix_file(over / "y.mdm", MatrixFile{Y, {}, {}});
  const fs::path est = dir("estimate");
  REQUIRE(run("--out " + est.string() + " estimate --library " + t.string() + " --sensor-file " +
              (over / "sensors.json").string() + " --measurements " + (over / "y.mdm").string()) == 0);
  const RealMatrix states = read_matrix(est / "states.mdm");
  CHECK(states.rows() == 6400);
  CHECK(states.cols() == 5);
  CHECK(csv_rows(est / "estimate.csv") == 5);
  // mismatched sensor and measurement counts
  CHECK(run("--out " + est.string() + " estimate --library " + t.string() + " --sensor-file " +
            (s / "sensors.json").string() + " --measurements " + (over / "y.mdm").string()) == 2);

  const fs::path pod = dir("pod");
  REQUIRE(run("--out " + pod.string() + " pod --rank 3 --input " + (coarse_data() / "snapshots.mdm").string()) == 0);
  CHECK(json_file(pod / "pod.json")["variance_explained"][2].get<double>() >= 0.999);
  REQUIRE(run("--out " + s.string() + " sensors -p 3 --basis pod --library " + pod.string()) == 0);
  CHECK(json_file(s / "sensors.json")["source"] == "pod");
}
