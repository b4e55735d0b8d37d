#include <bit>
#include <cstring>
#include <cmath>
#include <filesystem>
#include <limits>
#include <random>

#include "doctest.h"
#include "mrsense/commands.hpp"
#include "mrsense/config.hpp"
#include "mrsense/datagen.hpp"
#include "mrsense/diagnostics.hpp"
#include "mrsense/io.hpp"
#include "oracles.hpp"

using namespace mrsense;
namespace fs = std::filesystem;

namespace {

bool bit_equal(const RealMatrix& a, const RealMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (Index i = 0; i < a.size(); ++i) {
    if (std::bit_cast<std::uint64_t>(a.data()[i]) != std::bit_cast<std::uint64_t>(b.data()[i])) return false;
  }
  return true;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "mrsense_test_io";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("mdm1: header layout") {
  RealMatrix A(2, 3);
  A << 1, 2, 3, 4, 5, 6;
  const std::string bytes = encode_matrix(MatrixFile{A, {}, {}});
  REQUIRE(bytes.size() == 4 + 16 + 8 * 6);
  CHECK(bytes.substr(0, 4) == "MDM1");
  CHECK(static_cast<unsigned char>(bytes[4]) == 2);
  CHECK(static_cast<unsigned char>(bytes[12]) == 3);
  // column-major: the second stored value is A(1, 0) = 4
  double second = 0.0;
  std::memcpy(&second, bytes.data() + 28, 8);
  CHECK(second == 4.0);
}

TEST_CASE("mdm1: bit-exact round trip with mask and provenance") {
  std::mt19937_64 rng(1);
  RealMatrix A = oracle::random_matrix(7, 5, rng);
  A(0, 0) = -0.0;
  A(1, 1) = std::numeric_limits<double>::denorm_min();
  A(2, 2) = std::numeric_limits<double>::infinity();
  A(3, 3) = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::uint8_t> mask(35, 1);
  mask[3 + 3 * 7] = 0;
  const MatrixFile in{A, mask, R"({"sampling":{"dt":0.01}})"};
  const fs::path path = scratch("round.mdm");
  write_matrix_file(path, in);
  const MatrixFile out = read_matrix_file(path);
  CHECK(bit_equal(in.data, out.data));
  CHECK(out.mask == mask);
  CHECK(out.provenance == in.provenance);
  CHECK(encode_matrix(out) == encode_matrix(in));

  const MatrixFile plain = decode_matrix(encode_matrix(MatrixFile{RealMatrix::Zero(0, 4), {}, {}}));
  CHECK(plain.data.rows() == 0);
  CHECK(plain.data.cols() == 4);
}

TEST_CASE("mdm1: malformed inputs are rejected") {
  RealMatrix A = RealMatrix::Ones(2, 2);
  const std::string good = encode_matrix(MatrixFile{A, {}, "{}"});
  CHECK_THROWS_AS(decode_matrix(good.substr(0, 10)), ConfigError);
  CHECK_THROWS_AS(decode_matrix("MDM2" + good.substr(4)), ConfigError);
  CHECK_THROWS_AS(decode_matrix(good.substr(0, 40)), ConfigError);
  CHECK_THROWS_AS(decode_matrix(good + "x"), ConfigError);
  CHECK_THROWS_AS(decode_matrix(good.substr(0, good.size() - 1)), ConfigError);
  std::string flags = encode_matrix(MatrixFile{A, {}, {}});
  flags.push_back(static_cast<char>(0x4));
  CHECK_THROWS_AS(decode_matrix(flags), ConfigError);

  A(0, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(encode_matrix(MatrixFile{A, {}, {}}), ConfigError);
  CHECK_THROWS_AS(encode_matrix(MatrixFile{A, {1, 1, 1, 1}, {}}), ConfigError);
  CHECK_NOTHROW(encode_matrix(MatrixFile{A, {1, 1, 0, 1}, {}}));
  CHECK_THROWS_AS(encode_matrix(MatrixFile{A, {1, 1}, {}}), ConfigError);
  CHECK_THROWS_AS(read_matrix_file(scratch("missing.mdm")), ConfigError);
}

TEST_CASE("sha256 and double formatting") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng) * std::pow(10.0, static_cast<int>(rng() % 40) - 20);
    CHECK(std::stod(format_double(v)) == v);
  }
  CHECK(format_double(0.1) == "0.1");
}

TEST_CASE("config: defaults validate and survive a JSON round trip") {
  const RunConfig def;
  CHECK_NOTHROW(def.validate());
  CHECK(def.mrdmd.levels == 4);
  CHECK(def.mrdmd.rho == 1.0);
  CHECK(def.sensors == 3);
  const RunConfig back = RunConfig::from_json(def.to_json());
  CHECK(back.to_json().dump() == def.to_json().dump());

  RunConfig custom;
  custom.mrdmd.levels = 2;
  custom.mrdmd.truncation = SvdTruncation::fixed_rank(5);
  custom.alpha = AlphaFilter::explicit_bins({{1, 1}, {2, 2}});
  custom.solver = SparseSolver::MatchingPursuit;
  custom.times = {0.5, 1.25};
  custom.seed = 99;
  const Json j = custom.to_json();
  CHECK(RunConfig::from_json(j).to_json().dump() == j.dump());
}

TEST_CASE("config: strict parsing and validation") {
  CHECK_THROWS_AS(RunConfig::from_json(Json{{"levles", 3}}), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(Json{{"alpha", {{"mode", "amplitude"}, {"tresh", 1}}}}), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(Json{{"truncation", {{"mode", "svht"}}}}), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(Json{{"levels", "four"}}), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(Json{{"levels", 0}}), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(Json{{"sensors", 0}}), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(Json{{"sigma", -1.0}}), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(Json{{"rank_cut", 1.0}}), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(Json{{"preset", "cylinder"}}), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(Json{{"solver", "lasso"}}), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(Json{{"variances", Json::array()}}), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(Json::array()), ConfigError);
  const RunConfig c = RunConfig::from_json(Json{{"levels", 3}, {"threads", 2}});
  CHECK(c.mrdmd.levels == 3);
  CHECK(c.mrdmd.threads == 2);
  CHECK(c.sensors == 3);

  const fs::path bad = scratch("bad.json");
  write_bytes(bad, "{ levels: 3 ");
  CHECK_THROWS_AS(load_config(bad), ConfigError);
  const fs::path good = scratch("good.json");
  write_bytes(good, R"({"levels": 2, "seed": 7})");
  CHECK(load_config(good).seed == 7);
}

TEST_CASE("tree and library documents replay bit-exactly") {
  VideoSpec spec = table1_spec();
  spec.grid = Grid{24, 24, -5, 5, -5, 5};
  spec.dt = 0.02;
  const SnapshotMatrix data = generate_video(spec);
  MrDmdOptions opts;
  opts.levels = 3;
  const MrDmdTree tree = mrdmd_decompose(data, opts);
  const MrDmdTree back = tree_from_json(Json::parse(tree_to_json(tree).dump()), tree_modes(tree));
  REQUIRE(back.nodes.size() == tree.nodes.size());
  RealVector times(4);
  times << 0.0, 1.37, 4.0, 9.99;
  CHECK(bit_equal(mrdmd_reconstruct(tree, times), mrdmd_reconstruct(back, times)));
  const ModeLibrary lib = build_library(tree);
  const ModeLibrary lib2 = library_from_json(Json::parse(library_to_json(lib).dump()), stack_complex(lib.matrix));
  CHECK(bit_equal(stack_complex(lib.matrix), stack_complex(lib2.matrix)));
  REQUIRE(lib2.meta.size() == lib.meta.size());
  for (size_t i = 0; i < lib.meta.size(); ++i) {
    CHECK(lib2.meta[i].frequency == lib.meta[i].frequency);
    CHECK(lib2.meta[i].amplitude == lib.meta[i].amplitude);
    CHECK(lib2.meta[i].repeat == lib.meta[i].repeat);
  }
  CHECK_THROWS_AS(tree_from_json(Json{{"levels", 2}}, tree_modes(tree)), ConfigError);
  CHECK_THROWS_AS(library_from_json(library_to_json(lib), RealMatrix::Zero(lib.states(), 2)), ConfigError);
}

TEST_CASE("snapshot loading takes sampling from provenance") {
  const fs::path path = scratch("snaps.mdm");
  write_matrix_file(path, MatrixFile{RealMatrix::Ones(3, 5), {}, R"({"sampling":{"dt":0.25,"t0":1.0}})"});
  RunConfig c;
  c.input = path.string();
  const SnapshotMatrix s = load_snapshots(c);
  CHECK(s.dt == 0.25);
  CHECK(s.t0 == 1.0);
  c.input_dt = 0.5;
  CHECK(load_snapshots(c).dt == 0.5);
  write_matrix_file(path, MatrixFile{RealMatrix::Ones(3, 5), {}, {}});
  c.input_dt = 0.0;
  CHECK_THROWS_AS(load_snapshots(c), ConfigError);
  write_matrix_file(path, MatrixFile{RealMatrix::Ones(3, 5), std::vector<std::uint8_t>(15, 0), R"({"sampling":{"dt":1,"t0":0}})"});
  CHECK_THROWS_AS(load_snapshots(c), ConfigError);
  c.input.clear();
  CHECK_THROWS_AS(load_snapshots(c), ConfigError);
}

TEST_CASE("provenance has no volatile fields") {
  const fs::path path = scratch("prov.bin");
  write_bytes(path, "abc");
  RunConfig c;
  const Json a = provenance(c, {path}, Json{{"sampling", {{"dt", 0.01}}}});
  const Json b = provenance(c, {path}, Json{{"sampling", {{"dt", 0.01}}}});
  CHECK(a.dump() == b.dump());
  CHECK(a["inputs"][0]["sha256"] == sha256_hex("abc"));
  CHECK(a["config"]["levels"] == 4);
  CHECK(a["sampling"]["dt"] == 0.01);
}
