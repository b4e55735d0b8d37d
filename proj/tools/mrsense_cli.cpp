#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mrsense/commands.hpp"
#include "mrsense/diagnostics.hpp"

using namespace mrsense;

namespace {

template <typename T>
void apply(const std::optional<T>& value, T& target) {
  if (value) target = *value;
}

struct Overrides {
  std::optional<std::string> config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<Index> threads;

  std::optional<std::string> preset;
  std::optional<double> dt;
  std::optional<std::string> input;
  std::optional<double> input_dt;
  std::optional<double> input_t0;
  std::optional<Index> levels;
  std::optional<double> rho;
  std::optional<Index> delays;
  std::optional<Index> rank;
  std::optional<double> energy;
  std::optional<Index> stride;
  bool exact = false;
  bool all_snapshots = false;
  bool center = false;
  std::optional<std::string> basis;
  std::optional<std::string> library;
  std::optional<Index> sensors;
  std::optional<double> alpha_threshold;
  std::optional<Index> top_per_level;
  std::optional<double> rank_cut;
  std::optional<std::string> sensor_file;
  std::optional<std::string> measurements;
  std::optional<double> sigma;
  std::optional<std::string> solver;
  std::optional<std::string> tree;
  std::vector<double> times;
  std::optional<Index> trials;
  std::string experiment;
};

RunConfig resolve(const Overrides& o, const std::string& command) {
  RunConfig c = o.config_path ? load_config(*o.config_path) : RunConfig{};
  apply(o.seed, c.seed);
  apply(o.out, c.out);
  apply(o.threads, c.threads);
  apply(o.preset, c.preset);
  apply(o.dt, c.dt);
  apply(o.input, c.input);
  apply(o.input_dt, c.input_dt);
  apply(o.input_t0, c.input_t0);
  apply(o.levels, c.mrdmd.levels);
  apply(o.rho, c.mrdmd.rho);
  if (o.delays) {
    if (command == "dmd") c.dmd_delays = *o.delays;
    else c.mrdmd.delays = *o.delays;
  }
  if (o.rank) {
    if (command == "pod") c.pod_rank = *o.rank;
    else c.mrdmd.truncation = SvdTruncation::fixed_rank(*o.rank, c.mrdmd.truncation.cap);
  }
  if (o.energy) c.mrdmd.truncation = SvdTruncation::energy(*o.energy, c.mrdmd.truncation.cap);
  apply(o.stride, c.mrdmd.stride);
  if (o.exact) {
    c.dmd_forward_backward = false;
    c.mrdmd.forward_backward = false;
  }
  if (o.all_snapshots) c.mrdmd.amplitude_fit = AmplitudeFit::AllSnapshots;
  if (o.center) c.pod_center = true;
  apply(o.basis, c.basis);
  apply(o.library, c.library);
  apply(o.sensors, c.sensors);
  if (o.alpha_threshold) c.alpha = AlphaFilter::amplitude(*o.alpha_threshold);
  if (o.top_per_level) c.alpha = AlphaFilter::top_per_level(*o.top_per_level);
  apply(o.rank_cut, c.rank_cut);
  apply(o.sensor_file, c.sensor_file);
  apply(o.measurements, c.measurements);
  apply(o.sigma, c.sigma);
  if (o.solver) {
    if (*o.solver == "admm") c.solver = SparseSolver::Admm;
    else if (*o.solver == "omp") c.solver = SparseSolver::MatchingPursuit;
    else throw ConfigError("solver must be admm or omp");
  }
  apply(o.tree, c.tree);
  if (!o.times.empty()) c.times = o.times;
  apply(o.trials, c.trials);
  c.mrdmd.threads = c.threads;
  c.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multiresolution DMD, sensor placement and sparse state estimation"};
  app.require_subcommand(1);
  Overrides o;
  app.add_option("--config", o.config_path, "JSON run configuration");
  app.add_option("--seed", o.seed, "Root seed");
  app.add_option("--out", o.out, "Output directory");
  app.add_option("--threads", o.threads, "Worker threads");

  auto* generate = app.add_subcommand("generate", "Write a synthetic snapshot matrix and its ground truth");
  generate->add_option("--preset", o.preset, "table1 | multiscale");
  generate->add_option("--dt", o.dt, "Time step override");

  const auto input_options = [&](CLI::App* sub) {
    sub->add_option("--input", o.input, "Snapshot matrix file");
    sub->add_option("--input-dt", o.input_dt, "Time step; 0 uses the file's sampling record");
    sub->add_option("--input-t0", o.input_t0, "Start time when --input-dt is given");
  };
  auto* dmd = app.add_subcommand("dmd", "DMD of a whole snapshot matrix");
  input_options(dmd);
  dmd->add_option("--delays", o.delays, "Time-delay copies");
  dmd->add_option("--rank", o.rank, "Fixed truncation rank");
  dmd->add_option("--energy", o.energy, "Energy fraction truncation");
  dmd->add_flag("--exact", o.exact, "Exact DMD instead of forward-backward");
  dmd->add_flag("--fit-all", o.all_snapshots, "Fit amplitudes against every snapshot");

  auto* mrdmd = app.add_subcommand("mrdmd", "Multiresolution decomposition, library and amplitude map");
  input_options(mrdmd);
  mrdmd->add_option("--levels", o.levels, "Number of levels L");
  mrdmd->add_option("--rho", o.rho, "Slow cutoff in cycles per bin");
  mrdmd->add_option("--delays", o.delays, "Time-delay copies per node");
  mrdmd->add_option("--rank", o.rank, "Fixed truncation rank per node");
  mrdmd->add_option("--energy", o.energy, "Energy fraction truncation per node");
  mrdmd->add_option("--stride", o.stride, "Snapshot decimation per node");
  mrdmd->add_flag("--exact", o.exact, "Exact DMD instead of forward-backward");
  mrdmd->add_flag("--fit-all", o.all_snapshots, "Fit amplitudes against every snapshot");

  auto* pod = app.add_subcommand("pod", "POD modes and variance spectrum");
  input_options(pod);
  pod->add_option("--rank", o.rank, "Number of modes");
  pod->add_flag("--center", o.center, "Subtract the temporal mean");

  const auto basis_options = [&](CLI::App* sub) {
    sub->add_option("--library", o.library, "Directory written by mrdmd or pod");
    sub->add_option("--basis", o.basis, "mrdmd | pod");
    sub->add_option("--alpha-threshold", o.alpha_threshold, "Keep library columns with |b| >= T");
    sub->add_option("--top-per-level", o.top_per_level, "Keep the k largest columns per level");
    sub->add_option("--rank-cut", o.rank_cut, "Relative cut for real-ifying complex modes");
  };
  auto* sensors = app.add_subcommand("sensors", "Greedy QR sensor placement");
  basis_options(sensors);
  sensors->add_option("-p,--sensors", o.sensors, "Number of sensors");

  auto* estimate = app.add_subcommand("estimate", "Sparse coefficient estimation from sensor series");
  basis_options(estimate);
  estimate->add_option("--sensor-file", o.sensor_file, "sensors.json");
  estimate->add_option("--measurements", o.measurements, "p x T measurement matrix file");
  estimate->add_option("--sigma", o.sigma, "Noise standard deviation");
  estimate->add_option("--solver", o.solver, "admm | omp");

  auto* reconstruct = app.add_subcommand("reconstruct", "Evaluate a stored mrDMD tree");
  reconstruct->add_option("--tree", o.tree, "Directory written by mrdmd");
  reconstruct->add_option("--times", o.times, "Times to evaluate; default every snapshot");

  auto* experiment = app.add_subcommand("experiment", "Named experiment runner");
  experiment->add_option("name", o.experiment, "noise-study | coef-tracking | reconstruction | ensemble")->required();
  experiment->add_option("--trials", o.trials, "Trials per noise level");
  experiment->add_option("--sensors", o.sensors, "Sensors per window (ensemble)");
  experiment->add_option("--dt", o.dt, "Time step override");
  experiment->add_option("--sigma", o.sigma, "Noise standard deviation (reconstruction)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    const RunConfig config = resolve(o, command);
    if (command == "generate") cmd_generate(config);
    else if (command == "dmd") cmd_dmd(config);
    else if (command == "mrdmd") cmd_mrdmd(config);
    else if (command == "pod") cmd_pod(config);
    else if (command == "sensors") cmd_sensors(config);
    else if (command == "estimate") cmd_estimate(config);
    else if (command == "reconstruct") cmd_reconstruct(config);
    else cmd_experiment(o.experiment, config);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
