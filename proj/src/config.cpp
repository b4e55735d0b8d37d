#include "mrsense/config.hpp"

#include <cmath>
#include <set>

#include "mrsense/diagnostics.hpp"
#include "mrsense/io.hpp"

namespace mrsense {

namespace {

void reject_unknown(const Json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& item : j.items()) {
    if (!known.contains(item.key())) throw ConfigError("unknown key '" + item.key() + "' in " + where);
  }
}

template <typename T>
void read(const Json& j, const char* key, T& target) {
  if (!j.contains(key)) return;
  try {
    target = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid value for '") + key + "': " + e.what());
  }
}

std::string truncation_mode_name(SvdTruncation::Mode m) {
  switch (m) {
    case SvdTruncation::Mode::FixedRank: return "rank";
    case SvdTruncation::Mode::EnergyFraction: return "energy";
    case SvdTruncation::Mode::Threshold: return "threshold";
  }
  return "energy";
}

std::string alpha_mode_name(AlphaFilter::Mode m) {
  switch (m) {
    case AlphaFilter::Mode::AmplitudeThreshold: return "amplitude";
    case AlphaFilter::Mode::TopPerLevel: return "top_per_level";
    case AlphaFilter::Mode::Bins: return "bins";
    case AlphaFilter::Mode::TopPerFrequency: return "top_per_frequency";
  }
  return "amplitude";
}

}  // namespace

Json truncation_to_json(const SvdTruncation& t) {
  Json j;
  j["mode"] = truncation_mode_name(t.mode);
  j["value"] = t.value;
  j["cap"] = t.cap;
  return j;
}

SvdTruncation truncation_from_json(const Json& j) {
  reject_unknown(j, {"mode", "value", "cap"}, "truncation");
  SvdTruncation t;
  std::string mode = truncation_mode_name(t.mode);
  read(j, "mode", mode);
  if (mode == "rank") t.mode = SvdTruncation::Mode::FixedRank;
  else if (mode == "energy") t.mode = SvdTruncation::Mode::EnergyFraction;
  else if (mode == "threshold") t.mode = SvdTruncation::Mode::Threshold;
  else throw ConfigError("truncation mode must be rank, energy or threshold");
  read(j, "value", t.value);
  read(j, "cap", t.cap);
  t.validate();
  return t;
}

Json alpha_to_json(const AlphaFilter& f) {
  Json j;
  j["mode"] = alpha_mode_name(f.mode);
  j["threshold"] = f.threshold;
  j["k"] = f.top_k;
  Json bins = Json::array();
  for (const auto& [level, bin] : f.bins) bins.push_back({level, bin});
  j["bins"] = bins;
  j["frequency_tolerance"] = f.frequency_tolerance;
  j["frequency_floor"] = f.frequency_floor;
  j["min_relative_amplitude"] = f.min_relative_amplitude;
  return j;
}

AlphaFilter alpha_from_json(const Json& j) {
  reject_unknown(j, {"mode", "threshold", "k", "bins", "frequency_tolerance", "frequency_floor", "min_relative_amplitude"},
                 "alpha");
  AlphaFilter f;
  std::string mode = alpha_mode_name(f.mode);
  read(j, "mode", mode);
  if (mode == "amplitude") f.mode = AlphaFilter::Mode::AmplitudeThreshold;
  else if (mode == "top_per_level") f.mode = AlphaFilter::Mode::TopPerLevel;
  else if (mode == "bins") f.mode = AlphaFilter::Mode::Bins;
  else if (mode == "top_per_frequency") f.mode = AlphaFilter::Mode::TopPerFrequency;
  else throw ConfigError("alpha mode must be amplitude, top_per_level, bins or top_per_frequency");
  read(j, "threshold", f.threshold);
  read(j, "k", f.top_k);
  if (j.contains("bins")) {
    std::vector<std::vector<Index>> raw;
    read(j, "bins", raw);
    for (const auto& lb : raw) {
      if (lb.size() != 2) throw ConfigError("alpha bins must be [level, bin] pairs");
      f.bins.emplace_back(lb[0], lb[1]);
    }
  }
  read(j, "frequency_tolerance", f.frequency_tolerance);
  read(j, "frequency_floor", f.frequency_floor);
  read(j, "min_relative_amplitude", f.min_relative_amplitude);
  return f;
}

void RunConfig::validate() const {
  if (preset != "table1" && preset != "multiscale") throw ConfigError("unknown preset '" + preset + "' (presets: table1, multiscale)");
  if (!(dt >= 0.0) || !std::isfinite(dt)) throw ConfigError("dt must be >= 0");
  if (!(input_dt >= 0.0) || !std::isfinite(input_dt)) throw ConfigError("input_dt must be >= 0");
  if (!std::isfinite(input_t0)) throw ConfigError("input_t0 must be finite");
  mrdmd.validate();
  if (dmd_delays < 1) throw ConfigError("dmd_delays must be >= 1");
  if (pod_rank < 1) throw ConfigError("pod_rank must be >= 1");
  if (basis != "mrdmd" && basis != "pod") throw ConfigError("basis must be mrdmd or pod");
  if (alpha.top_k < 1) throw ConfigError("alpha k must be >= 1");
  if (!(alpha.threshold >= 0.0)) throw ConfigError("alpha threshold must be >= 0");
  if (!(rank_cut >= 0.0 && rank_cut < 1.0)) throw ConfigError("rank_cut must lie in [0, 1)");
  if (sensors < 1) throw ConfigError("sensors must be >= 1");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ConfigError("sigma must be >= 0");
  if (trials < 1) throw ConfigError("trials must be >= 1");
  if (variances.empty()) throw ConfigError("variances must not be empty");
  for (double v : variances) {
    if (!(v >= 0.0)) throw ConfigError("variances must be >= 0");
  }
  if (!(tracking_variance >= 0.0)) throw ConfigError("tracking_variance must be >= 0");
  if (test_samples < 1) throw ConfigError("test_samples must be >= 1");
  if (oversampled_sensors < 1) throw ConfigError("oversampled_sensors must be >= 1");
  if (ensemble_windows < 1) throw ConfigError("ensemble_windows must be >= 1");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (out.empty()) throw ConfigError("out must name a directory");
}

Json RunConfig::to_json() const {
  Json j;
  j["preset"] = preset;
  j["dt"] = dt;
  j["input"] = input;
  j["input_dt"] = input_dt;
  j["input_t0"] = input_t0;
  j["levels"] = mrdmd.levels;
  j["truncation"] = truncation_to_json(mrdmd.truncation);
  j["rho"] = mrdmd.rho;
  j["delays"] = mrdmd.delays;
  j["forward_backward"] = mrdmd.forward_backward;
  j["amplitude_fit"] = mrdmd.amplitude_fit == AmplitudeFit::FirstSnapshot ? "first" : "all";
  j["stride"] = mrdmd.stride;
  j["dmd_delays"] = dmd_delays;
  j["dmd_forward_backward"] = dmd_forward_backward;
  j["pod_rank"] = pod_rank;
  j["pod_center"] = pod_center;
  j["basis"] = basis;
  j["library"] = library;
  j["alpha"] = alpha_to_json(alpha);
  j["rank_cut"] = rank_cut;
  j["sensors"] = sensors;
  j["sensor_file"] = sensor_file;
  j["measurements"] = measurements;
  j["sigma"] = sigma;
  j["solver"] = solver == SparseSolver::Admm ? "admm" : "omp";
  j["tree"] = tree;
  j["times"] = times;
  j["trials"] = trials;
  j["variances"] = variances;
  j["tracking_variance"] = tracking_variance;
  j["test_samples"] = test_samples;
  j["oversampled_sensors"] = oversampled_sensors;
  j["ensemble_windows"] = ensemble_windows;
  j["ensemble_alpha"] = alpha_to_json(ensemble_alpha);
  j["seed"] = seed;
  j["out"] = out;
  j["threads"] = threads;
  return j;
}

RunConfig RunConfig::from_json(const Json& j) {
  reject_unknown(j,
                 {"preset", "dt", "input", "input_dt", "input_t0", "levels", "truncation", "rho", "delays",
                  "forward_backward", "amplitude_fit", "stride", "dmd_delays", "dmd_forward_backward", "pod_rank",
                  "pod_center", "basis", "library", "alpha", "rank_cut", "sensors", "sensor_file", "measurements",
                  "sigma", "solver", "tree", "times", "trials", "variances", "tracking_variance", "test_samples",
                  "oversampled_sensors", "ensemble_windows", "ensemble_alpha", "seed", "out", "threads"},
                 "config");
  RunConfig c;
  read(j, "preset", c.preset);
  read(j, "dt", c.dt);
  read(j, "input", c.input);
  read(j, "input_dt", c.input_dt);
  read(j, "input_t0", c.input_t0);
  read(j, "levels", c.mrdmd.levels);
  if (j.contains("truncation")) c.mrdmd.truncation = truncation_from_json(j.at("truncation"));
  read(j, "rho", c.mrdmd.rho);
  read(j, "delays", c.mrdmd.delays);
  read(j, "forward_backward", c.mrdmd.forward_backward);
  if (j.contains("amplitude_fit")) {
    std::string fit;
    read(j, "amplitude_fit", fit);
    if (fit == "first") c.mrdmd.amplitude_fit = AmplitudeFit::FirstSnapshot;
    else if (fit == "all") c.mrdmd.amplitude_fit = AmplitudeFit::AllSnapshots;
    else throw ConfigError("amplitude_fit must be first or all");
  }
  read(j, "stride", c.mrdmd.stride);
  read(j, "dmd_delays", c.dmd_delays);
  read(j, "dmd_forward_backward", c.dmd_forward_backward);
  read(j, "pod_rank", c.pod_rank);
  read(j, "pod_center", c.pod_center);
  read(j, "basis", c.basis);
  read(j, "library", c.library);
  if (j.contains("alpha")) c.alpha = alpha_from_json(j.at("alpha"));
  read(j, "rank_cut", c.rank_cut);
  read(j, "sensors", c.sensors);
  read(j, "sensor_file", c.sensor_file);
  read(j, "measurements", c.measurements);
  read(j, "sigma", c.sigma);
  if (j.contains("solver")) {
    std::string solver;
    read(j, "solver", solver);
    if (solver == "admm") c.solver = SparseSolver::Admm;
    else if (solver == "omp") c.solver = SparseSolver::MatchingPursuit;
    else throw ConfigError("solver must be admm or omp");
  }
  read(j, "tree", c.tree);
  read(j, "times", c.times);
  read(j, "trials", c.trials);
  read(j, "variances", c.variances);
  read(j, "tracking_variance", c.tracking_variance);
  read(j, "test_samples", c.test_samples);
  read(j, "oversampled_sensors", c.oversampled_sensors);
  read(j, "ensemble_windows", c.ensemble_windows);
  if (j.contains("ensemble_alpha")) c.ensemble_alpha = alpha_from_json(j.at("ensemble_alpha"));
  read(j, "seed", c.seed);
  read(j, "out", c.out);
  read(j, "threads", c.threads);
  c.mrdmd.threads = c.threads;
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  const std::string text = read_bytes(path);
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return RunConfig::from_json(j);
}

}  // namespace mrsense
