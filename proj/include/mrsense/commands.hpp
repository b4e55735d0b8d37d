#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mrsense/config.hpp"
#include "mrsense/experiments.hpp"
#include "mrsense/io.hpp"

namespace mrsense {

/// {"tool", "config", "inputs": [{"path", "sha256"}]}; `extra` keys are
/// merged in. No timestamps, so reruns are byte-identical.
Json provenance(const RunConfig& config, const std::vector<std::filesystem::path>& inputs, const Json& extra = Json::object());

/// Complex n x r stored as the real n x 2r matrix [Re | Im].
RealMatrix stack_complex(const ComplexMatrix& A);
ComplexMatrix unstack_complex(const RealMatrix& A);

Json dmd_to_json(const DmdResult& res, Index mode_offset = 0);
Json mrdmd_options_to_json(const MrDmdOptions& options);
MrDmdOptions mrdmd_options_from_json(const Json& j);

Json tree_to_json(const MrDmdTree& tree);
/// Every node's modes side by side in node order, stacked as [Re | Im].
RealMatrix tree_modes(const MrDmdTree& tree);
MrDmdTree tree_from_json(const Json& j, const RealMatrix& modes);

Json library_to_json(const ModeLibrary& lib);
ModeLibrary library_from_json(const Json& j, const RealMatrix& modes);

std::string amplitude_map_csv(const std::vector<AmplitudeCell>& cells, const Json& prov);
Json sensors_to_json(const SensorSet& sensors);
SensorSet sensors_from_json(const Json& j);

/// Snapshots named by config.input. A zero input_dt takes the sampling
/// recorded in the file's provenance.
SnapshotMatrix load_snapshots(const RunConfig& config);

/// Real sensing basis from the library directory: the filtered, real-ified
/// mrDMD library or the leading POD modes.
RealMatrix load_basis(const RunConfig& config, std::vector<std::filesystem::path>* inputs = nullptr);

void cmd_generate(const RunConfig& config);
void cmd_dmd(const RunConfig& config);
void cmd_mrdmd(const RunConfig& config);
void cmd_pod(const RunConfig& config);
void cmd_sensors(const RunConfig& config);
void cmd_estimate(const RunConfig& config);
void cmd_reconstruct(const RunConfig& config);
/// Throws ConfigError listing the known runners for an unknown name.
void cmd_experiment(const std::string& name, const RunConfig& config);

}  // namespace mrsense
