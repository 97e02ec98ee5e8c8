#pragma once

// JSON and CSV encodings of networks, configs and reports. Field and column
// order is fixed; doubles are written with round-trip precision and
// non-finite values as the strings "inf", "-inf" and "nan".

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowprune/conservation.hpp"
#include "flowprune/harness.hpp"

namespace flowprune {

using json = nlohmann::ordered_json;

enum class Format { Csv, Json };
Format format_from_string(const std::string& name);

std::string format_double(double value);

json to_json(const NetworkSpec& spec);
/// Accepts a zoo name or {"input_shape": [...], "layers": [...]}.
NetworkSpec network_from_json(const json& j);

json to_json(const Mask& mask);
Mask mask_from_json(const json& j);

json to_json(const PruneReport& report);
PruneReport prune_report_from_json(const json& j);
/// iteration,layer,remaining,total,prune_size,min_cut_size
std::string prune_report_csv(const PruneReport& report);

json to_json(const SweepReport& report);
SweepReport sweep_report_from_json(const json& j);
/// One row per cell.
std::string sweep_cells_csv(const SweepReport& report);
/// One row per (cell, layer): remaining fraction.
std::string sweep_layers_csv(const SweepReport& report);
std::string sweep_summary_csv(const SweepReport& report);

json to_json(const ConservationReport& report);
std::string units_csv(const ConservationReport& report);
std::string cuts_csv(const ConservationReport& report);
json to_json(const ScoreSizeLaw& law);
std::string score_size_csv(const std::vector<ScoreSizeLaw>& laws);
json to_json(const FlowConservationTrace& trace);
std::string flow_csv(const FlowConservationTrace& trace);
json to_json(const FlowScalingCheck& check);
json to_json(const BatchNormReport& report);
std::string batchnorm_csv(const BatchNormReport& report);
json to_json(const PassCount& count);

json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const json& j);
json to_json(const ExperimentConfig& config);
/// Unknown keys are rejected.
ExperimentConfig experiment_from_json(const json& j);
ExperimentConfig load_experiment(const std::filesystem::path& path);

std::string dump(const json& j);
/// Creates parent directories; throws std::runtime_error when the file cannot be written.
void write_file(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

}  // namespace flowprune
