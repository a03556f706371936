#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssf/pipeline.hpp"

namespace ssf {

/// Complete default configuration for a dataset preset, as JSON.
nlohmann::json default_config_json(DatasetName dataset);

/// Merges `user` over the preset defaults (unknown keys rejected), applies
/// `key=value` overrides (dotted path, or a leaf name that is unique) and
/// converts to a validated ExperimentConfig. Errors name the offending key.
ExperimentConfig config_from_json(const nlohmann::json& user, const std::vector<std::string>& overrides = {},
                                  std::optional<DatasetName> dataset = std::nullopt);

/// Reads a JSON file and calls config_from_json.
ExperimentConfig parse_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {},
                              std::optional<DatasetName> dataset = std::nullopt);

nlohmann::json config_to_json(const ExperimentConfig& config);

nlohmann::json metrics_to_json(const Metrics& m);
nlohmann::json report_to_json(const RunReport& report);

/// cycle,drifted,p_value,acc,pre,rec,f1,manual_labels,pseudo_labels,dropped
std::string cycles_csv(const RepetitionReport& rep);
std::string summary_text(const RunReport& report, const std::string& title = "SSF");

/// Writes `content` to a temporary sibling and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

/// run.json, cycles.csv (first repetition; cycles_rep<i>.csv for the rest)
/// and summary.txt under out_dir.
void emit_report(const RunReport& report, const std::filesystem::path& out_dir);

}  // namespace ssf
