#pragma once

// JSON run configuration shared by all subcommands. Every section is optional
// and unknown keys are rejected at every level.
//
// {
//   "name": "camel40",
//   "data":    {"shape": "polygon", "side": 64, "shape_seed": 11, "bitmap": null,
//               "noise": "camel", "a": [0, 0.5], "scale": [0.2, 0.2], "seed": 21,
//               "fraction_unobserved": 0.4, "mask_seed": 31},
//   "archive": "runs/camel40/archive.txt",
//   "model":   {"kind": "dmtmc", ...},
//   "train":   {"epochs": 300, "learning_rate": 0.003, ...},
//   "segment": {"samples": 20, "seed": 7},
//   "repro":   {"scenarios": [{"label": "Camel 40%", "id": "camel40", "data": {...}}, ...],
//               "models": ["vsl", "svrnn", "dmtmc"], "seeds": [1, 2, 3]}
// }

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tmcseg/data.hpp"
#include "tmcseg/inference.hpp"
#include "tmcseg/models.hpp"

namespace tmcseg::cli {

struct DataSpec {
  data::ShapeKind shape = data::ShapeKind::Blob;
  std::size_t side = 64;
  std::uint64_t shape_seed = 11;
  std::optional<std::filesystem::path> bitmap;
  data::NoiseKind noise = data::NoiseKind::CattleSin;
  std::optional<std::vector<double>> a;
  std::optional<std::vector<double>> scale;
  std::uint64_t seed = 21;
  double fraction_unobserved = 0.4;
  std::uint64_t mask_seed = 31;

  data::NoiseSpec noise_spec() const;
};

struct SegmentSpec {
  std::size_t samples = 20;
  std::uint64_t seed = 7;
};

struct Scenario {
  std::string label;
  std::string id;
  DataSpec data;
};

struct ReproSpec {
  std::vector<Scenario> scenarios;
  std::vector<models::ModelKind> models;
  std::vector<std::uint64_t> seeds;
};

struct RunConfig {
  std::string name = "run";
  DataSpec data;
  std::optional<std::filesystem::path> archive;
  nlohmann::json model = nlohmann::json::object();
  inference::TrainConfig train;
  SegmentSpec segment;
  ReproSpec repro;

  /// Model configuration for kind: its preset overlaid with the "model" section (whose kind, if given, must match).
  models::TmcConfig model_config(models::ModelKind kind) const;
  models::ModelKind model_kind() const;
};

/// The three reference scenarios: cattle-like blob at 40%, camel-like polygon at 40% and 60% unobserved.
std::vector<Scenario> default_scenarios();
inference::TrainConfig default_train_config();

DataSpec data_spec_from_json(const nlohmann::json& j);
nlohmann::json data_spec_to_json(const DataSpec& d);
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json run_config_to_json(const RunConfig& c);
/// Throws ConfigError when the file cannot be read or parsed.
RunConfig load_run_config(const std::filesystem::path& path);

/// Invalid configuration or input; mapped to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tmcseg::cli
