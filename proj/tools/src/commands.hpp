#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "run_config.hpp"
#include "tmcseg/data.hpp"
#include "tmcseg/eval.hpp"

namespace tmcseg::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;

/// Parses argv, runs one subcommand and maps failures to exit codes.
int run(int argc, const char* const* argv);

/// Image for a data spec: the bitmap when given, otherwise a generated shape.
data::BinaryImage build_image(const DataSpec& spec);
data::LabeledSequence build_sequence(const DataSpec& spec);

/// Writes archive.txt, config.json and images/{truth.pbm, observations.pgm, mask.pgm} into dir.
data::LabeledSequence cmd_gen_data(const RunConfig& cfg, const std::filesystem::path& dir);

/// Trains the configured model on the archive; writes checkpoint.json, trace.csv and config.json into dir.
void cmd_train(const RunConfig& cfg, const std::filesystem::path& archive, const std::filesystem::path& dir);

/// Decodes the archive with each checkpoint; writes results/<kind>.{csv,json}, images/<kind>.pbm and images/panel.pgm.
std::vector<eval::SegmentationResult> cmd_segment(const std::vector<std::filesystem::path>& checkpoints,
                                                  const std::filesystem::path& archive, const SegmentSpec& spec,
                                                  const std::filesystem::path& dir);

struct CellResult {
  std::string label;
  std::string scenario;
  models::ModelKind kind = models::ModelKind::Dmtmc;
  std::uint64_t seed = 0;
  std::optional<double> error_rate;
  double final_elbo = 0.0;
  double seconds = 0.0;
  std::vector<data::Label> decoded;
  std::string error;
};

struct ReproReport {
  std::vector<CellResult> cells;
  /// Best (lowest) error rate over seeds for every scenario and model with at least one finished cell.
  std::vector<eval::TableCell> best;
  bool complete = true;
};

/// Trains and scores every scenario x model x seed cell, skipping cells whose
/// results already exist; writes table.csv, table.txt, per_seed.csv and panels.
ReproReport cmd_repro_table(const RunConfig& cfg, const std::filesystem::path& dir, std::size_t jobs);

/// Fits an HMM to the labeled part of the archive and decodes U by forward-backward.
double cmd_oracle(const std::filesystem::path& archive, const std::filesystem::path& dir);

}  // namespace tmcseg::cli
