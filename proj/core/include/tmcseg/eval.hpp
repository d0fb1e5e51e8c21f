#pragma once

// Scoring and report artifacts: error rates on the unobserved positions,
// reconstructed segmentations, comparison panels and the error-rate table.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tmcseg/data.hpp"
#include "tmcseg/inference.hpp"
#include "tmcseg/models.hpp"

namespace tmcseg::eval {

struct RunMetadata {
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
  double seconds = 0.0;
};

struct SegmentationResult {
  models::ModelKind kind = models::ModelKind::Dmtmc;
  std::vector<data::Label> truth;
  std::vector<data::Slot> mask;
  /// One decoded label per unobserved position, in increasing t.
  std::vector<data::Label> decoded;
  RunMetadata meta;

  std::vector<std::size_t> unobserved() const;
  void validate() const;
};

SegmentationResult make_result(const data::LabeledSequence& seq, const inference::PosteriorLabels& post,
                               models::ModelKind kind, RunMetadata meta = {});

/// Fraction of unobserved positions decoded wrongly.
double error_rate(const SegmentationResult& r);

/// Decoded labels at U, observed labels at L.
data::BinaryImage render_segmentation(const SegmentationResult& r, const data::HilbertMap& map);
/// Truth at L (white/black), mid-gray at U.
data::GrayImage render_mask(std::span<const data::Label> truth, std::span<const data::Slot> mask,
                            const data::HilbertMap& map);
/// Observations mapped linearly from [min, max] to [0, 255].
data::GrayImage render_observations(std::span<const double> xs, const data::HilbertMap& map);
/// omega_1 white, omega_2 black.
data::GrayImage to_gray(const data::BinaryImage& img);

/// Tiles placed row by row, columns per row, on a white background with gap pixels between them.
data::GrayImage tile_grid(std::span<const data::GrayImage> tiles, std::size_t columns, std::size_t gap = 4);

struct TableCell {
  std::string scenario;
  models::ModelKind kind = models::ModelKind::Dmtmc;
  double error_rate = 0.0;
};

struct TableOptions {
  bool comma_decimal = false;
  bool include_reference = true;
};

/// Published error rate (percent) for the reference scenarios "Cattle 40%", "Camel 40%", "Camel 60%".
std::optional<double> reference_error_rate(models::ModelKind kind, const std::string& scenario);

/// Reference scenarios first in their published order, any others after them lexicographically.
std::vector<std::string> scenario_order(std::span<const TableCell> cells);

/// Comma-delimited: model,scenario,error_rate_percent[,reference_percent]. Missing cells are omitted.
std::string table_csv(std::span<const TableCell> cells, const TableOptions& opt = {});
/// Aligned text table with rows VSL, SVRNN, d-mTMC; missing cells shown as an em dash.
std::string table_text(std::span<const TableCell> cells, const TableOptions& opt = {});

}  // namespace tmcseg::eval
