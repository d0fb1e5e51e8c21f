#pragma once

// Data pipeline for the image segmentation experiments: binary images,
// Hilbert curve serialization, synthetic corruption, label masking, Netpbm
// I/O, synthetic shapes, and the sequence archive format.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace tmcseg::data {

/// Label values: 0 is omega_1 (background, white), 1 is omega_2 (foreground, black).
using Label = std::uint8_t;

struct BinaryImage {
  std::size_t side = 0;
  std::vector<Label> pixels;  // row-major, side*side

  BinaryImage() = default;
  BinaryImage(std::size_t side, Label fill);

  Label& at(std::size_t row, std::size_t col) { return pixels[row * side + col]; }
  Label at(std::size_t row, std::size_t col) const { return pixels[row * side + col]; }
  double foreground_fraction() const;
  bool operator==(const BinaryImage&) const = default;
};

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major

  GrayImage() = default;
  GrayImage(std::size_t width, std::size_t height, std::uint8_t fill);

  std::uint8_t& at(std::size_t row, std::size_t col) { return pixels[row * width + col]; }
  std::uint8_t at(std::size_t row, std::size_t col) const { return pixels[row * width + col]; }
};

struct Cell {
  std::size_t row = 0;
  std::size_t col = 0;
  bool operator==(const Cell&) const = default;
};

/// Hilbert curve over a 2^order x 2^order grid. Index 0 is cell (0,0), the
/// last index is cell (side-1, 0), and consecutive indices are 4-adjacent.
class HilbertMap {
 public:
  static constexpr int kMaxOrder = 12;

  explicit HilbertMap(int order);

  int order() const noexcept { return order_; }
  std::size_t side() const noexcept { return side_; }
  std::size_t size() const noexcept { return cells_.size(); }
  Cell cell(std::size_t index) const {
    const std::uint32_t packed = cells_.at(index);
    return Cell{packed >> 16, packed & 0xffffu};
  }
  std::size_t index(Cell c) const;

 private:
  int order_;
  std::size_t side_;
  std::vector<std::uint32_t> cells_;  // row << 16 | col
  std::vector<std::uint32_t> inverse_;
};

/// Smallest k >= 1 with 2^k >= side.
int order_for_side(std::size_t side);

std::vector<Label> image_to_sequence(const BinaryImage& img, const HilbertMap& map);
BinaryImage sequence_to_image(std::span<const Label> labels, const HilbertMap& map);

enum class NoiseKind : std::uint8_t { CattleSin, CamelMult };

std::string to_string(NoiseKind kind);
NoiseKind noise_kind_from_string(std::string_view s);

/// Per-class corruption parameters.
///   cattle_sin: x_t ~ N(sin(a[y_t] + x_{t-1}), scale[y_t]^2), x_{-1} = 0
///   camel_mult: x_t = G_t * Z_t, G_t ~ N(a[y_t], scale[y_t]^2), Z_t ~ N(0,1)
struct NoiseSpec {
  NoiseKind kind = NoiseKind::CattleSin;
  std::vector<double> a;
  std::vector<double> scale;
  std::uint64_t seed = 0;

  static NoiseSpec cattle_preset(std::uint64_t seed);
  static NoiseSpec camel_preset(std::uint64_t seed);
  void validate() const;
};

std::vector<double> synthesize_noise(std::span<const Label> labels, const NoiseSpec& spec);

enum class Slot : std::uint8_t { Observed, Unobserved };

/// Exactly round(fraction * n) positions unobserved, drawn uniformly without replacement.
std::vector<Slot> mask_labels(std::size_t n, double fraction_unobserved, std::uint64_t seed);

struct Standardization {
  double mean = 0.0;
  double scale = 1.0;

  double apply(double raw) const { return (raw - mean) / scale; }
  double invert(double standardized) const { return standardized * scale + mean; }
};

/// Centers and scales xs in place to zero mean, unit variance; returns the transform.
Standardization standardize(std::span<double> xs);

struct Provenance {
  std::size_t side = 0;
  int order = 0;
  std::optional<NoiseSpec> noise;
  std::uint64_t mask_seed = 0;
  double fraction_unobserved = 0.0;
  std::string source;
};

/// Observations with per-step labels that are either observed (index set L)
/// or masked (index set U). Ground truth is retained for scoring only.
struct LabeledSequence {
  std::size_t d_x = 1;
  std::size_t num_labels = 2;
  std::vector<double> xs;  // (T+1) * d_x
  std::vector<Label> truth;
  std::vector<Slot> mask;
  Standardization standardization;
  Provenance provenance;

  std::size_t length() const noexcept { return mask.size(); }
  std::span<const double> x(std::size_t t) const { return {xs.data() + t * d_x, d_x}; }
  bool observed(std::size_t t) const { return mask[t] == Slot::Observed; }
  /// Observed label at t; ContractError when t is masked.
  Label observed_label(std::size_t t) const;
  std::vector<std::size_t> unobserved_indices() const;
  std::vector<std::size_t> observed_indices() const;
  void validate() const;
};

/// Full pipeline for one image: Hilbert serialization, corruption, masking and
/// standardization of the observations.
LabeledSequence make_sequence(const BinaryImage& img, const NoiseSpec& noise, double fraction_unobserved,
                              std::uint64_t mask_seed, std::string source = {});

void write_archive(std::ostream& os, const LabeledSequence& seq);
LabeledSequence read_archive(std::istream& is);
void save_archive(const std::filesystem::path& path, const LabeledSequence& seq);
LabeledSequence load_archive(const std::filesystem::path& path);

/// Reads P1/P4 (PBM) or P2/P5 (PGM). Dark pixels become omega_2; grayscale is
/// thresholded at half of maxval. Non-square or non-power-of-two images are
/// centered on a white (omega_1) canvas of the next power-of-two side.
BinaryImage parse_netpbm(std::string_view bytes);
BinaryImage load_bitmap(const std::filesystem::path& path);
/// Plain PBM (P1), one row per line.
void save_bitmap(const BinaryImage& img, const std::filesystem::path& path);
std::string format_pbm(const BinaryImage& img);
/// Binary PGM (P5), maxval 255.
void save_pgm(const GrayImage& img, const std::filesystem::path& path);

enum class ShapeKind : std::uint8_t { Disk, Blob, Polygon };

std::string to_string(ShapeKind kind);
ShapeKind shape_kind_from_string(std::string_view s);

/// Filled disk; pixels whose centers lie within radius of (center_row, center_col).
BinaryImage draw_disk(std::size_t side, double center_row, double center_col, double radius);
/// A single 4-connected foreground region covering 20-60% of the grid.
BinaryImage generate_shape(ShapeKind kind, std::size_t side, std::uint64_t seed);
/// Number of 4-connected foreground components.
std::size_t count_components(const BinaryImage& img);

}  // namespace tmcseg::data
