#include "tmcseg/eval.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "tmcseg/errors.hpp"

namespace tmcseg::eval {

using models::ModelKind;

std::vector<std::size_t> SegmentationResult::unobserved() const {
  std::vector<std::size_t> out;
  for (std::size_t t = 0; t < mask.size(); ++t)
    if (mask[t] == data::Slot::Unobserved) out.push_back(t);
  return out;
}

void SegmentationResult::validate() const {
  if (truth.size() != mask.size()) throw ContractError("segmentation result: truth and mask lengths differ");
  if (decoded.size() != unobserved().size())
    throw ContractError("segmentation result: decoded labels do not match the unobserved set");
}

SegmentationResult make_result(const data::LabeledSequence& seq, const inference::PosteriorLabels& post,
                               ModelKind kind, RunMetadata meta) {
  if (post.decoded.size() != seq.length()) throw ContractError("make_result: decode length mismatch");
  SegmentationResult r;
  r.kind = kind;
  r.truth = seq.truth;
  r.mask = seq.mask;
  r.meta = meta;
  for (std::size_t t : seq.unobserved_indices()) r.decoded.push_back(post.decoded[t]);
  return r;
}

double error_rate(const SegmentationResult& r) {
  r.validate();
  const auto U = r.unobserved();
  if (U.empty()) throw ContractError("error_rate: no unobserved positions");
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < U.size(); ++i) wrong += r.decoded[i] != r.truth[U[i]];
  return static_cast<double>(wrong) / static_cast<double>(U.size());
}

data::BinaryImage render_segmentation(const SegmentationResult& r, const data::HilbertMap& map) {
  r.validate();
  if (r.truth.size() != map.size()) throw ContractError("render_segmentation: sequence length does not match the map");
  std::vector<data::Label> labels = r.truth;
  const auto U = r.unobserved();
  for (std::size_t i = 0; i < U.size(); ++i) labels[U[i]] = r.decoded[i];
  return data::sequence_to_image(labels, map);
}

data::GrayImage render_mask(std::span<const data::Label> truth, std::span<const data::Slot> mask,
                            const data::HilbertMap& map) {
  if (truth.size() != map.size() || mask.size() != map.size())
    throw ContractError("render_mask: sequence length does not match the map");
  data::GrayImage img(map.side(), map.side(), 128);
  for (std::size_t t = 0; t < map.size(); ++t) {
    if (mask[t] == data::Slot::Unobserved) continue;
    const auto c = map.cell(t);
    img.at(c.row, c.col) = truth[t] == 0 ? 255 : 0;
  }
  return img;
}

data::GrayImage render_observations(std::span<const double> xs, const data::HilbertMap& map) {
  if (xs.size() != map.size()) throw ContractError("render_observations: sequence length does not match the map");
  const auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
  const double range = *hi - *lo;
  data::GrayImage img(map.side(), map.side(), 0);
  for (std::size_t t = 0; t < map.size(); ++t) {
    const double v = range > 0.0 ? (xs[t] - *lo) / range : 0.5;
    const auto c = map.cell(t);
    img.at(c.row, c.col) = static_cast<std::uint8_t>(std::lround(255.0 * v));
  }
  return img;
}

data::GrayImage to_gray(const data::BinaryImage& img) {
  data::GrayImage out(img.side, img.side, 255);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) out.pixels[i] = img.pixels[i] == 0 ? 255 : 0;
  return out;
}

data::GrayImage tile_grid(std::span<const data::GrayImage> tiles, std::size_t columns, std::size_t gap) {
  if (tiles.empty() || columns == 0) throw ContractError("tile_grid: no tiles");
  std::size_t cell_w = 0, cell_h = 0;
  for (const auto& t : tiles) {
    cell_w = std::max(cell_w, t.width);
    cell_h = std::max(cell_h, t.height);
  }
  const std::size_t cols = std::min(columns, tiles.size());
  const std::size_t rows = (tiles.size() + cols - 1) / cols;
  data::GrayImage out(cols * cell_w + (cols - 1) * gap, rows * cell_h + (rows - 1) * gap, 255);
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    const std::size_t y0 = (i / cols) * (cell_h + gap);
    const std::size_t x0 = (i % cols) * (cell_w + gap);
    const auto& t = tiles[i];
    for (std::size_t r = 0; r < t.height; ++r)
      for (std::size_t c = 0; c < t.width; ++c) out.at(y0 + r, x0 + c) = t.at(r, c);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Table

namespace {

const std::vector<std::string>& reference_scenarios() {
  static const std::vector<std::string> s = {"Cattle 40%", "Camel 40%", "Camel 60%"};
  return s;
}

constexpr ModelKind kRowOrder[] = {ModelKind::Vsl, ModelKind::Svrnn, ModelKind::Dmtmc};

std::string percent(double v, const TableOptions& opt) {
  std::string s = fmt::format("{:.2f}", v);
  if (opt.comma_decimal) std::replace(s.begin(), s.end(), '.', ',');
  return s;
}

std::string quote_csv(const std::string& s) {
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

/// Display width counting UTF-8 code points.
std::size_t width_of(const std::string& s) {
  std::size_t n = 0;
  for (unsigned char c : s) n += (c & 0xC0) != 0x80;
  return n;
}

std::string pad(const std::string& s, std::size_t w, bool right) {
  const std::size_t n = width_of(s);
  if (n >= w) return s;
  const std::string fill(w - n, ' ');
  return right ? fill + s : s + fill;
}

}  // namespace

std::optional<double> reference_error_rate(ModelKind kind, const std::string& scenario) {
  static const std::map<ModelKind, std::vector<double>> table = {
      {ModelKind::Vsl, {15.64, 41.84, 41.80}},
      {ModelKind::Svrnn, {16.55, 12.12, 21.38}},
      {ModelKind::Dmtmc, {1.93, 2.60, 3.62}},
  };
  const auto& names = reference_scenarios();
  const auto it = std::find(names.begin(), names.end(), scenario);
  if (it == names.end()) return std::nullopt;
  return table.at(kind)[static_cast<std::size_t>(it - names.begin())];
}

std::vector<std::string> scenario_order(std::span<const TableCell> cells) {
  std::vector<std::string> out;
  for (const auto& name : reference_scenarios())
    if (std::any_of(cells.begin(), cells.end(), [&](const TableCell& c) { return c.scenario == name; }))
      out.push_back(name);
  std::vector<std::string> rest;
  for (const auto& c : cells)
    if (std::find(out.begin(), out.end(), c.scenario) == out.end() &&
        std::find(rest.begin(), rest.end(), c.scenario) == rest.end())
      rest.push_back(c.scenario);
  std::sort(rest.begin(), rest.end());
  out.insert(out.end(), rest.begin(), rest.end());
  return out;
}

namespace {

std::optional<double> lookup(std::span<const TableCell> cells, ModelKind kind, const std::string& scenario) {
  std::optional<double> v;
  for (const auto& c : cells)
    if (c.kind == kind && c.scenario == scenario) v = c.error_rate;
  return v;
}

}  // namespace

std::string table_csv(std::span<const TableCell> cells, const TableOptions& opt) {
  std::ostringstream os;
  os << "model,scenario,error_rate_percent";
  if (opt.include_reference) os << ",reference_percent";
  os << '\n';
  const auto scenarios = scenario_order(cells);
  // The decimal comma would collide with the delimiter, so CSV always uses a dot.
  const TableOptions dot{false, opt.include_reference};
  for (ModelKind kind : kRowOrder)
    for (const auto& sc : scenarios) {
      const auto v = lookup(cells, kind, sc);
      if (!v) continue;
      os << models::display_name(kind) << ',' << quote_csv(sc) << ',' << percent(100.0 * *v, dot);
      if (opt.include_reference) {
        os << ',';
        if (const auto ref = reference_error_rate(kind, sc)) os << percent(*ref, dot);
      }
      os << '\n';
    }
  return os.str();
}

std::string table_text(std::span<const TableCell> cells, const TableOptions& opt) {
  const auto scenarios = scenario_order(cells);
  std::vector<std::vector<std::string>> grid;
  std::vector<std::string> header = {"Model"};
  for (const auto& sc : scenarios) header.push_back(sc);
  grid.push_back(header);
  for (ModelKind kind : kRowOrder) {
    std::vector<std::string> row = {models::display_name(kind)};
    for (const auto& sc : scenarios) {
      const auto v = lookup(cells, kind, sc);
      std::string cell = v ? percent(100.0 * *v, opt) : "—";
      if (opt.include_reference)
        if (const auto ref = reference_error_rate(kind, sc)) cell += " (" + percent(*ref, opt) + ")";
      row.push_back(cell);
    }
    grid.push_back(row);
  }
  std::vector<std::size_t> widths(header.size(), 0);
  for (const auto& row : grid)
    for (std::size_t i = 0; i < row.size(); ++i) widths[i] = std::max(widths[i], width_of(row[i]));
  std::ostringstream os;
  for (std::size_t r = 0; r < grid.size(); ++r) {
    for (std::size_t i = 0; i < grid[r].size(); ++i) {
      if (i) os << "  ";
      os << pad(grid[r][i], widths[i], i > 0);
    }
    os << '\n';
    if (r == 0) {
      std::size_t total = 0;
      for (std::size_t w : widths) total += w;
      os << std::string(total + 2 * (widths.size() - 1), '-') << '\n';
    }
  }
  if (opt.include_reference) os << "Error rates in percent; published values in parentheses.\n";
  return os.str();
}

}  // namespace tmcseg::eval
