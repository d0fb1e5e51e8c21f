#include "tmcseg/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "tmcseg/errors.hpp"

namespace tmcseg::data {

BinaryImage::BinaryImage(std::size_t side_, Label fill) : side(side_), pixels(side_ * side_, fill) {}

double BinaryImage::foreground_fraction() const {
  if (pixels.empty()) return 0.0;
  const auto fg = std::count(pixels.begin(), pixels.end(), Label{1});
  return static_cast<double>(fg) / static_cast<double>(pixels.size());
}

GrayImage::GrayImage(std::size_t w, std::size_t h, std::uint8_t fill) : width(w), height(h), pixels(w * h, fill) {}

// ---------------------------------------------------------------------------
// Hilbert curve

HilbertMap::HilbertMap(int order) : order_(order) {
  if (order < 1 || order > kMaxOrder)
    throw ContractError("hilbert_map: order must be in [1, " + std::to_string(kMaxOrder) + "], got " +
                        std::to_string(order));
  side_ = std::size_t{1} << order;
  const std::size_t n = side_ * side_;
  cells_.resize(n);
  inverse_.resize(n);
  for (std::size_t d = 0; d < n; ++d) {
    std::size_t x = 0, y = 0, t = d;
    for (std::size_t s = 1; s < side_; s *= 2) {
      const std::size_t rx = 1 & (t / 2);
      const std::size_t ry = 1 & (t ^ rx);
      if (ry == 0) {
        if (rx == 1) {
          x = s - 1 - x;
          y = s - 1 - y;
        }
        std::swap(x, y);
      }
      x += s * rx;
      y += s * ry;
      t /= 4;
    }
    cells_[d] = static_cast<std::uint32_t>((x << 16) | y);
    inverse_[x * side_ + y] = static_cast<std::uint32_t>(d);
  }
}

std::size_t HilbertMap::index(Cell c) const {
  if (c.row >= side_ || c.col >= side_) throw ContractError("hilbert_map: cell outside the grid");
  return inverse_[c.row * side_ + c.col];
}

int order_for_side(std::size_t side) {
  int k = 1;
  while ((std::size_t{1} << k) < side) ++k;
  return k;
}

std::vector<Label> image_to_sequence(const BinaryImage& img, const HilbertMap& map) {
  if (img.side != map.side())
    throw ContractError("image_to_sequence: image side " + std::to_string(img.side) + " does not match curve side " +
                        std::to_string(map.side()));
  std::vector<Label> out(map.size());
  for (std::size_t t = 0; t < map.size(); ++t) {
    const Cell c = map.cell(t);
    out[t] = img.at(c.row, c.col);
  }
  return out;
}

BinaryImage sequence_to_image(std::span<const Label> labels, const HilbertMap& map) {
  if (labels.size() != map.size())
    throw ContractError("sequence_to_image: sequence length " + std::to_string(labels.size()) +
                        " does not match curve size " + std::to_string(map.size()));
  BinaryImage img(map.side(), 0);
  for (std::size_t t = 0; t < labels.size(); ++t) {
    const Cell c = map.cell(t);
    img.at(c.row, c.col) = labels[t];
  }
  return img;
}

// ---------------------------------------------------------------------------
// Noise

std::string to_string(NoiseKind kind) { return kind == NoiseKind::CattleSin ? "cattle_sin" : "camel_mult"; }

NoiseKind noise_kind_from_string(std::string_view s) {
  if (s == "cattle_sin") return NoiseKind::CattleSin;
  if (s == "camel_mult") return NoiseKind::CamelMult;
  throw ContractError("unknown noise kind '" + std::string(s) + "'");
}

NoiseSpec NoiseSpec::cattle_preset(std::uint64_t seed) {
  return NoiseSpec{NoiseKind::CattleSin, {0.0, 0.4}, {0.5, 0.5}, seed};  // sigma^2 = 0.25
}

NoiseSpec NoiseSpec::camel_preset(std::uint64_t seed) {
  return NoiseSpec{NoiseKind::CamelMult, {0.0, 0.5}, {0.2, 0.2}, seed};
}

void NoiseSpec::validate() const {
  if (a.empty() || a.size() != scale.size()) throw ContractError("noise spec: a and scale must have one entry per label");
  for (double s : scale)
    if (!(s > 0.0)) throw ContractError("noise spec: scale parameters must be positive");
}

std::vector<double> synthesize_noise(std::span<const Label> labels, const NoiseSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> xs(labels.size());
  double prev = 0.0;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    const std::size_t y = labels[t];
    if (y >= spec.a.size()) throw ContractError("synthesize_noise: label out of range for noise spec");
    switch (spec.kind) {
      case NoiseKind::CattleSin:
        xs[t] = std::sin(spec.a[y] + prev) + spec.scale[y] * normal(rng);
        prev = xs[t];
        break;
      case NoiseKind::CamelMult: {
        const double gain = spec.a[y] + spec.scale[y] * normal(rng);
        xs[t] = gain * normal(rng);
        break;
      }
      default:
        throw ContractError("synthesize_noise: unknown noise kind");
    }
  }
  return xs;
}

std::vector<Slot> mask_labels(std::size_t n, double fraction_unobserved, std::uint64_t seed) {
  if (!(fraction_unobserved >= 0.0 && fraction_unobserved <= 1.0))
    throw ContractError("mask_labels: fraction must lie in [0, 1]");
  const auto k = static_cast<std::size_t>(std::llround(fraction_unobserved * static_cast<double>(n)));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<Slot> mask(n, Slot::Observed);
  for (std::size_t i = 0; i < k; ++i) mask[idx[i]] = Slot::Unobserved;
  return mask;
}

Standardization standardize(std::span<double> xs) {
  Standardization s;
  if (xs.empty()) return s;
  const double n = static_cast<double>(xs.size());
  s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double var = 0.0;
  for (double x : xs) var += (x - s.mean) * (x - s.mean);
  var /= n;
  s.scale = var > 0.0 ? std::sqrt(var) : 1.0;
  for (double& x : xs) x = s.apply(x);
  return s;
}

// ---------------------------------------------------------------------------
// LabeledSequence

Label LabeledSequence::observed_label(std::size_t t) const {
  if (mask.at(t) != Slot::Observed) throw ContractError("label at t=" + std::to_string(t) + " is not observed");
  return truth[t];
}

std::vector<std::size_t> LabeledSequence::unobserved_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t t = 0; t < mask.size(); ++t)
    if (mask[t] == Slot::Unobserved) out.push_back(t);
  return out;
}

std::vector<std::size_t> LabeledSequence::observed_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t t = 0; t < mask.size(); ++t)
    if (mask[t] == Slot::Observed) out.push_back(t);
  return out;
}

void LabeledSequence::validate() const {
  if (d_x == 0) throw ContractError("sequence: d_x must be positive");
  if (num_labels < 2) throw ContractError("sequence: need at least two labels");
  if (mask.empty()) throw ContractError("sequence: empty");
  if (truth.size() != mask.size() || xs.size() != mask.size() * d_x)
    throw ContractError("sequence: observation, label and mask lengths disagree");
  for (Label y : truth)
    if (y >= num_labels) throw ContractError("sequence: label out of range");
}

LabeledSequence make_sequence(const BinaryImage& img, const NoiseSpec& noise, double fraction_unobserved,
                              std::uint64_t mask_seed, std::string source) {
  const int order = order_for_side(img.side);
  if ((std::size_t{1} << order) != img.side) throw ContractError("make_sequence: side must be a power of two");
  const HilbertMap map(order);
  LabeledSequence seq;
  seq.d_x = 1;
  seq.num_labels = 2;
  seq.truth = image_to_sequence(img, map);
  seq.xs = synthesize_noise(seq.truth, noise);
  seq.standardization = standardize(seq.xs);
  seq.mask = mask_labels(seq.truth.size(), fraction_unobserved, mask_seed);
  seq.provenance = Provenance{img.side, order, noise, mask_seed, fraction_unobserved, std::move(source)};
  return seq;
}

// ---------------------------------------------------------------------------
// Archive

namespace {

constexpr const char* kArchiveMagic = "tmcseg-archive";
constexpr int kArchiveVersion = 1;

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string join_doubles(std::span<const double> v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += format_double(v[i]);
  }
  return out;
}

std::vector<double> split_doubles(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  return out;
}

// key=value tokens following the first word of a header line.
std::optional<std::string> kv(const std::vector<std::string>& tokens, const std::string& key) {
  for (const auto& tok : tokens) {
    const auto eq = tok.find('=');
    if (eq != std::string::npos && tok.substr(0, eq) == key) return tok.substr(eq + 1);
  }
  return std::nullopt;
}

std::vector<std::string> tokenize(const std::string& line) {
  std::istringstream is(line);
  std::vector<std::string> out;
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

}  // namespace

void write_archive(std::ostream& os, const LabeledSequence& seq) {
  seq.validate();
  const auto& p = seq.provenance;
  os << kArchiveMagic << ' ' << kArchiveVersion << '\n';
  os << "side " << p.side << '\n';
  os << "order " << p.order << '\n';
  os << "num_labels " << seq.num_labels << '\n';
  os << "d_x " << seq.d_x << '\n';
  if (p.noise) {
    os << "noise " << to_string(p.noise->kind) << " a=" << join_doubles(p.noise->a)
       << " scale=" << join_doubles(p.noise->scale) << " seed=" << p.noise->seed << '\n';
  } else {
    os << "noise none\n";
  }
  os << "mask_seed " << p.mask_seed << '\n';
  os << "fraction " << format_double(p.fraction_unobserved) << '\n';
  os << "source " << (p.source.empty() ? "-" : p.source) << '\n';
  os << "standardization mean=" << format_double(seq.standardization.mean)
     << " scale=" << format_double(seq.standardization.scale) << '\n';
  os << "length " << seq.length() << '\n';
  os << "columns t x y mask truth\n";
  for (std::size_t t = 0; t < seq.length(); ++t) {
    os << t << ' ' << join_doubles(seq.x(t)) << ' ';
    if (seq.observed(t))
      os << static_cast<int>(seq.truth[t]) << " L ";
    else
      os << "? U ";
    os << static_cast<int>(seq.truth[t]) << '\n';
  }
}

LabeledSequence read_archive(std::istream& is) {
  LabeledSequence seq;
  std::string line;
  std::size_t line_no = 0;
  std::size_t line_start = 0;
  std::size_t next_start = 0;
  auto next_line = [&] {
    if (!std::getline(is, line)) return false;
    ++line_no;
    line_start = next_start;
    next_start += line.size() + 1;
    return true;
  };
  auto fail = [&](const std::string& msg) -> ParseError {
    return ParseError("archive line " + std::to_string(line_no) + ": " + msg, line_start);
  };
  if (!next_line()) throw ParseError("archive: empty input", 0);
  {
    const auto tok = tokenize(line);
    if (tok.size() != 2 || tok[0] != kArchiveMagic) throw fail("missing archive header");
    if (std::stoi(tok[1]) != kArchiveVersion) throw fail("unsupported archive version " + tok[1]);
  }
  std::size_t length = 0;
  bool have_columns = false;
  while (!have_columns && next_line()) {
    const auto tok = tokenize(line);
    if (tok.empty()) continue;
    try {
      const std::string& key = tok[0];
      if (key == "side") {
        seq.provenance.side = std::stoul(tok.at(1));
      } else if (key == "order") {
        seq.provenance.order = std::stoi(tok.at(1));
      } else if (key == "num_labels") {
        seq.num_labels = std::stoul(tok.at(1));
      } else if (key == "d_x") {
        seq.d_x = std::stoul(tok.at(1));
      } else if (key == "noise") {
        if (tok.at(1) != "none") {
          NoiseSpec n;
          n.kind = noise_kind_from_string(tok.at(1));
          n.a = split_doubles(kv(tok, "a").value());
          n.scale = split_doubles(kv(tok, "scale").value());
          n.seed = std::stoull(kv(tok, "seed").value());
          seq.provenance.noise = n;
        }
      } else if (key == "mask_seed") {
        seq.provenance.mask_seed = std::stoull(tok.at(1));
      } else if (key == "fraction") {
        seq.provenance.fraction_unobserved = std::stod(tok.at(1));
      } else if (key == "source") {
        seq.provenance.source = tok.at(1) == "-" ? "" : line.substr(line.find(tok.at(1)));
      } else if (key == "standardization") {
        seq.standardization.mean = std::stod(kv(tok, "mean").value());
        seq.standardization.scale = std::stod(kv(tok, "scale").value());
      } else if (key == "length") {
        length = std::stoul(tok.at(1));
      } else if (key == "columns") {
        have_columns = true;
      } else {
        throw fail("unknown header key '" + key + "'");
      }
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw fail(std::string("malformed header: ") + e.what());
    }
  }
  if (!have_columns) throw fail("missing columns line");
  seq.xs.reserve(length * seq.d_x);
  seq.truth.reserve(length);
  seq.mask.reserve(length);
  for (std::size_t t = 0; t < length; ++t) {
    if (!next_line()) throw fail("unexpected end of data, expected " + std::to_string(length) + " rows");
    const auto tok = tokenize(line);
    if (tok.size() != 5) throw fail("expected 5 columns");
    try {
      if (std::stoul(tok[0]) != t) throw fail("row index out of order");
      const auto x = split_doubles(tok[1]);
      if (x.size() != seq.d_x) throw fail("observation has wrong dimension");
      seq.xs.insert(seq.xs.end(), x.begin(), x.end());
      const auto truth = static_cast<Label>(std::stoul(tok[4]));
      if (tok[3] == "L") {
        if (tok[2] == "?" || std::stoul(tok[2]) != truth) throw fail("observed label disagrees with truth column");
        seq.mask.push_back(Slot::Observed);
      } else if (tok[3] == "U") {
        if (tok[2] != "?") throw fail("unobserved slot must carry '?'");
        seq.mask.push_back(Slot::Unobserved);
      } else {
        throw fail("mask must be L or U");
      }
      seq.truth.push_back(truth);
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw fail(std::string("malformed row: ") + e.what());
    }
  }
  seq.validate();
  return seq;
}

namespace {

void ensure_parent(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
}

}  // namespace

void save_archive(const std::filesystem::path& path, const LabeledSequence& seq) {
  ensure_parent(path);
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write archive " + path.string());
  write_archive(os, seq);
}

LabeledSequence load_archive(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read archive " + path.string());
  return read_archive(is);
}

// ---------------------------------------------------------------------------
// Netpbm

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(std::string_view bytes) : bytes_(bytes) {}

  std::size_t pos() const { return pos_; }

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t read_uint(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    std::size_t v = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      v = v * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
      ++pos_;
      if (v > (1u << 24)) throw ParseError(std::string("netpbm: ") + what + " too large", start);
    }
    if (pos_ == start) throw ParseError(std::string("netpbm: expected ") + what, start);
    return v;
  }

  // Plain PBM allows bits without separating whitespace.
  int read_bit() {
    skip_space_and_comments();
    if (pos_ >= bytes_.size()) throw ParseError("netpbm: truncated pixel data", pos_);
    const char c = bytes_[pos_++];
    if (c != '0' && c != '1') throw ParseError("netpbm: invalid bit", pos_ - 1);
    return c - '0';
  }

  // Exactly one whitespace byte separates the header from binary raster data.
  void end_of_header() {
    if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_])))
      throw ParseError("netpbm: expected whitespace before raster", pos_);
    ++pos_;
  }

  std::uint8_t byte() {
    if (pos_ >= bytes_.size()) throw ParseError("netpbm: truncated raster", pos_);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

BinaryImage pad_to_power_of_two(std::size_t width, std::size_t height, const std::vector<Label>& raw) {
  const std::size_t side = std::size_t{1} << order_for_side(std::max(width, height));
  BinaryImage img(side, 0);
  const std::size_t r0 = (side - height) / 2;
  const std::size_t c0 = (side - width) / 2;
  for (std::size_t r = 0; r < height; ++r)
    for (std::size_t c = 0; c < width; ++c) img.at(r0 + r, c0 + c) = raw[r * width + c];
  return img;
}

}  // namespace

BinaryImage parse_netpbm(std::string_view bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P') throw ParseError("netpbm: missing magic number", 0);
  const char kind = bytes[1];
  if (kind != '1' && kind != '2' && kind != '4' && kind != '5')
    throw ParseError(std::string("netpbm: unsupported format P") + kind, 1);
  HeaderReader rd(bytes.substr(2));
  auto offset = [&](std::size_t p) { return p + 2; };
  std::size_t width = 0, height = 0, maxval = 1;
  try {
    width = rd.read_uint("width");
    height = rd.read_uint("height");
    if (kind == '2' || kind == '5') {
      maxval = rd.read_uint("maxval");
      if (maxval == 0 || maxval > 65535) throw ParseError("netpbm: maxval out of range", rd.pos());
    }
  } catch (const ParseError& e) {
    throw ParseError(std::string(e.what()).substr(0, std::string(e.what()).find(" (at byte")), offset(e.offset()));
  }
  if (width == 0 || height == 0) throw ParseError("netpbm: zero image dimension", offset(rd.pos()));

  std::vector<Label> raw(width * height, 0);
  try {
    switch (kind) {
      case '1':
        for (auto& p : raw) p = static_cast<Label>(rd.read_bit());
        break;
      case '4': {
        rd.end_of_header();
        const std::size_t row_bytes = (width + 7) / 8;
        for (std::size_t r = 0; r < height; ++r)
          for (std::size_t b = 0; b < row_bytes; ++b) {
            const std::uint8_t v = rd.byte();
            for (std::size_t k = 0; k < 8 && b * 8 + k < width; ++k)
              raw[r * width + b * 8 + k] = static_cast<Label>((v >> (7 - k)) & 1u);
          }
        break;
      }
      case '2':
        for (auto& p : raw) {
          const std::size_t v = rd.read_uint("gray value");
          if (v > maxval) throw ParseError("netpbm: gray value exceeds maxval", rd.pos());
          p = 2 * v < maxval ? 1 : 0;
        }
        break;
      case '5':
        rd.end_of_header();
        for (auto& p : raw) {
          std::size_t v = rd.byte();
          if (maxval > 255) v = (v << 8) | rd.byte();
          if (v > maxval) throw ParseError("netpbm: gray value exceeds maxval", rd.pos());
          p = 2 * v < maxval ? 1 : 0;
        }
        break;
      default:
        break;
    }
  } catch (const ParseError& e) {
    throw ParseError(std::string(e.what()).substr(0, std::string(e.what()).find(" (at byte")), offset(e.offset()));
  }
  return pad_to_power_of_two(width, height, raw);
}

BinaryImage load_bitmap(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read bitmap " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_netpbm(ss.str());
}

std::string format_pbm(const BinaryImage& img) {
  std::string out = "P1\n" + std::to_string(img.side) + ' ' + std::to_string(img.side) + '\n';
  for (std::size_t r = 0; r < img.side; ++r) {
    for (std::size_t c = 0; c < img.side; ++c) out += img.at(r, c) ? '1' : '0';
    out += '\n';
  }
  return out;
}

void save_bitmap(const BinaryImage& img, const std::filesystem::path& path) {
  ensure_parent(path);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write bitmap " + path.string());
  os << format_pbm(img);
}

void save_pgm(const GrayImage& img, const std::filesystem::path& path) {
  ensure_parent(path);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write image " + path.string());
  os << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
}

// ---------------------------------------------------------------------------
// Shapes

std::string to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::Disk:
      return "disk";
    case ShapeKind::Blob:
      return "blob";
    case ShapeKind::Polygon:
      return "polygon";
  }
  return "?";
}

ShapeKind shape_kind_from_string(std::string_view s) {
  if (s == "disk") return ShapeKind::Disk;
  if (s == "blob") return ShapeKind::Blob;
  if (s == "polygon") return ShapeKind::Polygon;
  throw ContractError("unknown shape kind '" + std::string(s) + "'");
}

BinaryImage draw_disk(std::size_t side, double center_row, double center_col, double radius) {
  BinaryImage img(side, 0);
  for (std::size_t r = 0; r < side; ++r)
    for (std::size_t c = 0; c < side; ++c) {
      const double dr = static_cast<double>(r) + 0.5 - center_row;
      const double dc = static_cast<double>(c) + 0.5 - center_col;
      if (dr * dr + dc * dc <= radius * radius) img.at(r, c) = 1;
    }
  return img;
}

std::size_t count_components(const BinaryImage& img) {
  std::vector<std::uint8_t> seen(img.pixels.size(), 0);
  std::vector<std::size_t> stack;
  std::size_t components = 0;
  const std::size_t n = img.side;
  for (std::size_t start = 0; start < img.pixels.size(); ++start) {
    if (!img.pixels[start] || seen[start]) continue;
    ++components;
    stack.push_back(start);
    seen[start] = 1;
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      const std::size_t r = p / n, c = p % n;
      const std::size_t nb[4] = {r > 0 ? p - n : p, r + 1 < n ? p + n : p, c > 0 ? p - 1 : p, c + 1 < n ? p + 1 : p};
      for (std::size_t q : nb)
        if (q != p && img.pixels[q] && !seen[q]) {
          seen[q] = 1;
          stack.push_back(q);
        }
    }
  }
  return components;
}

namespace {

BinaryImage draw_radial(std::size_t side, double cr, double cc, const std::vector<double>& amp,
                        const std::vector<double>& phase, double base) {
  BinaryImage img(side, 0);
  for (std::size_t r = 0; r < side; ++r)
    for (std::size_t c = 0; c < side; ++c) {
      const double dr = static_cast<double>(r) + 0.5 - cr;
      const double dc = static_cast<double>(c) + 0.5 - cc;
      const double theta = std::atan2(dr, dc);
      double rad = 1.0;
      for (std::size_t k = 0; k < amp.size(); ++k) rad += amp[k] * std::cos(static_cast<double>(k + 2) * theta + phase[k]);
      if (std::sqrt(dr * dr + dc * dc) <= base * rad) img.at(r, c) = 1;
    }
  return img;
}

BinaryImage draw_polygon(std::size_t side, const std::vector<std::pair<double, double>>& verts) {
  BinaryImage img(side, 0);
  for (std::size_t r = 0; r < side; ++r)
    for (std::size_t c = 0; c < side; ++c) {
      const double y = static_cast<double>(r) + 0.5;
      const double x = static_cast<double>(c) + 0.5;
      bool inside = false;
      for (std::size_t i = 0, j = verts.size() - 1; i < verts.size(); j = i++) {
        const auto [yi, xi] = verts[i];
        const auto [yj, xj] = verts[j];
        if ((yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi) inside = !inside;
      }
      if (inside) img.at(r, c) = 1;
    }
  return img;
}

}  // namespace

BinaryImage generate_shape(ShapeKind kind, std::size_t side, std::uint64_t seed) {
  if (side < 4 || (side & (side - 1)) != 0) throw ContractError("generate_shape: side must be a power of two >= 4");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double s = static_cast<double>(side);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const double cr = s * (0.45 + 0.1 * u(rng));
    const double cc = s * (0.45 + 0.1 * u(rng));
    BinaryImage img;
    switch (kind) {
      case ShapeKind::Disk:
        img = draw_disk(side, cr, cc, s * (0.27 + 0.13 * u(rng)));
        break;
      case ShapeKind::Blob: {
        std::vector<double> amp(3), phase(3);
        for (std::size_t k = 0; k < 3; ++k) {
          amp[k] = 0.25 * u(rng) / static_cast<double>(k + 1);
          phase[k] = 2.0 * std::numbers::pi * u(rng);
        }
        img = draw_radial(side, cr, cc, amp, phase, s * (0.26 + 0.1 * u(rng)));
        break;
      }
      case ShapeKind::Polygon: {
        const int n = 5 + static_cast<int>(u(rng) * 5.0);
        std::vector<double> angles(static_cast<std::size_t>(n));
        for (auto& a : angles) a = 2.0 * std::numbers::pi * u(rng);
        std::sort(angles.begin(), angles.end());
        std::vector<std::pair<double, double>> verts;
        for (double a : angles) {
          const double rad = s * (0.22 + 0.22 * u(rng));
          verts.emplace_back(cr + rad * std::sin(a), cc + rad * std::cos(a));
        }
        img = draw_polygon(side, verts);
        break;
      }
    }
    const double f = img.foreground_fraction();
    if (f > 0.2 && f < 0.6 && count_components(img) == 1) return img;
  }
  throw std::runtime_error("generate_shape: failed to produce a valid shape");
}

}  // namespace tmcseg::data
