#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "tmcseg/data.hpp"
#include "tmcseg/errors.hpp"

using namespace tmcseg;
using namespace tmcseg::data;

namespace {

/// Classic iterative index-to-coordinate conversion; returns (x, y) with the curve ending at (n-1, 0).
Cell d2xy(std::size_t n, std::size_t d) {
  std::size_t x = 0, y = 0, t = d;
  for (std::size_t s = 1; s < n; s *= 2) {
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
  return {x, y};
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("tmcseg_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST(Hilbert, BijectionAdjacencyAndEndpoints) {
  for (int order = 1; order <= 7; ++order) {
    const HilbertMap map(order);
    const std::size_t side = map.side();
    ASSERT_EQ(map.size(), side * side);
    std::vector<bool> seen(side * side, false);
    for (std::size_t i = 0; i < map.size(); ++i) {
      const Cell c = map.cell(i);
      ASSERT_LT(c.row, side);
      ASSERT_LT(c.col, side);
      ASSERT_FALSE(seen[c.row * side + c.col]);
      seen[c.row * side + c.col] = true;
      EXPECT_EQ(map.index(c), i);
      if (i > 0) {
        const Cell p = map.cell(i - 1);
        const auto dist = (p.row > c.row ? p.row - c.row : c.row - p.row) + (p.col > c.col ? p.col - c.col : c.col - p.col);
        ASSERT_EQ(dist, 1u) << "order " << order << " index " << i;
      }
    }
    EXPECT_EQ(map.cell(0), (Cell{0, 0}));
    EXPECT_EQ(map.cell(map.size() - 1), (Cell{side - 1, 0}));
  }
}

TEST(Hilbert, MatchesIterativeConstruction) {
  for (int order = 1; order <= 6; ++order) {
    const HilbertMap map(order);
    for (std::size_t i = 0; i < map.size(); ++i) {
      const Cell xy = d2xy(map.side(), i);
      ASSERT_EQ(map.cell(i), (Cell{xy.row, xy.col})) << "order " << order << " index " << i;
    }
  }
}

TEST(Hilbert, RejectsBadOrder) {
  EXPECT_THROW(HilbertMap(0), ContractError);
  EXPECT_THROW(HilbertMap(HilbertMap::kMaxOrder + 1), ContractError);
  EXPECT_THROW(HilbertMap(2).index({4, 0}), ContractError);
  EXPECT_EQ(order_for_side(1), 1);
  EXPECT_EQ(order_for_side(64), 6);
  EXPECT_EQ(order_for_side(65), 7);
}

TEST(Hilbert, ImageRoundTrip) {
  const HilbertMap map(4);
  const auto img = generate_shape(ShapeKind::Blob, 16, 3);
  const auto seq = image_to_sequence(img, map);
  EXPECT_EQ(sequence_to_image(seq, map), img);
  EXPECT_THROW(image_to_sequence(BinaryImage(8, 0), map), ContractError);
}

TEST(Noise, CattleRecursionReplays) {
  const std::vector<Label> ys = {0, 1, 1, 0, 1, 0, 0, 1};
  const auto spec = NoiseSpec::cattle_preset(5);
  const auto xs = synthesize_noise(ys, spec);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  double prev = 0.0;
  for (std::size_t t = 0; t < ys.size(); ++t) {
    const double expect = std::sin(spec.a[ys[t]] + prev) + spec.scale[ys[t]] * nd(rng);
    EXPECT_DOUBLE_EQ(xs[t], expect);
    prev = expect;
  }
}

TEST(Noise, CamelMomentsPerClass) {
  const std::size_t n = 200000;
  const auto spec = NoiseSpec::camel_preset(9);
  for (Label y : {Label{0}, Label{1}}) {
    const auto xs = synthesize_noise(std::vector<Label>(n, y), spec);
    double m = 0.0, m2 = 0.0;
    for (double x : xs) {
      m += x;
      m2 += x * x;
    }
    m /= n;
    m2 /= n;
    // E[(G Z)^2] = a^2 + s^2.
    const double var = spec.a[y] * spec.a[y] + spec.scale[y] * spec.scale[y];
    EXPECT_NEAR(m, 0.0, 5 * std::sqrt(var / n));
    EXPECT_NEAR(m2, var, 0.02 * var + 1e-3);
  }
}

TEST(Noise, Validation) {
  NoiseSpec bad{NoiseKind::CattleSin, {0.0}, {0.0}, 1};
  EXPECT_THROW(bad.validate(), ContractError);
  const std::vector<Label> ys = {2};
  EXPECT_THROW(synthesize_noise(ys, NoiseSpec::cattle_preset(1)), ContractError);
  EXPECT_EQ(noise_kind_from_string(to_string(NoiseKind::CamelMult)), NoiseKind::CamelMult);
  EXPECT_THROW(noise_kind_from_string("gaussian"), ContractError);
}

TEST(Mask, ExactCountAndDeterminism) {
  for (double f : {0.0, 0.4, 0.6, 1.0}) {
    const auto m = mask_labels(1000, f, 4);
    EXPECT_EQ(std::count(m.begin(), m.end(), Slot::Unobserved), std::llround(f * 1000));
    EXPECT_EQ(m, mask_labels(1000, f, 4));
  }
  EXPECT_NE(mask_labels(1000, 0.4, 4), mask_labels(1000, 0.4, 5));
  EXPECT_THROW(mask_labels(10, 1.5, 1), ContractError);
}

TEST(Standardize, ZeroMeanUnitVariance) {
  std::vector<double> xs = {1.0, 2.0, 4.0, 7.0};
  const auto raw = xs;
  const auto s = standardize(xs);
  double m = 0.0, v = 0.0;
  for (double x : xs) m += x;
  m /= xs.size();
  for (double x : xs) v += (x - m) * (x - m);
  EXPECT_NEAR(m, 0.0, 1e-15);
  EXPECT_NEAR(v / xs.size(), 1.0, 1e-14);
  for (std::size_t i = 0; i < xs.size(); ++i) EXPECT_NEAR(s.invert(xs[i]), raw[i], 1e-14);
}

TEST(Sequence, MakeSequencePipeline) {
  const auto img = generate_shape(ShapeKind::Polygon, 32, 2);
  const auto seq = make_sequence(img, NoiseSpec::camel_preset(3), 0.4, 7, "poly");
  seq.validate();
  EXPECT_EQ(seq.length(), 1024u);
  EXPECT_EQ(seq.truth, image_to_sequence(img, HilbertMap(5)));
  EXPECT_EQ(seq.unobserved_indices().size(), 410u);
  EXPECT_EQ(seq.unobserved_indices().size() + seq.observed_indices().size(), 1024u);
  const auto u = seq.unobserved_indices().front();
  EXPECT_THROW(seq.observed_label(u), ContractError);
  EXPECT_EQ(seq.provenance.source, "poly");
}

TEST(Archive, RoundTrip) {
  const auto img = generate_shape(ShapeKind::Blob, 16, 4);
  const auto seq = make_sequence(img, NoiseSpec::cattle_preset(3), 0.6, 8, "blob");
  std::stringstream ss;
  write_archive(ss, seq);
  const auto back = read_archive(ss);
  EXPECT_EQ(back.xs, seq.xs);
  EXPECT_EQ(back.truth, seq.truth);
  EXPECT_EQ(back.mask, seq.mask);
  EXPECT_EQ(back.standardization.mean, seq.standardization.mean);
  EXPECT_EQ(back.provenance.noise->a, seq.provenance.noise->a);
  EXPECT_EQ(back.provenance.mask_seed, 8u);
}

TEST(Archive, MalformedInputReportsOffset) {
  const auto seq = make_sequence(generate_shape(ShapeKind::Blob, 8, 1), NoiseSpec::cattle_preset(1), 0.5, 2);
  std::stringstream ss;
  write_archive(ss, seq);
  std::string text = ss.str();
  const auto bad_row = text.find("\n10 ");
  ASSERT_NE(bad_row, std::string::npos);
  text.replace(text.find(' ', bad_row + 4) + 1, 1, "7");
  std::istringstream is(text);
  try {
    read_archive(is);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), bad_row + 1);
  }
  std::istringstream empty("");
  EXPECT_THROW(read_archive(empty), ParseError);
  std::istringstream wrong("tmcseg-archive 99\n");
  EXPECT_THROW(read_archive(wrong), ParseError);
}

TEST(Netpbm, PlainAndRawFormats) {
  const auto p1 = parse_netpbm("P1\n# c\n4 4\n1 0 0 0\n0 1 0 0\n0 0 1 0\n0 0 0 1\n");
  EXPECT_EQ(p1.side, 4u);
  EXPECT_EQ(p1.at(0, 0), 1);
  EXPECT_EQ(p1.at(0, 1), 0);
  EXPECT_EQ(p1.at(3, 3), 1);

  std::string p4 = "P4 8 2\n";
  p4 += static_cast<char>(0x80);
  p4 += static_cast<char>(0x01);
  const auto img4 = parse_netpbm(p4);
  EXPECT_EQ(img4.side, 8u);
  // 8x2 centered on an 8x8 canvas: rows 3 and 4.
  EXPECT_EQ(img4.at(3, 0), 1);
  EXPECT_EQ(img4.at(4, 7), 1);
  EXPECT_EQ(img4.foreground_fraction(), 2.0 / 64.0);

  const auto p2 = parse_netpbm("P2 2 2 255\n0 255\n200 10\n");
  EXPECT_EQ(p2.at(0, 0), 1);
  EXPECT_EQ(p2.at(0, 1), 0);
  EXPECT_EQ(p2.at(1, 0), 0);
  EXPECT_EQ(p2.at(1, 1), 1);
}

TEST(Netpbm, Errors) {
  EXPECT_THROW(parse_netpbm("P7 2 2\n"), ParseError);
  EXPECT_THROW(parse_netpbm("P1 2 2\n1 0 1\n"), ParseError);
  EXPECT_THROW(parse_netpbm("P2 1 1 10\n11\n"), ParseError);
  EXPECT_THROW(parse_netpbm("X"), ParseError);
  try {
    parse_netpbm("P1 2 2\n1 0 2 0\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 11u);
  }
}

TEST(Netpbm, FileRoundTrip) {
  const auto dir = temp_dir("pbm");
  const auto img = generate_shape(ShapeKind::Disk, 32, 1);
  save_bitmap(img, dir / "a.pbm");
  EXPECT_EQ(load_bitmap(dir / "a.pbm"), img);
  EXPECT_EQ(parse_netpbm(format_pbm(img)), img);
}

TEST(Shapes, SingleComponentInRange) {
  for (auto kind : {ShapeKind::Disk, ShapeKind::Blob, ShapeKind::Polygon})
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto img = generate_shape(kind, 64, seed);
      EXPECT_EQ(count_components(img), 1u) << to_string(kind) << " " << seed;
      EXPECT_GE(img.foreground_fraction(), 0.2);
      EXPECT_LE(img.foreground_fraction(), 0.6);
      EXPECT_EQ(img, generate_shape(kind, 64, seed));
    }
}

TEST(Shapes, DiskArea) {
  const auto img = draw_disk(256, 127.5, 127.5, 80.0);
  EXPECT_NEAR(img.foreground_fraction() * 256 * 256, std::numbers::pi * 80.0 * 80.0, 300.0);
  BinaryImage two(8, 0);
  two.at(0, 0) = 1;
  two.at(5, 5) = 1;
  EXPECT_EQ(count_components(two), 2u);
}
