#include <gtest/gtest.h>

#include <cmath>
#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <vector>

#include "eqprop/data.hpp"
#include "eqprop/errors.hpp"

namespace eqprop {
namespace {

namespace fs = std::filesystem;
using Bytes = std::vector<unsigned char>;

void put_be32(Bytes& b, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) b.push_back(static_cast<unsigned char>(v >> shift));
}

Bytes image_file(std::uint32_t count, std::uint32_t rows = 28, std::uint32_t cols = 28, std::uint32_t magic = 0x803) {
  Bytes b;
  put_be32(b, magic);
  put_be32(b, count);
  put_be32(b, rows);
  put_be32(b, cols);
  for (std::uint32_t n = 0; n < count; ++n) {
    for (std::uint32_t p = 0; p < rows * cols; ++p) b.push_back(static_cast<unsigned char>((n * 7 + p) % 256));
  }
  return b;
}

Bytes label_file(const std::vector<unsigned char>& labels, std::uint32_t magic = 0x801) {
  Bytes b;
  put_be32(b, magic);
  put_be32(b, static_cast<std::uint32_t>(labels.size()));
  b.insert(b.end(), labels.begin(), labels.end());
  return b;
}

fs::path write(const std::string& name, const Bytes& b) {
  const fs::path dir = fs::temp_directory_path() / "eqprop_data_tests";
  fs::create_directories(dir);
  const fs::path p = dir / name;
  std::ofstream(p, std::ios::binary).write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  return p;
}

std::size_t parse_offset(const fs::path& images, const fs::path& labels) {
  try {
    load_mnist(images, labels);
  } catch (const ParseError& e) {
    return e.offset();
  }
  ADD_FAILURE() << "expected a parse error";
  return 0;
}

Dataset labelled(std::size_t n) {
  Dataset d;
  for (std::size_t i = 0; i < n; ++i) {
    Sample s;
    s.x = Tensor(Shape{1});
    s.x[0] = static_cast<double>(i);
    s.y = Tensor(Shape{10});
    s.y[i % 10] = 1.0;
    d.samples.push_back(s);
  }
  return d;
}

TEST(LoadMnist, DecodesPixelsAndOneHotLabels) {
  const auto imgs = write("ok-img", image_file(3));
  const auto lbls = write("ok-lbl", label_file({3, 0, 9}));
  const Dataset d = load_mnist(imgs, lbls);
  ASSERT_EQ(d.size(), 3u);
  EXPECT_EQ(d.samples[0].x.size(), 784u);
  EXPECT_DOUBLE_EQ(d.samples[1].x[2], 9.0 / 255.0);
  EXPECT_DOUBLE_EQ(d.samples[2].x[783], ((2 * 7 + 783) % 256) / 255.0);
  for (std::size_t k = 0; k < 10; ++k) EXPECT_EQ(d.samples[0].y[k], k == 3 ? 1.0 : 0.0);
  EXPECT_EQ(argmax(d.samples[2].y), 9u);
}

TEST(LoadMnist, ZeroImageGivesZeroInput) {
  Bytes img;
  put_be32(img, 0x803);
  put_be32(img, 1);
  put_be32(img, 28);
  put_be32(img, 28);
  img.resize(img.size() + 784, 0);
  const Dataset d = load_mnist(write("zero-img", img), write("zero-lbl", label_file({5})));
  for (double v : d.samples[0].x.values()) EXPECT_EQ(v, 0.0);
}

TEST(LoadMnist, LoadingIsIdempotent) {
  const auto imgs = write("idem-img", image_file(4));
  const auto lbls = write("idem-lbl", label_file({1, 2, 3, 4}));
  const Dataset a = load_mnist(imgs, lbls);
  const Dataset b = load_mnist(imgs, lbls);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.samples[i].x, b.samples[i].x);
    EXPECT_EQ(a.samples[i].y, b.samples[i].y);
  }
}

TEST(LoadMnist, BadMagicReportsOffsetZero) {
  const auto lbls = write("magic-lbl", label_file({1}));
  EXPECT_EQ(parse_offset(write("magic-img", image_file(1, 28, 28, 0x801)), lbls), 0u);
  EXPECT_EQ(parse_offset(write("magic-img2", image_file(1)), write("magic-lbl2", label_file({1}, 0x803))), 0u);
}

TEST(LoadMnist, LittleEndianHeaderRejected) {
  Bytes img = image_file(1);
  std::reverse(img.begin(), img.begin() + 4);
  EXPECT_EQ(parse_offset(write("le-img", img), write("le-lbl", label_file({1}))), 0u);
}

TEST(LoadMnist, CountMismatchPointsAtLabelCount) {
  EXPECT_EQ(parse_offset(write("cnt-img", image_file(2)), write("cnt-lbl", label_file({1, 2, 3}))), 4u);
}

TEST(LoadMnist, TruncatedPixelsReportFileSize) {
  Bytes img = image_file(2);
  img.resize(img.size() - 10);
  const std::size_t size = img.size();
  EXPECT_EQ(parse_offset(write("trunc-img", img), write("trunc-lbl", label_file({1, 2}))), size);
}

TEST(LoadMnist, TruncatedHeaderRejected) {
  Bytes img = image_file(1);
  img.resize(10);
  EXPECT_EQ(parse_offset(write("hdr-img", img), write("hdr-lbl", label_file({1}))), 10u);
}

TEST(LoadMnist, LabelOutOfRangePointsAtByte) {
  EXPECT_EQ(parse_offset(write("range-img", image_file(3)), write("range-lbl", label_file({1, 12, 2}))), 9u);
}

TEST(LoadMnist, ImplausibleRasterRejected) {
  EXPECT_EQ(parse_offset(write("raster-img", image_file(1, 0, 28)), write("raster-lbl", label_file({1}))), 8u);
}

TEST(LoadMnist, MissingFileIsParseError) {
  EXPECT_THROW(load_mnist("/nonexistent/images", "/nonexistent/labels"), ParseError);
}

TEST(ToySample, BoundsOneHotAndDeterminism) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Sample s = synthetic_toy_sample(seed);
    ASSERT_EQ(s.x.size(), 10u);
    ASSERT_EQ(s.y.size(), 5u);
    for (double v : s.x.values()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    double sum = 0.0;
    for (double v : s.y.values()) {
      EXPECT_TRUE(v == 0.0 || v == 1.0);
      sum += v;
    }
    EXPECT_EQ(sum, 1.0);
    const Sample again = synthetic_toy_sample(seed);
    EXPECT_EQ(s.x, again.x);
    EXPECT_EQ(s.y, again.y);
  }
  EXPECT_NE(synthetic_toy_sample(1).x, synthetic_toy_sample(2).x);
}

TEST(Subset, FullSizeIsPermutationInOriginalOrder) {
  const Dataset d = labelled(50);
  const Dataset s = subset(d, 50, 3);
  ASSERT_EQ(s.size(), 50u);
  for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(s.samples[i].x[0], static_cast<double>(i));
}

TEST(Subset, EmptyAndOversized) {
  const Dataset d = labelled(5);
  EXPECT_TRUE(subset(d, 0, 1).empty());
  EXPECT_THROW(subset(d, 6, 1), PreconditionError);
}

TEST(Subset, DistinctStableAndSeeded) {
  const Dataset d = labelled(200);
  const Dataset a = subset(d, 30, 7);
  std::set<double> seen;
  double prev = -1.0;
  for (const Sample& s : a.samples) {
    EXPECT_GT(s.x[0], prev);
    prev = s.x[0];
    seen.insert(s.x[0]);
  }
  EXPECT_EQ(seen.size(), 30u);
  const Dataset b = subset(d, 30, 7);
  const Dataset c = subset(d, 30, 8);
  bool same = true, differs = false;
  for (std::size_t i = 0; i < 30; ++i) {
    same = same && a.samples[i].x[0] == b.samples[i].x[0];
    differs = differs || a.samples[i].x[0] != c.samples[i].x[0];
  }
  EXPECT_TRUE(same);
  EXPECT_TRUE(differs);
}

TEST(Subset, ClassBalanceMatchesHypergeometric) {
  // 20000 samples, 2000 per class; drawing 10000 gives per-class counts with
  // mean 1000 and variance n·p·(1−p)·(N−n)/(N−1).
  const Dataset d = labelled(20000);
  const Dataset s = subset(d, 10000, 11);
  std::vector<double> counts(10, 0.0);
  for (const Sample& x : s.samples) counts[argmax(x.y)] += 1.0;
  const double sd = std::sqrt(10000 * 0.1 * 0.9 * (10000.0 / 19999.0));
  for (double c : counts) EXPECT_LT(std::abs(c - 1000.0), 3 * sd);
}

TEST(DisjointSplit, PartsDoNotOverlap) {
  const Dataset d = labelled(100);
  const auto [a, b] = disjoint_split(d, 60, 40, 5);
  ASSERT_EQ(a.size(), 60u);
  ASSERT_EQ(b.size(), 40u);
  std::set<double> ids;
  for (const Sample& s : a.samples) ids.insert(s.x[0]);
  for (const Sample& s : b.samples) ids.insert(s.x[0]);
  EXPECT_EQ(ids.size(), 100u);
  EXPECT_THROW(disjoint_split(d, 60, 41, 5), PreconditionError);
}

TEST(Argmax, LowestIndexWinsTies) {
  EXPECT_EQ(argmax(Tensor::vector({0.2, 0.9, 0.9, 0.1})), 1u);
  EXPECT_EQ(argmax(Tensor::vector({-1.0})), 0u);
  EXPECT_THROW(argmax(Tensor()), PreconditionError);
}

}  // namespace
}  // namespace eqprop
