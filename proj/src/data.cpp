#include "eqprop/data.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <numeric>
#include <string>

#include "eqprop/errors.hpp"
#include "eqprop/rng.hpp"

namespace eqprop {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;
constexpr std::size_t kClasses = 10;

std::vector<unsigned char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string(), 0, "cannot open file");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t offset, const std::string& path,
                        const char* field) {
  if (offset + 4 > buf.size()) throw ParseError(path, buf.size(), std::string("truncated header, missing ") + field);
  return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
         (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

std::vector<std::size_t> draw_indices(std::size_t size, std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(size);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) std::swap(idx[i], idx[i + rng.below(size - i)]);
  idx.resize(n);
  return idx;
}

Dataset gather(const Dataset& data, std::vector<std::size_t> idx) {
  std::sort(idx.begin(), idx.end());
  Dataset out;
  out.samples.reserve(idx.size());
  for (std::size_t i : idx) out.samples.push_back(data.samples[i]);
  return out;
}

}  // namespace

Dataset load_mnist(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const std::string ipath = images.string(), lpath = labels.string();
  const auto ib = slurp(images);
  const auto lb = slurp(labels);

  const std::uint32_t imagic = read_be32(ib, 0, ipath, "magic");
  if (imagic != kImageMagic) throw ParseError(ipath, 0, "bad image magic " + std::to_string(imagic));
  const std::uint32_t lmagic = read_be32(lb, 0, lpath, "magic");
  if (lmagic != kLabelMagic) throw ParseError(lpath, 0, "bad label magic " + std::to_string(lmagic));

  const std::size_t count = read_be32(ib, 4, ipath, "image count");
  const std::size_t rows = read_be32(ib, 8, ipath, "row count");
  const std::size_t cols = read_be32(ib, 12, ipath, "column count");
  const std::size_t lcount = read_be32(lb, 4, lpath, "label count");
  if (lcount != count) {
    throw ParseError(lpath, 4, "label count " + std::to_string(lcount) + " != image count " + std::to_string(count));
  }
  if (rows == 0 || cols == 0 || rows > 65536 || cols > 65536) {
    throw ParseError(ipath, 8, "implausible raster " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  const std::size_t pixels = rows * cols;
  if (count > (ib.size() - 16) / pixels) {
    throw ParseError(ipath, ib.size(), "truncated pixel data, expected " + std::to_string(16 + count * pixels) + " bytes");
  }
  if (lb.size() < 8 + count) {
    throw ParseError(lpath, lb.size(), "truncated label data, expected " + std::to_string(8 + count) + " bytes");
  }

  Dataset out;
  out.samples.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    const unsigned label = lb[8 + n];
    if (label >= kClasses) throw ParseError(lpath, 8 + n, "label " + std::to_string(label) + " out of range");
    Sample s{Tensor(Shape{pixels}), Tensor(Shape{kClasses})};
    const unsigned char* px = ib.data() + 16 + n * pixels;
    for (std::size_t i = 0; i < pixels; ++i) s.x[i] = px[i] / 255.0;
    s.y[label] = 1.0;
    out.samples.push_back(std::move(s));
  }
  return out;
}

Sample synthetic_toy_sample(std::uint64_t seed, std::size_t inputs, std::size_t outputs) {
  if (outputs == 0) throw PreconditionError("toy sample needs at least one output");
  Rng rng(seed);
  Sample s{Tensor(Shape{inputs}), Tensor(Shape{outputs})};
  for (double& v : s.x.values()) v = rng.uniform();
  s.y[rng.below(outputs)] = 1.0;
  return s;
}

Dataset subset(const Dataset& data, std::size_t n, std::uint64_t seed) {
  if (n > data.size()) {
    throw PreconditionError("subset of " + std::to_string(n) + " from " + std::to_string(data.size()) + " samples");
  }
  return gather(data, draw_indices(data.size(), n, seed));
}

std::pair<Dataset, Dataset> disjoint_split(const Dataset& data, std::size_t n_first, std::size_t n_second,
                                           std::uint64_t seed) {
  if (n_first + n_second > data.size()) {
    throw PreconditionError("split of " + std::to_string(n_first) + " + " + std::to_string(n_second) + " from " +
                            std::to_string(data.size()) + " samples");
  }
  auto idx = draw_indices(data.size(), n_first + n_second, seed);
  std::vector<std::size_t> second(idx.begin() + static_cast<std::ptrdiff_t>(n_first), idx.end());
  idx.resize(n_first);
  return {gather(data, std::move(idx)), gather(data, std::move(second))};
}

std::size_t argmax(const Tensor& t) {
  if (t.empty()) throw PreconditionError("argmax of an empty tensor");
  std::size_t best = 0;
  for (std::size_t i = 1; i < t.size(); ++i)
    if (t[i] > t[best]) best = i;
  return best;
}

}  // namespace eqprop
