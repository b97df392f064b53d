#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "eqprop/models.hpp"

namespace eqprop {

/// Samples with row-major inputs. Models reshape x to their own input
/// shape when binding, so MNIST rasters serve both the fully connected
/// (784) and the convolutional (1×28×28) architectures.
struct Dataset {
  std::vector<Sample> samples;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }
};

/// Reads an IDX image file (magic 0x00000803) and label file (0x00000801).
/// Pixels are divided by 255; labels become one-hot vectors of size 10.
Dataset load_mnist(const std::filesystem::path& images, const std::filesystem::path& labels);

/// x ~ U[0,1]^inputs and a uniformly drawn one-hot target of size `outputs`.
Sample synthetic_toy_sample(std::uint64_t seed, std::size_t inputs = 10, std::size_t outputs = 5);

/// `n` samples drawn without replacement, kept in their original order.
Dataset subset(const Dataset& data, std::size_t n, std::uint64_t seed);

/// Two disjoint seeded draws of sizes n_first and n_second.
std::pair<Dataset, Dataset> disjoint_split(const Dataset& data, std::size_t n_first, std::size_t n_second,
                                           std::uint64_t seed);

/// Index of the largest entry, lowest index on ties.
std::size_t argmax(const Tensor& t);

}  // namespace eqprop
