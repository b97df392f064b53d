#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "eqprop/ops.hpp"
#include "eqprop/tensor.hpp"

namespace eqprop {

/// Named parameter groups θ, ordered from the output side to the input side.
/// Gradients and updates share this type.
struct ParamSet {
  std::vector<std::string> names;
  std::vector<Tensor> tensors;

  std::size_t size() const noexcept { return tensors.size(); }
  Tensor& operator[](std::size_t i) { return tensors[i]; }
  const Tensor& operator[](std::size_t i) const { return tensors[i]; }
  std::size_t index_of(std::string_view name) const;
  const Tensor& get(std::string_view name) const { return tensors[index_of(name)]; }

  /// Same names and shapes, all zeros.
  ParamSet zeros_like() const;

  ParamSet& operator+=(const ParamSet& other);
  ParamSet& operator-=(const ParamSet& other);
  ParamSet& operator*=(double factor);
  ParamSet& add_scaled(const ParamSet& other, double factor);

  friend bool operator==(const ParamSet&, const ParamSet&) = default;
};

using ParamGrad = ParamSet;

void require_same_layout(const ParamSet& a, const ParamSet& b, const char* what);
std::size_t total_size(const ParamSet& p);

/// One time slice of the dynamics.
///
/// `s[0]` is the output layer; layers are labelled backwards towards the
/// input. `h` holds convolutional layers (h[0] feeds the classifier) and
/// `pool[n]` the argmax map of the pooling that produced h[n] at the most
/// recent step. Both are empty for fully connected models.
struct NeuralState {
  std::vector<Tensor> s;
  std::vector<Tensor> h;
  std::vector<PoolIndex> pool;

  std::size_t layer_count() const noexcept { return s.size() + h.size(); }
  /// Layers in record order: all of `s`, then all of `h`.
  Tensor& layer(std::size_t i) { return i < s.size() ? s[i] : h[i - s.size()]; }
  const Tensor& layer(std::size_t i) const { return i < s.size() ? s[i] : h[i - s.size()]; }

  /// Same layer shapes, zero values, no pooling indices.
  NeuralState zeros_like() const;

  NeuralState& operator+=(const NeuralState& other);
  NeuralState& operator-=(const NeuralState& other);
  NeuralState& operator*=(double factor);
  NeuralState& add_scaled(const NeuralState& other, double factor);

  friend bool operator==(const NeuralState&, const NeuralState&) = default;
};

void require_same_layout(const NeuralState& a, const NeuralState& b, const char* what);
double max_abs(const NeuralState& st);
double max_abs_diff(const NeuralState& a, const NeuralState& b);
bool all_finite(const NeuralState& st);
double gdot(const NeuralState& a, const NeuralState& b);

}  // namespace eqprop
