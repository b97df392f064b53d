#include "eqprop/state.hpp"

#include <algorithm>

#include "eqprop/errors.hpp"

namespace eqprop {

std::size_t ParamSet::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return i;
  throw DimensionError("no parameter group named '" + std::string(name) + "'");
}

ParamSet ParamSet::zeros_like() const {
  ParamSet out;
  out.names = names;
  out.tensors.reserve(tensors.size());
  for (const Tensor& t : tensors) out.tensors.push_back(Tensor::zeros_like(t));
  return out;
}

void require_same_layout(const ParamSet& a, const ParamSet& b, const char* what) {
  if (a.names != b.names || a.tensors.size() != b.tensors.size()) {
    throw DimensionError(std::string(what) + ": parameter groups differ");
  }
  for (std::size_t i = 0; i < a.size(); ++i) require_same_shape(a[i], b[i], what);
}

std::size_t total_size(const ParamSet& p) {
  std::size_t n = 0;
  for (const Tensor& t : p.tensors) n += t.size();
  return n;
}

ParamSet& ParamSet::operator+=(const ParamSet& other) { return add_scaled(other, 1.0); }
ParamSet& ParamSet::operator-=(const ParamSet& other) { return add_scaled(other, -1.0); }

ParamSet& ParamSet::operator*=(double factor) {
  for (Tensor& t : tensors) t *= factor;
  return *this;
}

ParamSet& ParamSet::add_scaled(const ParamSet& other, double factor) {
  require_same_layout(*this, other, "ParamSet::add_scaled");
  for (std::size_t i = 0; i < size(); ++i) tensors[i].add_scaled(other[i], factor);
  return *this;
}

NeuralState NeuralState::zeros_like() const {
  NeuralState out;
  for (const Tensor& t : s) out.s.push_back(Tensor::zeros_like(t));
  for (const Tensor& t : h) out.h.push_back(Tensor::zeros_like(t));
  return out;
}

void require_same_layout(const NeuralState& a, const NeuralState& b, const char* what) {
  if (a.s.size() != b.s.size() || a.h.size() != b.h.size()) {
    throw DimensionError(std::string(what) + ": neural states have different layer counts");
  }
  for (std::size_t i = 0; i < a.layer_count(); ++i) require_same_shape(a.layer(i), b.layer(i), what);
}

NeuralState& NeuralState::operator+=(const NeuralState& other) { return add_scaled(other, 1.0); }
NeuralState& NeuralState::operator-=(const NeuralState& other) { return add_scaled(other, -1.0); }

NeuralState& NeuralState::operator*=(double factor) {
  for (std::size_t i = 0; i < layer_count(); ++i) layer(i) *= factor;
  return *this;
}

NeuralState& NeuralState::add_scaled(const NeuralState& other, double factor) {
  require_same_layout(*this, other, "NeuralState::add_scaled");
  for (std::size_t i = 0; i < layer_count(); ++i) layer(i).add_scaled(other.layer(i), factor);
  return *this;
}

double max_abs(const NeuralState& st) {
  double m = 0.0;
  for (std::size_t i = 0; i < st.layer_count(); ++i) m = std::max(m, max_abs(st.layer(i)));
  return m;
}

double max_abs_diff(const NeuralState& a, const NeuralState& b) {
  require_same_layout(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.layer_count(); ++i) m = std::max(m, max_abs_diff(a.layer(i), b.layer(i)));
  return m;
}

bool all_finite(const NeuralState& st) {
  for (std::size_t i = 0; i < st.layer_count(); ++i)
    if (!all_finite(st.layer(i))) return false;
  return true;
}

double gdot(const NeuralState& a, const NeuralState& b) {
  require_same_layout(a, b, "gdot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.layer_count(); ++i) acc += gdot(a.layer(i), b.layer(i));
  return acc;
}

}  // namespace eqprop
