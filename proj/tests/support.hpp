#pragma once

#include <cstdint>
#include <functional>
#include <random>

#include "eqprop/models.hpp"
#include "eqprop/state.hpp"
#include "eqprop/tensor.hpp"

namespace eqprop::testing {

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(shape);
  for (double& v : t.values()) v = u(rng);
  return t;
}

inline ParamSet random_params(const Model& m, std::mt19937_64& rng, double scale = 0.5) {
  ParamSet p = m.zero_params();
  for (Tensor& t : p.tensors) t = random_tensor(t.shape(), rng, -scale, scale);
  return p;
}

/// Random layer values; pooling indices come from one free step so they are
/// consistent with the parameters.
inline NeuralState random_state(const Model& m, const ParamSet& p, const InputDrive& d, std::mt19937_64& rng,
                                double lo = -1.0, double hi = 1.0) {
  NeuralState st = m.initial_state();
  for (std::size_t i = 0; i < st.layer_count(); ++i) st.layer(i) = random_tensor(st.layer(i).shape(), rng, lo, hi);
  if (!st.pool.empty()) {
    st.pool = m.step(p, st, d, nullptr).pool;
  }
  return st;
}

inline NeuralState random_like(const NeuralState& st, std::mt19937_64& rng) {
  NeuralState v = st.zeros_like();
  for (std::size_t i = 0; i < v.layer_count(); ++i) v.layer(i) = random_tensor(v.layer(i).shape(), rng);
  return v;
}

inline double central_difference(double& x, double h, const std::function<double()>& f) {
  const double saved = x;
  x = saved + h;
  const double fp = f();
  x = saved - h;
  const double fm = f();
  x = saved;
  return (fp - fm) / (2 * h);
}

}  // namespace eqprop::testing
