#include "eqprop/activation.hpp"

#include <cmath>

#include "eqprop/errors.hpp"

namespace eqprop {

Activation Activation::parse(std::string_view name) {
  if (name == "tanh") return Activation(ActivationKind::tanh);
  if (name == "sigmoid") return Activation(ActivationKind::sigmoid);
  if (name == "hard_sigmoid" || name == "hard-sigmoid") return Activation(ActivationKind::hard_sigmoid);
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

std::string Activation::name() const {
  switch (kind_) {
    case ActivationKind::tanh: return "tanh";
    case ActivationKind::sigmoid: return "sigmoid";
    case ActivationKind::hard_sigmoid: return "hard_sigmoid";
  }
  return "?";
}

namespace {

double logistic4(double x) { return 1.0 / (1.0 + std::exp(-4.0 * (x - 0.5))); }

}  // namespace

double Activation::eval(double x) const {
  switch (kind_) {
    case ActivationKind::tanh: return std::tanh(x);
    case ActivationKind::sigmoid: return logistic4(x);
    case ActivationKind::hard_sigmoid: return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x);
  }
  return 0.0;
}

double Activation::deriv(double x) const {
  switch (kind_) {
    case ActivationKind::tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case ActivationKind::sigmoid: {
      const double s = logistic4(x);
      return 4.0 * s * (1.0 - s);
    }
    case ActivationKind::hard_sigmoid: return (x > 0.0 && x < 1.0) ? 1.0 : 0.0;
  }
  return 0.0;
}

double Activation::second_deriv(double x) const {
  switch (kind_) {
    case ActivationKind::tanh: {
      const double t = std::tanh(x);
      return -2.0 * t * (1.0 - t * t);
    }
    case ActivationKind::sigmoid: {
      const double s = logistic4(x);
      return 16.0 * s * (1.0 - s) * (1.0 - 2.0 * s);
    }
    case ActivationKind::hard_sigmoid: return 0.0;
  }
  return 0.0;
}

Tensor Activation::eval(const Tensor& x) const {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = eval(x[i]);
  return out;
}

Tensor Activation::deriv(const Tensor& x) const {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = deriv(x[i]);
  return out;
}

Tensor Activation::second_deriv(const Tensor& x) const {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = second_deriv(x[i]);
  return out;
}

}  // namespace eqprop
