#pragma once

#include <string>
#include <string_view>

#include "eqprop/tensor.hpp"

namespace eqprop {

enum class ActivationKind { tanh, sigmoid, hard_sigmoid };

/// Pointwise nonlinearity with analytic first and second derivatives.
///
/// `sigmoid` is the shifted, steepened logistic 1 / (1 + exp(-4 (x - 1/2)))
/// whose range and slope at 1/2 match the hard version max(min(x, 1), 0).
/// The hard sigmoid's derivative is 1 strictly inside (0, 1) and 0 elsewhere,
/// including the kinks, so saturated units pass no signal.
class Activation {
 public:
  constexpr explicit Activation(ActivationKind kind = ActivationKind::tanh) : kind_(kind) {}

  static Activation parse(std::string_view name);

  ActivationKind kind() const noexcept { return kind_; }
  std::string name() const;

  double eval(double x) const;
  double deriv(double x) const;
  double second_deriv(double x) const;

  Tensor eval(const Tensor& x) const;
  Tensor deriv(const Tensor& x) const;
  Tensor second_deriv(const Tensor& x) const;

  friend bool operator==(Activation a, Activation b) { return a.kind_ == b.kind_; }

 private:
  ActivationKind kind_;
};

}  // namespace eqprop
