#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "eqprop/activation.hpp"
#include "eqprop/ops.hpp"
#include "eqprop/state.hpp"
#include "eqprop/tensor.hpp"

namespace eqprop {

enum class Setting { energy_based, prototypical };

std::string setting_name(Setting s);

/// Recurrent hyperparameters shared by both learning algorithms.
struct Hyperparams {
  std::size_t T = 100;   // first-phase steps
  std::size_t K = 10;    // second-phase steps
  double beta = 0.1;     // nudging strength
  double epsilon = 1.0;  // leak discretization, energy-based only

  /// Throws ConfigError unless T ≥ K ≥ 1, β > 0 and (for energy-based) 0 < ε ≤ 1.
  void validate(Setting setting) const;
};

struct ParamSpec {
  std::string name;
  Shape shape;
};

/// Static input x and one-hot target y.
struct Sample {
  Tensor x;
  Tensor y;
};

/// Input-dependent terms of the dynamics. The input is clamped, so these are
/// computed once per sample and reused at every step.
struct InputDrive {
  Tensor x;
  std::vector<Tensor> terms;
  std::vector<PoolIndex> pool;
};

/// Output-layer force β·scale·(y − s⁰) of the second phase.
struct Nudge {
  const Tensor& target;
  double beta;
};

/// A convergent RNN with static input: transition function F, the primitive
/// Φ whose parameter gradient drives EP, and transpose-Jacobian products of
/// F for BPTT.
///
/// Jacobian products are exact for the transition actually executed by
/// `step` without nudging, including the activation derivative and, in the
/// energy-based setting, the σ″ term of the leaky rule and the clip mask.
/// The primitive of the prototypical and convolutional settings ignores σ,
/// so their EP updates only approximate the BPTT gradients.
class Model {
 public:
  virtual ~Model() = default;

  virtual std::string id() const = 0;
  virtual Setting setting() const = 0;
  virtual Activation activation() const = 0;
  virtual Shape input_shape() const = 0;
  virtual std::vector<ParamSpec> param_layout() const = 0;
  /// Layer labels in NeuralState record order ("s0", "s1", ..., "h0", ...).
  virtual std::vector<std::string> layer_names() const = 0;
  /// Distance of each layer from the output layer along the connection graph.
  virtual std::vector<std::size_t> layer_depths() const = 0;
  /// True when every connection joins adjacent layers and there is no leak,
  /// which is what makes BPTT/EP processes vanish on alternating steps.
  virtual bool is_bipartite() const = 0;

  /// The zero state every relaxation starts from.
  virtual NeuralState initial_state() const = 0;

  virtual InputDrive bind(const ParamSet& params, const Tensor& x) const = 0;

  /// One synchronous update of every layer; `nudge` adds the output force.
  virtual NeuralState step(const ParamSet& params, const NeuralState& state, const InputDrive& drive,
                           const Nudge* nudge) const = 0;

  /// Φ(x, s, θ).
  virtual double primitive(const ParamSet& params, const NeuralState& state,
                           const InputDrive& drive) const = 0;

  /// ∂Φ/∂θ at the given state.
  virtual ParamGrad phi_param_grad(const ParamSet& params, const NeuralState& state,
                                   const InputDrive& drive) const = 0;

  /// ∂F/∂s(x, s, θ)ᵀ·v for the free transition.
  virtual NeuralState vjp_state(const ParamSet& params, const NeuralState& state,
                                const InputDrive& drive, const NeuralState& v) const = 0;

  /// ∂F/∂θ(x, s, θ)ᵀ·v for the free transition.
  virtual ParamGrad vjp_param(const ParamSet& params, const NeuralState& state,
                              const InputDrive& drive, const NeuralState& v) const = 0;

  /// Multiplier of β in the nudge term: ε for energy-based models, 1 otherwise.
  virtual double nudge_scale() const = 0;

  std::size_t output_size() const;
  std::vector<std::string> param_names() const;
  /// Zero-valued parameters with the model's layout.
  ParamSet zero_params() const;
  void check_params(const ParamSet& params) const;

  NeuralState step_free(const ParamSet& params, const NeuralState& state, const Tensor& x) const;
  NeuralState step_nudged(const ParamSet& params, const NeuralState& state, const Tensor& x,
                          const Tensor& y, double beta) const;
};

/// ½‖s⁰ − y‖².
double cost(const NeuralState& state, const Tensor& y);
/// Gradient of `cost` with respect to every layer; nonzero on s⁰ only.
NeuralState cost_grad(const NeuralState& state, const Tensor& y);

// ---------------------------------------------------------------------------
// Architectures

/// Output, hidden and (clamped) input neurons all mutually connected, no
/// lateral connections, energy-based leaky dynamics.
struct ToyConfig {
  std::size_t output = 5;
  std::size_t hidden = 50;
  std::size_t input = 10;
  Activation activation{ActivationKind::tanh};
  double epsilon = 0.08;
  bool clip = false;
};

/// Chain of layers, sizes listed from the output to the (clamped) input,
/// with tied weights W_{n,n+1} between consecutive layers.
struct LayeredConfig {
  std::vector<std::size_t> sizes{10, 512, 784};
  Activation activation{ActivationKind::tanh};
  double epsilon = 0.08;  // energy-based only
  bool clip = false;      // energy-based only
};

/// Convolution-pooling layers feeding a fully connected classifier.
/// `fc_sizes` runs from the output; `conv_channels` from h⁰ (next to the
/// classifier) towards the input.
struct ConvConfig {
  std::vector<std::size_t> fc_sizes{10};
  std::vector<std::size_t> conv_channels{64, 32};
  std::size_t input_channels = 1;
  std::size_t input_extent = 28;
  ConvSpec conv{5, 0, 2};
  Activation activation{ActivationKind::hard_sigmoid};
};

std::unique_ptr<Model> make_toy_model(const ToyConfig& cfg);
std::unique_ptr<Model> make_energy_layered_model(const LayeredConfig& cfg);
std::unique_ptr<Model> make_prototypical_layered_model(const LayeredConfig& cfg);
std::unique_ptr<Model> make_conv_model(const ConvConfig& cfg);

}  // namespace eqprop
