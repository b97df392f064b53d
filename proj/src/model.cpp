#include "eqprop/models.hpp"

#include "eqprop/errors.hpp"

namespace eqprop {

std::string setting_name(Setting s) {
  return s == Setting::energy_based ? "energy_based" : "prototypical";
}

void Hyperparams::validate(Setting setting) const {
  if (K < 1) throw ConfigError("K must be at least 1");
  if (T < K) throw ConfigError("T must be at least K (T=" + std::to_string(T) + ", K=" + std::to_string(K) + ")");
  if (!(beta > 0.0)) throw ConfigError("beta must be positive");
  if (setting == Setting::energy_based && !(epsilon > 0.0 && epsilon <= 1.0)) {
    throw ConfigError("epsilon must lie in (0, 1]");
  }
}

std::size_t Model::output_size() const { return initial_state().s.at(0).size(); }

std::vector<std::string> Model::param_names() const {
  std::vector<std::string> names;
  for (const ParamSpec& p : param_layout()) names.push_back(p.name);
  return names;
}

ParamSet Model::zero_params() const {
  ParamSet p;
  for (const ParamSpec& spec : param_layout()) {
    p.names.push_back(spec.name);
    p.tensors.emplace_back(spec.shape);
  }
  return p;
}

void Model::check_params(const ParamSet& params) const {
  const auto layout = param_layout();
  if (params.size() != layout.size()) {
    throw DimensionError(id() + ": expected " + std::to_string(layout.size()) + " parameter groups, got " +
                         std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (params.names[i] != layout[i].name || params[i].shape() != layout[i].shape) {
      throw DimensionError(id() + ": parameter group " + std::to_string(i) + " is " + params.names[i] +
                           shape_string(params[i].shape()) + ", expected " + layout[i].name +
                           shape_string(layout[i].shape));
    }
  }
}

NeuralState Model::step_free(const ParamSet& params, const NeuralState& state, const Tensor& x) const {
  return step(params, state, bind(params, x), nullptr);
}

NeuralState Model::step_nudged(const ParamSet& params, const NeuralState& state, const Tensor& x,
                               const Tensor& y, double beta) const {
  const Nudge nudge{y, beta};
  return step(params, state, bind(params, x), &nudge);
}

double cost(const NeuralState& state, const Tensor& y) {
  const Tensor& out = state.s.at(0);
  if (out.size() != y.size()) {
    throw DimensionError("cost: output " + shape_string(out.shape()) + " vs target " + shape_string(y.shape()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double d = out[i] - y[i];
    acc += d * d;
  }
  return 0.5 * acc;
}

NeuralState cost_grad(const NeuralState& state, const Tensor& y) {
  const Tensor& out = state.s.at(0);
  if (out.size() != y.size()) {
    throw DimensionError("cost_grad: output " + shape_string(out.shape()) + " vs target " +
                         shape_string(y.shape()));
  }
  NeuralState g = state.zeros_like();
  for (std::size_t i = 0; i < y.size(); ++i) g.s[0][i] = out[i] - y[i];
  return g;
}

}  // namespace eqprop
