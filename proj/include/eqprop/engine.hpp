#pragma once

#include <cstddef>
#include <vector>

#include "eqprop/models.hpp"
#include "eqprop/state.hpp"

namespace eqprop {

/// States with any |value| above this are treated as diverged.
inline constexpr double kDivergenceBound = 1e6;

enum class Storage { lean, full };

/// Slices of a free relaxation. `slices[i]` is the state after
/// `first_step + i` steps; the last slice is s_T.
struct Trajectory {
  std::vector<NeuralState> slices;
  std::size_t first_step = 0;
  std::size_t steps = 0;                 // T
  double residual = 0.0;                 // ‖s_T − s_{T−1}‖∞, +∞ when T = 0

  const NeuralState& final_state() const { return slices.back(); }
  /// s_{T−k}; throws PreconditionError when that slice was not kept.
  const NeuralState& from_end(std::size_t k) const;
};

/// Runs the free dynamics T steps from the zero state. Lean storage keeps
/// the last `keep` + 1 slices.
Trajectory relax_free(const Model& model, const ParamSet& params, const InputDrive& drive, std::size_t T,
                      Storage storage = Storage::lean, std::size_t keep = 1);

struct EpResult {
  /// Δ_s(t) = (s^β_{t+1} − s^β_t) / (β·scale), t = 0..K−1.
  std::vector<NeuralState> delta_s;
  /// Δ_θ(t) = (∂Φ/∂θ(s^β_t) − ∂Φ/∂θ(s^β_{t−1})) / (β·scale), t = 1..K.
  std::vector<ParamGrad> delta_theta;
  /// (∂Φ/∂θ(s^β_K) − ∂Φ/∂θ(s^β_0)) / (β·scale).
  ParamGrad total;
  NeuralState final_state;
};

/// Second phase of EP starting from `start` (normally s_T). With
/// `record_series` false only `total` and `final_state` are filled.
EpResult run_ep_phase(const Model& model, const ParamSet& params, const InputDrive& drive, const Tensor& y,
                      const NeuralState& start, double beta, std::size_t K, bool record_series = true);

struct BpttResult {
  /// ∇_s(t), t = 0..K−1, with ∇_s(0) = ∂ℓ/∂s(s_T).
  std::vector<NeuralState> grad_s;
  /// ∇_θ(t), t = 1..K.
  std::vector<ParamGrad> grad_theta;
  /// Σ_{t=1..K} ∇_θ(t).
  ParamGrad total;
};

/// Truncated backward recurrence over the last K transitions of `traj`.
BpttResult run_bptt(const Model& model, const ParamSet& params, const InputDrive& drive, const Trajectory& traj,
                    const Tensor& y, std::size_t K, bool record_series = true);

}  // namespace eqprop
