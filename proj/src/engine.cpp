#include "eqprop/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "eqprop/errors.hpp"

namespace eqprop {

namespace {

void check_bounded(const NeuralState& st, const char* phase, std::size_t step) {
  if (!all_finite(st)) throw DivergenceError(phase, step, "non-finite state");
  const double m = max_abs(st);
  if (m > kDivergenceBound) throw DivergenceError(phase, step, "state magnitude " + std::to_string(m));
}

}  // namespace

const NeuralState& Trajectory::from_end(std::size_t k) const {
  if (k >= slices.size()) {
    throw PreconditionError("trajectory keeps " + std::to_string(slices.size()) + " slices, s_{T-" +
                            std::to_string(k) + "} requested");
  }
  return slices[slices.size() - 1 - k];
}

Trajectory relax_free(const Model& model, const ParamSet& params, const InputDrive& drive, std::size_t T,
                      Storage storage, std::size_t keep) {
  Trajectory traj;
  traj.steps = T;
  const std::size_t window = storage == Storage::full ? T + 1 : std::min(T, keep) + 1;
  traj.first_step = T + 1 - window;

  NeuralState st = model.initial_state();
  if (traj.first_step == 0) traj.slices.push_back(st);
  traj.residual = std::numeric_limits<double>::infinity();
  for (std::size_t t = 1; t <= T; ++t) {
    NeuralState next = model.step(params, st, drive, nullptr);
    check_bounded(next, "free phase", t);
    if (t == T) traj.residual = max_abs_diff(next, st);
    st = std::move(next);
    if (t >= traj.first_step) traj.slices.push_back(st);
  }
  return traj;
}

EpResult run_ep_phase(const Model& model, const ParamSet& params, const InputDrive& drive, const Tensor& y,
                      const NeuralState& start, double beta, std::size_t K, bool record_series) {
  if (!(beta * model.nudge_scale() > 0.0)) throw PreconditionError("EP phase needs a positive nudge beta * scale");
  const double inv = 1.0 / (beta * model.nudge_scale());
  const Nudge nudge{y, beta};

  EpResult out;
  const ParamGrad phi0 = model.phi_param_grad(params, start, drive);
  NeuralState st = start;
  ParamGrad phi_prev = phi0;
  for (std::size_t t = 1; t <= K; ++t) {
    NeuralState next = model.step(params, st, drive, &nudge);
    check_bounded(next, "nudged phase", t);
    if (record_series) {
      NeuralState ds = next;
      ds -= st;
      ds *= inv;
      out.delta_s.push_back(std::move(ds));
      ParamGrad phi = model.phi_param_grad(params, next, drive);
      ParamGrad dth = phi;
      dth -= phi_prev;
      dth *= inv;
      out.delta_theta.push_back(std::move(dth));
      phi_prev = std::move(phi);
    }
    st = std::move(next);
  }
  out.total = record_series || K == 0 ? std::move(phi_prev) : model.phi_param_grad(params, st, drive);
  out.total -= phi0;
  out.total *= inv;
  out.final_state = std::move(st);
  return out;
}

BpttResult run_bptt(const Model& model, const ParamSet& params, const InputDrive& drive, const Trajectory& traj,
                    const Tensor& y, std::size_t K, bool record_series) {
  if (K > traj.steps || traj.slices.size() < K + 1) {
    throw PreconditionError("BPTT over " + std::to_string(K) + " steps needs " + std::to_string(K + 1) +
                            " trajectory slices, have " + std::to_string(traj.slices.size()));
  }
  BpttResult out;
  out.total = params.zeros_like();
  NeuralState g = cost_grad(traj.final_state(), y);
  for (std::size_t t = 1; t <= K; ++t) {
    const NeuralState& at = traj.from_end(t);
    if (record_series) out.grad_s.push_back(g);
    ParamGrad gt = model.vjp_param(params, at, drive, g);
    out.total += gt;
    if (record_series) out.grad_theta.push_back(std::move(gt));
    if (t < K) g = model.vjp_state(params, at, drive, g);
  }
  return out;
}

}  // namespace eqprop
