// Energy-based setting: F = ∂Φ_ε/∂s with
//   Φ_ε = ½(1−ε)‖s‖² + ε Σ σ(sⁿ)ᵀ·W·σ(sᵐ)
// over the connected pairs, giving the leaky update
//   sⁿ ← (1−ε)sⁿ + ε σ′(sⁿ) ⊙ aⁿ,   aⁿ = Σ_m W·σ(sᵐ).
// The effective nudging strength is β·ε, and F may be followed by a clip to
// [0, 1] for training runs.

#include <algorithm>

#include "eqprop/errors.hpp"
#include "eqprop/models.hpp"

namespace eqprop {

namespace {

Tensor leaky_update(const Tensor& s, const Tensor& a, Activation act, double eps) {
  Tensor out(s.shape());
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = (1.0 - eps) * s[i] + eps * act.deriv(s[i]) * a[i];
  return out;
}

void add_target_force(Tensor& out, const Tensor& s0, const Nudge& nudge, double scale) {
  if (nudge.target.size() != s0.size()) {
    throw DimensionError("nudge: target " + shape_string(nudge.target.shape()) + " vs output " +
                         shape_string(s0.shape()));
  }
  const double k = nudge.beta * scale;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += k * (nudge.target[i] - s0[i]);
}

void clip_unit(Tensor& t) {
  for (double& v : t.values()) v = std::clamp(v, 0.0, 1.0);
}

/// v masked by the derivative of the [0, 1] clip applied after the free update.
Tensor clip_masked(const Tensor& v, const Tensor& pre) {
  Tensor out(v.shape());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = (pre[i] > 0.0 && pre[i] < 1.0) ? v[i] : 0.0;
  return out;
}

/// Diagonal part of the leaky Jacobian: ((1−ε) + ε σ″(s) ⊙ a) ⊙ v.
Tensor leaky_diag(const Tensor& s, const Tensor& a, const Tensor& v, Activation act, double eps) {
  Tensor out(s.shape());
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = ((1.0 - eps) + eps * act.second_deriv(s[i]) * a[i]) * v[i];
  return out;
}

/// ε σ′(s) ⊙ v.
Tensor scaled_slope(const Tensor& s, const Tensor& v, Activation act, double eps) {
  Tensor out(s.shape());
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = eps * act.deriv(s[i]) * v[i];
  return out;
}

void add_slope(Tensor& acc, const Tensor& s, const Tensor& v, Activation act) {
  for (std::size_t i = 0; i < s.size(); ++i) acc[i] += act.deriv(s[i]) * v[i];
}

void require_vector(const Tensor& x, std::size_t n, const char* what) {
  if (x.size() != n) {
    throw DimensionError(std::string(what) + ": expected " + std::to_string(n) + " values, got " +
                         shape_string(x.shape()));
  }
}

// ---------------------------------------------------------------------------

class ToyModel final : public Model {
 public:
  explicit ToyModel(const ToyConfig& cfg) : cfg_(cfg) {
    if (!(cfg.epsilon >= 0.0 && cfg.epsilon <= 1.0)) throw ConfigError("toy: epsilon must lie in [0, 1]");
  }

  std::string id() const override { return "toy"; }
  Setting setting() const override { return Setting::energy_based; }
  Activation activation() const override { return cfg_.activation; }
  Shape input_shape() const override { return {cfg_.input}; }
  std::vector<ParamSpec> param_layout() const override {
    return {{"W01", {cfg_.output, cfg_.hidden}},
            {"W0x", {cfg_.output, cfg_.input}},
            {"W1x", {cfg_.hidden, cfg_.input}}};
  }
  std::vector<std::string> layer_names() const override { return {"s0", "s1"}; }
  std::vector<std::size_t> layer_depths() const override { return {0, 1}; }
  bool is_bipartite() const override { return false; }
  double nudge_scale() const override { return cfg_.epsilon; }

  NeuralState initial_state() const override {
    NeuralState st;
    st.s.emplace_back(Shape{cfg_.output});
    st.s.emplace_back(Shape{cfg_.hidden});
    return st;
  }

  // terms: W0x·σ(x), W1x·σ(x), σ(x)
  InputDrive bind(const ParamSet& p, const Tensor& x) const override {
    check_params(p);
    require_vector(x, cfg_.input, "toy input");
    InputDrive d;
    d.x = x.reshaped({x.size()});
    Tensor sx = cfg_.activation.eval(d.x);
    d.terms.push_back(matvec(p[1], sx));
    d.terms.push_back(matvec(p[2], sx));
    d.terms.push_back(std::move(sx));
    return d;
  }

  NeuralState step(const ParamSet& p, const NeuralState& st, const InputDrive& d,
                   const Nudge* nudge) const override {
    NeuralState next = free_update(p, st, d);
    if (nudge) add_target_force(next.s[0], st.s[0], *nudge, cfg_.epsilon);
    if (cfg_.clip)
      for (Tensor& t : next.s) clip_unit(t);
    return next;
  }

  double primitive(const ParamSet& p, const NeuralState& st, const InputDrive& d) const override {
    const Activation act = cfg_.activation;
    const Tensor s0 = act.eval(st.s[0]), s1 = act.eval(st.s[1]);
    const double leak = 0.5 * (gdot(st.s[0], st.s[0]) + gdot(st.s[1], st.s[1]));
    const double coupling = gdot(s0, matvec(p[0], s1)) + gdot(s0, d.terms[0]) + gdot(s1, d.terms[1]);
    return (1.0 - cfg_.epsilon) * leak + cfg_.epsilon * coupling;
  }

  ParamGrad phi_param_grad(const ParamSet& p, const NeuralState& st, const InputDrive& d) const override {
    const Activation act = cfg_.activation;
    const Tensor s0 = act.eval(st.s[0]), s1 = act.eval(st.s[1]);
    ParamGrad g = p.zeros_like();
    add_outer(g[0], s0, s1, cfg_.epsilon);
    add_outer(g[1], s0, d.terms[2], cfg_.epsilon);
    add_outer(g[2], s1, d.terms[2], cfg_.epsilon);
    return g;
  }

  NeuralState vjp_state(const ParamSet& p, const NeuralState& st, const InputDrive& d,
                        const NeuralState& v) const override {
    require_same_layout(st, v, "toy vjp_state");
    const Activation act = cfg_.activation;
    const double eps = cfg_.epsilon;
    const auto a = pre_activations(p, st, d);
    const auto vm = masked(st, a, v);
    const Tensor u0 = scaled_slope(st.s[0], vm[0], act, eps);
    const Tensor u1 = scaled_slope(st.s[1], vm[1], act, eps);
    NeuralState g;
    g.s.push_back(leaky_diag(st.s[0], a[0], vm[0], act, eps));
    g.s.push_back(leaky_diag(st.s[1], a[1], vm[1], act, eps));
    add_slope(g.s[0], st.s[0], matvec(p[0], u1), act);
    add_slope(g.s[1], st.s[1], matvec_t(p[0], u0), act);
    return g;
  }

  ParamGrad vjp_param(const ParamSet& p, const NeuralState& st, const InputDrive& d,
                      const NeuralState& v) const override {
    require_same_layout(st, v, "toy vjp_param");
    const Activation act = cfg_.activation;
    const double eps = cfg_.epsilon;
    const auto a = pre_activations(p, st, d);
    const auto vm = masked(st, a, v);
    const Tensor u0 = scaled_slope(st.s[0], vm[0], act, eps);
    const Tensor u1 = scaled_slope(st.s[1], vm[1], act, eps);
    const Tensor s0 = act.eval(st.s[0]), s1 = act.eval(st.s[1]);
    ParamGrad g = p.zeros_like();
    add_outer(g[0], u0, s1);
    add_outer(g[0], s0, u1);
    add_outer(g[1], u0, d.terms[2]);
    add_outer(g[2], u1, d.terms[2]);
    return g;
  }

 private:
  std::vector<Tensor> pre_activations(const ParamSet& p, const NeuralState& st, const InputDrive& d) const {
    const Activation act = cfg_.activation;
    std::vector<Tensor> a;
    a.push_back(matvec(p[0], act.eval(st.s[1])) + d.terms[0]);
    a.push_back(matvec_t(p[0], act.eval(st.s[0])) + d.terms[1]);
    return a;
  }

  NeuralState free_update(const ParamSet& p, const NeuralState& st, const InputDrive& d) const {
    const auto a = pre_activations(p, st, d);
    NeuralState next;
    next.s.push_back(leaky_update(st.s[0], a[0], cfg_.activation, cfg_.epsilon));
    next.s.push_back(leaky_update(st.s[1], a[1], cfg_.activation, cfg_.epsilon));
    return next;
  }

  std::vector<Tensor> masked(const NeuralState& st, const std::vector<Tensor>& a, const NeuralState& v) const {
    if (!cfg_.clip) return v.s;
    std::vector<Tensor> out;
    for (std::size_t n = 0; n < 2; ++n)
      out.push_back(clip_masked(v.s[n], leaky_update(st.s[n], a[n], cfg_.activation, cfg_.epsilon)));
    return out;
  }

  ToyConfig cfg_;
};

// ---------------------------------------------------------------------------

class EnergyLayeredModel final : public Model {
 public:
  explicit EnergyLayeredModel(const LayeredConfig& cfg) : cfg_(cfg), dynamic_(cfg.sizes.size() - 1) {
    if (cfg.sizes.size() < 2) throw ConfigError("layered model needs an output and an input layer");
    if (!(cfg.epsilon >= 0.0 && cfg.epsilon <= 1.0)) throw ConfigError("epsilon must lie in [0, 1]");
  }

  std::string id() const override { return "eb-" + std::to_string(dynamic_ - 1) + "h"; }
  Setting setting() const override { return Setting::energy_based; }
  Activation activation() const override { return cfg_.activation; }
  Shape input_shape() const override { return {cfg_.sizes.back()}; }
  std::vector<ParamSpec> param_layout() const override {
    std::vector<ParamSpec> out;
    for (std::size_t n = 0; n < dynamic_; ++n)
      out.push_back({"W" + std::to_string(n) + std::to_string(n + 1), {cfg_.sizes[n], cfg_.sizes[n + 1]}});
    return out;
  }
  std::vector<std::string> layer_names() const override {
    std::vector<std::string> out;
    for (std::size_t n = 0; n < dynamic_; ++n) out.push_back("s" + std::to_string(n));
    return out;
  }
  std::vector<std::size_t> layer_depths() const override {
    std::vector<std::size_t> out;
    for (std::size_t n = 0; n < dynamic_; ++n) out.push_back(n);
    return out;
  }
  bool is_bipartite() const override { return false; }
  double nudge_scale() const override { return cfg_.epsilon; }

  NeuralState initial_state() const override {
    NeuralState st;
    for (std::size_t n = 0; n < dynamic_; ++n) st.s.emplace_back(Shape{cfg_.sizes[n]});
    return st;
  }

  // terms: W_{L−1,L}·σ(x), σ(x)
  InputDrive bind(const ParamSet& p, const Tensor& x) const override {
    check_params(p);
    require_vector(x, cfg_.sizes.back(), "layered input");
    InputDrive d;
    d.x = x.reshaped({x.size()});
    Tensor sx = cfg_.activation.eval(d.x);
    d.terms.push_back(matvec(p[dynamic_ - 1], sx));
    d.terms.push_back(std::move(sx));
    return d;
  }

  NeuralState step(const ParamSet& p, const NeuralState& st, const InputDrive& d,
                   const Nudge* nudge) const override {
    const auto a = pre_activations(p, st, d);
    NeuralState next;
    for (std::size_t n = 0; n < dynamic_; ++n)
      next.s.push_back(leaky_update(st.s[n], a[n], cfg_.activation, cfg_.epsilon));
    if (nudge) add_target_force(next.s[0], st.s[0], *nudge, cfg_.epsilon);
    if (cfg_.clip)
      for (Tensor& t : next.s) clip_unit(t);
    return next;
  }

  double primitive(const ParamSet& p, const NeuralState& st, const InputDrive& d) const override {
    const auto sig = activations(st);
    double leak = 0.0, coupling = 0.0;
    for (std::size_t n = 0; n < dynamic_; ++n) {
      leak += 0.5 * gdot(st.s[n], st.s[n]);
      coupling += gdot(sig[n], n + 1 < dynamic_ ? matvec(p[n], sig[n + 1]) : d.terms[0]);
    }
    return (1.0 - cfg_.epsilon) * leak + cfg_.epsilon * coupling;
  }

  ParamGrad phi_param_grad(const ParamSet& p, const NeuralState& st, const InputDrive& d) const override {
    const auto sig = activations(st);
    ParamGrad g = p.zeros_like();
    for (std::size_t n = 0; n < dynamic_; ++n)
      add_outer(g[n], sig[n], n + 1 < dynamic_ ? sig[n + 1] : d.terms[1], cfg_.epsilon);
    return g;
  }

  NeuralState vjp_state(const ParamSet& p, const NeuralState& st, const InputDrive& d,
                        const NeuralState& v) const override {
    require_same_layout(st, v, "eb vjp_state");
    const Activation act = cfg_.activation;
    const double eps = cfg_.epsilon;
    const auto a = pre_activations(p, st, d);
    const auto vm = masked(st, a, v);
    std::vector<Tensor> u;
    for (std::size_t n = 0; n < dynamic_; ++n) u.push_back(scaled_slope(st.s[n], vm[n], act, eps));
    NeuralState g;
    for (std::size_t n = 0; n < dynamic_; ++n) {
      Tensor gn = leaky_diag(st.s[n], a[n], vm[n], act, eps);
      Tensor coupled(st.s[n].shape());
      if (n > 0) coupled += matvec_t(p[n - 1], u[n - 1]);
      if (n + 1 < dynamic_) coupled += matvec(p[n], u[n + 1]);
      add_slope(gn, st.s[n], coupled, act);
      g.s.push_back(std::move(gn));
    }
    return g;
  }

  ParamGrad vjp_param(const ParamSet& p, const NeuralState& st, const InputDrive& d,
                      const NeuralState& v) const override {
    require_same_layout(st, v, "eb vjp_param");
    const Activation act = cfg_.activation;
    const double eps = cfg_.epsilon;
    const auto a = pre_activations(p, st, d);
    const auto vm = masked(st, a, v);
    const auto sig = activations(st);
    std::vector<Tensor> u;
    for (std::size_t n = 0; n < dynamic_; ++n) u.push_back(scaled_slope(st.s[n], vm[n], act, eps));
    ParamGrad g = p.zeros_like();
    for (std::size_t n = 0; n < dynamic_; ++n) {
      if (n + 1 < dynamic_) {
        add_outer(g[n], u[n], sig[n + 1]);
        add_outer(g[n], sig[n], u[n + 1]);
      } else {
        add_outer(g[n], u[n], d.terms[1]);
      }
    }
    return g;
  }

 private:
  std::vector<Tensor> activations(const NeuralState& st) const {
    std::vector<Tensor> sig;
    for (const Tensor& t : st.s) sig.push_back(cfg_.activation.eval(t));
    return sig;
  }

  std::vector<Tensor> pre_activations(const ParamSet& p, const NeuralState& st, const InputDrive& d) const {
    if (st.s.size() != dynamic_) throw DimensionError(id() + ": state has wrong layer count");
    const auto sig = activations(st);
    std::vector<Tensor> a;
    for (std::size_t n = 0; n < dynamic_; ++n) {
      Tensor an = n + 1 < dynamic_ ? matvec(p[n], sig[n + 1]) : d.terms[0];
      if (n > 0) an += matvec_t(p[n - 1], sig[n - 1]);
      a.push_back(std::move(an));
    }
    return a;
  }

  std::vector<Tensor> masked(const NeuralState& st, const std::vector<Tensor>& a, const NeuralState& v) const {
    if (!cfg_.clip) return v.s;
    std::vector<Tensor> out;
    for (std::size_t n = 0; n < dynamic_; ++n)
      out.push_back(clip_masked(v.s[n], leaky_update(st.s[n], a[n], cfg_.activation, cfg_.epsilon)));
    return out;
  }

  LayeredConfig cfg_;
  std::size_t dynamic_;  // number of non-clamped layers
};

}  // namespace

std::unique_ptr<Model> make_toy_model(const ToyConfig& cfg) { return std::make_unique<ToyModel>(cfg); }

std::unique_ptr<Model> make_energy_layered_model(const LayeredConfig& cfg) {
  return std::make_unique<EnergyLayeredModel>(cfg);
}

}  // namespace eqprop
