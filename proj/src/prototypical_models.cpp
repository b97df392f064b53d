// Prototypical setting: sⁿ ← σ(aⁿ) with tied weights and no leak, nudged by
// β(y − s⁰) on the output. The primitive Φ = Σ sⁿ·W·sⁿ⁺¹ (plus the pooled
// convolution terms hⁿ • P(W * hⁿ⁺¹)) matches F only when σ is ignored.

#include <algorithm>

#include "eqprop/errors.hpp"
#include "eqprop/models.hpp"

namespace eqprop {

namespace {

void add_output_force(Tensor& out, const Tensor& s0, const Nudge& nudge) {
  if (nudge.target.size() != s0.size()) {
    throw DimensionError("nudge: target " + shape_string(nudge.target.shape()) + " vs output " +
                         shape_string(s0.shape()));
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += nudge.beta * (nudge.target[i] - s0[i]);
}

/// σ′(a) ⊙ v.
Tensor slope(const Tensor& a, const Tensor& v, Activation act) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = act.deriv(a[i]) * v[i];
  return out;
}

// ---------------------------------------------------------------------------

class PrototypicalLayeredModel final : public Model {
 public:
  explicit PrototypicalLayeredModel(const LayeredConfig& cfg) : cfg_(cfg) {
    if (cfg.sizes.size() < 2) throw ConfigError("layered model needs an output and an input layer");
    dynamic_ = cfg.sizes.size() - 1;
  }

  std::string id() const override { return "p-" + std::to_string(dynamic_ - 1) + "h"; }
  Setting setting() const override { return Setting::prototypical; }
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
  bool is_bipartite() const override { return true; }
  double nudge_scale() const override { return 1.0; }

  NeuralState initial_state() const override {
    NeuralState st;
    for (std::size_t n = 0; n < dynamic_; ++n) st.s.emplace_back(Shape{cfg_.sizes[n]});
    return st;
  }

  // terms: W_{L−1,L}·x
  InputDrive bind(const ParamSet& p, const Tensor& x) const override {
    check_params(p);
    if (x.size() != cfg_.sizes.back()) {
      throw DimensionError(id() + ": input " + shape_string(x.shape()) + ", expected " +
                           std::to_string(cfg_.sizes.back()) + " values");
    }
    InputDrive d;
    d.x = x.reshaped({x.size()});
    d.terms.push_back(matvec(p[dynamic_ - 1], d.x));
    return d;
  }

  NeuralState step(const ParamSet& p, const NeuralState& st, const InputDrive& d,
                   const Nudge* nudge) const override {
    const auto a = pre_activations(p, st, d);
    NeuralState next;
    for (std::size_t n = 0; n < dynamic_; ++n) next.s.push_back(cfg_.activation.eval(a[n]));
    if (nudge) add_output_force(next.s[0], st.s[0], *nudge);
    return next;
  }

  double primitive(const ParamSet& p, const NeuralState& st, const InputDrive& d) const override {
    double phi = 0.0;
    for (std::size_t n = 0; n < dynamic_; ++n)
      phi += gdot(st.s[n], n + 1 < dynamic_ ? matvec(p[n], st.s[n + 1]) : d.terms[0]);
    return phi;
  }

  ParamGrad phi_param_grad(const ParamSet& p, const NeuralState& st, const InputDrive& d) const override {
    ParamGrad g = p.zeros_like();
    for (std::size_t n = 0; n < dynamic_; ++n) add_outer(g[n], st.s[n], n + 1 < dynamic_ ? st.s[n + 1] : d.x);
    return g;
  }

  NeuralState vjp_state(const ParamSet& p, const NeuralState& st, const InputDrive& d,
                        const NeuralState& v) const override {
    require_same_layout(st, v, "p vjp_state");
    const auto u = slopes(p, st, d, v);
    NeuralState g;
    for (std::size_t n = 0; n < dynamic_; ++n) {
      Tensor gn(st.s[n].shape());
      if (n > 0) gn += matvec_t(p[n - 1], u[n - 1]);
      if (n + 1 < dynamic_) gn += matvec(p[n], u[n + 1]);
      g.s.push_back(std::move(gn));
    }
    return g;
  }

  ParamGrad vjp_param(const ParamSet& p, const NeuralState& st, const InputDrive& d,
                      const NeuralState& v) const override {
    require_same_layout(st, v, "p vjp_param");
    const auto u = slopes(p, st, d, v);
    ParamGrad g = p.zeros_like();
    for (std::size_t n = 0; n < dynamic_; ++n) {
      if (n + 1 < dynamic_) {
        add_outer(g[n], u[n], st.s[n + 1]);
        add_outer(g[n], st.s[n], u[n + 1]);
      } else {
        add_outer(g[n], u[n], d.x);
      }
    }
    return g;
  }

 private:
  std::vector<Tensor> pre_activations(const ParamSet& p, const NeuralState& st, const InputDrive& d) const {
    if (st.s.size() != dynamic_) throw DimensionError(id() + ": state has wrong layer count");
    for (std::size_t n = 0; n < dynamic_; ++n) {
      if (st.s[n].size() != cfg_.sizes[n]) {
        throw DimensionError(id() + ": layer s" + std::to_string(n) + " has shape " +
                             shape_string(st.s[n].shape()) + ", expected " + std::to_string(cfg_.sizes[n]));
      }
    }
    std::vector<Tensor> a;
    for (std::size_t n = 0; n < dynamic_; ++n) {
      Tensor an = n + 1 < dynamic_ ? matvec(p[n], st.s[n + 1]) : d.terms[0];
      if (n > 0) an += matvec_t(p[n - 1], st.s[n - 1]);
      a.push_back(std::move(an));
    }
    return a;
  }

  std::vector<Tensor> slopes(const ParamSet& p, const NeuralState& st, const InputDrive& d,
                             const NeuralState& v) const {
    const auto a = pre_activations(p, st, d);
    std::vector<Tensor> u;
    for (std::size_t n = 0; n < dynamic_; ++n) u.push_back(slope(a[n], v.s[n], cfg_.activation));
    return u;
  }

  LayeredConfig cfg_;
  std::size_t dynamic_ = 0;
};

// ---------------------------------------------------------------------------

/// fc layers s⁰..s^{F−1}, conv layers h⁰..h^{C−1}, clamped input h^C = x.
/// pool[n] records ind(W^conv_n * hⁿ⁺¹) from the step that produced the
/// state; the transpose term feeding hⁿ⁺¹ at the next step reads it, so
/// upstream signals are routed through the previous step's argmax.
class ConvModel final : public Model {
 public:
  explicit ConvModel(const ConvConfig& cfg) : cfg_(cfg) {
    if (cfg.fc_sizes.empty() || cfg.conv_channels.empty()) {
      throw ConfigError("conv model needs at least one fully connected and one convolutional layer");
    }
    const std::size_t nc = cfg.conv_channels.size();
    extent_.assign(nc + 1, 0);
    conv_extent_.assign(nc, 0);
    extent_[nc] = cfg.input_extent;
    for (std::size_t n = nc; n-- > 0;) {
      if (extent_[n + 1] + 2 * cfg.conv.padding < cfg.conv.filter_size) {
        throw ConfigError("conv model: feature map too small for the filter at layer h" + std::to_string(n));
      }
      conv_extent_[n] = cfg.conv.conv_extent(extent_[n + 1]);
      if (conv_extent_[n] % cfg.conv.pool_size != 0) {
        throw ConfigError("conv model: extent " + std::to_string(conv_extent_[n]) + " at h" +
                          std::to_string(n) + " not divisible by pool size");
      }
      extent_[n] = conv_extent_[n] / cfg.conv.pool_size;
    }
  }

  std::string id() const override { return "p-conv"; }
  Setting setting() const override { return Setting::prototypical; }
  Activation activation() const override { return cfg_.activation; }
  Shape input_shape() const override { return {cfg_.input_channels, cfg_.input_extent, cfg_.input_extent}; }

  std::vector<ParamSpec> param_layout() const override {
    std::vector<ParamSpec> out;
    const std::size_t nf = nfc(), nc = nconv();
    for (std::size_t n = 0; n < nf; ++n) {
      const std::size_t cols = n + 1 < nf ? cfg_.fc_sizes[n + 1] : shape_size(h_shape(0));
      out.push_back({"Wfc" + std::to_string(n) + std::to_string(n + 1), {cfg_.fc_sizes[n], cols}});
    }
    for (std::size_t n = 0; n < nc; ++n) {
      const std::size_t cin = n + 1 < nc ? cfg_.conv_channels[n + 1] : cfg_.input_channels;
      const std::size_t f = cfg_.conv.filter_size;
      out.push_back({"Wconv" + std::to_string(n) + std::to_string(n + 1), {cfg_.conv_channels[n], cin, f, f}});
    }
    return out;
  }

  std::vector<std::string> layer_names() const override {
    std::vector<std::string> out;
    for (std::size_t n = 0; n < nfc(); ++n) out.push_back("s" + std::to_string(n));
    for (std::size_t n = 0; n < nconv(); ++n) out.push_back("h" + std::to_string(n));
    return out;
  }
  std::vector<std::size_t> layer_depths() const override {
    std::vector<std::size_t> out;
    for (std::size_t n = 0; n < nfc() + nconv(); ++n) out.push_back(n);
    return out;
  }
  bool is_bipartite() const override { return true; }
  double nudge_scale() const override { return 1.0; }

  NeuralState initial_state() const override {
    NeuralState st;
    for (std::size_t sz : cfg_.fc_sizes) st.s.emplace_back(Shape{sz});
    for (std::size_t n = 0; n < nconv(); ++n) {
      st.h.emplace_back(h_shape(n));
      st.pool.push_back(PoolIndex::origin(h_shape(n), cfg_.conv.pool_size));
    }
    return st;
  }

  // terms: P(W^conv_{C−1} * x); pool: its argmax map
  InputDrive bind(const ParamSet& p, const Tensor& x) const override {
    check_params(p);
    const Shape in = input_shape();
    if (x.size() != shape_size(in)) {
      throw DimensionError("p-conv: input " + shape_string(x.shape()) + ", expected " + shape_string(in));
    }
    InputDrive d;
    d.x = x.reshaped(in);
    PoolResult pr = maxpool(conv2d(conv_w(p, nconv() - 1), d.x, cfg_.conv.padding), cfg_.conv.pool_size);
    d.terms.push_back(std::move(pr.values));
    d.pool.push_back(std::move(pr.indices));
    return d;
  }

  NeuralState step(const ParamSet& p, const NeuralState& st, const InputDrive& d,
                   const Nudge* nudge) const override {
    Pre pre = pre_activations(p, st, d);
    NeuralState next;
    for (std::size_t n = 0; n < nfc(); ++n) next.s.push_back(cfg_.activation.eval(pre.s[n]));
    for (std::size_t n = 0; n < nconv(); ++n) next.h.push_back(cfg_.activation.eval(pre.h[n]));
    next.pool = std::move(pre.pool);
    if (nudge) add_output_force(next.s[0], st.s[0], *nudge);
    return next;
  }

  double primitive(const ParamSet& p, const NeuralState& st, const InputDrive& d) const override {
    const std::size_t nf = nfc(), nc = nconv();
    double phi = 0.0;
    for (std::size_t n = 0; n < nf; ++n)
      phi += gdot(st.s[n], matvec(p[n], n + 1 < nf ? st.s[n + 1] : flatten(st.h[0])));
    for (std::size_t n = 0; n < nc; ++n) {
      const Tensor& below = n + 1 < nc ? st.h[n + 1] : d.x;
      phi += gdot(st.h[n], maxpool(conv2d(conv_w(p, n), below, cfg_.conv.padding), cfg_.conv.pool_size).values);
    }
    return phi;
  }

  ParamGrad phi_param_grad(const ParamSet& p, const NeuralState& st, const InputDrive& d) const override {
    const std::size_t nf = nfc(), nc = nconv();
    ParamGrad g = p.zeros_like();
    for (std::size_t n = 0; n < nf; ++n) add_outer(g[n], st.s[n], n + 1 < nf ? st.s[n + 1] : flatten(st.h[0]));
    for (std::size_t n = 0; n < nc; ++n) {
      const Tensor& below = n + 1 < nc ? st.h[n + 1] : d.x;
      const PoolIndex ind = n + 1 < nc ? fresh_index(p, n, below) : d.pool[0];
      g[nf + n] = kernel_grad(inverse_pool(st.h[n], ind), below, cfg_.conv.padding);
    }
    return g;
  }

  NeuralState vjp_state(const ParamSet& p, const NeuralState& st, const InputDrive& d,
                        const NeuralState& v) const override {
    require_same_layout(st, v, "p-conv vjp_state");
    const std::size_t nf = nfc(), nc = nconv();
    const Pre pre = pre_activations(p, st, d);
    const Slopes u = slopes(pre, v);
    NeuralState g;
    for (std::size_t n = 0; n < nf; ++n) {
      Tensor gn(st.s[n].shape());
      if (n > 0) gn += matvec_t(p[n - 1], u.s[n - 1]);
      gn += matvec(p[n], n + 1 < nf ? u.s[n + 1] : flatten(u.h[0]));
      g.s.push_back(std::move(gn));
    }
    for (std::size_t n = 0; n < nc; ++n) {
      Tensor gn = n == 0 ? unflatten(matvec_t(p[nf - 1], u.s[nf - 1]), h_shape(0))
                         : transpose_conv(conv_w(p, n - 1), inverse_pool(u.h[n - 1], pre.pool[n - 1]),
                                          cfg_.conv.padding);
      if (n + 1 < nc) gn += pool_gather(conv2d(conv_w(p, n), u.h[n + 1], cfg_.conv.padding), st.pool[n]);
      g.h.push_back(std::move(gn));
    }
    return g;
  }

  ParamGrad vjp_param(const ParamSet& p, const NeuralState& st, const InputDrive& d,
                      const NeuralState& v) const override {
    require_same_layout(st, v, "p-conv vjp_param");
    const std::size_t nf = nfc(), nc = nconv();
    const Pre pre = pre_activations(p, st, d);
    const Slopes u = slopes(pre, v);
    ParamGrad g = p.zeros_like();
    for (std::size_t n = 0; n < nf; ++n) {
      if (n + 1 < nf) {
        add_outer(g[n], u.s[n], st.s[n + 1]);
        add_outer(g[n], st.s[n], u.s[n + 1]);
      } else {
        add_outer(g[n], u.s[n], flatten(st.h[0]));
        add_outer(g[n], st.s[n], flatten(u.h[0]));
      }
    }
    for (std::size_t n = 0; n < nc; ++n) {
      const Tensor& below = n + 1 < nc ? st.h[n + 1] : d.x;
      Tensor gw = kernel_grad(inverse_pool(u.h[n], pre.pool[n]), below, cfg_.conv.padding);
      if (n + 1 < nc) gw += kernel_grad(inverse_pool(st.h[n], st.pool[n]), u.h[n + 1], cfg_.conv.padding);
      g[nf + n] = std::move(gw);
    }
    return g;
  }

 private:
  struct Pre {
    std::vector<Tensor> s, h;
    std::vector<PoolIndex> pool;  // argmax maps produced by this step
  };
  struct Slopes {
    std::vector<Tensor> s, h;
  };

  std::size_t nfc() const { return cfg_.fc_sizes.size(); }
  std::size_t nconv() const { return cfg_.conv_channels.size(); }
  Shape h_shape(std::size_t n) const { return {cfg_.conv_channels[n], extent_[n], extent_[n]}; }
  const Tensor& conv_w(const ParamSet& p, std::size_t n) const { return p[nfc() + n]; }

  PoolIndex fresh_index(const ParamSet& p, std::size_t n, const Tensor& below) const {
    return maxpool(conv2d(conv_w(p, n), below, cfg_.conv.padding), cfg_.conv.pool_size).indices;
  }

  Pre pre_activations(const ParamSet& p, const NeuralState& st, const InputDrive& d) const {
    const std::size_t nf = nfc(), nc = nconv();
    if (st.s.size() != nf || st.h.size() != nc || st.pool.size() != nc) {
      throw DimensionError("p-conv: state does not match the architecture");
    }
    for (std::size_t n = 0; n < nf; ++n)
      if (st.s[n].size() != cfg_.fc_sizes[n]) throw DimensionError("p-conv: wrong shape for s" + std::to_string(n));
    for (std::size_t n = 0; n < nc; ++n)
      if (st.h[n].shape() != h_shape(n)) throw DimensionError("p-conv: wrong shape for h" + std::to_string(n));
    Pre pre;
    const Tensor flat_h0 = flatten(st.h[0]);
    for (std::size_t n = 0; n < nf; ++n) {
      Tensor a = matvec(p[n], n + 1 < nf ? st.s[n + 1] : flat_h0);
      if (n > 0) a += matvec_t(p[n - 1], st.s[n - 1]);
      pre.s.push_back(std::move(a));
    }
    for (std::size_t n = 0; n < nc; ++n) {
      Tensor down;
      PoolIndex ind;
      if (n + 1 < nc) {
        PoolResult pr = maxpool(conv2d(conv_w(p, n), st.h[n + 1], cfg_.conv.padding), cfg_.conv.pool_size);
        down = std::move(pr.values);
        ind = std::move(pr.indices);
      } else {
        down = d.terms[0];
        ind = d.pool[0];
      }
      if (n == 0) {
        down += unflatten(matvec_t(p[nf - 1], st.s[nf - 1]), h_shape(0));
      } else {
        down += transpose_conv(conv_w(p, n - 1), inverse_pool(st.h[n - 1], st.pool[n - 1]), cfg_.conv.padding);
      }
      pre.h.push_back(std::move(down));
      pre.pool.push_back(std::move(ind));
    }
    return pre;
  }

  Slopes slopes(const Pre& pre, const NeuralState& v) const {
    Slopes u;
    for (std::size_t n = 0; n < nfc(); ++n) u.s.push_back(slope(pre.s[n], v.s[n], cfg_.activation));
    for (std::size_t n = 0; n < nconv(); ++n) u.h.push_back(slope(pre.h[n], v.h[n], cfg_.activation));
    return u;
  }

  ConvConfig cfg_;
  std::vector<std::size_t> extent_;       // pooled extent of hⁿ (extent_[C] = input)
  std::vector<std::size_t> conv_extent_;  // extent of W_n * hⁿ⁺¹ before pooling
};

}  // namespace

std::unique_ptr<Model> make_prototypical_layered_model(const LayeredConfig& cfg) {
  return std::make_unique<PrototypicalLayeredModel>(cfg);
}

std::unique_ptr<Model> make_conv_model(const ConvConfig& cfg) { return std::make_unique<ConvModel>(cfg); }

}  // namespace eqprop
