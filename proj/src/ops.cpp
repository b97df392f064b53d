#include "eqprop/ops.hpp"

#include <string>

#include "eqprop/errors.hpp"

namespace eqprop {

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(what) + ": expected rank " + std::to_string(rank) +
                         ", got " + shape_string(t.shape()));
  }
}

void require_square_maps(const Tensor& t, const char* what) {
  require_rank(t, 3, what);
  if (t.dim(1) != t.dim(2)) {
    throw DimensionError(std::string(what) + ": non-square feature map " + shape_string(t.shape()));
  }
}

Tensor pad_maps(const Tensor& x, std::size_t padding) {
  if (padding == 0) return x;
  const std::size_t c = x.dim(0), d = x.dim(1), dp = d + 2 * padding;
  Tensor out({c, dp, dp});
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) out.at(k, i + padding, j + padding) = x.at(k, i, j);
  return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: inner extents disagree " + shape_string(a.shape()) + " · " +
                         shape_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor c({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a.at(i, p);
      if (aip == 0.0) continue;
      const double* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
  return c;
}

Tensor matvec(const Tensor& w, const Tensor& v) {
  require_rank(w, 2, "matvec");
  if (v.size() != w.dim(1)) {
    throw DimensionError("matvec: " + shape_string(w.shape()) + " · " + shape_string(v.shape()));
  }
  const std::size_t m = w.dim(0), n = w.dim(1);
  Tensor out({m});
  const double* x = v.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = w.data() + i * n;
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += row[j] * x[j];
    out[i] = acc;
  }
  return out;
}

Tensor matvec_t(const Tensor& w, const Tensor& v) {
  require_rank(w, 2, "matvec_t");
  if (v.size() != w.dim(0)) {
    throw DimensionError("matvec_t: " + shape_string(w.shape()) + "ᵀ · " + shape_string(v.shape()));
  }
  const std::size_t m = w.dim(0), n = w.dim(1);
  Tensor out({n});
  double* y = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double vi = v[i];
    if (vi == 0.0) continue;
    const double* row = w.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) y[j] += vi * row[j];
  }
  return out;
}

Tensor outer(const Tensor& u, const Tensor& v) {
  require_rank(u, 1, "outer");
  require_rank(v, 1, "outer");
  Tensor m({u.size(), v.size()});
  add_outer(m, u, v);
  return m;
}

void add_outer(Tensor& acc, const Tensor& u, const Tensor& v, double factor) {
  if (acc.rank() != 2 || acc.dim(0) != u.size() || acc.dim(1) != v.size()) {
    throw DimensionError("add_outer: accumulator " + shape_string(acc.shape()) + " vs " +
                         shape_string(u.shape()) + " ⊗ " + shape_string(v.shape()));
  }
  const std::size_t n = v.size();
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double ui = factor * u[i];
    if (ui == 0.0) continue;
    double* row = acc.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) row[j] += ui * v[j];
  }
}

double gdot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "gdot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

Tensor conv2d(const Tensor& w, const Tensor& x, std::size_t padding) {
  require_rank(w, 4, "conv2d kernel");
  require_square_maps(x, "conv2d input");
  if (w.dim(2) != w.dim(3)) throw DimensionError("conv2d: non-square kernel " + shape_string(w.shape()));
  if (w.dim(1) != x.dim(0)) {
    throw DimensionError("conv2d: kernel " + shape_string(w.shape()) + " expects " +
                         std::to_string(w.dim(1)) + " input channels, input is " +
                         shape_string(x.shape()));
  }
  const std::size_t f = w.dim(2);
  const std::size_t dp = x.dim(1) + 2 * padding;
  if (dp < f) {
    throw DimensionError("conv2d: padded extent " + std::to_string(dp) + " smaller than filter " +
                         std::to_string(f));
  }
  const Tensor xp = pad_maps(x, padding);
  const std::size_t cout = w.dim(0), cin = w.dim(1), d = dp - f + 1;
  Tensor out({cout, d, d});
  for (std::size_t co = 0; co < cout; ++co) {
    double* o = out.data() + co * d * d;
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const double* in = xp.data() + ci * dp * dp;
      for (std::size_t r = 0; r < f; ++r) {
        for (std::size_t s = 0; s < f; ++s) {
          const double wv = w.at(co, ci, r, s);
          if (wv == 0.0) continue;
          for (std::size_t i = 0; i < d; ++i) {
            const double* src = in + (i + r) * dp + s;
            double* dst = o + i * d;
            for (std::size_t j = 0; j < d; ++j) dst[j] += wv * src[j];
          }
        }
      }
    }
  }
  return out;
}

Tensor flip_kernel(const Tensor& w) {
  require_rank(w, 4, "flip_kernel");
  const std::size_t cout = w.dim(0), cin = w.dim(1), f = w.dim(2), g = w.dim(3);
  Tensor out({cin, cout, f, g});
  for (std::size_t co = 0; co < cout; ++co)
    for (std::size_t ci = 0; ci < cin; ++ci)
      for (std::size_t r = 0; r < f; ++r)
        for (std::size_t s = 0; s < g; ++s) out.at(ci, co, r, s) = w.at(co, ci, f - 1 - r, g - 1 - s);
  return out;
}

Tensor transpose_conv(const Tensor& w, const Tensor& y, std::size_t padding) {
  require_rank(w, 4, "transpose_conv kernel");
  const std::size_t f = w.dim(2);
  if (padding + 1 > f) {
    throw DimensionError("transpose_conv: padding " + std::to_string(padding) +
                         " leaves no valid transpose padding for filter " + std::to_string(f));
  }
  if (y.rank() != 3 || y.dim(0) != w.dim(0)) {
    throw DimensionError("transpose_conv: kernel " + shape_string(w.shape()) +
                         " cannot map back " + shape_string(y.shape()));
  }
  const std::size_t tpad = f - 1 - padding;
  if (y.dim(1) + f - 1 <= 2 * padding) {
    throw DimensionError("transpose_conv: resulting extent is not positive for " +
                         shape_string(y.shape()));
  }
  return conv2d(flip_kernel(w), y, tpad);
}

Tensor kernel_grad(const Tensor& g, const Tensor& x, std::size_t padding) {
  require_square_maps(g, "kernel_grad output gradient");
  require_square_maps(x, "kernel_grad input");
  const std::size_t dp = x.dim(1) + 2 * padding;
  const std::size_t d = g.dim(1);
  if (d > dp) {
    throw DimensionError("kernel_grad: output " + shape_string(g.shape()) + " larger than input " +
                         shape_string(x.shape()));
  }
  const std::size_t f = dp - d + 1;
  const std::size_t cout = g.dim(0), cin = x.dim(0);
  const Tensor xp = pad_maps(x, padding);
  Tensor out({cout, cin, f, f});
  for (std::size_t co = 0; co < cout; ++co) {
    const double* gc = g.data() + co * d * d;
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const double* in = xp.data() + ci * dp * dp;
      for (std::size_t r = 0; r < f; ++r) {
        for (std::size_t s = 0; s < f; ++s) {
          double acc = 0.0;
          for (std::size_t i = 0; i < d; ++i) {
            const double* src = in + (i + r) * dp + s;
            const double* gr = gc + i * d;
            for (std::size_t j = 0; j < d; ++j) acc += gr[j] * src[j];
          }
          out.at(co, ci, r, s) = acc;
        }
      }
    }
  }
  return out;
}

PoolIndex PoolIndex::origin(Shape pooled_shape, std::size_t pool_size) {
  PoolIndex ind;
  ind.offset.assign(shape_size(pooled_shape), 0);
  ind.shape = std::move(pooled_shape);
  ind.pool_size = pool_size;
  return ind;
}

PoolResult maxpool(const Tensor& x, std::size_t pool_size) {
  require_square_maps(x, "maxpool");
  if (pool_size == 0 || x.dim(1) % pool_size != 0) {
    throw DimensionError("maxpool: extent " + std::to_string(x.dim(1)) +
                         " not divisible by pool size " + std::to_string(pool_size));
  }
  const std::size_t c = x.dim(0), d = x.dim(1) / pool_size, f = pool_size;
  PoolResult res{Tensor({c, d, d}), PoolIndex::origin({c, d, d}, f)};
  std::size_t k = 0;
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j, ++k) {
        double best = x.at(ch, i * f, j * f);
        std::uint32_t arg = 0;
        for (std::size_t r = 0; r < f; ++r) {
          for (std::size_t s = 0; s < f; ++s) {
            const double v = x.at(ch, i * f + r, j * f + s);
            if (v > best) {
              best = v;
              arg = static_cast<std::uint32_t>(r * f + s);
            }
          }
        }
        res.values[k] = best;
        res.indices.offset[k] = arg;
      }
    }
  }
  return res;
}

namespace {

void check_index(const Tensor& pooled, const PoolIndex& ind, const char* what) {
  if (pooled.shape() != ind.shape || ind.offset.size() != pooled.size()) {
    throw DimensionError(std::string(what) + ": values " + shape_string(pooled.shape()) +
                         " vs index map " + shape_string(ind.shape));
  }
  const std::size_t window = ind.pool_size * ind.pool_size;
  for (std::uint32_t off : ind.offset) {
    if (off >= window) {
      throw CorruptionError(std::string(what) + ": index offset " + std::to_string(off) +
                            " outside a " + std::to_string(ind.pool_size) + "x" +
                            std::to_string(ind.pool_size) + " window");
    }
  }
}

}  // namespace

Tensor inverse_pool(const Tensor& y, const PoolIndex& ind) {
  check_index(y, ind, "inverse_pool");
  const std::size_t c = y.dim(0), d = y.dim(1), f = ind.pool_size;
  Tensor out({c, d * f, d * f});
  std::size_t k = 0;
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j, ++k) out.at(ch, i * f + ind.row(k), j * f + ind.col(k)) = y[k];
  return out;
}

Tensor pool_gather(const Tensor& z, const PoolIndex& ind) {
  Tensor out(ind.shape);
  check_index(out, ind, "pool_gather");
  const std::size_t c = ind.shape[0], d = ind.shape[1], f = ind.pool_size;
  if (z.rank() != 3 || z.dim(0) != c || z.dim(1) != d * f || z.dim(2) != d * f) {
    throw DimensionError("pool_gather: input " + shape_string(z.shape()) + " vs index map " +
                         shape_string(ind.shape));
  }
  std::size_t k = 0;
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j, ++k) out[k] = z.at(ch, i * f + ind.row(k), j * f + ind.col(k));
  return out;
}

Tensor flatten(const Tensor& x) { return x.reshaped({x.size()}); }

Tensor unflatten(const Tensor& flat, const Shape& shape) {
  if (flat.size() != shape_size(shape)) {
    throw DimensionError("unflatten: " + std::to_string(flat.size()) + " values cannot fill " +
                         shape_string(shape));
  }
  return flat.reshaped(shape);
}

}  // namespace eqprop
