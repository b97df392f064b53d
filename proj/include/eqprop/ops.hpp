#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "eqprop/tensor.hpp"

namespace eqprop {

// ---------------------------------------------------------------------------
// Dense linear algebra

/// C = A·B for A[m×k], B[k×n].
Tensor matmul(const Tensor& a, const Tensor& b);

/// y = W·v for W[m×n], v[n].
Tensor matvec(const Tensor& w, const Tensor& v);

/// y = Wᵀ·v for W[m×n], v[m].
Tensor matvec_t(const Tensor& w, const Tensor& v);

/// M[i][j] = u[i]·v[j] for rank-1 u, v.
Tensor outer(const Tensor& u, const Tensor& v);

/// acc += factor · u·vᵀ; acc must be [u.size()×v.size()].
void add_outer(Tensor& acc, const Tensor& u, const Tensor& v, double factor = 1.0);

/// Sum of elementwise products over all indices (the "general dot product").
double gdot(const Tensor& a, const Tensor& b);

// ---------------------------------------------------------------------------
// Convolution and pooling over C×D×D feature maps

struct ConvSpec {
  std::size_t filter_size = 5;
  std::size_t padding = 0;
  std::size_t pool_size = 2;

  /// Spatial extent after a stride-1 convolution of a D×D map.
  std::size_t conv_extent(std::size_t d) const { return d + 2 * padding + 1 - filter_size; }
  /// Padding that makes the transpose convolution recover the input extent.
  std::size_t transpose_padding() const { return filter_size - 1 - padding; }
};

/// out[c,i,j] = Σ_{ci,r,s} W[c,ci,r,s]·Xpad[ci,i+r,j+s] with zero padding and stride 1.
Tensor conv2d(const Tensor& w, const Tensor& x, std::size_t padding = 0);

/// W̃[ci,co,r,s] = W[co,ci,F-1-r,F-1-s].
Tensor flip_kernel(const Tensor& w);

/// Convolution of Y by the flipped kernel with padding F-1-P: the adjoint of conv2d(W, ·, P).
Tensor transpose_conv(const Tensor& w, const Tensor& y, std::size_t padding = 0);

/// dW[co,ci,r,s] = Σ_{i,j} G[co,i,j]·Xpad[ci,i+r,j+s]: gradient of G•conv2d(W,X) with respect to W.
Tensor kernel_grad(const Tensor& g, const Tensor& x, std::size_t padding = 0);

/// Argmax positions of a max-pooling pass: one window-relative offset r·F+s per output cell.
struct PoolIndex {
  Shape shape;  // pooled extent C×(D/F)×(D/F)
  std::size_t pool_size = 0;
  std::vector<std::uint32_t> offset;

  std::size_t row(std::size_t k) const { return offset[k] / pool_size; }
  std::size_t col(std::size_t k) const { return offset[k] % pool_size; }
  bool empty() const noexcept { return offset.empty(); }

  /// All-(0,0) index map, the argmax of a constant input.
  static PoolIndex origin(Shape pooled_shape, std::size_t pool_size);

  friend bool operator==(const PoolIndex&, const PoolIndex&) = default;
};

struct PoolResult {
  Tensor values;
  PoolIndex indices;
};

/// Max over non-overlapping F×F windows (stride F). Ties go to the first
/// maximum in row-major window order.
PoolResult maxpool(const Tensor& x, std::size_t pool_size);

/// Up-samples Y to the pre-pooling extent: each value lands on its window's
/// recorded argmax, zeros elsewhere.
Tensor inverse_pool(const Tensor& y, const PoolIndex& ind);

/// Reads Z at the recorded argmax of each window; the adjoint of inverse_pool.
Tensor pool_gather(const Tensor& z, const PoolIndex& ind);

/// Row-major flattening of any tensor to rank 1.
Tensor flatten(const Tensor& x);

/// Inverse of flatten for a target shape of equal element count.
Tensor unflatten(const Tensor& flat, const Shape& shape);

}  // namespace eqprop
