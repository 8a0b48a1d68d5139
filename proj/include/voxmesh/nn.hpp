#pragma once

#include "voxmesh/sparse.hpp"
#include "voxmesh/tensor.hpp"

namespace voxmesh {

// input [N,Ci,D,H,W], weight [Co,Ci,k,k,k], bias [Co]; k odd, stride 1 or 2.
Tensor conv3d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
              int padding);

// Adjoint of conv3d with the same weight tensor: input [N,Co,...] -> output
// [N,Ci,...]. output_padding < 0 selects stride-1, which doubles the spatial
// extents for stride 2 / padding 1 / k 3 and is the identity ladder for
// stride 1.
Tensor conv3d_transpose(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
                        int padding, int output_padding = -1);

// Channel dim is dim 1 for rank >= 2 ([N,C,...] or [V,C] with V as batch).
// Train mode normalizes by batch statistics and updates the running buffers
// in place; eval mode reads them. running_* are non-trainable leaves.
Tensor batchnorm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                 const Tensor& running_mean, const Tensor& running_var, bool train,
                 double momentum = 0.1, double eps = 1e-5);

// x [N,Fin] @ weight [Fin,Fout] + bias [Fout]
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// One-hop graph convolution: linear(adj * x).
inline Tensor gcn_layer(const SparseMatrix& adj, const Tensor& x, const Tensor& weight,
                        const Tensor& bias) {
    return linear(sparse_matmul(adj, x), weight, bias);
}

// Affine map from normalized coordinates (x,y,z) to continuous grid indices
// (u along W, v along H, w along D): idx = A * p + t.
struct GridMap {
    double A[9] = {0, 0, 0, 0, 0, 0, 0, 0, 0};
    double t[3] = {0, 0, 0};
};

// feature [C,d,h,w], points [V,3] normalized -> [V,C]. Trilinear with border
// clamp; differentiable w.r.t. both feature values and point coordinates.
Tensor trilinear_sample(const Tensor& feature, const Tensor& points, const GridMap& map);

}  // namespace voxmesh
