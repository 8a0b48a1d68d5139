#pragma once

#include <vector>

#include "voxmesh/mesh.hpp"
#include "voxmesh/nn.hpp"
#include "voxmesh/tensor.hpp"
#include "voxmesh/volume.hpp"

namespace voxmesh {

// Multi-resolution image features, each map [C, d, h, w] paired with the
// GridMap that sends normalized coordinates into that map's own index grid.
struct FeaturePyramid {
    std::vector<Tensor> maps;
    std::vector<GridMap> grids;
    Tensor seg_logits;  // [C_seg, D, H, W] when the segmentation head ran
};

// Composes the volume's inverse transform with voxel-center rescaling onto a
// (fd, fh, fw) feature grid: -1 lands on the first feature voxel center and
// +1 on the last, at every resolution level.
GridMap make_grid_map(const Volume& vol, std::int64_t fd, std::int64_t fh, std::int64_t fw);

// Per-vertex features sampled from every pyramid level.
struct VertexFeatures {
    std::vector<Tensor> levels;  // [V, C_level] each, pyramid order
    Tensor concat;               // [V, sum of C_level]
};

// Differentiable w.r.t. both the pyramid features and the query points.
VertexFeatures map_pyramid(const FeaturePyramid& pyr, const Tensor& points);

// Leaf [V,3] tensor of mesh vertex positions.
Tensor mesh_points_tensor(const TriMesh& mesh, Dtype dt = Dtype::F32,
                          bool requires_grad = false);

}  // namespace voxmesh
