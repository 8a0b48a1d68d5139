#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "voxmesh/mesh.hpp"
#include "voxmesh/net.hpp"
#include "voxmesh/tensor.hpp"
#include "voxmesh/volume.hpp"

namespace voxmesh {

// Weighted combination driving the deformation stages; defaults follow the
// reference recipe.
struct LossWeights {
    double chamfer = 5.0;
    double laplacian = 0.1;
    double normal = 0.001;
    double edge = 5.0;
};

// Area-uniform surface samples paired with their source-face unit normals.
struct SurfaceSamples {
    std::vector<Vec3> points;
    std::vector<Vec3> normals;
};
SurfaceSamples sample_surface_with_normals(const TriMesh& mesh, std::int64_t count, Rng& rng);

// Connectivity shared by every stage of a deformation trace.
struct MeshTopology {
    std::vector<Face> faces;
    std::vector<std::array<int, 2>> edges;
    std::vector<std::vector<int>> neighbors;
};
MeshTopology make_topology(const TriMesh& mesh);

// Both directions of accelerated nearest-neighbor pairing; element i of
// first is the gt index closest to pred point i and vice versa. Matches the
// brute-force scan bit for bit (same arithmetic, smaller-index ties).
std::pair<std::vector<std::int64_t>, std::vector<std::int64_t>> chamfer_indices(
    const std::vector<Vec3>& pred, const std::vector<Vec3>& gt);

// Symmetric mean squared nearest-neighbor distance; differentiable w.r.t.
// pred ([P,3]). gt is treated as a constant.
Tensor chamfer(const Tensor& pred, const std::vector<Vec3>& gt);
double chamfer_value(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt);

// Mean squared edge length over the given edge list.
Tensor edge_loss(const Tensor& pts, const std::vector<std::array<int, 2>>& edges);

// Mean squared norm of the uniform-Laplacian residual.
Tensor laplacian_loss(const Tensor& pts, const std::vector<std::vector<int>>& neighbors);

// Mean (1 - |<face normal, normal of nearest gt sample to the centroid>|)
// over non-degenerate faces; `skipped` counts degenerate ones.
Tensor normal_loss(const Tensor& pts, const std::vector<Face>& faces, const SurfaceSamples& gt,
                   int* skipped = nullptr);

// Sum over the trace stages of the weighted four-term combination.
Tensor mesh_loss(const DeformationTrace& trace, const MeshTopology& topo,
                 const SurfaceSamples& gt, const LossWeights& w);

// Mean voxelwise cross-entropy between logits [C,D,H,W] and integer labels
// stored in a volume of matching extents.
Tensor seg_cross_entropy(const Tensor& logits, const Volume& labels);

}  // namespace voxmesh
