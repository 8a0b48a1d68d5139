#pragma once

#include <array>
#include <string>
#include <vector>

#include "voxmesh/mesh.hpp"
#include "voxmesh/sparse.hpp"

namespace voxmesh {

struct DecimateResult {
    TriMesh mesh;
    SparseMatrix down;  // coarse x fine, one 1.0 per row (kept-vertex selector)
    SparseMatrix up;    // fine x coarse, barycentric rows summing to 1
};

// Quadric-error-metric half-edge collapses down to target_v vertices.
// Surviving vertices keep their original positions, so up-matrix rows for
// kept vertices are exact identity rows; removed vertices get barycentric
// weights in their nearest coarse triangle. Requires a closed manifold and
// target_v < V; collapses that would break the link condition or fold a
// face over are rejected in favor of the next-best edge.
DecimateResult decimate(const TriMesh& fine, int target_v);

// Five-level decimation hierarchy. levels[0] is the baseline; level k+1 has
// ceil(level_sizes[k] / factors[k]) vertices.
struct TemplateBundle {
    TriMesh baseline;
    std::vector<TriMesh> levels;          // 5, fine -> coarse
    std::vector<SparseMatrix> up_mats;    // 4, level k+1 -> level k
    std::vector<SparseMatrix> down_mats;  // 4, level k -> level k+1
    std::vector<int> level_sizes;         // 5 vertex counts
};

// Default ladder: vertex counts N, N/16, N/128, N/512, N/2048.
inline constexpr std::array<double, 4> kDefaultFactors = {16.0, 8.0, 4.0, 4.0};

// Successive decimation by the given fine-to-coarse factors (each > 1).
// Throws when any level would drop below 12 vertices.
TemplateBundle build_template_bundle(const TriMesh& baseline,
                                     const std::array<double, 4>& factors = kDefaultFactors);

// "TPLB-1" container: <prefix>.json manifest + per-level OBJ files +
// <prefix>.bin blob holding the sparse matrices (little-endian triplets).
void save_template_bundle(const TemplateBundle& bundle, const std::string& prefix);
TemplateBundle load_template_bundle(const std::string& prefix);

}  // namespace voxmesh
