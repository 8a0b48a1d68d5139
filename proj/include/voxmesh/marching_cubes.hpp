#pragma once

#include "voxmesh/mesh.hpp"
#include "voxmesh/volume.hpp"

namespace voxmesh {

// Classic 256-case marching cubes over cells between voxel centers, with
// edge-welded vertices (watertight for isosurfaces that stay off the volume
// boundary). Vertices are emitted in normalized coordinates through
// vol.transform; faces wind CCW with outward normals pointing toward lower
// intensity. An empty isosurface yields an empty mesh.
TriMesh marching_cubes(const Volume& vol, double iso);

}  // namespace voxmesh
