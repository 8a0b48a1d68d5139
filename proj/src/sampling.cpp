#include "voxmesh/sampling.hpp"

namespace voxmesh {

GridMap make_grid_map(const Volume& vol, std::int64_t fd, std::int64_t fh, std::int64_t fw) {
    require(fd >= 1 && fh >= 1 && fw >= 1, "make_grid_map: empty feature grid");
    const auto inv = inverse_transform(vol);  // rows produce (ix, iy, iz)
    const double sx = fw > 1 ? static_cast<double>(fw - 1) / static_cast<double>(vol.w - 1) : 0.0;
    const double sy = fh > 1 ? static_cast<double>(fh - 1) / static_cast<double>(vol.h - 1) : 0.0;
    const double sz = fd > 1 ? static_cast<double>(fd - 1) / static_cast<double>(vol.d - 1) : 0.0;
    GridMap g;
    for (int c = 0; c < 3; ++c) {
        g.A[0 + c] = sx * inv[0 + c];
        g.A[3 + c] = sy * inv[3 + c];
        g.A[6 + c] = sz * inv[6 + c];
    }
    g.t[0] = sx * inv[9];
    g.t[1] = sy * inv[10];
    g.t[2] = sz * inv[11];
    return g;
}

VertexFeatures map_pyramid(const FeaturePyramid& pyr, const Tensor& points) {
    require(!pyr.maps.empty(), "map_pyramid: empty pyramid");
    require(pyr.maps.size() == pyr.grids.size(),
            "map_pyramid: feature maps and grid maps out of step");
    VertexFeatures out;
    out.levels.reserve(pyr.maps.size());
    for (size_t i = 0; i < pyr.maps.size(); ++i)
        out.levels.push_back(trilinear_sample(pyr.maps[i], points, pyr.grids[i]));
    out.concat = out.levels.size() == 1 ? out.levels[0] : concat(out.levels, 1);
    return out;
}

Tensor mesh_points_tensor(const TriMesh& mesh, Dtype dt, bool requires_grad) {
    std::vector<double> vals;
    vals.reserve(static_cast<size_t>(mesh.vcount()) * 3);
    for (const auto& v : mesh.vertices) {
        vals.push_back(v.x);
        vals.push_back(v.y);
        vals.push_back(v.z);
    }
    return Tensor::from_values({mesh.vcount(), 3}, vals, dt, requires_grad);
}

}  // namespace voxmesh
