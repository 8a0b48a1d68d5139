#pragma once

#include <cstdint>
#include <vector>

#include "voxmesh/mesh.hpp"

namespace voxmesh {

// Exact closest point on triangle abc to p (Voronoi-region case analysis).
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

struct NnResult {
    std::int64_t index = -1;
    double dist2 = 0.0;
};

// Linear scan; ties broken toward the smaller index.
NnResult nearest_point_brute(const Vec3& q, const std::vector<Vec3>& pts);

// Uniform-grid accelerator returning exactly the brute-force (index, dist2)
// for every query: same double arithmetic, same tie-break, and ring search
// that only stops once no unvisited cell could hold an equal-or-closer point.
class PointGrid {
public:
    explicit PointGrid(const std::vector<Vec3>& pts);
    NnResult nearest(const Vec3& q) const;
    std::int64_t size() const { return static_cast<std::int64_t>(points_.size()); }

private:
    std::int64_t cell_of(const Vec3& p) const;

    std::vector<Vec3> points_;
    Vec3 origin_;
    double h_ = 1.0;  // cell edge
    std::int64_t nx_ = 1, ny_ = 1, nz_ = 1;
    std::vector<std::int64_t> cell_start_;  // CSR over cells
    std::vector<std::int64_t> cell_items_;  // point indices, ascending per cell
};

struct SurfaceHit {
    double dist2 = 0.0;
    int face = -1;
    Vec3 point;       // closest point on the surface
    double bary[3] = {0, 0, 0};  // barycentric in the hit face, sums to 1
};

// Median-split AABB tree over triangles; exact min-distance queries.
class TriBvh {
public:
    explicit TriBvh(const TriMesh& mesh);
    SurfaceHit closest(const Vec3& p) const;
    double dist(const Vec3& p) const;

private:
    struct BvhNode {
        Vec3 lo, hi;
        std::int32_t left = -1, right = -1;  // internal children
        std::int32_t first = 0, count = 0;   // leaf triangle range
    };
    int build(std::vector<int>& order, int begin, int end);

    const TriMesh* mesh_ = nullptr;
    std::vector<BvhNode> nodes_;
    std::vector<int> tris_;
    int root_ = -1;
};

}  // namespace voxmesh
