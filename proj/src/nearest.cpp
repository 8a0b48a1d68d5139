#include "voxmesh/nearest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "voxmesh/tensor.hpp"  // require()

namespace voxmesh {

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
    const Vec3 ab = b - a, ac = c - a, ap = p - a;
    const double d1 = ab.dot(ap), d2 = ac.dot(ap);
    if (d1 <= 0.0 && d2 <= 0.0) return a;

    const Vec3 bp = p - b;
    const double d3 = ab.dot(bp), d4 = ac.dot(bp);
    if (d3 >= 0.0 && d4 <= d3) return b;

    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
        const double v = d1 / (d1 - d3);
        return a + ab * v;
    }

    const Vec3 cp = p - c;
    const double d5 = ab.dot(cp), d6 = ac.dot(cp);
    if (d6 >= 0.0 && d5 <= d6) return c;

    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
        const double w = d2 / (d2 - d6);
        return a + ac * w;
    }

    const double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
        const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }

    const double denom = 1.0 / (va + vb + vc);
    const double v = vb * denom, w = vc * denom;
    return a + ab * v + ac * w;
}

NnResult nearest_point_brute(const Vec3& q, const std::vector<Vec3>& pts) {
    NnResult best{-1, std::numeric_limits<double>::infinity()};
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const double d2 = (pts[i] - q).norm2();
        if (d2 < best.dist2 || (d2 == best.dist2 && static_cast<std::int64_t>(i) < best.index)) {
            best.dist2 = d2;
            best.index = static_cast<std::int64_t>(i);
        }
    }
    return best;
}

PointGrid::PointGrid(const std::vector<Vec3>& pts) : points_(pts) {
    require(!pts.empty(), "PointGrid: empty point set");
    Vec3 lo = pts[0], hi = pts[0];
    for (const Vec3& p : pts) {
        lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
        hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
    }
    origin_ = lo;
    const Vec3 ext = hi - lo;
    const double max_ext = std::max({ext.x, ext.y, ext.z});
    // aim for ~1 point per cell on average
    const double target = std::cbrt(static_cast<double>(pts.size()));
    h_ = max_ext > 0.0 ? max_ext / target : 1.0;
    if (h_ <= 0.0) h_ = 1.0;
    nx_ = std::max<std::int64_t>(1, static_cast<std::int64_t>(ext.x / h_) + 1);
    ny_ = std::max<std::int64_t>(1, static_cast<std::int64_t>(ext.y / h_) + 1);
    nz_ = std::max<std::int64_t>(1, static_cast<std::int64_t>(ext.z / h_) + 1);

    const std::int64_t ncells = nx_ * ny_ * nz_;
    std::vector<std::int64_t> counts(static_cast<std::size_t>(ncells) + 1, 0);
    std::vector<std::int64_t> cell_of_pt(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        cell_of_pt[i] = cell_of(pts[i]);
        ++counts[static_cast<std::size_t>(cell_of_pt[i]) + 1];
    }
    for (std::int64_t c = 0; c < ncells; ++c)
        counts[static_cast<std::size_t>(c) + 1] += counts[static_cast<std::size_t>(c)];
    cell_start_ = counts;
    cell_items_.resize(pts.size());
    std::vector<std::int64_t> cursor(cell_start_.begin(), cell_start_.end() - 1);
    for (std::size_t i = 0; i < pts.size(); ++i)  // ascending index order within cells
        cell_items_[static_cast<std::size_t>(cursor[static_cast<std::size_t>(cell_of_pt[i])]++)] =
            static_cast<std::int64_t>(i);
}

std::int64_t PointGrid::cell_of(const Vec3& p) const {
    auto clampi = [](std::int64_t v, std::int64_t n) { return std::min(std::max<std::int64_t>(v, 0), n - 1); };
    const std::int64_t ix = clampi(static_cast<std::int64_t>((p.x - origin_.x) / h_), nx_);
    const std::int64_t iy = clampi(static_cast<std::int64_t>((p.y - origin_.y) / h_), ny_);
    const std::int64_t iz = clampi(static_cast<std::int64_t>((p.z - origin_.z) / h_), nz_);
    return (iz * ny_ + iy) * nx_ + ix;
}

NnResult PointGrid::nearest(const Vec3& q) const {
    auto clampi = [](std::int64_t v, std::int64_t n) { return std::min(std::max<std::int64_t>(v, 0), n - 1); };
    const std::int64_t qx = clampi(static_cast<std::int64_t>((q.x - origin_.x) / h_), nx_);
    const std::int64_t qy = clampi(static_cast<std::int64_t>((q.y - origin_.y) / h_), ny_);
    const std::int64_t qz = clampi(static_cast<std::int64_t>((q.z - origin_.z) / h_), nz_);

    NnResult best{-1, std::numeric_limits<double>::infinity()};
    const std::int64_t max_ring = std::max({nx_, ny_, nz_});
    for (std::int64_t ring = 0; ring <= max_ring; ++ring) {
        // cells outside finished rings sit at least (ring-1)*h from q's cell,
        // so once that floor beats the best squared distance we can stop —
        // strictly beats, so equal-distance smaller-index points are never lost
        if (best.index >= 0 && ring >= 2) {
            const double floor_d = static_cast<double>(ring - 1) * h_;
            if (floor_d * floor_d > best.dist2) break;
        }
        const std::int64_t zlo = std::max<std::int64_t>(0, qz - ring), zhi = std::min(nz_ - 1, qz + ring);
        const std::int64_t ylo = std::max<std::int64_t>(0, qy - ring), yhi = std::min(ny_ - 1, qy + ring);
        const std::int64_t xlo = std::max<std::int64_t>(0, qx - ring), xhi = std::min(nx_ - 1, qx + ring);
        for (std::int64_t iz = zlo; iz <= zhi; ++iz)
            for (std::int64_t iy = ylo; iy <= yhi; ++iy)
                for (std::int64_t ix = xlo; ix <= xhi; ++ix) {
                    const std::int64_t cheb = std::max({std::abs(iz - qz), std::abs(iy - qy), std::abs(ix - qx)});
                    if (cheb != ring) continue;  // shell only
                    const std::int64_t c = (iz * ny_ + iy) * nx_ + ix;
                    const std::int64_t s = cell_start_[static_cast<std::size_t>(c)];
                    const std::int64_t e = cell_start_[static_cast<std::size_t>(c) + 1];
                    for (std::int64_t k = s; k < e; ++k) {
                        const std::int64_t idx = cell_items_[static_cast<std::size_t>(k)];
                        const double d2 = (points_[static_cast<std::size_t>(idx)] - q).norm2();
                        if (d2 < best.dist2 || (d2 == best.dist2 && idx < best.index)) {
                            best.dist2 = d2;
                            best.index = idx;
                        }
                    }
                }
    }
    return best;
}

// ---------------------------------------------------------------------------

namespace {

inline double aabb_dist2(const Vec3& lo, const Vec3& hi, const Vec3& p) {
    double d2 = 0.0;
    for (int a = 0; a < 3; ++a) {
        const double v = p[a];
        const double l = lo[a], h = hi[a];
        if (v < l) d2 += (l - v) * (l - v);
        else if (v > h) d2 += (v - h) * (v - h);
    }
    return d2;
}

}  // namespace

TriBvh::TriBvh(const TriMesh& mesh) : mesh_(&mesh) {
    require(!mesh.faces.empty(), "TriBvh: mesh has no faces");
    std::vector<int> order(mesh.faces.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    nodes_.reserve(mesh.faces.size() * 2);
    root_ = build(order, 0, static_cast<int>(order.size()));
}

int TriBvh::build(std::vector<int>& order, int begin, int end) {
    BvhNode node;
    node.lo = {1e300, 1e300, 1e300};
    node.hi = {-1e300, -1e300, -1e300};
    for (int i = begin; i < end; ++i) {
        const Face& f = mesh_->faces[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
        for (int k = 0; k < 3; ++k) {
            const Vec3& v = mesh_->vertices[static_cast<std::size_t>(f[k])];
            node.lo = {std::min(node.lo.x, v.x), std::min(node.lo.y, v.y), std::min(node.lo.z, v.z)};
            node.hi = {std::max(node.hi.x, v.x), std::max(node.hi.y, v.y), std::max(node.hi.z, v.z)};
        }
    }
    const int n = end - begin;
    if (n <= 4) {
        node.first = static_cast<std::int32_t>(tris_.size());
        node.count = n;
        for (int i = begin; i < end; ++i) tris_.push_back(order[static_cast<std::size_t>(i)]);
        nodes_.push_back(node);
        return static_cast<int>(nodes_.size()) - 1;
    }
    const Vec3 ext = node.hi - node.lo;
    const int axis = ext.x >= ext.y && ext.x >= ext.z ? 0 : ext.y >= ext.z ? 1 : 2;
    auto centroid = [&](int t) {
        const Face& f = mesh_->faces[static_cast<std::size_t>(t)];
        return (mesh_->vertices[static_cast<std::size_t>(f[0])][axis] +
                mesh_->vertices[static_cast<std::size_t>(f[1])][axis] +
                mesh_->vertices[static_cast<std::size_t>(f[2])][axis]) / 3.0;
    };
    const int mid = begin + n / 2;
    std::nth_element(order.begin() + begin, order.begin() + mid, order.begin() + end,
                     [&](int a, int b) {
                         const double ca = centroid(a), cb = centroid(b);
                         return ca != cb ? ca < cb : a < b;
                     });
    const int self = static_cast<int>(nodes_.size());
    nodes_.push_back(node);  // children patched below
    const int l = build(order, begin, mid);
    const int r = build(order, mid, end);
    nodes_[static_cast<std::size_t>(self)].left = l;
    nodes_[static_cast<std::size_t>(self)].right = r;
    return self;
}

SurfaceHit TriBvh::closest(const Vec3& p) const {
    SurfaceHit best;
    best.dist2 = std::numeric_limits<double>::infinity();
    std::vector<std::pair<double, int>> stack;
    stack.reserve(64);
    stack.push_back({aabb_dist2(nodes_[static_cast<std::size_t>(root_)].lo,
                                nodes_[static_cast<std::size_t>(root_)].hi, p),
                     root_});
    while (!stack.empty()) {
        const auto [d2, ni] = stack.back();
        stack.pop_back();
        if (d2 > best.dist2) continue;
        const BvhNode& node = nodes_[static_cast<std::size_t>(ni)];
        if (node.left < 0) {
            for (int i = 0; i < node.count; ++i) {
                const int t = tris_[static_cast<std::size_t>(node.first + i)];
                const Face& f = mesh_->faces[static_cast<std::size_t>(t)];
                const Vec3& a = mesh_->vertices[static_cast<std::size_t>(f[0])];
                const Vec3& b = mesh_->vertices[static_cast<std::size_t>(f[1])];
                const Vec3& c = mesh_->vertices[static_cast<std::size_t>(f[2])];
                const Vec3 cp = closest_point_on_triangle(p, a, b, c);
                const double td2 = (p - cp).norm2();
                if (td2 < best.dist2 || (td2 == best.dist2 && t < best.face)) {
                    best.dist2 = td2;
                    best.face = t;
                    best.point = cp;
                }
            }
            continue;
        }
        const double dl = aabb_dist2(nodes_[static_cast<std::size_t>(node.left)].lo,
                                     nodes_[static_cast<std::size_t>(node.left)].hi, p);
        const double dr = aabb_dist2(nodes_[static_cast<std::size_t>(node.right)].lo,
                                     nodes_[static_cast<std::size_t>(node.right)].hi, p);
        // push the farther child first so the nearer is processed next
        if (dl <= dr) {
            if (dr <= best.dist2) stack.push_back({dr, node.right});
            if (dl <= best.dist2) stack.push_back({dl, node.left});
        } else {
            if (dl <= best.dist2) stack.push_back({dl, node.left});
            if (dr <= best.dist2) stack.push_back({dr, node.right});
        }
    }
    // barycentric coordinates of the hit point, exact row-sum 1
    const Face& f = mesh_->faces[static_cast<std::size_t>(best.face)];
    const Vec3& a = mesh_->vertices[static_cast<std::size_t>(f[0])];
    const Vec3& b = mesh_->vertices[static_cast<std::size_t>(f[1])];
    const Vec3& c = mesh_->vertices[static_cast<std::size_t>(f[2])];
    const Vec3 v0 = b - a, v1 = c - a, v2 = best.point - a;
    const double d00 = v0.dot(v0), d01 = v0.dot(v1), d11 = v1.dot(v1);
    const double d20 = v2.dot(v0), d21 = v2.dot(v1);
    const double denom = d00 * d11 - d01 * d01;
    double w1 = 0.0, w2 = 0.0;
    if (denom > 0.0) {
        w1 = (d11 * d20 - d01 * d21) / denom;
        w2 = (d00 * d21 - d01 * d20) / denom;
    }
    w1 = std::min(1.0, std::max(0.0, w1));
    w2 = std::min(1.0 - w1, std::max(0.0, w2));
    best.bary[1] = w1;
    best.bary[2] = w2;
    best.bary[0] = 1.0 - w1 - w2;
    return best;
}

double TriBvh::dist(const Vec3& p) const { return std::sqrt(closest(p).dist2); }

}  // namespace voxmesh
