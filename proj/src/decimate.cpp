#include "voxmesh/templates.hpp"

#include <algorithm>
#include <cstdint>
#include <queue>
#include <set>
#include <stdexcept>
#include <vector>

#include "voxmesh/nearest.hpp"

namespace voxmesh {

namespace {

// Symmetric 4x4 plane quadric, upper triangle in row-major order:
// (00 01 02 03 11 12 13 22 23 33).
struct Quadric {
    double q[10] = {0};

    void add_plane(const Vec3& n, double d, double w) {
        const double v[4] = {n.x, n.y, n.z, d};
        int k = 0;
        for (int i = 0; i < 4; ++i)
            for (int j = i; j < 4; ++j) q[k++] += w * v[i] * v[j];
    }

    Quadric& operator+=(const Quadric& o) {
        for (int i = 0; i < 10; ++i) q[i] += o.q[i];
        return *this;
    }

    double eval(const Vec3& p) const {
        const double v[4] = {p.x, p.y, p.z, 1.0};
        double full[4][4];
        int k = 0;
        for (int i = 0; i < 4; ++i)
            for (int j = i; j < 4; ++j) {
                full[i][j] = q[k];
                full[j][i] = q[k];
                ++k;
            }
        double s = 0;
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) s += v[i] * full[i][j] * v[j];
        return s;
    }
};

struct Candidate {
    double cost;
    int removed;
    int kept;
    std::int64_t ver_removed;
    std::int64_t ver_kept;
};

struct CandidateOrder {
    bool operator()(const Candidate& a, const Candidate& b) const {
        if (a.cost != b.cost) return a.cost > b.cost;  // min-heap
        if (a.removed != b.removed) return a.removed > b.removed;
        return a.kept > b.kept;
    }
};

}  // namespace

DecimateResult decimate(const TriMesh& fine, int target_v) {
    validate_mesh(fine);
    std::string why;
    if (!is_closed_manifold(fine, &why))
        throw std::runtime_error("decimate: input is not a closed manifold (" + why + ")");
    if (target_v >= fine.vcount())
        throw std::runtime_error("decimate: target_v must be smaller than the vertex count");
    if (target_v < 4) throw std::runtime_error("decimate: target_v below the tetrahedron floor");

    const int nv = fine.vcount();
    const std::vector<Vec3>& pos = fine.vertices;  // survivors keep positions

    std::vector<Face> faces = fine.faces;
    std::vector<char> face_dead(faces.size(), 0);
    std::vector<std::set<int>> vfaces(nv);
    for (int f = 0; f < static_cast<int>(faces.size()); ++f)
        for (int c = 0; c < 3; ++c) vfaces[faces[f][c]].insert(f);

    std::vector<Quadric> quad(nv);
    for (const auto& f : faces) {
        const Vec3& a = pos[f[0]];
        Vec3 n = (pos[f[1]] - a).cross(pos[f[2]] - a);
        const double area2 = n.norm();
        if (area2 <= 0) continue;
        n = n * (1.0 / area2);
        const double w = 0.5 * area2;
        const double d = -n.dot(a);
        for (int c = 0; c < 3; ++c) quad[f[c]].add_plane(n, d, w);
    }

    std::vector<char> alive(nv, 1);
    std::vector<std::int64_t> ver(nv, 0);
    int live = nv;

    std::priority_queue<Candidate, std::vector<Candidate>, CandidateOrder> pq;
    auto push_edge = [&](int a, int b) {
        Quadric sum = quad[a];
        sum += quad[b];
        pq.push({sum.eval(pos[b]), a, b, ver[a], ver[b]});
        pq.push({sum.eval(pos[a]), b, a, ver[b], ver[a]});
    };
    for (const auto& e : edge_list(fine)) push_edge(e[0], e[1]);

    auto neighbor_set = [&](int v) {
        std::set<int> ns;
        for (int f : vfaces[v])
            for (int c = 0; c < 3; ++c)
                if (faces[f][c] != v) ns.insert(faces[f][c]);
        return ns;
    };

    while (live > target_v && !pq.empty()) {
        Candidate cand = pq.top();
        pq.pop();
        const int u = cand.removed, v = cand.kept;
        if (!alive[u] || !alive[v]) continue;
        if (cand.ver_removed != ver[u] || cand.ver_kept != ver[v]) continue;

        // Shared faces along edge (u, v); must be exactly two on a closed
        // manifold for the collapse to be legal.
        std::vector<int> shared;
        for (int f : vfaces[u])
            if (vfaces[v].count(f)) shared.push_back(f);
        if (shared.size() != 2) continue;

        // Link condition: the common neighbors of u and v must be exactly the
        // two apex vertices of the shared faces, and the apex-apex edge may
        // not be in both links (collapsing a tetrahedral pocket would leave a
        // two-face pillow).
        auto nu = neighbor_set(u);
        auto nv_set = neighbor_set(v);
        std::vector<int> common;
        std::set_intersection(nu.begin(), nu.end(), nv_set.begin(), nv_set.end(),
                              std::back_inserter(common));
        if (common.size() != 2) continue;
        const int c0 = common[0], c1 = common[1];
        auto apex_edge_in_link = [&](int center) {
            for (int f : vfaces[center]) {
                const Face& face = faces[f];
                bool has0 = false, has1 = false;
                for (int c = 0; c < 3; ++c) {
                    has0 |= face[c] == c0;
                    has1 |= face[c] == c1;
                }
                if (has0 && has1) return true;
            }
            return false;
        };
        if (apex_edge_in_link(u) && apex_edge_in_link(v)) continue;

        // Fold-over rejection: moving u onto v must not flip any surviving
        // face around u.
        bool folds = false;
        for (int f : vfaces[u]) {
            if (f == shared[0] || f == shared[1]) continue;
            Vec3 p[3], pnew[3];
            for (int c = 0; c < 3; ++c) {
                p[c] = pos[faces[f][c]];
                pnew[c] = faces[f][c] == u ? pos[v] : p[c];
            }
            const Vec3 n0 = (p[1] - p[0]).cross(p[2] - p[0]);
            const Vec3 n1 = (pnew[1] - pnew[0]).cross(pnew[2] - pnew[0]);
            if (n0.dot(n1) <= 1e-14 * n0.norm2()) {
                folds = true;
                break;
            }
        }
        if (folds) continue;

        // Collapse u -> v.
        for (int f : shared) {
            face_dead[f] = 1;
            for (int c = 0; c < 3; ++c) vfaces[faces[f][c]].erase(f);
        }
        const std::vector<int> moved(vfaces[u].begin(), vfaces[u].end());
        for (int f : moved) {
            for (int c = 0; c < 3; ++c)
                if (faces[f][c] == u) faces[f][c] = v;
            vfaces[v].insert(f);
        }
        vfaces[u].clear();
        quad[v] += quad[u];
        alive[u] = 0;
        ++ver[u];
        ++ver[v];
        --live;

        for (int w : neighbor_set(v)) push_edge(v, w);
    }

    if (live > target_v)
        throw std::runtime_error("decimate: ran out of legal collapses at " +
                                 std::to_string(live) + " vertices");

    // Compact to the coarse mesh; kept vertices stay in ascending original order.
    std::vector<int> kept;
    std::vector<int> remap(nv, -1);
    for (int i = 0; i < nv; ++i)
        if (alive[i]) {
            remap[i] = static_cast<int>(kept.size());
            kept.push_back(i);
        }

    TriMesh coarse;
    coarse.vertices.reserve(kept.size());
    for (int i : kept) coarse.vertices.push_back(pos[i]);
    for (int f = 0; f < static_cast<int>(faces.size()); ++f) {
        if (face_dead[f]) continue;
        coarse.faces.push_back({remap[faces[f][0]], remap[faces[f][1]], remap[faces[f][2]]});
    }

    if (!is_closed_manifold(coarse, &why))
        throw std::runtime_error("decimate: output lost closed-manifold property (" + why + ")");

    const int nc = coarse.vcount();
    std::vector<SparseEntry> down_entries;
    down_entries.reserve(kept.size());
    for (int i = 0; i < nc; ++i)
        down_entries.push_back({i, kept[i], 1.0});
    SparseMatrix down(nc, nv, std::move(down_entries));

    TriBvh bvh(coarse);
    std::vector<SparseEntry> up_entries;
    up_entries.reserve(static_cast<size_t>(nv) * 2);
    for (int i = 0; i < nv; ++i) {
        if (alive[i]) {
            up_entries.push_back({i, remap[i], 1.0});
            continue;
        }
        const SurfaceHit hit = bvh.closest(pos[i]);
        const Face& f = coarse.faces[hit.face];
        for (int c = 0; c < 3; ++c)
            if (hit.bary[c] != 0.0) up_entries.push_back({i, f[c], hit.bary[c]});
    }
    SparseMatrix up(nv, nc, std::move(up_entries));

    return {std::move(coarse), std::move(down), std::move(up)};
}

}  // namespace voxmesh
