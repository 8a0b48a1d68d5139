#include <cmath>
#include <string>
#include <type_traits>

#include "voxmesh/losses.hpp"
#include "voxmesh/nearest.hpp"

namespace voxmesh {

namespace {

std::vector<Vec3> tensor_points(const Tensor& t) {
    require(t.rank() == 2 && t.dim(1) == 3,
            "loss: points must be [V,3], got " + shape_str(t.shape()));
    const std::int64_t n = t.dim(0);
    std::vector<Vec3> pts(static_cast<std::size_t>(n));
    if (t.dtype() == Dtype::F32) {
        const float* p = t.data<float>();
        for (std::int64_t i = 0; i < n; ++i)
            pts[static_cast<std::size_t>(i)] = {p[3 * i], p[3 * i + 1], p[3 * i + 2]};
    } else {
        const double* p = t.data<double>();
        for (std::int64_t i = 0; i < n; ++i)
            pts[static_cast<std::size_t>(i)] = {p[3 * i], p[3 * i + 1], p[3 * i + 2]};
    }
    return pts;
}

template <class T>
void axpy3(T* g, std::int64_t i, const Vec3& v, double s) {
    g[3 * i] += static_cast<T>(v.x * s);
    g[3 * i + 1] += static_cast<T>(v.y * s);
    g[3 * i + 2] += static_cast<T>(v.z * s);
}

Vec3 point_of(const detail::Node& n, std::int64_t i) {
    if (n.dtype == Dtype::F32) {
        const float* p = n.val<float>();
        return {p[3 * i], p[3 * i + 1], p[3 * i + 2]};
    }
    const double* p = n.val<double>();
    return {p[3 * i], p[3 * i + 1], p[3 * i + 2]};
}

double upstream(const detail::Node& o) {
    return o.dtype == Dtype::F32 ? static_cast<double>(o.gf[0]) : o.gd[0];
}

}  // namespace

SurfaceSamples sample_surface_with_normals(const TriMesh& mesh, std::int64_t count, Rng& rng) {
    std::vector<int> fids;
    SurfaceSamples s;
    s.points = sample_surface(mesh, count, rng, &fids);
    const std::vector<Vec3> fn = face_normals(mesh);
    s.normals.reserve(fids.size());
    for (int f : fids) s.normals.push_back(fn[static_cast<std::size_t>(f)]);
    return s;
}

MeshTopology make_topology(const TriMesh& mesh) {
    validate_mesh(mesh);
    MeshTopology topo;
    topo.faces = mesh.faces;
    topo.edges = edge_list(mesh);
    topo.neighbors = vertex_neighbors(mesh);
    return topo;
}

std::pair<std::vector<std::int64_t>, std::vector<std::int64_t>> chamfer_indices(
    const std::vector<Vec3>& pred, const std::vector<Vec3>& gt) {
    require(!pred.empty() && !gt.empty(), "chamfer: point sets must be non-empty");
    PointGrid gt_grid(gt);
    PointGrid pred_grid(pred);
    std::vector<std::int64_t> p2g(pred.size()), g2p(gt.size());
    for (std::size_t i = 0; i < pred.size(); ++i) p2g[i] = gt_grid.nearest(pred[i]).index;
    for (std::size_t j = 0; j < gt.size(); ++j) g2p[j] = pred_grid.nearest(gt[j]).index;
    return {std::move(p2g), std::move(g2p)};
}

Tensor chamfer(const Tensor& pred, const std::vector<Vec3>& gt) {
    const std::vector<Vec3> pv = tensor_points(pred);
    auto [p2g, g2p] = chamfer_indices(pv, gt);

    const double P = static_cast<double>(pv.size());
    const double Q = static_cast<double>(gt.size());
    double loss = 0.0;
    for (std::size_t i = 0; i < pv.size(); ++i)
        loss += (pv[i] - gt[static_cast<std::size_t>(p2g[i])]).norm2() / P;
    for (std::size_t j = 0; j < gt.size(); ++j)
        loss += (gt[j] - pv[static_cast<std::size_t>(g2p[j])]).norm2() / Q;

    detail::NodePtr pin = pred.node();
    std::vector<Vec3> gt_copy = gt;
    Tensor out = detail::make_op(
        {1}, pred.dtype(), {pred},
        [pin, gt_copy = std::move(gt_copy), p2g = std::move(p2g), g2p = std::move(g2p), P,
         Q](detail::Node& o) {
            if (!pin->requires_grad) return;
            const double go = upstream(o);
            auto accum = [&](auto* g) {
                for (std::size_t i = 0; i < p2g.size(); ++i) {
                    const Vec3 d = point_of(*pin, static_cast<std::int64_t>(i)) -
                                   gt_copy[static_cast<std::size_t>(p2g[i])];
                    axpy3(g, static_cast<std::int64_t>(i), d, 2.0 * go / P);
                }
                for (std::size_t j = 0; j < g2p.size(); ++j) {
                    const Vec3 d = point_of(*pin, g2p[j]) - gt_copy[j];
                    axpy3(g, g2p[j], d, 2.0 * go / Q);
                }
            };
            if (o.dtype == Dtype::F32)
                accum(pin->grad<float>());
            else
                accum(pin->grad<double>());
        });
    if (out.dtype() == Dtype::F32)
        out.data<float>()[0] = static_cast<float>(loss);
    else
        out.data<double>()[0] = loss;
    return out;
}

double chamfer_value(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt) {
    auto [p2g, g2p] = chamfer_indices(pred, gt);
    double loss = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        loss += (pred[i] - gt[static_cast<std::size_t>(p2g[i])]).norm2() /
                static_cast<double>(pred.size());
    for (std::size_t j = 0; j < gt.size(); ++j)
        loss += (gt[j] - pred[static_cast<std::size_t>(g2p[j])]).norm2() /
                static_cast<double>(gt.size());
    return loss;
}

Tensor edge_loss(const Tensor& pts, const std::vector<std::array<int, 2>>& edges) {
    const std::vector<Vec3> pv = tensor_points(pts);
    require(!edges.empty(), "edge_loss: empty edge list");
    for (const auto& e : edges)
        require(e[0] >= 0 && e[1] >= 0 && e[0] < static_cast<int>(pv.size()) &&
                    e[1] < static_cast<int>(pv.size()),
                "edge_loss: edge index out of range");

    const double E = static_cast<double>(edges.size());
    double loss = 0.0;
    for (const auto& e : edges)
        loss += (pv[static_cast<std::size_t>(e[0])] - pv[static_cast<std::size_t>(e[1])]).norm2() /
                E;

    detail::NodePtr pin = pts.node();
    Tensor out = detail::make_op({1}, pts.dtype(), {pts},
                                 [pin, edges, E](detail::Node& o) {
        if (!pin->requires_grad) return;
        const double go = upstream(o);
        auto accum = [&](auto* g) {
            for (const auto& e : edges) {
                const Vec3 d = point_of(*pin, e[0]) - point_of(*pin, e[1]);
                axpy3(g, e[0], d, 2.0 * go / E);
                axpy3(g, e[1], d, -2.0 * go / E);
            }
        };
        if (o.dtype == Dtype::F32)
            accum(pin->grad<float>());
        else
            accum(pin->grad<double>());
    });
    if (out.dtype() == Dtype::F32)
        out.data<float>()[0] = static_cast<float>(loss);
    else
        out.data<double>()[0] = loss;
    return out;
}

Tensor laplacian_loss(const Tensor& pts, const std::vector<std::vector<int>>& neighbors) {
    const std::vector<Vec3> pv = tensor_points(pts);
    require(neighbors.size() == pv.size(), "laplacian_loss: neighbor table size mismatch");
    for (const auto& nb : neighbors)
        require(!nb.empty(), "laplacian_loss: isolated vertex has no Laplacian");

    const double V = static_cast<double>(pv.size());
    double loss = 0.0;
    for (std::size_t i = 0; i < pv.size(); ++i) {
        Vec3 m{0, 0, 0};
        for (int j : neighbors[i]) m += pv[static_cast<std::size_t>(j)];
        loss += (pv[i] - m * (1.0 / static_cast<double>(neighbors[i].size()))).norm2() / V;
    }

    detail::NodePtr pin = pts.node();
    Tensor out = detail::make_op({1}, pts.dtype(), {pts},
                                 [pin, neighbors, V](detail::Node& o) {
        if (!pin->requires_grad) return;
        const double go = upstream(o);
        auto accum = [&](auto* g) {
            for (std::size_t i = 0; i < neighbors.size(); ++i) {
                Vec3 m{0, 0, 0};
                for (int j : neighbors[i]) m += point_of(*pin, j);
                const Vec3 r = point_of(*pin, static_cast<std::int64_t>(i)) -
                               m * (1.0 / static_cast<double>(neighbors[i].size()));
                axpy3(g, static_cast<std::int64_t>(i), r, 2.0 * go / V);
                const double share = -2.0 * go / (V * static_cast<double>(neighbors[i].size()));
                for (int j : neighbors[i]) axpy3(g, j, r, share);
            }
        };
        if (o.dtype == Dtype::F32)
            accum(pin->grad<float>());
        else
            accum(pin->grad<double>());
    });
    if (out.dtype() == Dtype::F32)
        out.data<float>()[0] = static_cast<float>(loss);
    else
        out.data<double>()[0] = loss;
    return out;
}

Tensor normal_loss(const Tensor& pts, const std::vector<Face>& faces, const SurfaceSamples& gt,
                   int* skipped) {
    const std::vector<Vec3> pv = tensor_points(pts);
    require(!faces.empty(), "normal_loss: empty face list");
    require(!gt.points.empty() && gt.points.size() == gt.normals.size(),
            "normal_loss: gt samples need matching points and normals");

    PointGrid grid(gt.points);
    constexpr double kAreaEps = 1e-20;

    // Pairing and degeneracy are decided at the evaluated point and treated
    // as constants by the backward pass.
    std::vector<int> live;
    std::vector<Vec3> paired;
    double loss = 0.0;
    int skip = 0;
    for (std::size_t f = 0; f < faces.size(); ++f) {
        const Vec3& a = pv[static_cast<std::size_t>(faces[f][0])];
        const Vec3& b = pv[static_cast<std::size_t>(faces[f][1])];
        const Vec3& c = pv[static_cast<std::size_t>(faces[f][2])];
        const Vec3 u = (b - a).cross(c - a);
        if (u.norm2() <= kAreaEps) {
            ++skip;
            continue;
        }
        const Vec3 centroid = (a + b + c) * (1.0 / 3.0);
        const Vec3 m = gt.normals[static_cast<std::size_t>(grid.nearest(centroid).index)];
        live.push_back(static_cast<int>(f));
        paired.push_back(m);
        loss += 1.0 - std::abs(u.normalized().dot(m));
    }
    if (skipped) *skipped = skip;
    // A fully degenerate mesh has no faces to orient: zero loss, zero
    // gradient, and the other terms are what pulls it apart.
    const double F = live.empty() ? 1.0 : static_cast<double>(live.size());
    loss /= F;

    detail::NodePtr pin = pts.node();
    Tensor out = detail::make_op(
        {1}, pts.dtype(), {pts},
        [pin, faces, live = std::move(live), paired = std::move(paired), F](detail::Node& o) {
            if (!pin->requires_grad) return;
            const double go = upstream(o);
            auto accum = [&](auto* g) {
                for (std::size_t k = 0; k < live.size(); ++k) {
                    const Face& fc = faces[static_cast<std::size_t>(live[k])];
                    const Vec3 a = point_of(*pin, fc[0]);
                    const Vec3 b = point_of(*pin, fc[1]);
                    const Vec3 c = point_of(*pin, fc[2]);
                    const Vec3 e1 = b - a, e2 = c - a;
                    const Vec3 u = e1.cross(e2);
                    const double un = u.norm();
                    if (un <= 0.0) continue;
                    const Vec3 n = u * (1.0 / un);
                    const Vec3& m = paired[k];
                    const double d = n.dot(m);
                    // dL/dn for the term (1 - |d|)/F.
                    const double sgn = d >= 0.0 ? 1.0 : -1.0;
                    const Vec3 dn = m * (-sgn * go / F);
                    const Vec3 du = (dn - n * n.dot(dn)) * (1.0 / un);
                    const Vec3 de1 = e2.cross(du);
                    const Vec3 de2 = du.cross(e1);
                    axpy3(g, fc[1], de1, 1.0);
                    axpy3(g, fc[2], de2, 1.0);
                    axpy3(g, fc[0], de1 + de2, -1.0);
                }
            };
            if (o.dtype == Dtype::F32)
                accum(pin->grad<float>());
            else
                accum(pin->grad<double>());
        });
    if (out.dtype() == Dtype::F32)
        out.data<float>()[0] = static_cast<float>(loss);
    else
        out.data<double>()[0] = loss;
    return out;
}

Tensor mesh_loss(const DeformationTrace& trace, const MeshTopology& topo,
                 const SurfaceSamples& gt, const LossWeights& w) {
    require(!trace.stages.empty(), "mesh_loss: trace has no stages");
    require(w.chamfer >= 0 && w.laplacian >= 0 && w.normal >= 0 && w.edge >= 0,
            "mesh_loss: weights must be nonnegative");
    Tensor total;
    for (const Tensor& stage : trace.stages) {
        Tensor combo = scale(chamfer(stage, gt.points), w.chamfer);
        combo = add(combo, scale(laplacian_loss(stage, topo.neighbors), w.laplacian));
        combo = add(combo, scale(normal_loss(stage, topo.faces, gt), w.normal));
        combo = add(combo, scale(edge_loss(stage, topo.edges), w.edge));
        total = total.defined() ? add(total, combo) : combo;
    }
    return total;
}

Tensor seg_cross_entropy(const Tensor& logits, const Volume& labels) {
    require(logits.rank() == 4, "seg_cross_entropy: logits must be [C,D,H,W], got " +
                                    shape_str(logits.shape()));
    const std::int64_t C = logits.dim(0);
    require(C >= 2, "seg_cross_entropy: need at least two classes");
    require(logits.dim(1) == labels.d && logits.dim(2) == labels.h && logits.dim(3) == labels.w,
            "seg_cross_entropy: logits extents do not match the label grid");

    const std::int64_t N = labels.numel();
    std::vector<int> lbl(static_cast<std::size_t>(N));
    for (std::int64_t v = 0; v < N; ++v) {
        const float raw = labels.voxels[static_cast<std::size_t>(v)];
        const int l = static_cast<int>(std::lround(raw));
        require(std::abs(raw - static_cast<float>(l)) < 1e-4f && l >= 0 && l < C,
                "seg_cross_entropy: label " + std::to_string(raw) + " out of range [0," +
                    std::to_string(C) + ")");
        lbl[static_cast<std::size_t>(v)] = l;
    }

    const std::vector<double> lv = logits.values();
    double loss = 0.0;
    for (std::int64_t v = 0; v < N; ++v) {
        double mx = lv[static_cast<std::size_t>(v)];
        for (std::int64_t c = 1; c < C; ++c)
            mx = std::max(mx, lv[static_cast<std::size_t>(c * N + v)]);
        double se = 0.0;
        for (std::int64_t c = 0; c < C; ++c)
            se += std::exp(lv[static_cast<std::size_t>(c * N + v)] - mx);
        loss += mx + std::log(se) -
                lv[static_cast<std::size_t>(lbl[static_cast<std::size_t>(v)] * N + v)];
    }
    loss /= static_cast<double>(N);

    detail::NodePtr pin = logits.node();
    Tensor out = detail::make_op({1}, logits.dtype(), {logits},
                                 [pin, lbl = std::move(lbl), C, N](detail::Node& o) {
        if (!pin->requires_grad) return;
        const double go = upstream(o);
        auto accum = [&](auto* g, const auto* x) {
            for (std::int64_t v = 0; v < N; ++v) {
                double mx = static_cast<double>(x[v]);
                for (std::int64_t c = 1; c < C; ++c)
                    mx = std::max(mx, static_cast<double>(x[c * N + v]));
                double se = 0.0;
                for (std::int64_t c = 0; c < C; ++c)
                    se += std::exp(static_cast<double>(x[c * N + v]) - mx);
                using T = std::remove_pointer_t<decltype(g)>;
                for (std::int64_t c = 0; c < C; ++c) {
                    const double soft = std::exp(static_cast<double>(x[c * N + v]) - mx) / se;
                    const double hot = c == lbl[static_cast<std::size_t>(v)] ? 1.0 : 0.0;
                    g[c * N + v] += static_cast<T>(go * (soft - hot) / static_cast<double>(N));
                }
            }
        };
        if (o.dtype == Dtype::F32)
            accum(pin->grad<float>(), pin->val<float>());
        else
            accum(pin->grad<double>(), pin->val<double>());
    });
    if (out.dtype() == Dtype::F32)
        out.data<float>()[0] = static_cast<float>(loss);
    else
        out.data<double>()[0] = loss;
    return out;
}

}  // namespace voxmesh
