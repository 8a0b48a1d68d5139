#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "voxmesh/mesh.hpp"
#include "voxmesh/rng.hpp"

using namespace voxmesh;

namespace {

TriMesh single_triangle() {
    TriMesh m;
    m.vertices = {{0, 0, 0}, {1, 0, 0}, {0.5, std::sqrt(3.0) / 2.0, 0}};
    m.faces = {{0, 1, 2}};
    return m;
}

TriMesh tetra() {
    TriMesh m;
    m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    // CCW seen from outside.
    m.faces = {{0, 2, 1}, {0, 1, 3}, {0, 3, 2}, {1, 2, 3}};
    return m;
}

TriMesh unit_square() {
    TriMesh m;
    m.vertices = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}};
    m.faces = {{0, 1, 2}, {0, 2, 3}};
    return m;
}

double radial_std(const TriMesh& m) {
    double mean = 0;
    for (const auto& v : m.vertices) mean += v.norm();
    mean /= m.vcount();
    double var = 0;
    for (const auto& v : m.vertices) {
        const double d = v.norm() - mean;
        var += d * d;
    }
    return std::sqrt(var / m.vcount());
}

}  // namespace

TEST_CASE("validate_mesh rejects bad faces") {
    TriMesh m = tetra();
    CHECK_NOTHROW(validate_mesh(m));

    TriMesh bad = m;
    bad.faces[0] = {0, 1, 4};
    CHECK_THROWS(validate_mesh(bad));

    bad = m;
    bad.faces[2] = {1, 1, 2};
    CHECK_THROWS(validate_mesh(bad));
}

TEST_CASE("edge_list and vertex_neighbors") {
    auto m = single_triangle();
    auto edges = edge_list(m);
    REQUIRE(edges.size() == 3);
    CHECK(edges[0] == std::array<int, 2>{0, 1});
    CHECK(edges[1] == std::array<int, 2>{0, 2});
    CHECK(edges[2] == std::array<int, 2>{1, 2});

    auto nbrs = vertex_neighbors(m);
    REQUIRE(nbrs.size() == 3);
    CHECK(nbrs[0] == std::vector<int>{1, 2});
    CHECK(nbrs[1] == std::vector<int>{0, 2});
    CHECK(nbrs[2] == std::vector<int>{0, 1});

    CHECK(edge_list(tetra()).size() == 6);
}

TEST_CASE("euler characteristic and closed-manifold check") {
    CHECK(euler_characteristic(tetra()) == 2);
    CHECK(is_closed_manifold(tetra()));

    std::string why;
    CHECK_FALSE(is_closed_manifold(single_triangle(), &why));
    CHECK_FALSE(why.empty());

    for (int k : {0, 1, 2}) {
        auto s = icosphere(k);
        CHECK(euler_characteristic(s) == 2);
        CHECK(is_closed_manifold(s));
    }
}

TEST_CASE("icosphere vertex counts and radius") {
    for (int k : {0, 1, 2, 3}) {
        auto s = icosphere(k, 1.0);
        CHECK(s.vcount() == 10 * (1 << (2 * k)) * (1 << (2 * k)) / (1 << (2 * k)) + 2);
        CHECK(s.vcount() == 10 * static_cast<int>(std::pow(4, k)) + 2);
        for (const auto& v : s.vertices) CHECK(v.norm() == doctest::Approx(1.0).epsilon(1e-12));
    }
    auto s = icosphere(2, 0.5);
    CHECK(s.vcount() == 162);
    for (const auto& v : s.vertices) CHECK(v.norm() == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("build_adjacency on a single triangle is all 1/3") {
    auto adj = build_adjacency(single_triangle());
    auto dense = adj.to_dense();
    REQUIRE(dense.size() == 9);
    for (double v : dense) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("build_adjacency isolated vertex gets identity row") {
    TriMesh m = single_triangle();
    m.vertices.push_back({5, 5, 5});
    auto dense = build_adjacency(m).to_dense();
    REQUIRE(dense.size() == 16);
    CHECK(dense[3 * 4 + 3] == doctest::Approx(1.0));
    CHECK(dense[3 * 4 + 0] == 0.0);
    CHECK(dense[0 * 4 + 3] == 0.0);
}

TEST_CASE("build_adjacency matches dense oracle on icosphere(1)") {
    auto m = icosphere(1);  // 42 vertices
    const int n = m.vcount();
    auto nbrs = vertex_neighbors(m);

    std::vector<double> a(static_cast<size_t>(n) * n, 0.0);
    std::vector<double> deg(n, 0.0);
    for (int i = 0; i < n; ++i) {
        a[static_cast<size_t>(i) * n + i] = 1.0;
        for (int j : nbrs[i]) a[static_cast<size_t>(i) * n + j] = 1.0;
    }
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) deg[i] += a[static_cast<size_t>(i) * n + j];
    std::vector<double> oracle(static_cast<size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            oracle[static_cast<size_t>(i) * n + j] =
                a[static_cast<size_t>(i) * n + j] / std::sqrt(deg[i] * deg[j]);

    auto dense = build_adjacency(m).to_dense();
    REQUIRE(dense.size() == oracle.size());
    double worst = 0;
    for (size_t i = 0; i < dense.size(); ++i) worst = std::max(worst, std::fabs(dense[i] - oracle[i]));
    CHECK(worst < 1e-7);

    for (int i = 0; i < n; ++i)
        for (int j = 0; j < i; ++j)
            CHECK(dense[static_cast<size_t>(i) * n + j] ==
                  doctest::Approx(dense[static_cast<size_t>(j) * n + i]).epsilon(1e-14));
}

TEST_CASE("uniform laplacian residual on equilateral triangle") {
    auto m = single_triangle();
    auto res = uniform_laplacian_residual(m);
    REQUIRE(res.size() == 3);
    // Each residual is vertex - midpoint(other two); magnitudes sqrt(3)/2.
    for (int i = 0; i < 3; ++i) {
        Vec3 mid = (m.vertices[(i + 1) % 3] + m.vertices[(i + 2) % 3]) * 0.5;
        Vec3 expect = m.vertices[i] - mid;
        CHECK(res[i].x == doctest::Approx(expect.x).epsilon(1e-12));
        CHECK(res[i].y == doctest::Approx(expect.y).epsilon(1e-12));
        CHECK(res[i].z == doctest::Approx(expect.z).epsilon(1e-12));
        CHECK(res[i].norm() == doctest::Approx(std::sqrt(3.0) / 2.0).epsilon(1e-12));
    }
}

TEST_CASE("uniform laplacian residual vanishes at hex-fan center") {
    TriMesh m;
    m.vertices.push_back({0, 0, 0});
    for (int k = 0; k < 6; ++k) {
        const double a = k * M_PI / 3.0;
        m.vertices.push_back({std::cos(a), std::sin(a), 0});
    }
    for (int k = 0; k < 6; ++k) m.faces.push_back({0, 1 + k, 1 + (k + 1) % 6});
    auto res = uniform_laplacian_residual(m);
    CHECK(res[0].norm() < 1e-14);
}

TEST_CASE("uniform laplacian residual is translation invariant") {
    auto m = icosphere(1);
    auto base = uniform_laplacian_residual(m);
    for (auto& v : m.vertices) v += Vec3{3.5, -2.25, 0.75};
    auto moved = uniform_laplacian_residual(m);
    for (size_t i = 0; i < base.size(); ++i) {
        CHECK(moved[i].x == doctest::Approx(base[i].x).epsilon(1e-9));
        CHECK(moved[i].y == doctest::Approx(base[i].y).epsilon(1e-9));
        CHECK(moved[i].z == doctest::Approx(base[i].z).epsilon(1e-9));
    }

    TriMesh iso = single_triangle();
    iso.vertices.push_back({9, 9, 9});
    CHECK_THROWS(uniform_laplacian_residual(iso));
}

TEST_CASE("normals of an axis-aligned square are +z") {
    auto m = unit_square();
    auto fn = face_normals(m);
    auto vn = vertex_normals(m);
    for (const auto& n : fn) {
        CHECK(n.x == doctest::Approx(0.0));
        CHECK(n.y == doctest::Approx(0.0));
        CHECK(n.z == doctest::Approx(1.0));
    }
    for (const auto& n : vn) CHECK(n.z == doctest::Approx(1.0));

    // Flipping one face flips its normal.
    std::swap(m.faces[1][1], m.faces[1][2]);
    fn = face_normals(m);
    CHECK(fn[0].z == doctest::Approx(1.0));
    CHECK(fn[1].z == doctest::Approx(-1.0));
}

TEST_CASE("icosphere vertex normals are radial within 1e-2") {
    auto m = icosphere(3);
    auto vn = vertex_normals(m);
    double worst = 0;
    for (int i = 0; i < m.vcount(); ++i) {
        double c = vn[i].dot(m.vertices[i].normalized());
        c = std::min(1.0, std::max(-1.0, c));
        worst = std::max(worst, std::acos(c));
    }
    CHECK(worst <= 1e-2);
}

TEST_CASE("zero-area faces are skipped with a counter") {
    TriMesh m = unit_square();
    m.vertices.push_back({2, 2, 0});
    m.vertices.push_back({3, 3, 0});
    m.vertices.push_back({4, 4, 0});  // collinear
    m.faces.push_back({4, 5, 6});
    int skipped = 0;
    auto fn = face_normals(m, &skipped);
    CHECK(skipped == 1);
    CHECK(fn[2].norm() == 0.0);
}

TEST_CASE("surface area and signed volume") {
    CHECK(surface_area(unit_square()) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(signed_volume(tetra()) == doctest::Approx(1.0 / 6.0).epsilon(1e-12));

    auto s = icosphere(3);
    CHECK(surface_area(s) == doctest::Approx(4.0 * M_PI).epsilon(0.01));
    CHECK(signed_volume(s) == doctest::Approx(4.0 / 3.0 * M_PI).epsilon(0.01));
}

TEST_CASE("mean_template") {
    auto m = icosphere(1);
    auto one = mean_template({m});
    for (int i = 0; i < m.vcount(); ++i) CHECK((one.vertices[i] - m.vertices[i]).norm() == 0.0);

    TriMesh neg = m;
    for (auto& v : neg.vertices) v = v * -1.0;
    auto zero = mean_template({m, neg});
    for (const auto& v : zero.vertices) CHECK(v.norm() < 1e-15);

    TriMesh plus = m, minus = m;
    for (auto& v : plus.vertices) v += Vec3{0.25, 0, 0};
    for (auto& v : minus.vertices) v += Vec3{-0.25, 0, 0};
    auto centered = mean_template({plus, minus});
    for (int i = 0; i < m.vcount(); ++i)
        CHECK((centered.vertices[i] - m.vertices[i]).norm() < 1e-15);

    TriMesh other = m;
    std::swap(other.faces[0][0], other.faces[0][1]);
    CHECK_THROWS(mean_template({m, other}));
    CHECK_THROWS(mean_template({m, tetra()}));
    CHECK_THROWS(mean_template({}));
}

TEST_CASE("taubin smoothing is shrink-resistant denoising") {
    auto m = icosphere(3);
    Rng rng(41);
    for (auto& v : m.vertices) {
        const double r = 1.0 + rng.uniform(-0.05, 0.05);
        v = v.normalized() * r;
    }
    const double before = radial_std(m);
    auto sm = taubin_smooth(m, 50);
    const double after = radial_std(sm);
    CHECK(after <= 0.5 * before);

    // Shrink resistance: mean radius stays near 1.
    double mean_r = 0;
    for (const auto& v : sm.vertices) mean_r += v.norm();
    mean_r /= sm.vcount();
    CHECK(mean_r == doctest::Approx(1.0).epsilon(0.02));

    CHECK(sm.faces == m.faces);

    auto id = taubin_smooth(m, 0);
    for (int i = 0; i < m.vcount(); ++i) CHECK((id.vertices[i] - m.vertices[i]).norm() == 0.0);
}

TEST_CASE("connected components and largest component") {
    TriMesh m = icosphere(1);
    const int base_v = m.vcount();
    const int base_f = m.fcount();
    TriMesh t = tetra();
    for (auto& v : t.vertices) v += Vec3{10, 0, 0};
    for (const auto& v : t.vertices) m.vertices.push_back(v);
    for (const auto& f : t.faces) m.faces.push_back({f[0] + base_v, f[1] + base_v, f[2] + base_v});

    int count = 0;
    auto comp = connected_components(m, &count);
    CHECK(count == 2);
    CHECK(comp[0] == 0);
    CHECK(comp[base_v] == 1);

    auto big = largest_component(m);
    CHECK(big.vcount() == base_v);
    CHECK(big.fcount() == base_f);
    CHECK(is_closed_manifold(big));
}

TEST_CASE("sample_surface is deterministic, on-surface, and area-uniform") {
    auto m = unit_square();
    Rng a(7), b(7);
    auto pa = sample_surface(m, 20000, a);
    auto pb = sample_surface(m, 20000, b);
    REQUIRE(pa.size() == 20000);
    REQUIRE(pb.size() == 20000);
    double mx = 0, my = 0;
    for (size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i].x == pb[i].x);
        CHECK(pa[i].y == pb[i].y);
        CHECK(pa[i].z == 0.0);
        CHECK(pa[i].x >= -1e-12);
        CHECK(pa[i].x <= 1.0 + 1e-12);
        CHECK(pa[i].y >= -1e-12);
        CHECK(pa[i].y <= 1.0 + 1e-12);
        mx += pa[i].x;
        my += pa[i].y;
    }
    mx /= pa.size();
    my /= pa.size();
    CHECK(mx == doctest::Approx(0.5).epsilon(0.02));
    CHECK(my == doctest::Approx(0.5).epsilon(0.02));

    // Face pick frequency proportional to area: shrink one triangle.
    TriMesh skew;
    skew.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0.1, 0, 0}, {0, 0.1, 0}};
    skew.faces = {{0, 1, 2}, {0, 3, 4}};  // areas 0.5 and 0.005
    Rng c(11);
    auto ps = sample_surface(skew, 40000, c);
    int in_small = 0;
    for (const auto& p : ps)
        if (p.x + p.y <= 0.1 + 1e-9) ++in_small;
    const double frac = static_cast<double>(in_small) / ps.size();
    CHECK(frac == doctest::Approx(0.005 / 0.505).epsilon(0.25));
}

TEST_CASE("obj round trip is exact") {
    auto m = icosphere(1, 0.73);
    for (auto& v : m.vertices) v += Vec3{0.001234567890123, -0.5, 0.25};
    const std::string path = "test_mesh_roundtrip.obj";
    save_obj(m, path);
    auto back = load_obj(path);
    REQUIRE(back.vcount() == m.vcount());
    REQUIRE(back.fcount() == m.fcount());
    for (int i = 0; i < m.vcount(); ++i) {
        CHECK(back.vertices[i].x == m.vertices[i].x);
        CHECK(back.vertices[i].y == m.vertices[i].y);
        CHECK(back.vertices[i].z == m.vertices[i].z);
    }
    CHECK(back.faces == m.faces);
    std::remove(path.c_str());
}

TEST_CASE("obj loader tolerates slash-qualified face indices") {
    const std::string path = "test_mesh_slash.obj";
    {
        std::ofstream out(path);
        out << "# comment line\n";
        out << "v 0 0 0\nv 1 0 0\nv 0 1 0\n";
        out << "vn 0 0 1\n";
        out << "f 1/1/1 2/2/1 3/3/1\n";
    }
    auto m = load_obj(path);
    CHECK(m.vcount() == 3);
    REQUIRE(m.fcount() == 1);
    CHECK(m.faces[0] == Face{0, 1, 2});
    std::remove(path.c_str());
}
