#include "doctest.h"

#include <cmath>
#include <vector>

#include "voxmesh/mesh.hpp"
#include "voxmesh/nearest.hpp"
#include "voxmesh/rng.hpp"

using namespace voxmesh;

namespace {

double brute_surface_dist2(const Vec3& p, const TriMesh& m) {
    double best = 1e300;
    for (const auto& f : m.faces) {
        Vec3 c = closest_point_on_triangle(p, m.vertices[f[0]], m.vertices[f[1]],
                                           m.vertices[f[2]]);
        best = std::min(best, (p - c).norm2());
    }
    return best;
}

}  // namespace

TEST_CASE("closest point on triangle covers all voronoi regions") {
    const Vec3 a{0, 0, 0}, b{2, 0, 0}, c{0, 2, 0};

    // Interior: straight projection.
    Vec3 q = closest_point_on_triangle({0.5, 0.5, 3.0}, a, b, c);
    CHECK((q - Vec3{0.5, 0.5, 0}).norm() < 1e-14);

    // Vertex regions.
    CHECK((closest_point_on_triangle({-1, -1, 0}, a, b, c) - a).norm() < 1e-14);
    CHECK((closest_point_on_triangle({5, -1, 2}, a, b, c) - b).norm() < 1e-14);
    CHECK((closest_point_on_triangle({-1, 5, -2}, a, b, c) - c).norm() < 1e-14);

    // Edge regions.
    q = closest_point_on_triangle({1, -3, 0}, a, b, c);
    CHECK((q - Vec3{1, 0, 0}).norm() < 1e-14);
    q = closest_point_on_triangle({-3, 1, 0}, a, b, c);
    CHECK((q - Vec3{0, 1, 0}).norm() < 1e-14);
    q = closest_point_on_triangle({2, 2, 0}, a, b, c);  // hypotenuse mid
    CHECK((q - Vec3{1, 1, 0}).norm() < 1e-14);

    // On the triangle itself: distance zero.
    q = closest_point_on_triangle({0.25, 0.25, 0}, a, b, c);
    CHECK((q - Vec3{0.25, 0.25, 0}).norm() < 1e-14);
}

TEST_CASE("closest point never beats a dense barycentric sweep") {
    Rng rng(5);
    for (int trial = 0; trial < 40; ++trial) {
        Vec3 a{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        Vec3 b{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        Vec3 c{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        Vec3 p{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
        const double exact = (p - closest_point_on_triangle(p, a, b, c)).norm2();
        double swept = 1e300;
        const int n = 60;
        for (int i = 0; i <= n; ++i)
            for (int j = 0; j <= n - i; ++j) {
                const double u = static_cast<double>(i) / n;
                const double v = static_cast<double>(j) / n;
                Vec3 s = a * (1 - u - v) + b * u + c * v;
                swept = std::min(swept, (p - s).norm2());
            }
        CHECK(exact <= swept + 1e-12);
        CHECK(swept - exact < 5e-3);  // sweep converges to the exact answer
    }
}

TEST_CASE("brute-force nearest point breaks ties toward the smaller index") {
    std::vector<Vec3> pts = {{1, 0, 0}, {-1, 0, 0}, {1, 0, 0}};
    auto r = nearest_point_brute({0, 0, 0}, pts);
    CHECK(r.index == 0);
    CHECK(r.dist2 == doctest::Approx(1.0));

    r = nearest_point_brute({2, 0, 0}, pts);
    CHECK(r.index == 0);  // duplicate at index 2 loses the tie
}

TEST_CASE("point grid reproduces brute force bit-for-bit") {
    Rng rng(17);

    auto run_case = [&](const std::vector<Vec3>& pts, int queries, double span) {
        PointGrid grid(pts);
        for (int q = 0; q < queries; ++q) {
            Vec3 p{rng.uniform(-span, span), rng.uniform(-span, span),
                   rng.uniform(-span, span)};
            auto a = nearest_point_brute(p, pts);
            auto b = grid.nearest(p);
            CHECK(a.index == b.index);
            CHECK(a.dist2 == b.dist2);  // identical arithmetic, exact match
        }
    };

    SUBCASE("single point") { run_case({{0.3, -0.2, 0.9}}, 50, 3.0); }

    SUBCASE("two equidistant points") {
        run_case({{1, 0, 0}, {-1, 0, 0}}, 100, 2.0);
    }

    SUBCASE("coincident points force ties") {
        std::vector<Vec3> pts(9, Vec3{0.1, 0.1, 0.1});
        pts.push_back({0.5, 0.5, 0.5});
        run_case(pts, 60, 1.5);
    }

    SUBCASE("uniform cloud") {
        std::vector<Vec3> pts;
        for (int i = 0; i < 500; ++i)
            pts.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
        run_case(pts, 300, 2.5);
    }

    SUBCASE("tight cluster with distant outlier") {
        std::vector<Vec3> pts;
        for (int i = 0; i < 200; ++i)
            pts.push_back({rng.uniform(-0.01, 0.01), rng.uniform(-0.01, 0.01),
                           rng.uniform(-0.01, 0.01)});
        pts.push_back({50, 50, 50});
        run_case(pts, 200, 60.0);
    }

    SUBCASE("exact lattice with symmetric ties") {
        std::vector<Vec3> pts;
        for (int z = 0; z < 4; ++z)
            for (int y = 0; y < 4; ++y)
                for (int x = 0; x < 4; ++x)
                    pts.push_back({static_cast<double>(x), static_cast<double>(y),
                                   static_cast<double>(z)});
        PointGrid grid(pts);
        // Query exactly between lattice points: both paths must agree on the
        // smaller-index winner.
        for (double t : {0.5, 1.5, 2.5}) {
            Vec3 p{t, t, t};
            auto a = nearest_point_brute(p, pts);
            auto b = grid.nearest(p);
            CHECK(a.index == b.index);
            CHECK(a.dist2 == b.dist2);
        }
        run_case(pts, 200, 5.0);
    }

    SUBCASE("degenerate flat cloud") {
        std::vector<Vec3> pts;
        for (int i = 0; i < 150; ++i)
            pts.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), 0.0});
        run_case(pts, 150, 2.0);
    }
}

TEST_CASE("triangle bvh matches the brute-force surface distance") {
    Rng rng(23);
    auto m = icosphere(2);
    for (auto& v : m.vertices) {
        const double r = 1.0 + 0.2 * rng.uniform(-1, 1);
        v = v * r;
    }
    TriBvh bvh(m);
    for (int q = 0; q < 250; ++q) {
        Vec3 p{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
        auto hit = bvh.closest(p);
        CHECK(hit.dist2 == brute_surface_dist2(p, m));
        REQUIRE(hit.face >= 0);
        REQUIRE(hit.face < m.fcount());

        // Barycentric reconstruction of the hit point.
        const auto& f = m.faces[hit.face];
        Vec3 rec = m.vertices[f[0]] * hit.bary[0] + m.vertices[f[1]] * hit.bary[1] +
                   m.vertices[f[2]] * hit.bary[2];
        CHECK((rec - hit.point).norm() < 1e-9);
        CHECK(hit.bary[0] + hit.bary[1] + hit.bary[2] == doctest::Approx(1.0).epsilon(1e-9));
        for (double w : hit.bary) {
            CHECK(w >= -1e-12);
            CHECK(w <= 1.0 + 1e-12);
        }
        CHECK(bvh.dist(p) == doctest::Approx(std::sqrt(hit.dist2)));
    }
}

TEST_CASE("bvh distance is zero on the surface itself") {
    auto m = icosphere(1);
    TriBvh bvh(m);
    for (const auto& v : m.vertices) CHECK(bvh.dist(v) < 1e-12);
    // Face centroids too.
    for (const auto& f : m.faces) {
        Vec3 cen = (m.vertices[f[0]] + m.vertices[f[1]] + m.vertices[f[2]]) * (1.0 / 3.0);
        CHECK(bvh.dist(cen) < 1e-12);
    }
}
