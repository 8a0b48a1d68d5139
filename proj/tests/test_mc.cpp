#include "doctest.h"

#include <cmath>
#include <map>
#include <vector>

#include "voxmesh/marching_cubes.hpp"
#include "voxmesh/mesh.hpp"
#include "voxmesh/volume.hpp"

using namespace voxmesh;

namespace {

Volume binary_sphere(std::int64_t extent, double radius, bool inverted = false) {
    auto vol = make_volume(extent, extent, extent);
    for (std::int64_t z = 0; z < extent; ++z)
        for (std::int64_t y = 0; y < extent; ++y)
            for (std::int64_t x = 0; x < extent; ++x) {
                auto p = vol.to_normalized(static_cast<double>(x), static_cast<double>(y),
                                           static_cast<double>(z));
                const bool inside = p.norm() < radius;
                vol.at(x, y, z) = (inside != inverted) ? 1.0f : 0.0f;
            }
    return vol;
}

}  // namespace

TEST_CASE("marching cubes on an empty field yields an empty mesh") {
    auto vol = make_volume(8, 8, 8);
    auto m = marching_cubes(vol, 0.5);
    CHECK(m.vcount() == 0);
    CHECK(m.fcount() == 0);
}

TEST_CASE("marching cubes on a binary sphere") {
    auto vol = binary_sphere(32, 0.5);
    auto m = marching_cubes(vol, 0.5);
    REQUIRE(m.vcount() > 0);
    validate_mesh(m);

    std::string why;
    CHECK(is_closed_manifold(m, &why));
    CAPTURE(why);
    CHECK(euler_characteristic(m) == 2);

    // Watertight: every undirected edge borders exactly two faces.
    std::map<std::pair<int, int>, int> incidence;
    for (const auto& f : m.faces)
        for (int e = 0; e < 3; ++e) {
            int a = f[e], b = f[(e + 1) % 3];
            if (a > b) std::swap(a, b);
            ++incidence[{a, b}];
        }
    for (const auto& [edge, count] : incidence) CHECK(count == 2);

    const double area = surface_area(m);
    const double expect = 4.0 * M_PI * 0.25;
    CHECK(std::fabs(area - expect) / expect < 0.10);

    // Outward orientation (inside value above iso).
    CHECK(signed_volume(m) > 0.0);

    // Every vertex sits within one voxel diagonal of the analytic sphere.
    const double voxel = 2.0 / 31.0;
    const double diag = voxel * std::sqrt(3.0);
    for (const auto& v : m.vertices) CHECK(std::fabs(v.norm() - 0.5) <= diag);
}

TEST_CASE("inverted field flips orientation") {
    auto vol = binary_sphere(24, 0.5, /*inverted=*/true);
    auto m = marching_cubes(vol, 0.5);
    REQUIRE(m.vcount() > 0);
    CHECK(signed_volume(m) < 0.0);
}

TEST_CASE("smooth field vertices interpolate onto the isosurface") {
    // f(p) = |p|: iso c extracts the sphere of radius c with subvoxel accuracy.
    auto vol = make_volume(24, 24, 24);
    for (std::int64_t z = 0; z < 24; ++z)
        for (std::int64_t y = 0; y < 24; ++y)
            for (std::int64_t x = 0; x < 24; ++x) {
                auto p = vol.to_normalized(static_cast<double>(x), static_cast<double>(y),
                                           static_cast<double>(z));
                vol.at(x, y, z) = static_cast<float>(std::min(1.0, p.norm() / 1.8));
            }
    const double iso = 0.6 / 1.8;
    auto m = marching_cubes(vol, iso);
    REQUIRE(m.vcount() > 0);
    CHECK(is_closed_manifold(m));
    // Linear interpolation of a near-linear radial field: much tighter than a
    // voxel.
    const double voxel = 2.0 / 23.0;
    for (const auto& v : m.vertices) CHECK(std::fabs(v.norm() - 0.6) < 0.2 * voxel);
    // Field grows outward, so values above iso lie outside: normals point
    // toward lower intensity = inward.
    CHECK(signed_volume(m) < 0.0);
}

TEST_CASE("marching cubes respects the volume transform") {
    auto vol = binary_sphere(16, 0.5);
    auto a = marching_cubes(vol, 0.5);
    Volume shifted = vol;
    shifted.b[0] += 0.25;
    auto b = marching_cubes(shifted, 0.5);
    REQUIRE(a.vcount() == b.vcount());
    CHECK(a.faces == b.faces);
    for (int i = 0; i < a.vcount(); ++i) {
        CHECK(b.vertices[i].x == doctest::Approx(a.vertices[i].x + 0.25).epsilon(1e-12));
        CHECK(b.vertices[i].y == doctest::Approx(a.vertices[i].y).epsilon(1e-12));
        CHECK(b.vertices[i].z == doctest::Approx(a.vertices[i].z).epsilon(1e-12));
    }
}

TEST_CASE("marching cubes is deterministic") {
    auto vol = binary_sphere(20, 0.4);
    auto a = marching_cubes(vol, 0.5);
    auto b = marching_cubes(vol, 0.5);
    REQUIRE(a.vcount() == b.vcount());
    CHECK(a.faces == b.faces);
    for (int i = 0; i < a.vcount(); ++i) {
        CHECK(a.vertices[i].x == b.vertices[i].x);
        CHECK(a.vertices[i].y == b.vertices[i].y);
        CHECK(a.vertices[i].z == b.vertices[i].z);
    }
}
