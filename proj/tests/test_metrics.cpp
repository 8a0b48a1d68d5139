#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "voxmesh/metrics.hpp"

using namespace voxmesh;

namespace {

TriMesh translated(TriMesh m, const Vec3& t) {
    for (Vec3& v : m.vertices) v += t;
    return m;
}

TriMesh bumpy(int subdiv, std::uint64_t seed, double amp) {
    TriMesh m = icosphere(subdiv);
    Rng rng(seed);
    for (Vec3& v : m.vertices) v = v * (1.0 + rng.uniform(-amp, amp));
    return m;
}

TriMesh unit_square(double z) {
    TriMesh m;
    m.vertices = {{0, 0, z}, {1, 0, z}, {1, 1, z}, {0, 1, z}};
    m.faces = {{0, 1, 2}, {0, 2, 3}};
    return m;
}

}  // namespace

TEST_CASE("surface distance of a mesh to itself is zero") {
    TriMesh m = bumpy(2, 7, 0.2);
    SurfaceDistance d = surface_distance(m, m, 2000);
    CHECK(d.assd < 1e-12);
    CHECK(d.hd < 1e-10);
    CHECK(d.hd90 <= d.hd);
    CHECK(d.samples == 2000);
}

TEST_CASE("parallel planes measure their separation") {
    const double gap = 0.35;
    TriMesh a = unit_square(0.0);
    TriMesh b = unit_square(gap);
    SurfaceDistance d = surface_distance(a, b, 10000);
    CHECK(d.assd == doctest::Approx(gap).epsilon(0.01));
    CHECK(d.hd == doctest::Approx(gap).epsilon(0.01));
    CHECK(d.hd90 == doctest::Approx(gap).epsilon(0.01));
}

TEST_CASE("hausdorff dominates assd and the metric is symmetric") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        TriMesh a = bumpy(2, seed, 0.15);
        TriMesh b = translated(bumpy(2, seed + 100, 0.15), {0.1, -0.05, 0.2});
        SurfaceDistance ab = surface_distance(a, b, 1500);
        SurfaceDistance ba = surface_distance(b, a, 1500);
        CHECK(ab.hd >= ab.assd);
        CHECK(ab.hd >= ab.hd90);
        CHECK(ab.assd == ba.assd);
        CHECK(ab.hd == ba.hd);
        CHECK(ab.hd90 == ba.hd90);
        CHECK(ab.assd > 0.0);
    }
}

TEST_CASE("rigid translation of both meshes leaves the metrics unchanged") {
    TriMesh a = bumpy(2, 31, 0.2);
    TriMesh b = bumpy(2, 32, 0.2);
    SurfaceDistance before = surface_distance(a, b, 4000);
    const Vec3 t{12.5, -3.75, 8.25};
    SurfaceDistance after = surface_distance(translated(a, t), translated(b, t), 4000);
    CHECK(std::abs(before.assd - after.assd) < 1e-6);
    CHECK(std::abs(before.hd - after.hd) < 1e-6);
    CHECK(std::abs(before.hd90 - after.hd90) < 1e-6);
}

TEST_CASE("surface distance rejects empty meshes") {
    TriMesh empty;
    TriMesh m = icosphere(1);
    CHECK_THROWS(surface_distance(empty, m, 100));
    CHECK_THROWS(surface_distance(m, empty, 100));
    CHECK_THROWS(surface_distance(m, m, 0));
}

TEST_CASE("metrics report aggregates and round trips") {
    MetricsReport r;
    r.rows = {{"s1", 1.0, 3.0, 2.5}, {"s2", 2.0, 5.0, 4.5}, {"s3", 3.0, 7.0, 6.5}};
    r.samples_per_mesh = 1234;
    r.template_mode = "Ta";
    r.config_hash = "cfg-abc";
    r.manifest_hash = "man-def";
    finalize_report(r);
    CHECK(r.mean_assd == doctest::Approx(2.0));
    CHECK(r.mean_hd == doctest::Approx(5.0));
    CHECK(r.mean_hd90 == doctest::Approx(4.5));

    const std::string jpath = "metrics_report_test.json";
    const std::string cpath = "metrics_report_test.csv";
    save_metrics_json(r, jpath);
    save_metrics_csv(r, cpath);
    MetricsReport back = load_metrics_json(jpath);
    CHECK(back.rows.size() == 3);
    CHECK(back.rows[1].id == "s2");
    CHECK(back.rows[1].hd == 5.0);
    CHECK(back.mean_assd == r.mean_assd);
    CHECK(back.template_mode == "Ta");
    CHECK(back.config_hash == "cfg-abc");
    CHECK(back.manifest_hash == "man-def");

    std::ifstream csv(cpath);
    std::string line;
    std::getline(csv, line);
    CHECK(line == "id,assd,hd,hd90");
    int lines = 0;
    while (std::getline(csv, line)) ++lines;
    CHECK(lines == 4);  // three subjects + mean

    std::remove(jpath.c_str());
    std::remove(cpath.c_str());

    MetricsReport none;
    CHECK_THROWS(finalize_report(none));
}
