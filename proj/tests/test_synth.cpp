#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "voxmesh/marching_cubes.hpp"
#include "voxmesh/metrics.hpp"
#include "voxmesh/synth.hpp"

using namespace voxmesh;

namespace {

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& name)
        : path(std::filesystem::temp_directory_path() / name) {
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string str() const { return path.string(); }
};

}  // namespace

TEST_CASE("shape generator determinism and parameter guards") {
    auto [s1, m1] = generate_shape(42, 0.25, 6, 2);
    auto [s2, m2] = generate_shape(42, 0.25, 6, 2);
    REQUIRE(m1.vcount() == m2.vcount());
    for (int i = 0; i < m1.vcount(); ++i) {
        CHECK(m1.vertices[static_cast<std::size_t>(i)].x ==
              m2.vertices[static_cast<std::size_t>(i)].x);
        CHECK(m1.vertices[static_cast<std::size_t>(i)].y ==
              m2.vertices[static_cast<std::size_t>(i)].y);
        CHECK(m1.vertices[static_cast<std::size_t>(i)].z ==
              m2.vertices[static_cast<std::size_t>(i)].z);
    }
    CHECK(s1.modes.size() == s2.modes.size());

    auto [s3, m3] = generate_shape(43, 0.25, 6, 2);
    double diff = 0.0;
    for (int i = 0; i < m1.vcount(); ++i)
        diff = std::max(diff, (m1.vertices[static_cast<std::size_t>(i)] -
                               m3.vertices[static_cast<std::size_t>(i)])
                                  .norm());
    CHECK(diff > 1e-3);
    (void)s3;

    CHECK_THROWS(make_shape(1, -0.1, 4));
    CHECK_THROWS(make_shape(1, 0.31, 4));
    CHECK_THROWS(make_shape(1, 0.1, 0));
    CHECK_THROWS(make_shape(1, 0.1, 9));
}

TEST_CASE("zero bumpiness gives an exact sphere") {
    auto [shape, mesh] = generate_shape(7, 0.0, 5, 3);
    CHECK(shape.r0 == 0.5);
    double lo = 1e9, hi = 0.0;
    for (const Vec3& v : mesh.vertices) {
        lo = std::min(lo, v.norm());
        hi = std::max(hi, v.norm());
    }
    CHECK(hi - lo <= 1e-6);
    CHECK(hi == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("generated meshes are closed genus-zero surfaces inside the unit cube") {
    for (std::uint64_t seed : {1ULL, 9ULL, 123456789ULL}) {
        auto [shape, mesh] = generate_shape(seed, 0.3, 8, 3);
        CHECK(is_closed_manifold(mesh));
        CHECK(euler_characteristic(mesh) == 2);
        for (const Vec3& v : mesh.vertices) {
            CHECK(std::abs(v.x) < 1.0);
            CHECK(std::abs(v.y) < 1.0);
            CHECK(std::abs(v.z) < 1.0);
            // Star-shaped: every vertex sits exactly on the analytic surface.
            CHECK(v.norm() == doctest::Approx(shape.radius(v)).epsilon(1e-12));
        }
    }
}

TEST_CASE("voxelizer matches the analytic sphere volume") {
    RadialShape sphere = make_shape(5, 0.0, 4);
    VoxelizeResult vox = voxelize(sphere, 32, 32, 32, 0);

    std::int64_t occupied = 0;
    for (float v : vox.volume.voxels) {
        CHECK((v == 0.0f || v == 1.0f));
        if (v == 1.0f) ++occupied;
    }
    // Voxel centers span [-1,1], so cell volume is (2/31)^3 against the
    // analytic (4/3) pi r^3.
    const double cell = std::pow(2.0 / 31.0, 3);
    const double measured = static_cast<double>(occupied) * cell;
    const double analytic = 4.0 / 3.0 * M_PI * std::pow(0.5, 3);
    CHECK(measured == doctest::Approx(analytic).epsilon(0.05));

    for (std::size_t i = 0; i < vox.volume.voxels.size(); ++i)
        CHECK(vox.volume.voxels[i] == vox.labels.voxels[i]);

    VoxelizeResult soft = voxelize(sphere, 32, 32, 32, 2);
    bool any_soft = false;
    for (float v : soft.volume.voxels) any_soft = any_soft || (v > 0.0f && v < 1.0f);
    CHECK(any_soft);
    for (float v : soft.labels.voxels) CHECK((v == 0.0f || v == 1.0f));

    CHECK_THROWS(voxelize(sphere, 24, 32, 32, 0));
    CHECK_THROWS(voxelize(sphere, 8, 8, 8, 0));
    CHECK_THROWS(voxelize(sphere, 32, 32, 32, -1));
}

TEST_CASE("marching cubes recovers the analytic surface from the voxelization") {
    for (std::uint64_t seed : {3ULL, 17ULL}) {
        auto [shape, gt_mesh] = generate_shape(seed, 0.2, 6, 4);
        VoxelizeResult vox = voxelize(shape, 32, 32, 32, 0);
        TriMesh mc = marching_cubes(vox.volume, 0.5);
        REQUIRE(!mc.faces.empty());
        const double voxel_diag = std::sqrt(3.0) * (2.0 / 31.0);
        const double d = assd(mc, gt_mesh, 4000);
        CHECK(d <= 1.5 * voxel_diag);
    }
}

TEST_CASE("dataset build splits, determinism, and round trip") {
    TempDir dir_a("voxmesh_dset_a");
    TempDir dir_b("voxmesh_dset_b");

    DatasetSpec spec;
    spec.n = 50;
    spec.dim_d = spec.dim_h = spec.dim_w = 16;
    spec.mesh_subdivisions = 1;
    spec.blur_passes = 1;

    Dataset ds = build_dataset(spec, dir_a.str());
    CHECK(ds.entries.size() == 50);
    CHECK(ds.split("train").size() == 40);
    CHECK(ds.split("val").size() == 5);
    CHECK(ds.split("test").size() == 5);

    std::set<std::uint64_t> seeds;
    for (const auto& e : ds.entries) seeds.insert(e.seed);
    CHECK(seeds.size() == 50);

    // Second build from the same spec: identical manifest hash.
    Dataset ds2 = build_dataset(spec, dir_b.str());
    CHECK(ds2.manifest_hash == ds.manifest_hash);

    Dataset back = load_dataset(dir_a.str() + "/manifest.json");
    CHECK(back.manifest_hash == ds.manifest_hash);
    REQUIRE(back.entries.size() == ds.entries.size());
    CHECK(back.spec.n == 50);
    CHECK(back.entries[0].id == "s000");
    CHECK(back.entries[0].split == "train");
    CHECK(back.entries[49].split == "test");

    // Emitted files round-trip bit-exactly.
    const DatasetEntry& e0 = back.entries[0];
    Volume vol = load_volume(e0.volume);
    Volume lbl = load_volume(e0.labels);
    TriMesh mesh = load_obj(e0.mesh);
    RadialShape shape = make_shape(e0.seed, spec.bumpiness, spec.mode_count);
    VoxelizeResult want = voxelize(shape, 16, 16, 16, spec.blur_passes);
    TriMesh want_mesh = shape_mesh(shape, spec.mesh_subdivisions);
    CHECK(vol.voxels == want.volume.voxels);
    CHECK(lbl.voxels == want.labels.voxels);
    REQUIRE(mesh.vcount() == want_mesh.vcount());
    for (int i = 0; i < mesh.vcount(); ++i)
        CHECK((mesh.vertices[static_cast<std::size_t>(i)] -
               want_mesh.vertices[static_cast<std::size_t>(i)])
                  .norm() == 0.0);

    // Tampering with the manifest trips the hash check.
    const std::string mpath = dir_a.str() + "/manifest.json";
    std::ifstream in(mpath);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    const auto pos = text.find("\"bumpiness\": 0.2");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 16, "\"bumpiness\": 0.3");
    std::ofstream outf(mpath);
    outf << text;
    outf.close();
    CHECK_THROWS(load_dataset(mpath));

    DatasetSpec bad = spec;
    bad.fractions = {0.5, 0.2, 0.2};
    CHECK_THROWS(build_dataset(bad, dir_a.str()));
    bad.fractions = {0.0, 0.5, 0.5};
    CHECK_THROWS(build_dataset(bad, dir_a.str()));
}

TEST_CASE("single-sample dataset trains only") {
    TempDir dir("voxmesh_dset_one");
    DatasetSpec spec;
    spec.n = 1;
    spec.fractions = {1.0, 0.0, 0.0};
    spec.dim_d = spec.dim_h = spec.dim_w = 16;
    spec.mesh_subdivisions = 1;
    Dataset ds = build_dataset(spec, dir.str());
    CHECK(ds.split("train").size() == 1);
    CHECK(ds.split("val").empty());
    CHECK(ds.split("test").empty());
}
