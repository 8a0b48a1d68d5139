#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "voxmesh/mesh.hpp"
#include "voxmesh/volume.hpp"

namespace voxmesh {

// One radial bump: a low-order monomial in the unit direction.
struct ShapeMode {
    int ex = 0, ey = 0, ez = 0;  // exponents, ex+ey+ez in [1,3]
    double amp = 0.0;
};

// Star-shaped surface r(dir) = r0 * (1 + bumpiness * S(dir)) with S a
// normalized sum of smooth monomial bumps, |S| <= 1.
struct RadialShape {
    std::uint64_t seed = 0;
    double r0 = 0.5;
    double bumpiness = 0.0;
    std::vector<ShapeMode> modes;

    double radius(const Vec3& dir) const;  // dir need not be unit length
    bool inside(const Vec3& p) const;
};

// Deterministic per seed; bumpiness in [0, 0.3], mode_count in [1, 8].
RadialShape make_shape(std::uint64_t seed, double bumpiness, int mode_count);

// Icosphere displaced radially onto the analytic surface.
TriMesh shape_mesh(const RadialShape& shape, int subdivisions = 4);

std::pair<RadialShape, TriMesh> generate_shape(std::uint64_t seed, double bumpiness,
                                               int mode_count, int subdivisions = 4);

// Binary occupancy against the analytic surface on a [-1,1]^3 grid, plus the
// label grid. blur_passes > 0 smooths the intensity volume (labels stay
// binary).
struct VoxelizeResult {
    Volume volume;
    Volume labels;
};
VoxelizeResult voxelize(const RadialShape& shape, std::int64_t d, std::int64_t h, std::int64_t w,
                        int blur_passes);

struct DatasetSpec {
    int n = 50;
    std::uint64_t seed = 1234;
    double bumpiness = 0.2;
    int mode_count = 6;
    std::array<double, 3> fractions = {0.8, 0.1, 0.1};  // train/val/test
    std::int64_t dim_d = 32, dim_h = 32, dim_w = 32;
    int blur_passes = 1;
    int mesh_subdivisions = 4;
};

struct DatasetEntry {
    std::string id;
    std::string split;  // train|val|test
    std::uint64_t seed = 0;
    std::string volume;  // path prefixes / file paths, absolute after load
    std::string labels;
    std::string mesh;
};

struct Dataset {
    DatasetSpec spec;
    std::vector<DatasetEntry> entries;
    std::string manifest_hash;

    std::vector<const DatasetEntry*> split(const std::string& name) const;
};

// Writes per-sample files and a "DSET-1" manifest into out_dir; returns the
// loaded dataset. The manifest hash covers the spec and every entry.
Dataset build_dataset(const DatasetSpec& spec, const std::string& out_dir);
Dataset load_dataset(const std::string& manifest_path);

}  // namespace voxmesh
