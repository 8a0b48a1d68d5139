#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "voxmesh/mesh.hpp"

namespace voxmesh {

// Scalar grid with intensities in [0,1]. Voxel (ix,iy,iz) — ix along W
// (fastest), iy along H, iz along D — sits at flat index (iz*H + iy)*W + ix.
// `transform` maps voxel indices to normalized coordinates: p = A*(ix,iy,iz) + b.
struct Volume {
    std::int64_t d = 0, h = 0, w = 0;
    std::vector<float> voxels;
    double A[9] = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    double b[3] = {0, 0, 0};

    std::int64_t numel() const { return d * h * w; }
    float at(std::int64_t ix, std::int64_t iy, std::int64_t iz) const {
        return voxels[static_cast<std::size_t>((iz * h + iy) * w + ix)];
    }
    float& at(std::int64_t ix, std::int64_t iy, std::int64_t iz) {
        return voxels[static_cast<std::size_t>((iz * h + iy) * w + ix)];
    }
    Vec3 to_normalized(double ix, double iy, double iz) const {
        return {A[0] * ix + A[1] * iy + A[2] * iz + b[0],
                A[3] * ix + A[4] * iy + A[5] * iz + b[1],
                A[6] * ix + A[7] * iy + A[8] * iz + b[2]};
    }
};

// Zeroed volume whose voxel centers span [-1,1]^3: index 0 maps to -1 and
// index (extent-1) maps to +1 along each axis.
Volume make_volume(std::int64_t d, std::int64_t h, std::int64_t w);

// Clamps intensities into [0,1] and checks the transform is invertible.
void normalize_volume(Volume& vol);

double transform_det(const Volume& vol);

// Inverse transform: normalized point -> continuous voxel indices (ix,iy,iz).
// Throws when the transform is singular.
std::array<double, 12> inverse_transform(const Volume& vol);

// Separable 3x3x3 binomial smoothing applied `passes` times; 0 passes = copy.
Volume blur_volume(const Volume& vol, int passes);

// JSON sidecar {version:"VOL-1", dims, transform (12 coefficients),
// dtype:"f32"} next to a raw little-endian float blob:
// <prefix>.json / <prefix>.raw.
void save_volume(const Volume& vol, const std::string& prefix);
Volume load_volume(const std::string& prefix);

}  // namespace voxmesh
