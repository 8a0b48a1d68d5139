#include "voxmesh/volume.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "voxmesh/tensor.hpp"  // require()

namespace voxmesh {

Volume make_volume(std::int64_t d, std::int64_t h, std::int64_t w) {
    require(d >= 2 && h >= 2 && w >= 2, "volume: extents must be >= 2");
    Volume v;
    v.d = d;
    v.h = h;
    v.w = w;
    v.voxels.assign(static_cast<std::size_t>(d * h * w), 0.0f);
    v.A[0] = 2.0 / static_cast<double>(w - 1);
    v.A[4] = 2.0 / static_cast<double>(h - 1);
    v.A[8] = 2.0 / static_cast<double>(d - 1);
    v.A[1] = v.A[2] = v.A[3] = v.A[5] = v.A[6] = v.A[7] = 0.0;
    v.b[0] = v.b[1] = v.b[2] = -1.0;
    return v;
}

double transform_det(const Volume& v) {
    const double* a = v.A;
    return a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6]) +
           a[2] * (a[3] * a[7] - a[4] * a[6]);
}

void normalize_volume(Volume& vol) {
    require(vol.d >= 2 && vol.h >= 2 && vol.w >= 2, "volume: extents must be >= 2");
    require(vol.numel() == static_cast<std::int64_t>(vol.voxels.size()),
            "volume: voxel count does not match dims");
    require(std::abs(transform_det(vol)) > 1e-12, "volume: transform is singular");
    for (float& x : vol.voxels) x = std::min(1.0f, std::max(0.0f, x));
}

std::array<double, 12> inverse_transform(const Volume& vol) {
    const double det = transform_det(vol);
    require(std::abs(det) > 1e-12, "volume: transform is singular");
    const double* a = vol.A;
    std::array<double, 12> inv{};
    inv[0] = (a[4] * a[8] - a[5] * a[7]) / det;
    inv[1] = (a[2] * a[7] - a[1] * a[8]) / det;
    inv[2] = (a[1] * a[5] - a[2] * a[4]) / det;
    inv[3] = (a[5] * a[6] - a[3] * a[8]) / det;
    inv[4] = (a[0] * a[8] - a[2] * a[6]) / det;
    inv[5] = (a[2] * a[3] - a[0] * a[5]) / det;
    inv[6] = (a[3] * a[7] - a[4] * a[6]) / det;
    inv[7] = (a[1] * a[6] - a[0] * a[7]) / det;
    inv[8] = (a[0] * a[4] - a[1] * a[3]) / det;
    // translation of the inverse: -A^{-1} b
    inv[9] = -(inv[0] * vol.b[0] + inv[1] * vol.b[1] + inv[2] * vol.b[2]);
    inv[10] = -(inv[3] * vol.b[0] + inv[4] * vol.b[1] + inv[5] * vol.b[2]);
    inv[11] = -(inv[6] * vol.b[0] + inv[7] * vol.b[1] + inv[8] * vol.b[2]);
    return inv;
}

Volume blur_volume(const Volume& vol, int passes) {
    require(passes >= 0, "blur: passes must be >= 0");
    Volume out = vol;
    if (passes == 0) return out;
    const std::int64_t d = vol.d, h = vol.h, w = vol.w;
    std::vector<float> tmp(out.voxels.size());
    auto axis_pass = [&](std::vector<float>& src, std::vector<float>& dst, int axis) {
        const std::int64_t strides[3] = {1, w, w * h};
        const std::int64_t extents[3] = {w, h, d};
        const std::int64_t stride = strides[axis];
        const std::int64_t n = extents[axis];
        for (std::int64_t iz = 0; iz < d; ++iz)
            for (std::int64_t iy = 0; iy < h; ++iy)
                for (std::int64_t ix = 0; ix < w; ++ix) {
                    const std::int64_t idx =
                        axis == 0 ? ix : axis == 1 ? iy : iz;
                    const std::int64_t base = (iz * h + iy) * w + ix;
                    const float c = src[static_cast<std::size_t>(base)];
                    const float lo = idx > 0 ? src[static_cast<std::size_t>(base - stride)] : c;
                    const float hi = idx < n - 1 ? src[static_cast<std::size_t>(base + stride)] : c;
                    dst[static_cast<std::size_t>(base)] = 0.25f * lo + 0.5f * c + 0.25f * hi;
                }
    };
    for (int p = 0; p < passes; ++p) {
        axis_pass(out.voxels, tmp, 0);
        axis_pass(tmp, out.voxels, 1);
        axis_pass(out.voxels, tmp, 2);
        out.voxels.swap(tmp);
    }
    return out;
}

void save_volume(const Volume& vol, const std::string& prefix) {
    require(std::abs(transform_det(vol)) > 1e-12, "volume: transform is singular");
    nlohmann::ordered_json j;
    j["version"] = "VOL-1";
    j["dims"] = {vol.d, vol.h, vol.w};
    std::vector<double> t(vol.A, vol.A + 9);
    t.insert(t.end(), vol.b, vol.b + 3);
    j["transform"] = t;
    j["dtype"] = "f32";
    std::ofstream hdr(prefix + ".json");
    require(hdr.good(), "save_volume: cannot open " + prefix + ".json");
    hdr << j.dump(2) << "\n";
    require(hdr.good(), "save_volume: header write failed for " + prefix);

    std::ofstream raw(prefix + ".raw", std::ios::binary);
    require(raw.good(), "save_volume: cannot open " + prefix + ".raw");
    raw.write(reinterpret_cast<const char*>(vol.voxels.data()),
              static_cast<std::streamsize>(vol.voxels.size() * sizeof(float)));
    require(raw.good(), "save_volume: blob write failed for " + prefix);
}

Volume load_volume(const std::string& prefix) {
    std::ifstream hdr(prefix + ".json");
    require(hdr.good(), "load_volume: cannot open " + prefix + ".json");
    nlohmann::json j;
    hdr >> j;
    require(j.value("version", "") == std::string("VOL-1"),
            "load_volume: unsupported version in " + prefix + ".json");
    require(j.value("dtype", "") == std::string("f32"),
            "load_volume: unsupported dtype in " + prefix + ".json");
    Volume v;
    const auto dims = j.at("dims");
    require(dims.size() == 3, "load_volume: dims must have 3 entries");
    v.d = dims[0].get<std::int64_t>();
    v.h = dims[1].get<std::int64_t>();
    v.w = dims[2].get<std::int64_t>();
    const auto t = j.at("transform");
    require(t.size() == 12, "load_volume: transform must have 12 coefficients");
    for (int i = 0; i < 9; ++i) v.A[i] = t[static_cast<std::size_t>(i)].get<double>();
    for (int i = 0; i < 3; ++i) v.b[i] = t[static_cast<std::size_t>(9 + i)].get<double>();

    std::ifstream raw(prefix + ".raw", std::ios::binary);
    require(raw.good(), "load_volume: cannot open " + prefix + ".raw");
    v.voxels.resize(static_cast<std::size_t>(v.numel()));
    raw.read(reinterpret_cast<char*>(v.voxels.data()),
             static_cast<std::streamsize>(v.voxels.size() * sizeof(float)));
    require(raw.gcount() == static_cast<std::streamsize>(v.voxels.size() * sizeof(float)),
            "load_volume: raw blob truncated: " + prefix + ".raw");
    normalize_volume(v);
    return v;
}

}  // namespace voxmesh
