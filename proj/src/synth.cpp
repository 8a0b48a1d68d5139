#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "voxmesh/rng.hpp"
#include "voxmesh/synth.hpp"

namespace voxmesh {

namespace {

double mode_value(const ShapeMode& m, const Vec3& d) {
    double v = m.amp;
    for (int i = 0; i < m.ex; ++i) v *= d.x;
    for (int i = 0; i < m.ey; ++i) v *= d.y;
    for (int i = 0; i < m.ez; ++i) v *= d.z;
    return v;
}

}  // namespace

double RadialShape::radius(const Vec3& dir) const {
    const double n = dir.norm();
    const Vec3 d = n > 0 ? dir * (1.0 / n) : Vec3{0, 0, 1};
    double s = 0.0, total = 0.0;
    for (const ShapeMode& m : modes) {
        s += mode_value(m, d);
        total += std::abs(m.amp);
    }
    if (total > 0.0) s /= total;  // |s| <= 1 since each |monomial| <= 1 on the sphere
    return r0 * (1.0 + bumpiness * s);
}

bool RadialShape::inside(const Vec3& p) const {
    const double n = p.norm();
    if (n == 0.0) return true;
    return n < radius(p);
}

RadialShape make_shape(std::uint64_t seed, double bumpiness, int mode_count) {
    require(bumpiness >= 0.0 && bumpiness <= 0.3,
            "make_shape: bumpiness must lie in [0, 0.3], got " + std::to_string(bumpiness));
    require(mode_count >= 1 && mode_count <= 8,
            "make_shape: mode_count must lie in [1, 8], got " + std::to_string(mode_count));
    RadialShape shape;
    shape.seed = seed;
    shape.r0 = 0.5;
    shape.bumpiness = bumpiness;
    Rng rng = named_rng(seed, "shape-modes");
    for (int k = 0; k < mode_count; ++k) {
        ShapeMode m;
        const int order = 1 + static_cast<int>(rng.uniform(0.0, 3.0));  // 1..3
        for (int j = 0; j < order; ++j) {
            const double pick = rng.uniform();
            if (pick < 1.0 / 3.0)
                ++m.ex;
            else if (pick < 2.0 / 3.0)
                ++m.ey;
            else
                ++m.ez;
        }
        const double mag = 0.3 + rng.uniform(0.0, 0.7);
        m.amp = rng.uniform() < 0.5 ? -mag : mag;
        shape.modes.push_back(m);
    }
    return shape;
}

TriMesh shape_mesh(const RadialShape& shape, int subdivisions) {
    TriMesh mesh = icosphere(subdivisions);
    for (Vec3& v : mesh.vertices) v = v * shape.radius(v);
    return mesh;
}

std::pair<RadialShape, TriMesh> generate_shape(std::uint64_t seed, double bumpiness,
                                               int mode_count, int subdivisions) {
    RadialShape shape = make_shape(seed, bumpiness, mode_count);
    return {shape, shape_mesh(shape, subdivisions)};
}

VoxelizeResult voxelize(const RadialShape& shape, std::int64_t d, std::int64_t h, std::int64_t w,
                        int blur_passes) {
    require(d >= 16 && h >= 16 && w >= 16 && d % 16 == 0 && h % 16 == 0 && w % 16 == 0,
            "voxelize: extents must be >= 16 and divisible by 16");
    require(blur_passes >= 0, "voxelize: blur_passes must be nonnegative");

    Volume labels = make_volume(d, h, w);
    for (std::int64_t iz = 0; iz < d; ++iz)
        for (std::int64_t iy = 0; iy < h; ++iy)
            for (std::int64_t ix = 0; ix < w; ++ix)
                labels.at(ix, iy, iz) =
                    shape.inside(labels.to_normalized(static_cast<double>(ix),
                                                      static_cast<double>(iy),
                                                      static_cast<double>(iz)))
                        ? 1.0f
                        : 0.0f;

    VoxelizeResult out;
    out.volume = blur_passes > 0 ? blur_volume(labels, blur_passes) : labels;
    out.labels = std::move(labels);
    return out;
}

std::vector<const DatasetEntry*> Dataset::split(const std::string& name) const {
    std::vector<const DatasetEntry*> out;
    for (const DatasetEntry& e : entries)
        if (e.split == name) out.push_back(&e);
    return out;
}

namespace {

nlohmann::ordered_json spec_json(const DatasetSpec& s) {
    return {{"n", s.n},
            {"seed", s.seed},
            {"bumpiness", s.bumpiness},
            {"mode_count", s.mode_count},
            {"fractions", {s.fractions[0], s.fractions[1], s.fractions[2]}},
            {"dims", {s.dim_d, s.dim_h, s.dim_w}},
            {"blur_passes", s.blur_passes},
            {"mesh_subdivisions", s.mesh_subdivisions}};
}

DatasetSpec spec_from(const nlohmann::json& j) {
    DatasetSpec s;
    s.n = j.at("n").get<int>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.bumpiness = j.at("bumpiness").get<double>();
    s.mode_count = j.at("mode_count").get<int>();
    for (int k = 0; k < 3; ++k) s.fractions[static_cast<std::size_t>(k)] = j.at("fractions")[static_cast<std::size_t>(k)].get<double>();
    s.dim_d = j.at("dims")[0].get<std::int64_t>();
    s.dim_h = j.at("dims")[1].get<std::int64_t>();
    s.dim_w = j.at("dims")[2].get<std::int64_t>();
    s.blur_passes = j.at("blur_passes").get<int>();
    s.mesh_subdivisions = j.at("mesh_subdivisions").get<int>();
    return s;
}

}  // namespace

Dataset build_dataset(const DatasetSpec& spec, const std::string& out_dir) {
    require(spec.n >= 1, "build_dataset: need at least one sample");
    const double fsum = spec.fractions[0] + spec.fractions[1] + spec.fractions[2];
    require(std::abs(fsum - 1.0) < 1e-9, "build_dataset: split fractions must sum to 1");
    for (double f : spec.fractions) require(f >= 0.0, "build_dataset: negative split fraction");

    const int n_train = static_cast<int>(std::lround(spec.fractions[0] * spec.n));
    const int n_val = static_cast<int>(std::lround(spec.fractions[1] * spec.n));
    require(n_train >= 1 && n_train + n_val <= spec.n,
            "build_dataset: split fractions leave no training samples");

    std::filesystem::create_directories(out_dir);
    Rng seeder = named_rng(spec.seed, "dataset-seeds");

    nlohmann::ordered_json entries = nlohmann::ordered_json::array();
    Dataset ds;
    ds.spec = spec;
    for (int i = 0; i < spec.n; ++i) {
        const std::uint64_t sample_seed = seeder.next_u64();
        char idbuf[16];
        std::snprintf(idbuf, sizeof idbuf, "s%03d", i);
        const std::string id = idbuf;
        const std::string split = i < n_train ? "train" : (i < n_train + n_val ? "val" : "test");

        RadialShape shape = make_shape(sample_seed, spec.bumpiness, spec.mode_count);
        TriMesh mesh = shape_mesh(shape, spec.mesh_subdivisions);
        VoxelizeResult vox = voxelize(shape, spec.dim_d, spec.dim_h, spec.dim_w,
                                      spec.blur_passes);

        const std::string vol_rel = id + "_volume";
        const std::string lbl_rel = id + "_labels";
        const std::string mesh_rel = id + "_mesh.obj";
        save_volume(vox.volume, out_dir + "/" + vol_rel);
        save_volume(vox.labels, out_dir + "/" + lbl_rel);
        save_obj(mesh, out_dir + "/" + mesh_rel);

        entries.push_back({{"id", id},
                           {"split", split},
                           {"seed", sample_seed},
                           {"volume", vol_rel},
                           {"labels", lbl_rel},
                           {"mesh", mesh_rel}});
        DatasetEntry e;
        e.id = id;
        e.split = split;
        e.seed = sample_seed;
        e.volume = out_dir + "/" + vol_rel;
        e.labels = out_dir + "/" + lbl_rel;
        e.mesh = out_dir + "/" + mesh_rel;
        ds.entries.push_back(std::move(e));
    }

    nlohmann::ordered_json manifest;
    manifest["version"] = "DSET-1";
    manifest["spec"] = spec_json(spec);
    manifest["entries"] = std::move(entries);
    ds.manifest_hash = hash_hex(fnv1a(manifest.dump()));
    manifest["manifest_hash"] = ds.manifest_hash;

    const std::string mpath = out_dir + "/manifest.json";
    std::ofstream out(mpath);
    require(out.good(), "build_dataset: cannot open " + mpath);
    out << manifest.dump(2) << '\n';
    require(out.good(), "build_dataset: write failed for " + mpath);
    return ds;
}

Dataset load_dataset(const std::string& manifest_path) {
    std::ifstream in(manifest_path);
    require(in.good(), "load_dataset: cannot open " + manifest_path);
    nlohmann::ordered_json manifest;
    try {
        manifest = nlohmann::ordered_json::parse(in);
    } catch (const std::exception& e) {
        throw std::runtime_error("load_dataset: bad JSON in " + manifest_path + ": " + e.what());
    }
    require(manifest.value("version", "") == std::string("DSET-1"),
            "load_dataset: " + manifest_path + " is not a DSET-1 manifest");

    const std::string stored_hash = manifest.at("manifest_hash").get<std::string>();
    nlohmann::ordered_json unhashed = manifest;
    unhashed.erase("manifest_hash");
    require(hash_hex(fnv1a(unhashed.dump())) == stored_hash,
            "load_dataset: manifest hash mismatch in " + manifest_path +
                " (file edited or truncated)");

    const std::string dir = std::filesystem::path(manifest_path).parent_path().string();
    const std::string prefix = dir.empty() ? std::string() : dir + "/";
    Dataset ds;
    ds.spec = spec_from(manifest.at("spec"));
    ds.manifest_hash = stored_hash;
    for (const auto& j : manifest.at("entries")) {
        DatasetEntry e;
        e.id = j.at("id").get<std::string>();
        e.split = j.at("split").get<std::string>();
        e.seed = j.at("seed").get<std::uint64_t>();
        e.volume = prefix + j.at("volume").get<std::string>();
        e.labels = prefix + j.at("labels").get<std::string>();
        e.mesh = prefix + j.at("mesh").get<std::string>();
        ds.entries.push_back(std::move(e));
    }
    return ds;
}

}  // namespace voxmesh
