#include "voxmesh/templates.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "json.hpp"

namespace voxmesh {

namespace {

void write_matrix(std::ofstream& out, const SparseMatrix& m) {
    const std::int64_t header[3] = {m.rows(), m.cols(), m.nnz()};
    out.write(reinterpret_cast<const char*>(header), sizeof(header));
    for (const auto& e : m.entries()) {
        out.write(reinterpret_cast<const char*>(&e.row), sizeof(e.row));
        out.write(reinterpret_cast<const char*>(&e.col), sizeof(e.col));
        out.write(reinterpret_cast<const char*>(&e.value), sizeof(e.value));
    }
}

SparseMatrix read_matrix(std::ifstream& in, const std::string& what) {
    std::int64_t header[3] = {0, 0, 0};
    in.read(reinterpret_cast<char*>(header), sizeof(header));
    require(in.good(), "load_template_bundle: truncated blob reading " + what);
    std::vector<SparseEntry> entries(static_cast<size_t>(header[2]));
    for (auto& e : entries) {
        in.read(reinterpret_cast<char*>(&e.row), sizeof(e.row));
        in.read(reinterpret_cast<char*>(&e.col), sizeof(e.col));
        in.read(reinterpret_cast<char*>(&e.value), sizeof(e.value));
    }
    require(in.good(), "load_template_bundle: truncated blob reading " + what);
    return SparseMatrix(header[0], header[1], std::move(entries));
}

std::string level_path(const std::string& prefix, int level) {
    return prefix + "_level" + std::to_string(level) + ".obj";
}

}  // namespace

TemplateBundle build_template_bundle(const TriMesh& baseline,
                                     const std::array<double, 4>& factors) {
    for (double f : factors)
        require(f > 1.0, "build_template_bundle: factors must each be > 1");
    std::string why;
    require(is_closed_manifold(baseline, &why),
            "build_template_bundle: baseline is not a closed manifold (" + why + ")");

    TemplateBundle bundle;
    bundle.baseline = baseline;
    bundle.levels.push_back(baseline);
    bundle.level_sizes.push_back(baseline.vcount());

    for (int k = 0; k < 4; ++k) {
        const int prev = bundle.level_sizes.back();
        const int target = static_cast<int>(std::ceil(prev / factors[k]));
        require(target >= 12, "build_template_bundle: level " + std::to_string(k + 1) +
                                  " would have " + std::to_string(target) +
                                  " vertices (minimum 12)");
        DecimateResult dec = decimate(bundle.levels.back(), target);
        bundle.levels.push_back(std::move(dec.mesh));
        bundle.level_sizes.push_back(bundle.levels.back().vcount());
        bundle.up_mats.push_back(std::move(dec.up));
        bundle.down_mats.push_back(std::move(dec.down));
    }
    return bundle;
}

void save_template_bundle(const TemplateBundle& bundle, const std::string& prefix) {
    require(bundle.levels.size() == 5 && bundle.up_mats.size() == 4 &&
                bundle.down_mats.size() == 4 && bundle.level_sizes.size() == 5,
            "save_template_bundle: malformed bundle");

    for (int k = 0; k < 5; ++k) save_obj(bundle.levels[k], level_path(prefix, k));

    std::ofstream blob(prefix + ".bin", std::ios::binary);
    require(blob.good(), "save_template_bundle: cannot open " + prefix + ".bin");
    for (const auto& m : bundle.up_mats) write_matrix(blob, m);
    for (const auto& m : bundle.down_mats) write_matrix(blob, m);
    require(blob.good(), "save_template_bundle: write failed for " + prefix + ".bin");
    blob.close();

    // Manifest references the sibling files by basename.
    auto base = [](const std::string& p) {
        const auto slash = p.find_last_of('/');
        return slash == std::string::npos ? p : p.substr(slash + 1);
    };
    nlohmann::ordered_json j;
    j["version"] = "TPLB-1";
    j["level_sizes"] = bundle.level_sizes;
    nlohmann::ordered_json levels = nlohmann::ordered_json::array();
    for (int k = 0; k < 5; ++k) levels.push_back(base(level_path(prefix, k)));
    j["levels"] = levels;
    j["baseline"] = base(level_path(prefix, 0));
    j["matrix_blob"] = base(prefix + ".bin");
    j["matrix_order"] = {"up0", "up1", "up2", "up3", "down0", "down1", "down2", "down3"};

    std::ofstream hdr(prefix + ".json");
    require(hdr.good(), "save_template_bundle: cannot open " + prefix + ".json");
    hdr << j.dump(2) << "\n";
}

TemplateBundle load_template_bundle(const std::string& prefix) {
    std::ifstream hdr(prefix + ".json");
    require(hdr.good(), "load_template_bundle: cannot open " + prefix + ".json");
    nlohmann::json j;
    hdr >> j;
    require(j.value("version", "") == std::string("TPLB-1"),
            "load_template_bundle: unsupported version in " + prefix + ".json");

    TemplateBundle bundle;
    bundle.level_sizes = j.at("level_sizes").get<std::vector<int>>();
    require(bundle.level_sizes.size() == 5, "load_template_bundle: expected 5 levels");

    for (int k = 0; k < 5; ++k) {
        bundle.levels.push_back(load_obj(level_path(prefix, k)));
        require(bundle.levels.back().vcount() == bundle.level_sizes[k],
                "load_template_bundle: level " + std::to_string(k) +
                    " vertex count does not match the manifest");
    }
    bundle.baseline = bundle.levels[0];

    std::ifstream blob(prefix + ".bin", std::ios::binary);
    require(blob.good(), "load_template_bundle: cannot open " + prefix + ".bin");
    for (int k = 0; k < 4; ++k) bundle.up_mats.push_back(read_matrix(blob, "up" + std::to_string(k)));
    for (int k = 0; k < 4; ++k)
        bundle.down_mats.push_back(read_matrix(blob, "down" + std::to_string(k)));

    for (int k = 0; k < 4; ++k) {
        require(bundle.up_mats[k].rows() == bundle.level_sizes[k] &&
                    bundle.up_mats[k].cols() == bundle.level_sizes[k + 1],
                "load_template_bundle: up matrix " + std::to_string(k) + " shape mismatch");
        require(bundle.down_mats[k].rows() == bundle.level_sizes[k + 1] &&
                    bundle.down_mats[k].cols() == bundle.level_sizes[k],
                "load_template_bundle: down matrix " + std::to_string(k) + " shape mismatch");
    }
    return bundle;
}

}  // namespace voxmesh
