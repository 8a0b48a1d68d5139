#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "voxmesh/mesh.hpp"

namespace voxmesh {

struct SurfaceDistance {
    double assd = 0.0;
    double hd = 0.0;    // true maximum over both directions
    double hd90 = 0.0;  // max of the two directional 90th percentiles
    std::int64_t samples = 0;
};

// Area-uniform samples on each mesh, exact point-to-triangle distance to the
// opposite surface. Each mesh is sampled with the same seed, so the result
// is symmetric in its arguments by construction.
SurfaceDistance surface_distance(const TriMesh& a, const TriMesh& b,
                                 std::int64_t samples_per_mesh, std::uint64_t seed = 9172);

double assd(const TriMesh& a, const TriMesh& b, std::int64_t samples_per_mesh);
double hausdorff(const TriMesh& a, const TriMesh& b, std::int64_t samples_per_mesh);

struct MetricsRow {
    std::string id;
    double assd = 0.0;
    double hd = 0.0;
    double hd90 = 0.0;
};

struct MetricsReport {
    std::vector<MetricsRow> rows;
    double mean_assd = 0.0;
    double mean_hd = 0.0;
    double mean_hd90 = 0.0;
    std::int64_t samples_per_mesh = 0;
    std::string template_mode;
    std::string config_hash;
    std::string manifest_hash;
};

// Fills the mean_* fields from the rows.
void finalize_report(MetricsReport& report);
// `config_json`, when given, must be a JSON object; it is stored under the
// report's "config" key so every emitted number carries its provenance.
void save_metrics_json(const MetricsReport& report, const std::string& path,
                       const std::string* config_json = nullptr);
void save_metrics_csv(const MetricsReport& report, const std::string& path);
MetricsReport load_metrics_json(const std::string& path);

}  // namespace voxmesh
