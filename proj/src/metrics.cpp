#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "voxmesh/metrics.hpp"
#include "voxmesh/nearest.hpp"

namespace voxmesh {

namespace {

// Distances from `samples` points on `src` to the surface of `dst`.
std::vector<double> directed_distances(const TriMesh& src, const TriBvh& dst,
                                       std::int64_t samples, std::uint64_t seed) {
    Rng rng(seed);
    const std::vector<Vec3> pts = sample_surface(src, samples, rng);
    std::vector<double> d(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) d[i] = dst.dist(pts[i]);
    return d;
}

double percentile90(std::vector<double> d) {
    std::sort(d.begin(), d.end());
    const std::size_t k = static_cast<std::size_t>(
        std::ceil(0.9 * static_cast<double>(d.size())));
    return d[std::max<std::size_t>(k, 1) - 1];
}

}  // namespace

SurfaceDistance surface_distance(const TriMesh& a, const TriMesh& b,
                                 std::int64_t samples_per_mesh, std::uint64_t seed) {
    require(!a.faces.empty() && !b.faces.empty(), "surface_distance: empty mesh");
    require(samples_per_mesh >= 1, "surface_distance: need at least one sample");

    TriBvh bvh_a(a), bvh_b(b);
    const std::vector<double> da = directed_distances(a, bvh_b, samples_per_mesh, seed);
    const std::vector<double> db = directed_distances(b, bvh_a, samples_per_mesh, seed);

    auto mean = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
    };
    SurfaceDistance out;
    out.assd = 0.5 * (mean(da) + mean(db));
    out.hd = std::max(*std::max_element(da.begin(), da.end()),
                      *std::max_element(db.begin(), db.end()));
    out.hd90 = std::max(percentile90(da), percentile90(db));
    out.samples = samples_per_mesh;
    return out;
}

double assd(const TriMesh& a, const TriMesh& b, std::int64_t samples_per_mesh) {
    return surface_distance(a, b, samples_per_mesh).assd;
}

double hausdorff(const TriMesh& a, const TriMesh& b, std::int64_t samples_per_mesh) {
    return surface_distance(a, b, samples_per_mesh).hd;
}

void finalize_report(MetricsReport& report) {
    require(!report.rows.empty(), "metrics report: no rows");
    double sa = 0.0, sh = 0.0, s9 = 0.0;
    for (const MetricsRow& r : report.rows) {
        sa += r.assd;
        sh += r.hd;
        s9 += r.hd90;
    }
    const double n = static_cast<double>(report.rows.size());
    report.mean_assd = sa / n;
    report.mean_hd = sh / n;
    report.mean_hd90 = s9 / n;
}

void save_metrics_json(const MetricsReport& report, const std::string& path,
                       const std::string* config_json) {
    nlohmann::ordered_json j;
    j["template_mode"] = report.template_mode;
    j["config_hash"] = report.config_hash;
    j["manifest_hash"] = report.manifest_hash;
    if (config_json) j["config"] = nlohmann::ordered_json::parse(*config_json);
    j["samples_per_mesh"] = report.samples_per_mesh;
    j["mean"] = {{"assd", report.mean_assd}, {"hd", report.mean_hd}, {"hd90", report.mean_hd90}};
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const MetricsRow& r : report.rows)
        rows.push_back({{"id", r.id}, {"assd", r.assd}, {"hd", r.hd}, {"hd90", r.hd90}});
    j["subjects"] = std::move(rows);
    std::ofstream out(path);
    require(out.good(), "metrics report: cannot open " + path);
    out << j.dump(2) << '\n';
    require(out.good(), "metrics report: write failed for " + path);
}

void save_metrics_csv(const MetricsReport& report, const std::string& path) {
    std::ofstream out(path);
    require(out.good(), "metrics report: cannot open " + path);
    out << "id,assd,hd,hd90\n";
    char buf[160];
    for (const MetricsRow& r : report.rows) {
        std::snprintf(buf, sizeof buf, "%s,%.9g,%.9g,%.9g\n", r.id.c_str(), r.assd, r.hd, r.hd90);
        out << buf;
    }
    std::snprintf(buf, sizeof buf, "mean,%.9g,%.9g,%.9g\n", report.mean_assd, report.mean_hd,
                  report.mean_hd90);
    out << buf;
    require(out.good(), "metrics report: write failed for " + path);
}

MetricsReport load_metrics_json(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "metrics report: cannot open " + path);
    nlohmann::json j = nlohmann::json::parse(in);
    MetricsReport r;
    r.template_mode = j.at("template_mode").get<std::string>();
    r.config_hash = j.at("config_hash").get<std::string>();
    r.manifest_hash = j.at("manifest_hash").get<std::string>();
    r.samples_per_mesh = j.at("samples_per_mesh").get<std::int64_t>();
    r.mean_assd = j.at("mean").at("assd").get<double>();
    r.mean_hd = j.at("mean").at("hd").get<double>();
    r.mean_hd90 = j.at("mean").at("hd90").get<double>();
    for (const auto& row : j.at("subjects")) {
        MetricsRow m;
        m.id = row.at("id").get<std::string>();
        m.assd = row.at("assd").get<double>();
        m.hd = row.at("hd").get<double>();
        m.hd90 = row.at("hd90").get<double>();
        r.rows.push_back(std::move(m));
    }
    return r;
}

}  // namespace voxmesh
