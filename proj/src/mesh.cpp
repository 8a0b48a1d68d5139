#include "voxmesh/mesh.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "voxmesh/tensor.hpp"  // require()

namespace voxmesh {

void validate_mesh(const TriMesh& mesh) {
    const int v = mesh.vcount();
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        const Face& tri = mesh.faces[f];
        for (int k = 0; k < 3; ++k)
            require(tri[k] >= 0 && tri[k] < v, "mesh: face " + std::to_string(f) + " index " +
                                                   std::to_string(tri[k]) + " out of range [0," +
                                                   std::to_string(v) + ")");
        require(tri[0] != tri[1] && tri[1] != tri[2] && tri[0] != tri[2],
                "mesh: face " + std::to_string(f) + " repeats a vertex");
    }
}

std::vector<std::array<int, 2>> edge_list(const TriMesh& mesh) {
    std::vector<std::array<int, 2>> edges;
    edges.reserve(mesh.faces.size() * 3);
    for (const Face& f : mesh.faces)
        for (int k = 0; k < 3; ++k) {
            const int a = f[k], b = f[(k + 1) % 3];
            edges.push_back({std::min(a, b), std::max(a, b)});
        }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    return edges;
}

std::vector<std::vector<int>> vertex_neighbors(const TriMesh& mesh) {
    std::vector<std::vector<int>> nbr(mesh.vertices.size());
    for (const auto& e : edge_list(mesh)) {
        nbr[static_cast<std::size_t>(e[0])].push_back(e[1]);
        nbr[static_cast<std::size_t>(e[1])].push_back(e[0]);
    }
    for (auto& n : nbr) std::sort(n.begin(), n.end());
    return nbr;
}

std::int64_t euler_characteristic(const TriMesh& mesh) {
    return static_cast<std::int64_t>(mesh.vertices.size()) -
           static_cast<std::int64_t>(edge_list(mesh).size()) +
           static_cast<std::int64_t>(mesh.faces.size());
}

bool is_closed_manifold(const TriMesh& mesh, std::string* why) {
    auto fail = [&](const std::string& msg) {
        if (why) *why = msg;
        return false;
    };
    if (mesh.faces.empty()) return fail("no faces");

    // directed edge -> face id; each must be unique for consistent winding
    std::map<std::pair<int, int>, int> he;
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        const Face& tri = mesh.faces[f];
        for (int k = 0; k < 3; ++k) {
            const auto key = std::make_pair(tri[k], tri[(k + 1) % 3]);
            if (!he.emplace(key, static_cast<int>(f)).second)
                return fail("directed edge " + std::to_string(key.first) + "->" +
                            std::to_string(key.second) + " repeated (non-manifold or bad winding)");
        }
    }
    for (const auto& [key, f] : he) {
        (void)f;
        if (he.find(std::make_pair(key.second, key.first)) == he.end())
            return fail("edge " + std::to_string(key.first) + "-" + std::to_string(key.second) +
                        " has no opposite face (boundary)");
    }

    // vertex fans: walking faces around each vertex must visit all of them
    std::vector<int> incident(mesh.vertices.size(), 0);
    std::vector<int> start_face(mesh.vertices.size(), -1);
    for (std::size_t f = 0; f < mesh.faces.size(); ++f)
        for (int k = 0; k < 3; ++k) {
            const int v = mesh.faces[f][k];
            ++incident[static_cast<std::size_t>(v)];
            start_face[static_cast<std::size_t>(v)] = static_cast<int>(f);
        }
    for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
        if (incident[v] == 0) return fail("vertex " + std::to_string(v) + " is isolated");
        int f = start_face[v];
        int steps = 0;
        const int vi = static_cast<int>(v);
        do {
            const Face& tri = mesh.faces[static_cast<std::size_t>(f)];
            int k = 0;
            while (tri[k] != vi) ++k;
            // rotate CCW: neighbor across the (v, previous-vertex) edge
            const int prev = tri[(k + 2) % 3];
            const auto it = he.find(std::make_pair(vi, prev));
            f = it->second;
            if (++steps > incident[v]) break;
        } while (f != start_face[v]);
        if (steps != incident[v])
            return fail("vertex " + std::to_string(v) + " fan splits (" + std::to_string(steps) +
                        " of " + std::to_string(incident[v]) + " faces reachable)");
    }
    return true;
}

SparseMatrix build_adjacency(const TriMesh& mesh) {
    validate_mesh(mesh);
    const auto nbr = vertex_neighbors(mesh);
    const std::int64_t v = static_cast<std::int64_t>(mesh.vertices.size());
    std::vector<double> deg(static_cast<std::size_t>(v));
    for (std::int64_t i = 0; i < v; ++i)
        deg[static_cast<std::size_t>(i)] = static_cast<double>(nbr[static_cast<std::size_t>(i)].size()) + 1.0;
    std::vector<SparseEntry> entries;
    entries.reserve(static_cast<std::size_t>(v) * 7);
    for (std::int64_t i = 0; i < v; ++i) {
        const double di = deg[static_cast<std::size_t>(i)];
        entries.push_back({i, i, 1.0 / di});
        for (int j : nbr[static_cast<std::size_t>(i)])
            entries.push_back({i, j, 1.0 / std::sqrt(di * deg[static_cast<std::size_t>(j)])});
    }
    return SparseMatrix(v, v, std::move(entries));
}

std::vector<Vec3> uniform_laplacian_residual(const TriMesh& mesh) {
    const auto nbr = vertex_neighbors(mesh);
    std::vector<Vec3> res(mesh.vertices.size());
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
        require(!nbr[i].empty(), "laplacian: vertex " + std::to_string(i) + " has no neighbors");
        Vec3 m{0, 0, 0};
        for (int j : nbr[i]) m += mesh.vertices[static_cast<std::size_t>(j)];
        m = m * (1.0 / static_cast<double>(nbr[i].size()));
        res[i] = mesh.vertices[i] - m;
    }
    return res;
}

std::vector<Vec3> face_normals(const TriMesh& mesh, int* skipped) {
    std::vector<Vec3> fn(mesh.faces.size());
    int skip = 0;
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        const Face& t = mesh.faces[f];
        const Vec3& a = mesh.vertices[static_cast<std::size_t>(t[0])];
        const Vec3 c = (mesh.vertices[static_cast<std::size_t>(t[1])] - a)
                           .cross(mesh.vertices[static_cast<std::size_t>(t[2])] - a);
        const double n = c.norm();
        if (n > 0)
            fn[f] = c * (1.0 / n);
        else
            ++skip;
    }
    if (skipped) *skipped = skip;
    return fn;
}

std::vector<Vec3> vertex_normals(const TriMesh& mesh, int* skipped) {
    std::vector<Vec3> vn(mesh.vertices.size());
    int skip = 0;
    for (const Face& t : mesh.faces) {
        const Vec3& a = mesh.vertices[static_cast<std::size_t>(t[0])];
        const Vec3 c = (mesh.vertices[static_cast<std::size_t>(t[1])] - a)
                           .cross(mesh.vertices[static_cast<std::size_t>(t[2])] - a);
        if (c.norm2() == 0.0) {
            ++skip;
            continue;
        }
        for (int k = 0; k < 3; ++k) vn[static_cast<std::size_t>(t[k])] += c;  // |c| = 2*area
    }
    for (auto& n : vn) n = n.normalized();
    if (skipped) *skipped = skip;
    return vn;
}

double surface_area(const TriMesh& mesh) {
    double area = 0.0;
    for (const Face& t : mesh.faces) {
        const Vec3& a = mesh.vertices[static_cast<std::size_t>(t[0])];
        area += 0.5 * (mesh.vertices[static_cast<std::size_t>(t[1])] - a)
                          .cross(mesh.vertices[static_cast<std::size_t>(t[2])] - a)
                          .norm();
    }
    return area;
}

double signed_volume(const TriMesh& mesh) {
    double vol = 0.0;
    for (const Face& t : mesh.faces) {
        const Vec3& a = mesh.vertices[static_cast<std::size_t>(t[0])];
        const Vec3& b = mesh.vertices[static_cast<std::size_t>(t[1])];
        const Vec3& c = mesh.vertices[static_cast<std::size_t>(t[2])];
        vol += a.dot(b.cross(c)) / 6.0;
    }
    return vol;
}

TriMesh mean_template(const std::vector<TriMesh>& meshes) {
    require(!meshes.empty(), "mean_template: empty input");
    const TriMesh& first = meshes.front();
    for (std::size_t m = 1; m < meshes.size(); ++m) {
        require(meshes[m].vertices.size() == first.vertices.size() &&
                    meshes[m].faces == first.faces,
                "mean_template: mesh " + std::to_string(m) + " topology differs");
    }
    TriMesh out;
    out.faces = first.faces;
    out.vertices.assign(first.vertices.size(), Vec3{});
    const double inv = 1.0 / static_cast<double>(meshes.size());
    for (const TriMesh& m : meshes)
        for (std::size_t i = 0; i < m.vertices.size(); ++i) out.vertices[i] += m.vertices[i];
    for (auto& v : out.vertices) v = v * inv;
    return out;
}

TriMesh taubin_smooth(const TriMesh& mesh, int iterations, double lambda, double mu) {
    TriMesh out = mesh;
    if (iterations <= 0) return out;
    const auto nbr = vertex_neighbors(mesh);
    std::vector<Vec3> next(out.vertices.size());
    auto pass = [&](double w) {
        for (std::size_t i = 0; i < out.vertices.size(); ++i) {
            if (nbr[i].empty()) {
                next[i] = out.vertices[i];
                continue;
            }
            Vec3 m{0, 0, 0};
            for (int j : nbr[i]) m += out.vertices[static_cast<std::size_t>(j)];
            m = m * (1.0 / static_cast<double>(nbr[i].size()));
            next[i] = out.vertices[i] + (m - out.vertices[i]) * w;
        }
        out.vertices.swap(next);
    };
    for (int it = 0; it < iterations; ++it) {
        pass(lambda);
        pass(mu);
    }
    return out;
}

TriMesh icosphere(int subdivisions, double radius) {
    require(subdivisions >= 0 && subdivisions <= 8, "icosphere: subdivisions out of range");
    const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
    TriMesh m;
    m.vertices = {{-1, phi, 0}, {1, phi, 0},  {-1, -phi, 0}, {1, -phi, 0},
                  {0, -1, phi}, {0, 1, phi},  {0, -1, -phi}, {0, 1, -phi},
                  {phi, 0, -1}, {phi, 0, 1},  {-phi, 0, -1}, {-phi, 0, 1}};
    m.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
               {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
               {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
               {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
    for (int s = 0; s < subdivisions; ++s) {
        std::map<std::pair<int, int>, int> midpoint;
        auto mid = [&](int a, int b) {
            const auto key = std::make_pair(std::min(a, b), std::max(a, b));
            auto it = midpoint.find(key);
            if (it != midpoint.end()) return it->second;
            const int idx = static_cast<int>(m.vertices.size());
            m.vertices.push_back((m.vertices[static_cast<std::size_t>(a)] +
                                  m.vertices[static_cast<std::size_t>(b)]) *
                                 0.5);
            midpoint.emplace(key, idx);
            return idx;
        };
        std::vector<Face> faces;
        faces.reserve(m.faces.size() * 4);
        for (const Face& f : m.faces) {
            const int ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
            faces.push_back({f[0], ab, ca});
            faces.push_back({f[1], bc, ab});
            faces.push_back({f[2], ca, bc});
            faces.push_back({ab, bc, ca});
        }
        m.faces.swap(faces);
    }
    for (auto& v : m.vertices) v = v.normalized() * radius;
    return m;
}

std::vector<int> connected_components(const TriMesh& mesh, int* count) {
    const auto nbr = vertex_neighbors(mesh);
    std::vector<int> comp(mesh.vertices.size(), -1);
    int next = 0;
    std::vector<int> stack;
    for (std::size_t seed = 0; seed < comp.size(); ++seed) {
        if (comp[seed] >= 0) continue;
        comp[seed] = next;
        stack.push_back(static_cast<int>(seed));
        while (!stack.empty()) {
            const int v = stack.back();
            stack.pop_back();
            for (int j : nbr[static_cast<std::size_t>(v)])
                if (comp[static_cast<std::size_t>(j)] < 0) {
                    comp[static_cast<std::size_t>(j)] = next;
                    stack.push_back(j);
                }
        }
        ++next;
    }
    if (count) *count = next;
    return comp;
}

TriMesh largest_component(const TriMesh& mesh) {
    int n = 0;
    const auto comp = connected_components(mesh, &n);
    if (n <= 1) return mesh;
    std::vector<std::int64_t> face_count(static_cast<std::size_t>(n), 0);
    for (const Face& f : mesh.faces) ++face_count[static_cast<std::size_t>(comp[static_cast<std::size_t>(f[0])])];
    const int best = static_cast<int>(std::max_element(face_count.begin(), face_count.end()) -
                                      face_count.begin());
    std::vector<int> remap(mesh.vertices.size(), -1);
    TriMesh out;
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i)
        if (comp[i] == best) {
            remap[i] = static_cast<int>(out.vertices.size());
            out.vertices.push_back(mesh.vertices[i]);
        }
    for (const Face& f : mesh.faces)
        if (comp[static_cast<std::size_t>(f[0])] == best)
            out.faces.push_back({remap[static_cast<std::size_t>(f[0])],
                                 remap[static_cast<std::size_t>(f[1])],
                                 remap[static_cast<std::size_t>(f[2])]});
    return out;
}

std::vector<Vec3> sample_surface(const TriMesh& mesh, std::int64_t count, Rng& rng,
                                 std::vector<int>* face_ids) {
    require(!mesh.faces.empty(), "sample_surface: mesh has no faces");
    if (face_ids) {
        face_ids->clear();
        face_ids->reserve(static_cast<std::size_t>(count));
    }
    std::vector<double> cum(mesh.faces.size());
    double total = 0.0;
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        const Face& t = mesh.faces[f];
        const Vec3& a = mesh.vertices[static_cast<std::size_t>(t[0])];
        total += 0.5 * (mesh.vertices[static_cast<std::size_t>(t[1])] - a)
                           .cross(mesh.vertices[static_cast<std::size_t>(t[2])] - a)
                           .norm();
        cum[f] = total;
    }
    require(total > 0.0, "sample_surface: zero total area");
    std::vector<Vec3> pts;
    pts.reserve(static_cast<std::size_t>(count));
    for (std::int64_t i = 0; i < count; ++i) {
        const double r = rng.uniform() * total;
        const std::size_t f = static_cast<std::size_t>(
            std::lower_bound(cum.begin(), cum.end(), r) - cum.begin());
        const std::size_t fi = std::min(f, mesh.faces.size() - 1);
        const Face& t = mesh.faces[fi];
        if (face_ids) face_ids->push_back(static_cast<int>(fi));
        const double su = std::sqrt(rng.uniform());
        const double v = rng.uniform();
        const Vec3& a = mesh.vertices[static_cast<std::size_t>(t[0])];
        const Vec3& b = mesh.vertices[static_cast<std::size_t>(t[1])];
        const Vec3& c = mesh.vertices[static_cast<std::size_t>(t[2])];
        pts.push_back(a * (1.0 - su) + b * (su * (1.0 - v)) + c * (su * v));
    }
    return pts;
}

void save_obj(const TriMesh& mesh, const std::string& path) {
    std::ofstream out(path);
    require(out.good(), "save_obj: cannot open " + path);
    char buf[128];
    for (const Vec3& v : mesh.vertices) {
        std::snprintf(buf, sizeof buf, "v %.17g %.17g %.17g\n", v.x, v.y, v.z);
        out << buf;
    }
    for (const Face& f : mesh.faces) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
    require(out.good(), "save_obj: write failed for " + path);
}

TriMesh load_obj(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "load_obj: cannot open " + path);
    TriMesh m;
    std::string line;
    while (std::getline(in, line)) {
        if (line.size() < 2) continue;
        std::istringstream ss(line);
        std::string tag;
        ss >> tag;
        if (tag == "v") {
            Vec3 v;
            ss >> v.x >> v.y >> v.z;
            require(!ss.fail(), "load_obj: bad vertex line: " + line);
            m.vertices.push_back(v);
        } else if (tag == "f") {
            Face f;
            for (int k = 0; k < 3; ++k) {
                std::string tok;
                ss >> tok;
                require(!tok.empty(), "load_obj: bad face line: " + line);
                f[k] = std::stoi(tok) - 1;  // ignore /vt/vn suffixes
            }
            m.faces.push_back(f);
        }
    }
    validate_mesh(m);
    return m;
}

}  // namespace voxmesh
