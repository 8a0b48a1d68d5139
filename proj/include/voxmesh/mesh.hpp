#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "voxmesh/rng.hpp"
#include "voxmesh/sparse.hpp"

namespace voxmesh {

struct Vec3 {
    double x = 0, y = 0, z = 0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm2() const { return dot(*this); }
    double norm() const { return std::sqrt(norm2()); }
    Vec3 normalized() const {
        const double n = norm();
        return n > 0 ? Vec3{x / n, y / n, z / n} : Vec3{0, 0, 0};
    }
    double operator[](int i) const { return i == 0 ? x : i == 1 ? y : z; }
};

using Face = std::array<int, 3>;

// Triangle mesh with CCW winding; coordinates live in [-1,1]^3 by convention.
struct TriMesh {
    std::vector<Vec3> vertices;
    std::vector<Face> faces;

    int vcount() const { return static_cast<int>(vertices.size()); }
    int fcount() const { return static_cast<int>(faces.size()); }
};

// Throws when a face index is out of range or a face repeats a vertex.
void validate_mesh(const TriMesh& mesh);

// Unique undirected edges, each {lo, hi}, sorted lexicographically.
std::vector<std::array<int, 2>> edge_list(const TriMesh& mesh);

// Sorted unique neighbor lists per vertex.
std::vector<std::vector<int>> vertex_neighbors(const TriMesh& mesh);

std::int64_t euler_characteristic(const TriMesh& mesh);  // V - E + F

// Closed + oriented + vertex-manifold: every directed edge appears exactly
// once, every undirected edge borders two faces, and each vertex fan is a
// single cycle. `why`, when given, receives the first violated condition.
bool is_closed_manifold(const TriMesh& mesh, std::string* why = nullptr);

// Symmetric-normalized adjacency with self-loops, D^{-1/2} (A + I) D^{-1/2}.
SparseMatrix build_adjacency(const TriMesh& mesh);

// delta_i = v_i - mean(neighbors of v_i); throws on isolated vertices.
std::vector<Vec3> uniform_laplacian_residual(const TriMesh& mesh);

// Unit face normals from CCW winding; zero-area faces get a zero normal and
// bump *skipped when provided.
std::vector<Vec3> face_normals(const TriMesh& mesh, int* skipped = nullptr);

// Area-weighted (cross-product magnitude) vertex normals, normalized.
std::vector<Vec3> vertex_normals(const TriMesh& mesh, int* skipped = nullptr);

double surface_area(const TriMesh& mesh);
double signed_volume(const TriMesh& mesh);  // positive for outward CCW normals

// Vertex-wise mean over meshes with bit-identical face arrays.
TriMesh mean_template(const std::vector<TriMesh>& meshes);

// Shrink-resistant two-phase smoothing; faces untouched.
TriMesh taubin_smooth(const TriMesh& mesh, int iterations, double lambda = 0.5,
                      double mu = -0.53);

// Subdivided icosahedron projected to the given radius.
// vertices = 10 * 4^subdivisions + 2.
TriMesh icosphere(int subdivisions, double radius = 1.0);

// Component id per vertex (0-based, ordered by first appearance) via edges.
std::vector<int> connected_components(const TriMesh& mesh, int* count = nullptr);
TriMesh largest_component(const TriMesh& mesh);  // by face count

// Area-uniform surface samples; deterministic for a given generator state.
std::vector<Vec3> sample_surface(const TriMesh& mesh, std::int64_t count, Rng& rng,
                                 std::vector<int>* face_ids = nullptr);

// ASCII OBJ with v/f records only (1-based indices), text round-trip exact.
void save_obj(const TriMesh& mesh, const std::string& path);
TriMesh load_obj(const std::string& path);

}  // namespace voxmesh
