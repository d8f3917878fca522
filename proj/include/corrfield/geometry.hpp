#pragma once

#include <Eigen/Core>
#include <array>
#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace corrfield::geom {

using Vec3 = Eigen::Vector3d;

struct Mesh {
  std::string model_id;
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;  // triangles, 0-based
};

// A point known to lie on a mesh surface; face < 0 means "not tied to a face".
struct SurfacePoint {
  Vec3 position = Vec3::Zero();
  int face = -1;
};

struct PointCloud {
  std::string model_id;
  std::vector<Vec3> points;
  std::vector<int> source_face;  // per point; -1 when unknown
  std::vector<int> pinned;       // cloud indices of points pinned at exact locations
};

struct GraphEdge {
  int a = 0;
  int b = 0;
  double weight = 0.0;
};

// Undirected weighted proximity graph over cloud points or mesh vertices.
// `component_bridges` are the extra edges inserted to connect disjoint
// components; they participate in shortest paths like regular edges.
struct SurfaceGraph {
  int node_count = 0;
  std::vector<GraphEdge> edges;
  std::vector<GraphEdge> component_bridges;
};

// Shortest-path distances from a set of source nodes to every node.
struct DistanceMatrix {
  std::vector<int> sources;     // node ids, one per row
  Eigen::MatrixXd distances;    // sources.size() x node_count

  int row_of(int source_node) const;  // -1 if not a source
  // Distance from a source node to any node; throws if source_node is not a row.
  double from(int source_node, int node) const;
};

// Centering + scaling that maps a mesh into the unit ball (centroid at the
// origin, max vertex norm 1).
struct UnitSphereFrame {
  Vec3 centroid = Vec3::Zero();
  double scale = 1.0;
  Vec3 apply(const Vec3& p) const { return (p - centroid) * scale; }
};

// --- mesh I/O ---------------------------------------------------------------

// Load a triangle mesh from a minimal OBJ ("v x y z" and "f i j k ..."):
// 1-based indices, "i/t/n" tokens accepted (index before the first slash),
// polygons fan-triangulated from the first vertex. Throws on I/O failure,
// malformed lines, out-of-range or repeated face indices, or an empty mesh.
Mesh load_mesh(const std::filesystem::path& path);

// Write a mesh with full double round-trip precision.
void write_obj(const std::filesystem::path& path, const Mesh& mesh);

// --- normalization ----------------------------------------------------------

UnitSphereFrame unit_sphere_frame(const Mesh& mesh);
Mesh normalize_unit_sphere(const Mesh& mesh);

// --- sampling ---------------------------------------------------------------

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c);
double surface_area(const Mesh& mesh);

// Area-weighted uniform sampling of n points. `pinned` points are placed
// first, at their exact positions, and their cloud indices are recorded in
// PointCloud::pinned. Throws if n < pinned.size() or the mesh has zero area.
PointCloud sample_cloud(const Mesh& mesh, int n,
                        const std::vector<SurfacePoint>& pinned,
                        std::uint64_t seed);

// --- graphs and geodesics ---------------------------------------------------

// Edge weights are Euclidean lengths snapped *upward* to a 2^-24 grid. The
// snap makes every shortest-path sum exactly representable, so different
// traversal orders (Dijkstra vs Floyd-Warshall, any thread partition) agree
// bit-for-bit; the bias is < 6e-8 per edge, far below all stated tolerances,
// and never drops a weight below the straight-line distance.
double quantized_edge_weight(double w);

// Symmetrized k-nearest-neighbor graph over cloud points. Disconnected
// components are bridged by the globally shortest inter-component link,
// repeated until one component remains (component_count - 1 bridges).
SurfaceGraph build_graph(const PointCloud& cloud, int k);

// Mesh-edge graph over mesh vertices (same weight treatment and bridging).
SurfaceGraph build_graph(const Mesh& mesh);

// Multi-source Dijkstra. Every source id must be a valid node.
DistanceMatrix geodesics_from(const SurfaceGraph& graph,
                              const std::vector<int>& sources,
                              int threads = 1);

// Floyd-Warshall all-pairs reference; refuses graphs with > 2000 nodes.
Eigen::MatrixXd all_pairs_oracle(const SurfaceGraph& graph);

// CSV export: header "source,node,distance", one row per (source, node),
// distances with full round-trip precision.
void write_distance_csv(std::ostream& os, const DistanceMatrix& dm);

// --- reference shapes (used by tests and the synthetic families) ------------

Mesh make_icosahedron();
// Icosahedron subdivided `level` times with vertices projected to the unit
// sphere. level 0 is the icosahedron itself.
Mesh make_icosphere(int level);

}  // namespace corrfield::geom
