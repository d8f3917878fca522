#include "corrfield/geometry.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <queue>
#include <sstream>
#include <stdexcept>

#include "corrfield/parallel.hpp"
#include "corrfield/rng.hpp"

namespace corrfield::geom {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

int parse_face_index(const std::string& token, const std::filesystem::path& path,
                     int lineno) {
  // OBJ face tokens may be "i", "i/t", "i/t/n" or "i//n"; only the vertex
  // index before the first slash matters here.
  std::string head = token.substr(0, token.find('/'));
  std::size_t used = 0;
  int value = 0;
  try {
    value = std::stoi(head, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != head.size())
    fail("malformed face line at " + path.string() + ":" + std::to_string(lineno));
  if (value <= 0)
    fail("unsupported face index (must be positive, 1-based) at " + path.string() +
         ":" + std::to_string(lineno));
  return value - 1;
}

}  // namespace

// --- DistanceMatrix ----------------------------------------------------------

int DistanceMatrix::row_of(int source_node) const {
  for (std::size_t i = 0; i < sources.size(); ++i)
    if (sources[i] == source_node) return static_cast<int>(i);
  return -1;
}

double DistanceMatrix::from(int source_node, int node) const {
  int row = row_of(source_node);
  if (row < 0)
    fail("node " + std::to_string(source_node) +
         " is not a source of this distance matrix");
  if (node < 0 || node >= distances.cols())
    fail("node " + std::to_string(node) + " out of range");
  return distances(row, node);
}

// --- mesh I/O ----------------------------------------------------------------

Mesh load_mesh(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open OBJ file: " + path.string());
  Mesh mesh;
  mesh.model_id = path.stem().string();
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      double x, y, z;
      if (!(ls >> x >> y >> z))
        fail("malformed vertex line at " + path.string() + ":" + std::to_string(lineno));
      mesh.vertices.emplace_back(x, y, z);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string token;
      while (ls >> token) idx.push_back(parse_face_index(token, path, lineno));
      if (idx.size() < 3)
        fail("face with fewer than 3 vertices at " + path.string() + ":" +
             std::to_string(lineno));
      for (std::size_t i = 1; i + 1 < idx.size(); ++i)
        mesh.faces.push_back({idx[0], idx[static_cast<int>(i)], idx[i + 1]});
    }
    // All other tags (vn, vt, o, g, s, mtllib, usemtl, ...) are ignored.
  }
  if (mesh.vertices.empty()) fail("OBJ has no vertices: " + path.string());
  int n = static_cast<int>(mesh.vertices.size());
  for (const auto& f : mesh.faces) {
    for (int v : f)
      if (v < 0 || v >= n)
        fail("face index out of range in " + path.string());
    if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2])
      fail("degenerate face (repeated vertex) in " + path.string());
  }
  return mesh;
}

void write_obj(const std::filesystem::path& path, const Mesh& mesh) {
  std::ofstream out(path);
  if (!out) fail("cannot write OBJ file: " + path.string());
  char buf[128];
  for (const auto& v : mesh.vertices) {
    std::snprintf(buf, sizeof(buf), "v %.17g %.17g %.17g\n", v.x(), v.y(), v.z());
    out << buf;
  }
  for (const auto& f : mesh.faces)
    out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
  if (!out) fail("failed writing OBJ file: " + path.string());
}

// --- normalization -----------------------------------------------------------

UnitSphereFrame unit_sphere_frame(const Mesh& mesh) {
  if (mesh.vertices.empty()) fail("cannot normalize a mesh with no vertices");
  Vec3 centroid = Vec3::Zero();
  for (const auto& v : mesh.vertices) centroid += v;
  centroid /= static_cast<double>(mesh.vertices.size());
  double max_norm = 0.0;
  for (const auto& v : mesh.vertices) max_norm = std::max(max_norm, (v - centroid).norm());
  if (max_norm <= 0.0) fail("cannot normalize a mesh with zero extent");
  return {centroid, 1.0 / max_norm};
}

Mesh normalize_unit_sphere(const Mesh& mesh) {
  UnitSphereFrame frame = unit_sphere_frame(mesh);
  Mesh out = mesh;
  for (auto& v : out.vertices) v = frame.apply(v);
  return out;
}

// --- sampling ----------------------------------------------------------------

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
  return 0.5 * (b - a).cross(c - a).norm();
}

double surface_area(const Mesh& mesh) {
  double total = 0.0;
  for (const auto& f : mesh.faces)
    total += triangle_area(mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]]);
  return total;
}

PointCloud sample_cloud(const Mesh& mesh, int n,
                        const std::vector<SurfacePoint>& pinned,
                        std::uint64_t seed) {
  if (n < static_cast<int>(pinned.size()))
    fail("sample_cloud: n=" + std::to_string(n) + " is smaller than the " +
         std::to_string(pinned.size()) + " pinned points");
  PointCloud cloud;
  cloud.model_id = mesh.model_id;
  cloud.points.reserve(n);
  cloud.source_face.reserve(n);
  for (const auto& sp : pinned) {
    cloud.pinned.push_back(static_cast<int>(cloud.points.size()));
    cloud.points.push_back(sp.position);
    cloud.source_face.push_back(sp.face);
  }
  int remaining = n - static_cast<int>(pinned.size());
  if (remaining == 0) return cloud;

  if (mesh.faces.empty()) fail("sample_cloud: mesh has no faces");
  std::vector<double> cumulative(mesh.faces.size());
  double total = 0.0;
  for (std::size_t i = 0; i < mesh.faces.size(); ++i) {
    const auto& f = mesh.faces[i];
    total += triangle_area(mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]]);
    cumulative[i] = total;
  }
  if (total <= 0.0) fail("sample_cloud: mesh has zero surface area");

  Rng rng(seed);
  for (int i = 0; i < remaining; ++i) {
    double r = rng.uniform() * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), r);
    std::size_t face = std::min<std::size_t>(cumulative.size() - 1,
                                             static_cast<std::size_t>(it - cumulative.begin()));
    const auto& f = mesh.faces[face];
    double u = rng.uniform();
    double v = rng.uniform();
    if (u + v > 1.0) {  // reflect into the triangle
      u = 1.0 - u;
      v = 1.0 - v;
    }
    const Vec3& a = mesh.vertices[f[0]];
    const Vec3& b = mesh.vertices[f[1]];
    const Vec3& c = mesh.vertices[f[2]];
    cloud.points.push_back(a + u * (b - a) + v * (c - a));
    cloud.source_face.push_back(static_cast<int>(face));
  }
  return cloud;
}

// --- graphs ------------------------------------------------------------------

double quantized_edge_weight(double w) {
  constexpr double kGrid = 16777216.0;  // 2^24
  double q = std::ceil(w * kGrid) / kGrid;
  if (q <= 0.0) q = 1.0 / kGrid;
  return q;
}

namespace {

// Union-find over graph nodes.
struct DisjointSet {
  std::vector<int> parent;
  explicit DisjointSet(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  bool merge(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[b] = a;
    return true;
  }
};

// Connect all components with the globally shortest inter-component links.
void bridge_components(SurfaceGraph& graph, const std::vector<Vec3>& positions) {
  DisjointSet ds(graph.node_count);
  int components = graph.node_count;
  for (const auto& e : graph.edges)
    if (ds.merge(e.a, e.b)) --components;
  int n = static_cast<int>(positions.size());
  while (components > 1) {
    double best = kInf;
    int best_a = -1, best_b = -1;
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        if (ds.find(i) == ds.find(j)) continue;
        double d = (positions[i] - positions[j]).squaredNorm();
        if (d < best) {
          best = d;
          best_a = i;
          best_b = j;
        }
      }
    }
    if (best_a < 0) fail("bridge_components: could not connect graph");
    graph.component_bridges.push_back(
        {best_a, best_b, quantized_edge_weight(std::sqrt(best))});
    ds.merge(best_a, best_b);
    --components;
  }
}

struct Csr {
  std::vector<int> offsets;
  std::vector<int> targets;
  std::vector<double> weights;
};

Csr build_adjacency(const SurfaceGraph& graph) {
  std::vector<int> degree(graph.node_count, 0);
  auto count = [&](const GraphEdge& e) {
    ++degree[e.a];
    ++degree[e.b];
  };
  for (const auto& e : graph.edges) count(e);
  for (const auto& e : graph.component_bridges) count(e);
  Csr csr;
  csr.offsets.assign(graph.node_count + 1, 0);
  for (int i = 0; i < graph.node_count; ++i) csr.offsets[i + 1] = csr.offsets[i] + degree[i];
  csr.targets.resize(csr.offsets.back());
  csr.weights.resize(csr.offsets.back());
  std::vector<int> cursor(csr.offsets.begin(), csr.offsets.end() - 1);
  auto insert = [&](const GraphEdge& e) {
    csr.targets[cursor[e.a]] = e.b;
    csr.weights[cursor[e.a]++] = e.weight;
    csr.targets[cursor[e.b]] = e.a;
    csr.weights[cursor[e.b]++] = e.weight;
  };
  for (const auto& e : graph.edges) insert(e);
  for (const auto& e : graph.component_bridges) insert(e);
  return csr;
}

}  // namespace

SurfaceGraph build_graph(const PointCloud& cloud, int k) {
  int n = static_cast<int>(cloud.points.size());
  if (n < 2) fail("build_graph: need at least 2 points");
  if (k < 1) fail("build_graph: k must be >= 1");
  SurfaceGraph graph;
  graph.node_count = n;

  int kk = std::min(k, n - 1);
  std::vector<std::pair<int, int>> undirected;
  undirected.reserve(static_cast<std::size_t>(n) * kk);
  std::vector<std::pair<double, int>> cand(n - 1);
  for (int i = 0; i < n; ++i) {
    cand.clear();
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      cand.emplace_back((cloud.points[i] - cloud.points[j]).squaredNorm(), j);
    }
    // (distance, index) ordering makes neighbor choice deterministic under ties
    std::nth_element(cand.begin(), cand.begin() + (kk - 1), cand.end());
    std::sort(cand.begin(), cand.begin() + kk);
    for (int m = 0; m < kk; ++m) {
      int j = cand[m].second;
      undirected.emplace_back(std::min(i, j), std::max(i, j));
    }
  }
  std::sort(undirected.begin(), undirected.end());
  undirected.erase(std::unique(undirected.begin(), undirected.end()), undirected.end());
  graph.edges.reserve(undirected.size());
  for (const auto& [a, b] : undirected) {
    double d = (cloud.points[a] - cloud.points[b]).norm();
    graph.edges.push_back({a, b, quantized_edge_weight(d)});
  }
  bridge_components(graph, cloud.points);
  return graph;
}

SurfaceGraph build_graph(const Mesh& mesh) {
  int n = static_cast<int>(mesh.vertices.size());
  if (n < 2 || mesh.faces.empty()) fail("build_graph: mesh has no edges");
  SurfaceGraph graph;
  graph.node_count = n;
  std::vector<std::pair<int, int>> undirected;
  undirected.reserve(mesh.faces.size() * 3);
  for (const auto& f : mesh.faces) {
    for (int e = 0; e < 3; ++e) {
      int a = f[e], b = f[(e + 1) % 3];
      undirected.emplace_back(std::min(a, b), std::max(a, b));
    }
  }
  std::sort(undirected.begin(), undirected.end());
  undirected.erase(std::unique(undirected.begin(), undirected.end()), undirected.end());
  for (const auto& [a, b] : undirected) {
    double d = (mesh.vertices[a] - mesh.vertices[b]).norm();
    graph.edges.push_back({a, b, quantized_edge_weight(d)});
  }
  bridge_components(graph, mesh.vertices);
  return graph;
}

// --- geodesics ---------------------------------------------------------------

DistanceMatrix geodesics_from(const SurfaceGraph& graph, const std::vector<int>& sources,
                              int threads) {
  for (int s : sources)
    if (s < 0 || s >= graph.node_count)
      fail("geodesics_from: source node " + std::to_string(s) + " out of range");
  Csr csr = build_adjacency(graph);
  DistanceMatrix dm;
  dm.sources = sources;
  dm.distances.resize(static_cast<Eigen::Index>(sources.size()), graph.node_count);
  parallel_for(static_cast<int>(sources.size()), threads, [&](int row) {
    std::vector<double> dist(graph.node_count, kInf);
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<Item>> heap;
    dist[sources[row]] = 0.0;
    heap.emplace(0.0, sources[row]);
    while (!heap.empty()) {
      auto [d, u] = heap.top();
      heap.pop();
      if (d > dist[u]) continue;
      for (int e = csr.offsets[u]; e < csr.offsets[u + 1]; ++e) {
        int v = csr.targets[e];
        double nd = d + csr.weights[e];
        if (nd < dist[v]) {
          dist[v] = nd;
          heap.emplace(nd, v);
        }
      }
    }
    for (int j = 0; j < graph.node_count; ++j) dm.distances(row, j) = dist[j];
  });
  return dm;
}

Eigen::MatrixXd all_pairs_oracle(const SurfaceGraph& graph) {
  if (graph.node_count > 2000)
    fail("all_pairs_oracle: refusing graph with " + std::to_string(graph.node_count) +
         " nodes (limit 2000)");
  int n = graph.node_count;
  Eigen::MatrixXd d = Eigen::MatrixXd::Constant(n, n, kInf);
  for (int i = 0; i < n; ++i) d(i, i) = 0.0;
  auto relax_edge = [&](const GraphEdge& e) {
    d(e.a, e.b) = std::min(d(e.a, e.b), e.weight);
    d(e.b, e.a) = std::min(d(e.b, e.a), e.weight);
  };
  for (const auto& e : graph.edges) relax_edge(e);
  for (const auto& e : graph.component_bridges) relax_edge(e);
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i) {
      double dik = d(i, k);
      if (dik == kInf) continue;
      for (int j = 0; j < n; ++j) {
        double via = dik + d(k, j);
        if (via < d(i, j)) d(i, j) = via;
      }
    }
  return d;
}

void write_distance_csv(std::ostream& os, const DistanceMatrix& dm) {
  os << "source,node,distance\n";
  char buf[64];
  for (std::size_t r = 0; r < dm.sources.size(); ++r) {
    for (Eigen::Index j = 0; j < dm.distances.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", dm.distances(static_cast<Eigen::Index>(r), j));
      os << dm.sources[r] << ',' << j << ',' << buf << '\n';
    }
  }
}

// --- reference shapes ----------------------------------------------------------

Mesh make_icosahedron() {
  Mesh mesh;
  mesh.model_id = "icosahedron";
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  const double scale = 1.0 / std::sqrt(1.0 + phi * phi);
  auto add = [&](double x, double y, double z) {
    mesh.vertices.push_back(Vec3(x, y, z) * scale);
  };
  add(-1, phi, 0); add(1, phi, 0); add(-1, -phi, 0); add(1, -phi, 0);
  add(0, -1, phi); add(0, 1, phi); add(0, -1, -phi); add(0, 1, -phi);
  add(phi, 0, -1); add(phi, 0, 1); add(-phi, 0, -1); add(-phi, 0, 1);
  const int f[20][3] = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                        {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                        {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                        {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (const auto& face : f) mesh.faces.push_back({face[0], face[1], face[2]});
  return mesh;
}

Mesh make_icosphere(int level) {
  if (level < 0) fail("make_icosphere: level must be >= 0");
  Mesh mesh = make_icosahedron();
  for (int iter = 0; iter < level; ++iter) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      Vec3 m = (mesh.vertices[a] + mesh.vertices[b]).normalized();
      int idx = static_cast<int>(mesh.vertices.size());
      mesh.vertices.push_back(m);
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<std::array<int, 3>> faces;
    faces.reserve(mesh.faces.size() * 4);
    for (const auto& f : mesh.faces) {
      int ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
      faces.push_back({f[0], ab, ca});
      faces.push_back({f[1], bc, ab});
      faces.push_back({f[2], ca, bc});
      faces.push_back({ab, bc, ca});
    }
    mesh.faces = std::move(faces);
  }
  mesh.model_id = "icosphere_" + std::to_string(level);
  return mesh;
}

}  // namespace corrfield::geom
