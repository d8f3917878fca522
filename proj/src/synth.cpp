#include "corrfield/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "json.hpp"

#include "corrfield/rng.hpp"
#include "corrfield/version.hpp"

namespace corrfield::synth {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

// Deterministic annotation colors, one per set (cycled).
const double kPalette[10][3] = {
    {0.89, 0.10, 0.11}, {0.22, 0.49, 0.72}, {0.30, 0.69, 0.29}, {0.60, 0.31, 0.64},
    {1.00, 0.50, 0.00}, {1.00, 1.00, 0.20}, {0.65, 0.34, 0.16}, {0.97, 0.51, 0.75},
    {0.60, 0.60, 0.60}, {0.09, 0.75, 0.81}};

// One annotated member recorded as mesh vertex ids: the position is the mean
// of the listed vertices (a vertex, an edge midpoint, or a quad-diagonal
// center), which by construction lies exactly on a face.
struct MemberSpec {
  std::vector<int> verts;
  std::string part;
  int step = 0;  // index into the family's rotation group
};

struct LandmarkSpec {
  std::string name;
  std::vector<MemberSpec> orbit;  // canonical member first
};

struct BuiltModel {
  geom::Mesh mesh;  // raw coordinates
  std::vector<LandmarkSpec> landmarks;
  std::vector<PartBox> parts;  // raw coordinates
  int group_order = 1;
};

struct MeshBuilder {
  geom::Mesh mesh;

  int vertex(const Vec3& p) {
    mesh.vertices.push_back(p);
    return static_cast<int>(mesh.vertices.size()) - 1;
  }
  void tri(int a, int b, int c) { mesh.faces.push_back({a, b, c}); }
  // Split along the a-c diagonal so (a+c)/2 lies on both triangles.
  void quad(int a, int b, int c, int d) {
    tri(a, b, c);
    tri(a, c, d);
  }

  // Box corners indexed 0..7: bit pattern (x, y, z) with 0 = lo, 1 = hi.
  std::array<int, 8> box(const Vec3& lo, const Vec3& hi) {
    std::array<int, 8> v{};
    for (int i = 0; i < 8; ++i) {
      v[i] = vertex(Vec3(i & 1 ? hi.x() : lo.x(), i & 2 ? hi.y() : lo.y(),
                         i & 4 ? hi.z() : lo.z()));
    }
    quad(v[0], v[1], v[3], v[2]);  // z = lo
    quad(v[4], v[5], v[7], v[6]);  // z = hi
    quad(v[0], v[1], v[5], v[4]);  // y = lo
    quad(v[2], v[3], v[7], v[6]);  // y = hi
    quad(v[0], v[2], v[6], v[4]);  // x = lo
    quad(v[1], v[3], v[7], v[5]);  // x = hi
    return v;
  }

  // Rotated box: corners transformed by rot, same topology. Returns corner ids
  // using the same bit-pattern convention (in local coordinates).
  std::array<int, 8> rotated_box(const Vec3& lo, const Vec3& hi,
                                 const Eigen::Matrix3d& rot) {
    std::array<int, 8> v{};
    for (int i = 0; i < 8; ++i) {
      Vec3 local(i & 1 ? hi.x() : lo.x(), i & 2 ? hi.y() : lo.y(),
                 i & 4 ? hi.z() : lo.z());
      v[i] = vertex(rot * local);
    }
    quad(v[0], v[1], v[3], v[2]);
    quad(v[4], v[5], v[7], v[6]);
    quad(v[0], v[1], v[5], v[4]);
    quad(v[2], v[3], v[7], v[6]);
    quad(v[0], v[2], v[6], v[4]);
    quad(v[1], v[3], v[7], v[5]);
    return v;
  }
};

Vec3 member_position(const geom::Mesh& mesh, const MemberSpec& m) {
  Vec3 p = Vec3::Zero();
  for (int v : m.verts) p += mesh.vertices[static_cast<std::size_t>(v)];
  return p / static_cast<double>(m.verts.size());
}

// Locate a face containing `p` (barycentric coordinates in [0,1], residual
// below 1e-9). Annotated members are vertices or edge midpoints, so this
// always succeeds for generated data.
int find_face_for(const geom::Mesh& mesh, const Vec3& p) {
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& face = mesh.faces[f];
    const Vec3& a = mesh.vertices[face[0]];
    Vec3 ab = mesh.vertices[face[1]] - a;
    Vec3 ac = mesh.vertices[face[2]] - a;
    Vec3 ap = p - a;
    double d00 = ab.dot(ab), d01 = ab.dot(ac), d11 = ac.dot(ac);
    double d20 = ap.dot(ab), d21 = ap.dot(ac);
    double det = d00 * d11 - d01 * d01;
    if (det <= 0) continue;
    double u = (d11 * d20 - d01 * d21) / det;
    double v = (d00 * d21 - d01 * d20) / det;
    if (u < -1e-9 || v < -1e-9 || u + v > 1.0 + 1e-9) continue;
    if ((a + u * ab + v * ac - p).norm() < 1e-9) return static_cast<int>(f);
  }
  fail("synth: generated landmark does not lie on any face");
}

// Exact rotations by k * 90 degrees about z (no trigonometry).
Eigen::Matrix3d quarter_turn(int k) {
  static const int c[4] = {1, 0, -1, 0};
  static const int s[4] = {0, 1, 0, -1};
  Eigen::Matrix3d r = Eigen::Matrix3d::Identity();
  k = ((k % 4) + 4) % 4;
  r(0, 0) = c[k];
  r(0, 1) = -s[k];
  r(1, 0) = s[k];
  r(1, 1) = c[k];
  return r;
}

// --- tables: box top on four box legs, 2-fold rotational symmetry about z ----

BuiltModel build_table(Rng& rng) {
  // Coffee-table proportions: a broad top over short legs keeps most of the
  // surface area close to the annotated landmarks.
  double w = rng.uniform(1.3, 1.7);    // top extent along x
  double d = rng.uniform(1.1, 1.5);    // top extent along y
  double t = rng.uniform(0.06, 0.10);  // top thickness
  double h = rng.uniform(0.26, 0.38);  // leg height
  double s = rng.uniform(0.06, 0.10);  // leg cross-section
  double inset = rng.uniform(0.05, 0.12);

  MeshBuilder mb;
  auto top = mb.box(Vec3(-w / 2, -d / 2, h), Vec3(w / 2, d / 2, h + t));

  double cx = w / 2 - inset - s / 2;
  double cy = d / 2 - inset - s / 2;
  // legs keyed by the sign pattern of their center (x, y)
  struct Leg {
    const char* name;
    double x, y;
    std::array<int, 8> v;
  };
  Leg legs[4] = {{"leg_pp", cx, cy, {}},
                 {"leg_nn", -cx, -cy, {}},
                 {"leg_pn", cx, -cy, {}},
                 {"leg_np", -cx, cy, {}}};
  for (auto& leg : legs)
    leg.v = mb.box(Vec3(leg.x - s / 2, leg.y - s / 2, 0.0),
                   Vec3(leg.x + s / 2, leg.y + s / 2, h));

  BuiltModel bm;
  bm.group_order = 2;
  bm.mesh = std::move(mb.mesh);
  bm.parts = {
      {"top", Vec3(-w / 2, -d / 2, h), Vec3(w / 2, d / 2, h + t)},
      {"leg_pp", Vec3(cx - s / 2, cy - s / 2, 0), Vec3(cx + s / 2, cy + s / 2, h)},
      {"leg_nn", Vec3(-cx - s / 2, -cy - s / 2, 0), Vec3(-cx + s / 2, -cy + s / 2, h)},
      {"leg_pn", Vec3(cx - s / 2, -cy - s / 2, 0), Vec3(cx + s / 2, -cy + s / 2, h)},
      {"leg_np", Vec3(-cx - s / 2, cy - s / 2, 0), Vec3(-cx + s / 2, cy + s / 2, h)},
  };

  // Corner ids follow the box bit pattern: bit0 = +x, bit1 = +y, bit2 = +z.
  const auto& pp = legs[0].v;
  const auto& nn = legs[1].v;
  const auto& pn = legs[2].v;
  const auto& np = legs[3].v;
  // Catalog ordered so small n_sets picks the landmarks nearest the surface's
  // bulk (the top); leg landmarks come last.
  bm.landmarks = {
      {"top_center", {{{top[4], top[7]}, "top", 0}}},
      {"edge_mid_front", {{{top[5], top[7]}, "top", 0}, {{top[4], top[6]}, "top", 1}}},
      {"top_corner_a", {{{top[7]}, "top", 0}, {{top[4]}, "top", 1}}},
      {"edge_mid_side", {{{top[6], top[7]}, "top", 0}, {{top[4], top[5]}, "top", 1}}},
      {"under_center", {{{top[0], top[3]}, "top", 0}}},
      {"top_corner_b", {{{top[5]}, "top", 0}, {{top[6]}, "top", 1}}},
      {"leg_top_a", {{{pp[7]}, "leg_pp", 0}, {{nn[4]}, "leg_nn", 1}}},
      {"leg_foot_a", {{{pp[3]}, "leg_pp", 0}, {{nn[0]}, "leg_nn", 1}}},
      {"leg_inner_foot_a", {{{pp[0]}, "leg_pp", 0}, {{nn[3]}, "leg_nn", 1}}},
      {"leg_foot_b", {{{pn[1]}, "leg_pn", 0}, {{np[2]}, "leg_np", 1}}},
  };
  return bm;
}

// --- mugs: open cylinder + half-torus handle, no proper symmetry -------------

BuiltModel build_mug(Rng& rng) {
  // Compact body plus a long thin loop handle: the handle sets the bounding
  // radius while contributing little area, so body-to-body geodesics stay
  // short after unit-sphere normalization.
  double r = rng.uniform(0.28, 0.34);      // body radius
  double h = rng.uniform(0.45, 0.55);      // body height
  double rt = rng.uniform(0.032, 0.040);   // handle tube radius
  double reach = rng.uniform(0.65, 0.80);  // handle protrusion beyond the wall
  double zc = h * rng.uniform(0.42, 0.52);
  double arc = h * rng.uniform(0.16, 0.22);  // half the attach separation
  double z1 = zc - arc;
  double z2 = zc + arc;

  MeshBuilder mb;
  const int seg = 40;
  std::vector<int> bottom(seg), top(seg);
  for (int i = 0; i < seg; ++i) {
    double a = 2.0 * M_PI * i / seg;
    bottom[i] = mb.vertex(Vec3(r * std::cos(a), r * std::sin(a), 0.0));
    top[i] = mb.vertex(Vec3(r * std::cos(a), r * std::sin(a), h));
  }
  for (int i = 0; i < seg; ++i) {
    int j = (i + 1) % seg;
    mb.quad(bottom[i], bottom[j], top[j], top[i]);
  }
  int base_center = mb.vertex(Vec3(0, 0, 0));
  for (int i = 0; i < seg; ++i) mb.tri(bottom[i], bottom[(i + 1) % seg], base_center);

  // Handle: half elliptical loop in the xz-plane bulging toward +x, attached
  // at (r, 0, z1) and (r, 0, z2). Few tube segments keep the handle's share
  // of vertices and area small — the vertex centroid (and so the normalized
  // scale) stays anchored to the body.
  const int arc_seg = 6, tube_seg = 4;
  // ring[j][m]: arc station j, tube angle m
  std::vector<std::vector<int>> ring(arc_seg + 1, std::vector<int>(tube_seg));
  for (int j = 0; j <= arc_seg; ++j) {
    double phi = -M_PI / 2 + M_PI * j / arc_seg;
    Vec3 center(r + reach * std::cos(phi), 0.0, zc + arc * std::sin(phi));
    Vec3 radial(std::cos(phi), 0.0, std::sin(phi));
    for (int m = 0; m < tube_seg; ++m) {
      double th = 2.0 * M_PI * m / tube_seg;
      Vec3 p = center + rt * (std::cos(th) * radial + std::sin(th) * Vec3(0, 1, 0));
      ring[j][m] = mb.vertex(p);
    }
  }
  for (int j = 0; j < arc_seg; ++j)
    for (int m = 0; m < tube_seg; ++m) {
      int m2 = (m + 1) % tube_seg;
      mb.quad(ring[j][m], ring[j][m2], ring[j + 1][m2], ring[j + 1][m]);
    }

  BuiltModel bm;
  bm.group_order = 1;
  bm.mesh = std::move(mb.mesh);
  bm.parts = {
      {"body", Vec3(-r, -r, 0), Vec3(r, r, h)},
      {"handle", Vec3(r - rt, -rt, z1 - rt), Vec3(r + reach + rt, rt, z2 + rt)},
      {"base", Vec3(-r, -r, 0), Vec3(r, r, 0)},
  };
  // tube angle 0 points along the loop's outward direction. Catalog ordered
  // so small n_sets picks attach/base landmarks; the rim ring and the far
  // loop tip come last.
  bm.landmarks = {
      {"handle_top", {{{ring[arc_seg][0]}, "handle", 0}}},    // (r, 0, z2 + rt)
      {"rim_handle", {{{top[0]}, "body", 0}}},                // (r, 0, h)
      {"handle_bottom", {{{ring[0][0]}, "handle", 0}}},       // (r, 0, z1 - rt)
      {"base_center", {{{base_center}, "base", 0}}},
      {"base_opposite", {{{bottom[seg / 2]}, "body", 0}}},    // (-r, 0, 0)
      {"body_mid_opposite", {{{bottom[seg / 2], top[seg / 2]}, "body", 0}}},
      {"rim_left", {{{top[seg / 4]}, "body", 0}}},            // (0, r, h)
      {"rim_right", {{{top[3 * seg / 4]}, "body", 0}}},       // (0, -r, h)
      {"rim_opposite", {{{top[seg / 2]}, "body", 0}}},        // (-r, 0, h)
      {"handle_outer", {{{ring[arc_seg / 2][0]}, "handle", 0}}},  // (r+reach+rt, 0, zc)
  };
  return bm;
}

// --- rockets: cone nose + cylinder body + 4 fins, 4-fold symmetry ------------

BuiltModel build_rocket(Rng& rng) {
  double r = rng.uniform(0.18, 0.28);    // body radius
  double hb = rng.uniform(1.0, 1.5);     // body height
  double hn = rng.uniform(0.35, 0.6);    // nose height
  double lf = rng.uniform(0.15, 0.30);   // fin length (radial)
  double hf = rng.uniform(0.25, 0.45);   // fin height
  double ft = rng.uniform(0.010, 0.015); // fin half-thickness

  MeshBuilder mb;
  const int seg = 24;  // 15-degree steps; all landmark angles are multiples
  std::vector<int> bottom(seg), top(seg);
  for (int i = 0; i < seg; ++i) {
    double a = 2.0 * M_PI * i / seg;
    bottom[i] = mb.vertex(Vec3(r * std::cos(a), r * std::sin(a), 0.0));
    top[i] = mb.vertex(Vec3(r * std::cos(a), r * std::sin(a), hb));
  }
  for (int i = 0; i < seg; ++i) {
    int j = (i + 1) % seg;
    mb.quad(bottom[i], bottom[j], top[j], top[i]);
  }
  int base_center = mb.vertex(Vec3(0, 0, 0));
  for (int i = 0; i < seg; ++i) mb.tri(bottom[i], bottom[(i + 1) % seg], base_center);
  int apex = mb.vertex(Vec3(0, 0, hb + hn));
  for (int i = 0; i < seg; ++i) mb.tri(top[i], top[(i + 1) % seg], apex);

  // Four thin fin boxes at exact quarter turns; embedded slightly into the body.
  std::array<std::array<int, 8>, 4> fin{};
  std::array<PartBox, 4> fin_box;
  Vec3 fin_lo(r - 0.02, -ft, 0.0), fin_hi(r + lf, ft, hf);
  for (int k = 0; k < 4; ++k) {
    Eigen::Matrix3d rot = quarter_turn(k);
    fin[k] = mb.rotated_box(fin_lo, fin_hi, rot);
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (int c = 0; c < 8; ++c) {
      const Vec3& p = mb.mesh.vertices[static_cast<std::size_t>(fin[k][c])];
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    fin_box[k] = {"fin_" + std::to_string(k), lo, hi};
  }

  BuiltModel bm;
  bm.group_order = 4;
  bm.mesh = std::move(mb.mesh);
  bm.parts = {
      {"body", Vec3(-r, -r, 0), Vec3(r, r, hb)},
      {"nose", Vec3(-r, -r, hb), Vec3(r, r, hb + hn)},
      {"base", Vec3(-r, -r, 0), Vec3(r, r, 0)},
      fin_box[0], fin_box[1], fin_box[2], fin_box[3],
  };

  auto at = [&](int quarter) { return quarter * (seg / 4); };       // 0/90/180/270 deg
  auto mid = [&](int quarter) { return seg / 8 + quarter * (seg / 4); };  // 45 deg offset
  auto fin_name = [](int k) { return "fin_" + std::to_string(k); };

  LandmarkSpec fin_tip{"fin_tip", {}};
  LandmarkSpec fin_top{"fin_top", {}};
  for (int k = 0; k < 4; ++k) {
    // outer bottom edge midpoint (corners 1,3) and outer top edge midpoint (5,7)
    fin_tip.orbit.push_back({{fin[k][1], fin[k][3]}, fin_name(k), k});
    fin_top.orbit.push_back({{fin[k][5], fin[k][7]}, fin_name(k), k});
  }
  LandmarkSpec base_rim{"base_rim", {}}, nose_base{"nose_base", {}},
      body_mid{"body_mid", {}}, nose_mid{"nose_mid", {}};
  for (int k = 0; k < 4; ++k) {
    base_rim.orbit.push_back({{bottom[at(k)]}, "body", k});
    nose_base.orbit.push_back({{top[at(k)]}, "nose", k});
    body_mid.orbit.push_back({{bottom[mid(k)], top[mid(k)]}, "body", k});
    nose_mid.orbit.push_back({{top[mid(k)], apex}, "nose", k});
  }
  bm.landmarks = {
      {"nose_tip", {{{apex}, "nose", 0}}},
      fin_tip,
      base_rim,
      {"base_center", {{{base_center}, "base", 0}}},
      nose_base,
      body_mid,
      fin_top,
      nose_mid,
  };
  return bm;
}

BuiltModel build_model(const std::string& family, Rng& rng) {
  if (family == "tables") return build_table(rng);
  if (family == "mugs") return build_mug(rng);
  if (family == "rockets") return build_rocket(rng);
  std::string names;
  for (const auto& n : family_names()) names += (names.empty() ? "" : ", ") + n;
  fail("unknown family '" + family + "' (available: " + names + ")");
}

// Which orbit members a symmetry mode exposes.
std::vector<int> mode_member_indices(const LandmarkSpec& lm, int group_order,
                                     corr::SymmetryMode mode) {
  std::vector<int> out;
  for (std::size_t i = 0; i < lm.orbit.size(); ++i) {
    int step = lm.orbit[i].step;
    bool keep = false;
    switch (mode) {
      case corr::SymmetryMode::kNone:
        keep = (i == 0);
        break;
      case corr::SymmetryMode::kCentral:
        keep = (step == 0) || (2 * step == group_order);
        break;
      case corr::SymmetryMode::kRotational:
      case corr::SymmetryMode::kBoth:
        keep = true;
        break;
    }
    if (keep) out.push_back(static_cast<int>(i));
  }
  return out;
}

}  // namespace

const PartBox& ModelRecipe::part(const std::string& name) const {
  for (const auto& p : parts)
    if (p.name == name) return p;
  fail("unknown part '" + name + "' in recipe for " + model_id);
}

std::vector<std::string> family_names() { return {"tables", "mugs", "rockets"}; }

int family_catalog_size(const std::string& family) {
  Rng probe(0);
  return static_cast<int>(build_model(family, probe).landmarks.size());
}

SynthesisResult synthesize_category(const std::string& family, int n_models, int n_sets,
                                    std::uint64_t seed, corr::SymmetryMode mode,
                                    const std::filesystem::path& out_dir) {
  if (n_models < 3) fail("synthesize_category: need at least 3 models");
  if (n_sets < 2) fail("synthesize_category: need at least 2 sets");
  int catalog = family_catalog_size(family);
  if (n_sets > catalog)
    fail("synthesize_category: family '" + family + "' supports at most " +
         std::to_string(catalog) + " sets");

  std::filesystem::create_directories(out_dir);
  Rng root(seed);

  corr::RawCategory raw;
  raw.category = family;
  raw.symmetry_mode = mode;
  SynthesisResult result;

  std::vector<BuiltModel> built;
  built.reserve(static_cast<std::size_t>(n_models));
  for (int i = 0; i < n_models; ++i) {
    Rng rng = root.fork(100 + static_cast<std::uint64_t>(i));
    built.push_back(build_model(family, rng));
    char idbuf[64];
    std::snprintf(idbuf, sizeof(idbuf), "%s_%03d", family.c_str(), i);
    std::string id = idbuf;
    built.back().mesh.model_id = id;
    raw.models.emplace_back(id, built.back().mesh);
  }

  for (int s = 0; s < n_sets; ++s) {
    corr::RawSet rs;
    rs.set_id = s;
    for (int i = 0; i < n_models; ++i) {
      const BuiltModel& bm = built[static_cast<std::size_t>(i)];
      const LandmarkSpec& lm = bm.landmarks[static_cast<std::size_t>(s)];
      corr::RawEntry entry;
      entry.model_id = raw.models[static_cast<std::size_t>(i)].first;
      for (int mi : mode_member_indices(lm, bm.group_order, mode)) {
        const MemberSpec& ms = lm.orbit[static_cast<std::size_t>(mi)];
        corr::RawPoint rp;
        rp.position = member_position(bm.mesh, ms);
        rp.face_index = find_face_for(bm.mesh, rp.position);
        rp.rgb = Vec3(kPalette[s % 10][0], kPalette[s % 10][1], kPalette[s % 10][2]);
        entry.points.push_back(std::move(rp));
      }
      rs.entries.push_back(std::move(entry));
    }
    raw.sets.push_back(std::move(rs));
  }

  // Write meshes, annotations, manifest.
  for (const auto& [id, mesh] : raw.models) {
    std::string name = id + ".obj";
    geom::write_obj(out_dir / name, mesh);
    result.files.push_back(name);
  }
  result.annotation_file = out_dir / "annotations.json";
  write_annotation_json(result.annotation_file, raw);
  result.files.push_back("annotations.json");

  nlohmann::ordered_json manifest;
  manifest["category"] = family;
  manifest["symmetry_mode"] = corr::to_string(mode);
  manifest["seed"] = seed;
  manifest["n_models"] = n_models;
  manifest["n_sets"] = n_sets;
  manifest["version"] = version_string();
  manifest["files"] = result.files;
  {
    std::ofstream out(out_dir / "manifest.json");
    if (!out) fail("cannot write manifest: " + (out_dir / "manifest.json").string());
    out << manifest.dump(2) << '\n';
  }
  result.files.push_back("manifest.json");

  // Recipes in normalized coordinates (same frame the dataset uses).
  for (int i = 0; i < n_models; ++i) {
    const BuiltModel& bm = built[static_cast<std::size_t>(i)];
    geom::UnitSphereFrame frame = geom::unit_sphere_frame(bm.mesh);
    ModelRecipe recipe;
    recipe.model_id = raw.models[static_cast<std::size_t>(i)].first;
    for (const auto& p : bm.parts)
      recipe.parts.push_back({p.name, frame.apply(p.lo), frame.apply(p.hi)});
    for (int s = 0; s < n_sets; ++s) {
      const LandmarkSpec& lm = bm.landmarks[static_cast<std::size_t>(s)];
      std::vector<std::string> parts;
      for (int mi : mode_member_indices(lm, bm.group_order, mode))
        parts.push_back(lm.orbit[static_cast<std::size_t>(mi)].part);
      recipe.member_parts.push_back(std::move(parts));
    }
    result.recipes.push_back(std::move(recipe));
  }

  result.dataset = corr::assemble_dataset(std::move(raw));
  return result;
}

}  // namespace corrfield::synth
