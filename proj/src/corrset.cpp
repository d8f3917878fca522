#include "corrfield/corrset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <stdexcept>

#include "json.hpp"

namespace corrfield::corr {

using ordered_json = nlohmann::ordered_json;

namespace {
[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }
}  // namespace

SymmetryMode symmetry_mode_from_string(const std::string& s) {
  if (s == "none") return SymmetryMode::kNone;
  if (s == "central") return SymmetryMode::kCentral;
  if (s == "rotational") return SymmetryMode::kRotational;
  if (s == "both") return SymmetryMode::kBoth;
  fail("unknown symmetry_mode '" + s + "' (expected none|central|rotational|both)");
}

std::string to_string(SymmetryMode mode) {
  switch (mode) {
    case SymmetryMode::kNone: return "none";
    case SymmetryMode::kCentral: return "central";
    case SymmetryMode::kRotational: return "rotational";
    case SymmetryMode::kBoth: return "both";
  }
  fail("invalid symmetry mode");
}

bool SemanticPoint::operator==(const SemanticPoint& o) const {
  auto opt_eq = [](const auto& a, const auto& b) {
    if (a.has_value() != b.has_value()) return false;
    return !a.has_value() || *a == *b;
  };
  return position == o.position && face_index == o.face_index &&
         opt_eq(uv, o.uv) && opt_eq(rgb, o.rgb) && cloud_index == o.cloud_index;
}

int Dataset::model_index(const std::string& id) const {
  for (std::size_t i = 0; i < models.size(); ++i)
    if (models[i].id == id) return static_cast<int>(i);
  return -1;
}

const Model& Dataset::model(const std::string& id) const {
  int idx = model_index(id);
  if (idx < 0) fail("unknown model id '" + id + "'");
  return models[idx];
}

bool operator==(const Dataset& a, const Dataset& b) {
  if (a.category != b.category || a.symmetry_mode != b.symmetry_mode) return false;
  if (a.models.size() != b.models.size() || a.sets != b.sets) return false;
  for (std::size_t i = 0; i < a.models.size(); ++i) {
    const auto& ma = a.models[i];
    const auto& mb = b.models[i];
    if (ma.id != mb.id || ma.mesh.vertices != mb.mesh.vertices ||
        ma.mesh.faces != mb.mesh.faces)
      return false;
  }
  return true;
}

// --- assembly ------------------------------------------------------------------

Dataset assemble_dataset(RawCategory raw) {
  Dataset ds;
  ds.category = raw.category;
  ds.symmetry_mode = raw.symmetry_mode;

  std::map<std::string, int> index_of;
  std::vector<geom::UnitSphereFrame> frames;
  for (auto& [id, mesh] : raw.models) {
    if (index_of.count(id)) fail("duplicate model id '" + id + "'");
    index_of[id] = static_cast<int>(ds.models.size());
    geom::UnitSphereFrame frame = geom::unit_sphere_frame(mesh);
    frames.push_back(frame);
    Model model;
    model.id = id;
    model.mesh = mesh;
    model.mesh.model_id = id;
    for (auto& v : model.mesh.vertices) v = frame.apply(v);
    ds.models.push_back(std::move(model));
  }

  std::set<int> seen_ids;
  for (auto& rs : raw.sets) {
    if (!seen_ids.insert(rs.set_id).second)
      fail("duplicate set_id " + std::to_string(rs.set_id));
    CorrespondenceSet cs;
    cs.set_id = rs.set_id;
    for (auto& entry : rs.entries) {
      auto it = index_of.find(entry.model_id);
      if (it == index_of.end())
        fail("set " + std::to_string(rs.set_id) + " references unknown model '" +
             entry.model_id + "'");
      if (cs.entries.count(entry.model_id))
        fail("set " + std::to_string(rs.set_id) + " has two entries for model '" +
             entry.model_id + "'");
      if (entry.points.empty())
        fail("set " + std::to_string(rs.set_id) + " has an empty hyperpoint on model '" +
             entry.model_id + "'");
      const auto& model = ds.models[it->second];
      const auto& frame = frames[it->second];
      Hyperpoint hp;
      for (const auto& rp : entry.points) {
        SemanticPoint sp;
        sp.position = frame.apply(rp.position);
        if (sp.position.norm() > 1.0 + 1e-6)
          fail("set " + std::to_string(rs.set_id) + " point on model '" + entry.model_id +
               "' lies outside the unit ball after normalization");
        if (rp.face_index != -1) {
          if (rp.face_index < 0 ||
              rp.face_index >= static_cast<int>(model.mesh.faces.size()))
            fail("set " + std::to_string(rs.set_id) + " point on model '" +
                 entry.model_id + "' has invalid face_index " +
                 std::to_string(rp.face_index));
          sp.face_index = rp.face_index;
        }
        sp.uv = rp.uv;
        sp.rgb = rp.rgb;
        hp.members.push_back(std::move(sp));
      }
      if (ds.symmetry_mode == SymmetryMode::kNone && hp.members.size() != 1)
        fail("set " + std::to_string(rs.set_id) + " on model '" + entry.model_id +
             "' has " + std::to_string(hp.members.size()) +
             " members but symmetry_mode is none");
      cs.entries.emplace(entry.model_id, std::move(hp));
    }
    if (cs.entries.size() < 2)
      fail("set " + std::to_string(cs.set_id) + " spans fewer than 2 models");
    ds.sets.push_back(std::move(cs));
  }
  std::sort(ds.sets.begin(), ds.sets.end(),
            [](const CorrespondenceSet& a, const CorrespondenceSet& b) {
              return a.set_id < b.set_id;
            });
  return ds;
}

// --- JSON ingestion --------------------------------------------------------------

namespace {

Vec3 parse_vec3(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3 || !j[0].is_number() || !j[1].is_number() ||
      !j[2].is_number())
    fail("schema violation: " + where + " must be an array of 3 numbers");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

const nlohmann::json& require(const nlohmann::json& j, const char* key,
                              const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) fail("schema violation: missing '" + std::string(key) + "' in " + where);
  return *it;
}

}  // namespace

Dataset parse_dataset(const std::filesystem::path& annotation_file,
                      const std::filesystem::path& geometry_dir) {
  std::ifstream in(annotation_file);
  if (!in) fail("cannot open annotation file: " + annotation_file.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const std::exception& e) {
    fail("schema violation: " + annotation_file.string() + " is not valid JSON (" +
         e.what() + ")");
  }
  if (!j.is_object()) fail("schema violation: annotation root must be an object");

  RawCategory raw;
  raw.category = require(j, "category", "root").get<std::string>();
  raw.symmetry_mode =
      symmetry_mode_from_string(require(j, "symmetry_mode", "root").get<std::string>());

  const auto& models = require(j, "models", "root");
  if (!models.is_array() || models.empty())
    fail("schema violation: 'models' must be a non-empty array");
  for (const auto& jm : models) {
    std::string id = require(jm, "id", "models[]").get<std::string>();
    std::string mesh_file = require(jm, "mesh", "models[]").get<std::string>();
    geom::Mesh mesh = geom::load_mesh(geometry_dir / mesh_file);
    raw.models.emplace_back(id, std::move(mesh));
  }

  const auto& sets = require(j, "sets", "root");
  if (!sets.is_array()) fail("schema violation: 'sets' must be an array");
  for (const auto& js : sets) {
    RawSet rs;
    const auto& jid = require(js, "set_id", "sets[]");
    if (!jid.is_number_integer()) fail("schema violation: set_id must be an integer");
    rs.set_id = jid.get<int>();
    const auto& entries = require(js, "entries", "sets[]");
    if (!entries.is_array()) fail("schema violation: 'entries' must be an array");
    for (const auto& je : entries) {
      RawEntry entry;
      entry.model_id = require(je, "model", "entries[]").get<std::string>();
      const auto& points = require(je, "points", "entries[]");
      if (!points.is_array()) fail("schema violation: 'points' must be an array");
      for (const auto& jp : points) {
        RawPoint rp;
        rp.position = parse_vec3(require(jp, "xyz", "points[]"), "xyz");
        if (jp.contains("face") && !jp["face"].is_null()) {
          if (!jp["face"].is_number_integer())
            fail("schema violation: face must be an integer");
          rp.face_index = jp["face"].get<int>();
        }
        if (jp.contains("uv") && !jp["uv"].is_null()) {
          const auto& juv = jp["uv"];
          if (!juv.is_array() || juv.size() != 2)
            fail("schema violation: uv must be an array of 2 numbers");
          rp.uv = Eigen::Vector2d(juv[0].get<double>(), juv[1].get<double>());
        }
        if (jp.contains("rgb") && !jp["rgb"].is_null())
          rp.rgb = parse_vec3(jp["rgb"], "rgb");
        entry.points.push_back(std::move(rp));
      }
      rs.entries.push_back(std::move(entry));
    }
    raw.sets.push_back(std::move(rs));
  }
  return assemble_dataset(std::move(raw));
}

void write_annotation_json(const std::filesystem::path& path, const RawCategory& raw) {
  ordered_json j;
  j["category"] = raw.category;
  j["symmetry_mode"] = to_string(raw.symmetry_mode);
  j["models"] = ordered_json::array();
  for (const auto& [id, mesh] : raw.models) {
    ordered_json jm;
    jm["id"] = id;
    jm["mesh"] = id + ".obj";
    j["models"].push_back(jm);
  }
  j["sets"] = ordered_json::array();
  for (const auto& rs : raw.sets) {
    ordered_json js;
    js["set_id"] = rs.set_id;
    js["entries"] = ordered_json::array();
    for (const auto& entry : rs.entries) {
      ordered_json je;
      je["model"] = entry.model_id;
      je["points"] = ordered_json::array();
      for (const auto& rp : entry.points) {
        ordered_json jp;
        jp["xyz"] = {rp.position.x(), rp.position.y(), rp.position.z()};
        if (rp.face_index >= 0) jp["face"] = rp.face_index;
        if (rp.uv) jp["uv"] = {rp.uv->x(), rp.uv->y()};
        if (rp.rgb) jp["rgb"] = {rp.rgb->x(), rp.rgb->y(), rp.rgb->z()};
        je["points"].push_back(jp);
      }
      js["entries"].push_back(je);
    }
    j["sets"].push_back(js);
  }
  std::ofstream out(path);
  if (!out) fail("cannot write annotation file: " + path.string());
  out << j.dump(2) << '\n';
  if (!out) fail("failed writing annotation file: " + path.string());
}

// --- operations -------------------------------------------------------------------

Dataset attach_to_cloud(const Dataset& dataset,
                        const std::map<std::string, geom::PointCloud>& clouds,
                        double max_distance) {
  Dataset out = dataset;
  for (auto& cs : out.sets) {
    for (auto& [model_id, hp] : cs.entries) {
      auto it = clouds.find(model_id);
      if (it == clouds.end()) fail("attach_to_cloud: no cloud for model '" + model_id + "'");
      const auto& cloud = it->second;
      if (cloud.points.empty())
        fail("attach_to_cloud: empty cloud for model '" + model_id + "'");
      for (auto& member : hp.members) {
        int best = 0;
        double best_d2 = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < cloud.points.size(); ++i) {
          double d2 = (cloud.points[i] - member.position).squaredNorm();
          if (d2 < best_d2) {  // strict '<' keeps the lowest index on ties
            best_d2 = d2;
            best = static_cast<int>(i);
          }
        }
        if (std::sqrt(best_d2) > max_distance)
          fail("attach_to_cloud: annotation of set " + std::to_string(cs.set_id) +
               " on model '" + model_id + "' is " + std::to_string(std::sqrt(best_d2)) +
               " from the nearest cloud point (limit " + std::to_string(max_distance) + ")");
        member.cloud_index = best;
      }
    }
  }
  return out;
}

const SemanticPoint& resolve_hyperpoint(const Hyperpoint& h, Rng& rng) {
  if (h.members.empty()) fail("resolve_hyperpoint: hyperpoint has no members");
  if (h.members.size() == 1) return h.members[0];
  return h.members[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(h.members.size())))];
}

Split split_models(const Dataset& dataset, std::uint64_t seed) {
  int n = static_cast<int>(dataset.models.size());
  if (n < 3) fail("split_models: need at least 3 models, have " + std::to_string(n));
  std::vector<std::string> ids;
  ids.reserve(n);
  for (const auto& m : dataset.models) ids.push_back(m.id);
  Rng rng(seed);
  rng.shuffle(ids);
  // 70/15/15 with floor, but val and test always get at least one model
  int n_val = std::max(1, (15 * n) / 100);
  int n_test = std::max(1, (15 * n) / 100);
  int n_train = n - n_val - n_test;
  Split split;
  split.train.assign(ids.begin(), ids.begin() + n_train);
  split.val.assign(ids.begin() + n_train, ids.begin() + n_train + n_val);
  split.test.assign(ids.begin() + n_train + n_val, ids.end());
  return split;
}

void write_split_json(const std::filesystem::path& path, const Split& split) {
  ordered_json j;
  j["train"] = split.train;
  j["val"] = split.val;
  j["test"] = split.test;
  std::ofstream out(path);
  if (!out) fail("cannot write split file: " + path.string());
  out << j.dump(2) << '\n';
}

Split parse_split_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open split file: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const std::exception& e) {
    fail("split file " + path.string() + " is not valid JSON (" + e.what() + ")");
  }
  Split split;
  for (const char* key : {"train", "val", "test"}) {
    const auto& arr = require(j, key, "split file");
    if (!arr.is_array()) fail("split file: '" + std::string(key) + "' must be an array");
    std::vector<std::string>& dst = key[1] == 'r' ? split.train
                                  : key[0] == 'v' ? split.val
                                                  : split.test;
    for (const auto& v : arr) dst.push_back(v.get<std::string>());
  }
  return split;
}

double set_distance(const CorrespondenceSet& ci, const CorrespondenceSet& cj,
                    const std::map<std::string, geom::DistanceMatrix>& geodesics) {
  if (ci.set_id == cj.set_id) fail("set_distance: sets must be distinct");
  double total = 0.0;
  int shared = 0;
  for (const auto& [model_id, hi] : ci.entries) {
    auto jt = cj.entries.find(model_id);
    if (jt == cj.entries.end()) continue;
    auto gt = geodesics.find(model_id);
    if (gt == geodesics.end())
      fail("set_distance: no geodesics for shared model '" + model_id + "'");
    const Hyperpoint& hj = jt->second;
    double acc = 0.0;
    for (const auto& p : hi.members) {
      if (p.cloud_index < 0)
        fail("set_distance: set " + std::to_string(ci.set_id) + " not attached on '" +
             model_id + "'");
      for (const auto& q : hj.members) {
        if (q.cloud_index < 0)
          fail("set_distance: set " + std::to_string(cj.set_id) + " not attached on '" +
               model_id + "'");
        acc += gt->second.from(p.cloud_index, q.cloud_index);
      }
    }
    total += acc / static_cast<double>(hi.members.size() * hj.members.size());
    ++shared;
  }
  if (shared == 0)
    fail("set_distance: sets " + std::to_string(ci.set_id) + " and " +
         std::to_string(cj.set_id) + " share no model");
  return total / static_cast<double>(shared);
}

int MarginTable::index_of(int set_id) const {
  for (std::size_t i = 0; i < set_ids.size(); ++i)
    if (set_ids[i] == set_id) return static_cast<int>(i);
  return -1;
}

std::optional<double> MarginTable::between(int set_i, int set_j) const {
  int a = index_of(set_i), b = index_of(set_j);
  if (a < 0 || b < 0) return std::nullopt;
  double m = margin(a, b);
  if (std::isnan(m)) return std::nullopt;
  return m;
}

MarginTable compute_margins(const Dataset& dataset,
                            const std::map<std::string, geom::DistanceMatrix>& geodesics) {
  MarginTable table;
  int k = static_cast<int>(dataset.sets.size());
  table.set_ids.reserve(k);
  for (const auto& cs : dataset.sets) table.set_ids.push_back(cs.set_id);
  table.margin = Eigen::MatrixXd::Constant(k, k, std::numeric_limits<double>::quiet_NaN());
  for (int i = 0; i < k; ++i) {
    table.margin(i, i) = 0.0;
    for (int j = i + 1; j < k; ++j) {
      bool shares = false;
      for (const auto& [model_id, hp] : dataset.sets[i].entries)
        if (dataset.sets[j].entries.count(model_id)) {
          shares = true;
          break;
        }
      if (!shares) continue;
      double d = set_distance(dataset.sets[i], dataset.sets[j], geodesics);
      table.margin(i, j) = d;
      table.margin(j, i) = d;
    }
  }
  return table;
}

CropResult crop_partial(const geom::PointCloud& cloud, double keep_fraction,
                        std::uint64_t seed) {
  if (!(keep_fraction > 0.0 && keep_fraction < 1.0))
    fail("crop_partial: keep_fraction must be in (0, 1), got " +
         std::to_string(keep_fraction));
  if (cloud.points.empty()) fail("crop_partial: empty cloud");
  Rng rng(seed);
  int seed_index = rng.uniform_int(static_cast<int>(cloud.points.size()));
  return crop_partial_around(cloud, seed_index, keep_fraction);
}

CropResult crop_partial_around(const geom::PointCloud& cloud, int seed_index,
                               double keep_fraction) {
  int n = static_cast<int>(cloud.points.size());
  if (n == 0) fail("crop_partial: empty cloud");
  if (seed_index < 0 || seed_index >= n) fail("crop_partial: seed index out of range");
  if (!(keep_fraction > 0.0 && keep_fraction < 1.0))
    fail("crop_partial: keep_fraction must be in (0, 1), got " +
         std::to_string(keep_fraction));
  int remove = static_cast<int>(std::llround((1.0 - keep_fraction) * n));
  remove = std::min(remove, n - 1);  // never delete the whole cloud

  const Vec3& center = cloud.points[static_cast<std::size_t>(seed_index)];
  std::vector<std::pair<double, int>> order(n);
  for (int i = 0; i < n; ++i)
    order[static_cast<std::size_t>(i)] = {(cloud.points[i] - center).squaredNorm(), i};
  std::sort(order.begin(), order.end());  // (distance, index): deterministic ties

  std::vector<char> removed(n, 0);
  for (int i = 0; i < remove; ++i) removed[static_cast<std::size_t>(order[i].second)] = 1;

  CropResult result;
  result.cloud.model_id = cloud.model_id;
  std::vector<int> new_index(n, -1);
  for (int i = 0; i < n; ++i) {
    if (removed[static_cast<std::size_t>(i)]) continue;
    new_index[static_cast<std::size_t>(i)] = static_cast<int>(result.cloud.points.size());
    result.kept.push_back(i);
    result.cloud.points.push_back(cloud.points[static_cast<std::size_t>(i)]);
    result.cloud.source_face.push_back(cloud.source_face[static_cast<std::size_t>(i)]);
  }
  for (int pi : cloud.pinned)
    if (new_index[static_cast<std::size_t>(pi)] >= 0)
      result.cloud.pinned.push_back(new_index[static_cast<std::size_t>(pi)]);
  return result;
}

}  // namespace corrfield::corr
