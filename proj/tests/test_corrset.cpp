#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "corrfield/corrset.hpp"
#include "corrfield/geometry.hpp"
#include "corrfield/pipeline.hpp"
#include "corrfield/rng.hpp"
#include "corrfield/synth.hpp"
#include "doctest.h"

using namespace corrfield;
using corr::Dataset;
using geom::Vec3;

namespace {

namespace fs = std::filesystem;

fs::path temp_dir(const std::string& leaf) {
  fs::path d = fs::temp_directory_path() / "corrfield_corr_test" / leaf;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

// Two unit-square models and one singleton set annotating a shared corner.
std::string minimal_json(const std::string& bad_model_ref = "") {
  std::string target = bad_model_ref.empty() ? "b" : bad_model_ref;
  return std::string("{\n"
                     "  \"category\": \"squares\",\n"
                     "  \"symmetry_mode\": \"none\",\n"
                     "  \"models\": [{\"id\": \"a\", \"mesh\": \"a.obj\"},"
                     " {\"id\": \"b\", \"mesh\": \"b.obj\"}],\n"
                     "  \"sets\": [{\"set_id\": 0, \"entries\": [\n"
                     "    {\"model\": \"a\", \"points\": [{\"xyz\": [1, 1, 0]}]},\n"
                     "    {\"model\": \"") +
         target +
         "\", \"points\": [{\"xyz\": [1, 1, 0]}]}\n"
         "  ]}]\n"
         "}\n";
}

void write_square_obj(const fs::path& p) {
  std::ofstream out(p);
  out << "v -1 -1 0\nv 1 -1 0\nv 1 1 0\nv -1 1 0\nf 1 2 3 4\n";
}

fs::path write_minimal(const std::string& leaf, const std::string& json) {
  fs::path dir = temp_dir(leaf);
  write_square_obj(dir / "a.obj");
  write_square_obj(dir / "b.obj");
  std::ofstream(dir / "annotations.json") << json;
  return dir;
}

}  // namespace

TEST_CASE("parse_dataset reads a minimal two-model category") {
  fs::path dir = write_minimal("minimal", minimal_json());
  Dataset ds = corr::parse_dataset(dir / "annotations.json", dir);
  CHECK(ds.category == "squares");
  CHECK(ds.models.size() == 2);
  CHECK(ds.sets.size() == 1);
  CHECK(ds.sets[0].entries.size() == 2);
  CHECK(ds.model_index("b") == 1);
  CHECK(ds.model_index("zzz") == -1);
  // unit square: corner lands exactly on the unit circle after normalization
  const corr::SemanticPoint& p = ds.sets[0].entries.at("a").members[0];
  CHECK(std::abs(p.position.norm() - 1.0) < 1e-12);
}

TEST_CASE("parse_dataset names a dangling model reference") {
  fs::path dir = write_minimal("dangling", minimal_json("ghost"));
  try {
    corr::parse_dataset(dir / "annotations.json", dir);
    CHECK(false);
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("ghost") != std::string::npos);
  }
}

TEST_CASE("parse_dataset rejects a set on fewer than two models") {
  std::string json = minimal_json();
  auto cut = json.find(",\n    {\"model\": \"b\"");
  json = json.substr(0, cut) + "\n  ]}]\n}\n";
  fs::path dir = write_minimal("oneentry", json);
  CHECK_THROWS(corr::parse_dataset(dir / "annotations.json", dir));
}

TEST_CASE("assemble_dataset enforces singleton hyperpoints under mode none") {
  corr::RawCategory raw;
  raw.category = "c";
  raw.symmetry_mode = corr::SymmetryMode::kNone;
  geom::Mesh sq;
  sq.vertices = {Vec3(-1, -1, 0), Vec3(1, -1, 0), Vec3(1, 1, 0), Vec3(-1, 1, 0)};
  sq.faces = {{0, 1, 2}, {0, 2, 3}};
  raw.models = {{"a", sq}, {"b", sq}};
  corr::RawSet rs;
  rs.set_id = 0;
  rs.entries = {{"a", {{Vec3(1, 1, 0)}, {Vec3(-1, -1, 0)}}}, {"b", {{Vec3(1, 1, 0)}}}};
  raw.sets = {rs};
  CHECK_THROWS(corr::assemble_dataset(raw));
  raw.symmetry_mode = corr::SymmetryMode::kCentral;
  CHECK(corr::assemble_dataset(raw).sets[0].entries.at("a").members.size() == 2);
}

TEST_CASE("symmetry mode strings round-trip") {
  for (const char* name : {"none", "central", "rotational", "both"}) {
    corr::SymmetryMode m = corr::symmetry_mode_from_string(name);
    CHECK(corr::to_string(m) == name);
  }
  CHECK_THROWS(corr::symmetry_mode_from_string("diagonal"));
}

TEST_CASE("synthesized categories round-trip through the annotation file") {
  for (const std::string& family : synth::family_names()) {
    fs::path dir = temp_dir("roundtrip_" + family);
    synth::SynthesisResult r = synth::synthesize_category(
        family, 4, 3, 9, corr::SymmetryMode::kBoth, dir);
    Dataset back = corr::parse_dataset(r.annotation_file, dir);
    CHECK(back == r.dataset);
  }
}

TEST_CASE("attach_to_cloud pins annotations and finds nearest points") {
  fs::path dir = temp_dir("attach");
  synth::SynthesisResult r =
      synth::synthesize_category("tables", 3, 4, 2, corr::SymmetryMode::kNone, dir);
  std::map<std::string, geom::PointCloud> clouds;
  std::uint64_t cloud_seed = 100;
  for (const corr::Model& m : r.dataset.models) {
    // pin every annotated point, as the training pipeline does
    std::vector<geom::SurfacePoint> pins;
    for (const auto& set : r.dataset.sets) {
      auto it = set.entries.find(m.id);
      if (it == set.entries.end()) continue;
      for (const auto& member : it->second.members)
        pins.push_back({member.position, member.face_index});
    }
    clouds[m.id] = geom::sample_cloud(m.mesh, 256, pins, cloud_seed++);
  }
  Dataset attached = corr::attach_to_cloud(r.dataset, clouds);
  for (const auto& set : attached.sets)
    for (const auto& [model_id, hp] : set.entries)
      for (const auto& member : hp.members) {
        REQUIRE(member.cloud_index >= 0);
        CHECK(clouds[model_id].points[static_cast<std::size_t>(member.cloud_index)] ==
              member.position);  // pinned -> exact coordinates
      }
}

TEST_CASE("attach_to_cloud matches the brute-force nearest scan") {
  Rng rng(4);
  geom::Mesh ico = geom::normalize_unit_sphere(geom::make_icosphere(2));
  geom::PointCloud cloud = geom::sample_cloud(ico, 400, {}, 7);

  corr::RawCategory raw;
  raw.category = "spheres";
  raw.symmetry_mode = corr::SymmetryMode::kNone;
  raw.models = {{"a", ico}, {"b", ico}};
  corr::RawSet rs;
  rs.set_id = 0;
  Vec3 q = ico.vertices[5];
  rs.entries = {{"a", {{q}}}, {"b", {{q}}}};
  raw.sets = {rs};
  Dataset ds = corr::assemble_dataset(raw);

  Dataset attached = corr::attach_to_cloud(ds, {{"a", cloud}, {"b", cloud}}, 0.2);
  int best = 0;
  for (int i = 1; i < 400; ++i)
    if ((cloud.points[static_cast<std::size_t>(i)] - q).norm() <
        (cloud.points[static_cast<std::size_t>(best)] - q).norm())
      best = i;
  CHECK(attached.sets[0].entries.at("a").members[0].cloud_index == best);

  // an annotation nowhere near the cloud must fail the distance gate
  geom::PointCloud far = cloud;
  for (Vec3& p : far.points) p += Vec3(10, 0, 0);
  CHECK_THROWS(corr::attach_to_cloud(ds, {{"a", far}, {"b", far}}));
}

TEST_CASE("resolve_hyperpoint draws members uniformly") {
  corr::Hyperpoint h;
  h.members.resize(2);
  h.members[0].position = Vec3(1, 0, 0);
  h.members[1].position = Vec3(0, 1, 0);
  Rng rng(13);
  int first = 0;
  for (int i = 0; i < 10000; ++i)
    if (corr::resolve_hyperpoint(h, rng).position == h.members[0].position) ++first;
  CHECK(first > 5000 - 195);  // 3.9 sigma
  CHECK(first < 5000 + 195);

  corr::Hyperpoint single;
  single.members.resize(1);
  Rng a(1), b(1);
  CHECK(&corr::resolve_hyperpoint(single, a) == &single.members[0]);
  CHECK(corr::resolve_hyperpoint(h, a).position == corr::resolve_hyperpoint(h, b).position);
}

TEST_CASE("split_models partitions 70/15/15 with at least one val/test model") {
  for (int n : {3, 4, 7, 10, 20, 40, 100}) {
    corr::RawCategory raw;
    raw.category = "c";
    geom::Mesh sq;
    sq.vertices = {Vec3(-1, -1, 0), Vec3(1, -1, 0), Vec3(1, 1, 0), Vec3(-1, 1, 0)};
    sq.faces = {{0, 1, 2}, {0, 2, 3}};
    for (int i = 0; i < n; ++i) raw.models.emplace_back("m" + std::to_string(i), sq);
    corr::RawSet rs;
    rs.set_id = 0;
    rs.entries = {{"m0", {{Vec3(1, 1, 0)}}}, {"m1", {{Vec3(1, 1, 0)}}}};
    raw.sets = {rs};
    Dataset ds = corr::assemble_dataset(raw);

    corr::Split s = corr::split_models(ds, 5);
    int expected_val = std::max(1, (15 * n) / 100);
    CHECK(static_cast<int>(s.val.size()) == expected_val);
    CHECK(static_cast<int>(s.test.size()) == expected_val);
    CHECK(s.train.size() + s.val.size() + s.test.size() == static_cast<std::size_t>(n));

    std::set<std::string> seen;
    for (const auto* part : {&s.train, &s.val, &s.test})
      for (const std::string& id : *part) CHECK(seen.insert(id).second);
    CHECK(static_cast<int>(seen.size()) == n);

    corr::Split again = corr::split_models(ds, 5);
    CHECK(again.train == s.train);
    CHECK(again.val == s.val);
    CHECK(again.test == s.test);
  }
}

TEST_CASE("split files round-trip") {
  corr::Split s;
  s.train = {"a", "b"};
  s.val = {"c"};
  s.test = {"d"};
  fs::path p = temp_dir("split") / "split.json";
  corr::write_split_json(p, s);
  corr::Split back = corr::parse_split_json(p);
  CHECK(back.train == s.train);
  CHECK(back.val == s.val);
  CHECK(back.test == s.test);
  CHECK_THROWS(corr::parse_split_json(temp_dir("split") / "missing.json"));
}

namespace {

// Hand-buildable fixture: models are path graphs where geodesic distances are
// chosen directly, so set_distance has a closed form.
struct LineFixture {
  Dataset ds;
  std::map<std::string, geom::DistanceMatrix> geodesics;

  // per model: annotated node index per set (singletons), unit edge weights
  LineFixture(const std::vector<std::string>& models,
              const std::vector<std::map<std::string, int>>& set_nodes, int n_nodes) {
    ds.category = "lines";
    ds.symmetry_mode = corr::SymmetryMode::kNone;
    for (const std::string& id : models) {
      corr::Model m;
      m.id = id;
      ds.models.push_back(std::move(m));
    }
    geom::SurfaceGraph g;
    g.node_count = n_nodes;
    for (int i = 0; i + 1 < n_nodes; ++i) g.edges.push_back({i, i + 1, 1.0});
    std::vector<int> sources(static_cast<std::size_t>(n_nodes));
    for (int i = 0; i < n_nodes; ++i) sources[static_cast<std::size_t>(i)] = i;
    for (const std::string& id : models)
      geodesics.emplace(id, geom::geodesics_from(g, sources));
    for (std::size_t s = 0; s < set_nodes.size(); ++s) {
      corr::CorrespondenceSet cs;
      cs.set_id = static_cast<int>(s);
      for (const auto& [model, node] : set_nodes[s]) {
        corr::SemanticPoint p;
        p.cloud_index = node;
        cs.entries[model] = corr::Hyperpoint{{p}};
      }
      ds.sets.push_back(std::move(cs));
    }
  }
};

}  // namespace

TEST_CASE("set_distance on singletons is the plain geodesic") {
  LineFixture fx({"a", "b"}, {{{"a", 0}, {"b", 0}}, {{"a", 3}, {"b", 0}}}, 6);
  // only model "a" carries both sets at distinct nodes 0 and 3
  double d = corr::set_distance(fx.ds.sets[0], fx.ds.sets[1], fx.geodesics);
  CHECK(d == doctest::Approx(1.5).epsilon(1e-12));  // mean of 3 (on a) and 0 (on b)
  CHECK(corr::set_distance(fx.ds.sets[1], fx.ds.sets[0], fx.geodesics) == d);
}

TEST_CASE("set_distance averages over shared models") {
  // distances 2 on model a, 4 on model b -> mean 3
  LineFixture fx({"a", "b"}, {{{"a", 0}, {"b", 0}}, {{"a", 2}, {"b", 4}}}, 6);
  CHECK(corr::set_distance(fx.ds.sets[0], fx.ds.sets[1], fx.geodesics) ==
        doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("set_distance requires a shared model") {
  LineFixture fx({"a", "b"}, {{{"a", 0}, {"a", 0}}, {{"b", 2}, {"b", 2}}}, 6);
  // fabricate disjoint coverage: set 0 only on a, set 1 only on b
  fx.ds.sets[0].entries.erase("b");
  fx.ds.sets[1].entries.erase("a");
  CHECK_THROWS(corr::set_distance(fx.ds.sets[0], fx.ds.sets[1], fx.geodesics));
}

TEST_CASE("set_distance equals a brute-force double loop on synthetic data") {
  fs::path dir = temp_dir("brute");
  synth::SynthesisResult r =
      synth::synthesize_category("mugs", 4, 6, 21, corr::SymmetryMode::kNone, dir);
  pipeline::PrepareOptions opt;
  opt.n_points = 200;
  opt.threads = 2;
  pipeline::PreparedCategory prep = pipeline::prepare_category(r.dataset, opt);

  for (std::size_t i = 0; i < prep.dataset.sets.size(); ++i) {
    for (std::size_t j = i + 1; j < prep.dataset.sets.size(); ++j) {
      const auto& si = prep.dataset.sets[i];
      const auto& sj = prep.dataset.sets[j];
      double total = 0.0;
      int shared = 0;
      for (const corr::Model& m : prep.dataset.models) {
        auto ei = si.entries.find(m.id);
        auto ej = sj.entries.find(m.id);
        if (ei == si.entries.end() || ej == sj.entries.end()) continue;
        double pair_sum = 0.0;
        int pairs = 0;
        for (const auto& p : ei->second.members)
          for (const auto& q : ej->second.members) {
            pair_sum += prep.geodesics.at(m.id).from(p.cloud_index, q.cloud_index);
            ++pairs;
          }
        total += pair_sum / pairs;
        ++shared;
      }
      double expected = total / shared;
      CHECK(corr::set_distance(si, sj, prep.geodesics) ==
            doctest::Approx(expected).epsilon(1e-12));
      CHECK(*prep.margins.between(static_cast<int>(i), static_cast<int>(j)) ==
            doctest::Approx(expected).epsilon(1e-12));
    }
  }
}

TEST_CASE("margins are symmetric, nonnegative and positive for distinct landmarks") {
  fs::path dir = temp_dir("margins");
  synth::SynthesisResult r =
      synth::synthesize_category("tables", 4, 6, 3, corr::SymmetryMode::kCentral, dir);
  pipeline::PrepareOptions opt;
  opt.n_points = 200;
  opt.threads = 2;
  pipeline::PreparedCategory prep = pipeline::prepare_category(r.dataset, opt);
  int n = static_cast<int>(prep.dataset.sets.size());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      auto d = prep.margins.between(i, j);
      REQUIRE(d.has_value());
      CHECK(*d == *prep.margins.between(j, i));
      CHECK(*d > 0.0);
    }
  CHECK(!prep.margins.between(0, 999).has_value());
}

TEST_CASE("crop_partial removes round((1-keep)*n) points around a seed") {
  Rng rng(6);
  geom::PointCloud cloud;
  cloud.model_id = "c";
  for (int i = 0; i < 100; ++i)
    cloud.points.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
  cloud.source_face.assign(100, -1);

  corr::CropResult r = corr::crop_partial(cloud, 0.99, 8);
  CHECK(r.cloud.points.size() == 99);
  CHECK(r.kept.size() == 99);

  corr::CropResult r7 = corr::crop_partial(cloud, 0.7, 8);
  CHECK(r7.cloud.points.size() == 70);
  // kept entries name surviving original indices, in order
  CHECK(std::is_sorted(r7.kept.begin(), r7.kept.end()));
  for (std::size_t i = 0; i < r7.kept.size(); ++i)
    CHECK(r7.cloud.points[i] ==
          cloud.points[static_cast<std::size_t>(r7.kept[static_cast<std::size_t>(i)])]);

  corr::CropResult again = corr::crop_partial(cloud, 0.7, 8);
  CHECK(again.kept == r7.kept);

  CHECK_THROWS(corr::crop_partial(cloud, 0.0, 1));
  CHECK_THROWS(corr::crop_partial(cloud, 1.0, 1));
  CHECK_THROWS(corr::crop_partial(cloud, -0.2, 1));
}

TEST_CASE("crop removes a contiguous patch: cut points are nearer the seed than survivors") {
  Rng rng(44);
  geom::PointCloud cloud;
  cloud.model_id = "c";
  for (int i = 0; i < 200; ++i)
    cloud.points.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
  cloud.source_face.assign(200, -1);
  corr::CropResult r = corr::crop_partial_around(cloud, 17, 0.6);
  std::set<int> kept(r.kept.begin(), r.kept.end());
  const Vec3& seed = cloud.points[17];
  double max_cut = 0.0, min_kept = 1e300;
  for (int i = 0; i < 200; ++i) {
    double d = (cloud.points[static_cast<std::size_t>(i)] - seed).norm();
    if (kept.count(i))
      min_kept = std::min(min_kept, d);
    else
      max_cut = std::max(max_cut, d);
  }
  CHECK(max_cut <= min_kept);
  CHECK(!kept.count(17));  // the seed itself is removed
}

TEST_CASE("cropping a table around a leg foot removes the foot annotation") {
  fs::path dir = temp_dir("legcrop");
  synth::SynthesisResult r = synth::synthesize_category(
      "tables", 3, 10, 12, corr::SymmetryMode::kNone, dir);
  // catalog: 7 = a leg foot, 0 = the tabletop center
  std::map<std::string, geom::PointCloud> clouds;
  std::uint64_t seed = 5;
  for (const corr::Model& m : r.dataset.models) {
    std::vector<geom::SurfacePoint> pins;
    for (const auto& set : r.dataset.sets)
      for (const auto& member : set.entries.at(m.id).members)
        pins.push_back({member.position, member.face_index});
    clouds[m.id] = geom::sample_cloud(m.mesh, 512, pins, seed++);
  }
  Dataset attached = corr::attach_to_cloud(r.dataset, clouds);
  const std::string& id = attached.models[0].id;
  const geom::PointCloud& cloud = clouds[id];

  int foot_index = attached.sets[7].entries.at(id).members[0].cloud_index;
  int top_index = attached.sets[0].entries.at(id).members[0].cloud_index;
  corr::CropResult crop = corr::crop_partial_around(cloud, foot_index, 0.7);
  std::set<int> kept(crop.kept.begin(), crop.kept.end());
  CHECK(!kept.count(foot_index));
  CHECK(kept.count(top_index));
}
