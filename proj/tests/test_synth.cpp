#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "corrfield/corrset.hpp"
#include "corrfield/pipeline.hpp"
#include "corrfield/synth.hpp"
#include "doctest.h"

using namespace corrfield;
using geom::Vec3;

namespace {

namespace fs = std::filesystem;

fs::path temp_dir(const std::string& leaf) {
  fs::path d = fs::temp_directory_path() / "corrfield_synth_test" / leaf;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

TEST_CASE("synthesize_category meets its size contract") {
  fs::path dir = temp_dir("contract");
  synth::SynthesisResult r =
      synth::synthesize_category("tables", 3, 4, 7, corr::SymmetryMode::kNone, dir);
  CHECK(r.dataset.models.size() == 3);
  CHECK(r.dataset.sets.size() == 4);
  for (const auto& set : r.dataset.sets) CHECK(set.entries.size() == 3);
  CHECK(fs::exists(r.annotation_file));
  CHECK(fs::exists(dir / "manifest.json"));
  for (const corr::Model& m : r.dataset.models) CHECK(fs::exists(dir / (m.id + ".obj")));
  CHECK(r.recipes.size() == 3);
}

TEST_CASE("synthesize_category validates its arguments") {
  fs::path dir = temp_dir("args");
  CHECK_THROWS(synth::synthesize_category("pyramids", 3, 2, 0,
                                          corr::SymmetryMode::kNone, dir));
  CHECK_THROWS(synth::synthesize_category("tables", 2, 2, 0,
                                          corr::SymmetryMode::kNone, dir));
  CHECK_THROWS(synth::synthesize_category("tables", 3, 1, 0,
                                          corr::SymmetryMode::kNone, dir));
  CHECK_THROWS(synth::synthesize_category(
      "tables", 3, synth::family_catalog_size("tables") + 1, 0,
      corr::SymmetryMode::kNone, dir));
}

TEST_CASE("family catalog is stable") {
  CHECK(synth::family_names() == std::vector<std::string>{"tables", "mugs", "rockets"});
  for (const std::string& f : synth::family_names())
    CHECK(synth::family_catalog_size(f) >= 6);
  CHECK_THROWS(synth::family_catalog_size("chairs"));
}

TEST_CASE("identical arguments produce byte-identical files") {
  fs::path d1 = temp_dir("det1"), d2 = temp_dir("det2");
  synth::SynthesisResult a =
      synth::synthesize_category("mugs", 4, 5, 33, corr::SymmetryMode::kCentral, d1);
  synth::SynthesisResult b =
      synth::synthesize_category("mugs", 4, 5, 33, corr::SymmetryMode::kCentral, d2);
  REQUIRE(a.files == b.files);
  for (const std::string& name : a.files) CHECK(slurp(d1 / name) == slurp(d2 / name));
  // a different seed must change the geometry
  synth::SynthesisResult c =
      synth::synthesize_category("mugs", 4, 5, 34, corr::SymmetryMode::kCentral, d2);
  CHECK(slurp(d1 / a.files[0]) != slurp(d2 / c.files[0]));
}

TEST_CASE("generated meshes are normalized and well-formed") {
  for (const std::string& family : synth::family_names()) {
    fs::path dir = temp_dir("meshes_" + family);
    synth::SynthesisResult r =
        synth::synthesize_category(family, 3, 3, 1, corr::SymmetryMode::kNone, dir);
    for (const corr::Model& m : r.dataset.models) {
      double max_norm = 0.0;
      for (const Vec3& v : m.mesh.vertices) max_norm = std::max(max_norm, v.norm());
      CHECK(std::abs(max_norm - 1.0) < 1e-12);
      for (const auto& f : m.mesh.faces) {
        CHECK(f[0] != f[1]);
        CHECK(f[1] != f[2]);
        CHECK(f[0] != f[2]);
        for (int idx : f) {
          CHECK(idx >= 0);
          CHECK(idx < static_cast<int>(m.mesh.vertices.size()));
        }
      }
    }
  }
}

TEST_CASE("every annotated member lies on its intended part") {
  for (const std::string& family : synth::family_names()) {
    for (corr::SymmetryMode mode :
         {corr::SymmetryMode::kNone, corr::SymmetryMode::kBoth}) {
      fs::path dir = temp_dir("parts_" + family + corr::to_string(mode));
      int n_sets = synth::family_catalog_size(family);
      synth::SynthesisResult r = synth::synthesize_category(family, 3, n_sets, 5, mode, dir);
      for (std::size_t mi = 0; mi < r.dataset.models.size(); ++mi) {
        const synth::ModelRecipe& recipe = r.recipes[mi];
        const std::string& id = r.dataset.models[mi].id;
        REQUIRE(recipe.model_id == id);
        for (std::size_t s = 0; s < r.dataset.sets.size(); ++s) {
          const corr::Hyperpoint& hp = r.dataset.sets[s].entries.at(id);
          REQUIRE(hp.members.size() == recipe.member_parts[s].size());
          for (std::size_t k = 0; k < hp.members.size(); ++k) {
            const synth::PartBox& box = recipe.part(recipe.member_parts[s][k]);
            CHECK(box.contains(hp.members[k].position, 1e-6));
          }
        }
      }
      CHECK_THROWS(r.recipes[0].part("no-such-part"));
    }
  }
}

TEST_CASE("central symmetry doubles off-axis landmarks on tables") {
  fs::path dir = temp_dir("sym_tables");
  int n_sets = synth::family_catalog_size("tables");
  synth::SynthesisResult r =
      synth::synthesize_category("tables", 3, n_sets, 5, corr::SymmetryMode::kCentral, dir);
  const std::string& id = r.dataset.models[0].id;
  bool saw_pair = false, saw_singleton = false;
  for (const auto& set : r.dataset.sets) {
    const corr::Hyperpoint& hp = set.entries.at(id);
    if (hp.members.size() == 1) {
      saw_singleton = true;  // on-axis landmark (e.g. the top center)
      continue;
    }
    REQUIRE(hp.members.size() == 2);
    saw_pair = true;
    // members are 180-degree copies about the z axis
    const Vec3 &a = hp.members[0].position, &b = hp.members[1].position;
    CHECK(std::abs(a.x() + b.x()) < 1e-9);
    CHECK(std::abs(a.y() + b.y()) < 1e-9);
    CHECK(std::abs(a.z() - b.z()) < 1e-9);
  }
  CHECK(saw_pair);
  CHECK(saw_singleton);
}

TEST_CASE("rotational symmetry yields 4-member orbits on rockets") {
  fs::path dir = temp_dir("sym_rockets");
  synth::SynthesisResult r = synth::synthesize_category(
      "rockets", 3, 6, 5, corr::SymmetryMode::kRotational, dir);
  const std::string& id = r.dataset.models[0].id;
  bool saw_orbit = false;
  for (const auto& set : r.dataset.sets) {
    const corr::Hyperpoint& hp = set.entries.at(id);
    if (hp.members.size() == 1) continue;
    REQUIRE(hp.members.size() == 4);
    saw_orbit = true;
    // every member has the same radius and height; headings step by 90 degrees
    double r0 = std::hypot(hp.members[0].position.x(), hp.members[0].position.y());
    for (const auto& m : hp.members) {
      CHECK(std::hypot(m.position.x(), m.position.y()) == doctest::Approx(r0).epsilon(1e-9));
      CHECK(m.position.z() == doctest::Approx(hp.members[0].position.z()).epsilon(1e-9));
    }
  }
  CHECK(saw_orbit);
}

TEST_CASE("mugs have no symmetry copies in any mode") {
  for (corr::SymmetryMode mode : {corr::SymmetryMode::kNone, corr::SymmetryMode::kCentral,
                                  corr::SymmetryMode::kRotational,
                                  corr::SymmetryMode::kBoth}) {
    fs::path dir = temp_dir("sym_mugs_" + corr::to_string(mode));
    synth::SynthesisResult r = synth::synthesize_category("mugs", 3, 4, 5, mode, dir);
    for (const auto& set : r.dataset.sets)
      for (const auto& [id, hp] : set.entries) CHECK(hp.members.size() == 1);
  }
}

TEST_CASE("a mug handle is geodesically nearer the rim than the base") {
  fs::path dir = temp_dir("mug_margins");
  synth::SynthesisResult r =
      synth::synthesize_category("mugs", 4, 6, 17, corr::SymmetryMode::kNone, dir);
  pipeline::PrepareOptions opt;
  opt.n_points = 300;
  opt.threads = 2;
  pipeline::PreparedCategory prep = pipeline::prepare_category(r.dataset, opt);
  // catalog: 0 = top of the handle, 1 = rim above the handle, 3 = base center
  double handle_to_base = *prep.margins.between(0, 3);
  double rim_to_handle = *prep.margins.between(1, 0);
  CHECK(handle_to_base > rim_to_handle);
}

TEST_CASE("annotation colors tag sets consistently across models") {
  fs::path dir = temp_dir("colors");
  synth::SynthesisResult r =
      synth::synthesize_category("rockets", 3, 5, 2, corr::SymmetryMode::kNone, dir);
  for (const auto& set : r.dataset.sets) {
    std::optional<Vec3> color;
    for (const auto& [id, hp] : set.entries)
      for (const auto& m : hp.members) {
        REQUIRE(m.rgb.has_value());
        if (!color)
          color = *m.rgb;
        else
          CHECK(*m.rgb == *color);
      }
  }
}
