#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "corrfield/geometry.hpp"
#include "corrfield/rng.hpp"

namespace corrfield::corr {

using geom::Vec3;

enum class SymmetryMode { kNone, kCentral, kRotational, kBoth };

SymmetryMode symmetry_mode_from_string(const std::string& s);
std::string to_string(SymmetryMode mode);

// One annotated location on one model. cloud_index is -1 until the point has
// been attached to a sampled cloud.
struct SemanticPoint {
  Vec3 position = Vec3::Zero();           // after unit-sphere normalization
  int face_index = -1;                    // mesh face, -1 if absent
  std::optional<Eigen::Vector2d> uv;
  std::optional<Vec3> rgb;
  int cloud_index = -1;

  bool operator==(const SemanticPoint& o) const;
};

// The annotation of one correspondence set on one model: one point, or
// several symmetry-equivalent points that are semantically indistinguishable.
struct Hyperpoint {
  std::vector<SemanticPoint> members;  // size >= 1

  bool operator==(const Hyperpoint& o) const { return members == o.members; }
};

// A named group of annotations marking "the same" semantic spot across models.
struct CorrespondenceSet {
  int set_id = 0;
  std::map<std::string, Hyperpoint> entries;  // model id -> annotation

  bool operator==(const CorrespondenceSet& o) const {
    return set_id == o.set_id && entries == o.entries;
  }
};

struct Model {
  std::string id;
  geom::Mesh mesh;  // unit-sphere normalized
};

struct Dataset {
  std::string category;
  SymmetryMode symmetry_mode = SymmetryMode::kNone;
  std::vector<Model> models;              // dataset order is canonical
  std::vector<CorrespondenceSet> sets;    // sorted by set_id

  int model_index(const std::string& id) const;  // -1 if absent
  const Model& model(const std::string& id) const;
};

bool operator==(const Dataset& a, const Dataset& b);

struct Split {
  std::vector<std::string> train, val, test;
};

struct CropResult {
  geom::PointCloud cloud;
  std::vector<int> kept;  // original index of each surviving point
};

// Pairwise set-to-set geodesic margins. NaN marks pairs with no shared model
// (no margin can be defined for them).
struct MarginTable {
  std::vector<int> set_ids;
  Eigen::MatrixXd margin;

  int index_of(int set_id) const;
  // Margin between two sets, or nullopt when unavailable.
  std::optional<double> between(int set_i, int set_j) const;
};

// --- ingestion ---------------------------------------------------------------

// Intermediate form shared by the JSON parser and the synthetic generators:
// raw (un-normalized) meshes and annotation coordinates.
struct RawPoint {
  Vec3 position = Vec3::Zero();
  int face_index = -1;
  std::optional<Eigen::Vector2d> uv;
  std::optional<Vec3> rgb;
};
struct RawEntry {
  std::string model_id;
  std::vector<RawPoint> points;
};
struct RawSet {
  int set_id = 0;
  std::vector<RawEntry> entries;
};
struct RawCategory {
  std::string category;
  SymmetryMode symmetry_mode = SymmetryMode::kNone;
  std::vector<std::pair<std::string, geom::Mesh>> models;  // id, raw mesh
  std::vector<RawSet> sets;
};

// Normalize meshes and annotation coordinates into a validated Dataset.
// Throws on duplicate ids, dangling model references, sets spanning < 2
// models, empty hyperpoints, invalid face indices, positions outside the unit
// ball (beyond 1e-6) after normalization, or non-singleton hyperpoints under
// symmetry_mode "none".
Dataset assemble_dataset(RawCategory raw);

// Parse an annotation JSON file; referenced OBJ meshes are loaded relative to
// `geometry_dir`. Errors name the offending file/field.
Dataset parse_dataset(const std::filesystem::path& annotation_file,
                      const std::filesystem::path& geometry_dir);

// Write annotations (raw coordinates) in the same JSON schema.
void write_annotation_json(const std::filesystem::path& path, const RawCategory& raw);

// --- operations ---------------------------------------------------------------

// Bind every annotated point to its nearest cloud point (ties -> lowest
// index). Pinned points match at distance zero. Throws if any annotation is
// farther than `max_distance` from its model's cloud or if a model's cloud is
// missing.
Dataset attach_to_cloud(const Dataset& dataset,
                        const std::map<std::string, geom::PointCloud>& clouds,
                        double max_distance = 0.05);

// Pick one member of a hyperpoint uniformly at random.
const SemanticPoint& resolve_hyperpoint(const Hyperpoint& h, Rng& rng);

// Shuffle model ids and partition roughly 70/15/15; val and test receive at
// least one model each. Requires >= 3 models.
Split split_models(const Dataset& dataset, std::uint64_t seed);

void write_split_json(const std::filesystem::path& path, const Split& split);
Split parse_split_json(const std::filesystem::path& path);

// Mean over shared models of the mean pairwise geodesic distance between the
// two sets' hyperpoint members. `geodesics` maps model id to a DistanceMatrix
// whose sources include every annotated cloud index on that model. Throws if
// the sets share no model or are not attached.
double set_distance(const CorrespondenceSet& ci, const CorrespondenceSet& cj,
                    const std::map<std::string, geom::DistanceMatrix>& geodesics);

// set_distance for every pair of sets that shares at least one model.
MarginTable compute_margins(const Dataset& dataset,
                            const std::map<std::string, geom::DistanceMatrix>& geodesics);

// Remove the floor/round((1-keep_fraction)*n) points nearest to a random seed
// point (a contiguous surface patch), keeping the rest. keep_fraction must be
// in (0, 1).
CropResult crop_partial(const geom::PointCloud& cloud, double keep_fraction,
                        std::uint64_t seed);
// Deterministic variant with an explicit crop center.
CropResult crop_partial_around(const geom::PointCloud& cloud, int seed_index,
                               double keep_fraction);

}  // namespace corrfield::corr
