#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "corrfield/corrset.hpp"

namespace corrfield::synth {

using geom::Vec3;

// Axis-aligned bounding box of one named part, in the same normalized
// coordinates as the Dataset meshes.
struct PartBox {
  std::string name;
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Zero();

  bool contains(const Vec3& p, double tol = 1e-9) const {
    return (p.array() >= lo.array() - tol).all() && (p.array() <= hi.array() + tol).all();
  }
};

// Ground-truth construction record for one generated model: which part each
// annotated member lies on, and where the parts are.
struct ModelRecipe {
  std::string model_id;
  std::vector<PartBox> parts;
  // member_parts[set][member] = part name, aligned with the dataset annotation
  std::vector<std::vector<std::string>> member_parts;

  const PartBox& part(const std::string& name) const;
};

struct SynthesisResult {
  corr::Dataset dataset;
  std::vector<ModelRecipe> recipes;         // one per model, dataset order
  std::filesystem::path annotation_file;
  std::vector<std::string> files;           // everything written, relative names
};

// Families: "tables" (box top + 4 legs, 2-fold symmetry about z), "mugs"
// (cylinder body + half-torus handle, no proper symmetry), "rockets" (cone +
// cylinder + 4 fins, 4-fold symmetry about z).
std::vector<std::string> family_names();

// Number of correspondence sets a family's landmark catalog supports.
int family_catalog_size(const std::string& family);

// Generate n_models randomized instances of a family with the first n_sets
// catalog landmarks annotated (exactly, tracked through the per-model
// dimension changes). Writes one OBJ per model, annotations.json and
// manifest.json into out_dir, and returns the normalized in-memory dataset.
// Identical arguments produce byte-identical files.
SynthesisResult synthesize_category(const std::string& family, int n_models, int n_sets,
                                    std::uint64_t seed, corr::SymmetryMode mode,
                                    const std::filesystem::path& out_dir);

}  // namespace corrfield::synth
