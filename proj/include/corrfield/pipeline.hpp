#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "corrfield/corrset.hpp"
#include "corrfield/embedding.hpp"
#include "corrfield/geometry.hpp"
#include "corrfield/metrics.hpp"

namespace corrfield::pipeline {

struct PrepareOptions {
  int n_points = 2048;
  int knn = 8;
  std::uint64_t cloud_seed = 0;
  int threads = 0;
};

// Everything derived from a dataset that training and evaluation share:
// sampled clouds (annotations pinned), proximity graphs, geodesics from every
// annotated point, and the set-to-set margin table.
struct PreparedCategory {
  corr::Dataset dataset;  // attached to the clouds below
  std::map<std::string, geom::PointCloud> clouds;
  std::map<std::string, geom::SurfaceGraph> graphs;
  std::map<std::string, geom::DistanceMatrix> geodesics;
  corr::MarginTable margins;
  PrepareOptions options;
};

PreparedCategory prepare_category(const corr::Dataset& dataset,
                                  const PrepareOptions& options);

metrics::EvalInputs eval_inputs(const PreparedCategory& prepared,
                                const std::vector<std::string>& split);

// Free table with one row per cloud point, slots in dataset model order (the
// convention make_batch uses).
embed::EmbeddingModel make_free_table_for(const PreparedCategory& prepared,
                                          int dimension, std::uint64_t seed);

// Map an N x D embedding matrix to RGB colors via its top 3 principal
// components (each scaled to [0, 255]). `basis` supplies the PCA basis so
// several clouds can share one color space; pass the same matrix to use its
// own.
Eigen::Matrix<int, Eigen::Dynamic, 3> pca_colors(const Eigen::MatrixXd& embeddings,
                                                 const Eigen::MatrixXd& basis);

// ASCII PLY with per-vertex uchar colors.
void write_colored_ply(const std::filesystem::path& path,
                       const std::vector<geom::Vec3>& points,
                       const Eigen::Matrix<int, Eigen::Dynamic, 3>& colors);

}  // namespace corrfield::pipeline
