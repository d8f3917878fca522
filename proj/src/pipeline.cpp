#include "corrfield/pipeline.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <stdexcept>

#include "corrfield/rng.hpp"

namespace corrfield::pipeline {

namespace {
[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }
}  // namespace

PreparedCategory prepare_category(const corr::Dataset& dataset,
                                  const PrepareOptions& options) {
  PreparedCategory out;
  out.options = options;
  Rng root(options.cloud_seed);

  for (std::size_t i = 0; i < dataset.models.size(); ++i) {
    const corr::Model& model = dataset.models[i];
    // Pin every annotated member so retrieval targets exist exactly.
    std::vector<geom::SurfacePoint> pinned;
    for (const auto& cs : dataset.sets) {
      auto it = cs.entries.find(model.id);
      if (it == cs.entries.end()) continue;
      for (const auto& member : it->second.members)
        pinned.push_back({member.position, member.face_index});
    }
    std::uint64_t seed = root.fork(1000 + static_cast<std::uint64_t>(i)).next_u64();
    geom::PointCloud cloud = geom::sample_cloud(model.mesh, options.n_points, pinned, seed);
    out.graphs.emplace(model.id, geom::build_graph(cloud, options.knn));
    out.clouds.emplace(model.id, std::move(cloud));
  }

  out.dataset = corr::attach_to_cloud(dataset, out.clouds);

  for (const auto& model : out.dataset.models) {
    std::set<int> source_set;
    for (const auto& cs : out.dataset.sets) {
      auto it = cs.entries.find(model.id);
      if (it == cs.entries.end()) continue;
      for (const auto& member : it->second.members) source_set.insert(member.cloud_index);
    }
    std::vector<int> sources(source_set.begin(), source_set.end());
    if (sources.empty()) {
      out.geodesics.emplace(model.id, geom::DistanceMatrix{});
      continue;
    }
    out.geodesics.emplace(model.id,
                          geom::geodesics_from(out.graphs.at(model.id), sources,
                                               options.threads));
  }

  out.margins = corr::compute_margins(out.dataset, out.geodesics);
  return out;
}

metrics::EvalInputs eval_inputs(const PreparedCategory& prepared,
                                const std::vector<std::string>& split) {
  metrics::EvalInputs inputs;
  inputs.dataset = &prepared.dataset;
  inputs.clouds = &prepared.clouds;
  inputs.geodesics = &prepared.geodesics;
  inputs.split = split;
  return inputs;
}

embed::EmbeddingModel make_free_table_for(const PreparedCategory& prepared,
                                          int dimension, std::uint64_t seed) {
  std::vector<embed::TableSpec> tables;
  for (const auto& model : prepared.dataset.models)
    tables.push_back({model.id,
                      static_cast<int>(prepared.clouds.at(model.id).points.size())});
  return embed::EmbeddingModel::make_free_table(tables, dimension, seed);
}

Eigen::Matrix<int, Eigen::Dynamic, 3> pca_colors(const Eigen::MatrixXd& embeddings,
                                                 const Eigen::MatrixXd& basis) {
  if (embeddings.cols() != basis.cols()) fail("pca_colors: dimension mismatch");
  if (basis.rows() < 2) fail("pca_colors: need at least 2 rows for a basis");
  Eigen::RowVectorXd mean = basis.colwise().mean();
  Eigen::MatrixXd centered = basis.rowwise() - mean;
  Eigen::MatrixXd cov = centered.transpose() * centered /
                        static_cast<double>(basis.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) fail("pca_colors: eigendecomposition failed");

  long d = embeddings.cols();
  int n_comp = static_cast<int>(std::min<long>(3, d));
  Eigen::MatrixXd axes(d, 3);
  for (int c = 0; c < 3; ++c) {
    if (c < n_comp) {
      // eigenvalues ascend; take the largest ones. Fix the sign so the output
      // does not depend on the solver's convention.
      Eigen::VectorXd v = solver.eigenvectors().col(d - 1 - c);
      long imax = 0;
      v.cwiseAbs().maxCoeff(&imax);
      if (v[imax] < 0) v = -v;
      axes.col(c) = v;
    } else {
      axes.col(c).setZero();
    }
  }
  Eigen::MatrixXd proj = (embeddings.rowwise() - mean) * axes;
  // Scale by the basis projection so two clouds colored against the same
  // basis land in the same color space.
  Eigen::MatrixXd ref = (&embeddings == &basis) ? proj : (centered * axes).eval();
  Eigen::Matrix<int, Eigen::Dynamic, 3> colors(embeddings.rows(), 3);
  for (int c = 0; c < 3; ++c) {
    double lo = ref.col(c).minCoeff();
    double hi = ref.col(c).maxCoeff();
    double span = hi - lo;
    for (long i = 0; i < proj.rows(); ++i) {
      double t = span > 0 ? (proj(i, c) - lo) / span : 0.5;
      t = std::clamp(t, 0.0, 1.0);
      colors(i, c) = static_cast<int>(std::lround(t * 255.0));
    }
  }
  return colors;
}

void write_colored_ply(const std::filesystem::path& path,
                       const std::vector<geom::Vec3>& points,
                       const Eigen::Matrix<int, Eigen::Dynamic, 3>& colors) {
  if (static_cast<long>(points.size()) != colors.rows())
    fail("write_colored_ply: points/colors size mismatch");
  std::ofstream out(path);
  if (!out) fail("cannot write PLY file: " + path.string());
  out << "ply\nformat ascii 1.0\nelement vertex " << points.size()
      << "\nproperty float x\nproperty float y\nproperty float z\n"
         "property uchar red\nproperty uchar green\nproperty uchar blue\n"
         "end_header\n";
  char buf[128];
  for (std::size_t i = 0; i < points.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g %d %d %d\n", points[i].x(),
                  points[i].y(), points[i].z(), colors(static_cast<long>(i), 0),
                  colors(static_cast<long>(i), 1), colors(static_cast<long>(i), 2));
    out << buf;
  }
  if (!out) fail("failed writing PLY file: " + path.string());
}

}  // namespace corrfield::pipeline
