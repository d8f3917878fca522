#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "corrfield/embedding.hpp"
#include "corrfield/geometry.hpp"
#include "corrfield/rng.hpp"

namespace corrfield::reg {

using geom::Vec3;

struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  RigidTransform inverse() const;
};

// Perturbation difficulty: rotation angle uniform in [0, max_angle_deg]
// about a uniformly random axis, translation uniform in the ball of radius
// max_translation.
struct PerturbLevel {
  std::string name;
  double max_angle_deg = 0.0;
  double max_translation = 0.0;
};

// "easy" (10 deg, 0.1), "medium" (20 deg, 0.3), "hard" (45 deg, 0.5).
PerturbLevel perturb_level(const std::string& name);

// Returns the perturbed cloud and the ground-truth transform that produced it.
std::pair<geom::PointCloud, RigidTransform> perturb(const geom::PointCloud& cloud,
                                                    const PerturbLevel& level, Rng& rng);

struct Correspondence {
  int src = 0;
  int tgt = 0;
};

// Mutual nearest neighbors in embedding space between two clouds (each
// subsampled to at most max_points by index stride). Requires a model that
// can embed arbitrary points (coord_mlp); throws for a free table.
std::vector<Correspondence> embedding_correspondences(const geom::PointCloud& src,
                                                      const geom::PointCloud& tgt,
                                                      const embed::EmbeddingModel& model,
                                                      int max_points = 512);

// Least-squares rigid alignment (SVD orthogonal Procrustes with reflection
// guard). Requires >= 3 pairs.
RigidTransform kabsch(const std::vector<Vec3>& src, const std::vector<Vec3>& dst);

struct RansacResult {
  RigidTransform transform;
  int inliers = 0;
};

// RANSAC over 3-point samples: collinear samples are rejected, the transform
// with the most inliers (residual < inlier_threshold) wins, first-found wins
// ties, and the final transform is refit on the best inlier set. Throws if
// fewer than 3 correspondences are given or every sample was degenerate.
RansacResult ransac_align(const std::vector<Correspondence>& corr,
                          const std::vector<Vec3>& src_points,
                          const std::vector<Vec3>& tgt_points, int iterations,
                          double inlier_threshold, Rng& rng);

struct IcpResult {
  RigidTransform transform;
  std::vector<double> residuals;  // RMS matched distance after each solve
  int iterations = 0;
};

// Point-to-point ICP from an initial transform; stops when the RMS residual
// improves by less than tol or after max_iters. The residual sequence is
// non-increasing.
IcpResult icp_refine(const std::vector<Vec3>& src, const std::vector<Vec3>& tgt,
                     const RigidTransform& initial, int max_iters = 50,
                     double tol = 1e-6);

// The 24 rotations of the chiral octahedral group (signed permutation
// matrices with determinant +1), in a fixed deterministic order.
const std::vector<Eigen::Matrix3d>& octahedral_rotations();

struct RegistrationErrors {
  double rot_deg = 0.0;    // angle of R_est * R_gt^T
  double translation = 0.0;
};

RegistrationErrors registration_errors(const RigidTransform& estimate,
                                       const RigidTransform& ground_truth);

struct RegisterConfig {
  int ransac_iterations = 1000;
  double inlier_threshold = 0.05;
  int icp_max_iters = 50;
  double icp_tolerance = 1e-6;
  int max_corr_points = 512;
  int threads = 0;
};

struct RegistrationResult {
  RigidTransform transform;  // after ICP refinement
  int inliers = 0;
  int rotation_hypothesis = -1;  // index into octahedral_rotations()
  int icp_iterations = 0;
  RegistrationErrors errors;
  RigidTransform ransac_transform;  // before ICP, for method comparisons
  RegistrationErrors ransac_errors;
};

// Full pipeline: for each of the 24 de-rotation hypotheses, derotate the
// target about its centroid, extract mutual-NN embedding correspondences and
// run RANSAC; the hypothesis with the most inliers (lowest index on ties)
// seeds an ICP refinement against the original target. Deterministic for a
// fixed seed regardless of thread count.
RegistrationResult register_pair(const geom::PointCloud& src, const geom::PointCloud& tgt,
                                 const embed::EmbeddingModel& model,
                                 const RigidTransform& ground_truth,
                                 const RegisterConfig& config, std::uint64_t seed);

}  // namespace corrfield::reg
