#include "corrfield/registration.hpp"

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "corrfield/parallel.hpp"

namespace corrfield::reg {

namespace {
[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }
}  // namespace

RigidTransform RigidTransform::inverse() const {
  RigidTransform inv;
  inv.rotation = rotation.transpose();
  inv.translation = -(rotation.transpose() * translation);
  return inv;
}

PerturbLevel perturb_level(const std::string& name) {
  if (name == "easy") return {"easy", 10.0, 0.1};
  if (name == "medium") return {"medium", 20.0, 0.3};
  if (name == "hard") return {"hard", 45.0, 0.5};
  fail("unknown perturbation level '" + name + "' (expected easy|medium|hard)");
}

std::pair<geom::PointCloud, RigidTransform> perturb(const geom::PointCloud& cloud,
                                                    const PerturbLevel& level, Rng& rng) {
  RigidTransform gt;
  Vec3 axis = rng.unit_vector();
  double angle = rng.uniform(0.0, level.max_angle_deg) * M_PI / 180.0;
  gt.rotation = Eigen::AngleAxisd(angle, axis).toRotationMatrix();
  Vec3 dir = rng.unit_vector();
  double radius = level.max_translation * std::cbrt(rng.uniform());
  gt.translation = dir * radius;

  geom::PointCloud out = cloud;
  for (auto& p : out.points) p = gt.apply(p);
  return {std::move(out), gt};
}

std::vector<Correspondence> embedding_correspondences(const geom::PointCloud& src,
                                                      const geom::PointCloud& tgt,
                                                      const embed::EmbeddingModel& model,
                                                      int max_points) {
  if (model.kind() != embed::ModelKind::kCoordMlp)
    fail("embedding_correspondences: a free_table cannot embed novel point sets; "
         "use a coord_mlp model");
  if (src.points.empty() || tgt.points.empty())
    fail("embedding_correspondences: empty cloud");
  if (max_points < 1) fail("embedding_correspondences: max_points must be >= 1");

  auto subsample = [&](const geom::PointCloud& cloud) {
    int n = static_cast<int>(cloud.points.size());
    int stride = std::max(1, (n + max_points - 1) / max_points);
    std::vector<int> idx;
    for (int i = 0; i < n; i += stride) idx.push_back(i);
    return idx;
  };
  std::vector<int> si = subsample(src), ti = subsample(tgt);

  auto embed_of = [&](const geom::PointCloud& cloud, const std::vector<int>& idx) {
    std::vector<embed::PointRef> refs(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i)
      refs[i] = {-1, idx[i], cloud.points[static_cast<std::size_t>(idx[i])]};
    return model.embed(refs);
  };
  Eigen::MatrixXd ea = embed_of(src, si);
  Eigen::MatrixXd eb = embed_of(tgt, ti);

  // squared distances via the norm expansion; argmin with lowest-index ties
  Eigen::VectorXd na = ea.rowwise().squaredNorm();
  Eigen::VectorXd nb = eb.rowwise().squaredNorm();
  Eigen::MatrixXd dot = ea * eb.transpose();
  auto argmin_row = [&](long i) {
    long best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (long j = 0; j < eb.rows(); ++j) {
      double d = na[i] + nb[j] - 2.0 * dot(i, j);
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    return best;
  };
  auto argmin_col = [&](long j) {
    long best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (long i = 0; i < ea.rows(); ++i) {
      double d = na[i] + nb[j] - 2.0 * dot(i, j);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    return best;
  };
  std::vector<long> nn_ab(static_cast<std::size_t>(ea.rows()));
  std::vector<long> nn_ba(static_cast<std::size_t>(eb.rows()));
  for (long i = 0; i < ea.rows(); ++i) nn_ab[static_cast<std::size_t>(i)] = argmin_row(i);
  for (long j = 0; j < eb.rows(); ++j) nn_ba[static_cast<std::size_t>(j)] = argmin_col(j);

  std::vector<Correspondence> out;
  for (long i = 0; i < ea.rows(); ++i) {
    long j = nn_ab[static_cast<std::size_t>(i)];
    if (nn_ba[static_cast<std::size_t>(j)] == i)
      out.push_back({si[static_cast<std::size_t>(i)], ti[static_cast<std::size_t>(j)]});
  }
  return out;
}

RigidTransform kabsch(const std::vector<Vec3>& src, const std::vector<Vec3>& dst) {
  if (src.size() != dst.size()) fail("kabsch: point lists differ in size");
  if (src.size() < 3) fail("kabsch: need at least 3 point pairs");
  Vec3 cs = Vec3::Zero(), cd = Vec3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    cs += src[i];
    cd += dst[i];
  }
  cs /= static_cast<double>(src.size());
  cd /= static_cast<double>(dst.size());
  Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < src.size(); ++i)
    h += (src[i] - cs) * (dst[i] - cd).transpose();
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d u = svd.matrixU(), v = svd.matrixV();
  double d = (v * u.transpose()).determinant();
  Eigen::Matrix3d s = Eigen::Matrix3d::Identity();
  if (d < 0) s(2, 2) = -1.0;  // reflection guard
  RigidTransform t;
  t.rotation = v * s * u.transpose();
  t.translation = cd - t.rotation * cs;
  return t;
}

RansacResult ransac_align(const std::vector<Correspondence>& corr,
                          const std::vector<Vec3>& src_points,
                          const std::vector<Vec3>& tgt_points, int iterations,
                          double inlier_threshold, Rng& rng) {
  int n = static_cast<int>(corr.size());
  if (n < 3) fail("ransac_align: need at least 3 correspondences, have " + std::to_string(n));
  if (iterations < 1) fail("ransac_align: iterations must be >= 1");

  auto count_inliers = [&](const RigidTransform& t) {
    int count = 0;
    for (const auto& c : corr) {
      double r = (t.apply(src_points[static_cast<std::size_t>(c.src)]) -
                  tgt_points[static_cast<std::size_t>(c.tgt)])
                     .norm();
      if (r < inlier_threshold) ++count;
    }
    return count;
  };

  int best_inliers = -1;
  RigidTransform best;
  std::vector<Vec3> s3(3), d3(3);
  for (int it = 0; it < iterations; ++it) {
    int i0 = rng.uniform_int(n), i1, i2;
    do {
      i1 = rng.uniform_int(n);
    } while (i1 == i0);
    do {
      i2 = rng.uniform_int(n);
    } while (i2 == i0 || i2 == i1);
    for (int k = 0; k < 3; ++k) {
      const Correspondence& c = corr[static_cast<std::size_t>(k == 0 ? i0 : k == 1 ? i1 : i2)];
      s3[static_cast<std::size_t>(k)] = src_points[static_cast<std::size_t>(c.src)];
      d3[static_cast<std::size_t>(k)] = tgt_points[static_cast<std::size_t>(c.tgt)];
    }
    // collinear (degenerate) samples cannot pin down a rotation
    if ((s3[1] - s3[0]).cross(s3[2] - s3[0]).squaredNorm() < 1e-18) continue;
    RigidTransform t = kabsch(s3, d3);
    int inl = count_inliers(t);
    if (inl > best_inliers) {
      best_inliers = inl;
      best = t;
    }
  }
  if (best_inliers < 0) fail("ransac_align: every sampled triple was degenerate");

  // refit on the best inlier set
  std::vector<Vec3> si, di;
  for (const auto& c : corr) {
    double r = (best.apply(src_points[static_cast<std::size_t>(c.src)]) -
                tgt_points[static_cast<std::size_t>(c.tgt)])
                   .norm();
    if (r < inlier_threshold) {
      si.push_back(src_points[static_cast<std::size_t>(c.src)]);
      di.push_back(tgt_points[static_cast<std::size_t>(c.tgt)]);
    }
  }
  RansacResult result;
  if (si.size() >= 3) best = kabsch(si, di);
  result.transform = best;
  result.inliers = count_inliers(best);
  return result;
}

IcpResult icp_refine(const std::vector<Vec3>& src, const std::vector<Vec3>& tgt,
                     const RigidTransform& initial, int max_iters, double tol) {
  if (src.size() < 3 || tgt.empty()) fail("icp_refine: not enough points");
  if (max_iters < 1) fail("icp_refine: max_iters must be >= 1");

  auto nearest = [&](const Vec3& p) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < tgt.size(); ++j) {
      double d = (tgt[j] - p).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    return best;
  };

  IcpResult result;
  result.transform = initial;
  std::vector<Vec3> matched(src.size());
  // residual of the initial alignment under its own matching
  double prev = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    Vec3 p = initial.apply(src[i]);
    prev += (tgt[nearest(p)] - p).squaredNorm();
  }
  prev = std::sqrt(prev / static_cast<double>(src.size()));

  for (int iter = 1; iter <= max_iters; ++iter) {
    for (std::size_t i = 0; i < src.size(); ++i)
      matched[i] = tgt[nearest(result.transform.apply(src[i]))];
    result.transform = kabsch(src, matched);
    double res = 0.0;
    for (std::size_t i = 0; i < src.size(); ++i)
      res += (result.transform.apply(src[i]) - matched[i]).squaredNorm();
    res = std::sqrt(res / static_cast<double>(src.size()));
    result.residuals.push_back(res);
    result.iterations = iter;
    if (prev - res < tol) break;
    prev = res;
  }
  return result;
}

const std::vector<Eigen::Matrix3d>& octahedral_rotations() {
  static const std::vector<Eigen::Matrix3d> rotations = [] {
    std::vector<Eigen::Matrix3d> out;
    int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
    for (const auto& perm : perms) {
      for (int bits = 0; bits < 8; ++bits) {
        Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
        for (int c = 0; c < 3; ++c)
          m(perm[c], c) = (bits >> c) & 1 ? -1.0 : 1.0;
        if (m.determinant() > 0.5) out.push_back(m);
      }
    }
    return out;
  }();
  return rotations;
}

RegistrationErrors registration_errors(const RigidTransform& estimate,
                                       const RigidTransform& ground_truth) {
  Eigen::Matrix3d rel = estimate.rotation * ground_truth.rotation.transpose();
  double c = (rel.trace() - 1.0) / 2.0;
  c = std::clamp(c, -1.0, 1.0);
  RegistrationErrors e;
  e.rot_deg = std::acos(c) * 180.0 / M_PI;
  e.translation = (estimate.translation - ground_truth.translation).norm();
  return e;
}

RegistrationResult register_pair(const geom::PointCloud& src, const geom::PointCloud& tgt,
                                 const embed::EmbeddingModel& model,
                                 const RigidTransform& ground_truth,
                                 const RegisterConfig& config, std::uint64_t seed) {
  const auto& hypotheses = octahedral_rotations();
  int n_hyp = static_cast<int>(hypotheses.size());

  Vec3 centroid = Vec3::Zero();
  for (const auto& p : tgt.points) centroid += p;
  centroid /= static_cast<double>(tgt.points.size());

  struct Candidate {
    bool valid = false;
    RansacResult ransac;
  };
  std::vector<Candidate> candidates(static_cast<std::size_t>(n_hyp));
  Rng root(seed);
  // One forked stream per hypothesis keeps results independent of scheduling.
  parallel_for(n_hyp, config.threads, [&](int h) {
    geom::PointCloud derot = tgt;
    const Eigen::Matrix3d& r = hypotheses[static_cast<std::size_t>(h)];
    for (auto& p : derot.points) p = r.transpose() * (p - centroid) + centroid;
    std::vector<Correspondence> corr =
        embedding_correspondences(src, derot, model, config.max_corr_points);
    if (corr.size() < 3) return;
    Rng rng = root.fork(static_cast<std::uint64_t>(h));
    candidates[static_cast<std::size_t>(h)].ransac =
        ransac_align(corr, src.points, tgt.points, config.ransac_iterations,
                     config.inlier_threshold, rng);
    candidates[static_cast<std::size_t>(h)].valid = true;
  });

  int best = -1;
  for (int h = 0; h < n_hyp; ++h) {
    if (!candidates[static_cast<std::size_t>(h)].valid) continue;
    if (best < 0 || candidates[static_cast<std::size_t>(h)].ransac.inliers >
                        candidates[static_cast<std::size_t>(best)].ransac.inliers)
      best = h;
  }
  if (best < 0)
    fail("register_pair: no de-rotation hypothesis produced 3+ correspondences");

  RegistrationResult result;
  result.rotation_hypothesis = best;
  result.ransac_transform = candidates[static_cast<std::size_t>(best)].ransac.transform;
  result.ransac_errors = registration_errors(result.ransac_transform, ground_truth);
  IcpResult icp = icp_refine(src.points, tgt.points, result.ransac_transform,
                             config.icp_max_iters, config.icp_tolerance);
  result.transform = icp.transform;
  result.icp_iterations = icp.iterations;
  result.inliers = candidates[static_cast<std::size_t>(best)].ransac.inliers;
  result.errors = registration_errors(result.transform, ground_truth);
  return result;
}

}  // namespace corrfield::reg
