#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "corrfield/embedding.hpp"
#include "corrfield/geometry.hpp"
#include "corrfield/registration.hpp"
#include "corrfield/rng.hpp"
#include "doctest.h"

using namespace corrfield;
using geom::Vec3;
using reg::RigidTransform;

namespace {

RigidTransform random_transform(Rng& rng, double angle_deg, double tnorm) {
  RigidTransform t;
  t.rotation =
      Eigen::AngleAxisd(angle_deg * M_PI / 180.0, rng.unit_vector()).toRotationMatrix();
  t.translation = tnorm * rng.unit_vector();
  return t;
}

std::vector<Vec3> random_points(Rng& rng, int n) {
  std::vector<Vec3> pts;
  for (int i = 0; i < n; ++i) pts.push_back(rng.unit_vector() * rng.uniform(0.5, 1.0));
  return pts;
}

geom::PointCloud sphere_cloud(int n, std::uint64_t seed) {
  geom::Mesh m = geom::make_icosphere(2);
  return geom::sample_cloud(m, n, {}, seed);
}

}  // namespace

TEST_CASE("a rigid transform composes with its inverse to the identity") {
  Rng rng(1);
  for (int k = 0; k < 5; ++k) {
    RigidTransform t = random_transform(rng, rng.uniform(5.0, 170.0), 0.8);
    RigidTransform inv = t.inverse();
    for (int i = 0; i < 10; ++i) {
      Vec3 p = rng.unit_vector();
      CHECK((inv.apply(t.apply(p)) - p).norm() < 1e-12);
      CHECK((t.apply(inv.apply(p)) - p).norm() < 1e-12);
    }
  }
}

TEST_CASE("perturbation levels carry the documented budgets") {
  reg::PerturbLevel easy = reg::perturb_level("easy");
  CHECK(easy.name == "easy");
  CHECK(easy.max_angle_deg == 10.0);
  CHECK(easy.max_translation == 0.1);
  CHECK(reg::perturb_level("medium").max_angle_deg == 20.0);
  CHECK(reg::perturb_level("medium").max_translation == 0.3);
  CHECK(reg::perturb_level("hard").max_angle_deg == 45.0);
  CHECK(reg::perturb_level("hard").max_translation == 0.5);
  CHECK_THROWS(reg::perturb_level("impossible"));
}

TEST_CASE("perturb stays inside its budget and reports the exact transform") {
  geom::PointCloud cloud = sphere_cloud(80, 4);
  RigidTransform identity;
  for (const char* level : {"easy", "medium", "hard"}) {
    reg::PerturbLevel lv = reg::perturb_level(level);
    Rng rng(9);
    for (int k = 0; k < 20; ++k) {
      auto [moved, gt] = reg::perturb(cloud, lv, rng);
      reg::RegistrationErrors e = reg::registration_errors(gt, identity);
      CHECK(e.rot_deg <= lv.max_angle_deg + 1e-9);
      CHECK(gt.translation.norm() <= lv.max_translation + 1e-12);
      REQUIRE(moved.points.size() == cloud.points.size());
      RigidTransform inv = gt.inverse();
      double worst = 0.0;
      for (std::size_t i = 0; i < cloud.points.size(); ++i)
        worst = std::max(worst, (inv.apply(moved.points[i]) - cloud.points[i]).norm());
      CHECK(worst < 1e-12);
    }
  }

  Rng a(3), b(3);
  auto [ma, ta] = reg::perturb(cloud, reg::perturb_level("medium"), a);
  auto [mb, tb] = reg::perturb(cloud, reg::perturb_level("medium"), b);
  CHECK(ta.rotation == tb.rotation);
  CHECK(ta.translation == tb.translation);
  for (std::size_t i = 0; i < ma.points.size(); ++i) CHECK(ma.points[i] == mb.points[i]);
}

TEST_CASE("kabsch recovers an exact rigid motion") {
  Rng rng(7);
  std::vector<Vec3> src = random_points(rng, 20);
  RigidTransform gt = random_transform(rng, 37.0, 0.6);
  std::vector<Vec3> dst;
  for (const auto& p : src) dst.push_back(gt.apply(p));

  RigidTransform est = reg::kabsch(src, dst);
  CHECK((est.rotation - gt.rotation).norm() < 1e-9);
  CHECK((est.translation - gt.translation).norm() < 1e-9);
  reg::RegistrationErrors e = reg::registration_errors(est, gt);
  CHECK(e.rot_deg < 1e-7);
  CHECK(e.translation < 1e-9);

  CHECK_THROWS(reg::kabsch({src[0], src[1]}, {dst[0], dst[1]}));
  CHECK_THROWS(reg::kabsch(src, {dst[0]}));
}

TEST_CASE("kabsch never returns a reflection") {
  Rng rng(8);
  std::vector<Vec3> src = random_points(rng, 12);
  std::vector<Vec3> mirrored;
  for (const auto& p : src) mirrored.push_back(Vec3(-p.x(), p.y(), p.z()));
  RigidTransform est = reg::kabsch(src, mirrored);
  CHECK(est.rotation.determinant() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("rotation error agrees with the quaternion angle") {
  Rng rng(11);
  RigidTransform a = random_transform(rng, 73.0, 0.3);
  RigidTransform b = random_transform(rng, 18.0, 0.5);
  reg::RegistrationErrors e = reg::registration_errors(a, b);
  double quat_deg = Eigen::Quaterniond(a.rotation)
                        .angularDistance(Eigen::Quaterniond(b.rotation)) *
                    180.0 / M_PI;
  CHECK(e.rot_deg == doctest::Approx(quat_deg).epsilon(1e-9));
  CHECK(e.translation ==
        doctest::Approx((a.translation - b.translation).norm()).epsilon(1e-12));

  // composing a known extra rotation shifts the error by exactly that angle
  RigidTransform c = b;
  c.rotation = Eigen::AngleAxisd(30.0 * M_PI / 180.0, Vec3::UnitZ()).toRotationMatrix() *
               b.rotation;
  CHECK(reg::registration_errors(c, b).rot_deg == doctest::Approx(30.0).epsilon(1e-9));

  CHECK(reg::registration_errors(a, a).rot_deg < 1e-5);
  CHECK(reg::registration_errors(a, b).rot_deg ==
        doctest::Approx(reg::registration_errors(b, a).rot_deg).epsilon(1e-12));
}

TEST_CASE("ransac on outlier-free correspondences matches a direct fit") {
  Rng rng(13);
  std::vector<Vec3> src = random_points(rng, 50);
  RigidTransform gt = random_transform(rng, 24.0, 0.4);
  std::vector<Vec3> tgt;
  for (const auto& p : src) tgt.push_back(gt.apply(p));
  std::vector<reg::Correspondence> corr;
  for (int i = 0; i < 50; ++i) corr.push_back({i, i});

  Rng ransac_rng(17);
  reg::RansacResult r = reg::ransac_align(corr, src, tgt, 100, 0.01, ransac_rng);
  CHECK(r.inliers == 50);
  CHECK(reg::registration_errors(r.transform, gt).rot_deg < 1e-6);

  // with every pair an inlier, the refit equals a straight least-squares fit
  RigidTransform direct = reg::kabsch(src, tgt);
  CHECK((r.transform.rotation - direct.rotation).norm() < 1e-12);
  CHECK((r.transform.translation - direct.translation).norm() < 1e-12);
}

TEST_CASE("ransac tolerates half the correspondences being wrong") {
  Rng rng(19);
  std::vector<Vec3> src = random_points(rng, 60);
  RigidTransform gt = random_transform(rng, 25.0, 0.2);
  std::vector<Vec3> tgt;
  for (const auto& p : src) tgt.push_back(gt.apply(p));
  std::vector<reg::Correspondence> corr;
  for (int i = 0; i < 30; ++i) corr.push_back({i, i});
  for (int i = 30; i < 60; ++i) {
    int wrong = (i + 7) % 30;  // deliberately mismatched
    corr.push_back({i, wrong});
  }

  Rng ransac_rng(23);
  reg::RansacResult r = reg::ransac_align(corr, src, tgt, 200, 0.02, ransac_rng);
  reg::RegistrationErrors e = reg::registration_errors(r.transform, gt);
  CHECK(e.rot_deg < 1.0);
  CHECK(e.translation < 0.05);
  CHECK(r.inliers >= 30);
}

TEST_CASE("ransac rejects degenerate sample sets") {
  std::vector<Vec3> line, target;
  for (int i = 0; i < 6; ++i) {
    line.push_back(Vec3(0.1 * i, 0, 0));  // all collinear
    target.push_back(Vec3(0.1 * i, 0.5, 0));
  }
  std::vector<reg::Correspondence> corr;
  for (int i = 0; i < 6; ++i) corr.push_back({i, i});
  Rng rng(29);
  CHECK_THROWS_WITH(reg::ransac_align(corr, line, target, 20, 0.01, rng),
                    doctest::Contains("degenerate"));
  CHECK_THROWS(reg::ransac_align({{0, 0}, {1, 1}}, line, target, 20, 0.01, rng));
}

TEST_CASE("icp is a fixed point at a perfect alignment") {
  geom::PointCloud cloud = sphere_cloud(200, 31);
  RigidTransform identity;
  reg::IcpResult r = reg::icp_refine(cloud.points, cloud.points, identity);
  CHECK(reg::registration_errors(r.transform, identity).rot_deg < 1e-5);
  CHECK(r.transform.translation.norm() < 1e-8);
  CHECK(r.iterations == 1);  // converges immediately
  CHECK(r.residuals.back() < 1e-8);
}

TEST_CASE("icp closes a small initial misalignment") {
  geom::PointCloud cloud = sphere_cloud(300, 37);
  RigidTransform initial;
  initial.rotation =
      Eigen::AngleAxisd(2.0 * M_PI / 180.0, Vec3::UnitZ()).toRotationMatrix();
  RigidTransform identity;
  reg::IcpResult r = reg::icp_refine(cloud.points, cloud.points, initial);
  CHECK(reg::registration_errors(r.transform, identity).rot_deg < 0.1);
  for (std::size_t i = 1; i < r.residuals.size(); ++i)
    CHECK(r.residuals[i] <= r.residuals[i - 1] + 1e-12);
  CHECK_THROWS(reg::icp_refine({cloud.points[0]}, cloud.points, identity));
}

TEST_CASE("the 24 axis-aligned hypotheses form the rotation group of the cube") {
  const auto& rots = reg::octahedral_rotations();
  REQUIRE(rots.size() == 24);
  bool has_identity = false;
  for (const auto& r : rots) {
    CHECK((r.transpose() * r - Eigen::Matrix3d::Identity()).norm() < 1e-12);
    CHECK(r.determinant() == doctest::Approx(1.0).epsilon(1e-12));
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        CHECK((r(i, j) == 0.0 || r(i, j) == 1.0 || r(i, j) == -1.0));
    if (r == Eigen::Matrix3d::Identity()) has_identity = true;
  }
  CHECK(has_identity);
  for (std::size_t i = 0; i < rots.size(); ++i)
    for (std::size_t j = i + 1; j < rots.size(); ++j)
      CHECK((rots[i] - rots[j]).norm() > 0.5);  // pairwise distinct
  // closed under composition
  for (std::size_t i = 0; i < rots.size(); ++i)
    for (std::size_t j = 0; j < rots.size(); ++j) {
      Eigen::Matrix3d prod = rots[i] * rots[j];
      bool found = false;
      for (const auto& r : rots)
        if ((prod - r).norm() < 1e-12) found = true;
      CHECK(found);
    }
}

TEST_CASE("embedding correspondences are exactly the mutual nearest neighbors") {
  embed::EmbeddingModel mlp = embed::EmbeddingModel::make_coord_mlp(6, 41, 16);
  geom::PointCloud a = sphere_cloud(40, 43);
  geom::PointCloud b = sphere_cloud(50, 47);

  auto embed_all = [&](const geom::PointCloud& c) {
    std::vector<embed::PointRef> refs(c.points.size());
    for (std::size_t i = 0; i < c.points.size(); ++i)
      refs[i] = {-1, static_cast<int>(i), c.points[i]};
    return mlp.embed(refs);
  };
  Eigen::MatrixXd ea = embed_all(a), eb = embed_all(b);
  auto nn = [](const Eigen::MatrixXd& from, long i, const Eigen::MatrixXd& to) {
    long best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (long j = 0; j < to.rows(); ++j) {
      double d = (to.row(j) - from.row(i)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    return best;
  };
  std::set<std::pair<int, int>> expected;
  for (long i = 0; i < ea.rows(); ++i) {
    long j = nn(ea, i, eb);
    if (nn(eb, j, ea) == i) expected.insert({static_cast<int>(i), static_cast<int>(j)});
  }

  std::vector<reg::Correspondence> got = reg::embedding_correspondences(a, b, mlp);
  CHECK(got.size() == expected.size());
  for (const auto& c : got) CHECK(expected.count({c.src, c.tgt}) == 1);

  // a cloud matched against itself pairs every point with itself
  std::vector<reg::Correspondence> self = reg::embedding_correspondences(a, a, mlp);
  REQUIRE(self.size() == a.points.size());
  for (const auto& c : self) CHECK(c.src == c.tgt);

  // subsampling keeps only stride-aligned indices
  geom::PointCloud big = sphere_cloud(100, 53);
  std::vector<reg::Correspondence> sparse =
      reg::embedding_correspondences(big, big, mlp, 10);
  CHECK(!sparse.empty());
  for (const auto& c : sparse) {
    CHECK(c.src % 10 == 0);
    CHECK(c.tgt % 10 == 0);
  }

  embed::EmbeddingModel table = embed::EmbeddingModel::make_free_table({{"a", 5}}, 4, 0);
  CHECK_THROWS_WITH(reg::embedding_correspondences(a, b, table),
                    doctest::Contains("free_table"));
  geom::PointCloud empty;
  CHECK_THROWS(reg::embedding_correspondences(empty, b, mlp));
}

TEST_CASE("registering a cloud onto itself recovers the identity") {
  embed::EmbeddingModel mlp = embed::EmbeddingModel::make_coord_mlp(16, 59, 32);
  geom::PointCloud cloud = sphere_cloud(150, 61);
  RigidTransform identity;
  reg::RegisterConfig cfg;
  cfg.ransac_iterations = 200;
  cfg.max_corr_points = 64;
  reg::RegistrationResult r = reg::register_pair(cloud, cloud, mlp, identity, cfg, 5);
  CHECK(r.errors.rot_deg < 1e-6);
  CHECK(r.errors.translation < 1e-9);
  CHECK(r.rotation_hypothesis == 0);  // the un-rotated hypothesis wins outright
  CHECK(r.inliers >= 3);
  CHECK(r.ransac_errors.rot_deg < 1e-6);
}

TEST_CASE("registration is deterministic and thread-invariant") {
  embed::EmbeddingModel mlp = embed::EmbeddingModel::make_coord_mlp(16, 59, 32);
  geom::PointCloud src = sphere_cloud(150, 61);
  Rng rng(67);
  auto [tgt, gt] = reg::perturb(src, reg::perturb_level("easy"), rng);
  reg::RegisterConfig cfg;
  cfg.ransac_iterations = 150;
  cfg.max_corr_points = 64;

  cfg.threads = 1;
  reg::RegistrationResult a = reg::register_pair(src, tgt, mlp, gt, cfg, 5);
  reg::RegistrationResult b = reg::register_pair(src, tgt, mlp, gt, cfg, 5);
  cfg.threads = 4;
  reg::RegistrationResult c = reg::register_pair(src, tgt, mlp, gt, cfg, 5);

  CHECK(a.transform.rotation == b.transform.rotation);
  CHECK(a.transform.translation == b.transform.translation);
  CHECK(a.inliers == b.inliers);
  CHECK(a.rotation_hypothesis == b.rotation_hypothesis);
  CHECK(a.transform.rotation == c.transform.rotation);
  CHECK(a.transform.translation == c.transform.translation);
  CHECK(a.inliers == c.inliers);
  CHECK(a.rotation_hypothesis == c.rotation_hypothesis);
  CHECK(a.icp_iterations == c.icp_iterations);
}
