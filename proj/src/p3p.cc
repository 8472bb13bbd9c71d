#include "p3p.h"

#include <cmath>
#include <complex>

#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>

#include "bpnp/errors.h"

namespace bpnp::internal {
namespace {

// Real roots of c[4] v^4 + ... + c[0] via the companion matrix, each
// polished by a few Newton steps.
std::vector<double> QuarticRoots(const std::array<double, 5>& c) {
  std::vector<double> roots;
  if (!(std::abs(c[4]) > 1e-14 * (std::abs(c[0]) + std::abs(c[1]) +
                                 std::abs(c[2]) + std::abs(c[3])))) {
    return roots;
  }
  Eigen::Matrix4d comp = Eigen::Matrix4d::Zero();
  for (int k = 0; k < 4; ++k) comp(0, k) = -c[3 - k] / c[4];
  comp(1, 0) = comp(2, 1) = comp(3, 2) = 1.0;
  const Eigen::EigenSolver<Eigen::Matrix4d> es(comp, false);
  for (int k = 0; k < 4; ++k) {
    const std::complex<double> z = es.eigenvalues()[k];
    if (std::abs(z.imag()) > 1e-6 * (1.0 + std::abs(z.real()))) continue;
    double v = z.real();
    for (int it = 0; it < 3; ++it) {
      const double f = (((c[4] * v + c[3]) * v + c[2]) * v + c[1]) * v + c[0];
      const double df = ((4.0 * c[4] * v + 3.0 * c[3]) * v + 2.0 * c[2]) * v +
                        c[1];
      if (df == 0.0) break;
      v -= f / df;
    }
    roots.push_back(v);
  }
  return roots;
}

}  // namespace

std::vector<Pose> P3P(const std::array<Eigen::Vector3d, 3>& world,
                      const std::array<Eigen::Vector3d, 3>& bearings) {
  const double a2 = (world[1] - world[2]).squaredNorm();
  const double b2 = (world[0] - world[2]).squaredNorm();
  const double c2 = (world[0] - world[1]).squaredNorm();
  std::vector<Pose> poses;
  if (!(b2 > 0.0)) return poses;
  const double ca = bearings[1].dot(bearings[2]);
  const double cb = bearings[0].dot(bearings[2]);
  const double cg = bearings[0].dot(bearings[1]);

  const double amc = (a2 - c2) / b2;
  const double apc = (a2 + c2) / b2;
  const double bmc = (b2 - c2) / b2;
  const double bma = (b2 - a2) / b2;
  std::array<double, 5> q;
  q[4] = (amc - 1.0) * (amc - 1.0) - 4.0 * c2 / b2 * ca * ca;
  q[3] = 4.0 * (amc * (1.0 - amc) * cb - (1.0 - apc) * ca * cg +
                2.0 * c2 / b2 * ca * ca * cb);
  q[2] = 2.0 * (amc * amc - 1.0 + 2.0 * amc * amc * cb * cb +
                2.0 * bmc * ca * ca - 4.0 * apc * ca * cb * cg +
                2.0 * bma * cg * cg);
  q[1] = 4.0 * (-amc * (1.0 + amc) * cb + 2.0 * a2 / b2 * cg * cg * cb -
                (1.0 - apc) * ca * cg);
  q[0] = (1.0 + amc) * (1.0 + amc) - 4.0 * a2 / b2 * cg * cg;

  for (const double v : QuarticRoots(q)) {
    if (!(v > 0.0)) continue;
    const double den = 2.0 * (cg - v * ca);
    if (std::abs(den) < 1e-12) continue;
    const double u =
        ((-1.0 + amc) * v * v - 2.0 * amc * cb * v + 1.0 + amc) / den;
    if (!(u > 0.0)) continue;
    const double s1_sq = b2 / (1.0 + v * v - 2.0 * v * cb);
    if (!(s1_sq > 0.0)) continue;
    const double s1 = std::sqrt(s1_sq);
    Eigen::Matrix3d cam;
    cam.col(0) = s1 * bearings[0];
    cam.col(1) = u * s1 * bearings[1];
    cam.col(2) = v * s1 * bearings[2];
    Eigen::Matrix3d src;
    for (int k = 0; k < 3; ++k) src.col(k) = world[k];
    const Eigen::Matrix4d T = Eigen::umeyama(src, cam, false);
    Pose pose;
    try {
      pose.rot = LogRotation(T.block<3, 3>(0, 0));
    } catch (const NotARotation&) {
      continue;
    }
    pose.trans = T.block<3, 1>(0, 3);
    if (pose.AsVector().allFinite()) poses.push_back(pose);
  }
  return poses;
}

}  // namespace bpnp::internal
