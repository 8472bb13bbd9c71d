// EPnP (Lepetit, Moreno-Noguer, Fua) plus P3P, used as the RANSAC hypothesis
// generator.
// Points are expressed as barycentric combinations of four control points;
// the camera-frame control points lie in the null space of a 2n x 12 system
// and are recovered from the inter-control-point distances.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include "bpnp/pnp_solver.h"
#include "p3p.h"

namespace bpnp {
namespace {

using Matrix6x10d = Eigen::Matrix<double, 6, 10>;
using Vector12d = Eigen::Matrix<double, 12, 1>;

constexpr std::array<std::pair<int, int>, 6> kPairs = {
    {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}};
constexpr int kBetaGaussNewtonIters = 5;

// Relative singular value below which the 3D spread is considered flat.
constexpr double kFlatRatio = 1e-6;
constexpr double kCoincidentPx = 1e-9;

struct Problem {
  Eigen::Matrix<double, 3, 4> control_world;
  Eigen::MatrixXd alphas;  // n x 4
  std::array<Vector12d, 4> null_vectors;
  Matrix6x10d L;
  Eigen::Matrix<double, 6, 1> rho;
};

void CheckDegenerate(const Correspondences& sample) {
  const int n = sample.size();
  const double scale = 1.0 + sample.x2d.cwiseAbs().maxCoeff();
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if ((sample.ImagePoint(i) - sample.ImagePoint(j)).norm() <
          kCoincidentPx * scale) {
        throw Degenerate("coincident 2D points in sample");
      }
    }
  }
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (int i = 0; i < n; ++i) centroid += sample.Point(i);
  centroid /= n;
  Eigen::MatrixXd centered(3, n);
  for (int i = 0; i < n; ++i) centered.col(i) = sample.Point(i) - centroid;
  const Eigen::Vector3d sv =
      Eigen::JacobiSVD<Eigen::MatrixXd>(centered).singularValues();
  if (!(sv[0] > 0.0) || sv[1] < kFlatRatio * sv[0]) {
    throw Degenerate("3D sample points are collinear");
  }
  if (sv[2] < kFlatRatio * sv[0]) {
    throw Degenerate("3D sample points are coplanar");
  }
}

Problem Setup(const Correspondences& sample, const Intrinsics& K) {
  const int n = sample.size();
  Problem p;

  Eigen::Vector3d c0 = Eigen::Vector3d::Zero();
  for (int i = 0; i < n; ++i) c0 += sample.Point(i);
  c0 /= n;
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d d = sample.Point(i) - c0;
    cov += d * d.transpose();
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> pca(cov);
  p.control_world.col(0) = c0;
  for (int k = 1; k < 4; ++k) {
    // Principal directions, largest first.
    const int e = 3 - k;
    p.control_world.col(k) =
        c0 + std::sqrt(std::max(pca.eigenvalues()[e], 0.0) / n) *
                 pca.eigenvectors().col(e);
  }

  Eigen::Matrix3d basis;
  for (int k = 0; k < 3; ++k) {
    basis.col(k) = p.control_world.col(k + 1) - c0;
  }
  const Eigen::PartialPivLU<Eigen::Matrix3d> lu(basis);
  p.alphas.resize(n, 4);
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d a = lu.solve(sample.Point(i) - c0);
    p.alphas(i, 0) = 1.0 - a.sum();
    p.alphas.block<1, 3>(i, 1) = a.transpose();
  }

  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(2 * n, 12);
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector2d uv = sample.ImagePoint(i);
    for (int j = 0; j < 4; ++j) {
      const double a = p.alphas(i, j);
      M(2 * i, 3 * j) = a * K.fx;
      M(2 * i, 3 * j + 2) = a * (K.cx - uv.x());
      M(2 * i + 1, 3 * j + 1) = a * K.fy;
      M(2 * i + 1, 3 * j + 2) = a * (K.cy - uv.y());
    }
  }
  const Eigen::Matrix<double, 12, 12> MtM = M.transpose() * M;
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 12, 12>> eig(MtM);
  for (int k = 0; k < 4; ++k) p.null_vectors[k] = eig.eigenvectors().col(k);

  for (int row = 0; row < 6; ++row) {
    const auto [a, b] = kPairs[row];
    std::array<Eigen::Vector3d, 4> dv;
    for (int k = 0; k < 4; ++k) {
      dv[k] = p.null_vectors[k].segment<3>(3 * a) -
              p.null_vectors[k].segment<3>(3 * b);
    }
    p.L.row(row) << dv[0].dot(dv[0]), 2.0 * dv[0].dot(dv[1]), dv[1].dot(dv[1]),
        2.0 * dv[0].dot(dv[2]), 2.0 * dv[1].dot(dv[2]), dv[2].dot(dv[2]),
        2.0 * dv[0].dot(dv[3]), 2.0 * dv[1].dot(dv[3]),
        2.0 * dv[2].dot(dv[3]), dv[3].dot(dv[3]);
    p.rho[row] =
        (p.control_world.col(a) - p.control_world.col(b)).squaredNorm();
  }
  return p;
}

template <int Cols>
Eigen::Matrix<double, Cols, 1> LeastSquares(
    const Matrix6x10d& L, const std::array<int, Cols>& cols,
    const Eigen::Matrix<double, 6, 1>& rho) {
  Eigen::Matrix<double, 6, Cols> A;
  for (int k = 0; k < Cols; ++k) A.col(k) = L.col(cols[k]);
  return A.colPivHouseholderQr().solve(rho);
}

// betas = [b1, b2, b3, b4] approximations for N = 4, 2, 3 null vectors.
Eigen::Vector4d BetasApprox1(const Problem& p) {
  const Eigen::Vector4d b4 = LeastSquares<4>(p.L, {0, 1, 3, 6}, p.rho);
  Eigen::Vector4d betas;
  if (b4[0] < 0.0) {
    betas[0] = std::sqrt(-b4[0]);
    betas.tail<3>() = -b4.tail<3>() / betas[0];
  } else {
    betas[0] = std::sqrt(b4[0]);
    betas.tail<3>() = b4.tail<3>() / betas[0];
  }
  return betas;
}

Eigen::Vector4d BetasApprox2(const Problem& p) {
  const Eigen::Vector3d b3 = LeastSquares<3>(p.L, {0, 1, 2}, p.rho);
  Eigen::Vector4d betas = Eigen::Vector4d::Zero();
  if (b3[0] < 0.0) {
    betas[0] = std::sqrt(-b3[0]);
    betas[1] = b3[2] < 0.0 ? std::sqrt(-b3[2]) : 0.0;
  } else {
    betas[0] = std::sqrt(b3[0]);
    betas[1] = b3[2] > 0.0 ? std::sqrt(b3[2]) : 0.0;
  }
  if (b3[1] < 0.0) betas[0] = -betas[0];
  return betas;
}

Eigen::Vector4d BetasApprox3(const Problem& p) {
  const Eigen::Matrix<double, 5, 1> b5 =
      LeastSquares<5>(p.L, {0, 1, 2, 3, 4}, p.rho);
  Eigen::Vector4d betas = Eigen::Vector4d::Zero();
  if (b5[0] < 0.0) {
    betas[0] = std::sqrt(-b5[0]);
    betas[1] = b5[2] < 0.0 ? std::sqrt(-b5[2]) : 0.0;
  } else {
    betas[0] = std::sqrt(b5[0]);
    betas[1] = b5[2] > 0.0 ? std::sqrt(b5[2]) : 0.0;
  }
  if (b5[1] < 0.0) betas[0] = -betas[0];
  betas[2] = betas[0] != 0.0 ? b5[3] / betas[0] : 0.0;
  return betas;
}

void RefineBetas(const Problem& p, Eigen::Vector4d& b) {
  for (int iter = 0; iter < kBetaGaussNewtonIters; ++iter) {
    Eigen::Matrix<double, 6, 4> A;
    Eigen::Matrix<double, 6, 1> res;
    for (int i = 0; i < 6; ++i) {
      const auto l = p.L.row(i);
      A(i, 0) = 2 * l[0] * b[0] + l[1] * b[1] + l[3] * b[2] + l[6] * b[3];
      A(i, 1) = l[1] * b[0] + 2 * l[2] * b[1] + l[4] * b[2] + l[7] * b[3];
      A(i, 2) = l[3] * b[0] + l[4] * b[1] + 2 * l[5] * b[2] + l[8] * b[3];
      A(i, 3) = l[6] * b[0] + l[7] * b[1] + l[8] * b[2] + 2 * l[9] * b[3];
      Eigen::Matrix<double, 10, 1> quad;
      quad << b[0] * b[0], b[0] * b[1], b[1] * b[1], b[0] * b[2], b[1] * b[2],
          b[2] * b[2], b[0] * b[3], b[1] * b[3], b[2] * b[3], b[3] * b[3];
      res[i] = p.rho[i] - l.dot(quad);
    }
    const Eigen::Vector4d delta = A.colPivHouseholderQr().solve(res);
    if (!delta.allFinite()) return;
    b += delta;
  }
}

// Pose from betas, or nullopt when the resulting points straddle the camera.
std::optional<Pose> PoseFromBetas(const Problem& p, const Eigen::Vector4d& b,
                                  const Correspondences& sample) {
  Vector12d ccs = Vector12d::Zero();
  for (int k = 0; k < 4; ++k) ccs += b[k] * p.null_vectors[k];
  const int n = sample.size();
  Eigen::MatrixXd cam(3, n);
  Eigen::MatrixXd world(3, n);
  for (int i = 0; i < n; ++i) {
    Eigen::Vector3d pc = Eigen::Vector3d::Zero();
    for (int j = 0; j < 4; ++j) pc += p.alphas(i, j) * ccs.segment<3>(3 * j);
    cam.col(i) = pc;
    world.col(i) = sample.Point(i);
  }
  if (cam.row(2).sum() < 0.0) cam = -cam;
  if (!cam.allFinite()) return std::nullopt;
  const Eigen::Matrix4d T = Eigen::umeyama(world, cam, false);
  const Eigen::Matrix3d R = T.block<3, 3>(0, 0);
  Pose pose;
  try {
    pose.rot = LogRotation(R);
  } catch (const NotARotation&) {
    return std::nullopt;
  }
  pose.trans = T.block<3, 1>(0, 3);
  if (!pose.AsVector().allFinite() || !AllInFront(sample.pts3d, pose)) {
    return std::nullopt;
  }
  return pose;
}

}  // namespace

std::vector<Pose> MinimalSolve(const Correspondences& sample,
                               const Intrinsics& intrinsics) {
  if (sample.pts3d.size() % 3 != 0 ||
      sample.x2d.size() != 2 * (sample.pts3d.size() / 3)) {
    throw InvalidInput("malformed correspondences");
  }
  if (sample.size() >= 2) CheckDegenerate(sample);
  sample.Validate(4);
  intrinsics.Validate();

  const Problem problem = Setup(sample, intrinsics);
  std::vector<std::pair<double, Pose>> scored;
  for (Eigen::Vector4d betas :
       {BetasApprox1(problem), BetasApprox2(problem), BetasApprox3(problem)}) {
    if (!betas.allFinite()) continue;
    RefineBetas(problem, betas);
    const std::optional<Pose> pose = PoseFromBetas(problem, betas, sample);
    if (!pose) continue;
    scored.emplace_back(Objective(sample, *pose, intrinsics), *pose);
  }
  // EPnP is inexact on very small samples; P3P on the first three points
  // adds exact candidates that the remaining points disambiguate.
  std::array<Eigen::Vector3d, 3> world;
  std::array<Eigen::Vector3d, 3> rays;
  for (int k = 0; k < 3; ++k) {
    world[k] = sample.Point(k);
    const Eigen::Vector2d uv = sample.ImagePoint(k);
    rays[k] = Eigen::Vector3d((uv.x() - intrinsics.cx) / intrinsics.fx,
                              (uv.y() - intrinsics.cy) / intrinsics.fy, 1.0)
                  .normalized();
  }
  for (const Pose& pose : internal::P3P(world, rays)) {
    if (!AllInFront(sample.pts3d, pose)) continue;
    scored.emplace_back(Objective(sample, pose, intrinsics), pose);
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<Pose> out;
  for (const auto& [err, pose] : scored) out.push_back(pose);
  return out;
}

}  // namespace bpnp
