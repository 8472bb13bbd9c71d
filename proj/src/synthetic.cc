#include "bpnp/synthetic.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/Geometry>

#include "bpnp/errors.h"
#include "bpnp/rng.h"

namespace bpnp {
namespace {

Eigen::Vector3d RandomUnit(std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::Vector3d v;
  do {
    v = {normal(rng), normal(rng), normal(rng)};
  } while (v.norm() < 1e-6);
  return v.normalized();
}

// Camera at distance from the origin along a random direction, looking at it.
Pose LookAtOrigin(const Eigen::Vector3d& center, double roll) {
  const Eigen::Vector3d forward = -center.normalized();
  Eigen::Vector3d up = Eigen::Vector3d::UnitY();
  if (std::abs(forward.dot(up)) > 0.9) up = Eigen::Vector3d::UnitX();
  const Eigen::Vector3d right = up.cross(forward).normalized();
  const Eigen::Vector3d down = forward.cross(right);
  Eigen::Matrix3d R;
  R.row(0) = right.transpose();
  R.row(1) = down.transpose();
  R.row(2) = forward.transpose();
  R = Eigen::AngleAxisd(roll, Eigen::Vector3d::UnitZ()).toRotationMatrix() * R;
  Pose pose;
  pose.rot = LogRotation(R);
  pose.trans = -R * center;
  return pose;
}

}  // namespace

void SceneSpec::Validate() const {
  if (points.size() > 0) {
    if (points.size() % 3 != 0 || points.size() < 12 || !points.allFinite()) {
      throw InvalidInput("scene cloud needs at least 4 finite 3D points");
    }
    if (!(Diameter(points) > 0.0)) {
      throw InvalidInput("scene cloud has zero extent");
    }
  } else if (num_points < 4) {
    throw InvalidInput("scene needs at least 4 points");
  }
  if (num_frames < 1) throw InvalidInput("scene needs at least 1 frame");
  if (!(noise_sigma >= 0.0)) throw InvalidInput("noise must be >= 0");
  if (!(visibility > 0.0 && visibility <= 1.0)) {
    throw InvalidInput("visibility must lie in (0, 1]");
  }
  if (!(min_depth > 0.0 && max_depth >= min_depth)) {
    throw InvalidInput("need 0 < min_depth <= max_depth");
  }
  if (max_retries < 1) throw InvalidInput("max_retries must be >= 1");
  intrinsics.Validate();
}

Correspondences SyntheticScene::FrameCorrespondences(int frame) const {
  Correspondences c;
  c.x2d = observations.at(frame);
  const auto& vis = visible.at(frame);
  c.pts3d.resize(3 * static_cast<Eigen::Index>(vis.size()));
  for (size_t k = 0; k < vis.size(); ++k) {
    c.pts3d.segment<3>(3 * k) = points.segment<3>(3 * vis[k]);
  }
  return c;
}

SyntheticScene GenerateSynthetic(const SceneSpec& spec) {
  spec.Validate();
  std::mt19937_64 rng = MakeRng(spec.seed, "datagen");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);

  SyntheticScene scene;
  scene.intrinsics = spec.intrinsics;
  const int n = spec.points.size() > 0
                    ? static_cast<int>(spec.points.size() / 3)
                    : spec.num_points;

  if (spec.points.size() > 0) {
    Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
    for (int i = 0; i < n; ++i) centroid += spec.points.segment<3>(3 * i);
    centroid /= n;
    const double scale = 1.0 / Diameter(spec.points);
    scene.points.resize(3 * n);
    for (int i = 0; i < n; ++i) {
      scene.points.segment<3>(3 * i) =
          scale * (spec.points.segment<3>(3 * i) - centroid);
    }
  } else {
    // Uniform in a ball of diameter 1.
    scene.points.resize(3 * n);
    for (int i = 0; i < n; ++i) {
      const double radius = 0.5 * std::cbrt(unit(rng));
      scene.points.segment<3>(3 * i) = radius * RandomUnit(rng);
    }
  }

  for (int f = 0; f < spec.num_frames; ++f) {
    bool placed = false;
    for (int attempt = 0; attempt < spec.max_retries && !placed; ++attempt) {
      const double dist =
          spec.min_depth + (spec.max_depth - spec.min_depth) * unit(rng);
      const double roll = spec.max_roll * (2.0 * unit(rng) - 1.0);
      const Pose pose = LookAtOrigin(dist * RandomUnit(rng), roll);
      if (AllInFront(scene.points, pose)) {
        scene.poses.push_back(pose);
        placed = true;
      }
    }
    if (!placed) {
      throw GenerationFailed("could not place camera " + std::to_string(f) +
                             " with every point in front");
    }
  }

  const int per_frame = std::clamp(
      static_cast<int>(std::lround(spec.visibility * n)), 4, n);
  const int needed = std::min(2, spec.num_frames);
  bool covered = false;
  for (int attempt = 0; attempt < spec.max_retries && !covered; ++attempt) {
    scene.visible.assign(spec.num_frames, {});
    std::vector<int> seen(n, 0);
    std::vector<int> order(n);
    for (auto& vis : scene.visible) {
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      vis.assign(order.begin(), order.begin() + per_frame);
      for (const int i : vis) ++seen[i];
    }
    // Swap under-observed points into random frames in place of points
    // seen more often than needed, keeping every frame's count.
    std::vector<int> frames(spec.num_frames);
    std::iota(frames.begin(), frames.end(), 0);
    for (int i = 0; i < n; ++i) {
      if (seen[i] >= needed) continue;
      std::shuffle(frames.begin(), frames.end(), rng);
      for (const int f : frames) {
        if (seen[i] >= needed) break;
        auto& vis = scene.visible[f];
        if (std::find(vis.begin(), vis.end(), i) != vis.end()) continue;
        std::vector<int> spare;
        for (size_t k = 0; k < vis.size(); ++k) {
          if (seen[vis[k]] > needed) spare.push_back(static_cast<int>(k));
        }
        if (spare.empty()) continue;
        std::uniform_int_distribution<size_t> pick(0, spare.size() - 1);
        int& slot = vis[spare[pick(rng)]];
        --seen[slot];
        slot = i;
        ++seen[i];
      }
    }
    for (auto& vis : scene.visible) std::sort(vis.begin(), vis.end());
    covered = std::all_of(seen.begin(), seen.end(),
                          [needed](int s) { return s >= needed; });
  }
  if (!covered) {
    throw GenerationFailed("visibility masks leave points under-observed");
  }

  for (int f = 0; f < spec.num_frames; ++f) {
    const auto& vis = scene.visible[f];
    Eigen::VectorXd pts(3 * vis.size());
    for (size_t k = 0; k < vis.size(); ++k) {
      pts.segment<3>(3 * k) = scene.points.segment<3>(3 * vis[k]);
    }
    Eigen::VectorXd obs = Project(pts, scene.poses[f], scene.intrinsics);
    if (spec.noise_sigma > 0.0) {
      for (Eigen::Index k = 0; k < obs.size(); ++k) {
        obs[k] += spec.noise_sigma * noise(rng);
      }
    }
    scene.observations.push_back(std::move(obs));
  }
  return scene;
}

double Diameter(const Eigen::VectorXd& pts3d) {
  const Eigen::Index n = pts3d.size() / 3;
  double best = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      best = std::max(
          best, (pts3d.segment<3>(3 * i) - pts3d.segment<3>(3 * j)).norm());
    }
  }
  return best;
}

SimilarityAlignment AlignSimilarity(const Eigen::VectorXd& estimate,
                                    const Eigen::VectorXd& truth,
                                    const std::vector<int>& mask) {
  if (estimate.size() != truth.size() || estimate.size() % 3 != 0) {
    throw InvalidInput("alignment needs equally sized 3D point sets");
  }
  std::vector<int> idx = mask;
  if (idx.empty()) {
    idx.resize(truth.size() / 3);
    std::iota(idx.begin(), idx.end(), 0);
  }
  if (idx.size() < 3) throw InvalidInput("alignment needs at least 3 points");
  const Eigen::Index m = static_cast<Eigen::Index>(idx.size());
  Eigen::Matrix3Xd src(3, m);
  Eigen::Matrix3Xd dst(3, m);
  for (Eigen::Index k = 0; k < m; ++k) {
    src.col(k) = estimate.segment<3>(3 * idx[k]);
    dst.col(k) = truth.segment<3>(3 * idx[k]);
  }
  const Eigen::Matrix4d T = Eigen::umeyama(src, dst, true);
  SimilarityAlignment out;
  const Eigen::Matrix3d sR = T.block<3, 3>(0, 0);
  out.scale = std::cbrt(sR.determinant());
  out.rotation = sR / out.scale;
  out.translation = T.block<3, 1>(0, 3);
  const Eigen::Matrix3Xd aligned =
      (sR * src).colwise() + out.translation;
  out.rmse = std::sqrt((aligned - dst).colwise().squaredNorm().mean());
  return out;
}

}  // namespace bpnp
