#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace hapticmesh {

using Vec3 = Eigen::Vector3d;
using Quat = Eigen::Quaterniond;

// Rigid transform from a local frame into the world frame.
struct Pose {
  Vec3 position = Vec3::Zero();
  Quat orientation = Quat::Identity();

  [[nodiscard]] Vec3 apply(const Vec3& local) const { return orientation * local + position; }
  [[nodiscard]] Vec3 rotate(const Vec3& local_dir) const { return orientation * local_dir; }
};

inline const Vec3& world_up() {
  static const Vec3 up(0.0, 0.0, 1.0);
  return up;
}

}  // namespace hapticmesh
