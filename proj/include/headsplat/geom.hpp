#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <optional>
#include <string>

#include <json.hpp>

#include "headsplat/error.hpp"

namespace headsplat {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

struct Quaternion {
  double w = 1.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  double norm() const;
  Quaternion operator-() const { return {-w, -x, -y, -z}; }
  bool operator==(const Quaternion&) const = default;

  /// Rotation matrix of a unit quaternion.
  Mat3 to_matrix() const;
  /// Shortest-arc rotation taking unit vector `from` onto unit vector `to`.
  static Quaternion from_two_vectors(const Vec3& from, const Vec3& to);
  static Quaternion from_axis_angle(const Vec3& axis, double radians);
};

/// Throws ValidationError when the norm is below 1e-12.
Quaternion normalize_quaternion(const Quaternion& q);

/// World-space 3D covariance (symmetric PSD).
struct Covariance3 {
  Mat3 m = Mat3::Identity();
};

/// Screen-space covariance in pixel^2.
struct Covariance2 {
  Mat2 m = Mat2::Identity();
};

/// Sigma = R S S^T R^T. Rejects non-positive scales and the zero quaternion.
Covariance3 covariance_from_rs(const Quaternion& rotation, const Vec3& scale);

/// Pinhole camera, OpenCV convention: x right, y down, z forward.
struct Camera {
  Mat3 rotation = Mat3::Identity();  // world -> camera
  Vec3 translation = Vec3::Zero();
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;
  double near = 0.01;

  /// Throws ValidationError unless the rotation is orthonormal within 1e-6
  /// and the intrinsics are positive.
  void validate() const;

  Vec3 to_camera(const Vec3& world) const { return rotation * world + translation; }
  Vec3 position() const { return -rotation.transpose() * translation; }
  /// Camera z axis expressed in world coordinates.
  Vec3 forward() const { return rotation.row(2).transpose(); }

  nlohmann::json to_json() const;
  static Camera from_json(const nlohmann::json& j);

  bool operator==(const Camera&) const = default;
};

/// Camera at `eye` looking at `target` with world +y as up.
Camera look_at(const Vec3& eye, const Vec3& target, int width, int height, double fov_y_degrees,
               double near = 0.01);

/// Camera on a circle around `target`: yaw rotates about world +y starting
/// from the +z side (yaw 0 faces the front of the head), pitch tilts upward.
Camera orbit_camera(const Vec3& target, double distance, double yaw_degrees, double pitch_degrees,
                    int width, int height, double fov_y_degrees, double near = 0.01);

struct EwaOptions {
  double low_pass = 0.3;  // px^2 added to both diagonal entries
};

struct ProjectedGaussian {
  Vec2 mean;
  Covariance2 cov;
  double depth = 0.0;
};

/// Local affine (EWA) projection of a 3D Gaussian. Returns nullopt when the
/// camera-space depth of the mean is below the near plane.
std::optional<ProjectedGaussian> project_ewa(const Covariance3& sigma, const Vec3& mean,
                                             const Camera& cam, const EwaOptions& opts = {});

}  // namespace headsplat
