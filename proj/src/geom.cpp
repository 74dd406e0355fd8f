#include "headsplat/geom.hpp"

#include <Eigen/Geometry>
#include <cmath>

#include "headsplat/error.hpp"

namespace headsplat {

double Quaternion::norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

Mat3 Quaternion::to_matrix() const {
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

Quaternion Quaternion::from_two_vectors(const Vec3& from, const Vec3& to) {
  const Eigen::Quaterniond q = Eigen::Quaterniond::FromTwoVectors(from, to);
  return normalize_quaternion({q.w(), q.x(), q.y(), q.z()});
}

Quaternion Quaternion::from_axis_angle(const Vec3& axis, double radians) {
  const Vec3 a = axis.normalized();
  const double s = std::sin(radians / 2);
  return {std::cos(radians / 2), a.x() * s, a.y() * s, a.z() * s};
}

Quaternion normalize_quaternion(const Quaternion& q) {
  const double n = q.norm();
  if (!(n > 1e-12)) throw ValidationError("cannot normalize a zero quaternion");
  return {q.w / n, q.x / n, q.y / n, q.z / n};
}

Covariance3 covariance_from_rs(const Quaternion& rotation, const Vec3& scale) {
  if (!(scale.x() > 0 && scale.y() > 0 && scale.z() > 0))
    throw ValidationError("scale components must be positive");
  const Mat3 r = normalize_quaternion(rotation).to_matrix();
  const Mat3 rs = r * scale.asDiagonal();
  Covariance3 out;
  out.m = rs * rs.transpose();
  // Symmetrize to remove round-off asymmetry.
  out.m = 0.5 * (out.m + out.m.transpose()).eval();
  return out;
}

void Camera::validate() const {
  const Mat3 rtr = rotation.transpose() * rotation;
  if ((rtr - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6)
    throw ValidationError("camera rotation is not orthonormal");
  if (!(fx > 0 && fy > 0)) throw ValidationError("camera focal lengths must be positive");
  if (width < 1 || height < 1) throw ValidationError("camera image size must be >= 1");
  if (!(near > 0)) throw ValidationError("camera near plane must be positive");
}

nlohmann::json Camera::to_json() const {
  nlohmann::json w2c = nlohmann::json::array();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) w2c.push_back(rotation(r, c));
    w2c.push_back(translation[r]);
  }
  return {{"world_to_cam", w2c}, {"fx", fx},         {"fy", fy},
          {"cx", cx},            {"cy", cy},         {"width", width},
          {"height", height},    {"near", near}};
}

Camera Camera::from_json(const nlohmann::json& j) {
  Camera cam;
  const auto& w2c = j.at("world_to_cam");
  if (!w2c.is_array() || w2c.size() != 12)
    throw ValidationError("world_to_cam must hold 12 numbers (3x4 row-major)");
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) cam.rotation(r, c) = w2c.at(r * 4 + c).get<double>();
    cam.translation[r] = w2c.at(r * 4 + 3).get<double>();
  }
  cam.fx = j.at("fx").get<double>();
  cam.fy = j.at("fy").get<double>();
  cam.cx = j.at("cx").get<double>();
  cam.cy = j.at("cy").get<double>();
  cam.width = j.at("width").get<int>();
  cam.height = j.at("height").get<int>();
  cam.near = j.value("near", 0.01);
  cam.validate();
  return cam;
}

Camera look_at(const Vec3& eye, const Vec3& target, int width, int height, double fov_y_degrees,
               double near) {
  const Vec3 f = (target - eye).normalized();
  Vec3 up(0, 1, 0);
  if (std::abs(f.dot(up)) > 1 - 1e-9) up = Vec3(0, 0, 1);
  const Vec3 right = f.cross(up).normalized();
  const Vec3 down = f.cross(right);
  Camera cam;
  cam.rotation.row(0) = right.transpose();
  cam.rotation.row(1) = down.transpose();
  cam.rotation.row(2) = f.transpose();
  cam.translation = -cam.rotation * eye;
  const double focal = 0.5 * height / std::tan(0.5 * fov_y_degrees * M_PI / 180.0);
  cam.fx = focal;
  cam.fy = focal;
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;
  cam.width = width;
  cam.height = height;
  cam.near = near;
  return cam;
}

Camera orbit_camera(const Vec3& target, double distance, double yaw_degrees, double pitch_degrees,
                    int width, int height, double fov_y_degrees, double near) {
  if (!(distance > 0)) throw ValidationError("orbit distance must be positive");
  const double yaw = yaw_degrees * M_PI / 180.0;
  const double pitch = pitch_degrees * M_PI / 180.0;
  const Vec3 dir(std::sin(yaw) * std::cos(pitch), std::sin(pitch), std::cos(yaw) * std::cos(pitch));
  return look_at(target + distance * dir, target, width, height, fov_y_degrees, near);
}

std::optional<ProjectedGaussian> project_ewa(const Covariance3& sigma, const Vec3& mean,
                                             const Camera& cam, const EwaOptions& opts) {
  const Vec3 t = cam.to_camera(mean);
  if (!(t.z() >= cam.near)) return std::nullopt;
  const double iz = 1.0 / t.z();
  Eigen::Matrix<double, 2, 3> j;
  j << cam.fx * iz, 0.0, -cam.fx * t.x() * iz * iz,
      0.0, cam.fy * iz, -cam.fy * t.y() * iz * iz;
  const Eigen::Matrix<double, 2, 3> jw = j * cam.rotation;
  Mat2 cov = jw * sigma.m * jw.transpose();
  cov(0, 1) = cov(1, 0) = 0.5 * (cov(0, 1) + cov(1, 0));
  cov(0, 0) += opts.low_pass;
  cov(1, 1) += opts.low_pass;
  ProjectedGaussian out;
  out.mean = Vec2(cam.fx * t.x() * iz + cam.cx, cam.fy * t.y() * iz + cam.cy);
  out.cov.m = cov;
  out.depth = t.z();
  return out;
}

}  // namespace headsplat
