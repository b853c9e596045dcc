#pragma once

#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "nvloc/constants.hpp"

namespace nvloc {

inline constexpr const char* kLabFrame = "lab";
inline constexpr const char* kTargetFrame = "nv_000";

/// A named orthonormal frame. rotation_to_lab maps frame coordinates to lab coordinates.
struct Frame {
  std::string name;
  Eigen::Matrix3d rotation_to_lab = Eigen::Matrix3d::Identity();

  /// NV quantization axis expressed in the lab frame.
  [[nodiscard]] Eigen::Vector3d z_axis_in_lab() const { return rotation_to_lab.col(2); }
};

/// Frame-tagged 3-vector. Arithmetic between vectors requires equal tags.
class Vector3 {
 public:
  Vector3() = default;
  Vector3(double x, double y, double z, std::string frame = kTargetFrame)
      : v_(x, y, z), frame_(std::move(frame)) {}
  Vector3(const Eigen::Vector3d& v, std::string frame) : v_(v), frame_(std::move(frame)) {}

  [[nodiscard]] const Eigen::Vector3d& components() const { return v_; }
  [[nodiscard]] const std::string& frame() const { return frame_; }
  [[nodiscard]] double operator[](int i) const { return v_[i]; }
  [[nodiscard]] double norm() const { return v_.norm(); }

  Vector3 operator+(const Vector3& o) const;
  Vector3 operator-(const Vector3& o) const;
  Vector3 operator*(double s) const { return {v_ * s, frame_}; }
  [[nodiscard]] double dot(const Vector3& o) const;

 private:
  Eigen::Vector3d v_ = Eigen::Vector3d::Zero();
  std::string frame_ = kTargetFrame;
};

/// Throws InputError when the tags differ.
void require_same_frame(const Vector3& a, const Vector3& b);

/// Rotation matrix of an NV centre whose <111> axis has lab azimuth `azimuth` (rad).
///
/// The lab frame has x along [110], y along [-110], z along [001]. The NV frame at
/// azimuth 0 has z along [111], x along [11-2] and y along [-110]; the other
/// orientations are rotations of it about lab z.
Eigen::Matrix3d nv_rotation(double azimuth);

/// Registry of frames known to a pipeline. Holds the lab frame and, by default,
/// the four NV orientations nv_000, nv_090, nv_180, nv_270 (named by azimuth in degrees).
class FrameRegistry {
 public:
  /// Lab + four NV orientations.
  FrameRegistry();

  static FrameRegistry lab_only();

  /// Adds or replaces a frame. Throws DomainError unless the matrix is a proper rotation (1e-12).
  void add(Frame frame);
  void add_nv(const std::string& name, double azimuth);

  [[nodiscard]] bool contains(const std::string& name) const;
  /// Throws InputError for unknown names.
  [[nodiscard]] const Frame& at(const std::string& name) const;
  [[nodiscard]] std::vector<std::string> names() const;

  /// Returns R_to^T R_from v tagged with `to`. Throws InputError on unknown frames or a tag mismatch.
  [[nodiscard]] Vector3 rotate(const Vector3& v, const std::string& from, const std::string& to) const;
  /// Re-expresses v in frame `to`.
  [[nodiscard]] Vector3 to_frame(const Vector3& v, const std::string& to) const;

  [[nodiscard]] nlohmann::json to_json() const;
  static FrameRegistry from_json(const nlohmann::json& j);

 private:
  std::map<std::string, Frame> frames_;
};

nlohmann::json constants_to_json(const PhysicalConstants& c);
PhysicalConstants constants_from_json(const nlohmann::json& j);

}  // namespace nvloc
