#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cammotion/image.hpp"

namespace cammotion {

using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Vec3 = Eigen::Vector3d;

/// Pinhole intrinsics in pixels.
struct PinholeCamera {
    double fx = 0.0;
    double fy = 0.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 0;
    int height = 0;

    /// Square pixels, principal point at the raster center, 55 degree vertical field of view.
    static PinholeCamera with_default_fov(int width, int height, double vertical_fov_deg = 55.0);

    /// Throws InvalidArgument unless fx, fy > 0 and the principal point is inside the raster.
    void validate() const;

    Mat3 matrix() const;
};

/// World-to-camera rigid transform: x_cam = rotation * x_world + translation.
/// Axes: +x right, +y down, +z forward.
struct CameraPose {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    static CameraPose identity() { return {}; }

    Vec3 apply(const Vec3& world) const { return rotation * world + translation; }
    CameraPose inverse() const;
    /// Camera center in world coordinates, -R^T t.
    Vec3 center() const { return -rotation.transpose() * translation; }
    Mat4 homogeneous() const;

    /// Max |R^T R - I| and |det R - 1|.
    double orthonormality_error() const;
};

/// Result applies b after a.
CameraPose compose(const CameraPose& a, const CameraPose& b);

struct Trajectory {
    std::vector<CameraPose> poses;

    std::size_t size() const noexcept { return poses.size(); }
    /// Pose i re-expressed relative to pose 0, so the first pose becomes identity.
    Trajectory relative_to_first() const;
};

enum class MotionKind { Zoom, Tilt, Pan, Pedestal, Truck, Roll, Rotate };

/// In/Up/Right/Clockwise are the positive sense of each kind.
enum class MotionDirection { In, Out, Up, Down, Left, Right, Clockwise, Anticlockwise };

struct MotionPrimitive {
    MotionKind kind = MotionKind::Zoom;
    MotionDirection direction = MotionDirection::In;
    /// Length units for zoom/pedestal/truck, degrees for tilt/pan/roll/rotate.
    double magnitude = 0.0;
    int frames = 1;
};

MotionKind parse_motion_kind(const std::string& name);
MotionDirection parse_motion_direction(const std::string& name);
std::string to_string(MotionKind kind);
std::string to_string(MotionDirection direction);

/// Translation kinds move the camera center in the named direction; rotation kinds
/// turn the camera about its own axes. Frame i carries fraction i/(N-1) of the magnitude.
Trajectory build_primitive(const MotionPrimitive& primitive,
                           std::optional<double> focus_distance = std::nullopt);

enum class CombineMode { Simultaneous, Sequential };

CombineMode parse_combine_mode(const std::string& name);

Trajectory combine(std::span<const Trajectory> parts, CombineMode mode);

/// Accepts 12 (3x4) or 16 (4x4) row-major numbers per pose.
Trajectory from_extrinsics(std::span<const std::vector<double>> matrices);

/// Row-major 3x4 [R | t], the export format for pose files.
std::vector<double> to_row_major_3x4(const CameraPose& pose);

inline constexpr int kDefaultFocusPatchHalfWidth = 10;

/// Mean depth over the (2h+1)^2 patch centered at (width/2, height/2).
double estimate_focus_distance(const DepthImage& depth,
                               int patch_half_width = kDefaultFocusPatchHalfWidth);

/// Camera-to-world rotations about the camera axes, angle in radians. The world-to-camera
/// rotation of a pan by theta is rotation_y(theta).transpose().
Mat3 rotation_x(double radians);
Mat3 rotation_y(double radians);
Mat3 rotation_z(double radians);

/// Nearest rotation in the Frobenius sense (SVD projection).
Mat3 nearest_rotation(const Mat3& m);

} // namespace cammotion
