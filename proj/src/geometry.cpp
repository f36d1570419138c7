#include "cammotion/geometry.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/LU>
#include <Eigen/SVD>

#include "cammotion/error.hpp"

namespace cammotion {

namespace {

// Rotation blocks closer than this to orthonormal are taken verbatim.
constexpr double kVerbatimTolerance = 4.0 * std::numeric_limits<double>::epsilon();
constexpr double kAcceptTolerance = 1e-6;

double degrees_to_radians(double degrees) { return degrees * std::numbers::pi / 180.0; }

double direction_sign(MotionKind kind, MotionDirection direction) {
    auto bad = [&]() -> double {
        fail(ErrorKind::InvalidArgument,
             "direction '" + to_string(direction) + "' is not valid for motion '" +
                 to_string(kind) + "'");
    };
    switch (kind) {
    case MotionKind::Zoom:
        if (direction == MotionDirection::In) return 1.0;
        if (direction == MotionDirection::Out) return -1.0;
        return bad();
    case MotionKind::Tilt:
    case MotionKind::Pedestal:
        if (direction == MotionDirection::Up) return 1.0;
        if (direction == MotionDirection::Down) return -1.0;
        return bad();
    case MotionKind::Pan:
    case MotionKind::Truck:
        if (direction == MotionDirection::Right) return 1.0;
        if (direction == MotionDirection::Left) return -1.0;
        return bad();
    case MotionKind::Roll:
    case MotionKind::Rotate:
        if (direction == MotionDirection::Clockwise) return 1.0;
        if (direction == MotionDirection::Anticlockwise) return -1.0;
        return bad();
    }
    return bad();
}

CameraPose primitive_pose(MotionKind kind, double value, double focus) {
    CameraPose pose;
    switch (kind) {
    case MotionKind::Zoom:
        pose.translation = -Vec3(0.0, 0.0, value);
        break;
    case MotionKind::Pedestal:
        // Up is -y.
        pose.translation = -Vec3(0.0, -value, 0.0);
        break;
    case MotionKind::Truck:
        pose.translation = -Vec3(value, 0.0, 0.0);
        break;
    case MotionKind::Tilt:
        pose.rotation = rotation_x(degrees_to_radians(value)).transpose();
        break;
    case MotionKind::Pan:
        pose.rotation = rotation_y(degrees_to_radians(value)).transpose();
        break;
    case MotionKind::Roll:
        pose.rotation = rotation_z(degrees_to_radians(value)).transpose();
        break;
    case MotionKind::Rotate: {
        // Orbit about the point at depth `focus` on the optical axis.
        const double theta = degrees_to_radians(value);
        pose.rotation = rotation_y(theta).transpose();
        pose.translation = Vec3(focus * std::sin(theta), 0.0, focus - focus * std::cos(theta));
        break;
    }
    }
    return pose;
}

} // namespace

PinholeCamera PinholeCamera::with_default_fov(int width, int height, double vertical_fov_deg) {
    if (width <= 0 || height <= 0) {
        fail(ErrorKind::InvalidArgument, "raster size must be positive");
    }
    if (!(vertical_fov_deg > 0.0 && vertical_fov_deg < 180.0)) {
        fail(ErrorKind::InvalidArgument, "vertical field of view must lie in (0, 180) degrees");
    }
    PinholeCamera cam;
    cam.width = width;
    cam.height = height;
    cam.fy = (height / 2.0) / std::tan(degrees_to_radians(vertical_fov_deg) / 2.0);
    cam.fx = cam.fy;
    cam.cx = width / 2.0;
    cam.cy = height / 2.0;
    return cam;
}

void PinholeCamera::validate() const {
    if (width <= 0 || height <= 0) fail(ErrorKind::InvalidArgument, "raster size must be positive");
    if (!(fx > 0.0) || !(fy > 0.0)) fail(ErrorKind::InvalidArgument, "focal lengths must be positive");
    if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height)) {
        fail(ErrorKind::InvalidArgument, "principal point must lie inside the raster");
    }
}

Mat3 PinholeCamera::matrix() const {
    Mat3 k;
    k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
    return k;
}

CameraPose CameraPose::inverse() const {
    CameraPose inv;
    inv.rotation = rotation.transpose();
    inv.translation = -(inv.rotation * translation);
    return inv;
}

Mat4 CameraPose::homogeneous() const {
    Mat4 m = Mat4::Identity();
    m.topLeftCorner<3, 3>() = rotation;
    m.topRightCorner<3, 1>() = translation;
    return m;
}

double CameraPose::orthonormality_error() const {
    const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
    return std::max(ortho, std::abs(rotation.determinant() - 1.0));
}

CameraPose compose(const CameraPose& a, const CameraPose& b) {
    CameraPose out;
    out.rotation = b.rotation * a.rotation;
    out.translation = b.rotation * a.translation + b.translation;
    return out;
}

Trajectory Trajectory::relative_to_first() const {
    Trajectory out;
    if (poses.empty()) return out;
    const CameraPose first_inv = poses.front().inverse();
    out.poses.reserve(poses.size());
    for (const auto& p : poses) out.poses.push_back(compose(first_inv, p));
    out.poses.front() = CameraPose::identity();
    return out;
}

MotionKind parse_motion_kind(const std::string& name) {
    if (name == "zoom") return MotionKind::Zoom;
    if (name == "tilt") return MotionKind::Tilt;
    if (name == "pan") return MotionKind::Pan;
    if (name == "pedestal") return MotionKind::Pedestal;
    if (name == "truck") return MotionKind::Truck;
    if (name == "roll") return MotionKind::Roll;
    if (name == "rotate") return MotionKind::Rotate;
    fail(ErrorKind::InvalidArgument, "unknown motion kind '" + name + "'");
}

MotionDirection parse_motion_direction(const std::string& name) {
    if (name == "in") return MotionDirection::In;
    if (name == "out") return MotionDirection::Out;
    if (name == "up") return MotionDirection::Up;
    if (name == "down") return MotionDirection::Down;
    if (name == "left") return MotionDirection::Left;
    if (name == "right") return MotionDirection::Right;
    if (name == "clockwise") return MotionDirection::Clockwise;
    if (name == "anticlockwise" || name == "counterclockwise") return MotionDirection::Anticlockwise;
    fail(ErrorKind::InvalidArgument, "unknown motion direction '" + name + "'");
}

std::string to_string(MotionKind kind) {
    switch (kind) {
    case MotionKind::Zoom: return "zoom";
    case MotionKind::Tilt: return "tilt";
    case MotionKind::Pan: return "pan";
    case MotionKind::Pedestal: return "pedestal";
    case MotionKind::Truck: return "truck";
    case MotionKind::Roll: return "roll";
    case MotionKind::Rotate: return "rotate";
    }
    return "unknown";
}

std::string to_string(MotionDirection direction) {
    switch (direction) {
    case MotionDirection::In: return "in";
    case MotionDirection::Out: return "out";
    case MotionDirection::Up: return "up";
    case MotionDirection::Down: return "down";
    case MotionDirection::Left: return "left";
    case MotionDirection::Right: return "right";
    case MotionDirection::Clockwise: return "clockwise";
    case MotionDirection::Anticlockwise: return "anticlockwise";
    }
    return "unknown";
}

Trajectory build_primitive(const MotionPrimitive& primitive, std::optional<double> focus_distance) {
    if (primitive.frames < 1) {
        fail(ErrorKind::InvalidArgument, "motion primitive needs at least one frame");
    }
    if (!(primitive.magnitude >= 0.0) || !std::isfinite(primitive.magnitude)) {
        fail(ErrorKind::InvalidArgument, "motion magnitude must be finite and non-negative");
    }
    const double sign = direction_sign(primitive.kind, primitive.direction);
    double focus = 0.0;
    if (primitive.kind == MotionKind::Rotate) {
        if (!focus_distance) {
            fail(ErrorKind::MissingParameter, "rotate motion requires a focus distance");
        }
        if (!(*focus_distance > 0.0) || !std::isfinite(*focus_distance)) {
            fail(ErrorKind::InvalidArgument, "focus distance must be positive");
        }
        focus = *focus_distance;
    }

    Trajectory traj;
    traj.poses.reserve(static_cast<std::size_t>(primitive.frames));
    const int n = primitive.frames;
    for (int i = 0; i < n; ++i) {
        const double fraction = n == 1 ? 0.0 : static_cast<double>(i) / (n - 1);
        traj.poses.push_back(primitive_pose(primitive.kind, sign * primitive.magnitude * fraction, focus));
    }
    return traj;
}

CombineMode parse_combine_mode(const std::string& name) {
    if (name == "simultaneous") return CombineMode::Simultaneous;
    if (name == "sequential") return CombineMode::Sequential;
    fail(ErrorKind::InvalidArgument, "unknown combine mode '" + name + "'");
}

Trajectory combine(std::span<const Trajectory> parts, CombineMode mode) {
    if (parts.empty()) fail(ErrorKind::InvalidArgument, "combine needs at least one trajectory");
    for (std::size_t k = 0; k < parts.size(); ++k) {
        if (parts[k].poses.empty()) {
            fail(ErrorKind::InvalidArgument, "trajectory " + std::to_string(k) + " is empty");
        }
    }

    Trajectory out;
    if (mode == CombineMode::Simultaneous) {
        const std::size_t n = parts.front().size();
        for (std::size_t k = 1; k < parts.size(); ++k) {
            if (parts[k].size() != n) {
                fail(ErrorKind::InvalidArgument,
                     "simultaneous combination needs equal lengths: trajectory 0 has " +
                         std::to_string(n) + " poses, trajectory " + std::to_string(k) + " has " +
                         std::to_string(parts[k].size()));
            }
        }
        out.poses.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            CameraPose acc = parts.front().poses[i];
            for (std::size_t k = 1; k < parts.size(); ++k) acc = compose(acc, parts[k].poses[i]);
            out.poses.push_back(acc);
        }
        return out;
    }

    out.poses = parts.front().poses;
    for (std::size_t k = 1; k < parts.size(); ++k) {
        const CameraPose anchor = out.poses.back();
        const CameraPose first_inv = parts[k].poses.front().inverse();
        for (std::size_t j = 1; j < parts[k].size(); ++j) {
            out.poses.push_back(compose(anchor, compose(first_inv, parts[k].poses[j])));
        }
    }
    return out;
}

Trajectory from_extrinsics(std::span<const std::vector<double>> matrices) {
    Trajectory traj;
    traj.poses.reserve(matrices.size());
    for (std::size_t k = 0; k < matrices.size(); ++k) {
        const auto& m = matrices[k];
        const std::string where = "extrinsic matrix " + std::to_string(k);
        if (m.size() != 12 && m.size() != 16) {
            fail(ErrorKind::InvalidArgument,
                 where + " has " + std::to_string(m.size()) + " entries, expected 12 or 16");
        }
        for (double v : m) {
            if (!std::isfinite(v)) fail(ErrorKind::InvalidPose, where + " has a non-finite entry");
        }
        if (m.size() == 16) {
            const double bottom = std::max({std::abs(m[12]), std::abs(m[13]), std::abs(m[14]),
                                            std::abs(m[15] - 1.0)});
            if (bottom > kAcceptTolerance) {
                fail(ErrorKind::InvalidPose, where + " bottom row is not [0 0 0 1]");
            }
        }
        CameraPose pose;
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) pose.rotation(r, c) = m[static_cast<std::size_t>(r * 4 + c)];
            pose.translation(r) = m[static_cast<std::size_t>(r * 4 + 3)];
        }
        const double err = pose.orthonormality_error();
        if (!(err <= kAcceptTolerance)) {
            fail(ErrorKind::InvalidPose,
                 where + " rotation block is not orthonormal (error " + std::to_string(err) + ")");
        }
        if (err > kVerbatimTolerance) pose.rotation = nearest_rotation(pose.rotation);
        traj.poses.push_back(pose);
    }
    return traj;
}

std::vector<double> to_row_major_3x4(const CameraPose& pose) {
    std::vector<double> out;
    out.reserve(12);
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) out.push_back(pose.rotation(r, c));
        out.push_back(pose.translation(r));
    }
    return out;
}

double estimate_focus_distance(const DepthImage& depth, int patch_half_width) {
    if (patch_half_width < 0) fail(ErrorKind::InvalidArgument, "patch half width must be non-negative");
    const int x0 = depth.width() / 2;
    const int y0 = depth.height() / 2;
    const int h = patch_half_width;
    if (x0 - h < 0 || y0 - h < 0 || x0 + h >= depth.width() || y0 + h >= depth.height()) {
        fail(ErrorKind::InvalidArgument, "focus patch of half width " + std::to_string(h) +
                                             " exceeds a " + std::to_string(depth.width()) + "x" +
                                             std::to_string(depth.height()) + " raster");
    }
    double sum = 0.0;
    for (int y = y0 - h; y <= y0 + h; ++y) {
        for (int x = x0 - h; x <= x0 + h; ++x) {
            const double d = depth.at(x, y);
            if (!(d > 0.0) || !std::isfinite(d)) {
                fail(ErrorKind::InvalidDepth, "non-positive depth at (" + std::to_string(x) + ", " +
                                                  std::to_string(y) + ") inside the focus patch");
            }
            sum += d;
        }
    }
    const double side = 2.0 * h + 1.0;
    return sum / (side * side);
}

Mat3 rotation_x(double radians) {
    const double c = std::cos(radians), s = std::sin(radians);
    Mat3 r;
    r << 1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c;
    return r;
}

Mat3 rotation_y(double radians) {
    const double c = std::cos(radians), s = std::sin(radians);
    Mat3 r;
    r << c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c;
    return r;
}

Mat3 rotation_z(double radians) {
    const double c = std::cos(radians), s = std::sin(radians);
    Mat3 r;
    r << c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0;
    return r;
}

Mat3 nearest_rotation(const Mat3& m) {
    Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 u = svd.matrixU();
    const Mat3& v = svd.matrixV();
    if ((u * v.transpose()).determinant() < 0.0) u.col(2) = -u.col(2);
    return u * v.transpose();
}

} // namespace cammotion
