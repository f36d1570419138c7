#pragma once

#include <cstdint>
#include <optional>

#include "json.hpp"

#include "cammotion/geometry.hpp"
#include "cammotion/pointcloud.hpp"

namespace cammotion {

/// Interior of an axis-aligned box seen from the origin looking down +z. The color field is a
/// smooth function of world position (per-channel gradient plus a soft 3D checker), so it is
/// continuous across the seams between walls.
class SyntheticScene {
public:
    explicit SyntheticScene(std::uint64_t seed);

    std::uint64_t seed() const noexcept { return seed_; }
    const Vec3& box_min() const noexcept { return box_min_; }
    const Vec3& box_max() const noexcept { return box_max_; }

    Rgb color_at(const Vec3& world) const;

    /// Camera-frame depth of the first surface hit through pixel (u, v); nullopt on a miss.
    std::optional<double> depth(double u, double v, const PinholeCamera& camera, const CameraPose& pose) const;
    /// Surface color through pixel (u, v); nullopt on a miss.
    std::optional<Rgb> color(double u, double v, const PinholeCamera& camera, const CameraPose& pose) const;

    /// Analytic RGB-D view sampled at pixel centers; misses get depth 0 and black.
    RgbdFrame render(const PinholeCamera& camera, const CameraPose& pose) const;

    nlohmann::json describe() const;

private:
    std::optional<Vec3> hit(double u, double v, const PinholeCamera& camera, const CameraPose& pose,
                            double* depth_out) const;

    std::uint64_t seed_;
    Vec3 box_min_{-2.0, -1.5, -2.0};
    Vec3 box_max_{2.0, 1.5, 4.0};
    Vec3 base_;
    Eigen::Matrix3d gradient_; // row = channel, column = world axis
    Vec3 checker_amplitude_;
    Vec3 checker_phase_;
    double checker_period_ = 2.5;
};

struct SyntheticInput {
    SyntheticScene scene;
    RgbdFrame frame;
};

/// Scene for `seed` and its RGB-D view at the identity pose.
SyntheticInput synth_scene(std::uint64_t seed, const PinholeCamera& camera);

/// Fills holes with the analytic color at the view's pose.
Filler scene_filler(const SyntheticScene& scene);
/// Analytic depth at the view's pose.
DepthProvider scene_depth_provider(const SyntheticScene& scene);

} // namespace cammotion
