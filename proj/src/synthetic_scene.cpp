#include "cammotion/synthetic_scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "cammotion/error.hpp"

namespace cammotion {

namespace {

double uniform(std::mt19937_64& engine, double lo, double hi) {
    const double u = static_cast<double>(engine() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
}

} // namespace

SyntheticScene::SyntheticScene(std::uint64_t seed) : seed_(seed) {
    std::mt19937_64 engine(seed);
    for (int c = 0; c < 3; ++c) {
        base_(c) = uniform(engine, 0.4, 0.6);
        for (int a = 0; a < 3; ++a) gradient_(c, a) = uniform(engine, -0.02, 0.02);
        checker_amplitude_(c) = uniform(engine, 0.004, 0.008);
        checker_phase_(c) = uniform(engine, 0.0, 2.0 * std::numbers::pi);
    }
}

Rgb SyntheticScene::color_at(const Vec3& world) const {
    const double k = 2.0 * std::numbers::pi / checker_period_;
    Rgb out{};
    for (int c = 0; c < 3; ++c) {
        const double phase = checker_phase_(c);
        const double checker = std::sin(k * world.x() + phase) * std::sin(k * world.y() + 0.5 * phase) *
                               std::sin(k * world.z() + 0.25 * phase);
        const double v = base_(c) + gradient_.row(c).dot(world) + checker_amplitude_(c) * checker;
        out[static_cast<std::size_t>(c)] = std::clamp(v, 0.0, 1.0);
    }
    return out;
}

std::optional<Vec3> SyntheticScene::hit(double u, double v, const PinholeCamera& camera, const CameraPose& pose,
                                        double* depth_out) const {
    const Vec3 dir_cam((u - camera.cx) / camera.fx, (v - camera.cy) / camera.fy, 1.0);
    const Vec3 dir = pose.rotation.transpose() * dir_cam;
    const Vec3 origin = pose.center();
    double t_near = -std::numeric_limits<double>::infinity();
    double t_far = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        if (dir(a) == 0.0) {
            if (origin(a) < box_min_(a) || origin(a) > box_max_(a)) return std::nullopt;
            continue;
        }
        double t0 = (box_min_(a) - origin(a)) / dir(a);
        double t1 = (box_max_(a) - origin(a)) / dir(a);
        if (t0 > t1) std::swap(t0, t1);
        t_near = std::max(t_near, t0);
        t_far = std::min(t_far, t1);
    }
    if (!(t_far >= t_near) || !(t_far > 0.0)) return std::nullopt;
    // From inside the box the visible wall is the exit; from outside, the entry.
    const double t = t_near > 0.0 ? t_near : t_far;
    if (depth_out) *depth_out = t;
    return origin + t * dir;
}

std::optional<double> SyntheticScene::depth(double u, double v, const PinholeCamera& camera,
                                            const CameraPose& pose) const {
    double d = 0.0;
    if (!hit(u, v, camera, pose, &d)) return std::nullopt;
    return d;
}

std::optional<Rgb> SyntheticScene::color(double u, double v, const PinholeCamera& camera,
                                         const CameraPose& pose) const {
    const auto p = hit(u, v, camera, pose, nullptr);
    if (!p) return std::nullopt;
    return color_at(*p);
}

RgbdFrame SyntheticScene::render(const PinholeCamera& camera, const CameraPose& pose) const {
    camera.validate();
    RgbdFrame frame{ColorImage(camera.width, camera.height, 3), DepthImage(camera.width, camera.height, 1)};
    for (int y = 0; y < camera.height; ++y) {
        for (int x = 0; x < camera.width; ++x) {
            double d = 0.0;
            const auto p = hit(x, y, camera, pose, &d);
            if (!p) continue;
            const Rgb rgb = color_at(*p);
            for (int c = 0; c < 3; ++c) frame.color.at(x, y, c) = rgb[static_cast<std::size_t>(c)];
            frame.depth.at(x, y) = d;
        }
    }
    return frame;
}

nlohmann::json SyntheticScene::describe() const {
    return {{"kind", "textured-box-interior"},
            {"seed", seed_},
            {"box_min", {box_min_.x(), box_min_.y(), box_min_.z()}},
            {"box_max", {box_max_.x(), box_max_.y(), box_max_.z()}}};
}

SyntheticInput synth_scene(std::uint64_t seed, const PinholeCamera& camera) {
    SyntheticScene scene(seed);
    RgbdFrame frame = scene.render(camera, CameraPose::identity());
    return {std::move(scene), std::move(frame)};
}

Filler scene_filler(const SyntheticScene& scene) {
    return [scene](const FillRequest& req) {
        const RgbdFrame view = scene.render(req.view.camera, req.view.pose);
        if (!view.color.same_shape(req.color.width(), req.color.height())) {
            fail(ErrorKind::InvalidArgument, "scene filler: view camera does not match the raster");
        }
        ColorImage out = req.color;
        for (int y = 0; y < out.height(); ++y) {
            for (int x = 0; x < out.width(); ++x) {
                if (req.known.at(x, y)) continue;
                for (int c = 0; c < 3; ++c) out.at(x, y, c) = view.color.at(x, y, c);
            }
        }
        return out;
    };
}

DepthProvider scene_depth_provider(const SyntheticScene& scene) {
    return [scene](const ColorImage& filled, const ViewContext& view) {
        RgbdFrame rendered = scene.render(view.camera, view.pose);
        if (!rendered.depth.same_shape(filled.width(), filled.height())) {
            fail(ErrorKind::InvalidArgument, "scene depth: view camera does not match the raster");
        }
        return std::move(rendered.depth);
    };
}

} // namespace cammotion
