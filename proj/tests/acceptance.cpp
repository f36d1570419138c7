// Acceptance checks: one PASS/FAIL line per criterion, each with its time budget.
// Usage: acceptance <path-to-cammotion-cli>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Geometry>

#include "cammotion/diffusion.hpp"
#include "cammotion/error.hpp"
#include "cammotion/geometry.hpp"
#include "cammotion/io.hpp"
#include "cammotion/metrics.hpp"
#include "cammotion/pipeline.hpp"
#include "cammotion/pointcloud.hpp"
#include "cammotion/synthetic_scene.hpp"

using namespace cammotion;
namespace fs = std::filesystem;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

struct Outcome {
    bool ok = false;
    std::string detail;
};

int g_failures = 0;

void criterion(int id, const char* name, double budget_s, const std::function<Outcome()>& body) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
        out = body();
    } catch (const std::exception& e) {
        out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs < budget_s;
    const bool pass = out.ok && in_time;
    if (!pass) ++g_failures;
    std::printf("[%s] %2d %-34s %8.3f s (budget %g s)  %s%s\n", pass ? "PASS" : "FAIL", id, name, secs, budget_s,
                out.detail.c_str(), in_time ? "" : "  [over time budget]");
    std::fflush(stdout);
}

char buf[512];

template <typename... Args>
std::string fmt(const char* f, Args... args) {
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

CameraPose translate_center(const Vec3& c) {
    CameraPose p;
    p.translation = -c;
    return p;
}

// 1. Lift then render at the same pose.
Outcome round_trip() {
    const PinholeCamera cam = PinholeCamera::with_default_fov(256, 256);
    const auto s = synth_scene(1, cam);
    const RenderResult r = render(lift(s.frame, cam, CameraPose::identity()), cam, CameraPose::identity());
    std::size_t valid = 0, mismatched = 0;
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            if (s.frame.depth.at(x, y) <= 0.0) continue;
            ++valid;
            bool same = r.mask.at(x, y);
            for (int c = 0; c < 3 && same; ++c) same = r.color.at(x, y, c) == s.frame.color.at(x, y, c);
            mismatched += !same;
        }
    }
    return {mismatched == 0 && valid > 0, fmt("%zu valid pixels, %zu mismatched", valid, mismatched)};
}

// 2. Renderer against a sort-based oracle: gather every contributor per pixel, pick the
// smallest (depth, index) pair.
Outcome zbuffer_oracle() {
    std::mt19937_64 rng(2024);
    const PinholeCamera cam = PinholeCamera::with_default_fov(96, 72);
    std::size_t disagreements = 0, total_points = 0;
    for (int trial = 0; trial < 100; ++trial) {
        std::uniform_int_distribution<std::size_t> size(1, 10000);
        std::uniform_real_distribution<double> xy(-2.0, 2.0), z(-1.0, 5.0), col(0.0, 1.0);
        const std::size_t n = size(rng);
        total_points += n;
        PointCloud cloud;
        for (std::size_t i = 0; i < n; ++i) {
            Vec3 p(xy(rng), xy(rng), z(rng));
            if (i > 0 && rng() % 8 == 0) p = cloud.positions[rng() % i]; // exact ties
            cloud.positions.push_back(p);
            cloud.colors.push_back({col(rng), col(rng), col(rng)});
            cloud.source_view.push_back(0);
        }
        CameraPose pose;
        pose.rotation = Eigen::AngleAxisd(0.2 * (trial % 5), Vec3(0.3, 1.0, 0.1).normalized()).toRotationMatrix();
        pose.translation = Vec3(0.05 * (trial % 3), -0.1, 0.2);
        const RenderResult r = render(cloud, cam, pose);

        std::vector<std::vector<std::pair<double, std::size_t>>> hits(static_cast<std::size_t>(cam.width) * cam.height);
        for (std::size_t i = 0; i < n; ++i) {
            const Vec3 pc = pose.apply(cloud.positions[i]);
            if (!(pc.z() > 1e-4)) continue;
            const double u = cam.fx * pc.x() / pc.z() + cam.cx;
            const double v = cam.fy * pc.y() / pc.z() + cam.cy;
            const double px = std::floor(u + 0.5), py = std::floor(v + 0.5);
            if (px < 0 || py < 0 || px >= cam.width || py >= cam.height) continue;
            hits[static_cast<std::size_t>(py) * cam.width + static_cast<std::size_t>(px)].push_back({pc.z(), i});
        }
        for (int y = 0; y < cam.height; ++y) {
            for (int x = 0; x < cam.width; ++x) {
                auto& h = hits[static_cast<std::size_t>(y) * cam.width + x];
                if (h.empty()) {
                    disagreements += r.mask.at(x, y) != 0;
                    continue;
                }
                const auto best = *std::min_element(h.begin(), h.end());
                const Rgb& c = cloud.colors[best.second];
                const bool same = r.mask.at(x, y) && r.depth_buffer.at(x, y) == best.first &&
                                  r.winner.at(x, y) == static_cast<std::int64_t>(best.second) &&
                                  r.color.at(x, y, 0) == c[0] && r.color.at(x, y, 1) == c[1] && r.color.at(x, y, 2) == c[2];
                disagreements += !same;
            }
        }
    }
    return {disagreements == 0, fmt("100 clouds, %zu points, %zu pixel disagreements", total_points, disagreements)};
}

// 3. One case of depth-scale recovery.
Outcome depth_scale_case(double c) {
    const PinholeCamera cam = PinholeCamera::with_default_fov(256, 256);
    const auto s = synth_scene(3, cam);
    const PointCloud reference = lift(s.frame, cam, CameraPose::identity());
    const CameraPose pose = translate_center(Vec3(0.3, -0.1, -0.3));
    RgbdFrame candidate = s.scene.render(cam, pose);
    for (double& d : candidate.depth.data()) d *= c;
    const RenderResult prefill = render(reference, cam, pose);
    Mask hole(cam.width, cam.height, 1);
    for (std::size_t k = 0; k < hole.data().size(); ++k) hole.data()[k] = !prefill.mask.data()[k];
    const DepthScaleFit fit = optimize_depth_scale(candidate, hole, cam, pose, reference);
    const double rel = std::abs(fit.scale * c - 1.0);
    return {rel < 0.01, fmt("c=%.2f d=%.6f expected %.6f rel.err %.2e", c, fit.scale, 1.0 / c, rel)};
}

// 4. Oracle reconstruction from every t0.
Outcome oracle_reconstruction() {
    const NoiseSchedule s = select_sampling_steps(make_schedule(), 25);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    LatentSequence v0(14, 3, 64, 64);
    for (double& v : v0.data) v = u(rng);
    double worst = 0.0;
    for (int t0 : {5, 10, 15, 20, 25}) {
        const InversionResult inv = invert(v0, t0, s, 100 + static_cast<std::uint64_t>(t0));
        const LatentSequence out = generate(inv.latents, t0, oracle_denoiser(inv.noise), s, 0.0, 7);
        for (std::size_t k = 0; k < v0.data.size(); ++k) worst = std::max(worst, std::abs(out.data[k] - v0.data[k]));
    }
    return {worst < 1e-9, fmt("max |V0' - V0| = %.3e over t0 in {5,10,15,20,25}", worst)};
}

// 5. sigma_t against the posterior variance.
Outcome sigma_identity() {
    const NoiseSchedule s = select_sampling_steps(make_schedule(), 25);
    double worst = 0.0;
    for (int pos = 1; pos < s.ladder_length(); ++pos) {
        const int t = s.ladder_step(pos), tp = s.ladder_step(pos - 1);
        const double at = s.alpha_bar_at(t), ap = s.alpha_bar_at(tp);
        const double sig = ddim_sigma(s, t, tp, 1.0);
        worst = std::max(worst, std::abs(sig * sig - (1 - ap) / (1 - at) * (1 - at / ap)));
    }
    return {worst < 1e-12, fmt("max deviation %.3e across %d steps", worst, s.ladder_length() - 1)};
}

// 6. Distance to the Stage I frames grows with t0.
Outcome t0_tradeoff() {
    const PinholeCamera cam = PinholeCamera::with_default_fov(64, 64);
    const auto s = synth_scene(6, cam);
    MotionPrimitive zoom;
    zoom.kind = MotionKind::Zoom;
    zoom.direction = MotionDirection::Out;
    zoom.magnitude = 0.5;
    zoom.frames = 14;
    const StageOneResult s1 = stage_one(s.frame, build_primitive(zoom), cam, diffusion_filler(), nearest_valid_depth_provider());
    const LatentSequence v0 = frames_to_latents(s1.frames);
    const NoiseSchedule sched = select_sampling_steps(make_schedule(), 25);
    const Denoiser denoiser = smoothing_denoiser(sched);

    std::vector<double> means;
    for (int t0 : {5, 10, 15, 20}) {
        double total = 0.0;
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const InversionResult inv = invert(v0, t0, sched, seed);
            const LatentSequence out = generate(inv.latents, t0, denoiser, sched, 1.0, seed);
            double sq = 0.0;
            for (std::size_t k = 0; k < v0.data.size(); ++k) sq += (out.data[k] - v0.data[k]) * (out.data[k] - v0.data[k]);
            total += std::sqrt(sq);
        }
        means.push_back(total / 20.0);
    }
    bool ok = true;
    for (std::size_t i = 1; i < means.size(); ++i) ok = ok && means[i] >= means[i - 1];
    return {ok, fmt("mean l2 at t0 5/10/15/20: %.4f %.4f %.4f %.4f", means[0], means[1], means[2], means[3])};
}

// 7. Closure of a full orbit and of a pan there and back.
Outcome closure() {
    MotionPrimitive orbit;
    orbit.kind = MotionKind::Rotate;
    orbit.direction = MotionDirection::Clockwise;
    orbit.magnitude = 360.0;
    orbit.frames = 37; // 36 steps
    const Trajectory ring = build_primitive(orbit, 2.5);

    MotionPrimitive pan;
    pan.kind = MotionKind::Pan;
    pan.direction = MotionDirection::Right;
    pan.magnitude = 20.0;
    pan.frames = 8;
    MotionPrimitive back = pan;
    back.direction = MotionDirection::Left;
    const std::vector<Trajectory> parts = {build_primitive(pan), build_primitive(back)};
    const Trajectory there_and_back = combine(parts, CombineMode::Sequential);

    const double ring_end = (ring.poses.back().homogeneous() - Mat4::Identity()).cwiseAbs().maxCoeff();
    const double pan_end = (there_and_back.poses.back().homogeneous() - Mat4::Identity()).cwiseAbs().maxCoeff();
    double ortho = 0.0;
    for (const auto* t : {&ring, &there_and_back}) {
        for (const auto& p : t->poses) {
            ortho = std::max(ortho, (p.rotation.transpose() * p.rotation - Mat3::Identity()).cwiseAbs().maxCoeff());
        }
    }
    return {ring_end < 1e-9 && pan_end < 1e-9 && ortho < 1e-9,
            fmt("orbit end %.2e, pan end %.2e, max |R^T R - I| %.2e", ring_end, pan_end, ortho)};
}

// 8. ATE invariance and the single-error RPE closed form.
Outcome metrics() {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> g;
    auto random_rotation = [&] {
        Eigen::Quaterniond q(g(rng), g(rng), g(rng), g(rng));
        return Mat3(q.normalized().toRotationMatrix());
    };
    auto pose_from = [](const Mat3& r, const Vec3& c) {
        CameraPose p;
        p.rotation = r;
        p.translation = -r * c;
        return p;
    };
    double worst_ate = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        PoseTrack ref, est;
        const Mat3 r0 = random_rotation();
        const double scale = std::exp(g(rng));
        const Vec3 t0(3 * g(rng), 3 * g(rng), 3 * g(rng));
        for (int i = 0; i < 10; ++i) {
            const Mat3 r = random_rotation();
            const Vec3 c(g(rng), g(rng), g(rng));
            ref.poses.push_back(pose_from(r, c));
            est.poses.push_back(pose_from(r * r0.transpose(), scale * (r0 * c) + t0));
        }
        worst_ate = std::max(worst_ate, ate(est, ref));
    }

    PoseTrack ref;
    for (int i = 0; i < 10; ++i) ref.poses.push_back(pose_from(random_rotation(), Vec3(i, 0.1 * g(rng), 0.1 * g(rng))));
    PoseTrack bent = ref;
    const Mat3 err = Eigen::AngleAxisd(10.0 * kDeg, Vec3(0, 1, 0)).toRotationMatrix();
    const Vec3 pivot = ref.poses[6].center();
    for (std::size_t i = 7; i < 10; ++i) {
        bent.poses[i] = pose_from(ref.poses[i].rotation * err.transpose(), pivot + err * (ref.poses[i].center() - pivot));
    }
    const double expected = 10.0 * kDeg / std::sqrt(9.0);
    const double rpe_dev = std::abs(rpe(bent, ref).rotation - expected);
    return {worst_ate < 1e-9 && rpe_dev < 1e-9,
            fmt("max ATE under similarity %.2e, rpe_r - closed form %.2e", worst_ate, rpe_dev)};
}

// 9. Two CLI runs with the same seed produce identical files.
Outcome determinism(const std::string& cli) {
    const fs::path root = fs::temp_directory_path() / "cammotion_acceptance";
    fs::remove_all(root);
    fs::create_directories(root);
    const std::string spec = R"({"motions": [{"kind": "zoom", "direction": "out", "magnitude": 0.5, "frames": 14}]})";
    write_file(root / "zoom.json", {reinterpret_cast<const std::uint8_t*>(spec.data()), spec.size()});
    for (const char* run : {"run_a", "run_b"}) {
        const std::string cmd = "\"" + cli + "\" generate --synthetic --width 128 --height 128 --trajectory \"" +
                                (root / "zoom.json").string() + "\" --frames 14 --steps 25 --t0 15 --eta 1.0 --seed 20240601 --out \"" +
                                (root / run).string() + "\" > /dev/null";
        if (std::system(cmd.c_str()) != 0) return {false, std::string("command failed: ") + cmd};
    }
    std::size_t files = 0, differing = 0;
    for (const auto& entry : fs::recursive_directory_iterator(root / "run_a")) {
        if (!entry.is_regular_file()) continue;
        const fs::path rel = fs::relative(entry.path(), root / "run_a");
        ++files;
        if (!fs::exists(root / "run_b" / rel) || read_file(entry.path()) != read_file(root / "run_b" / rel)) ++differing;
    }
    const bool has_manifest = fs::exists(root / "run_a" / "run.json");
    return {files >= 15 && differing == 0 && has_manifest,
            fmt("%zu files compared (frames, Stage I frames, masks, run.json), %zu differ", files, differing)};
}

// 10. Stage I against analytic novel views.
Outcome fidelity_case(MotionKind kind, MotionDirection dir) {
    const PinholeCamera cam = PinholeCamera::with_default_fov(256, 256);
    const auto s = synth_scene(10, cam);
    MotionPrimitive p;
    p.kind = kind;
    p.direction = dir;
    p.magnitude = 0.5;
    p.frames = 14;
    const Trajectory traj = build_primitive(p);
    const StageOneResult r = stage_one(s.frame, traj, cam, scene_filler(s.scene), scene_depth_provider(s.scene));
    double worst = 0.0;
    std::size_t compared = 0;
    for (std::size_t i = 0; i < traj.size(); ++i) {
        const RgbdFrame truth = s.scene.render(cam, traj.poses[i]);
        const Mask& mask = r.renders[i].mask;
        for (int y = 0; y < cam.height; ++y) {
            for (int x = 0; x < cam.width; ++x) {
                if (!mask.at(x, y)) continue;
                ++compared;
                for (int c = 0; c < 3; ++c) {
                    worst = std::max(worst, std::abs(r.frames[i].at(x, y, c) - truth.color.at(x, y, c)));
                }
            }
        }
    }
    return {worst < 1.0 / 255.0, fmt("%s-%s: max error %.3e (limit %.3e) over %zu pixels", to_string(kind).c_str(),
                                     to_string(dir).c_str(), worst, 1.0 / 255.0, compared)};
}

} // namespace

int main(int argc, char** argv) {
    const std::string cli = argc > 1 ? argv[1] : "cammotion";

    criterion(1, "lift/render round trip", 1.0, round_trip);
    criterion(2, "z-buffer oracle equivalence", 10.0, zbuffer_oracle);
    for (double c : {0.5, 0.8, 1.25, 2.0}) {
        criterion(3, "depth-scale recovery", 5.0, [c] { return depth_scale_case(c); });
    }
    criterion(4, "inversion/generation exactness", 30.0, oracle_reconstruction);
    criterion(5, "sigma_t consistency", 1.0, sigma_identity);
    criterion(6, "t0 fidelity trade-off", 300.0, t0_tradeoff);
    criterion(7, "trajectory closure", 1.0, closure);
    criterion(8, "metrics correctness", 1.0, metrics);
    criterion(9, "end-to-end determinism", 120.0, [&cli] { return determinism(cli); });
    criterion(10, "Stage I geometric fidelity", 60.0, [] {
        const Outcome a = fidelity_case(MotionKind::Zoom, MotionDirection::Out);
        const Outcome b = fidelity_case(MotionKind::Truck, MotionDirection::Right);
        return Outcome{a.ok && b.ok, a.detail + "; " + b.detail};
    });

    std::printf("%s: %d failing criteria\n", g_failures ? "FAILED" : "ALL PASSED", g_failures);
    return g_failures ? 1 : 0;
}
