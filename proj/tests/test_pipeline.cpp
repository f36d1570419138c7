#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "cammotion/error.hpp"
#include "cammotion/pipeline.hpp"
#include "cammotion/synthetic_scene.hpp"

using namespace cammotion;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "cammotion_test_pipeline" / name;
    fs::remove_all(dir);
    return dir;
}

TrajectorySpec spec_of(MotionKind kind, MotionDirection dir, double magnitude, int frames) {
    TrajectorySpec spec;
    MotionPrimitive p;
    p.kind = kind;
    p.direction = dir;
    p.magnitude = magnitude;
    p.frames = frames;
    spec.motions.push_back(p);
    return spec;
}

PipelineConfig small_config(int frames) {
    PipelineConfig c;
    c.frames = frames;
    c.steps = 10;
    c.t0_index = 6;
    c.seed = 1234;
    return c;
}

double max_diff(const ColorImage& a, const ColorImage& b) {
    double m = 0.0;
    for (std::size_t k = 0; k < a.data().size(); ++k) m = std::max(m, std::abs(a.data()[k] - b.data()[k]));
    return m;
}

} // namespace

TEST_CASE("config validation and JSON round trip") {
    PipelineConfig c;
    CHECK(c.frames == 14);
    CHECK(c.steps == 25);
    CHECK(c.t0_index == 15);
    CHECK(c.eta == 1.0);
    CHECK_NOTHROW(c.validate());

    PipelineConfig bad = c;
    bad.t0_index = 26;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = c;
    bad.frames = 0;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = c;
    bad.filler = "paint";
    CHECK_THROWS_AS(bad.validate(), Error);

    c.seed = 0xfedcba9876543210ull;
    c.noise_mode = NoiseMode::Shared;
    c.fx = 321.5;
    c.prompt = "a quiet room";
    c.source = {{"kind", "files"}, {"input", "a.ppm"}};
    const PipelineConfig back = config_from_json(to_json(c));
    CHECK(to_json(back) == to_json(c));
    CHECK(back.seed == c.seed);
    CHECK(*back.fx == 321.5);
    CHECK_FALSE(back.fy.has_value());
    CHECK_THROWS_AS(config_from_json(nlohmann::json::object()), Error);
}

TEST_CASE("normalization round trip") {
    std::vector<ColorImage> frames(2, ColorImage(3, 2, 3));
    frames[1].at(2, 1, 2) = 1.0;
    frames[0].at(0, 0, 0) = 0.25;
    const LatentSequence l = frames_to_latents(frames);
    CHECK(l.at(0, 0, 0, 0) == -0.5);
    CHECK(l.at(1, 2, 1, 2) == 1.0);
    CHECK(l.at(1, 1, 0, 0) == -1.0);
    const auto back = latents_to_frames(l);
    CHECK(back[0] == frames[0]);
    CHECK(back[1] == frames[1]);
}

TEST_CASE("t0 of zero returns the stage-one frames") {
    const PinholeCamera cam = PinholeCamera::with_default_fov(32, 24);
    const auto s = synth_scene(1, cam);
    PipelineConfig c = small_config(4);
    c.t0_index = 0;
    const PipelineResult r = run_pipeline(s.frame, spec_of(MotionKind::Truck, MotionDirection::Right, 0.3, 4), c);
    REQUIRE(r.frames.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(r.frames[i] == r.stage_one.frames[i]);
    CHECK(r.stage_one.frames[0] == s.frame.color);
}

TEST_CASE("identity trajectory with the oracle denoiser reproduces stage one") {
    const PinholeCamera cam = PinholeCamera::with_default_fov(32, 24);
    const auto s = synth_scene(2, cam);
    PipelineConfig c = small_config(3);
    c.eta = 0.0;
    c.denoiser = "oracle";
    const PipelineResult r = run_pipeline(s.frame, spec_of(MotionKind::Pan, MotionDirection::Right, 0.0, 3), c);
    REQUIRE(r.frames.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(max_diff(r.frames[i], r.stage_one.frames[i]) < 1.0 / 255.0);
        CHECK(r.stage_one.frames[i] == s.frame.color);
    }
}

TEST_CASE("outputs and manifest are deterministic and replayable") {
    const PinholeCamera cam = PinholeCamera::with_default_fov(32, 24);
    const auto s = synth_scene(3, cam);
    const TrajectorySpec spec = spec_of(MotionKind::Zoom, MotionDirection::Out, 0.4, 5);
    PipelineConfig c = small_config(5);
    c.save_latents = true;
    const fs::path dir_a = scratch("a");
    c.output_dir = dir_a;
    const PipelineResult a = run_pipeline(s.frame, spec, c);
    c.output_dir = scratch("b");
    const PipelineResult b = run_pipeline(s.frame, spec, c);

    CHECK(a.manifest == b.manifest);
    CHECK(read_file(dir_a / "run.json") == read_file(c.output_dir / "run.json"));
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(a.frames[i] == b.frames[i]);
        char name[32];
        std::snprintf(name, sizeof name, "frame_%04zu.ppm", i);
        CHECK(fs::exists(c.output_dir / name));
        CHECK(fs::exists(c.output_dir / "stage1" / name));
    }
    CHECK(fs::exists(c.output_dir / "latents" / ("t" + std::to_string(a.manifest["schedule"]["t0"].get<int>())) / "metadata.json"));
    CHECK(fs::exists(c.output_dir / "latents" / "t0" / "frame_0_c0.pfm"));

    const auto& m = a.manifest;
    CHECK(m["schema_version"] == kManifestSchemaVersion);
    CHECK(m["status"] == "ok");
    CHECK(m["rng"]["seed"] == 1234);
    CHECK(m["rng"]["algorithm"] == GaussianNoise::kAlgorithm);
    CHECK(m["stage_one"]["depth_scales"].size() == 5);
    CHECK(m["stage_one"]["hole_fractions"].size() == 5);

    // Re-running from the manifest alone gives the same frames.
    PipelineConfig replay = config_from_json(m["config"]);
    const PipelineResult r = run_pipeline(s.frame, parse_trajectory_spec(m["trajectory"]), replay);
    for (std::size_t i = 0; i < 5; ++i) CHECK(r.frames[i] == a.frames[i]);

    PipelineConfig other = small_config(5);
    other.seed = 1235;
    const PipelineResult d = run_pipeline(s.frame, spec, other);
    CHECK_FALSE(d.frames[3] == a.frames[3]);
}

TEST_CASE("rotate without a focus distance uses the center patch") {
    const PinholeCamera cam = PinholeCamera::with_default_fov(48, 48);
    const auto s = synth_scene(4, cam);
    PipelineConfig c = small_config(3);
    c.t0_index = 0;
    const PipelineResult r = run_pipeline(s.frame, spec_of(MotionKind::Rotate, MotionDirection::Clockwise, 10.0, 3), c);
    CHECK(r.manifest["estimated_focus_distance"].get<double>() == doctest::Approx(estimate_focus_distance(s.frame.depth)));
}

TEST_CASE("configuration and stage errors") {
    const PinholeCamera cam = PinholeCamera::with_default_fov(32, 24);
    const auto s = synth_scene(5, cam);
    const TrajectorySpec spec = spec_of(MotionKind::Truck, MotionDirection::Right, 0.4, 4);

    PipelineConfig wrong_len = small_config(6);
    try {
        run_pipeline(s.frame, spec, wrong_len);
        FAIL("expected InvalidArgument");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::InvalidArgument);
    }

    RgbdFrame bright = s.frame;
    bright.color.at(0, 0, 0) = 1.5;
    CHECK_THROWS_AS(run_pipeline(bright, spec, small_config(4)), Error);

    PipelineConfig c = small_config(4);
    c.output_dir = scratch("failing");
    PipelinePlugins plugins;
    plugins.filler = [](const FillRequest& req) -> ColorImage {
        if (req.view.view_index == 2) throw std::runtime_error("inpainter offline");
        return req.color;
    };
    try {
        run_pipeline(s.frame, spec, c, plugins);
        FAIL("expected a stage failure");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Stage);
        CHECK(std::string(e.what()).find("view 2") != std::string::npos);
    }
    const auto bytes = read_file(c.output_dir / "run.json");
    const auto manifest = nlohmann::json::parse(bytes.begin(), bytes.end());
    CHECK(manifest["status"] == "failed");
    CHECK(manifest["failed_stage"] == "stage_one");
    CHECK(manifest["error"].get<std::string>().find("inpainter offline") != std::string::npos);
}

TEST_CASE("a non-identity first pose is re-anchored") {
    const PinholeCamera cam = PinholeCamera::with_default_fov(32, 24);
    const auto s = synth_scene(6, cam);
    TrajectorySpec spec;
    spec.extrinsics = {{1, 0, 0, -0.2, 0, 1, 0, 0, 0, 0, 1, 0}, {1, 0, 0, -0.4, 0, 1, 0, 0, 0, 0, 1, 0}};
    PipelineConfig c = small_config(2);
    c.t0_index = 0;
    const PipelineResult r = run_pipeline(s.frame, spec, c);
    CHECK(r.manifest["trajectory_reanchored"] == true);
    CHECK(r.frames[0] == s.frame.color);
}
