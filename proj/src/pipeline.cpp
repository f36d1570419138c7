#include "cammotion/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "cammotion/error.hpp"

namespace cammotion {

namespace {

std::string numbered(const char* stem, std::size_t index, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%04zu.%s", stem, index, ext);
    return buf;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& doc) {
    const std::string text = doc.dump(2) + "\n";
    write_file(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

nlohmann::json optional_number(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::optional<double> read_optional(const nlohmann::json& doc, const char* key) {
    if (!doc.contains(key) || doc.at(key).is_null()) return std::nullopt;
    return doc.at(key).get<double>();
}

Filler builtin_filler(const std::string& name) {
    if (name == "constant") return constant_filler(0.5);
    if (name == "diffuse") return diffusion_filler();
    if (name == "scene") {
        fail(ErrorKind::InvalidArgument, "the scene filler is only available for the synthetic scene");
    }
    fail(ErrorKind::InvalidArgument, "unknown filler '" + name + "'");
}

} // namespace

void PipelineConfig::validate() const {
    auto bad = [](const std::string& msg) { fail(ErrorKind::InvalidArgument, msg); };
    if (frames < 1) bad("frames must be at least 1");
    if (total_steps < 1) bad("total diffusion steps must be at least 1");
    if (steps < 1 || steps > total_steps) bad("sampling steps must lie in 1..total steps");
    if (t0_index < 0 || t0_index > steps) bad("t0 must lie in 0..steps");
    if (!(eta >= 0.0) || !std::isfinite(eta)) bad("eta must be finite and non-negative");
    if (filler != "constant" && filler != "diffuse" && filler != "scene") bad("unknown filler '" + filler + "'");
    if (denoiser != "smoothing" && denoiser != "oracle") bad("unknown denoiser '" + denoiser + "'");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) bad("need 0 < beta_start <= beta_end < 1");
}

PinholeCamera PipelineConfig::camera(int width, int height) const {
    PinholeCamera cam = PinholeCamera::with_default_fov(width, height, vertical_fov_deg);
    if (fx) cam.fx = *fx;
    if (fy) cam.fy = *fy;
    if (cx) cam.cx = *cx;
    if (cy) cam.cy = *cy;
    cam.validate();
    return cam;
}

nlohmann::json to_json(const PipelineConfig& c) {
    return {
        {"frames", c.frames},
        {"steps", c.steps},
        {"t0_index", c.t0_index},
        {"eta", c.eta},
        {"seed", c.seed},
        {"noise_mode", to_string(c.noise_mode)},
        {"filler", c.filler},
        {"denoiser", c.denoiser},
        {"prompt", c.prompt ? nlohmann::json(*c.prompt) : nlohmann::json(nullptr)},
        {"schedule",
         {{"kind", to_string(c.schedule_kind)},
          {"total_steps", c.total_steps},
          {"beta_start", c.beta_start},
          {"beta_end", c.beta_end}}},
        {"camera",
         {{"vertical_fov_deg", c.vertical_fov_deg},
          {"fx", optional_number(c.fx)},
          {"fy", optional_number(c.fy)},
          {"cx", optional_number(c.cx)},
          {"cy", optional_number(c.cy)}}},
        {"save_latents", c.save_latents},
        {"source", c.source},
    };
}

PipelineConfig config_from_json(const nlohmann::json& doc) {
    PipelineConfig c;
    try {
        c.frames = doc.at("frames").get<int>();
        c.steps = doc.at("steps").get<int>();
        c.t0_index = doc.at("t0_index").get<int>();
        c.eta = doc.at("eta").get<double>();
        c.seed = doc.at("seed").get<std::uint64_t>();
        c.noise_mode = parse_noise_mode(doc.at("noise_mode").get<std::string>());
        c.filler = doc.at("filler").get<std::string>();
        c.denoiser = doc.value("denoiser", std::string("smoothing"));
        if (doc.contains("prompt") && !doc.at("prompt").is_null()) c.prompt = doc.at("prompt").get<std::string>();
        const auto& s = doc.at("schedule");
        c.schedule_kind = parse_schedule_kind(s.at("kind").get<std::string>());
        c.total_steps = s.at("total_steps").get<int>();
        c.beta_start = s.at("beta_start").get<double>();
        c.beta_end = s.at("beta_end").get<double>();
        const auto& cam = doc.at("camera");
        c.vertical_fov_deg = cam.at("vertical_fov_deg").get<double>();
        c.fx = read_optional(cam, "fx");
        c.fy = read_optional(cam, "fy");
        c.cx = read_optional(cam, "cx");
        c.cy = read_optional(cam, "cy");
        c.save_latents = doc.value("save_latents", false);
        c.source = doc.value("source", nlohmann::json::object());
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Parse, std::string("pipeline config: ") + e.what());
    }
    return c;
}

DenoiserFactory smoothing_denoiser_factory() {
    return [](const NoiseSchedule& schedule, const InversionResult&) { return smoothing_denoiser(schedule); };
}

DenoiserFactory oracle_denoiser_factory() {
    return [](const NoiseSchedule&, const InversionResult& inversion) { return oracle_denoiser(inversion.noise); };
}

DenoiserFactory denoiser_factory_by_name(const std::string& name) {
    if (name == "smoothing") return smoothing_denoiser_factory();
    if (name == "oracle") return oracle_denoiser_factory();
    fail(ErrorKind::InvalidArgument, "unknown denoiser '" + name + "'");
}

LatentSequence frames_to_latents(const std::vector<ColorImage>& frames) {
    if (frames.empty()) fail(ErrorKind::InvalidArgument, "no frames to convert");
    const int h = frames.front().height(), w = frames.front().width();
    LatentSequence out(static_cast<int>(frames.size()), 3, h, w, 0);
    for (int n = 0; n < out.frames; ++n) {
        const ColorImage& f = frames[static_cast<std::size_t>(n)];
        if (!f.same_shape(w, h) || f.channels() != 3) fail(ErrorKind::InvalidArgument, "frames differ in shape");
        for (int c = 0; c < 3; ++c) {
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) out.at(n, c, y, x) = 2.0 * f.at(x, y, c) - 1.0;
            }
        }
    }
    return out;
}

std::vector<ColorImage> latents_to_frames(const LatentSequence& latents) {
    if (latents.channels != 3) fail(ErrorKind::InvalidArgument, "latents must have 3 channels");
    std::vector<ColorImage> frames;
    frames.reserve(static_cast<std::size_t>(latents.frames));
    for (int n = 0; n < latents.frames; ++n) {
        ColorImage f(latents.width, latents.height, 3);
        for (int c = 0; c < 3; ++c) {
            for (int y = 0; y < latents.height; ++y) {
                for (int x = 0; x < latents.width; ++x) f.at(x, y, c) = (latents.at(n, c, y, x) + 1.0) / 2.0;
            }
        }
        frames.push_back(std::move(f));
    }
    return frames;
}

PipelineResult run_pipeline(const RgbdFrame& input, const TrajectorySpec& trajectory_spec,
                            const PipelineConfig& config, const PipelinePlugins& plugins) {
    config.validate();
    input.validate();
    for (double v : input.color.data()) {
        if (!(v >= 0.0 && v <= 1.0)) fail(ErrorKind::InvalidArgument, "input colors must lie in [0, 1]");
    }
    const PinholeCamera camera = config.camera(input.width(), input.height());

    std::optional<double> focus;
    if (trajectory_spec.uses_rotate() && !trajectory_spec.focus_distance) {
        focus = estimate_focus_distance(input.depth);
    }
    Trajectory trajectory = build_trajectory(trajectory_spec, focus);
    if (static_cast<int>(trajectory.size()) != config.frames) {
        fail(ErrorKind::InvalidArgument, "trajectory has " + std::to_string(trajectory.size()) +
                                             " poses but the configuration asks for " +
                                             std::to_string(config.frames) + " frames");
    }
    const bool reanchored =
        (trajectory.poses.front().homogeneous() - Mat4::Identity()).cwiseAbs().maxCoeff() > 1e-12;
    if (reanchored) trajectory = trajectory.relative_to_first();

    const Filler filler = plugins.filler ? plugins.filler : builtin_filler(config.filler);
    const DepthProvider depth_provider =
        plugins.depth_provider ? plugins.depth_provider : nearest_valid_depth_provider();
    const DenoiserFactory make_denoiser =
        plugins.denoiser ? plugins.denoiser : denoiser_factory_by_name(config.denoiser);
    const NoiseSchedule schedule = select_sampling_steps(
        make_schedule(config.schedule_kind, config.total_steps, config.beta_start, config.beta_end), config.steps);

    PipelineResult result;
    nlohmann::json& manifest = result.manifest;
    manifest["schema_version"] = kManifestSchemaVersion;
    manifest["config"] = to_json(config);
    manifest["trajectory"] = to_json(trajectory_spec);
    manifest["trajectory_reanchored"] = reanchored;
    if (focus) manifest["estimated_focus_distance"] = *focus;
    manifest["camera"] = {{"fx", camera.fx}, {"fy", camera.fy}, {"cx", camera.cx},
                          {"cy", camera.cy}, {"width", camera.width}, {"height", camera.height}};
    manifest["rng"] = {{"algorithm", GaussianNoise::kAlgorithm},
                       {"seed", config.seed},
                       {"streams", "splitmix64(seed, 0) for inversion, splitmix64(seed, t) for step t"}};
    manifest["schedule"] = {{"sampling_steps", schedule.sampling_steps},
                            {"t0", schedule.ladder_step(config.t0_index)},
                            {"alpha_bar_t0", schedule.alpha_bar_at(schedule.ladder_step(config.t0_index))}};

    const auto& out_dir = config.output_dir;
    std::string stage = "stage_one";
    try {
        StageOneOptions s1_options;
        s1_options.prompt = config.prompt;
        result.stage_one = stage_one(input, trajectory, camera, filler, depth_provider, s1_options);
        const auto& s1 = result.stage_one;
        manifest["stage_one"] = {{"depth_scales", s1.depth_scales},
                                 {"hole_fractions", s1.hole_fractions},
                                 {"cloud_sizes", s1.cloud_sizes},
                                 {"warnings", s1.warnings}};

        std::optional<InversionResult> inversion;
        if (config.t0_index == 0) {
            result.frames = s1.frames;
        } else {
            stage = "inversion";
            inversion = invert(frames_to_latents(s1.frames), config.t0_index, schedule, config.seed,
                               config.noise_mode);
            stage = "generation";
            const Denoiser denoiser = make_denoiser(schedule, *inversion);
            const LatentSequence generated = generate(inversion->latents, config.t0_index, denoiser, schedule,
                                                      config.eta, config.seed, config.noise_mode);
            result.frames = latents_to_frames(generated);
            if (config.save_latents && !out_dir.empty()) {
                stage = "output";
                const nlohmann::json meta = {{"seed", config.seed},
                                             {"rng", GaussianNoise::kAlgorithm},
                                             {"schedule", manifest["config"]["schedule"]},
                                             {"eta", config.eta},
                                             {"t0_index", config.t0_index},
                                             {"t0", inversion->latents.timestep},
                                             {"noise_mode", to_string(config.noise_mode)}};
                write_latents(out_dir, inversion->latents, meta);
                write_latents(out_dir, generated, meta);
            }
        }

        stage = "output";
        nlohmann::json outputs = {{"frames", nlohmann::json::array()},
                                  {"stage_one_frames", nlohmann::json::array()},
                                  {"stage_one_masks", nlohmann::json::array()}};
        if (!out_dir.empty()) {
            for (std::size_t i = 0; i < result.frames.size(); ++i) {
                const std::string name = numbered("frame", i, "ppm");
                write_ppm(out_dir / name, result.frames[i]);
                outputs["frames"].push_back(name);
                const std::string s1_name = "stage1/" + numbered("frame", i, "ppm");
                const std::string mask_name = "stage1/" + numbered("mask", i, "pgm");
                write_ppm(out_dir / s1_name, s1.frames[i]);
                write_mask_pgm(out_dir / mask_name, s1.renders[i].mask);
                outputs["stage_one_frames"].push_back(s1_name);
                outputs["stage_one_masks"].push_back(mask_name);
            }
        }
        manifest["outputs"] = std::move(outputs);
        manifest["status"] = "ok";
        if (!out_dir.empty()) write_json(out_dir / "run.json", manifest);
    } catch (const std::exception& e) {
        manifest["status"] = "failed";
        manifest["failed_stage"] = stage;
        manifest["error"] = e.what();
        if (!out_dir.empty()) {
            try {
                write_json(out_dir / "run.json", manifest);
            } catch (const std::exception&) {
                // The original failure is the one worth reporting.
            }
        }
        throw Error(ErrorKind::Stage, stage + ": " + e.what());
    }
    return result;
}

} // namespace cammotion
