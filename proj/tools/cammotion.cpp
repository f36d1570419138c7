// cammotion command-line front end.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "cammotion/error.hpp"
#include "cammotion/io.hpp"
#include "cammotion/metrics.hpp"
#include "cammotion/pipeline.hpp"
#include "cammotion/synthetic_scene.hpp"

namespace fs = std::filesystem;
using namespace cammotion;

namespace {

constexpr int kExitInvalid = 2;
constexpr int kExitStage = 3;

void write_text(const fs::path& path, const std::string& text) {
    write_file(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

nlohmann::json read_json(const fs::path& path) {
    const auto bytes = read_file(path);
    try {
        return nlohmann::json::parse(bytes.begin(), bytes.end());
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Parse, path.string() + ": " + e.what());
    }
}

struct InputOptions {
    std::string input;
    std::string depth;
    bool synthetic = false;
    std::uint64_t scene_seed = 0;
    int width = 128;
    int height = 128;
};

void add_input_options(CLI::App* cmd, InputOptions& in) {
    cmd->add_option("--input", in.input, "Input color image (binary PPM)");
    cmd->add_option("--depth", in.depth, "Input depth map (PFM)");
    cmd->add_flag("--synthetic", in.synthetic, "Use the built-in synthetic scene instead of files");
    cmd->add_option("--scene-seed", in.scene_seed, "Synthetic scene seed");
    cmd->add_option("--width", in.width, "Synthetic raster width");
    cmd->add_option("--height", in.height, "Synthetic raster height");
}

struct GenerateOptions {
    InputOptions in;
    std::string trajectory;
    std::string noise_mode = "independent";
    std::string replay;
    std::string out;
    PipelineConfig config;
};

void add_pipeline_options(CLI::App* cmd, GenerateOptions& g, bool with_diffusion) {
    add_input_options(cmd, g.in);
    cmd->add_option("--trajectory", g.trajectory, "Trajectory JSON");
    cmd->add_option("--frames", g.config.frames, "Number of frames")->capture_default_str();
    cmd->add_option("--filler", g.config.filler, "Hole filler: constant|diffuse|scene")->capture_default_str();
    cmd->add_option("--prompt", g.config.prompt, "Text prompt forwarded to the filler");
    cmd->add_option("--fov", g.config.vertical_fov_deg, "Vertical field of view in degrees")->capture_default_str();
    cmd->add_option("--fx", g.config.fx);
    cmd->add_option("--fy", g.config.fy);
    cmd->add_option("--cx", g.config.cx);
    cmd->add_option("--cy", g.config.cy);
    cmd->add_option("--out", g.out, "Output directory");
    if (!with_diffusion) return;
    cmd->add_option("--steps", g.config.steps, "Sampling steps")->capture_default_str();
    cmd->add_option("--t0", g.config.t0_index, "Start position on the sampling ladder")->capture_default_str();
    cmd->add_option("--eta", g.config.eta, "Stochasticity of the sampler")->capture_default_str();
    cmd->add_option("--seed", g.config.seed, "Seed for every random draw")->capture_default_str();
    cmd->add_option("--noise-mode", g.noise_mode, "independent|shared")->capture_default_str();
    cmd->add_option("--denoiser", g.config.denoiser, "smoothing|oracle")->capture_default_str();
    cmd->add_flag("--save-latents", g.config.save_latents, "Write V_t0 and the final latents as PFM");
    cmd->add_option("--replay", g.replay, "Re-run from a run.json manifest");
}

struct LoadedInput {
    RgbdFrame frame;
    std::optional<SyntheticScene> scene;
    nlohmann::json source;
};

LoadedInput load_input(const InputOptions& in, const PipelineConfig& config) {
    if (in.synthetic) {
        const PinholeCamera cam = config.camera(in.width, in.height);
        SyntheticInput s = synth_scene(in.scene_seed, cam);
        return {std::move(s.frame), std::move(s.scene),
                {{"kind", "synthetic"}, {"scene_seed", in.scene_seed}, {"width", in.width}, {"height", in.height}}};
    }
    if (in.input.empty() || in.depth.empty()) {
        fail(ErrorKind::InvalidArgument, "need --input and --depth, or --synthetic");
    }
    RgbdFrame frame{read_ppm(in.input), read_depth_pfm(in.depth)};
    return {std::move(frame), std::nullopt, {{"kind", "files"}, {"input", in.input}, {"depth", in.depth}}};
}

InputOptions input_from_source(const nlohmann::json& source) {
    InputOptions in;
    const std::string kind = source.value("kind", std::string());
    if (kind == "synthetic") {
        in.synthetic = true;
        in.scene_seed = source.at("scene_seed").get<std::uint64_t>();
        in.width = source.at("width").get<int>();
        in.height = source.at("height").get<int>();
    } else if (kind == "files") {
        in.input = source.at("input").get<std::string>();
        in.depth = source.at("depth").get<std::string>();
    } else {
        fail(ErrorKind::Parse, "manifest source has unknown kind '" + kind + "'");
    }
    return in;
}

int run_generate(GenerateOptions& g, bool stage_one_only) {
    PipelineConfig config = g.config;
    TrajectorySpec spec;
    InputOptions in = g.in;
    if (!g.replay.empty()) {
        const nlohmann::json manifest = read_json(g.replay);
        try {
            config = config_from_json(manifest.at("config"));
            spec = parse_trajectory_spec(manifest.at("trajectory"));
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::Parse, g.replay + ": " + e.what());
        }
        in = input_from_source(config.source);
    } else {
        if (g.trajectory.empty()) fail(ErrorKind::InvalidArgument, "--trajectory is required");
        spec = read_trajectory_spec(g.trajectory);
        config.noise_mode = parse_noise_mode(g.noise_mode);
    }
    if (!g.out.empty()) config.output_dir = g.out;
    if (config.output_dir.empty()) fail(ErrorKind::InvalidArgument, "--out is required");
    if (stage_one_only) config.t0_index = 0;

    LoadedInput loaded = load_input(in, config);
    config.source = loaded.source;
    if (config.source.value("kind", "") == "synthetic") config.source["scene"] = loaded.scene->describe();

    PipelinePlugins plugins;
    if (loaded.scene) {
        plugins.depth_provider = scene_depth_provider(*loaded.scene);
        if (config.filler == "scene") plugins.filler = scene_filler(*loaded.scene);
    }
    const PipelineResult result = run_pipeline(loaded.frame, spec, config, plugins);
    std::printf("wrote %zu frames to %s\n", result.frames.size(), config.output_dir.string().c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Camera-controlled video generation from a single RGB-D image"};
    app.require_subcommand(1);

    std::uint64_t synth_seed = 0;
    int synth_width = 256, synth_height = 256;
    double synth_fov = 55.0;
    std::string synth_out;
    auto* synth = app.add_subcommand("synth-scene", "Write the synthetic scene's identity view");
    synth->add_option("--seed", synth_seed, "Scene seed")->capture_default_str();
    synth->add_option("--width", synth_width)->capture_default_str();
    synth->add_option("--height", synth_height)->capture_default_str();
    synth->add_option("--fov", synth_fov, "Vertical field of view in degrees")->capture_default_str();
    synth->add_option("--out", synth_out, "Output directory")->required();

    GenerateOptions render_opts;
    auto* render_cmd = app.add_subcommand("render-trajectory", "Run point-cloud rendering and hole filling only");
    add_pipeline_options(render_cmd, render_opts, false);

    GenerateOptions gen_opts;
    auto* gen_cmd = app.add_subcommand("generate", "Run the full pipeline");
    add_pipeline_options(gen_cmd, gen_opts, true);

    std::string est_path, ref_path, eval_out;
    int delta = 1;
    bool no_scale = false;
    auto* eval_cmd = app.add_subcommand("evaluate", "ATE and RPE of an estimated pose file against a reference");
    eval_cmd->add_option("--estimate", est_path, "Estimated poses")->required();
    eval_cmd->add_option("--reference", ref_path, "Reference poses")->required();
    eval_cmd->add_option("--delta", delta, "Frame gap for RPE")->capture_default_str();
    eval_cmd->add_flag("--no-scale", no_scale, "Align with a rigid transform instead of a similarity");
    eval_cmd->add_option("--out", eval_out, "Write the report here as well as to stdout");

    std::string export_traj, export_out;
    std::optional<double> export_focus;
    auto* export_cmd = app.add_subcommand("export-poses", "Write the poses of a trajectory spec");
    export_cmd->add_option("--trajectory", export_traj, "Trajectory JSON")->required();
    export_cmd->add_option("--focus", export_focus, "Focus distance for rotate motions");
    export_cmd->add_option("--out", export_out, "Pose file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitInvalid;
    }

    try {
        if (*synth) {
            const PinholeCamera cam = PinholeCamera::with_default_fov(synth_width, synth_height, synth_fov);
            const SyntheticInput s = synth_scene(synth_seed, cam);
            const fs::path out = synth_out;
            write_ppm(out / "color.ppm", s.frame.color);
            write_depth_pfm(out / "depth.pfm", s.frame.depth);
            nlohmann::json meta = s.scene.describe();
            meta["camera"] = {{"fx", cam.fx}, {"fy", cam.fy}, {"cx", cam.cx},
                              {"cy", cam.cy}, {"width", cam.width}, {"height", cam.height}};
            write_text(out / "scene.json", meta.dump(2) + "\n");
            return 0;
        }
        if (*render_cmd) return run_generate(render_opts, true);
        if (*gen_cmd) return run_generate(gen_opts, false);
        if (*eval_cmd) {
            const PoseTrack est = PoseTrack::from_trajectory(read_pose_file(est_path));
            const PoseTrack ref = PoseTrack::from_trajectory(read_pose_file(ref_path));
            const EvaluationReport r = evaluate(est, ref, delta, !no_scale);
            const nlohmann::json doc = {{"ate", r.ate},         {"rpe_t", r.rpe_t}, {"rpe_r", r.rpe_r},
                                        {"n", r.n},             {"delta", r.delta}, {"with_scale", r.with_scale}};
            const std::string text = doc.dump(2) + "\n";
            if (!eval_out.empty()) write_text(eval_out, text);
            std::cout << text;
            return 0;
        }
        if (*export_cmd) {
            const TrajectorySpec spec = read_trajectory_spec(export_traj);
            write_pose_file(export_out, build_trajectory(spec, export_focus));
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.kind() == ErrorKind::Stage ? kExitStage : kExitInvalid;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitStage;
    }
    return 0;
}
