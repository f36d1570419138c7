#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "cammotion/diffusion.hpp"
#include "cammotion/geometry.hpp"
#include "cammotion/io.hpp"
#include "cammotion/pointcloud.hpp"

namespace cammotion {

inline constexpr int kManifestSchemaVersion = 1;

struct PipelineConfig {
    int frames = 14;
    int steps = kDefaultSamplingSteps;
    /// Position on the sampling ladder; 0 skips generation.
    int t0_index = 15;
    double eta = 1.0;
    std::uint64_t seed = 0;
    NoiseMode noise_mode = NoiseMode::Independent;
    /// constant | diffuse | scene
    std::string filler = "diffuse";
    /// smoothing | oracle
    std::string denoiser = "smoothing";
    std::optional<std::string> prompt;

    ScheduleKind schedule_kind = ScheduleKind::Linear;
    int total_steps = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;

    double vertical_fov_deg = 55.0;
    std::optional<double> fx, fy, cx, cy;

    /// Not part of the serialized config, so manifests do not depend on where they were written.
    std::filesystem::path output_dir;
    bool save_latents = false;
    /// Free-form description of where the input came from, recorded verbatim in the manifest.
    nlohmann::json source = nlohmann::json::object();

    /// Throws InvalidArgument on out-of-range values.
    void validate() const;
    PinholeCamera camera(int width, int height) const;
};

nlohmann::json to_json(const PipelineConfig& config);
PipelineConfig config_from_json(const nlohmann::json& doc);

/// Builds the denoiser once the schedule and the realized inversion noise are known.
using DenoiserFactory = std::function<Denoiser(const NoiseSchedule&, const InversionResult&)>;

DenoiserFactory smoothing_denoiser_factory();
DenoiserFactory oracle_denoiser_factory();
DenoiserFactory denoiser_factory_by_name(const std::string& name);

/// Optional plug-ins; unset members fall back to the configured built-ins.
struct PipelinePlugins {
    Filler filler;
    DepthProvider depth_provider;
    DenoiserFactory denoiser;
};

struct PipelineResult {
    std::vector<ColorImage> frames;
    StageOneResult stage_one;
    nlohmann::json manifest;
};

/// Colors in [0, 1] to an N x 3 x H x W stack in [-1, 1].
LatentSequence frames_to_latents(const std::vector<ColorImage>& frames);
std::vector<ColorImage> latents_to_frames(const LatentSequence& latents);

/// Stage I, normalization, inversion at t0, generation, de-normalization. Writes frames and
/// run.json when config.output_dir is set; a failing stage leaves a partial manifest and
/// rethrows as ErrorKind::Stage.
PipelineResult run_pipeline(const RgbdFrame& input, const TrajectorySpec& trajectory_spec,
                            const PipelineConfig& config, const PipelinePlugins& plugins = {});

} // namespace cammotion
