#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace cammotion {

enum class ScheduleKind { Linear, ScaledLinear };

ScheduleKind parse_schedule_kind(const std::string& name);
std::string to_string(ScheduleKind kind);

/// Cumulative signal retention alpha_bar[t] for t = 0..T, with alpha_bar[0] = 1.
struct NoiseSchedule {
    ScheduleKind kind = ScheduleKind::Linear;
    int total_steps = 0;
    double beta_start = 0.0;
    double beta_end = 0.0;
    std::vector<double> alpha_bar;
    /// Strictly increasing subset of 1..T.
    std::vector<int> sampling_steps;

    /// Ladder positions run 0..sampling_steps.size(); position 0 is t = 0.
    int ladder_length() const noexcept { return static_cast<int>(sampling_steps.size()) + 1; }
    int ladder_step(int position) const;
    double alpha_bar_at(int t) const;
};

NoiseSchedule make_schedule(ScheduleKind kind = ScheduleKind::Linear, int total_steps = 1000,
                            double beta_start = 1e-4, double beta_end = 0.02);

inline constexpr int kDefaultSamplingSteps = 25;

/// Evenly spaced steps over 1..T, rounded and deduplicated; count = 1 gives {T}.
NoiseSchedule select_sampling_steps(NoiseSchedule schedule, int count = kDefaultSamplingSteps);

/// N x C x H x W stack living at diffusion step `timestep`.
struct LatentSequence {
    int frames = 0;
    int channels = 0;
    int height = 0;
    int width = 0;
    int timestep = 0;
    std::vector<double> data;

    LatentSequence() = default;
    LatentSequence(int n, int c, int h, int w, int t = 0)
        : frames(n), channels(c), height(h), width(w), timestep(t),
          data(static_cast<std::size_t>(n) * c * h * w, 0.0) {}

    std::size_t frame_size() const noexcept { return static_cast<std::size_t>(channels) * height * width; }
    std::size_t index(int n, int c, int y, int x) const noexcept {
        return ((static_cast<std::size_t>(n) * channels + c) * height + y) * width + x;
    }
    double& at(int n, int c, int y, int x) noexcept { return data[index(n, c, y, x)]; }
    double at(int n, int c, int y, int x) const noexcept { return data[index(n, c, y, x)]; }

    bool same_shape(const LatentSequence& other) const noexcept {
        return frames == other.frames && channels == other.channels && height == other.height &&
               width == other.width;
    }
};

enum class NoiseMode { Independent, Shared };

NoiseMode parse_noise_mode(const std::string& name);
std::string to_string(NoiseMode mode);

/// Standard normal draws from std::mt19937_64 through the Box-Muller transform.
/// Both pieces are fully specified, so a seed yields the same stream on every platform.
class GaussianNoise {
public:
    static constexpr const char* kAlgorithm = "mt19937_64+box-muller";

    explicit GaussianNoise(std::uint64_t seed) : engine_(seed) {}

    double operator()();

private:
    double uniform_open();

    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// Independent substream seed (splitmix64 of seed and stream id).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Fills `shape`'s size with standard normal noise; Shared draws one frame and repeats it.
LatentSequence sample_noise(const LatentSequence& shape, std::uint64_t seed, NoiseMode mode);

struct InversionResult {
    LatentSequence latents;
    /// The realized epsilon.
    LatentSequence noise;
};

/// sqrt(abar) * V0 + sqrt(1 - abar) * eps at ladder position t0_index.
InversionResult invert(const LatentSequence& clean, int t0_index, const NoiseSchedule& schedule,
                       std::uint64_t seed, NoiseMode mode = NoiseMode::Independent);

/// eta * sqrt((1 - abar_prev) / (1 - abar_t)) * sqrt(1 - abar_t / abar_prev).
double ddim_sigma(const NoiseSchedule& schedule, int t, int t_prev, double eta);

/// One DDIM update from t to t_prev given the noise prediction.
LatentSequence generation_step(const LatentSequence& current, int t, int t_prev,
                               const LatentSequence& eps_hat, const NoiseSchedule& schedule,
                               double eta, std::uint64_t seed,
                               NoiseMode mode = NoiseMode::Independent);

/// Noise prediction for the latent at step t; must return the input's shape.
using Denoiser = std::function<LatentSequence(const LatentSequence& latent, int t)>;

/// Called with each intermediate latent, including the final one before clamping.
using StepObserver = std::function<void(const LatentSequence& latent)>;

/// Walks the ladder from t0_index down to 0 with one denoiser call per step; clamps to [-1, 1].
LatentSequence generate(const LatentSequence& start, int t0_index, const Denoiser& denoiser,
                        const NoiseSchedule& schedule, double eta, std::uint64_t seed,
                        NoiseMode mode = NoiseMode::Independent, const StepObserver& observer = {});

/// 3x3 spatial box blur (in-bounds average) then (1/4, 1/2, 1/4) temporal averaging with
/// clamped ends.
LatentSequence smooth_latents(const LatentSequence& latent);

/// eps = (V - sqrt(abar) * S(V / sqrt(abar))) / sqrt(1 - abar), S = smooth_latents.
Denoiser smoothing_denoiser(const NoiseSchedule& schedule);

/// Always returns the stored noise; recovers the clean signal exactly when eta = 0.
Denoiser oracle_denoiser(LatentSequence noise);

} // namespace cammotion
