#include "cammotion/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cammotion/error.hpp"

namespace cammotion {

namespace {

// Rounding slack before a negative 1 - abar_prev - sigma^2 counts as inconsistent.
constexpr double kVarianceSlack = 1e-12;

void check_step(const NoiseSchedule& schedule, int t) {
    if (t < 0 || t > schedule.total_steps) {
        fail(ErrorKind::InvalidArgument,
             "step " + std::to_string(t) + " outside 0.." + std::to_string(schedule.total_steps));
    }
}

void check_finite(const LatentSequence& latent, const char* what) {
    for (double v : latent.data) {
        if (!std::isfinite(v)) fail(ErrorKind::InvalidArgument, std::string(what) + " has a non-finite value");
    }
}

} // namespace

ScheduleKind parse_schedule_kind(const std::string& name) {
    if (name == "linear") return ScheduleKind::Linear;
    if (name == "scaled_linear") return ScheduleKind::ScaledLinear;
    fail(ErrorKind::InvalidArgument, "unknown schedule kind '" + name + "'");
}

std::string to_string(ScheduleKind kind) {
    return kind == ScheduleKind::Linear ? "linear" : "scaled_linear";
}

NoiseMode parse_noise_mode(const std::string& name) {
    if (name == "independent") return NoiseMode::Independent;
    if (name == "shared") return NoiseMode::Shared;
    fail(ErrorKind::InvalidArgument, "unknown noise mode '" + name + "'");
}

std::string to_string(NoiseMode mode) { return mode == NoiseMode::Independent ? "independent" : "shared"; }

int NoiseSchedule::ladder_step(int position) const {
    if (position < 0 || position > static_cast<int>(sampling_steps.size())) {
        fail(ErrorKind::InvalidArgument, "ladder position " + std::to_string(position) + " outside 0.." +
                                             std::to_string(sampling_steps.size()));
    }
    return position == 0 ? 0 : sampling_steps[static_cast<std::size_t>(position - 1)];
}

double NoiseSchedule::alpha_bar_at(int t) const {
    check_step(*this, t);
    return alpha_bar[static_cast<std::size_t>(t)];
}

NoiseSchedule make_schedule(ScheduleKind kind, int total_steps, double beta_start, double beta_end) {
    if (total_steps < 1) fail(ErrorKind::InvalidArgument, "schedule needs at least one step");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
        fail(ErrorKind::InvalidArgument, "need 0 < beta_start <= beta_end < 1");
    }
    NoiseSchedule s;
    s.kind = kind;
    s.total_steps = total_steps;
    s.beta_start = beta_start;
    s.beta_end = beta_end;
    s.alpha_bar.resize(static_cast<std::size_t>(total_steps) + 1);
    s.alpha_bar[0] = 1.0;
    const double lo = kind == ScheduleKind::Linear ? beta_start : std::sqrt(beta_start);
    const double hi = kind == ScheduleKind::Linear ? beta_end : std::sqrt(beta_end);
    for (int t = 1; t <= total_steps; ++t) {
        const double frac = total_steps == 1 ? 0.0 : static_cast<double>(t - 1) / (total_steps - 1);
        double beta = lo + (hi - lo) * frac;
        if (kind == ScheduleKind::ScaledLinear) beta *= beta;
        s.alpha_bar[static_cast<std::size_t>(t)] = s.alpha_bar[static_cast<std::size_t>(t - 1)] * (1.0 - beta);
    }
    s.sampling_steps.resize(static_cast<std::size_t>(total_steps));
    for (int t = 1; t <= total_steps; ++t) s.sampling_steps[static_cast<std::size_t>(t - 1)] = t;
    return s;
}

NoiseSchedule select_sampling_steps(NoiseSchedule schedule, int count) {
    const int total = schedule.total_steps;
    if (count < 1 || count > total) {
        fail(ErrorKind::InvalidArgument,
             "sampling step count " + std::to_string(count) + " outside 1.." + std::to_string(total));
    }
    std::vector<int> steps;
    steps.reserve(static_cast<std::size_t>(count));
    if (count == 1) {
        steps.push_back(total);
    } else {
        for (int k = 0; k < count; ++k) {
            const double x = 1.0 + static_cast<double>(total - 1) * k / (count - 1);
            steps.push_back(static_cast<int>(std::lround(x)));
        }
    }
    std::sort(steps.begin(), steps.end());
    steps.erase(std::unique(steps.begin(), steps.end()), steps.end());
    schedule.sampling_steps = std::move(steps);
    return schedule;
}

double GaussianNoise::uniform_open() {
    // 53 random bits mapped into (0, 1).
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

double GaussianNoise::operator()() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = uniform_open();
    const double u2 = uniform_open();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double phi = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(phi);
    has_spare_ = true;
    return r * std::cos(phi);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

LatentSequence sample_noise(const LatentSequence& shape, std::uint64_t seed, NoiseMode mode) {
    LatentSequence noise(shape.frames, shape.channels, shape.height, shape.width, shape.timestep);
    GaussianNoise gen(seed);
    const std::size_t fs = noise.frame_size();
    if (mode == NoiseMode::Independent) {
        for (double& v : noise.data) v = gen();
    } else {
        for (std::size_t k = 0; k < fs; ++k) noise.data[k] = gen();
        for (int n = 1; n < noise.frames; ++n) {
            std::copy_n(noise.data.begin(), fs, noise.data.begin() + static_cast<std::ptrdiff_t>(n * fs));
        }
    }
    return noise;
}

InversionResult invert(const LatentSequence& clean, int t0_index, const NoiseSchedule& schedule,
                       std::uint64_t seed, NoiseMode mode) {
    if (clean.frames < 1) fail(ErrorKind::InvalidArgument, "latent sequence needs at least one frame");
    for (double v : clean.data) {
        if (!(v >= -1.0 && v <= 1.0)) fail(ErrorKind::InvalidArgument, "clean latents must lie in [-1, 1]");
    }
    const int t0 = schedule.ladder_step(t0_index);
    const double abar = schedule.alpha_bar_at(t0);
    const double signal = std::sqrt(abar);
    const double sigma = std::sqrt(1.0 - abar);

    InversionResult out;
    out.noise = sample_noise(clean, derive_seed(seed, 0), mode);
    out.noise.timestep = t0;
    out.latents = clean;
    out.latents.timestep = t0;
    for (std::size_t k = 0; k < clean.data.size(); ++k) {
        out.latents.data[k] = signal * clean.data[k] + sigma * out.noise.data[k];
    }
    return out;
}

double ddim_sigma(const NoiseSchedule& schedule, int t, int t_prev, double eta) {
    const double abar_t = schedule.alpha_bar_at(t);
    const double abar_prev = schedule.alpha_bar_at(t_prev);
    return eta * std::sqrt((1.0 - abar_prev) / (1.0 - abar_t)) * std::sqrt(1.0 - abar_t / abar_prev);
}

LatentSequence generation_step(const LatentSequence& current, int t, int t_prev,
                               const LatentSequence& eps_hat, const NoiseSchedule& schedule,
                               double eta, std::uint64_t seed, NoiseMode mode) {
    check_step(schedule, t);
    check_step(schedule, t_prev);
    if (!(t > t_prev)) fail(ErrorKind::InvalidArgument, "generation step needs t > t_prev");
    if (!(eta >= 0.0)) fail(ErrorKind::InvalidArgument, "eta must be non-negative");
    if (!current.same_shape(eps_hat)) fail(ErrorKind::InvalidArgument, "noise prediction shape mismatch");

    const double abar_t = schedule.alpha_bar_at(t);
    const double abar_prev = schedule.alpha_bar_at(t_prev);
    const double sigma = ddim_sigma(schedule, t, t_prev, eta);
    double dir_var = 1.0 - abar_prev - sigma * sigma;
    if (dir_var < 0.0) {
        if (dir_var < -kVarianceSlack) {
            fail(ErrorKind::ScheduleInconsistency,
                 "1 - abar_prev - sigma^2 is negative between steps " + std::to_string(t) + " and " +
                     std::to_string(t_prev));
        }
        dir_var = 0.0;
    }
    const double sqrt_abar_t = std::sqrt(abar_t);
    const double sqrt_one_minus_t = std::sqrt(1.0 - abar_t);
    const double sqrt_abar_prev = std::sqrt(abar_prev);
    const double dir_coef = std::sqrt(dir_var);

    LatentSequence next = current;
    next.timestep = t_prev;
    LatentSequence fresh;
    if (sigma > 0.0) fresh = sample_noise(current, derive_seed(seed, static_cast<std::uint64_t>(t)), mode);
    for (std::size_t k = 0; k < current.data.size(); ++k) {
        const double eps = eps_hat.data[k];
        const double x0 = (current.data[k] - sqrt_one_minus_t * eps) / sqrt_abar_t;
        double v = sqrt_abar_prev * x0 + dir_coef * eps;
        if (sigma > 0.0) v += sigma * fresh.data[k];
        next.data[k] = v;
    }
    return next;
}

LatentSequence generate(const LatentSequence& start, int t0_index, const Denoiser& denoiser,
                        const NoiseSchedule& schedule, double eta, std::uint64_t seed, NoiseMode mode,
                        const StepObserver& observer) {
    if (start.frames < 1) fail(ErrorKind::InvalidArgument, "latent sequence needs at least one frame");
    check_finite(start, "starting latent");
    if (t0_index == 0) return start;
    const int t0 = schedule.ladder_step(t0_index);
    if (start.timestep != t0) {
        fail(ErrorKind::InvalidArgument, "starting latent lives at step " + std::to_string(start.timestep) +
                                             ", expected " + std::to_string(t0));
    }

    LatentSequence current = start;
    for (int pos = t0_index; pos >= 1; --pos) {
        const int t = schedule.ladder_step(pos);
        const int t_prev = schedule.ladder_step(pos - 1);
        LatentSequence eps;
        try {
            eps = denoiser(current, t);
        } catch (const Error& e) {
            throw Error(e.kind(), "denoiser failed at step " + std::to_string(t) + ": " + e.what());
        } catch (const std::exception& e) {
            throw Error(ErrorKind::Stage, "denoiser failed at step " + std::to_string(t) + ": " + e.what());
        }
        if (!eps.same_shape(current)) {
            fail(ErrorKind::Stage, "denoiser returned the wrong shape at step " + std::to_string(t));
        }
        current = generation_step(current, t, t_prev, eps, schedule, eta, seed, mode);
        if (observer) observer(current);
    }
    for (double& v : current.data) v = std::clamp(v, -1.0, 1.0);
    return current;
}

LatentSequence smooth_latents(const LatentSequence& latent) {
    const int n_frames = latent.frames, ch = latent.channels, h = latent.height, w = latent.width;
    LatentSequence spatial(n_frames, ch, h, w, latent.timestep);
    for (int n = 0; n < n_frames; ++n) {
        for (int c = 0; c < ch; ++c) {
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    double sum = 0.0;
                    int count = 0;
                    for (int yy = std::max(0, y - 1); yy <= std::min(h - 1, y + 1); ++yy) {
                        for (int xx = std::max(0, x - 1); xx <= std::min(w - 1, x + 1); ++xx) {
                            sum += latent.at(n, c, yy, xx);
                            ++count;
                        }
                    }
                    spatial.at(n, c, y, x) = sum / count;
                }
            }
        }
    }
    LatentSequence out(n_frames, ch, h, w, latent.timestep);
    const std::size_t fs = latent.frame_size();
    for (int n = 0; n < n_frames; ++n) {
        const std::size_t prev = static_cast<std::size_t>(std::max(0, n - 1)) * fs;
        const std::size_t cur = static_cast<std::size_t>(n) * fs;
        const std::size_t next = static_cast<std::size_t>(std::min(n_frames - 1, n + 1)) * fs;
        for (std::size_t k = 0; k < fs; ++k) {
            out.data[cur + k] =
                0.25 * spatial.data[prev + k] + 0.5 * spatial.data[cur + k] + 0.25 * spatial.data[next + k];
        }
    }
    return out;
}

Denoiser smoothing_denoiser(const NoiseSchedule& schedule) {
    return [schedule](const LatentSequence& latent, int t) {
        if (t < 1 || t > schedule.total_steps) {
            fail(ErrorKind::InvalidArgument, "smoothing denoiser needs 1 <= t <= T");
        }
        const double abar = schedule.alpha_bar_at(t);
        const double sqrt_abar = std::sqrt(abar);
        const double sqrt_one_minus = std::sqrt(1.0 - abar);
        LatentSequence scaled = latent;
        for (double& v : scaled.data) v /= sqrt_abar;
        const LatentSequence smoothed = smooth_latents(scaled);
        LatentSequence eps = latent;
        for (std::size_t k = 0; k < eps.data.size(); ++k) {
            eps.data[k] = (latent.data[k] - sqrt_abar * smoothed.data[k]) / sqrt_one_minus;
        }
        return eps;
    };
}

Denoiser oracle_denoiser(LatentSequence noise) {
    return [noise = std::move(noise)](const LatentSequence& latent, int) {
        if (!latent.same_shape(noise)) fail(ErrorKind::InvalidArgument, "oracle noise shape mismatch");
        LatentSequence out = noise;
        out.timestep = latent.timestep;
        return out;
    };
}

} // namespace cammotion
