#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "cammotion/diffusion.hpp"
#include "cammotion/geometry.hpp"
#include "cammotion/image.hpp"

namespace cammotion {

// Raster codecs. Decoders report malformed input as ErrorKind::Parse with the byte offset.

/// Binary P6 (3 channels) or P5 (1 channel), maxval 1..255; samples are rescaled to 0..255.
Image<std::uint8_t> decode_pnm(std::span<const std::uint8_t> bytes);
/// P6 for 3 channels, P5 for 1 channel, maxval 255.
std::vector<std::uint8_t> encode_pnm(const Image<std::uint8_t>& image);

/// PF (3 channels) or Pf (1 channel); negative scale is little-endian, positive big-endian.
/// Scanlines are stored bottom to top.
Image<float> decode_pfm(std::span<const std::uint8_t> bytes);
/// Little-endian, scale -1.0.
std::vector<std::uint8_t> encode_pfm(const Image<float>& image);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

ColorImage read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const ColorImage& color);
Mask read_mask_pgm(const std::filesystem::path& path);
/// 255 = known.
void write_mask_pgm(const std::filesystem::path& path, const Mask& mask);
DepthImage read_depth_pfm(const std::filesystem::path& path);
void write_depth_pfm(const std::filesystem::path& path, const DepthImage& depth);

/// Rounds [0, 1] values to 8 bits (clamped).
Image<std::uint8_t> quantize(const ColorImage& color);
ColorImage dequantize(const Image<std::uint8_t>& image);
Image<float> to_float(const Image<double>& image);
Image<double> to_double(const Image<float>& image);

// Pose files: one pose per line as 12 row-major numbers of [R | t]; '#' starts a comment.

std::string format_pose_file(const Trajectory& trajectory);
Trajectory parse_pose_file(const std::string& text);
Trajectory read_pose_file(const std::filesystem::path& path);
void write_pose_file(const std::filesystem::path& path, const Trajectory& trajectory);

/// Either a list of motions with a combine mode, or explicit extrinsics.
struct TrajectorySpec {
    std::vector<MotionPrimitive> motions;
    CombineMode mode = CombineMode::Sequential;
    std::vector<std::vector<double>> extrinsics;
    std::optional<double> focus_distance;

    bool uses_rotate() const;
};

TrajectorySpec parse_trajectory_spec(const nlohmann::json& doc);
TrajectorySpec read_trajectory_spec(const std::filesystem::path& path);
nlohmann::json to_json(const TrajectorySpec& spec);

/// `fallback_focus` is used by rotate motions when the trajectory names no focus distance.
Trajectory build_trajectory(const TrajectorySpec& spec, std::optional<double> fallback_focus = std::nullopt);

/// Writes <root>/latents/t{t}/frame_{n}_c{c}.pfm and metadata.json beside them.
/// Returns the directory written.
std::filesystem::path write_latents(const std::filesystem::path& root, const LatentSequence& latents,
                                    const nlohmann::json& metadata);
LatentSequence read_latents(const std::filesystem::path& directory);

} // namespace cammotion
