#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cammotion/geometry.hpp"
#include "cammotion/image.hpp"

namespace cammotion {

struct RgbdFrame {
    ColorImage color;
    DepthImage depth;

    int width() const noexcept { return color.width(); }
    int height() const noexcept { return color.height(); }

    /// Shapes agree, color has 3 channels, everything finite, depth >= 0.
    void validate() const;
};

using Rgb = std::array<double, 3>;

struct PointCloud {
    std::vector<Vec3> positions;
    std::vector<Rgb> colors;
    std::vector<int> source_view;

    std::size_t size() const noexcept { return positions.size(); }
    bool empty() const noexcept { return positions.empty(); }
    void validate() const;
};

struct RenderResult {
    ColorImage color;
    Mask mask;
    /// Minimum camera-frame depth of the contributing points; 0 where mask is false.
    DepthImage depth_buffer;
    /// Index of the point that won each pixel, -1 where mask is false.
    Image<std::int64_t> winner;

    double hole_fraction() const;
};

struct RenderOptions {
    double z_near = 1e-4;
    /// 0 picks std::thread::hardware_concurrency(); output is independent of this value.
    unsigned threads = 0;
};

/// Back-projects every pixel with positive depth. Throws EmptyCloud if there is none.
PointCloud lift(const RgbdFrame& frame, const PinholeCamera& camera, const CameraPose& pose,
                int source_view = 0);

/// Back-projects the selected pixels with depth multiplied by `depth_scale`.
/// Returns an empty cloud when nothing qualifies.
PointCloud lift_selected(const RgbdFrame& frame, const Mask& select, const PinholeCamera& camera,
                         const CameraPose& pose, double depth_scale, int source_view);

/// Nearest-pixel splatting with a z-buffer; equal depths resolve to the smaller point index.
RenderResult render(const PointCloud& cloud, const PinholeCamera& camera, const CameraPose& pose,
                    const RenderOptions& options = {});

/// Everything a plug-in may want to know about the view being completed.
struct ViewContext {
    int view_index = 0;
    CameraPose pose;
    PinholeCamera camera;
    /// Render of the existing cloud at this view, before filling.
    const RenderResult* prefill = nullptr;
};

struct FillRequest {
    const ColorImage& color;
    /// True on pixels the renderer covered; the filler must complete the rest.
    const Mask& known;
    std::optional<std::string> prompt;
    ViewContext view;
};

/// Returns a color raster defined everywhere. Known pixels are restored afterwards regardless.
using Filler = std::function<ColorImage(const FillRequest&)>;

/// Depth for a completed color raster at the given view.
using DepthProvider = std::function<DepthImage(const ColorImage& filled, const ViewContext& view)>;

Filler constant_filler(double value = 0.5);

struct DiffusionFillOptions {
    double tolerance = 1e-6;
    int max_iterations = 10000;
};

/// Holes start at their nearest known color, then relax by repeated 4-neighbor averaging.
Filler diffusion_filler(DiffusionFillOptions options = {});

/// Rendered depth of the current view, holes taking the nearest valid value.
DepthProvider nearest_valid_depth_provider();

ColorImage fill_holes(const RenderResult& render_result, const Filler& filler,
                      std::optional<std::string> prompt = std::nullopt, ViewContext view = {});

struct DepthScaleOptions {
    double min_scale = 0.25;
    double max_scale = 4.0;
    int grid_points = 64;
    double relative_tolerance = 1e-4;
};

struct DepthScaleFit {
    double scale = 1.0;
    double loss = 0.0;
    std::size_t overlap = 0;
};

/// Sum over overlap pixels of the L1 distance between the candidate point lifted with
/// scaled depth and the reference point that wins that pixel's z-buffer.
double depth_scale_loss(double scale, const RgbdFrame& candidate, const Mask& hole_mask,
                        const PinholeCamera& camera, const CameraPose& pose,
                        const PointCloud& reference, const RenderResult& reference_render);

/// Log-spaced grid search followed by golden-section refinement. Throws NoOverlap when no
/// known pixel with valid candidate depth is covered by the reference cloud.
DepthScaleFit optimize_depth_scale(const RgbdFrame& candidate, const Mask& hole_mask,
                                   const PinholeCamera& camera, const CameraPose& pose,
                                   const PointCloud& reference, const DepthScaleOptions& options = {});

PointCloud merge(const PointCloud& cloud, const PointCloud& additions);

struct StageOneOptions {
    std::optional<std::string> prompt;
    RenderOptions render;
    DepthScaleOptions depth_scale;
};

struct StageOneResult {
    std::vector<ColorImage> frames;
    /// Pre-fill renders; entry 0 renders the initial cloud at pose 0.
    std::vector<RenderResult> renders;
    std::vector<double> depth_scales;
    std::vector<double> hole_fractions;
    std::vector<std::size_t> cloud_sizes;
    std::vector<std::string> warnings;
    PointCloud cloud;
};

/// Lifts the input at pose 0, then for every later pose renders, fills, fits the depth
/// scale on the overlap, lifts hole pixels only, merges, and re-renders.
StageOneResult stage_one(const RgbdFrame& input, const Trajectory& trajectory,
                         const PinholeCamera& camera, const Filler& filler,
                         const DepthProvider& depth_provider, const StageOneOptions& options = {});

} // namespace cammotion
