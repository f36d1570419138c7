#include "cammotion/pointcloud.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <thread>

#include "cammotion/error.hpp"

namespace cammotion {

namespace {

constexpr std::size_t kParallelRenderThreshold = 1u << 16;

std::string view_prefix(int index) { return "view " + std::to_string(index) + ": "; }

bool is_valid_depth(double d) { return d > 0.0 && std::isfinite(d); }

struct ZBuffer {
    std::vector<double> depth;
    std::vector<std::int64_t> index;

    explicit ZBuffer(std::size_t pixels)
        : depth(pixels, std::numeric_limits<double>::infinity()), index(pixels, -1) {}
};

void splat_range(const PointCloud& cloud, const PinholeCamera& cam, const CameraPose& pose,
                 double z_near, std::size_t begin, std::size_t end, ZBuffer& zb) {
    for (std::size_t i = begin; i < end; ++i) {
        const Vec3 p = pose.apply(cloud.positions[i]);
        const double z = p.z();
        if (!(z > z_near)) continue;
        const double u = cam.fx * p.x() / z + cam.cx;
        const double v = cam.fy * p.y() / z + cam.cy;
        if (!std::isfinite(u) || !std::isfinite(v)) continue;
        const double ur = std::floor(u + 0.5);
        const double vr = std::floor(v + 0.5);
        if (ur < 0.0 || vr < 0.0 || ur >= cam.width || vr >= cam.height) continue;
        const std::size_t px = static_cast<std::size_t>(vr) * cam.width + static_cast<std::size_t>(ur);
        // Ascending index order, so a strict comparison keeps the smaller index on ties.
        if (z < zb.depth[px]) {
            zb.depth[px] = z;
            zb.index[px] = static_cast<std::int64_t>(i);
        }
    }
}

ColorImage nearest_known_fill(const ColorImage& color, const Mask& known) {
    ColorImage out = color;
    Mask reached = known;
    std::deque<std::pair<int, int>> queue;
    for (int y = 0; y < color.height(); ++y) {
        for (int x = 0; x < color.width(); ++x) {
            if (known.at(x, y)) queue.emplace_back(x, y);
        }
    }
    constexpr int dx[4] = {1, -1, 0, 0};
    constexpr int dy[4] = {0, 0, 1, -1};
    while (!queue.empty()) {
        const auto [x, y] = queue.front();
        queue.pop_front();
        for (int k = 0; k < 4; ++k) {
            const int nx = x + dx[k], ny = y + dy[k];
            if (!color.contains(nx, ny) || reached.at(nx, ny)) continue;
            reached.at(nx, ny) = 1;
            for (int c = 0; c < color.channels(); ++c) out.at(nx, ny, c) = out.at(x, y, c);
            queue.emplace_back(nx, ny);
        }
    }
    return out;
}

void check_shape(const ColorImage& color, const PinholeCamera& camera, const char* what) {
    if (!color.same_shape(camera.width, camera.height)) {
        fail(ErrorKind::InvalidArgument,
             std::string(what) + " is " + std::to_string(color.width()) + "x" +
                 std::to_string(color.height()) + " but the camera raster is " +
                 std::to_string(camera.width) + "x" + std::to_string(camera.height));
    }
}

struct Correspondence {
    Vec3 slope;  // lifted point = scale * slope + offset
    Vec3 offset; // already minus the reference point
};

std::vector<Correspondence> collect_correspondences(const RgbdFrame& candidate, const Mask& hole_mask,
                                                    const PinholeCamera& cam, const CameraPose& pose,
                                                    const PointCloud& reference,
                                                    const RenderResult& reference_render) {
    const Mat3 rt = pose.rotation.transpose();
    const Vec3 origin = -(rt * pose.translation);
    std::vector<Correspondence> pairs;
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            if (hole_mask.at(x, y) || !reference_render.mask.at(x, y)) continue;
            const double d = candidate.depth.at(x, y);
            if (!is_valid_depth(d)) continue;
            const Vec3 ray((x - cam.cx) * d / cam.fx, (y - cam.cy) * d / cam.fy, d);
            const auto w = static_cast<std::size_t>(reference_render.winner.at(x, y));
            pairs.push_back({rt * ray, origin - reference.positions[w]});
        }
    }
    return pairs;
}

double l1_loss(double scale, const std::vector<Correspondence>& pairs) {
    double sum = 0.0;
    for (const auto& c : pairs) sum += (scale * c.slope + c.offset).cwiseAbs().sum();
    return sum;
}

} // namespace

void RgbdFrame::validate() const {
    if (color.channels() != 3) fail(ErrorKind::InvalidArgument, "color raster must have 3 channels");
    if (depth.channels() != 1) fail(ErrorKind::InvalidArgument, "depth raster must have 1 channel");
    if (!depth.same_shape(color.width(), color.height())) {
        fail(ErrorKind::InvalidArgument, "color and depth rasters differ in size");
    }
    for (double v : color.data()) {
        if (!std::isfinite(v)) fail(ErrorKind::InvalidArgument, "color raster has a non-finite value");
    }
    for (double v : depth.data()) {
        if (!std::isfinite(v) || v < 0.0) {
            fail(ErrorKind::InvalidDepth, "depth raster has a negative or non-finite value");
        }
    }
}

void PointCloud::validate() const {
    if (colors.size() != positions.size() || source_view.size() != positions.size()) {
        fail(ErrorKind::InvalidArgument, "point cloud attribute lists differ in length");
    }
    for (const auto& p : positions) {
        if (!p.allFinite()) fail(ErrorKind::InvalidArgument, "point cloud has a non-finite position");
    }
}

double RenderResult::hole_fraction() const {
    if (mask.pixel_count() == 0) return 0.0;
    return 1.0 - static_cast<double>(count_true(mask)) / static_cast<double>(mask.pixel_count());
}

PointCloud lift_selected(const RgbdFrame& frame, const Mask& select, const PinholeCamera& cam,
                         const CameraPose& pose, double depth_scale, int source_view) {
    const Mat3 rt = pose.rotation.transpose();
    PointCloud cloud;
    for (int y = 0; y < frame.height(); ++y) {
        for (int x = 0; x < frame.width(); ++x) {
            if (!select.at(x, y)) continue;
            const double d = frame.depth.at(x, y) * depth_scale;
            if (!is_valid_depth(d)) continue;
            const Vec3 cam_point((x - cam.cx) * d / cam.fx, (y - cam.cy) * d / cam.fy, d);
            cloud.positions.push_back(rt * (cam_point - pose.translation));
            const auto px = frame.color.pixel(x, y);
            cloud.colors.push_back({px[0], px[1], px[2]});
            cloud.source_view.push_back(source_view);
        }
    }
    return cloud;
}

PointCloud lift(const RgbdFrame& frame, const PinholeCamera& camera, const CameraPose& pose,
                int source_view) {
    frame.validate();
    camera.validate();
    check_shape(frame.color, camera, "frame");
    const Mask all(frame.width(), frame.height(), 1, 1);
    PointCloud cloud = lift_selected(frame, all, camera, pose, 1.0, source_view);
    if (cloud.empty()) fail(ErrorKind::EmptyCloud, "no pixel has a valid depth");
    return cloud;
}

RenderResult render(const PointCloud& cloud, const PinholeCamera& camera, const CameraPose& pose,
                    const RenderOptions& options) {
    camera.validate();
    const std::size_t pixels = static_cast<std::size_t>(camera.width) * camera.height;
    const std::size_t n = cloud.size();

    ZBuffer zb(pixels);
    unsigned threads = options.threads ? options.threads : std::thread::hardware_concurrency();
    if (threads <= 1 || n < kParallelRenderThreshold) {
        splat_range(cloud, camera, pose, options.z_near, 0, n, zb);
    } else {
        threads = std::min<unsigned>(threads, static_cast<unsigned>(n / (kParallelRenderThreshold / 4)) + 1);
        std::vector<ZBuffer> partial(threads, ZBuffer(pixels));
        std::vector<std::thread> workers;
        const std::size_t chunk = (n + threads - 1) / threads;
        for (unsigned t = 0; t < threads; ++t) {
            const std::size_t begin = std::min(n, t * chunk);
            const std::size_t end = std::min(n, begin + chunk);
            workers.emplace_back([&, t, begin, end] {
                splat_range(cloud, camera, pose, options.z_near, begin, end, partial[t]);
            });
        }
        for (auto& w : workers) w.join();
        // Chunks cover ascending index ranges, so merging in order reproduces the sequential result.
        for (const auto& part : partial) {
            for (std::size_t px = 0; px < pixels; ++px) {
                if (part.depth[px] < zb.depth[px]) {
                    zb.depth[px] = part.depth[px];
                    zb.index[px] = part.index[px];
                }
            }
        }
    }

    RenderResult out;
    out.color = ColorImage(camera.width, camera.height, 3);
    out.mask = Mask(camera.width, camera.height, 1);
    out.depth_buffer = DepthImage(camera.width, camera.height, 1);
    out.winner = Image<std::int64_t>(camera.width, camera.height, 1, -1);
    for (int y = 0; y < camera.height; ++y) {
        for (int x = 0; x < camera.width; ++x) {
            const std::size_t px = static_cast<std::size_t>(y) * camera.width + x;
            if (zb.index[px] < 0) continue;
            const auto& rgb = cloud.colors[static_cast<std::size_t>(zb.index[px])];
            for (int c = 0; c < 3; ++c) out.color.at(x, y, c) = rgb[static_cast<std::size_t>(c)];
            out.mask.at(x, y) = 1;
            out.depth_buffer.at(x, y) = zb.depth[px];
            out.winner.at(x, y) = zb.index[px];
        }
    }
    return out;
}

Filler constant_filler(double value) {
    return [value](const FillRequest& req) {
        ColorImage out = req.color;
        for (int y = 0; y < out.height(); ++y) {
            for (int x = 0; x < out.width(); ++x) {
                if (req.known.at(x, y)) continue;
                for (int c = 0; c < out.channels(); ++c) out.at(x, y, c) = value;
            }
        }
        return out;
    };
}

Filler diffusion_filler(DiffusionFillOptions options) {
    return [options](const FillRequest& req) {
        const ColorImage& color = req.color;
        const Mask& known = req.known;
        const std::size_t known_count = count_true(known);
        if (known_count == known.pixel_count()) return color;
        if (known_count == 0) return constant_filler(0.5)(req);

        ColorImage out = nearest_known_fill(color, known);
        std::vector<std::pair<int, int>> holes;
        for (int y = 0; y < color.height(); ++y) {
            for (int x = 0; x < color.width(); ++x) {
                if (!known.at(x, y)) holes.emplace_back(x, y);
            }
        }
        constexpr int dx[4] = {1, -1, 0, 0};
        constexpr int dy[4] = {0, 0, 1, -1};
        const int channels = out.channels();
        for (int iter = 0; iter < options.max_iterations; ++iter) {
            double max_change = 0.0;
            for (const auto& [x, y] : holes) {
                for (int c = 0; c < channels; ++c) {
                    double sum = 0.0;
                    int count = 0;
                    for (int k = 0; k < 4; ++k) {
                        const int nx = x + dx[k], ny = y + dy[k];
                        if (!out.contains(nx, ny)) continue;
                        sum += out.at(nx, ny, c);
                        ++count;
                    }
                    const double next = sum / count;
                    max_change = std::max(max_change, std::abs(next - out.at(x, y, c)));
                    out.at(x, y, c) = next;
                }
            }
            if (max_change < options.tolerance) break;
        }
        return out;
    };
}

DepthProvider nearest_valid_depth_provider() {
    return [](const ColorImage& filled, const ViewContext& view) {
        if (view.prefill == nullptr) {
            fail(ErrorKind::InvalidArgument, "nearest-valid depth needs the pre-fill render");
        }
        const RenderResult& r = *view.prefill;
        if (count_true(r.mask) == 0) {
            fail(ErrorKind::InvalidDepth, "no rendered depth to extend into holes");
        }
        if (!r.depth_buffer.same_shape(filled.width(), filled.height())) {
            fail(ErrorKind::InvalidArgument, "filled raster and render differ in size");
        }
        return nearest_known_fill(r.depth_buffer, r.mask);
    };
}

ColorImage fill_holes(const RenderResult& render_result, const Filler& filler,
                      std::optional<std::string> prompt, ViewContext view) {
    if (!view.prefill) view.prefill = &render_result;
    const FillRequest request{render_result.color, render_result.mask, std::move(prompt), view};
    ColorImage out;
    try {
        out = filler(request);
    } catch (const Error& e) {
        throw Error(e.kind(), view_prefix(view.view_index) + "filler failed: " + e.what());
    } catch (const std::exception& e) {
        throw Error(ErrorKind::Stage, view_prefix(view.view_index) + "filler failed: " + e.what());
    }
    if (!out.same_shape(render_result.color.width(), render_result.color.height()) ||
        out.channels() != render_result.color.channels()) {
        fail(ErrorKind::Stage, view_prefix(view.view_index) + "filler returned a raster of the wrong shape");
    }
    for (int y = 0; y < out.height(); ++y) {
        for (int x = 0; x < out.width(); ++x) {
            if (!render_result.mask.at(x, y)) continue;
            for (int c = 0; c < out.channels(); ++c) out.at(x, y, c) = render_result.color.at(x, y, c);
        }
    }
    return out;
}

double depth_scale_loss(double scale, const RgbdFrame& candidate, const Mask& hole_mask,
                        const PinholeCamera& camera, const CameraPose& pose,
                        const PointCloud& reference, const RenderResult& reference_render) {
    return l1_loss(scale, collect_correspondences(candidate, hole_mask, camera, pose, reference,
                                                  reference_render));
}

DepthScaleFit optimize_depth_scale(const RgbdFrame& candidate, const Mask& hole_mask,
                                   const PinholeCamera& camera, const CameraPose& pose,
                                   const PointCloud& reference, const DepthScaleOptions& options) {
    camera.validate();
    check_shape(candidate.color, camera, "candidate");
    if (!hole_mask.same_shape(camera.width, camera.height)) {
        fail(ErrorKind::InvalidArgument, "hole mask does not match the camera raster");
    }
    if (!(options.min_scale > 0.0 && options.max_scale > options.min_scale && options.grid_points >= 2)) {
        fail(ErrorKind::InvalidArgument, "invalid depth-scale search range");
    }
    const RenderResult ref_render = render(reference, camera, pose);
    const auto pairs = collect_correspondences(candidate, hole_mask, camera, pose, reference, ref_render);
    if (pairs.empty()) fail(ErrorKind::NoOverlap, "no overlap between the candidate view and the cloud");

    const double log_lo = std::log(options.min_scale);
    const double log_hi = std::log(options.max_scale);
    const int n = options.grid_points;
    auto grid_at = [&](int k) { return log_lo + (log_hi - log_lo) * k / (n - 1); };

    int best_k = 0;
    double best_loss = std::numeric_limits<double>::infinity();
    for (int k = 0; k < n; ++k) {
        const double loss = l1_loss(std::exp(grid_at(k)), pairs);
        if (loss < best_loss) {
            best_loss = loss;
            best_k = k;
        }
    }

    // Golden-section on log scale within the neighbouring grid cells.
    double a = grid_at(std::max(0, best_k - 1));
    double b = grid_at(std::min(n - 1, best_k + 1));
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    const double tol = std::log1p(options.relative_tolerance);
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = l1_loss(std::exp(c), pairs);
    double fd = l1_loss(std::exp(d), pairs);
    while (b - a > tol) {
        if (fc <= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = l1_loss(std::exp(c), pairs);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = l1_loss(std::exp(d), pairs);
        }
    }

    DepthScaleFit fit;
    fit.overlap = pairs.size();
    const double refined = std::exp(0.5 * (a + b));
    const double refined_loss = l1_loss(refined, pairs);
    if (refined_loss <= best_loss) {
        fit.scale = refined;
        fit.loss = refined_loss;
    } else {
        fit.scale = std::exp(grid_at(best_k));
        fit.loss = best_loss;
    }
    return fit;
}

PointCloud merge(const PointCloud& cloud, const PointCloud& additions) {
    PointCloud out = cloud;
    out.positions.insert(out.positions.end(), additions.positions.begin(), additions.positions.end());
    out.colors.insert(out.colors.end(), additions.colors.begin(), additions.colors.end());
    out.source_view.insert(out.source_view.end(), additions.source_view.begin(), additions.source_view.end());
    return out;
}

StageOneResult stage_one(const RgbdFrame& input, const Trajectory& trajectory,
                         const PinholeCamera& camera, const Filler& filler,
                         const DepthProvider& depth_provider, const StageOneOptions& options) {
    if (trajectory.poses.empty()) fail(ErrorKind::InvalidArgument, "trajectory is empty");
    const CameraPose& first = trajectory.poses.front();
    if ((first.homogeneous() - Mat4::Identity()).cwiseAbs().maxCoeff() > 1e-12) {
        fail(ErrorKind::InvalidArgument, "the first trajectory pose must be the identity");
    }

    StageOneResult result;
    PointCloud cloud = lift(input, camera, first, 0);
    {
        RenderResult r0 = render(cloud, camera, first, options.render);
        result.frames.push_back(input.color);
        result.hole_fractions.push_back(r0.hole_fraction());
        result.renders.push_back(std::move(r0));
        result.depth_scales.push_back(1.0);
        result.cloud_sizes.push_back(cloud.size());
    }

    for (std::size_t i = 1; i < trajectory.size(); ++i) {
        const int view_index = static_cast<int>(i);
        const CameraPose& pose = trajectory.poses[i];
        try {
            RenderResult prefill = render(cloud, camera, pose, options.render);
            const ViewContext ctx{view_index, pose, camera, &prefill};
            ColorImage filled = fill_holes(prefill, filler, options.prompt, ctx);

            Mask hole(camera.width, camera.height, 1);
            for (std::size_t k = 0; k < hole.data().size(); ++k) hole.data()[k] = !prefill.mask.data()[k];

            double scale = 1.0;
            ColorImage frame;
            if (count_true(hole) == 0) {
                frame = prefill.color;
            } else {
                DepthImage depth = depth_provider(filled, ctx);
                RgbdFrame candidate{std::move(filled), std::move(depth)};
                if (!candidate.depth.same_shape(camera.width, camera.height) || candidate.depth.channels() != 1) {
                    fail(ErrorKind::InvalidDepth, "depth provider returned a raster of the wrong shape");
                }
                try {
                    scale = optimize_depth_scale(candidate, hole, camera, pose, cloud, options.depth_scale).scale;
                } catch (const Error& e) {
                    if (e.kind() != ErrorKind::NoOverlap) throw;
                    result.warnings.push_back(view_prefix(view_index) +
                                              "no overlap with the existing cloud, depth scale set to 1");
                }
                cloud = merge(cloud, lift_selected(candidate, hole, camera, pose, scale, view_index));
                const RenderResult after = render(cloud, camera, pose, options.render);
                frame = candidate.color;
                for (int y = 0; y < camera.height; ++y) {
                    for (int x = 0; x < camera.width; ++x) {
                        if (!after.mask.at(x, y)) continue;
                        for (int c = 0; c < 3; ++c) frame.at(x, y, c) = after.color.at(x, y, c);
                    }
                }
            }
            result.frames.push_back(std::move(frame));
            result.hole_fractions.push_back(prefill.hole_fraction());
            result.renders.push_back(std::move(prefill));
            result.depth_scales.push_back(scale);
            result.cloud_sizes.push_back(cloud.size());
        } catch (const Error& e) {
            const std::string msg = e.what();
            if (msg.rfind("view ", 0) == 0) throw;
            throw Error(e.kind(), view_prefix(view_index) + msg);
        } catch (const std::exception& e) {
            throw Error(ErrorKind::Stage, view_prefix(view_index) + e.what());
        }
    }
    result.cloud = std::move(cloud);
    return result;
}

} // namespace cammotion
