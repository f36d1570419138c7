#pragma once

#include <vector>

#include "cammotion/geometry.hpp"

namespace cammotion {

struct PoseTrack {
    std::vector<CameraPose> poses;
    /// Strictly increasing; empty means 0..n-1.
    std::vector<int> frame_indices;

    static PoseTrack from_trajectory(const Trajectory& trajectory);
    std::size_t size() const noexcept { return poses.size(); }
    std::vector<Vec3> centers() const;
    void validate() const;
};

/// x -> scale * rotation * x + translation.
struct Similarity {
    double scale = 1.0;
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    Vec3 apply(const Vec3& x) const { return scale * (rotation * x) + translation; }
};

/// Least-squares similarity taking estimate camera centers onto reference centers.
Similarity umeyama_align(const PoseTrack& estimate, const PoseTrack& reference, bool with_scale = true);

/// RMS of center residuals after alignment.
double ate(const PoseTrack& estimate, const PoseTrack& reference, bool with_scale = true);

struct RelativePoseError {
    double translation = 0.0;
    double rotation = 0.0; // radians
    std::size_t pairs = 0;
};

/// RMS over i of the error between relative motions i -> i + delta, computed on
/// camera-to-world transforms so a change of world frame cancels.
RelativePoseError rpe(const PoseTrack& estimate, const PoseTrack& reference, int delta = 1);

/// Rotation angle in [0, pi].
double rotation_angle(const Mat3& r);

struct EvaluationReport {
    double ate = 0.0;
    double rpe_t = 0.0;
    double rpe_r = 0.0;
    std::size_t n = 0;
    int delta = 1;
    bool with_scale = true;
};

EvaluationReport evaluate(const PoseTrack& estimate, const PoseTrack& reference, int delta = 1,
                          bool with_scale = true);

} // namespace cammotion
