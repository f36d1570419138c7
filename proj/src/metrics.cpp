#include "cammotion/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/LU>
#include <Eigen/SVD>

#include "cammotion/error.hpp"

namespace cammotion {

namespace {

constexpr double kPoseTolerance = 1e-6;

void check_pair(const PoseTrack& estimate, const PoseTrack& reference) {
    estimate.validate();
    reference.validate();
    if (estimate.size() != reference.size()) {
        fail(ErrorKind::InvalidArgument, "track lengths differ: " + std::to_string(estimate.size()) +
                                             " vs " + std::to_string(reference.size()));
    }
}

} // namespace

PoseTrack PoseTrack::from_trajectory(const Trajectory& trajectory) {
    PoseTrack track;
    track.poses = trajectory.poses;
    track.frame_indices.resize(trajectory.size());
    std::iota(track.frame_indices.begin(), track.frame_indices.end(), 0);
    return track;
}

std::vector<Vec3> PoseTrack::centers() const {
    std::vector<Vec3> out;
    out.reserve(poses.size());
    for (const auto& p : poses) out.push_back(p.center());
    return out;
}

void PoseTrack::validate() const {
    if (!frame_indices.empty() && frame_indices.size() != poses.size()) {
        fail(ErrorKind::InvalidArgument, "pose track needs one frame index per pose");
    }
    for (std::size_t i = 1; i < frame_indices.size(); ++i) {
        if (frame_indices[i] <= frame_indices[i - 1]) {
            fail(ErrorKind::InvalidArgument, "pose track frame indices must be strictly increasing");
        }
    }
    for (std::size_t i = 0; i < poses.size(); ++i) {
        if (!(poses[i].orthonormality_error() <= kPoseTolerance) || !poses[i].translation.allFinite()) {
            fail(ErrorKind::InvalidPose, "pose " + std::to_string(i) + " is not a rigid transform");
        }
    }
}

Similarity umeyama_align(const PoseTrack& estimate, const PoseTrack& reference, bool with_scale) {
    check_pair(estimate, reference);
    const std::size_t n = estimate.size();
    if (n < 3) {
        fail(ErrorKind::Degenerate, "alignment needs at least 3 poses, got " + std::to_string(n));
    }
    const auto src = estimate.centers();
    const auto dst = reference.centers();

    Vec3 mu_src = Vec3::Zero(), mu_dst = Vec3::Zero();
    for (std::size_t i = 0; i < n; ++i) {
        mu_src += src[i];
        mu_dst += dst[i];
    }
    mu_src /= static_cast<double>(n);
    mu_dst /= static_cast<double>(n);

    double var_src = 0.0;
    Mat3 cov = Mat3::Zero();
    for (std::size_t i = 0; i < n; ++i) {
        const Vec3 a = src[i] - mu_src;
        const Vec3 b = dst[i] - mu_dst;
        var_src += a.squaredNorm();
        cov += b * a.transpose();
    }
    var_src /= static_cast<double>(n);
    cov /= static_cast<double>(n);

    const double extent = std::max(mu_src.norm(), 1.0);
    if (!(var_src > 1e-24 * extent * extent)) {
        fail(ErrorKind::Degenerate, "estimate camera centers are all identical");
    }

    Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Vec3 s = Vec3::Ones();
    if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) s(2) = -1.0;

    Similarity out;
    out.rotation = svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
    out.scale = with_scale ? svd.singularValues().dot(s) / var_src : 1.0;
    out.translation = mu_dst - out.scale * (out.rotation * mu_src);
    return out;
}

double ate(const PoseTrack& estimate, const PoseTrack& reference, bool with_scale) {
    const Similarity sim = umeyama_align(estimate, reference, with_scale);
    const auto src = estimate.centers();
    const auto dst = reference.centers();
    double sum = 0.0;
    for (std::size_t i = 0; i < src.size(); ++i) sum += (sim.apply(src[i]) - dst[i]).squaredNorm();
    return std::sqrt(sum / static_cast<double>(src.size()));
}

double rotation_angle(const Mat3& r) {
    // atan2 keeps precision near 0 and pi where acos of the trace does not.
    const Vec3 axis(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
    const double cos_theta = std::clamp((r.trace() - 1.0) / 2.0, -1.0, 1.0);
    return std::atan2(0.5 * axis.norm(), cos_theta);
}

RelativePoseError rpe(const PoseTrack& estimate, const PoseTrack& reference, int delta) {
    check_pair(estimate, reference);
    const auto n = static_cast<int>(estimate.size());
    if (delta < 1 || delta >= n) {
        fail(ErrorKind::InvalidArgument,
             "delta " + std::to_string(delta) + " needs 1 <= delta < " + std::to_string(n));
    }
    RelativePoseError out;
    double sum_t = 0.0, sum_r = 0.0;
    for (int i = 0; i + delta < n; ++i) {
        const auto a = static_cast<std::size_t>(i);
        const auto b = static_cast<std::size_t>(i + delta);
        // Camera-to-world transforms are the inverses of the stored extrinsics.
        const Mat4 q = reference.poses[a].homogeneous() * reference.poses[b].inverse().homogeneous();
        const Mat4 p = estimate.poses[a].homogeneous() * estimate.poses[b].inverse().homogeneous();
        const Mat4 e = q.inverse() * p;
        sum_t += e.topRightCorner<3, 1>().squaredNorm();
        const double angle = rotation_angle(e.topLeftCorner<3, 3>());
        sum_r += angle * angle;
        ++out.pairs;
    }
    out.translation = std::sqrt(sum_t / static_cast<double>(out.pairs));
    out.rotation = std::sqrt(sum_r / static_cast<double>(out.pairs));
    return out;
}

EvaluationReport evaluate(const PoseTrack& estimate, const PoseTrack& reference, int delta, bool with_scale) {
    EvaluationReport report;
    report.ate = ate(estimate, reference, with_scale);
    const auto r = rpe(estimate, reference, delta);
    report.rpe_t = r.translation;
    report.rpe_r = r.rotation;
    report.n = estimate.size();
    report.delta = delta;
    report.with_scale = with_scale;
    return report;
}

} // namespace cammotion
