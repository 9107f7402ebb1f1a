#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cstdint>
#include <vector>

#include "sparseview/feature_map.hpp"

namespace sparseview {

/// Pinhole intrinsics in pixels. Pixel (x, y) has its center at the continuous
/// coordinate (x, y).
struct Intrinsics {
    double fx = 1.0, fy = 1.0;
    double cx = 0.0, cy = 0.0;
    int width = 1, height = 1;

    Eigen::Matrix3d matrix() const;
    /// Intrinsics for a grid downsampled by an integer factor (block averaging).
    Intrinsics downscaled(int factor) const;
    void validate() const;
};

/// World-to-camera rigid transform, x-right / y-down / z-forward.
struct Pose {
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();

    Eigen::Vector3d to_camera(const Eigen::Vector3d &world) const {
        return rotation * world + translation;
    }
    Eigen::Vector3d to_world(const Eigen::Vector3d &cam) const {
        return rotation.transpose() * (cam - translation);
    }
    Eigen::Vector3d center() const { return -rotation.transpose() * translation; }

    Eigen::Matrix4d matrix() const;
    static Pose from_matrix(const Eigen::Matrix4d &m);
    /// Camera at `eye` looking at `target`; world up is -y.
    static Pose look_at(const Eigen::Vector3d &eye, const Eigen::Vector3d &target);

    void validate(double tol = 1e-6) const;
};

struct Camera {
    Intrinsics intrinsics;
    Pose pose;
};

enum class DepthSpacing { Uniform, InverseDepth };

struct DepthPlanes {
    double near = 1.0;
    double far = 100.0;
    std::vector<double> values;

    int count() const { return static_cast<int>(values.size()); }
    /// Half the distance to the nearest neighbouring plane around `depth`.
    double half_spacing_at(double depth) const;
};

DepthPlanes depth_planes(double near, double far, int count,
                         DepthSpacing spacing = DepthSpacing::Uniform);

Eigen::Vector3d unproject(const Eigen::Vector2d &pixel, double depth, const Intrinsics &K,
                          const Pose &pose);

/// Pixel coordinate and camera-space depth of a world point.
struct Projection {
    Eigen::Vector2d pixel;
    double depth;
};
Projection project(const Eigen::Vector3d &world, const Intrinsics &K, const Pose &pose);

struct WarpResult {
    FeatureMap features;
    std::vector<std::uint8_t> valid;  // H×W, 1 where the sample landed inside view j
};

/// Warps `source` (view j) onto the pixel grid of view i, assuming every pixel
/// of view i lies on the fronto-parallel plane at `depth`. Both cameras'
/// intrinsics must describe the feature grids they are applied to.
WarpResult plane_sweep_warp(const FeatureMap &source, const Camera &target_cam,
                            const Camera &source_cam, double depth);

/// Bilinear sample of every channel at a continuous position. Returns false and
/// leaves `out` zeroed when the position is outside [0, W-1]×[0, H-1].
bool sample_bilinear(const FeatureMap &map, double x, double y, double *out);

}  // namespace sparseview
