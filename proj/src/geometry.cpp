#include "sparseview/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sparseview/error.hpp"

namespace sparseview {

Eigen::Matrix3d Intrinsics::matrix() const {
    Eigen::Matrix3d k;
    k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
    return k;
}

Intrinsics Intrinsics::downscaled(int factor) const {
    require(factor >= 1, ErrorCode::InvalidArgument, "downscale factor must be >= 1");
    require(width % factor == 0 && height % factor == 0, ErrorCode::InvalidArgument,
            "downscale factor must divide the image size");
    Intrinsics k = *this;
    const double f = factor;
    k.fx = fx / f;
    k.fy = fy / f;
    k.cx = (cx + 0.5) / f - 0.5;
    k.cy = (cy + 0.5) / f - 0.5;
    k.width = width / factor;
    k.height = height / factor;
    return k;
}

void Intrinsics::validate() const {
    require(fx > 0.0 && fy > 0.0, ErrorCode::InvariantViolation, "focal lengths must be positive");
    require(width > 0 && height > 0, ErrorCode::InvariantViolation, "image size must be positive");
    require(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height, ErrorCode::InvariantViolation,
            "principal point must lie inside the image");
}

Eigen::Matrix4d Pose::matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rotation;
    m.topRightCorner<3, 1>() = translation;
    return m;
}

Pose Pose::from_matrix(const Eigen::Matrix4d &m) {
    Pose p;
    p.rotation = m.topLeftCorner<3, 3>();
    p.translation = m.topRightCorner<3, 1>();
    return p;
}

Pose Pose::look_at(const Eigen::Vector3d &eye, const Eigen::Vector3d &target) {
    const Eigen::Vector3d forward = (target - eye).normalized();
    Eigen::Vector3d up(0.0, -1.0, 0.0);
    if (std::abs(forward.dot(up)) > 0.999) up = Eigen::Vector3d(0.0, 0.0, 1.0);
    const Eigen::Vector3d right = forward.cross(up).normalized();
    const Eigen::Vector3d down = forward.cross(right);
    Pose p;
    p.rotation.row(0) = right.transpose();
    p.rotation.row(1) = down.transpose();
    p.rotation.row(2) = forward.transpose();
    p.translation = -p.rotation * eye;
    return p;
}

void Pose::validate(double tol) const {
    require(rotation.allFinite() && translation.allFinite(), ErrorCode::InvariantViolation,
            "pose contains non-finite values");
    const double ortho = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    require(ortho <= tol, ErrorCode::InvariantViolation,
            "rotation is not orthonormal (deviation " + std::to_string(ortho) + ")");
    require(std::abs(rotation.determinant() - 1.0) <= tol, ErrorCode::InvariantViolation,
            "rotation determinant is not +1");
}

double DepthPlanes::half_spacing_at(double depth) const {
    if (values.size() < 2) return 0.0;
    auto it = std::upper_bound(values.begin(), values.end(), depth);
    std::size_t hi = static_cast<std::size_t>(it - values.begin());
    hi = std::clamp<std::size_t>(hi, 1, values.size() - 1);
    return 0.5 * (values[hi] - values[hi - 1]);
}

DepthPlanes depth_planes(double near, double far, int count, DepthSpacing spacing) {
    require(near > 0.0 && far > near && count >= 2, ErrorCode::InvalidArgument,
            "depth planes need 0 < near < far and at least two planes");
    DepthPlanes planes;
    planes.near = near;
    planes.far = far;
    planes.values.resize(count);
    const double steps = count - 1;
    for (int m = 0; m < count; ++m) {
        if (spacing == DepthSpacing::Uniform) {
            planes.values[m] = near + m * (far - near) / steps;
        } else {
            const double inv = 1.0 / near + m * (1.0 / far - 1.0 / near) / steps;
            planes.values[m] = 1.0 / inv;
        }
    }
    planes.values.front() = near;
    planes.values.back() = far;
    return planes;
}

Eigen::Vector3d unproject(const Eigen::Vector2d &pixel, double depth, const Intrinsics &K,
                          const Pose &pose) {
    require(depth > 0.0, ErrorCode::InvalidArgument, "unproject needs a positive depth");
    const Eigen::Vector3d cam((pixel.x() - K.cx) / K.fx * depth, (pixel.y() - K.cy) / K.fy * depth,
                              depth);
    return pose.to_world(cam);
}

Projection project(const Eigen::Vector3d &world, const Intrinsics &K, const Pose &pose) {
    const Eigen::Vector3d cam = pose.to_camera(world);
    return {Eigen::Vector2d(K.fx * cam.x() / cam.z() + K.cx, K.fy * cam.y() / cam.z() + K.cy),
            cam.z()};
}

bool sample_bilinear(const FeatureMap &map, double x, double y, double *out) {
    std::fill(out, out + map.channels, 0.0);
    // Positions a rounding error outside the grid are snapped back onto it.
    constexpr double kEdge = 1e-9;
    if (!(x >= -kEdge && y >= -kEdge && x <= map.width - 1 + kEdge && y <= map.height - 1 + kEdge))
        return false;
    x = std::clamp(x, 0.0, static_cast<double>(map.width - 1));
    y = std::clamp(y, 0.0, static_cast<double>(map.height - 1));
    const int x0 = std::min(static_cast<int>(x), map.width - 1);
    const int y0 = std::min(static_cast<int>(y), map.height - 1);
    const int x1 = std::min(x0 + 1, map.width - 1);
    const int y1 = std::min(y0 + 1, map.height - 1);
    const double fx = x - x0, fy = y - y0;
    const double w00 = (1 - fx) * (1 - fy), w10 = fx * (1 - fy), w01 = (1 - fx) * fy, w11 = fx * fy;
    for (int c = 0; c < map.channels; ++c) {
        out[c] = w00 * map.at(c, y0, x0) + w10 * map.at(c, y0, x1) + w01 * map.at(c, y1, x0) +
                 w11 * map.at(c, y1, x1);
    }
    return true;
}

WarpResult plane_sweep_warp(const FeatureMap &source, const Camera &target_cam,
                            const Camera &source_cam, double depth) {
    require(depth > 0.0, ErrorCode::InvalidArgument, "warp depth must be positive");
    const Intrinsics &Ki = target_cam.intrinsics;
    const Intrinsics &Kj = source_cam.intrinsics;
    require(Kj.width == source.width && Kj.height == source.height, ErrorCode::ShapeMismatch,
            "source intrinsics do not match the feature grid");

    // Composite transform from view-i camera space to view-j camera space.
    const Eigen::Matrix3d R = source_cam.pose.rotation * target_cam.pose.rotation.transpose();
    const Eigen::Vector3d t = source_cam.pose.translation - R * target_cam.pose.translation;

    WarpResult out{FeatureMap(source.channels, Ki.height, Ki.width, 0.0, source.view_index),
                   std::vector<std::uint8_t>(static_cast<std::size_t>(Ki.height) * Ki.width, 0)};
    std::vector<double> sample(source.channels);
    for (int y = 0; y < Ki.height; ++y) {
        for (int x = 0; x < Ki.width; ++x) {
            const Eigen::Vector3d pi((x - Ki.cx) / Ki.fx * depth, (y - Ki.cy) / Ki.fy * depth, depth);
            const Eigen::Vector3d pj = R * pi + t;
            if (pj.z() <= 0.0) continue;
            const double u = Kj.fx * pj.x() / pj.z() + Kj.cx;
            const double v = Kj.fy * pj.y() / pj.z() + Kj.cy;
            if (!sample_bilinear(source, u, v, sample.data())) continue;
            out.valid[static_cast<std::size_t>(y) * Ki.width + x] = 1;
            for (int c = 0; c < source.channels; ++c) out.features.at(c, y, x) = sample[c];
        }
    }
    return out;
}

}  // namespace sparseview
