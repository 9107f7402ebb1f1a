#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "sparseview/costvolume.hpp"
#include "sparseview/feature_map.hpp"
#include "sparseview/geometry.hpp"
#include "sparseview/image.hpp"

namespace sparseview {

inline constexpr int kDefaultFeatureChannels = 4;

struct Gaussian {
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    double opacity = 1.0;
    Eigen::Vector3d scale = Eigen::Vector3d::Constant(0.01);
    Eigen::Vector4d rotation = Eigen::Vector4d(1.0, 0.0, 0.0, 0.0);  // (w, x, y, z)
    std::vector<double> sh;       // 3 * (S + 1)^2, basis major
    std::vector<double> feature;  // C_f payload

    int source_view = -1;
    int source_x = -1;
    int source_y = -1;
};

struct GaussianCloud {
    int sh_degree = 0;
    int feature_channels = kDefaultFeatureChannels;
    std::vector<Gaussian> gaussians;

    std::size_t size() const { return gaussians.size(); }
    bool empty() const { return gaussians.empty(); }

    /// Throws InvariantViolation on the first Gaussian that breaks a contract.
    void validate() const;
    void append(const GaussianCloud &other);
};

/// Rotation matrix of a quaternion (w, x, y, z); the quaternion is normalised first.
Eigen::Matrix3d rotation_from_quaternion(const Eigen::Vector4d &q);

/// Sigma = R(q) diag(s^2) R(q)^T. Rejects quaternions more than 1e-4 from unit norm.
Eigen::Matrix3d covariance(const Eigen::Vector3d &scale, const Eigen::Vector4d &q);

/// Deterministic stand-ins for the learned Gaussian heads.
struct HeadParams {
    double isotropy = 1.0;  // scale = isotropy * depth / fx
    int sh_degree = 0;
    int feature_channels = kDefaultFeatureChannels;
    /// Row-major C_f × C map from local features to the payload. Empty selects
    /// the first min(C, C_f) channels.
    std::vector<double> feature_projection;
};

/// One Gaussian per pixel of `depth` (which must match the view image). The
/// feature map may be coarser than the image; it is sampled bilinearly at
/// each pixel's footprint. `offsets` is H×W×3 or empty for zero offsets.
GaussianCloud build_gaussians(const DepthMap &depth, const Camera &camera, const Image &image,
                              const FeatureMap &features, const Image &offsets,
                              const HeadParams &params, int view_index = 0);

/// Binary cloud stream: "SVGC", u32 version, u32 count, u32 C_f, u32 S, then
/// per record little-endian f32 mean[3] opacity scale[3] rotation[4] sh[..]
/// feature[..] followed by i32 source_view, source_x, source_y.
void write_cloud(std::ostream &out, const GaussianCloud &cloud);
GaussianCloud read_cloud(std::istream &in);
void save_cloud(const std::string &path, const GaussianCloud &cloud);
GaussianCloud load_cloud(const std::string &path);

inline constexpr std::uint32_t kCloudFormatVersion = 1;

}  // namespace sparseview
