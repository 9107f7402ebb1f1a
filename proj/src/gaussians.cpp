#include "sparseview/gaussians.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "sparseview/error.hpp"
#include "sparseview/sh.hpp"

namespace sparseview {

void GaussianCloud::validate() const {
    require(sh_degree >= 0 && feature_channels >= 0, ErrorCode::InvariantViolation,
            "cloud layout is invalid");
    const std::size_t sh_count = 3 * sh_basis_count(sh_degree);
    for (std::size_t i = 0; i < gaussians.size(); ++i) {
        const Gaussian &g = gaussians[i];
        const std::string at = " (gaussian " + std::to_string(i) + ")";
        require(g.mean.allFinite(), ErrorCode::InvariantViolation, "non-finite mean" + at);
        require(g.opacity >= 0.0 && g.opacity <= 1.0, ErrorCode::InvariantViolation,
                "opacity outside [0, 1]" + at);
        require(g.scale.allFinite() && (g.scale.array() > 0.0).all(), ErrorCode::InvariantViolation,
                "scale must be positive" + at);
        require(std::abs(g.rotation.norm() - 1.0) <= 1e-6, ErrorCode::InvariantViolation,
                "rotation is not a unit quaternion" + at);
        require(g.sh.size() == sh_count, ErrorCode::InvariantViolation, "SH coefficient count mismatch" + at);
        require(g.feature.size() == static_cast<std::size_t>(feature_channels), ErrorCode::InvariantViolation,
                "feature payload size mismatch" + at);
        require(std::all_of(g.sh.begin(), g.sh.end(), [](double v) { return std::isfinite(v); }) &&
                    std::all_of(g.feature.begin(), g.feature.end(), [](double v) { return std::isfinite(v); }),
                ErrorCode::InvariantViolation, "non-finite color or feature" + at);
    }
}

void GaussianCloud::append(const GaussianCloud &other) {
    if (gaussians.empty()) {
        sh_degree = other.sh_degree;
        feature_channels = other.feature_channels;
    }
    require(sh_degree == other.sh_degree && feature_channels == other.feature_channels,
            ErrorCode::ShapeMismatch, "cannot merge clouds with different layouts");
    gaussians.insert(gaussians.end(), other.gaussians.begin(), other.gaussians.end());
}

Eigen::Matrix3d rotation_from_quaternion(const Eigen::Vector4d &q_in) {
    const Eigen::Vector4d q = q_in.normalized();
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Eigen::Matrix3d r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

Eigen::Matrix3d covariance(const Eigen::Vector3d &scale, const Eigen::Vector4d &q) {
    require((scale.array() > 0.0).all(), ErrorCode::InvalidArgument, "scales must be positive");
    require(std::abs(q.norm() - 1.0) <= 1e-4, ErrorCode::InvalidArgument, "quaternion is not unit length");
    const Eigen::Matrix3d m = rotation_from_quaternion(q) * scale.asDiagonal();
    return m * m.transpose();
}

GaussianCloud build_gaussians(const DepthMap &depth, const Camera &camera, const Image &image,
                              const FeatureMap &features, const Image &offsets,
                              const HeadParams &params, int view_index) {
    const Intrinsics &K = camera.intrinsics;
    require(depth.width == image.width && depth.height == image.height, ErrorCode::ShapeMismatch,
            "depth map must match the view image");
    require(K.width == image.width && K.height == image.height, ErrorCode::ShapeMismatch,
            "intrinsics must match the view image");
    require(image.channels == 3, ErrorCode::ShapeMismatch, "view image must be RGB");
    require(features.width > 0 && features.height > 0 && features.channels > 0, ErrorCode::ShapeMismatch,
            "empty feature map");
    const bool has_offsets = !offsets.data.empty();
    if (has_offsets) {
        require(offsets.width == image.width && offsets.height == image.height && offsets.channels == 3,
                ErrorCode::ShapeMismatch, "offsets must be H×W×3");
        require(all_finite(offsets), ErrorCode::InvalidArgument, "offsets must be finite");
    }
    const int cf = params.feature_channels;
    const int C = features.channels;
    if (!params.feature_projection.empty()) {
        require(params.feature_projection.size() == static_cast<std::size_t>(cf * C), ErrorCode::ShapeMismatch,
                "feature projection must be C_f × C");
    }

    GaussianCloud cloud;
    cloud.sh_degree = params.sh_degree;
    cloud.feature_channels = cf;
    cloud.gaussians.resize(static_cast<std::size_t>(image.width) * image.height);

    const double sx = static_cast<double>(features.width) / image.width;
    const double sy = static_cast<double>(features.height) / image.height;
    const int sh_count = 3 * sh_basis_count(params.sh_degree);
    std::vector<double> local(C);

    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            Gaussian &g = cloud.gaussians[static_cast<std::size_t>(y) * image.width + x];
            const double d = depth.depth_at(x, y);
            require(d > 0.0 && std::isfinite(d), ErrorCode::InvalidArgument, "depth must be positive");
            Eigen::Vector3d cam((x - K.cx) / K.fx * d, (y - K.cy) / K.fy * d, d);
            if (has_offsets) {
                cam += Eigen::Vector3d(offsets.at(x, y, 0), offsets.at(x, y, 1), offsets.at(x, y, 2));
            }
            g.mean = camera.pose.to_world(cam);
            g.opacity = std::clamp(depth.confidence_at(x, y), 0.0, 1.0);
            g.scale = Eigen::Vector3d::Constant(params.isotropy * d / K.fx);
            g.rotation = Eigen::Vector4d(1.0, 0.0, 0.0, 0.0);

            g.sh.assign(sh_count, 0.0);
            for (int c = 0; c < 3; ++c) g.sh[c] = (image.at(x, y, c) - 0.5) / kShC0;

            const double fxc = std::clamp((x + 0.5) * sx - 0.5, 0.0, features.width - 1.0);
            const double fyc = std::clamp((y + 0.5) * sy - 0.5, 0.0, features.height - 1.0);
            sample_bilinear(features, fxc, fyc, local.data());
            g.feature.assign(cf, 0.0);
            if (params.feature_projection.empty()) {
                for (int c = 0; c < std::min(cf, C); ++c) g.feature[c] = local[c];
            } else {
                for (int r = 0; r < cf; ++r) {
                    double acc = 0.0;
                    for (int c = 0; c < C; ++c) acc += params.feature_projection[r * C + c] * local[c];
                    g.feature[r] = acc;
                }
            }
            g.source_view = view_index;
            g.source_x = x;
            g.source_y = y;
        }
    }
    return cloud;
}

namespace {

void put_u32(std::ostream &out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char *>(b), 4);
}

void put_f32(std::ostream &out, double v) {
    put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

std::uint32_t get_u32(std::istream &in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char *>(b), 4);
    require(static_cast<bool>(in), ErrorCode::InvalidArgument, "truncated cloud stream");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

double get_f32(std::istream &in) { return std::bit_cast<float>(get_u32(in)); }

constexpr char kMagic[4] = {'S', 'V', 'G', 'C'};

}  // namespace

void write_cloud(std::ostream &out, const GaussianCloud &cloud) {
    out.write(kMagic, 4);
    put_u32(out, kCloudFormatVersion);
    put_u32(out, static_cast<std::uint32_t>(cloud.size()));
    put_u32(out, static_cast<std::uint32_t>(cloud.feature_channels));
    put_u32(out, static_cast<std::uint32_t>(cloud.sh_degree));
    for (const Gaussian &g : cloud.gaussians) {
        for (int k = 0; k < 3; ++k) put_f32(out, g.mean[k]);
        put_f32(out, g.opacity);
        for (int k = 0; k < 3; ++k) put_f32(out, g.scale[k]);
        for (int k = 0; k < 4; ++k) put_f32(out, g.rotation[k]);
        for (double v : g.sh) put_f32(out, v);
        for (double v : g.feature) put_f32(out, v);
        put_u32(out, static_cast<std::uint32_t>(g.source_view));
        put_u32(out, static_cast<std::uint32_t>(g.source_x));
        put_u32(out, static_cast<std::uint32_t>(g.source_y));
    }
}

GaussianCloud read_cloud(std::istream &in) {
    char magic[4];
    in.read(magic, 4);
    require(static_cast<bool>(in) && std::memcmp(magic, kMagic, 4) == 0, ErrorCode::InvalidArgument,
            "not a Gaussian cloud stream");
    const std::uint32_t version = get_u32(in);
    require(version == kCloudFormatVersion, ErrorCode::InvalidArgument,
            "unsupported cloud format version " + std::to_string(version));
    const std::uint32_t count = get_u32(in);
    GaussianCloud cloud;
    cloud.feature_channels = static_cast<int>(get_u32(in));
    cloud.sh_degree = static_cast<int>(get_u32(in));
    const int sh_count = 3 * sh_basis_count(cloud.sh_degree);
    cloud.gaussians.resize(count);
    for (Gaussian &g : cloud.gaussians) {
        for (int k = 0; k < 3; ++k) g.mean[k] = get_f32(in);
        g.opacity = get_f32(in);
        for (int k = 0; k < 3; ++k) g.scale[k] = get_f32(in);
        for (int k = 0; k < 4; ++k) g.rotation[k] = get_f32(in);
        g.sh.resize(sh_count);
        for (double &v : g.sh) v = get_f32(in);
        g.feature.resize(cloud.feature_channels);
        for (double &v : g.feature) v = get_f32(in);
        g.source_view = static_cast<std::int32_t>(get_u32(in));
        g.source_x = static_cast<std::int32_t>(get_u32(in));
        g.source_y = static_cast<std::int32_t>(get_u32(in));
    }
    return cloud;
}

void save_cloud(const std::string &path, const GaussianCloud &cloud) {
    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), ErrorCode::MissingFile, "cannot write " + path);
    write_cloud(out, cloud);
}

GaussianCloud load_cloud(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorCode::MissingFile, "cannot open " + path);
    return read_cloud(in);
}

}  // namespace sparseview
