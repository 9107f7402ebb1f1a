#include "sparseview/scene_io.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include <json.hpp>

#include "sparseview/error.hpp"
#include "sparseview/png_io.hpp"
#include "sparseview/rasterizer.hpp"
#include "sparseview/sh.hpp"

namespace fs = std::filesystem;

namespace sparseview {

namespace {

template <int R, int C>
std::vector<double> flatten(const Eigen::Matrix<double, R, C> &m) {
    std::vector<double> out;
    for (int r = 0; r < R; ++r)
        for (int c = 0; c < C; ++c) out.push_back(m(r, c));
    return out;
}

template <int R, int C>
Eigen::Matrix<double, R, C> unflatten(const nlohmann::json &j, const char *what) {
    if (!j.is_array() || j.size() != static_cast<std::size_t>(R * C))
        throw Error(ErrorCode::MalformedJson,
                    std::string(what) + " must be an array of " + std::to_string(R * C) + " numbers");
    Eigen::Matrix<double, R, C> m;
    for (int r = 0; r < R; ++r)
        for (int c = 0; c < C; ++c) m(r, c) = j[r * C + c].get<double>();
    return m;
}

void validate_frame(const SceneFrame &f, std::size_t index) {
    const std::string at = " (frame " + std::to_string(index) + ")";
    require(f.intrinsics.allFinite() && f.world_to_camera.allFinite(), ErrorCode::InvariantViolation,
            "non-finite camera matrix" + at);
    require(f.intrinsics(0, 0) > 0.0 && f.intrinsics(1, 1) > 0.0, ErrorCode::InvariantViolation,
            "focal lengths must be positive" + at);
    const Eigen::RowVector4d bottom = f.world_to_camera.row(3);
    require((bottom - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() <= 1e-9, ErrorCode::InvariantViolation,
            "world_to_camera bottom row must be [0, 0, 0, 1]" + at);
    const Eigen::Matrix3d r = f.world_to_camera.topLeftCorner<3, 3>();
    require((r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <= 1e-4,
            ErrorCode::InvariantViolation, "rotation block is not orthonormal" + at);
    require(std::abs(r.determinant() - 1.0) <= 1e-4, ErrorCode::InvariantViolation,
            "rotation block must have determinant +1" + at);
}

std::string frame_name(int i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "frame_%04d.png", i);
    return buf;
}

}  // namespace

std::string manifest_to_json(const SceneManifest &m) {
    nlohmann::json j;
    j["version"] = m.version;
    j["convention"] = m.convention;
    j["near"] = m.near;
    j["far"] = m.far;
    j["units"] = m.units;
    j["frames"] = nlohmann::json::array();
    for (const auto &f : m.frames)
        j["frames"].push_back(
            {{"image", f.image}, {"intrinsics", flatten(f.intrinsics)}, {"world_to_camera", flatten(f.world_to_camera)}});
    return j.dump(2);
}

SceneManifest manifest_from_json(const std::string &text) {
    SceneManifest m;
    try {
        const auto j = nlohmann::json::parse(text);
        m.version = j.at("version").get<std::string>();
        if (m.version != kManifestVersion)
            throw Error(ErrorCode::MalformedJson, "unsupported manifest version '" + m.version + "'");
        m.convention = j.value("convention", std::string(kManifestConvention));
        m.near = j.value("near", 1.0);
        m.far = j.value("far", 100.0);
        m.units = j.value("units", std::string("arbitrary"));
        for (const auto &f : j.at("frames")) {
            SceneFrame frame;
            frame.image = f.at("image").get<std::string>();
            frame.intrinsics = unflatten<3, 3>(f.at("intrinsics"), "intrinsics");
            frame.world_to_camera = unflatten<4, 4>(f.at("world_to_camera"), "world_to_camera");
            m.frames.push_back(frame);
        }
    } catch (const nlohmann::json::exception &e) {
        throw Error(ErrorCode::MalformedJson, std::string("cameras.json: ") + e.what());
    }
    require(m.near > 0.0 && m.far > m.near, ErrorCode::InvariantViolation, "scene needs 0 < near < far");
    for (std::size_t i = 0; i < m.frames.size(); ++i) validate_frame(m.frames[i], i);
    return m;
}

Camera Scene::camera(int frame) const {
    require(frame >= 0 && frame < frame_count(), ErrorCode::InvalidArgument, "frame index out of range");
    require(static_cast<std::size_t>(frame) < images.size(), ErrorCode::InvalidArgument,
            "scene images are not loaded");
    const SceneFrame &f = manifest.frames[frame];
    Camera cam;
    cam.intrinsics.fx = f.intrinsics(0, 0);
    cam.intrinsics.fy = f.intrinsics(1, 1);
    cam.intrinsics.cx = f.intrinsics(0, 2);
    cam.intrinsics.cy = f.intrinsics(1, 2);
    cam.intrinsics.width = images[frame].width;
    cam.intrinsics.height = images[frame].height;
    cam.pose = Pose::from_matrix(f.world_to_camera);
    return cam;
}

std::vector<Eigen::Vector3d> Scene::camera_centers() const {
    std::vector<Eigen::Vector3d> out;
    for (const auto &f : manifest.frames) out.push_back(Pose::from_matrix(f.world_to_camera).center());
    return out;
}

Scene load_scene(const std::string &dir) {
    const fs::path manifest_path = fs::path(dir) / "cameras.json";
    require(fs::exists(manifest_path), ErrorCode::MissingFile, "missing file: " + manifest_path.string());
    std::ifstream in(manifest_path);
    require(static_cast<bool>(in), ErrorCode::MissingFile, "cannot open " + manifest_path.string());
    std::stringstream text;
    text << in.rdbuf();

    Scene scene;
    scene.root = dir;
    scene.manifest = manifest_from_json(text.str());
    require(!scene.manifest.frames.empty(), ErrorCode::InvariantViolation, "scene has no frames");
    for (std::size_t i = 0; i < scene.manifest.frames.size(); ++i) {
        const fs::path image_path = fs::path(dir) / scene.manifest.frames[i].image;
        require(fs::exists(image_path), ErrorCode::MissingFile, "missing image file: " + image_path.string());
        scene.images.push_back(read_png(image_path.string()));
        require(scene.images.back().width == scene.images.front().width &&
                    scene.images.back().height == scene.images.front().height,
                ErrorCode::InvariantViolation, "scene images differ in size: " + image_path.string());
    }
    for (int i = 0; i < scene.frame_count(); ++i) scene.camera(i).intrinsics.validate();
    return scene;
}

void save_scene(const std::string &dir, const SceneManifest &manifest, const std::vector<Image> &images) {
    require(images.size() == manifest.frames.size(), ErrorCode::ShapeMismatch, "one image per frame required");
    fs::create_directories(dir);
    for (std::size_t i = 0; i < images.size(); ++i) {
        const fs::path p = fs::path(dir) / manifest.frames[i].image;
        if (p.has_parent_path()) fs::create_directories(p.parent_path());
        write_png(p.string(), images[i]);
    }
    std::ofstream out(fs::path(dir) / "cameras.json");
    require(static_cast<bool>(out), ErrorCode::MissingFile, "cannot write cameras.json in " + dir);
    out << manifest_to_json(manifest) << '\n';
}

Trajectory trajectory_from_name(const std::string &name) {
    if (name == "orbit") return Trajectory::Orbit;
    if (name == "line") return Trajectory::Line;
    throw Error(ErrorCode::InvalidArgument, "unknown trajectory: " + name);
}

SyntheticScene generate_synthetic_scene(const SyntheticSceneSpec &spec, const std::string &out_dir) {
    require(spec.cameras >= 2, ErrorCode::InvalidArgument, "synthetic scenes need at least two cameras");
    require(spec.gaussians >= 1 && spec.width > 0 && spec.height > 0 && spec.radius > 0.0,
            ErrorCode::InvalidArgument, "invalid synthetic scene spec");

    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

    SyntheticScene out;
    GaussianCloud &cloud = out.truth;
    cloud.sh_degree = spec.sh_degree;
    cloud.feature_channels = kDefaultFeatureChannels;
    const int sh_count = 3 * sh_basis_count(spec.sh_degree);
    Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
    for (int i = 0; i < spec.gaussians; ++i) {
        Gaussian g;
        g.mean = Eigen::Vector3d(uniform(-0.5, 0.5), uniform(-0.5, 0.5), uniform(-0.5, 0.5));
        g.opacity = uniform(0.3, 0.9);
        g.scale = Eigen::Vector3d(uniform(0.04, 0.12), uniform(0.04, 0.12), uniform(0.04, 0.12));
        g.rotation = Eigen::Vector4d(uniform(-1, 1), uniform(-1, 1), uniform(-1, 1), uniform(-1, 1));
        if (g.rotation.norm() < 1e-3) g.rotation = Eigen::Vector4d(1, 0, 0, 0);
        g.rotation.normalize();
        g.sh.assign(sh_count, 0.0);
        Eigen::Vector3d color(uniform(0.1, 0.9), uniform(0.1, 0.9), uniform(0.1, 0.9));
        for (int c = 0; c < 3; ++c) g.sh[c] = (color[c] - 0.5) / kShC0;
        for (int k = 3; k < sh_count; ++k) g.sh[k] = uniform(-0.05, 0.05);
        g.feature = {color.sum() / 2.0, (color[0] - color[1] + color[2]) / 2.0, (color[0] + color[1] - color[2]) / 2.0,
                     (color[0] - color[1] - color[2]) / 2.0};
        centroid += g.mean;
        cloud.gaussians.push_back(std::move(g));
    }
    centroid /= spec.gaussians;

    Intrinsics K;
    K.width = spec.width;
    K.height = spec.height;
    K.fx = K.fy = 1.8 * std::max(spec.width, spec.height);
    K.cx = (spec.width - 1) / 2.0;
    K.cy = (spec.height - 1) / 2.0;

    SceneManifest &m = out.scene.manifest;
    // Depth range bracketing the unit box as seen from the trajectory.
    m.near = std::max(0.1, spec.radius - 1.0);
    m.far = std::hypot(spec.radius, 1.0) + 1.0;
    m.units = "unit box";
    const double elevation = 0.3;
    for (int i = 0; i < spec.cameras; ++i) {
        Eigen::Vector3d eye;
        if (spec.trajectory == Trajectory::Orbit) {
            const double theta = 2.0 * std::numbers::pi * i / spec.cameras;
            eye = centroid + spec.radius * Eigen::Vector3d(std::cos(elevation) * std::cos(theta), -std::sin(elevation),
                                                           std::cos(elevation) * std::sin(theta));
        } else {
            const double s = -1.0 + 2.0 * i / (spec.cameras - 1.0);
            eye = centroid + Eigen::Vector3d(s, -0.3, -spec.radius);
        }
        Camera cam{K, Pose::look_at(eye, centroid)};
        SceneFrame frame;
        frame.image = frame_name(i);
        frame.intrinsics = K.matrix();
        frame.world_to_camera = cam.pose.matrix();
        m.frames.push_back(frame);

        Image rgb = reference_rasterize(cloud, cam).rgb;
        // Keep the in-memory copy identical to what a reload from PNG yields.
        for (double &v : rgb.data) v = std::lround(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
        out.scene.images.push_back(std::move(rgb));
    }

    if (!out_dir.empty()) {
        save_scene(out_dir, m, out.scene.images);
        save_cloud((fs::path(out_dir) / "gaussians.bin").string(), cloud);
        out.scene.root = out_dir;
    }
    return out;
}

}  // namespace sparseview
