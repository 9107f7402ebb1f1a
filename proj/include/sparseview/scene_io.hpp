#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sparseview/gaussians.hpp"
#include "sparseview/geometry.hpp"
#include "sparseview/image.hpp"

namespace sparseview {

inline constexpr const char *kManifestVersion = "v1";
inline constexpr const char *kManifestConvention = "world_to_camera;x-right;y-down;z-forward";

struct SceneFrame {
    std::string image;  // path relative to the scene directory
    Eigen::Matrix3d intrinsics = Eigen::Matrix3d::Identity();
    Eigen::Matrix4d world_to_camera = Eigen::Matrix4d::Identity();

    bool operator==(const SceneFrame &) const = default;
};

/// Contents of `cameras.json`.
struct SceneManifest {
    std::string version = kManifestVersion;
    std::string convention = kManifestConvention;
    double near = 1.0;
    double far = 100.0;
    std::string units = "arbitrary";
    std::vector<SceneFrame> frames;

    bool operator==(const SceneManifest &) const = default;
};

std::string manifest_to_json(const SceneManifest &manifest);
/// Throws MalformedJson on syntax or schema errors, InvariantViolation on bad matrices.
SceneManifest manifest_from_json(const std::string &text);

struct Scene {
    std::string root;
    SceneManifest manifest;
    std::vector<Image> images;

    int frame_count() const { return static_cast<int>(manifest.frames.size()); }
    Camera camera(int frame) const;
    std::vector<Eigen::Vector3d> camera_centers() const;
};

/// Loads `<dir>/cameras.json` and every referenced PNG. Errors: MissingFile
/// (manifest or image, naming the path), MalformedJson, InvariantViolation
/// (non-orthonormal rotation, inconsistent image sizes, bad intrinsics).
Scene load_scene(const std::string &dir);

/// Writes the manifest and the images (as PNG, at the manifest's paths).
void save_scene(const std::string &dir, const SceneManifest &manifest, const std::vector<Image> &images);

enum class Trajectory { Orbit, Line };
Trajectory trajectory_from_name(const std::string &name);

struct SyntheticSceneSpec {
    std::uint64_t seed = 0;
    int gaussians = 200;
    int cameras = 8;
    Trajectory trajectory = Trajectory::Orbit;
    int width = 64;
    int height = 64;
    double radius = 3.0;  // orbit radius or line distance from the centroid
    int sh_degree = 0;
};

struct SyntheticScene {
    Scene scene;
    GaussianCloud truth;
};

/// Random Gaussians in the unit box around the origin, cameras on the chosen
/// trajectory looking at their centroid, images from reference_rasterize.
/// When `out_dir` is non-empty the scene and `gaussians.bin` are written there.
SyntheticScene generate_synthetic_scene(const SyntheticSceneSpec &spec, const std::string &out_dir = "");

}  // namespace sparseview
