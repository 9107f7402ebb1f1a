#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "sparseview/costvolume.hpp"
#include "sparseview/gaussians.hpp"
#include "sparseview/geometry.hpp"
#include "sparseview/metrics.hpp"
#include "sparseview/rasterizer.hpp"
#include "sparseview/scene_io.hpp"
#include "sparseview/viewselect.hpp"

namespace sparseview {

struct PipelineConfig {
    double near = 0.0;  // <= 0 takes the scene's range
    double far = 0.0;
    int planes = 32;
    DepthSpacing spacing = DepthSpacing::Uniform;
    std::string extractor = "block-stats";
    int feature_scale = 4;
    double descriptor_gain = 12.0;  // descriptor norm; sets the softmax temperature over planes
    int neighbors = 2;
    int feature_channels = 4;
    int sh_degree = 0;
    double isotropy = 1.0;
    std::string schedule = "cosine";
    int schedule_length = 1000;
    int sampler_steps = 20;
    double eta = 0.0;
    int window = 14;
    std::uint64_t seed = 0;
    std::string denoiser = "toy-conv";
    int inputs = 5;
    int targets = 56;
    int threads = 1;
    bool refine = true;
    bool color_match = true;
    bool check = false;

    /// Unknown keys and wrong types raise MalformedJson.
    static PipelineConfig from_json(const std::string &text);
    static PipelineConfig load(const std::string &path);
    std::string to_json() const;
};

struct PipelineResult {
    std::vector<int> input_frames;
    std::vector<Camera> target_cameras;
    std::vector<DepthMap> depths;  // per input view, image resolution
    GaussianCloud cloud;           // union over input views
    std::vector<RenderOutput> renders;
    std::vector<Image> outputs;  // refined (and matched) frames, or raw rgb renders
};

/// Full feed-forward pass: features, local groups, cost volumes, depths,
/// Gaussians, target rasterization and (optionally) diffusion refinement with
/// histogram matching. Stage failures are rethrown with a "[stage]" prefix.
PipelineResult forward_pipeline(const Scene &scene, const std::vector<int> &input_frames,
                                const std::vector<Camera> &target_cameras, const PipelineConfig &config);
PipelineResult forward_pipeline(const Scene &scene, const SelectionPlan &plan, const PipelineConfig &config);

/// `count` poses evenly spaced in path parameter along an ordered list of
/// poses: centers move linearly and rotations are slerped per segment.
std::vector<Pose> interpolate_trajectory(const std::vector<Pose> &poses, int count);

/// Inputs and targets for a scene: the evaluation split when the scene has
/// enough frames, otherwise FPS inputs plus interpolated target poses.
struct RenderTargets {
    std::vector<int> input_frames;
    std::vector<Camera> cameras;
    std::vector<int> frames;  // scene frame per target, -1 when interpolated
};
RenderTargets choose_targets(const Scene &scene, const PipelineConfig &config, int span = 300);

using PerceptualFactory = std::function<std::unique_ptr<PerceptualScorer>()>;
void register_perceptual_scorer(const std::string &name, PerceptualFactory factory);
std::unique_ptr<PerceptualScorer> make_perceptual_scorer(const std::string &name);

struct ReconstructionWeights {
    double l2 = 1.0;
    double perceptual = 0.0;
    std::string scorer;  // registry name, consulted only when perceptual != 0
};

/// l2 * MSE + perceptual * scorer(rendered, truth).
double reconstruction_loss(const Image &rendered, const Image &truth, const ReconstructionWeights &weights = {});

struct FitOptions {
    int steps = 500;
    double lr = 10.0;
    // Per-group step multipliers.
    double lr_mean = 1.0;
    double lr_opacity = 2.0;
    double lr_scale = 1.0;
    double lr_rotation = 1.0;
    double lr_sh = 2.0;
    double lr_feature = 1.0;
    double rgb_weight = 1.0;
    double feature_weight = 0.0;  // needs target features
    bool grad_stop = true;
    RasterOptions raster;
};

struct FitResult {
    GaussianCloud cloud;
    std::vector<double> loss_curve;  // steps + 1 entries, before each step and after the last
};

/// Projected gradient descent on every Gaussian parameter against the MSE to
/// `target_rgb` (and optionally `target_feat`). Throws NumericFailure when the
/// loss exceeds 10× its initial value or stops being finite.
FitResult fit_demo(const Image &target_rgb, const GaussianCloud &initial, const Camera &camera,
                   const FitOptions &options, const Image *target_feat = nullptr);

/// Random perturbation of every parameter group, scaled by `amount` (1 gives
/// mean jitter of 0.05 world units, opacity jitter 0.15, scale factors
/// around exp(±0.2) and color jitter 0.15).
GaussianCloud perturb_cloud(const GaussianCloud &cloud, std::uint64_t seed, double amount = 1.0);

/// Inline invariant checks used by `--check`.
void check_depth_map(const DepthMap &depth);
void check_render(const RenderOutput &render);

}  // namespace sparseview
