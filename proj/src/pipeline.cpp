#include "sparseview/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <sstream>

#include <json.hpp>

#include "sparseview/diffusion.hpp"
#include "sparseview/error.hpp"
#include "sparseview/features.hpp"
#include "sparseview/parallel.hpp"
#include "sparseview/postprocess.hpp"
#include "sparseview/sh.hpp"

namespace sparseview {

// ---------------------------------------------------------------------------
// Configuration

namespace {

std::string spacing_name(DepthSpacing s) { return s == DepthSpacing::Uniform ? "uniform" : "inverse"; }

DepthSpacing spacing_from_name(const std::string &name) {
    if (name == "uniform") return DepthSpacing::Uniform;
    if (name == "inverse") return DepthSpacing::InverseDepth;
    throw Error(ErrorCode::MalformedJson, "spacing must be 'uniform' or 'inverse', got '" + name + "'");
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const std::string &text) {
    PipelineConfig c;
    try {
        const auto j = nlohmann::json::parse(text);
        if (!j.is_object()) throw Error(ErrorCode::MalformedJson, "config must be a JSON object");
        for (const auto &[key, v] : j.items()) {
            if (key == "near") c.near = v.get<double>();
            else if (key == "far") c.far = v.get<double>();
            else if (key == "planes") c.planes = v.get<int>();
            else if (key == "spacing") c.spacing = spacing_from_name(v.get<std::string>());
            else if (key == "extractor") c.extractor = v.get<std::string>();
            else if (key == "feature_scale") c.feature_scale = v.get<int>();
            else if (key == "descriptor_gain") c.descriptor_gain = v.get<double>();
            else if (key == "neighbors") c.neighbors = v.get<int>();
            else if (key == "feature_channels") c.feature_channels = v.get<int>();
            else if (key == "sh_degree") c.sh_degree = v.get<int>();
            else if (key == "isotropy") c.isotropy = v.get<double>();
            else if (key == "schedule") c.schedule = v.get<std::string>();
            else if (key == "schedule_length") c.schedule_length = v.get<int>();
            else if (key == "sampler_steps") c.sampler_steps = v.get<int>();
            else if (key == "eta") c.eta = v.get<double>();
            else if (key == "window") c.window = v.get<int>();
            else if (key == "seed") c.seed = v.get<std::uint64_t>();
            else if (key == "denoiser") c.denoiser = v.get<std::string>();
            else if (key == "inputs") c.inputs = v.get<int>();
            else if (key == "targets") c.targets = v.get<int>();
            else if (key == "threads") c.threads = v.get<int>();
            else if (key == "refine") c.refine = v.get<bool>();
            else if (key == "color_match") c.color_match = v.get<bool>();
            else if (key == "check") c.check = v.get<bool>();
            else throw Error(ErrorCode::MalformedJson, "unknown config key '" + key + "'");
        }
    } catch (const nlohmann::json::exception &e) {
        throw Error(ErrorCode::MalformedJson, std::string("config: ") + e.what());
    }
    require(c.planes >= 2 && c.feature_scale >= 1 && c.neighbors >= 1 && c.window >= 1 && c.sampler_steps >= 1 &&
                c.schedule_length >= 1 && c.inputs >= 2 && c.targets >= 1 && c.feature_channels >= 1 &&
                c.sh_degree >= 0 && c.descriptor_gain > 0.0 && c.isotropy > 0.0 && c.eta >= 0.0,
            ErrorCode::InvalidArgument, "config value out of range");
    return c;
}

PipelineConfig PipelineConfig::load(const std::string &path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorCode::MissingFile, "missing config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

std::string PipelineConfig::to_json() const {
    nlohmann::json j = {
        {"near", near},
        {"far", far},
        {"planes", planes},
        {"spacing", spacing_name(spacing)},
        {"extractor", extractor},
        {"feature_scale", feature_scale},
        {"descriptor_gain", descriptor_gain},
        {"neighbors", neighbors},
        {"feature_channels", feature_channels},
        {"sh_degree", sh_degree},
        {"isotropy", isotropy},
        {"schedule", schedule},
        {"schedule_length", schedule_length},
        {"sampler_steps", sampler_steps},
        {"eta", eta},
        {"window", window},
        {"seed", seed},
        {"denoiser", denoiser},
        {"inputs", inputs},
        {"targets", targets},
        {"threads", threads},
        {"refine", refine},
        {"color_match", color_match},
        {"check", check},
    };
    return j.dump(2);
}

// ---------------------------------------------------------------------------
// Checks

void check_depth_map(const DepthMap &d) {
    require(d.depth.size() == static_cast<std::size_t>(d.width) * d.height && d.confidence.size() == d.depth.size(),
            ErrorCode::InvariantViolation, "depth map buffers do not match its size");
    for (std::size_t i = 0; i < d.depth.size(); ++i) {
        require(std::isfinite(d.depth[i]) && d.depth[i] >= d.near - 1e-9 && d.depth[i] <= d.far + 1e-9,
                ErrorCode::InvariantViolation, "depth outside [near, far]");
        require(d.confidence[i] >= 0.0 && d.confidence[i] <= 1.0, ErrorCode::InvariantViolation,
                "confidence outside [0, 1]");
    }
}

void check_render(const RenderOutput &r) {
    require(all_finite(r.rgb) && all_finite(r.feat) && all_finite(r.depth), ErrorCode::InvariantViolation,
            "render contains non-finite values");
    for (double a : r.alpha.data)
        require(a >= 0.0 && a <= 1.0, ErrorCode::InvariantViolation, "alpha outside [0, 1]");
    for (double v : r.rgb.data) require(v >= 0.0 && v <= 1.0, ErrorCode::InvariantViolation, "rgb outside [0, 1]");
    for (std::size_t i = 0; i < r.alpha.data.size(); ++i)
        if (r.alpha.data[i] > 0.0)
            require(r.depth.data[i] >= 0.0, ErrorCode::InvariantViolation, "negative depth under coverage");
}

// ---------------------------------------------------------------------------
// Forward pipeline

namespace {

template <typename Fn>
auto stage(const char *name, Fn &&fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const Error &e) {
        throw Error(e.code(), std::string("[") + name + "] " + e.what());
    }
}

// Maps the first three (color) descriptor channels through the autoencoder
// projection so rasterized features live in the toy latent space.
std::vector<double> latent_aligned_projection(int feature_channels, int descriptor_channels) {
    if (feature_channels != 4 || descriptor_channels < 3) return {};
    const auto &q = ToyAutoencoder::projection();
    std::vector<double> p(static_cast<std::size_t>(feature_channels) * descriptor_channels, 0.0);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 3; ++c) p[r * descriptor_channels + c] = q[3 * r + c];
    return p;
}

}  // namespace

PipelineResult forward_pipeline(const Scene &scene, const std::vector<int> &input_frames,
                                const std::vector<Camera> &target_cameras, const PipelineConfig &config) {
    require(input_frames.size() >= 2, ErrorCode::InvalidArgument, "the pipeline needs at least two input views");
    require(!target_cameras.empty(), ErrorCode::InvalidArgument, "the pipeline needs at least one target");
    for (int f : input_frames)
        require(f >= 0 && f < scene.frame_count(), ErrorCode::InvalidArgument, "input frame out of range");
    const double near = config.near > 0.0 ? config.near : scene.manifest.near;
    const double far = config.far > 0.0 ? config.far : scene.manifest.far;

    PipelineResult result;
    result.input_frames = input_frames;
    result.target_cameras = target_cameras;
    const int n = static_cast<int>(input_frames.size());

    std::vector<Camera> cameras;
    std::vector<Image> images;
    for (int f : input_frames) {
        cameras.push_back(scene.camera(f));
        images.push_back(scene.images[f]);
        if (config.check) {
            cameras.back().intrinsics.validate();
            cameras.back().pose.validate(1e-4);
        }
    }

    // Features and matching descriptors.
    std::vector<FeatureMap> raw(n), descriptors(n);
    stage("features", [&] {
        const auto extractor = make_extractor(config.extractor);
        parallel_for(n, config.threads, [&](std::size_t i) {
            raw[i] = extractor->extract(images[i], config.feature_scale);
            raw[i].view_index = static_cast<int>(i);
            descriptors[i] = normalize_descriptors(raw[i], config.descriptor_gain);
        });
        return 0;
    });

    // Cost volumes and depth.
    result.depths.resize(n);
    stage("costvolume", [&] {
        std::vector<Eigen::Vector3d> centers;
        for (const auto &c : cameras) centers.push_back(c.pose.center());
        const LocalGroup group = local_group(centers, config.neighbors);
        const DepthPlanes planes = depth_planes(near, far, config.planes, config.spacing);
        std::vector<Camera> grid_cameras = cameras;
        for (auto &c : grid_cameras) c.intrinsics = c.intrinsics.downscaled(config.feature_scale);
        parallel_for(n, config.threads, [&](std::size_t i) {
            const CostVolume volume = build_cost_volume(static_cast<int>(i), descriptors, group, planes, grid_cameras);
            result.depths[i] = upsample_depth(depth_from_volume(volume), images[i].width, images[i].height);
            if (config.check) check_depth_map(result.depths[i]);
        });
        return 0;
    });

    // Gaussians.
    stage("gaussians", [&] {
        HeadParams head;
        head.isotropy = config.isotropy;
        head.sh_degree = config.sh_degree;
        head.feature_channels = config.feature_channels;
        head.feature_projection = latent_aligned_projection(config.feature_channels, raw.front().channels);
        result.cloud.sh_degree = config.sh_degree;
        result.cloud.feature_channels = config.feature_channels;
        for (int i = 0; i < n; ++i)
            result.cloud.append(
                build_gaussians(result.depths[i], cameras[i], images[i], raw[i], Image(), head, input_frames[i]));
        if (config.check) result.cloud.validate();
        return 0;
    });

    // Target rendering.
    const int m = static_cast<int>(target_cameras.size());
    result.renders.resize(m);
    stage("rasterizer", [&] {
        RasterOptions opts;
        opts.threads = 1;
        parallel_for(m, config.threads, [&](std::size_t t) {
            result.renders[t] = rasterize(result.cloud, target_cameras[t], opts);
            if (config.check) check_render(result.renders[t]);
        });
        return 0;
    });

    if (!config.refine) {
        for (const auto &r : result.renders) result.outputs.push_back(r.rgb);
        return result;
    }

    // Diffusion refinement over non-overlapping windows.
    result.outputs.resize(m);
    stage("diffusion", [&] {
        const ToyAutoencoder autoencoder;
        require(config.feature_channels == autoencoder.latent_channels(), ErrorCode::InvalidArgument,
                "refinement needs feature_channels equal to the latent channel count");
        const NoiseSchedule schedule = NoiseSchedule::from_name(config.schedule, config.schedule_length);
        if (config.check) schedule.validate();
        const auto denoiser = make_denoiser(config.denoiser);
        const StatisticEmbedder embedder;
        std::vector<std::vector<double>> embeddings;
        for (const auto &img : images) embeddings.push_back(embedder.embed(img));

        SamplerOptions sampler;
        sampler.eta = config.eta;
        sampler.latent_channels = autoencoder.latent_channels();
        const auto windows = window_partition(m, config.window);
        for (std::size_t w = 0; w < windows.size(); ++w) {
            std::vector<Image> feats;
            for (int t : windows[w]) feats.push_back(result.renders[t].feat);
            const ConditionBundle cond = assemble_conditions(feats, embeddings);
            const auto decoded = sample(*denoiser, cond, schedule, config.sampler_steps, config.seed + w, autoencoder,
                                        sampler);
            for (std::size_t k = 0; k < windows[w].size(); ++k) {
                const int t = windows[w][k];
                const Image &coarse = result.renders[t].rgb;
                Image refined = resize_bilinear(decoded[k], coarse.width, coarse.height);
                for (double &v : refined.data) v = std::clamp(v, 0.0, 1.0);
                result.outputs[t] = std::move(refined);
            }
        }
        return 0;
    });

    if (config.color_match) {
        stage("postprocess", [&] {
            for (int t = 0; t < m; ++t) result.outputs[t] = histogram_match(result.outputs[t], result.renders[t].rgb);
            return 0;
        });
    }
    return result;
}

PipelineResult forward_pipeline(const Scene &scene, const SelectionPlan &plan, const PipelineConfig &config) {
    stage("plan", [&] {
        plan.validate(scene.frame_count());
        return 0;
    });
    std::vector<Camera> targets;
    for (int t : plan.target_indices) targets.push_back(scene.camera(t));
    return forward_pipeline(scene, plan.input_indices, targets, config);
}

std::vector<Pose> interpolate_trajectory(const std::vector<Pose> &poses, int count) {
    require(!poses.empty() && count >= 1, ErrorCode::InvalidArgument, "trajectory interpolation needs poses");
    std::vector<Pose> out;
    const int segments = static_cast<int>(poses.size()) - 1;
    for (int k = 0; k < count; ++k) {
        if (segments == 0) {
            out.push_back(poses.front());
            continue;
        }
        const double s = count == 1 ? 0.0 : static_cast<double>(k) * segments / (count - 1);
        const int i = std::min(segments - 1, static_cast<int>(std::floor(s)));
        const double u = s - i;
        const Eigen::Quaterniond qa(poses[i].rotation), qb(poses[i + 1].rotation);
        const Eigen::Matrix3d r = qa.slerp(u, qb).normalized().toRotationMatrix();
        const Eigen::Vector3d center = (1.0 - u) * poses[i].center() + u * poses[i + 1].center();
        Pose p;
        p.rotation = r;
        p.translation = -r * center;
        out.push_back(p);
    }
    return out;
}

RenderTargets choose_targets(const Scene &scene, const PipelineConfig &config, int span) {
    const int n = scene.frame_count();
    const auto centers = scene.camera_centers();
    RenderTargets rt;
    if (n >= config.inputs + config.targets) {
        const SelectionPlan plan = evaluation_split(centers, std::min(n, span), config.inputs, config.targets);
        rt.input_frames = plan.input_indices;
        rt.frames = plan.target_indices;
        for (int t : plan.target_indices) rt.cameras.push_back(scene.camera(t));
        return rt;
    }
    rt.input_frames = fps(centers, std::min(config.inputs, n));
    std::vector<Pose> poses;
    for (int i = 0; i < n; ++i) poses.push_back(scene.camera(i).pose);
    const Intrinsics K = scene.camera(0).intrinsics;
    for (const Pose &p : interpolate_trajectory(poses, config.targets)) {
        rt.cameras.push_back({K, p});
        rt.frames.push_back(-1);
    }
    return rt;
}

// ---------------------------------------------------------------------------
// Losses

namespace {

struct ScorerRegistry {
    std::mutex mutex;
    std::map<std::string, PerceptualFactory> factories;
};

ScorerRegistry &scorer_registry() {
    static ScorerRegistry r;
    return r;
}

double mse(const Image &a, const Image &b) {
    require(a.same_shape(b), ErrorCode::ShapeMismatch, "images differ in shape");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) acc += (a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
    return a.data.empty() ? 0.0 : acc / static_cast<double>(a.data.size());
}

}  // namespace

void register_perceptual_scorer(const std::string &name, PerceptualFactory factory) {
    auto &r = scorer_registry();
    std::lock_guard<std::mutex> lock(r.mutex);
    r.factories[name] = std::move(factory);
}

std::unique_ptr<PerceptualScorer> make_perceptual_scorer(const std::string &name) {
    auto &r = scorer_registry();
    std::lock_guard<std::mutex> lock(r.mutex);
    const auto it = r.factories.find(name);
    require(it != r.factories.end(), ErrorCode::InvalidArgument, "no perceptual scorer named '" + name + "'");
    return it->second();
}

double reconstruction_loss(const Image &rendered, const Image &truth, const ReconstructionWeights &weights) {
    double loss = weights.l2 * mse(rendered, truth);
    if (weights.perceptual != 0.0) loss += weights.perceptual * make_perceptual_scorer(weights.scorer)->score(rendered, truth);
    return loss;
}

// ---------------------------------------------------------------------------
// fit_demo

namespace {

struct FitLoss {
    double value = 0.0;
    RenderUpstream upstream;
};

FitLoss evaluate_fit(const RenderOutput &r, const Image &target_rgb, const Image *target_feat,
                     const FitOptions &o) {
    FitLoss out;
    out.upstream.rgb = Image(r.rgb.width, r.rgb.height, 3);
    const double n_rgb = static_cast<double>(r.rgb.data.size());
    for (std::size_t i = 0; i < r.rgb.data.size(); ++i) {
        const double d = r.rgb.data[i] - target_rgb.data[i];
        out.value += o.rgb_weight * d * d / n_rgb;
        out.upstream.rgb.data[i] = o.rgb_weight * 2.0 * d / n_rgb;
    }
    if (target_feat && o.feature_weight != 0.0) {
        out.upstream.feat = Image(r.feat.width, r.feat.height, r.feat.channels);
        const double n_feat = static_cast<double>(r.feat.data.size());
        for (std::size_t i = 0; i < r.feat.data.size(); ++i) {
            const double d = r.feat.data[i] - target_feat->data[i];
            out.value += o.feature_weight * d * d / n_feat;
            out.upstream.feat.data[i] = o.feature_weight * 2.0 * d / n_feat;
        }
    }
    return out;
}

}  // namespace

FitResult fit_demo(const Image &target_rgb, const GaussianCloud &initial, const Camera &camera,
                   const FitOptions &options, const Image *target_feat) {
    require(options.steps >= 1, ErrorCode::InvalidArgument, "fit_demo needs at least one step");
    require(target_rgb.width == camera.intrinsics.width && target_rgb.height == camera.intrinsics.height &&
                target_rgb.channels == 3,
            ErrorCode::ShapeMismatch, "target image must match the camera");
    if (target_feat && options.feature_weight != 0.0)
        require(target_feat->width == target_rgb.width && target_feat->height == target_rgb.height &&
                    target_feat->channels == initial.feature_channels,
                ErrorCode::ShapeMismatch, "target features must match the camera and the cloud");
    initial.validate();

    FitResult result;
    result.cloud = initial;
    GaussianCloud &cloud = result.cloud;
    double initial_loss = 0.0;
    for (int step = 0; step <= options.steps; ++step) {
        RasterContext ctx;
        const RenderOutput render = rasterize(cloud, camera, options.raster, ctx);
        const FitLoss loss = evaluate_fit(render, target_rgb, target_feat, options);
        require(std::isfinite(loss.value), ErrorCode::NumericFailure,
                "fit_demo: loss became non-finite at step " + std::to_string(step));
        if (step == 0) initial_loss = loss.value;
        result.loss_curve.push_back(loss.value);
        if (loss.value > 10.0 * initial_loss && loss.value > 0.0) {
            std::ostringstream msg;
            msg << "fit_demo diverged at step " << step << ": loss " << loss.value << " > 10 x initial " << initial_loss;
            throw Error(ErrorCode::NumericFailure, msg.str());
        }
        if (step == options.steps) break;

        const RenderGradients g = rasterize_backward(cloud, camera, ctx, loss.upstream, options.grad_stop, options.raster);
        for (std::size_t i = 0; i < cloud.size(); ++i) {
            Gaussian &p = cloud.gaussians[i];
            p.mean -= options.lr * options.lr_mean * g.mean[i];
            p.opacity = std::clamp(p.opacity - options.lr * options.lr_opacity * g.opacity[i], 0.0, 1.0);
            p.scale = (p.scale - options.lr * options.lr_scale * g.scale[i]).cwiseMax(1e-4);
            if (!g.rotation[i].isZero(0.0)) {
                p.rotation -= options.lr * options.lr_rotation * g.rotation[i];
                p.rotation.normalize();
            }
            for (std::size_t k = 0; k < p.sh.size(); ++k) p.sh[k] -= options.lr * options.lr_sh * g.sh[i][k];
            for (std::size_t k = 0; k < p.feature.size(); ++k)
                p.feature[k] -= options.lr * options.lr_feature * g.feature[i][k];
        }
    }
    return result;
}

GaussianCloud perturb_cloud(const GaussianCloud &cloud, std::uint64_t seed, double amount) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    GaussianCloud out = cloud;
    for (Gaussian &g : out.gaussians) {
        for (int k = 0; k < 3; ++k) g.mean[k] += amount * 0.05 * normal(rng);
        g.opacity = std::clamp(g.opacity + amount * 0.15 * normal(rng), 0.05, 1.0);
        for (int k = 0; k < 3; ++k) g.scale[k] *= std::exp(amount * 0.2 * normal(rng));
        for (int k = 0; k < 4; ++k) g.rotation[k] += amount * 0.1 * normal(rng);
        g.rotation.normalize();
        for (int c = 0; c < 3; ++c) g.sh[c] += amount * 0.15 / kShC0 * normal(rng);
        for (double &f : g.feature) f += amount * 0.15 * normal(rng);
    }
    return out;
}

}  // namespace sparseview
