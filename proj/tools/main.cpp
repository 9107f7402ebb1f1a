// Command-line front end: gen-scene, select-views, render, evaluate,
// fit-demo and diffuse-toy.
//
// Exit codes: 0 success, 2 validation error, 3 numeric failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "sparseview/diffusion.hpp"
#include "sparseview/error.hpp"
#include "sparseview/metrics.hpp"
#include "sparseview/pipeline.hpp"
#include "sparseview/png_io.hpp"
#include "sparseview/scene_io.hpp"
#include "sparseview/viewselect.hpp"

namespace fs = std::filesystem;
using namespace sparseview;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumeric = 3;

std::string read_text(const std::string &path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorCode::MissingFile, "missing file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path &path, const std::string &text) {
    std::ofstream out(path);
    require(static_cast<bool>(out), ErrorCode::MissingFile, "cannot write " + path.string());
    out << text;
}

std::string numbered(const char *stem, int i, const char *ext) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s_%04d.%s", stem, i, ext);
    return buf;
}

struct PipelineFlags {
    std::string scene, plan, config, out;
    bool no_refine = false, no_color_match = false, check = false;
    int threads = -1;
    long long seed = -1;

    void attach(CLI::App *cmd, bool need_out) {
        cmd->add_option("--scene", scene, "Scene directory containing cameras.json")->required();
        cmd->add_option("--plan", plan, "SelectionPlan JSON");
        cmd->add_option("--config", config, "Pipeline config JSON");
        auto *o = cmd->add_option("--out", out, "Output directory");
        if (need_out) o->required();
        cmd->add_flag("--no-refine", no_refine, "Skip diffusion refinement");
        cmd->add_flag("--no-color-match", no_color_match, "Skip histogram matching");
        cmd->add_flag("--check", check, "Assert module invariants inline");
        cmd->add_option("--threads", threads, "Worker threads (0 = all cores)");
        cmd->add_option("--seed", seed, "Sampler seed");
    }

    PipelineConfig make_config() const {
        PipelineConfig c = config.empty() ? PipelineConfig{} : PipelineConfig::load(config);
        if (no_refine) c.refine = false;
        if (no_color_match) c.color_match = false;
        if (check) c.check = true;
        if (threads >= 0) c.threads = threads;
        if (seed >= 0) c.seed = static_cast<std::uint64_t>(seed);
        return c;
    }
};

// Inputs, target cameras and target frame ids from --plan or the default split.
RenderTargets resolve_targets(const Scene &scene, const PipelineFlags &flags, const PipelineConfig &config) {
    if (flags.plan.empty()) return choose_targets(scene, config);
    const SelectionPlan plan = plan_from_json(read_text(flags.plan));
    plan.validate(scene.frame_count());
    RenderTargets rt;
    rt.input_frames = plan.input_indices;
    rt.frames = plan.target_indices;
    for (int t : plan.target_indices) rt.cameras.push_back(scene.camera(t));
    return rt;
}

int cmd_gen_scene(const std::string &out, const SyntheticSceneSpec &spec) {
    const SyntheticScene s = generate_synthetic_scene(spec, out);
    std::cout << "wrote " << s.scene.frame_count() << " frames and " << s.truth.size() << " Gaussians to " << out
              << '\n';
    return 0;
}

int cmd_select_views(const std::string &scene_dir, int span, int inputs, int targets, const std::string &out) {
    const Scene scene = load_scene(scene_dir);
    const int n = scene.frame_count();
    const SelectionPlan plan = evaluation_split(scene.camera_centers(), span > 0 ? std::min(span, n) : n, inputs, targets);
    plan.validate(n);
    const std::string text = plan_to_json(plan) + "\n";
    if (out.empty()) std::cout << text;
    else write_text(out, text);
    return 0;
}

int cmd_render(const PipelineFlags &flags) {
    const Scene scene = load_scene(flags.scene);
    const PipelineConfig config = flags.make_config();
    const RenderTargets rt = resolve_targets(scene, flags, config);
    const PipelineResult result = forward_pipeline(scene, rt.input_frames, rt.cameras, config);

    fs::create_directories(flags.out);
    nlohmann::json summary;
    summary["inputs"] = rt.input_frames;
    summary["target_frames"] = rt.frames;
    summary["config"] = nlohmann::json::parse(config.to_json());
    summary["gaussians"] = result.cloud.size();
    summary["frames"] = nlohmann::json::array();
    for (std::size_t t = 0; t < result.renders.size(); ++t) {
        const int i = static_cast<int>(t);
        const RenderOutput &r = result.renders[t];
        write_png((fs::path(flags.out) / numbered("frame", i, "png")).string(), result.outputs[t]);
        write_png((fs::path(flags.out) / numbered("coarse", i, "png")).string(), r.rgb);
        write_float_planar((fs::path(flags.out) / numbered("alpha", i, "f32")).string(), r.alpha);
        write_float_planar((fs::path(flags.out) / numbered("depth", i, "f32")).string(), r.depth);
        write_float_planar((fs::path(flags.out) / numbered("feat", i, "f32")).string(), r.feat);
        const auto [amin, amax] = std::minmax_element(r.alpha.data.begin(), r.alpha.data.end());
        summary["frames"].push_back({{"index", i},
                                     {"width", r.rgb.width},
                                     {"height", r.rgb.height},
                                     {"alpha_min", *amin},
                                     {"alpha_max", *amax},
                                     {"culled", r.diagnostics.culled},
                                     {"singular", r.diagnostics.singular}});
    }
    write_text(fs::path(flags.out) / "render.json", summary.dump(2) + "\n");
    std::cout << "rendered " << result.renders.size() << " frames to " << flags.out << '\n';
    return 0;
}

int cmd_evaluate(const PipelineFlags &flags) {
    const Scene scene = load_scene(flags.scene);
    PipelineConfig config = flags.make_config();
    RenderTargets rt = resolve_targets(scene, flags, config);
    // Score only real frames; a small scene falls back to every non-input frame.
    RenderTargets scored;
    scored.input_frames = rt.input_frames;
    for (std::size_t i = 0; i < rt.frames.size(); ++i)
        if (rt.frames[i] >= 0) {
            scored.frames.push_back(rt.frames[i]);
            scored.cameras.push_back(rt.cameras[i]);
        }
    if (scored.frames.empty()) {
        for (int f = 0; f < scene.frame_count(); ++f)
            if (std::find(rt.input_frames.begin(), rt.input_frames.end(), f) == rt.input_frames.end()) {
                scored.frames.push_back(f);
                scored.cameras.push_back(scene.camera(f));
            }
    }
    require(!scored.frames.empty(), ErrorCode::InvalidArgument, "scene has no held-out frames to evaluate");
    const PipelineResult result = forward_pipeline(scene, scored.input_frames, scored.cameras, config);

    MetricsReport report;
    for (std::size_t i = 0; i < scored.frames.size(); ++i)
        report.add(scored.frames[i], result.outputs[i], scene.images[scored.frames[i]]);
    if (!flags.out.empty()) {
        fs::create_directories(flags.out);
        write_text(fs::path(flags.out) / "metrics.json", report.to_json() + "\n");
        write_text(fs::path(flags.out) / "metrics.csv", report.to_csv());
    }
    std::cout << "frames " << report.frames.size() << "  mean PSNR " << report.mean_psnr << " dB  mean SSIM "
              << report.mean_ssim << '\n';
    return 0;
}

struct FitFlags {
    std::string scene, out;
    std::uint64_t seed = 0;
    int gaussians = 100;
    int steps = 500;
    double lr = FitOptions{}.lr;
    double perturb = 1.0;
    int view = 0;
};

int cmd_fit_demo(const FitFlags &f) {
    GaussianCloud truth;
    Camera camera;
    if (!f.scene.empty()) {
        const Scene scene = load_scene(f.scene);
        truth = load_cloud((fs::path(f.scene) / "gaussians.bin").string());
        camera = scene.camera(f.view);
    } else {
        SyntheticSceneSpec spec;
        spec.seed = f.seed;
        spec.gaussians = f.gaussians;
        spec.cameras = 2;
        const SyntheticScene s = generate_synthetic_scene(spec);
        truth = s.truth;
        camera = s.scene.camera(f.view);
    }
    const Image target = reference_rasterize(truth, camera).rgb;
    FitOptions options;
    options.steps = f.steps;
    options.lr = f.lr;
    const FitResult r = fit_demo(target, perturb_cloud(truth, f.seed + 1, f.perturb), camera, options);
    std::cout << "loss " << r.loss_curve.front() << " -> " << r.loss_curve.back() << " ("
              << 100.0 * r.loss_curve.back() / r.loss_curve.front() << "% of initial)\n";
    if (!f.out.empty()) {
        fs::create_directories(f.out);
        std::ostringstream csv;
        csv.precision(10);
        csv << "step,loss\n";
        for (std::size_t i = 0; i < r.loss_curve.size(); ++i) csv << i << ',' << r.loss_curve[i] << '\n';
        write_text(fs::path(f.out) / "loss_curve.csv", csv.str());
        save_cloud((fs::path(f.out) / "fitted.bin").string(), r.cloud);
        write_png((fs::path(f.out) / "target.png").string(), target);
        write_png((fs::path(f.out) / "fitted.png").string(), rasterize(r.cloud, camera).rgb);
    }
    return 0;
}

struct DiffuseFlags {
    std::string scene, out, config, denoiser;
    int steps = -1;
    long long seed = -1;
};

// Conditions the sampler on the encoded scene frames and reports the
// denoising loss at a few timesteps.
int cmd_diffuse_toy(const DiffuseFlags &f) {
    const Scene scene = load_scene(f.scene);
    PipelineConfig config = f.config.empty() ? PipelineConfig{} : PipelineConfig::load(f.config);
    if (!f.denoiser.empty()) config.denoiser = f.denoiser;
    if (f.steps > 0) config.sampler_steps = f.steps;
    if (f.seed >= 0) config.seed = static_cast<std::uint64_t>(f.seed);

    const ToyAutoencoder ae;
    const StatisticEmbedder embedder;
    const NoiseSchedule schedule = NoiseSchedule::from_name(config.schedule, config.schedule_length);
    const auto denoiser = make_denoiser(config.denoiser);
    const int frames = std::min(scene.frame_count(), config.window);

    std::vector<FeatureMap> clean;
    std::vector<Image> feats;
    std::vector<std::vector<double>> embeddings;
    for (int i = 0; i < frames; ++i) {
        const Image &img = scene.images[i];
        const FeatureMap z = ae.encode(resize_bilinear(img, 2 * img.width, 2 * img.height));
        clean.push_back(z);
        feats.push_back(resize_bilinear(to_image(z), img.width, img.height));
        embeddings.push_back(embedder.embed(img));
    }
    const ConditionBundle cond = assemble_conditions(feats, embeddings);
    const Tensor z0 = Tensor::stack(clean);
    const Tensor eps = Tensor::gaussian(z0.m, z0.c, z0.h, z0.w, config.seed);

    nlohmann::json summary;
    summary["denoiser"] = denoiser->name();
    summary["frames"] = frames;
    for (int t : {1, schedule.steps() / 4, schedule.steps() / 2, schedule.steps()})
        summary["loss"][std::to_string(t)] = diffusion_loss(*denoiser, z0, std::max(1, t), eps, cond, schedule);

    SamplerOptions sampler;
    sampler.eta = config.eta;
    const auto images = sample(*denoiser, cond, schedule, config.sampler_steps, config.seed, ae, sampler);
    double mean_psnr = 0.0;
    for (int i = 0; i < frames; ++i)
        mean_psnr += psnr(resize_bilinear(images[i], scene.images[i].width, scene.images[i].height), scene.images[i]) / frames;
    summary["mean_psnr_vs_frames"] = mean_psnr;
    if (!f.out.empty()) {
        fs::create_directories(f.out);
        for (int i = 0; i < frames; ++i) write_png((fs::path(f.out) / numbered("sample", i, "png")).string(), images[i]);
        write_text(fs::path(f.out) / "diffusion.json", summary.dump(2) + "\n");
    }
    std::cout << summary.dump(2) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"Sparse-view Gaussian reconstruction and refinement toolkit"};
    app.require_subcommand(1);

    // gen-scene
    std::string gen_out, trajectory = "orbit";
    SyntheticSceneSpec spec;
    auto *gen = app.add_subcommand("gen-scene", "Generate a synthetic scene with ground-truth Gaussians");
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--seed", spec.seed, "Random seed");
    gen->add_option("--gaussians", spec.gaussians, "Number of Gaussians");
    gen->add_option("--cameras", spec.cameras, "Number of cameras");
    gen->add_option("--trajectory", trajectory, "orbit or line");
    gen->add_option("--width", spec.width, "Image width");
    gen->add_option("--height", spec.height, "Image height");
    gen->add_option("--sh-degree", spec.sh_degree, "SH degree of the generated Gaussians");

    // select-views
    std::string sel_scene, sel_out;
    int span = 300, inputs = 5, targets = 56;
    auto *sel = app.add_subcommand("select-views", "Emit the evaluation SelectionPlan as JSON");
    sel->add_option("--scene", sel_scene, "Scene directory")->required();
    sel->add_option("--span", span, "Restrict to the first N frames");
    sel->add_option("--inputs", inputs, "Input views");
    sel->add_option("--targets", targets, "Target views");
    sel->add_option("--out", sel_out, "Output file (stdout if omitted)");

    PipelineFlags render_flags, eval_flags;
    auto *render = app.add_subcommand("render", "Run the full pipeline and write target frames");
    render_flags.attach(render, true);
    auto *evaluate = app.add_subcommand("evaluate", "Run the pipeline and score held-out frames");
    eval_flags.attach(evaluate, false);

    FitFlags fit_flags;
    auto *fit = app.add_subcommand("fit-demo", "Gradient-descent self-reconstruction of a perturbed cloud");
    fit->add_option("--scene", fit_flags.scene, "Generated scene directory (uses gaussians.bin)");
    fit->add_option("--seed", fit_flags.seed, "Seed for the synthetic scene and perturbation");
    fit->add_option("--gaussians", fit_flags.gaussians, "Splat count when no scene is given");
    fit->add_option("--steps", fit_flags.steps, "Descent steps");
    fit->add_option("--lr", fit_flags.lr, "Base learning rate");
    fit->add_option("--perturb", fit_flags.perturb, "Perturbation strength");
    fit->add_option("--view", fit_flags.view, "Camera index");
    fit->add_option("--out", fit_flags.out, "Output directory");

    DiffuseFlags diffuse_flags;
    auto *diffuse = app.add_subcommand("diffuse-toy", "Sample the toy diffusion refiner on encoded scene frames");
    diffuse->add_option("--scene", diffuse_flags.scene, "Scene directory")->required();
    diffuse->add_option("--config", diffuse_flags.config, "Pipeline config JSON");
    diffuse->add_option("--denoiser", diffuse_flags.denoiser, "Registered denoiser name");
    diffuse->add_option("--steps", diffuse_flags.steps, "Sampler steps");
    diffuse->add_option("--seed", diffuse_flags.seed, "Sampler seed");
    diffuse->add_option("--out", diffuse_flags.out, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitValidation;
    }

    try {
        if (*gen) {
            spec.trajectory = trajectory_from_name(trajectory);
            return cmd_gen_scene(gen_out, spec);
        }
        if (*sel) return cmd_select_views(sel_scene, span, inputs, targets, sel_out);
        if (*render) return cmd_render(render_flags);
        if (*evaluate) return cmd_evaluate(eval_flags);
        if (*fit) return cmd_fit_demo(fit_flags);
        if (*diffuse) return cmd_diffuse_toy(diffuse_flags);
    } catch (const Error &e) {
        std::cerr << "error (" << to_string(e.code()) << "): " << e.what() << '\n';
        return e.code() == ErrorCode::NumericFailure ? kExitNumeric : kExitValidation;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    }
    return 0;
}
