#include "sparseview/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <random>

#include "sparseview/error.hpp"

namespace sparseview {

FeatureMap Tensor::frame(int mi) const {
    require(mi >= 0 && mi < m, ErrorCode::InvalidArgument, "frame index out of range");
    FeatureMap f(c, h, w);
    std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(mi * frame_size()), frame_size(), f.data.begin());
    return f;
}

Tensor Tensor::stack(const std::vector<FeatureMap> &frames) {
    require(!frames.empty(), ErrorCode::InvalidArgument, "cannot stack zero frames");
    const FeatureMap &first = frames.front();
    Tensor t(static_cast<int>(frames.size()), first.channels, first.height, first.width);
    for (std::size_t i = 0; i < frames.size(); ++i) {
        require(frames[i].same_shape(first), ErrorCode::ShapeMismatch, "frames differ in shape");
        std::copy(frames[i].data.begin(), frames[i].data.end(), t.data.begin() + i * t.frame_size());
    }
    return t;
}

Tensor Tensor::gaussian(int m, int c, int h, int w, std::uint64_t seed) {
    Tensor t(m, c, h, w);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (double &v : t.data) v = normal(rng);
    return t;
}

FeatureMap to_feature_map(const Image &img) {
    FeatureMap f(img.channels, img.height, img.width);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) f.at(c, y, x) = img.at(x, y, c);
    return f;
}

Image to_image(const FeatureMap &map) {
    Image img(map.width, map.height, map.channels);
    for (int y = 0; y < map.height; ++y)
        for (int x = 0; x < map.width; ++x)
            for (int c = 0; c < map.channels; ++c) img.at(x, y, c) = map.at(c, y, x);
    return img;
}

// ---------------------------------------------------------------------------
// Schedules

double NoiseSchedule::alpha(int t) const {
    require(t >= 0 && t <= steps(), ErrorCode::InvalidArgument, "timestep out of range");
    return std::sqrt(alpha_bar[t]);
}

double NoiseSchedule::sigma(int t) const {
    require(t >= 0 && t <= steps(), ErrorCode::InvalidArgument, "timestep out of range");
    return std::sqrt(1.0 - alpha_bar[t]);
}

void NoiseSchedule::validate() const {
    require(alpha_bar.size() >= 2, ErrorCode::InvariantViolation, "schedule needs at least one step");
    for (std::size_t t = 0; t < alpha_bar.size(); ++t) {
        require(alpha_bar[t] > 0.0 && alpha_bar[t] <= 1.0, ErrorCode::InvariantViolation,
                "alpha_bar must lie in (0, 1]");
        if (t > 0)
            require(alpha_bar[t] <= alpha_bar[t - 1], ErrorCode::InvariantViolation,
                    "alpha_bar must be non-increasing");
    }
}

NoiseSchedule NoiseSchedule::cosine(int T, double offset) {
    require(T >= 1, ErrorCode::InvalidArgument, "schedule length must be positive");
    auto f = [&](double t) {
        const double c = std::cos((t / T + offset) / (1.0 + offset) * std::numbers::pi / 2.0);
        return c * c;
    };
    NoiseSchedule s;
    s.alpha_bar.resize(T + 1);
    s.alpha_bar[0] = 1.0;
    const double f0 = f(0.0);
    for (int t = 1; t <= T; ++t) {
        const double beta = std::min(1.0 - (f(t) / f0) / (f(t - 1.0) / f0), 0.999);
        s.alpha_bar[t] = s.alpha_bar[t - 1] * (1.0 - beta);
    }
    return s;
}

NoiseSchedule NoiseSchedule::linear(int T, double beta_start, double beta_end) {
    require(T >= 1, ErrorCode::InvalidArgument, "schedule length must be positive");
    NoiseSchedule s;
    s.alpha_bar.resize(T + 1);
    s.alpha_bar[0] = 1.0;
    for (int t = 1; t <= T; ++t) {
        const double beta = T == 1 ? beta_start : beta_start + (beta_end - beta_start) * (t - 1) / (T - 1.0);
        s.alpha_bar[t] = s.alpha_bar[t - 1] * (1.0 - beta);
    }
    return s;
}

NoiseSchedule NoiseSchedule::from_name(const std::string &name, int T) {
    if (name == "cosine") return cosine(T);
    if (name == "linear") return linear(T);
    throw Error(ErrorCode::InvalidArgument, "unknown noise schedule: " + name);
}

// ---------------------------------------------------------------------------
// Forward process and v-parameterisation

namespace {

void require_same(const Tensor &a, const Tensor &b, const char *what) {
    require(a.same_shape(b), ErrorCode::ShapeMismatch, std::string(what) + ": tensor shapes differ");
}

Tensor axpby(double a, const Tensor &x, double b, const Tensor &y) {
    Tensor out(x.m, x.c, x.h, x.w);
    for (std::size_t i = 0; i < x.data.size(); ++i) out.data[i] = a * x.data[i] + b * y.data[i];
    return out;
}

}  // namespace

Tensor add_noise(const Tensor &z0, int t, const Tensor &eps, const NoiseSchedule &schedule) {
    require_same(z0, eps, "add_noise");
    require(t >= 1 && t <= schedule.steps(), ErrorCode::InvalidArgument, "timestep must lie in [1, T]");
    return axpby(std::sqrt(schedule.alpha_bar[t]), z0, std::sqrt(1.0 - schedule.alpha_bar[t]), eps);
}

Tensor v_target(const Tensor &z0, const Tensor &eps, const NoiseSchedule &schedule, int t) {
    require_same(z0, eps, "v_target");
    return axpby(schedule.alpha(t), eps, -schedule.sigma(t), z0);
}

Tensor v_to_z0(const Tensor &z_t, const Tensor &v, const NoiseSchedule &schedule, int t) {
    require_same(z_t, v, "v_to_z0");
    return axpby(schedule.alpha(t), z_t, -schedule.sigma(t), v);
}

// ---------------------------------------------------------------------------
// Denoisers

namespace {

Tensor blur3(const Tensor &in) {
    static constexpr double k[3] = {0.25, 0.5, 0.25};
    Tensor tmp(in.m, in.c, in.h, in.w), out(in.m, in.c, in.h, in.w);
    for (int mi = 0; mi < in.m; ++mi)
        for (int ci = 0; ci < in.c; ++ci)
            for (int y = 0; y < in.h; ++y)
                for (int x = 0; x < in.w; ++x) {
                    double acc = 0.0;
                    for (int d = -1; d <= 1; ++d) acc += k[d + 1] * in.at(mi, ci, y, std::clamp(x + d, 0, in.w - 1));
                    tmp.at(mi, ci, y, x) = acc;
                }
    for (int mi = 0; mi < in.m; ++mi)
        for (int ci = 0; ci < in.c; ++ci)
            for (int y = 0; y < in.h; ++y)
                for (int x = 0; x < in.w; ++x) {
                    double acc = 0.0;
                    for (int d = -1; d <= 1; ++d) acc += k[d + 1] * tmp.at(mi, ci, std::clamp(y + d, 0, in.h - 1), x);
                    out.at(mi, ci, y, x) = acc;
                }
    return out;
}

Tensor velocity_toward(const Tensor &z_t, const Tensor &z0_hat, int t, const NoiseSchedule &schedule) {
    const double a = schedule.alpha(t), s = schedule.sigma(t);
    require(s > 0.0, ErrorCode::NumericFailure, "velocity is undefined at a noiseless timestep");
    return axpby(a / s, z_t, -1.0 / s, z0_hat);
}

}  // namespace

std::array<Tensor, 4> ToyConvDenoiser::basis(const Tensor &z_t, const ConditionBundle &cond) const {
    require(cond.spatial.same_shape(z_t), ErrorCode::ShapeMismatch,
            "spatial condition must match the latent batch");
    double global_mean = 0.0;
    for (double v : cond.global) global_mean += v;
    if (!cond.global.empty()) global_mean /= static_cast<double>(cond.global.size());
    return {cond.spatial, blur3(cond.spatial), z_t, Tensor(z_t.m, z_t.c, z_t.h, z_t.w, global_mean)};
}

Tensor ToyConvDenoiser::predict_v(const Tensor &z_t, int t, const ConditionBundle &cond,
                                  const NoiseSchedule &schedule) const {
    const auto b = basis(z_t, cond);
    Tensor z0_hat(z_t.m, z_t.c, z_t.h, z_t.w);
    for (int k = 0; k < 4; ++k)
        for (std::size_t i = 0; i < z0_hat.data.size(); ++i) z0_hat.data[i] += gains_[k] * b[k].data[i];
    return velocity_toward(z_t, z0_hat, t, schedule);
}

Tensor OracleDenoiser::predict_v(const Tensor &z_t, int t, const ConditionBundle &,
                                 const NoiseSchedule &schedule) const {
    require_same(z_t, target_, "oracle denoiser");
    return velocity_toward(z_t, target_, t, schedule);
}

Tensor ConditionOracleDenoiser::predict_v(const Tensor &z_t, int t, const ConditionBundle &cond,
                                          const NoiseSchedule &schedule) const {
    require_same(z_t, cond.spatial, "condition oracle");
    return velocity_toward(z_t, cond.spatial, t, schedule);
}

namespace {

struct DenoiserRegistry {
    std::mutex mutex;
    std::map<std::string, DenoiserFactory> factories{
        {"toy-conv", [] { return std::make_unique<ToyConvDenoiser>(); }},
        {"condition-oracle", [] { return std::make_unique<ConditionOracleDenoiser>(); }},
        {"zero", [] { return std::make_unique<ZeroDenoiser>(); }},
    };
};

DenoiserRegistry &denoiser_registry() {
    static DenoiserRegistry r;
    return r;
}

}  // namespace

void register_denoiser(const std::string &name, DenoiserFactory factory) {
    auto &r = denoiser_registry();
    std::lock_guard<std::mutex> lock(r.mutex);
    r.factories[name] = std::move(factory);
}

std::unique_ptr<Denoiser> make_denoiser(const std::string &name) {
    auto &r = denoiser_registry();
    std::lock_guard<std::mutex> lock(r.mutex);
    auto it = r.factories.find(name);
    require(it != r.factories.end(), ErrorCode::InvalidArgument, "unknown denoiser: " + name);
    return it->second();
}

// ---------------------------------------------------------------------------
// Toy autoencoder and embedder

const std::array<double, 12> &ToyAutoencoder::projection() {
    // First three columns of the normalised 4×4 Hadamard matrix.
    static const std::array<double, 12> q = {0.5, 0.5, 0.5,  0.5, -0.5, 0.5,
                                             0.5, 0.5, -0.5, 0.5, -0.5, -0.5};
    return q;
}

FeatureMap ToyAutoencoder::encode(const Image &image) const {
    require(image.channels == 3, ErrorCode::ShapeMismatch, "encoder expects RGB input");
    require(image.width % 8 == 0 && image.height % 8 == 0 && image.width > 0 && image.height > 0,
            ErrorCode::ShapeMismatch, "encoder input must be a positive multiple of 8 pixels");
    const auto &q = projection();
    FeatureMap z(4, image.height / 8, image.width / 8);
    for (int by = 0; by < z.height; ++by) {
        for (int bx = 0; bx < z.width; ++bx) {
            double mean[3] = {0, 0, 0};
            for (int y = 0; y < 8; ++y)
                for (int x = 0; x < 8; ++x)
                    for (int c = 0; c < 3; ++c) mean[c] += image.at(bx * 8 + x, by * 8 + y, c);
            for (double &m : mean) m /= 64.0;
            for (int r = 0; r < 4; ++r) z.at(r, by, bx) = q[3 * r] * mean[0] + q[3 * r + 1] * mean[1] + q[3 * r + 2] * mean[2];
        }
    }
    return z;
}

Image ToyAutoencoder::decode(const FeatureMap &latent) const {
    require(latent.channels == 4, ErrorCode::ShapeMismatch, "decoder expects 4 latent channels");
    const auto &q = projection();
    Image out(latent.width * 8, latent.height * 8, 3);
    for (int by = 0; by < latent.height; ++by) {
        for (int bx = 0; bx < latent.width; ++bx) {
            double rgb[3] = {0, 0, 0};
            for (int r = 0; r < 4; ++r)
                for (int c = 0; c < 3; ++c) rgb[c] += q[3 * r + c] * latent.at(r, by, bx);
            for (int y = 0; y < 8; ++y)
                for (int x = 0; x < 8; ++x)
                    for (int c = 0; c < 3; ++c) out.at(bx * 8 + x, by * 8 + y, c) = rgb[c];
        }
    }
    return out;
}

std::vector<double> StatisticEmbedder::embed(const Image &image) const {
    require(image.channels == 3 && image.pixel_count() > 0, ErrorCode::ShapeMismatch,
            "embedder expects a non-empty RGB image");
    std::vector<double> out(3 + 16, 0.0);
    const double n = static_cast<double>(image.pixel_count());
    for (std::size_t p = 0; p < image.pixel_count(); ++p) {
        const double *rgb = &image.data[3 * p];
        for (int c = 0; c < 3; ++c) out[c] += rgb[c] / n;
        const double luma = 0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2];
        const int bin = std::clamp(static_cast<int>(std::floor(luma * 16.0)), 0, 15);
        out[3 + bin] += 1.0 / n;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Losses, conditions, sampling

double diffusion_loss(const Denoiser &denoiser, const Tensor &z0, int t, const Tensor &eps,
                      const ConditionBundle &cond, const NoiseSchedule &schedule) {
    const Tensor z_t = add_noise(z0, t, eps, schedule);
    const Tensor v = denoiser.predict_v(z_t, t, cond, schedule);
    require(v.same_shape(z_t), ErrorCode::ShapeMismatch, "denoiser output shape mismatch");
    const Tensor z0_hat = v_to_z0(z_t, v, schedule, t);
    double acc = 0.0;
    for (std::size_t i = 0; i < z0.data.size(); ++i) acc += (z0.data[i] - z0_hat.data[i]) * (z0.data[i] - z0_hat.data[i]);
    return acc / static_cast<double>(z0.data.size());
}

std::array<double, 4> diffusion_loss_gain_gradient(const ToyConvDenoiser &denoiser, const Tensor &z0, int t,
                                                   const Tensor &eps, const ConditionBundle &cond,
                                                   const NoiseSchedule &schedule) {
    const Tensor z_t = add_noise(z0, t, eps, schedule);
    const Tensor z0_hat = v_to_z0(z_t, denoiser.predict_v(z_t, t, cond, schedule), schedule, t);
    const auto b = denoiser.basis(z_t, cond);
    // z0_hat = sum_k g_k B_k, so dL/dg_k = -2 mean((z0 - z0_hat) B_k).
    std::array<double, 4> grad{};
    const double n = static_cast<double>(z0.data.size());
    for (int k = 0; k < 4; ++k) {
        double acc = 0.0;
        for (std::size_t i = 0; i < z0.data.size(); ++i) acc += (z0.data[i] - z0_hat.data[i]) * b[k].data[i];
        grad[k] = -2.0 * acc / n;
    }
    return grad;
}

ConditionBundle assemble_conditions(const std::vector<Image> &rendered_features,
                                    const std::vector<std::vector<double>> &view_embeddings) {
    require(!rendered_features.empty(), ErrorCode::InvalidArgument, "need at least one rendered feature map");
    require(!view_embeddings.empty(), ErrorCode::InvalidArgument, "need at least one view embedding");
    const Image &first = rendered_features.front();
    require(first.width % 4 == 0 && first.height % 4 == 0, ErrorCode::ShapeMismatch,
            "rendered feature size must be divisible by 4");
    std::vector<FeatureMap> frames;
    for (const Image &f : rendered_features) {
        require(f.same_shape(first), ErrorCode::ShapeMismatch, "rendered feature maps differ in shape");
        frames.push_back(to_feature_map(resize_bilinear(f, f.width / 4, f.height / 4)));
    }
    ConditionBundle cond;
    cond.spatial = Tensor::stack(frames);
    cond.global.assign(view_embeddings.front().size(), 0.0);
    for (const auto &e : view_embeddings) {
        require(e.size() == cond.global.size(), ErrorCode::ShapeMismatch, "view embeddings differ in length");
        for (std::size_t i = 0; i < e.size(); ++i) cond.global[i] += e[i];
    }
    for (double &g : cond.global) g /= static_cast<double>(view_embeddings.size());
    return cond;
}

Tensor sample_latents(const Denoiser &denoiser, const ConditionBundle &cond, const NoiseSchedule &schedule,
                      int steps, std::uint64_t seed, const SamplerOptions &options) {
    const int T = schedule.steps();
    require(steps >= 1 && steps <= T, ErrorCode::InvalidArgument, "sampler steps must lie in [1, T]");
    require(options.eta >= 0.0, ErrorCode::InvalidArgument, "eta must be non-negative");
    const Tensor &shape = cond.spatial;
    require(shape.m >= 1, ErrorCode::InvalidArgument, "condition bundle has no frames");

    Tensor z = Tensor::gaussian(shape.m, options.latent_channels, shape.h, shape.w, seed);
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> normal(0.0, 1.0);

    std::vector<int> ts(steps);
    for (int i = 0; i < steps; ++i) ts[i] = static_cast<int>(std::lround(static_cast<double>(T) * (steps - i) / steps));

    for (int i = 0; i < steps; ++i) {
        const int t = ts[i];
        const int t_next = i + 1 < steps ? ts[i + 1] : 0;
        const Tensor v = denoiser.predict_v(z, t, cond, schedule);
        require(v.same_shape(z), ErrorCode::ShapeMismatch, "denoiser output shape mismatch");
        const double a = schedule.alpha(t), s = schedule.sigma(t);
        const Tensor z0_hat = axpby(a, z, -s, v);
        if (t_next == 0) {
            z = z0_hat;
            break;
        }
        const Tensor eps_hat = axpby(s, z, a, v);
        const double ab = schedule.alpha_bar[t], ab_next = schedule.alpha_bar[t_next];
        const double sigma_eta =
            options.eta * std::sqrt((1.0 - ab_next) / (1.0 - ab)) * std::sqrt(std::max(0.0, 1.0 - ab / ab_next));
        const double keep = std::sqrt(std::max(0.0, 1.0 - ab_next - sigma_eta * sigma_eta));
        z = axpby(std::sqrt(ab_next), z0_hat, keep, eps_hat);
        if (sigma_eta > 0.0)
            for (double &val : z.data) val += sigma_eta * normal(rng);
        for (double val : z.data)
            require(std::isfinite(val), ErrorCode::NumericFailure, "sampler produced non-finite latents");
    }
    return z;
}

std::vector<Image> sample(const Denoiser &denoiser, const ConditionBundle &cond, const NoiseSchedule &schedule,
                          int steps, std::uint64_t seed, const LatentDecoder &decoder, const SamplerOptions &options) {
    const Tensor z = sample_latents(denoiser, cond, schedule, steps, seed, options);
    std::vector<Image> images;
    for (int mi = 0; mi < z.m; ++mi) {
        Image img = decoder.decode(z.frame(mi));
        for (double &v : img.data) v = std::clamp(v, 0.0, 1.0);
        images.push_back(std::move(img));
    }
    return images;
}

int latent_extent(int image_extent, int downsample) {
    require(image_extent > 0 && (2 * image_extent) % downsample == 0, ErrorCode::ShapeMismatch,
            "2× upscaled image must be divisible by the encoder downsample");
    return 2 * image_extent / downsample;
}

AlignmentResult alignment_loss(const LatentEncoder &encoder, const std::vector<Image> &targets,
                               const std::vector<Image> &rendered_features) {
    require(!targets.empty() && targets.size() == rendered_features.size(), ErrorCode::ShapeMismatch,
            "alignment needs one rendered feature map per target");
    AlignmentResult result;
    std::vector<Image> diffs;
    std::size_t count = 0;
    double acc = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const Image &target = targets[i];
        const Image &rendered = rendered_features[i];
        const Image latent =
            to_image(encoder.encode(resize_bilinear(target, 2 * target.width, 2 * target.height)));
        Image on_grid;
        if (rendered.width == latent.width && rendered.height == latent.height) {
            on_grid = rendered;
        } else {
            require(rendered.width == target.width && rendered.height == target.height, ErrorCode::ShapeMismatch,
                    "rendered features match neither the latent grid nor the target image");
            on_grid = resize_bilinear(rendered, latent.width, latent.height);
        }
        require(on_grid.channels == latent.channels, ErrorCode::ShapeMismatch,
                "rendered feature channels differ from the latent channels");
        Image diff(latent.width, latent.height, latent.channels);
        for (std::size_t k = 0; k < diff.data.size(); ++k) {
            diff.data[k] = on_grid.data[k] - latent.data[k];
            acc += diff.data[k] * diff.data[k];
        }
        count += diff.data.size();
        diffs.push_back(std::move(diff));
    }
    result.loss = acc / static_cast<double>(count);
    for (std::size_t i = 0; i < diffs.size(); ++i) {
        Image g = diffs[i];
        for (double &v : g.data) v *= 2.0 / static_cast<double>(count);
        result.grad_rendered.push_back(
            resize_bilinear_adjoint(g, rendered_features[i].width, rendered_features[i].height));
    }
    return result;
}

std::vector<std::vector<int>> window_partition(int frame_count, int window) {
    require(frame_count >= 1 && window >= 1, ErrorCode::InvalidArgument, "window partition needs M, W >= 1");
    std::vector<std::vector<int>> windows;
    for (int start = 0; start < frame_count; start += window) {
        std::vector<int> w;
        for (int i = start; i < std::min(frame_count, start + window); ++i) w.push_back(i);
        windows.push_back(std::move(w));
    }
    return windows;
}

}  // namespace sparseview
