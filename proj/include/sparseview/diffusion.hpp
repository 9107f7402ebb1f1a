#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "sparseview/feature_map.hpp"
#include "sparseview/image.hpp"

namespace sparseview {

/// Dense M×C×H×W latent batch.
struct Tensor {
    int m = 0, c = 0, h = 0, w = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(int m_, int c_, int h_, int w_, double fill = 0.0)
        : m(m_), c(c_), h(h_), w(w_), data(static_cast<std::size_t>(m_) * c_ * h_ * w_, fill) {}

    std::size_t frame_size() const { return static_cast<std::size_t>(c) * h * w; }
    std::size_t index(int mi, int ci, int y, int x) const {
        return ((static_cast<std::size_t>(mi) * c + ci) * h + y) * w + x;
    }
    double &at(int mi, int ci, int y, int x) { return data[index(mi, ci, y, x)]; }
    double at(int mi, int ci, int y, int x) const { return data[index(mi, ci, y, x)]; }
    bool same_shape(const Tensor &o) const { return m == o.m && c == o.c && h == o.h && w == o.w; }

    FeatureMap frame(int mi) const;
    static Tensor stack(const std::vector<FeatureMap> &frames);
    static Tensor gaussian(int m, int c, int h, int w, std::uint64_t seed);
};

/// Interleaved H×W×C image <-> planar C×H×W grid.
FeatureMap to_feature_map(const Image &img);
Image to_image(const FeatureMap &map);

/// Cumulative signal rates abar_0 = 1 >= abar_1 >= ... >= abar_T > 0, with
/// alpha_t = sqrt(abar_t) and sigma_t = sqrt(1 - abar_t).
struct NoiseSchedule {
    std::vector<double> alpha_bar;

    int steps() const { return static_cast<int>(alpha_bar.size()) - 1; }
    double alpha(int t) const;
    double sigma(int t) const;
    void validate() const;

    static NoiseSchedule cosine(int T = 1000, double offset = 0.008);
    static NoiseSchedule linear(int T = 1000, double beta_start = 1e-4, double beta_end = 0.02);
    static NoiseSchedule from_name(const std::string &name, int T);
};

/// z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps
Tensor add_noise(const Tensor &z0, int t, const Tensor &eps, const NoiseSchedule &schedule);
/// v = alpha_t eps - sigma_t z0
Tensor v_target(const Tensor &z0, const Tensor &eps, const NoiseSchedule &schedule, int t);
/// z0_hat = alpha_t z_t - sigma_t v
Tensor v_to_z0(const Tensor &z_t, const Tensor &v, const NoiseSchedule &schedule, int t);

struct ConditionBundle {
    Tensor spatial;              // M×C_f×h'×w', concatenated with the noised latent
    std::vector<double> global;  // averaged view embedding
};

/// v-prediction network contract: output has the shape of `z_t`.
class Denoiser {
public:
    virtual ~Denoiser() = default;
    virtual Tensor predict_v(const Tensor &z_t, int t, const ConditionBundle &cond,
                             const NoiseSchedule &schedule) const = 0;
    virtual std::string name() const = 0;
};

/// Predicts z0_hat = sum_k gains[k] B_k with
///   B_0 = spatial condition, B_1 = 3×3 binomial blur of the condition,
///   B_2 = z_t, B_3 = mean of the global embedding (broadcast),
/// and reports it as velocity v = (alpha_t z_t - z0_hat) / sigma_t.
class ToyConvDenoiser final : public Denoiser {
public:
    explicit ToyConvDenoiser(std::array<double, 4> gains = {1.0, 0.0, 0.0, 0.0}) : gains_(gains) {}
    Tensor predict_v(const Tensor &z_t, int t, const ConditionBundle &cond,
                     const NoiseSchedule &schedule) const override;
    std::string name() const override { return "toy-conv"; }

    const std::array<double, 4> &gains() const { return gains_; }
    void set_gains(const std::array<double, 4> &g) { gains_ = g; }
    /// The four basis tensors B_k for a given input.
    std::array<Tensor, 4> basis(const Tensor &z_t, const ConditionBundle &cond) const;

private:
    std::array<double, 4> gains_;
};

/// Always steers toward a fixed clean latent.
class OracleDenoiser final : public Denoiser {
public:
    explicit OracleDenoiser(Tensor target) : target_(std::move(target)) {}
    Tensor predict_v(const Tensor &z_t, int t, const ConditionBundle &cond,
                     const NoiseSchedule &schedule) const override;
    std::string name() const override { return "oracle"; }

private:
    Tensor target_;
};

/// Steers toward the spatial condition itself.
class ConditionOracleDenoiser final : public Denoiser {
public:
    Tensor predict_v(const Tensor &z_t, int t, const ConditionBundle &cond,
                     const NoiseSchedule &schedule) const override;
    std::string name() const override { return "condition-oracle"; }
};

class ZeroDenoiser final : public Denoiser {
public:
    Tensor predict_v(const Tensor &z_t, int, const ConditionBundle &, const NoiseSchedule &) const override {
        return Tensor(z_t.m, z_t.c, z_t.h, z_t.w);
    }
    std::string name() const override { return "zero"; }
};

using DenoiserFactory = std::function<std::unique_ptr<Denoiser>()>;
void register_denoiser(const std::string &name, DenoiserFactory factory);
std::unique_ptr<Denoiser> make_denoiser(const std::string &name);

/// Frozen image -> latent encoder.
class LatentEncoder {
public:
    virtual ~LatentEncoder() = default;
    virtual FeatureMap encode(const Image &image) const = 0;
    virtual int downsample() const = 0;
    virtual int latent_channels() const = 0;
};

class LatentDecoder {
public:
    virtual ~LatentDecoder() = default;
    virtual Image decode(const FeatureMap &latent) const = 0;
};

/// 8× patch autoencoder: each 8×8 patch's mean color m is stored as Q m, where
/// Q is 4×3 with orthonormal columns; decoding writes Q^T z back over the patch.
class ToyAutoencoder final : public LatentEncoder, public LatentDecoder {
public:
    FeatureMap encode(const Image &image) const override;
    Image decode(const FeatureMap &latent) const override;
    int downsample() const override { return 8; }
    int latent_channels() const override { return 4; }

    /// Row-major 4×3 projection Q.
    static const std::array<double, 12> &projection();
};

/// Per-view global token source.
class GlobalEmbedder {
public:
    virtual ~GlobalEmbedder() = default;
    virtual std::vector<double> embed(const Image &image) const = 0;
};

/// Mean color followed by a 16-bin luma histogram (fractions).
class StatisticEmbedder final : public GlobalEmbedder {
public:
    std::vector<double> embed(const Image &image) const override;
};

/// Mean squared error between z0 and v_to_z0(z_t, denoiser(z_t)).
double diffusion_loss(const Denoiser &denoiser, const Tensor &z0, int t, const Tensor &eps,
                      const ConditionBundle &cond, const NoiseSchedule &schedule);

/// d(diffusion_loss)/d(gains) for the toy denoiser.
std::array<double, 4> diffusion_loss_gain_gradient(const ToyConvDenoiser &denoiser, const Tensor &z0, int t,
                                                   const Tensor &eps, const ConditionBundle &cond,
                                                   const NoiseSchedule &schedule);

/// Spatial conditions are the rendered H×W×C_f features resized to
/// (H/4)×(W/4); the global token is the mean of the view embeddings.
ConditionBundle assemble_conditions(const std::vector<Image> &rendered_features,
                                    const std::vector<std::vector<double>> &view_embeddings);

struct SamplerOptions {
    double eta = 0.0;  // 0 = deterministic DDIM-style updates
    int latent_channels = 4;
};

/// Denoising loop from pure noise at t = T over `steps` evenly spaced
/// timesteps, re-noising each z0 estimate to the next timestep.
Tensor sample_latents(const Denoiser &denoiser, const ConditionBundle &cond, const NoiseSchedule &schedule,
                      int steps, std::uint64_t seed, const SamplerOptions &options = {});

/// Samples, decodes every frame and clamps to [0, 1].
std::vector<Image> sample(const Denoiser &denoiser, const ConditionBundle &cond, const NoiseSchedule &schedule,
                          int steps, std::uint64_t seed, const LatentDecoder &decoder,
                          const SamplerOptions &options = {});

/// Latent grid side for an image side: 2× upscale then the encoder downsample.
int latent_extent(int image_extent, int downsample = 8);

struct AlignmentResult {
    double loss = 0.0;
    std::vector<Image> grad_rendered;  // same shapes as the rendered inputs
};

/// MSE between encode(upscale2×(target)) and the rendered features (given
/// either on the latent grid or at image resolution, in which case they are
/// bilinearly resized first).
AlignmentResult alignment_loss(const LatentEncoder &encoder, const std::vector<Image> &targets,
                               const std::vector<Image> &rendered_features);

/// Contiguous windows of at most `window` frames.
std::vector<std::vector<int>> window_partition(int frame_count, int window);

}  // namespace sparseview
