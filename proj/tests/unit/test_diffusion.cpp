#include <gtest/gtest.h>

#include <cmath>

#include "../support/test_support.hpp"
#include "sparseview/diffusion.hpp"
#include "sparseview/error.hpp"

namespace sparseview {
namespace {

using testing::random_image;
using testing::Rng;

NoiseSchedule custom(std::vector<double> abar) {
    NoiseSchedule s;
    s.alpha_bar = std::move(abar);
    return s;
}

Tensor filled(int m, int c, int h, int w, double v) { return Tensor(m, c, h, w, v); }

double max_abs(const Tensor &a, const Tensor &b) {
    double m = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

/// Emits the exact velocity for a known (z0, eps) pair plus a fixed offset.
class OffsetVelocity final : public Denoiser {
public:
    OffsetVelocity(Tensor z0, Tensor eps, Tensor delta) : z0_(z0), eps_(eps), delta_(delta) {}
    Tensor predict_v(const Tensor &, int t, const ConditionBundle &, const NoiseSchedule &s) const override {
        Tensor v = v_target(z0_, eps_, s, t);
        for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] += delta_.data[i];
        return v;
    }
    std::string name() const override { return "offset"; }

private:
    Tensor z0_, eps_, delta_;
};

TEST(Schedule, InvariantsForBothFamilies) {
    for (const std::string name : {"cosine", "linear"}) {
        const NoiseSchedule s = NoiseSchedule::from_name(name, 1000);
        EXPECT_NO_THROW(s.validate());
        EXPECT_EQ(s.steps(), 1000);
        EXPECT_EQ(s.alpha_bar[0], 1.0);
        for (int t = 0; t <= 1000; ++t) {
            if (t > 0) { EXPECT_LE(s.alpha_bar[t], s.alpha_bar[t - 1]); }
            EXPECT_GT(s.alpha_bar[t], 0.0);
            EXPECT_NEAR(s.alpha(t) * s.alpha(t) + s.sigma(t) * s.sigma(t), 1.0, 1e-9);
        }
    }
    EXPECT_THROW(NoiseSchedule::from_name("sigmoid", 10), Error);
    EXPECT_THROW(custom({1.0, 0.5, 0.7}).validate(), Error);
    EXPECT_THROW(custom({1.0, 0.0}).validate(), Error);
}

TEST(AddNoise, Examples) {
    Rng rng(1);
    const Tensor z0 = Tensor::gaussian(2, 3, 4, 4, 11), eps = Tensor::gaussian(2, 3, 4, 4, 12);
    const NoiseSchedule s = custom({1.0, 1.0, 0.25, 1e-8});
    EXPECT_EQ(add_noise(z0, 1, eps, s).data, z0.data);
    EXPECT_LT(max_abs(add_noise(z0, 3, eps, s), eps), 1e-3);
    const Tensor z = add_noise(filled(1, 1, 1, 1, 0.0), 2, filled(1, 1, 1, 1, 1.0), s);
    EXPECT_NEAR(z.data[0], std::sqrt(0.75), 1e-12);
    EXPECT_NEAR(z.data[0], 0.8660, 1e-4);
    EXPECT_THROW(add_noise(z0, 1, Tensor(2, 3, 4, 5), s), Error);
    EXPECT_THROW(add_noise(z0, 0, eps, s), Error);
}

TEST(Velocity, Endpoints) {
    const Tensor z0 = Tensor::gaussian(1, 4, 3, 3, 21), eps = Tensor::gaussian(1, 4, 3, 3, 22);
    const NoiseSchedule s = custom({1.0, 1.0, 0.5});
    // sigma_1 = 0
    const Tensor v0 = v_target(z0, eps, s, 1);
    EXPECT_EQ(v0.data, eps.data);
    const Tensor z_t0 = add_noise(z0, 1, eps, s);
    EXPECT_LT(max_abs(v_to_z0(z_t0, v0, s, 1), z_t0), 1e-15);
    // z0 = eps
    const Tensor v = v_target(z0, z0, s, 2);
    for (std::size_t i = 0; i < v.data.size(); ++i)
        EXPECT_NEAR(v.data[i], (s.alpha(2) - s.sigma(2)) * z0.data[i], 1e-12);
}

TEST(Velocity, RoundTripProperty) {
    Rng rng(2);
    const NoiseSchedule s = NoiseSchedule::cosine(200);
    for (int trial = 0; trial < 100; ++trial) {
        const Tensor z0 = Tensor::gaussian(1, 2, 3, 3, 100 + trial), eps = Tensor::gaussian(1, 2, 3, 3, 900 + trial);
        const int t = rng.integer(1, 200);
        const Tensor back = v_to_z0(add_noise(z0, t, eps, s), v_target(z0, eps, s, t), s, t);
        EXPECT_LT(max_abs(back, z0), 1e-9);
    }
}

TEST(DiffusionLoss, Examples) {
    const NoiseSchedule s = NoiseSchedule::linear(100);
    const Tensor z0 = Tensor::gaussian(2, 4, 5, 5, 31), eps = Tensor::gaussian(2, 4, 5, 5, 32);
    const Tensor zero = Tensor(2, 4, 5, 5);
    const ConditionBundle cond;
    for (int t : {1, 37, 100}) {
        EXPECT_NEAR(diffusion_loss(OffsetVelocity(z0, eps, zero), z0, t, eps, cond, s), 0.0, 1e-12);
        const Tensor delta = Tensor::gaussian(2, 4, 5, 5, 33 + t);
        double mean_d2 = 0;
        for (double d : delta.data) mean_d2 += d * d / delta.data.size();
        const double sigma2 = 1.0 - s.alpha_bar[t];
        EXPECT_NEAR(diffusion_loss(OffsetVelocity(z0, eps, delta), z0, t, eps, cond, s), sigma2 * mean_d2, 1e-9);
    }
    // Zero velocity at sigma -> 0 recovers z0 up to alpha_t.
    const NoiseSchedule tiny = custom({1.0, 1.0 - 1e-12});
    EXPECT_LT(diffusion_loss(ZeroDenoiser(), z0, 1, eps, cond, tiny), 1e-10);
}

TEST(DiffusionLoss, RejectsMisshapenOutput) {
    class Bad final : public Denoiser {
    public:
        Tensor predict_v(const Tensor &z, int, const ConditionBundle &, const NoiseSchedule &) const override {
            return Tensor(z.m, z.c, z.h, z.w + 1);
        }
        std::string name() const override { return "bad"; }
    };
    const Tensor z0 = Tensor::gaussian(1, 1, 2, 2, 1);
    EXPECT_THROW(diffusion_loss(Bad(), z0, 1, z0, {}, NoiseSchedule::cosine(10)), Error);
}

TEST(DiffusionLoss, GainGradientMatchesFiniteDifferences) {
    Rng rng(3);
    const NoiseSchedule s = NoiseSchedule::cosine(100);
    for (int trial = 0; trial < 10; ++trial) {
        const Tensor z0 = Tensor::gaussian(2, 4, 6, 6, 40 + trial), eps = Tensor::gaussian(2, 4, 6, 6, 60 + trial);
        ConditionBundle cond;
        cond.spatial = Tensor::gaussian(2, 4, 6, 6, 80 + trial);
        cond.global = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        std::array<double, 4> g;
        for (double &x : g) x = rng.uniform(-1, 1);
        const int t = rng.integer(1, 100);
        ToyConvDenoiser den(g);
        const auto analytic = diffusion_loss_gain_gradient(den, z0, t, eps, cond, s);
        for (int k = 0; k < 4; ++k) {
            const double h = 1e-5;
            auto gp = g, gm = g;
            gp[k] += h;
            gm[k] -= h;
            const double fd = (diffusion_loss(ToyConvDenoiser(gp), z0, t, eps, cond, s) -
                               diffusion_loss(ToyConvDenoiser(gm), z0, t, eps, cond, s)) /
                              (2 * h);
            EXPECT_LE(std::abs(fd - analytic[k]), 1e-3 * std::max(std::abs(fd), 1e-6)) << "gain " << k;
        }
    }
}

TEST(ToyConvDenoiser, UnitConditionGainRecoversCondition) {
    const NoiseSchedule s = NoiseSchedule::cosine(50);
    ConditionBundle cond;
    cond.spatial = Tensor::gaussian(1, 4, 4, 4, 5);
    const Tensor z_t = Tensor::gaussian(1, 4, 4, 4, 6);
    const ToyConvDenoiser den;  // gains {1, 0, 0, 0}
    const Tensor z0_hat = v_to_z0(z_t, den.predict_v(z_t, 20, cond, s), s, 20);
    EXPECT_LT(max_abs(z0_hat, cond.spatial), 1e-9);
    const auto basis = den.basis(z_t, cond);
    EXPECT_EQ(basis[0].data, cond.spatial.data);
    EXPECT_EQ(basis[2].data, z_t.data);
}

TEST(DenoiserRegistry, BuiltIns) {
    for (const char *name : {"toy-conv", "condition-oracle", "zero"}) EXPECT_EQ(make_denoiser(name)->name(), name);
    EXPECT_THROW(make_denoiser("unet"), Error);
    register_denoiser("zero-alias", [] { return std::make_unique<ZeroDenoiser>(); });
    EXPECT_EQ(make_denoiser("zero-alias")->name(), "zero");
}

TEST(AssembleConditions, Examples) {
    Rng rng(4);
    const std::vector<Image> feats = {random_image(rng, 16, 8, 4), random_image(rng, 16, 8, 4)};
    const std::vector<double> e = {0.1, 0.2, 0.3};
    const ConditionBundle same = assemble_conditions(feats, {e, e, e});
    for (std::size_t i = 0; i < e.size(); ++i) EXPECT_NEAR(same.global[i], e[i], 1e-15);
    const ConditionBundle mean = assemble_conditions(feats, {{0, 0}, {2, 2}});
    EXPECT_EQ(mean.global, (std::vector<double>{1, 1}));

    EXPECT_EQ(same.spatial.m, 2);
    EXPECT_EQ(same.spatial.c, 4);
    EXPECT_EQ(same.spatial.h, 2);
    EXPECT_EQ(same.spatial.w, 4);
    for (int mi = 0; mi < 2; ++mi)
        EXPECT_EQ(same.spatial.frame(mi).data, to_feature_map(resize_bilinear(feats[mi], 4, 2)).data);
    // A map already on the target grid passes through the resize unchanged.
    const Image small = random_image(rng, 4, 2, 4);
    EXPECT_EQ(resize_bilinear(small, 4, 2).data, small.data);

    EXPECT_THROW(assemble_conditions({}, {e}), Error);
    EXPECT_THROW(assemble_conditions(feats, {}), Error);
    EXPECT_THROW(assemble_conditions({Image(16, 8, 4), Image(12, 8, 4)}, {e}), Error);
}

TEST(Sampler, OracleConvergesForAnyStepCount) {
    const Tensor target = Tensor::gaussian(3, 4, 5, 6, 70);
    ConditionBundle cond;
    cond.spatial = Tensor(3, 4, 5, 6);
    const OracleDenoiser oracle(target);
    for (const std::string name : {"cosine", "linear"}) {
        const NoiseSchedule s = NoiseSchedule::from_name(name, 1000);
        for (int steps : {1, 2, 10, 50, 1000}) EXPECT_LT(max_abs(sample_latents(oracle, cond, s, steps, 5), target), 1e-6);
    }
}

TEST(Sampler, DeterministicAndSeedSensitive) {
    ConditionBundle cond;
    cond.spatial = Tensor::gaussian(2, 4, 4, 4, 1);
    const ToyConvDenoiser den({0.5, 0.2, 0.1, 0.0});
    const NoiseSchedule s = NoiseSchedule::cosine(100);
    const Tensor a = sample_latents(den, cond, s, 20, 9), b = sample_latents(den, cond, s, 20, 9);
    EXPECT_EQ(a.data, b.data);
    EXPECT_NE(a.data, sample_latents(den, cond, s, 20, 10).data);
    SamplerOptions stochastic;
    stochastic.eta = 1.0;
    EXPECT_EQ(sample_latents(den, cond, s, 20, 9, stochastic).data, sample_latents(den, cond, s, 20, 9, stochastic).data);
}

TEST(Sampler, SingleStepEvaluatesOnce) {
    class Counting final : public Denoiser {
    public:
        mutable int calls = 0;
        mutable int last_t = -1;
        Tensor predict_v(const Tensor &z, int t, const ConditionBundle &, const NoiseSchedule &) const override {
            ++calls;
            last_t = t;
            Tensor v = z;
            for (double &x : v.data) x = 0.5 * x + 0.1;
            return v;
        }
        std::string name() const override { return "counting"; }
    };
    ConditionBundle cond;
    cond.spatial = Tensor(1, 4, 3, 3);
    const NoiseSchedule s = NoiseSchedule::cosine(100);
    Counting den;
    const Tensor out = sample_latents(den, cond, s, 1, 3);
    EXPECT_EQ(den.calls, 1);
    EXPECT_EQ(den.last_t, 100);
    const Tensor z_T = Tensor::gaussian(1, 4, 3, 3, 3);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        const double v = 0.5 * z_T.data[i] + 0.1;
        EXPECT_NEAR(out.data[i], s.alpha(100) * z_T.data[i] - s.sigma(100) * v, 1e-12);
    }
    EXPECT_THROW(sample_latents(den, cond, s, 0, 3), Error);
    EXPECT_THROW(sample_latents(den, cond, s, 101, 3), Error);
}

TEST(Sampler, DecodedImagesAreClampedAndSized) {
    ConditionBundle cond;
    cond.spatial = Tensor::gaussian(2, 4, 3, 5, 2);
    const ToyAutoencoder ae;
    const auto images = sample(ConditionOracleDenoiser(), cond, NoiseSchedule::cosine(50), 10, 1, ae);
    ASSERT_EQ(images.size(), 2u);
    EXPECT_EQ(images[0].width, 40);
    EXPECT_EQ(images[0].height, 24);
    for (const Image &img : images)
        for (double v : img.data) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
}

TEST(ToyAutoencoder, PatchMeansAndLinearity) {
    Rng rng(5);
    const ToyAutoencoder ae;
    const Image img = random_image(rng, 24, 16, 3);
    const FeatureMap z = ae.encode(img);
    EXPECT_EQ(z.channels, 4);
    EXPECT_EQ(z.height, 2);
    EXPECT_EQ(z.width, 3);
    const Image rec = ae.decode(z);
    for (int by = 0; by < 2; ++by)
        for (int bx = 0; bx < 3; ++bx)
            for (int c = 0; c < 3; ++c) {
                double mean = 0;
                for (int y = 0; y < 8; ++y)
                    for (int x = 0; x < 8; ++x) mean += img.at(8 * bx + x, 8 * by + y, c) / 64.0;
                for (int y = 0; y < 8; ++y)
                    for (int x = 0; x < 8; ++x) EXPECT_NEAR(rec.at(8 * bx + x, 8 * by + y, c), mean, 1e-12);
            }
    // Projection is an isometry on colors: decode(encode(decode(z))) == decode(z).
    EXPECT_LT(testing::max_abs_diff(ae.decode(ae.encode(rec)), rec), 1e-12);

    const Image other = random_image(rng, 24, 16, 3);
    Image sum = img;
    for (std::size_t i = 0; i < sum.data.size(); ++i) sum.data[i] = 2 * img.data[i] - 0.5 * other.data[i];
    const FeatureMap zs = ae.encode(sum), zo = ae.encode(other);
    for (std::size_t i = 0; i < zs.data.size(); ++i) EXPECT_NEAR(zs.data[i], 2 * z.data[i] - 0.5 * zo.data[i], 1e-12);

    const auto &q = ToyAutoencoder::projection();
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) {
            double dot = 0;
            for (int r = 0; r < 4; ++r) dot += q[r * 3 + a] * q[r * 3 + b];
            EXPECT_NEAR(dot, a == b ? 1.0 : 0.0, 1e-12);
        }
    EXPECT_THROW(ae.encode(Image(20, 16, 3)), Error);
}

TEST(StatisticEmbedder, MeanAndHistogram) {
    Image img(4, 1, 3, 0.0);
    for (int c = 0; c < 3; ++c) img.at(3, 0, c) = 1.0;
    const auto e = StatisticEmbedder().embed(img);
    ASSERT_EQ(e.size(), 19u);
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(e[c], 0.25, 1e-15);
    EXPECT_NEAR(e[3], 0.75, 1e-15);
    EXPECT_NEAR(e[18], 0.25, 1e-15);
    EXPECT_THROW(StatisticEmbedder().embed(Image(2, 2, 1)), Error);
}

TEST(LatentExtent, Contract) {
    EXPECT_EQ(latent_extent(480), 120);
    EXPECT_EQ(latent_extent(256), 64);
    EXPECT_THROW(latent_extent(30), Error);
}

TEST(AlignmentLoss, Examples) {
    Rng rng(6);
    const ToyAutoencoder ae;
    const std::vector<Image> targets = {random_image(rng, 16, 8, 3), random_image(rng, 16, 8, 3)};
    std::vector<Image> perfect;
    for (const Image &t : targets) perfect.push_back(to_image(ae.encode(resize_bilinear(t, 32, 16))));
    EXPECT_NEAR(alignment_loss(ae, targets, perfect).loss, 0.0, 1e-20);

    std::vector<Image> offset = perfect;
    for (Image &o : offset)
        for (double &v : o.data) v += 0.3;
    EXPECT_NEAR(alignment_loss(ae, targets, offset).loss, 0.09, 1e-12);

    const std::vector<Image> random = {random_image(rng, 4, 2, 4), random_image(rng, 4, 2, 4)};
    double brute = 0;
    std::size_t n = 0;
    for (int i = 0; i < 2; ++i)
        for (std::size_t k = 0; k < random[i].data.size(); ++k, ++n)
            brute += std::pow(random[i].data[k] - perfect[i].data[k], 2);
    const AlignmentResult r = alignment_loss(ae, targets, random);
    EXPECT_NEAR(r.loss, brute / n, 1e-9);
    ASSERT_EQ(r.grad_rendered.size(), 2u);
    EXPECT_NEAR(r.grad_rendered[1].data[3], 2.0 * (random[1].data[3] - perfect[1].data[3]) / n, 1e-12);

    EXPECT_THROW(alignment_loss(ae, targets, {random[0]}), Error);
    EXPECT_THROW(alignment_loss(ae, targets, {Image(5, 2, 4), Image(5, 2, 4)}), Error);
}

TEST(AlignmentLoss, ImageResolutionGradientMatchesFiniteDifferences) {
    Rng rng(7);
    const ToyAutoencoder ae;
    const std::vector<Image> targets = {random_image(rng, 16, 8, 3)};
    std::vector<Image> feats = {random_image(rng, 16, 8, 4)};
    const AlignmentResult r = alignment_loss(ae, targets, feats);
    for (int probe = 0; probe < 20; ++probe) {
        const std::size_t k = static_cast<std::size_t>(rng.integer(0, static_cast<int>(feats[0].data.size()) - 1));
        auto plus = feats, minus = feats;
        plus[0].data[k] += 1e-6;
        minus[0].data[k] -= 1e-6;
        const double fd = (alignment_loss(ae, targets, plus).loss - alignment_loss(ae, targets, minus).loss) / 2e-6;
        EXPECT_NEAR(r.grad_rendered[0].data[k], fd, 1e-7);
    }
}

TEST(WindowPartition, Examples) {
    const auto w56 = window_partition(56, 14);
    ASSERT_EQ(w56.size(), 4u);
    for (const auto &w : w56) EXPECT_EQ(w.size(), 14u);
    EXPECT_EQ(window_partition(14, 14).size(), 1u);
    const auto w30 = window_partition(30, 14);
    ASSERT_EQ(w30.size(), 3u);
    EXPECT_EQ(w30[2], (std::vector<int>{28, 29}));
}

TEST(WindowPartition, CoversEveryFrameOnceInOrder) {
    Rng rng(8);
    for (int trial = 0; trial < 200; ++trial) {
        const int m = rng.integer(1, 100), w = rng.integer(1, 20);
        int expected = 0;
        for (const auto &win : window_partition(m, w)) {
            EXPECT_LE(static_cast<int>(win.size()), w);
            for (int i : win) EXPECT_EQ(i, expected++);
        }
        EXPECT_EQ(expected, m);
    }
}

}  // namespace
}  // namespace sparseview
