#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

#include "../support/gradcheck.hpp"
#include "../support/test_support.hpp"
#include "sparseview/error.hpp"
#include "sparseview/rasterizer.hpp"
#include "sparseview/sh.hpp"

namespace sparseview {
namespace {

using testing::CloudSpec;
using testing::identity_camera;
using testing::max_abs_diff;
using testing::random_cloud;
using testing::random_image;
using testing::Rng;

Gaussian splat(const Eigen::Vector3d &mean, double opacity, double scale, const Eigen::Vector3d &color) {
    Gaussian g;
    g.mean = mean;
    g.opacity = opacity;
    g.scale = Eigen::Vector3d::Constant(scale);
    g.sh = {(color[0] - 0.5) / kShC0, (color[1] - 0.5) / kShC0, (color[2] - 0.5) / kShC0};
    g.feature = {1, 2, 3, 4};
    return g;
}

GaussianCloud cloud_of(std::vector<Gaussian> gs) {
    GaussianCloud c;
    c.gaussians = std::move(gs);
    return c;
}

TEST(ProjectGaussian, PrincipalRayAndDepthScaling) {
    const Camera cam = identity_camera(33, 33, 40);
    const SplatProjection near = project_gaussian(splat({0, 0, 2}, 0.5, 0.2, {1, 1, 1}), 0, cam);
    EXPECT_FALSE(near.culled);
    EXPECT_NEAR((near.mean2d - Eigen::Vector2d(16, 16)).norm(), 0, 1e-12);
    EXPECT_NEAR(near.depth, 2, 1e-12);

    const SplatProjection far = project_gaussian(splat({0, 0, 4}, 0.5, 0.2, {1, 1, 1}), 0, cam);
    const Eigen::Matrix2d dil = 0.3 * Eigen::Matrix2d::Identity();
    const Eigen::Vector2d en = Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(near.cov2d - dil).eigenvalues();
    const Eigen::Vector2d ef = Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(far.cov2d - dil).eigenvalues();
    EXPECT_NEAR(en[0] / ef[0], 4.0, 1e-9);
    EXPECT_NEAR(en[1] / ef[1], 4.0, 1e-9);
}

TEST(ProjectGaussian, CullsBehindCameraAndOffscreen) {
    const Camera cam = identity_camera(32, 32, 32);
    EXPECT_TRUE(project_gaussian(splat({0, 0, -1}, 1, 0.1, {1, 1, 1}), 0, cam).culled);
    EXPECT_TRUE(project_gaussian(splat({0, 0, 0.005}, 1, 0.1, {1, 1, 1}), 0, cam).culled);
    EXPECT_TRUE(project_gaussian(splat({50, 0, 2}, 1, 0.01, {1, 1, 1}), 0, cam).culled);
}

TEST(Rasterize, SingleOpaqueSplatHitsWeightClip) {
    const Camera cam = identity_camera(33, 33, 40);
    const GaussianCloud cloud = cloud_of({splat({0, 0, 3}, 1.0, 0.2, {1, 1, 1})});
    for (const RenderOutput &r : {rasterize(cloud, cam), reference_rasterize(cloud, cam)}) {
        EXPECT_DOUBLE_EQ(r.alpha.at(16, 16, 0), 0.99);
        // Composited over black, the clipped weight also bounds the color.
        for (int c = 0; c < 3; ++c) EXPECT_NEAR(r.rgb.at(16, 16, c), 0.99, 1e-12);
        EXPECT_NEAR(r.depth.at(16, 16, 0), 3.0, 1e-12);
        EXPECT_NEAR(r.feat.at(16, 16, 3), 0.99 * 4, 1e-12);
    }
}

TEST(Rasterize, EmptyCloudIsBackground) {
    const Camera cam = identity_camera(20, 12, 20);
    const RenderOutput r = rasterize(GaussianCloud{}, cam);
    EXPECT_EQ(r.rgb.width, 20);
    EXPECT_EQ(r.rgb.height, 12);
    EXPECT_EQ(r.feat.channels, kDefaultFeatureChannels);
    for (double v : r.rgb.data) EXPECT_EQ(v, 0.0);
    for (double v : r.alpha.data) EXPECT_EQ(v, 0.0);
}

TEST(Rasterize, MatchesReferenceOnRandomScenes) {
    Rng rng(1);
    for (int scene = 0; scene < 20; ++scene) {
        const Camera cam = identity_camera(32, 32, 30);
        CloudSpec spec;
        spec.count = 50;
        spec.sh_degree = scene % 3;
        spec.opacity_hi = 1.0;
        const GaussianCloud cloud = random_cloud(rng, cam, spec);
        const RenderOutput a = rasterize(cloud, cam), b = reference_rasterize(cloud, cam);
        EXPECT_LT(max_abs_diff(a.rgb, b.rgb), 1e-5);
        EXPECT_LT(max_abs_diff(a.feat, b.feat), 1e-5);
        EXPECT_LT(max_abs_diff(a.depth, b.depth), 1e-5);
        EXPECT_LT(max_abs_diff(a.alpha, b.alpha), 1e-5);
        for (std::size_t p = 0; p < a.alpha.data.size(); ++p) {
            EXPECT_GE(a.alpha.data[p], 0.0);
            EXPECT_LE(a.alpha.data[p], 1.0);
            if (a.alpha.data[p] > 0) {
                EXPECT_GE(a.depth.data[p], 0.0);
            }
        }
    }
}

TEST(ReferenceRasterize, SingleSplatClosedForm) {
    // Identity pose, so the screen covariance is J Sigma J^T + 0.3 I.
    const Camera cam = identity_camera(32, 32, 30);
    Gaussian g = splat({0.3, -0.2, 4}, 0.7, 0.1, {0.8, 0.2, 0.6});
    g.scale = Eigen::Vector3d(0.1, 0.25, 0.05);
    g.rotation = Eigen::Vector4d(0.9, 0.1, -0.3, 0.2).normalized();
    const RenderOutput r = reference_rasterize(cloud_of({g}), cam);

    const Intrinsics &K = cam.intrinsics;
    const double x = g.mean.x(), y = g.mean.y(), z = g.mean.z();
    Eigen::Matrix<double, 2, 3> J;
    J << K.fx / z, 0, -K.fx * x / (z * z), 0, K.fy / z, -K.fy * y / (z * z);
    const Eigen::Matrix2d cov = J * covariance(g.scale, g.rotation) * J.transpose() + 0.3 * Eigen::Matrix2d::Identity();
    const Eigen::Vector2d mu(K.fx * x / z + K.cx, K.fy * y / z + K.cy);
    for (const auto &px : {Eigen::Vector2i(17, 14), Eigen::Vector2i(18, 14), Eigen::Vector2i(16, 15),
                           Eigen::Vector2i(19, 12), Eigen::Vector2i(14, 16)}) {
        const Eigen::Vector2d d = px.cast<double>() - mu;
        const double w = std::min(0.99, g.opacity * std::exp(-0.5 * d.dot(cov.inverse() * d)));
        EXPECT_NEAR(r.alpha.at(px.x(), px.y(), 0), w, 1e-9);
        EXPECT_NEAR(r.rgb.at(px.x(), px.y(), 0), 0.8 * w, 1e-9);
    }
}

TEST(ReferenceRasterize, DisjointSplatsAreOrderIndependent) {
    const Camera cam = identity_camera(40, 40, 40);
    std::vector<Gaussian> gs;
    for (int i = 0; i < 4; ++i) gs.push_back(splat({-1.5 + i, (i % 2) - 0.5, 4 + 0.1 * i}, 0.8, 0.05, {0.2 * i, 0.5, 0.9}));
    const RenderOutput a = reference_rasterize(cloud_of(gs), cam);
    std::reverse(gs.begin(), gs.end());
    const RenderOutput b = reference_rasterize(cloud_of(gs), cam);
    EXPECT_EQ(a.rgb.data, b.rgb.data);
    EXPECT_EQ(a.alpha.data, b.alpha.data);
}

TEST(Rasterize, FrontSplatOccludes) {
    const Camera cam = identity_camera(32, 32, 32);
    const GaussianCloud cloud = cloud_of({splat({0, 0, 6}, 1.0, 0.3, {0, 0, 1}), splat({0, 0, 3}, 1.0, 0.3, {1, 0, 0})});
    const RenderOutput r = rasterize(cloud, cam);
    EXPECT_GT(r.rgb.at(15, 15, 0), 0.9);
    EXPECT_LT(r.rgb.at(15, 15, 2), 0.05);
}

TEST(Rasterize, SingularSplatIsSkippedAndCounted) {
    const Camera cam = identity_camera(16, 16, 16);
    RasterOptions opts;
    opts.dilation = 0.0;
    Gaussian g = splat({0, 0, 2}, 0.9, 1e-9, {1, 1, 1});
    const RenderOutput r = rasterize(cloud_of({g}), cam, opts);
    EXPECT_EQ(r.diagnostics.singular, 1);
    for (double v : r.alpha.data) EXPECT_EQ(v, 0.0);
}

TEST(Rasterize, AlphaMonotoneInOpacity) {
    Rng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        const Camera cam = identity_camera(24, 24, 24);
        GaussianCloud cloud = random_cloud(rng, cam, {});
        const RenderOutput before = rasterize(cloud, cam);
        Gaussian &g = cloud.gaussians[rng.integer(0, static_cast<int>(cloud.size()) - 1)];
        g.opacity = std::min(1.0, g.opacity + rng.uniform(0.01, 0.4));
        const RenderOutput after = rasterize(cloud, cam);
        for (std::size_t p = 0; p < before.alpha.data.size(); ++p) EXPECT_GE(after.alpha.data[p], before.alpha.data[p] - 1e-15);
    }
}

TEST(Rasterize, DeterministicAcrossThreadCounts) {
    Rng rng(3);
    const Camera cam = identity_camera(64, 48, 50);
    CloudSpec spec;
    spec.count = 400;
    spec.sh_degree = 1;
    const GaussianCloud cloud = random_cloud(rng, cam, spec);
    RenderUpstream up;
    up.rgb = random_image(rng, 64, 48, 3, -1, 1);
    up.feat = random_image(rng, 64, 48, 4, -1, 1);
    RasterOptions one, many;
    many.threads = 4;
    RasterContext c1, c4;
    const RenderOutput a = rasterize(cloud, cam, one, c1), b = rasterize(cloud, cam, many, c4);
    EXPECT_EQ(a.rgb.data, b.rgb.data);
    EXPECT_EQ(a.feat.data, b.feat.data);
    EXPECT_EQ(a.depth.data, b.depth.data);
    const RenderGradients g1 = rasterize_backward(cloud, cam, c1, up, false, one);
    const RenderGradients g4 = rasterize_backward(cloud, cam, c4, up, false, many);
    EXPECT_EQ(g1.mean, g4.mean);
    EXPECT_EQ(g1.opacity, g4.opacity);
    EXPECT_EQ(g1.sh, g4.sh);
    EXPECT_EQ(g1.feature, g4.feature);
}

TEST(RasterizeBackward, ZeroUpstreamGivesZeroGradients) {
    Rng rng(4);
    const Camera cam = identity_camera(24, 24, 24);
    const GaussianCloud cloud = random_cloud(rng, cam, {});
    RasterContext ctx;
    rasterize(cloud, cam, {}, ctx);
    RenderUpstream up;
    up.rgb = Image(24, 24, 3);
    up.feat = Image(24, 24, 4);
    const RenderGradients g = rasterize_backward(cloud, cam, ctx, up, false);
    EXPECT_TRUE(testing::structural_gradients_zero(g));
    for (const auto &f : g.feature)
        for (double v : f) EXPECT_EQ(v, 0.0);
}

TEST(RasterizeBackward, GradStopZeroesStructuralPartialsExactly) {
    Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        const Camera cam = identity_camera(24, 24, 24);
        const GaussianCloud cloud = random_cloud(rng, cam, {});
        RasterContext ctx;
        rasterize(cloud, cam, {}, ctx);
        RenderUpstream up;
        up.feat = random_image(rng, 24, 24, 4, -1, 1);
        EXPECT_TRUE(testing::structural_gradients_zero(rasterize_backward(cloud, cam, ctx, up, true)));
        // Without the stop, feature loss does move the structure.
        EXPECT_FALSE(testing::structural_gradients_zero(rasterize_backward(cloud, cam, ctx, up, false)));
    }
}

TEST(RasterizeBackward, MatchesFiniteDifferences) {
    Rng rng(6);
    for (int scene = 0; scene < 5; ++scene) {
        const Camera cam = identity_camera(24, 24, 24);
        CloudSpec spec;
        spec.count = rng.integer(1, 8);
        spec.sh_degree = 1;
        spec.margin = 0.2;
        const GaussianCloud cloud = random_cloud(rng, cam, spec);
        RenderUpstream up;
        up.rgb = random_image(rng, 24, 24, 3, -1, 1);
        up.feat = random_image(rng, 24, 24, 4, -1, 1);
        for (bool stop : {false, true}) EXPECT_LT(testing::gradient_check(cloud, cam, up, stop).worst(), 1e-3);
    }
}

TEST(RasterizeBackward, RejectsMismatchedUpstream) {
    Rng rng(7);
    const Camera cam = identity_camera(16, 16, 16);
    const GaussianCloud cloud = random_cloud(rng, cam, {});
    RasterContext ctx;
    rasterize(cloud, cam, {}, ctx);
    RenderUpstream up;
    up.rgb = Image(15, 16, 3);
    EXPECT_THROW(rasterize_backward(cloud, cam, ctx, up, false), Error);
}

}  // namespace
}  // namespace sparseview
