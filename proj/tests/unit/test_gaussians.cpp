#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <numbers>
#include <sstream>

#include "../support/test_support.hpp"
#include "sparseview/error.hpp"
#include "sparseview/gaussians.hpp"
#include "sparseview/rasterizer.hpp"
#include "sparseview/sh.hpp"

namespace sparseview {
namespace {

using testing::identity_camera;
using testing::random_cloud;
using testing::random_image;
using testing::Rng;

DepthMap constant_depth(int w, int h, double d, double confidence = 1.0) {
    DepthMap m;
    m.width = w;
    m.height = h;
    m.near = 0.5;
    m.far = 100;
    m.depth.assign(static_cast<std::size_t>(w) * h, d);
    m.confidence.assign(static_cast<std::size_t>(w) * h, confidence);
    return m;
}

TEST(BuildGaussians, MeanScaleAndOffset) {
    // 5×5 image, principal point at pixel (2, 2).
    Camera cam = identity_camera(5, 5, 100);
    const Image img(5, 5, 3, 0.3);
    const FeatureMap feat(8, 5, 5, 0.1);
    const GaussianCloud plain = build_gaussians(constant_depth(5, 5, 5), cam, img, feat, Image(), HeadParams{});
    ASSERT_EQ(plain.size(), 25u);
    const Gaussian &center = plain.gaussians[2 * 5 + 2];
    EXPECT_NEAR((center.mean - Eigen::Vector3d(0, 0, 5)).norm(), 0, 1e-12);
    EXPECT_NEAR((center.scale - Eigen::Vector3d::Constant(0.05)).norm(), 0, 1e-12);
    EXPECT_EQ(center.rotation, Eigen::Vector4d(1, 0, 0, 0));
    EXPECT_EQ(center.source_x, 2);
    EXPECT_EQ(center.source_y, 2);

    Image offsets(5, 5, 3, 0.0);
    offsets.at(2, 2, 0) = 0.1;
    const GaussianCloud shifted = build_gaussians(constant_depth(5, 5, 5), cam, img, feat, offsets, HeadParams{});
    EXPECT_NEAR((shifted.gaussians[12].mean - Eigen::Vector3d(0.1, 0, 5)).norm(), 0, 1e-12);
}

TEST(BuildGaussians, OpacityColorAndRays) {
    Rng rng(1);
    Camera cam = identity_camera(8, 6, 9);
    cam.pose = Pose::look_at({0.5, -0.3, -2}, {0, 0, 3});
    const Image img = random_image(rng, 8, 6, 3);
    DepthMap depth = constant_depth(8, 6, 1);
    for (double &d : depth.depth) d = rng.uniform(1, 9);
    for (double &c : depth.confidence) c = rng.uniform(0, 1);
    const GaussianCloud cloud = build_gaussians(depth, cam, img, FeatureMap(8, 6, 8, 0.0), Image(), HeadParams{}, 3);
    EXPECT_NO_THROW(cloud.validate());
    const Eigen::Vector3d origin = cam.pose.center();
    for (const Gaussian &g : cloud.gaussians) {
        const int idx = g.source_y * 8 + g.source_x;
        EXPECT_EQ(g.source_view, 3);
        EXPECT_DOUBLE_EQ(g.opacity, depth.confidence[idx]);
        // Base color reproduces the source pixel.
        const Eigen::Vector3d color = sh_color(g.sh, Eigen::Vector3d(0, 0, 1), 0);
        for (int c = 0; c < 3; ++c) EXPECT_NEAR(color[c], img.at(g.source_x, g.source_y, c), 1e-12);
        // The mean lies on the back-projected ray through the pixel.
        const Eigen::Vector3d ray = unproject({double(g.source_x), double(g.source_y)}, 1.0, cam.intrinsics, cam.pose) - origin;
        const Eigen::Vector3d to_mean = g.mean - origin;
        EXPECT_NEAR(ray.normalized().cross(to_mean).norm(), 0, 1e-6);
        EXPECT_NEAR(cam.pose.to_camera(g.mean).z(), depth.depth[idx], 1e-9);
    }
}

TEST(BuildGaussians, FeatureProjection) {
    Camera cam = identity_camera(4, 4, 4);
    FeatureMap feat(3, 4, 4);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) feat.at(c, y, x) = c + 1.0;
    HeadParams head;
    head.feature_channels = 2;
    head.feature_projection = {1, 1, 0, 0, 0, 2};  // rows: c0 + c1, 2 c2
    const GaussianCloud cloud = build_gaussians(constant_depth(4, 4, 2), cam, Image(4, 4, 3, 0.5), feat, Image(), head);
    for (const Gaussian &g : cloud.gaussians) {
        ASSERT_EQ(g.feature.size(), 2u);
        EXPECT_NEAR(g.feature[0], 3.0, 1e-12);
        EXPECT_NEAR(g.feature[1], 6.0, 1e-12);
    }
    HeadParams identity;
    const GaussianCloud first = build_gaussians(constant_depth(4, 4, 2), cam, Image(4, 4, 3, 0.5), feat, Image(), identity);
    EXPECT_NEAR(first.gaussians[0].feature[2], 3.0, 1e-12);
    EXPECT_NEAR(first.gaussians[0].feature[3], 0.0, 1e-12);
}

TEST(BuildGaussians, ShapeMismatchRejected) {
    const Camera cam = identity_camera(4, 4, 4);
    EXPECT_THROW(build_gaussians(constant_depth(4, 4, 2), cam, Image(5, 4, 3), FeatureMap(8, 4, 4), Image(), {}), Error);
    EXPECT_THROW(build_gaussians(constant_depth(4, 4, 2), cam, Image(4, 4, 3), FeatureMap(8, 4, 4), Image(3, 3, 3), {}),
                 Error);
}

TEST(Covariance, Examples) {
    const Eigen::Matrix3d a = covariance({1, 2, 3}, {1, 0, 0, 0});
    EXPECT_NEAR((a - Eigen::Vector3d(1, 4, 9).asDiagonal().toDenseMatrix()).norm(), 0, 1e-12);
    const double h = std::sqrt(0.5);
    const Eigen::Matrix3d b = covariance({1, 2, 1}, {h, 0, 0, h});  // 90 degrees about z
    EXPECT_NEAR((b - Eigen::Vector3d(4, 1, 1).asDiagonal().toDenseMatrix()).norm(), 0, 1e-12);
    EXPECT_THROW(covariance({1, 1, 1}, {1, 0.1, 0, 0}), Error);
}

TEST(Covariance, SymmetricWithSquaredScaleEigenvalues) {
    Rng rng(2);
    for (int trial = 0; trial < 200; ++trial) {
        const Eigen::Vector3d s = rng.vec3(0.01, 3);
        const Eigen::Matrix3d cov = covariance(s, rng.unit_quaternion());
        EXPECT_NEAR((cov - cov.transpose()).norm(), 0, 1e-12);
        Eigen::Vector3d ev = Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(cov).eigenvalues();
        Eigen::Vector3d want = s.cwiseProduct(s);
        std::sort(ev.data(), ev.data() + 3);
        std::sort(want.data(), want.data() + 3);
        EXPECT_NEAR((ev - want).norm(), 0, 1e-9);
    }
}

Eigen::Vector4d compose(const Eigen::Vector4d &a, const Eigen::Vector4d &b) {
    const Eigen::Quaterniond qa(a[0], a[1], a[2], a[3]), qb(b[0], b[1], b[2], b[3]);
    const Eigen::Quaterniond q = qa * qb;
    return {q.w(), q.x(), q.y(), q.z()};
}

TEST(Covariance, RotationEquivariant) {
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        const Eigen::Vector3d s = rng.vec3(0.1, 2);
        const Eigen::Vector4d q1 = rng.unit_quaternion(), q2 = rng.unit_quaternion();
        const Eigen::Matrix3d r2 = rotation_from_quaternion(q2);
        const Eigen::Matrix3d lhs = covariance(s, compose(q2, q1));
        EXPECT_NEAR((lhs - r2 * covariance(s, q1) * r2.transpose()).norm(), 0, 1e-9);
    }
}

TEST(ShColor, Examples) {
    const double dc = 0.5 / kShC0;
    const std::vector<double> white = {dc, dc, dc};
    Rng rng(4);
    for (int i = 0; i < 10; ++i) {
        const Eigen::Vector3d dir = rng.vec3(-1, 1).normalized();
        EXPECT_NEAR((sh_color(white, dir, 0) - Eigen::Vector3d::Ones()).norm(), 0, 1e-12);
        EXPECT_NEAR((sh_color(std::vector<double>(3, 0.0), dir, 0) - Eigen::Vector3d::Constant(0.5)).norm(), 0, 1e-15);
    }
    // Degree 1, only the z-linear band (index 2) nonzero.
    std::vector<double> c(12, 0.0);
    for (int ch = 0; ch < 3; ++ch) c[3 * 2 + ch] = 0.3;
    const Eigen::Vector3d up = sh_color(c, {0, 0, 1}, 1), down = sh_color(c, {0, 0, -1}, 1);
    for (int ch = 0; ch < 3; ++ch) {
        EXPECT_NEAR(up[ch] + down[ch], 1.0, 1e-12);
        EXPECT_NEAR(up[ch] - 0.5, 0.3 * 0.4886025119029199, 1e-12);
    }
    EXPECT_THROW(sh_color(std::vector<double>(5, 0.0), {0, 0, 1}, 0), Error);
}

TEST(ShBasis, MatchesClosedFormDegreeTwo) {
    Rng rng(5);
    for (int i = 0; i < 50; ++i) {
        const Eigen::Vector3d d = rng.vec3(-1, 1).normalized();
        const auto y = sh_basis(d, 2);
        ASSERT_EQ(y.size(), 9u);
        const double x = d.x(), yy = d.y(), z = d.z();
        EXPECT_NEAR(y[0], 0.28209479177387814, 1e-12);
        EXPECT_NEAR(y[1], -0.4886025119029199 * yy, 1e-12);
        EXPECT_NEAR(y[2], 0.4886025119029199 * z, 1e-12);
        EXPECT_NEAR(y[3], -0.4886025119029199 * x, 1e-12);
        EXPECT_NEAR(y[4], 1.0925484305920792 * x * yy, 1e-12);
        EXPECT_NEAR(y[6], 0.31539156525252005 * (3 * z * z - 1), 1e-12);
        EXPECT_NEAR(y[8], 0.5462742152960396 * (x * x - yy * yy), 1e-12);
    }
}

TEST(ShBasis, GradientMatchesFiniteDifference) {
    Rng rng(6);
    for (int degree = 0; degree <= 3; ++degree) {
        const Eigen::Vector3d d = rng.vec3(-1, 1);
        std::vector<double> values;
        std::vector<Eigen::Vector3d> grads;
        sh_basis_with_gradient(d, degree, values, grads);
        for (int axis = 0; axis < 3; ++axis) {
            Eigen::Vector3d p = d, m = d;
            p[axis] += 1e-6;
            m[axis] -= 1e-6;
            std::vector<double> vp, vm;
            std::vector<Eigen::Vector3d> unused;
            sh_basis_with_gradient(p, degree, vp, unused);
            sh_basis_with_gradient(m, degree, vm, unused);
            for (std::size_t k = 0; k < values.size(); ++k) EXPECT_NEAR((vp[k] - vm[k]) / 2e-6, grads[k][axis], 1e-6);
        }
    }
}

TEST(GaussianCloud, ValidateCatchesBrokenInvariants) {
    Rng rng(7);
    const Camera cam = identity_camera(16, 16, 16);
    GaussianCloud cloud = random_cloud(rng, cam, {});
    EXPECT_NO_THROW(cloud.validate());
    GaussianCloud bad = cloud;
    bad.gaussians[3].opacity = 1.5;
    EXPECT_THROW(bad.validate(), Error);
    bad = cloud;
    bad.gaussians[0].scale[1] = 0.0;
    EXPECT_THROW(bad.validate(), Error);
    bad = cloud;
    bad.gaussians[0].rotation *= 1.1;
    EXPECT_THROW(bad.validate(), Error);
    bad = cloud;
    bad.gaussians[0].feature.pop_back();
    EXPECT_THROW(bad.validate(), Error);
}

TEST(CloudIo, RoundTripAtFloatPrecision) {
    Rng rng(8);
    testing::CloudSpec spec;
    spec.sh_degree = 2;
    spec.count = 37;
    const GaussianCloud cloud = random_cloud(rng, identity_camera(16, 16, 16), spec);
    std::stringstream buf;
    write_cloud(buf, cloud);
    const GaussianCloud back = read_cloud(buf);
    ASSERT_EQ(back.size(), cloud.size());
    EXPECT_EQ(back.sh_degree, 2);
    EXPECT_EQ(back.feature_channels, cloud.feature_channels);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Gaussian &a = cloud.gaussians[i], &b = back.gaussians[i];
        EXPECT_NEAR((a.mean - b.mean).norm(), 0, 1e-5);
        EXPECT_NEAR(a.opacity, b.opacity, 1e-7);
        for (std::size_t k = 0; k < a.sh.size(); ++k) EXPECT_NEAR(a.sh[k], b.sh[k], 1e-6);
        EXPECT_EQ(static_cast<float>(a.feature[1]), static_cast<float>(b.feature[1]));
    }
    // Writing the parsed cloud again is byte-identical.
    std::stringstream again;
    write_cloud(again, back);
    EXPECT_EQ(again.str(), [&] {
        std::stringstream s;
        write_cloud(s, cloud);
        return s.str();
    }());
}

TEST(CloudIo, RejectsCorruptHeader) {
    std::stringstream bad("NOPE and more bytes");
    EXPECT_THROW(read_cloud(bad), Error);
    std::stringstream truncated;
    Rng rng(9);
    write_cloud(truncated, random_cloud(rng, identity_camera(8, 8, 8), {}));
    std::stringstream cut(truncated.str().substr(0, truncated.str().size() - 7));
    EXPECT_THROW(read_cloud(cut), Error);
}

}  // namespace
}  // namespace sparseview
