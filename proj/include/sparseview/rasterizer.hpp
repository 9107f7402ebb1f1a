#pragma once

#include <Eigen/Core>
#include <vector>

#include "sparseview/gaussians.hpp"
#include "sparseview/geometry.hpp"
#include "sparseview/image.hpp"

namespace sparseview {

struct RasterOptions {
    double near_clip = 0.01;
    double dilation = 0.3;             // added to the screen-space covariance diagonal
    double weight_clip = 0.99;
    double transmittance_floor = 1e-4;
    // A splat contributes to a pixel only while exp(-q/2) >= support_cutoff
    // (q the Mahalanobis distance). Tiling is exact with respect to this rule.
    double support_cutoff = 1e-10;
    int tile_size = 16;
    int threads = 1;  // 0 = hardware concurrency
};

struct RenderDiagnostics {
    int visible = 0;
    int culled = 0;
    int singular = 0;
};

struct RenderOutput {
    Image rgb;    // H×W×3, over black
    Image feat;   // H×W×C_f, over zero
    Image depth;  // H×W×1, alpha-normalised expected view depth
    Image alpha;  // H×W×1
    RenderDiagnostics diagnostics;
};

/// Screen-space footprint of one Gaussian.
struct SplatProjection {
    Eigen::Vector2d mean2d = Eigen::Vector2d::Zero();
    Eigen::Matrix2d cov2d = Eigen::Matrix2d::Zero();  // includes the dilation
    double depth = 0.0;
    bool culled = true;
    bool singular = false;

    // Intermediates shared by forward and backward passes.
    Eigen::Vector3d cam_point = Eigen::Vector3d::Zero();
    Eigen::Matrix3d cov3d = Eigen::Matrix3d::Zero();
    Eigen::Matrix<double, 2, 3> jacobian = Eigen::Matrix<double, 2, 3>::Zero();
    double conic[3] = {0.0, 0.0, 0.0};  // inverse cov2d (a, b, c)
    Eigen::Vector3d color = Eigen::Vector3d::Zero();
    Eigen::Vector3d color_raw = Eigen::Vector3d::Zero();  // before clamping
    int bbox[4] = {0, -1, 0, -1};                          // x0, x1, y0, y1 (inclusive)
};

SplatProjection project_gaussian(const Gaussian &g, int sh_degree, const Camera &camera,
                                 const RasterOptions &options = {});

/// Projected splats, front-to-back order and per-tile lists of one forward pass.
struct RasterContext {
    int width = 0, height = 0;
    int tiles_x = 0, tiles_y = 0;
    std::vector<SplatProjection> splats;
    std::vector<int> order;                   // visible splats sorted by depth (stable)
    std::vector<std::vector<int>> tile_lists; // gaussian indices, front-to-back
    RenderDiagnostics diagnostics;
};

RasterContext prepare_raster(const GaussianCloud &cloud, const Camera &camera,
                             const RasterOptions &options = {});

RenderOutput rasterize(const GaussianCloud &cloud, const Camera &camera,
                       const RasterOptions &options = {});
RenderOutput rasterize(const GaussianCloud &cloud, const Camera &camera, const RasterOptions &options,
                       RasterContext &context);

/// Brute-force oracle: every pixel visits every visible splat in depth order,
/// without tiles and without leaving the loop early.
RenderOutput reference_rasterize(const GaussianCloud &cloud, const Camera &camera,
                                 const RasterOptions &options = {});

/// dL/d(render) for the composited channels; an empty image means zero.
struct RenderUpstream {
    Image rgb;
    Image feat;
};

struct RenderGradients {
    std::vector<Eigen::Vector3d> mean;
    std::vector<double> opacity;
    std::vector<Eigen::Vector3d> scale;
    std::vector<Eigen::Vector4d> rotation;
    std::vector<std::vector<double>> sh;
    std::vector<std::vector<double>> feature;

    void resize(const GaussianCloud &cloud);
};

/// Analytic gradients of <upstream, render>. With `grad_stop`, the feature
/// channels reach only the feature payloads; rgb always reaches everything.
RenderGradients rasterize_backward(const GaussianCloud &cloud, const Camera &camera,
                                   const RasterContext &context, const RenderUpstream &upstream,
                                   bool grad_stop, const RasterOptions &options = {});

}  // namespace sparseview
