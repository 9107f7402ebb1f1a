#include "sparseview/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sparseview/error.hpp"
#include "sparseview/parallel.hpp"
#include "sparseview/sh.hpp"

namespace sparseview {
namespace {

constexpr double kSingularDet = 1e-12;

double max_mahalanobis(const RasterOptions &options) { return -2.0 * std::log(options.support_cutoff); }

Eigen::Vector3d view_direction(const Eigen::Vector3d &mean, const Eigen::Vector3d &center, double *norm) {
    Eigen::Vector3d v = mean - center;
    const double n = v.norm();
    if (norm) *norm = n;
    return n > 1e-12 ? Eigen::Vector3d(v / n) : Eigen::Vector3d::UnitZ();
}

// Per-pixel state of one compositing pass.
struct PixelAccumulator {
    double transmittance = 1.0;
    double rgb[3] = {0, 0, 0};
    double depth = 0.0;
    std::vector<double> feat;
};

// Composites splat `gi` into `acc` at pixel (px, py). Returns false when the
// splat does not touch the pixel.
inline bool composite(const GaussianCloud &cloud, const SplatProjection &s, int gi, double px, double py,
                      double q_max, const RasterOptions &options, PixelAccumulator &acc) {
    const double dx = s.mean2d.x() - px;
    const double dy = s.mean2d.y() - py;
    const double q = s.conic[0] * dx * dx + 2.0 * s.conic[1] * dx * dy + s.conic[2] * dy * dy;
    if (q > q_max) return false;
    const double w = std::min(options.weight_clip, cloud.gaussians[gi].opacity * std::exp(-0.5 * q));
    const double contrib = w * acc.transmittance;
    for (int c = 0; c < 3; ++c) acc.rgb[c] += s.color[c] * contrib;
    const auto &f = cloud.gaussians[gi].feature;
    for (std::size_t c = 0; c < acc.feat.size(); ++c) acc.feat[c] += f[c] * contrib;
    acc.depth += s.depth * contrib;
    acc.transmittance *= 1.0 - w;
    return true;
}

void store_pixel(RenderOutput &out, int x, int y, const PixelAccumulator &acc) {
    for (int c = 0; c < 3; ++c) out.rgb.at(x, y, c) = acc.rgb[c];
    for (std::size_t c = 0; c < acc.feat.size(); ++c) out.feat.at(x, y, static_cast<int>(c)) = acc.feat[c];
    const double alpha = 1.0 - acc.transmittance;
    out.alpha.at(x, y, 0) = alpha;
    out.depth.at(x, y, 0) = alpha > 0.0 ? acc.depth / alpha : 0.0;
}

RenderOutput blank_output(const GaussianCloud &cloud, const Camera &camera) {
    const int W = camera.intrinsics.width, H = camera.intrinsics.height;
    RenderOutput out;
    out.rgb = Image(W, H, 3);
    out.feat = Image(W, H, cloud.feature_channels);
    out.depth = Image(W, H, 1);
    out.alpha = Image(W, H, 1);
    return out;
}

}  // namespace

SplatProjection project_gaussian(const Gaussian &g, int sh_degree, const Camera &camera,
                                 const RasterOptions &options) {
    const Intrinsics &K = camera.intrinsics;
    const Eigen::Matrix3d &W = camera.pose.rotation;
    SplatProjection s;
    s.cam_point = camera.pose.to_camera(g.mean);
    s.depth = s.cam_point.z();
    if (!(s.depth > options.near_clip)) return s;

    const double x = s.cam_point.x(), y = s.cam_point.y(), z = s.cam_point.z();
    s.mean2d = Eigen::Vector2d(K.fx * x / z + K.cx, K.fy * y / z + K.cy);
    s.jacobian << K.fx / z, 0.0, -K.fx * x / (z * z), 0.0, K.fy / z, -K.fy * y / (z * z);

    const Eigen::Matrix3d M = rotation_from_quaternion(g.rotation) * g.scale.asDiagonal();
    s.cov3d = M * M.transpose();
    const Eigen::Matrix<double, 2, 3> T = s.jacobian * W;
    s.cov2d = T * s.cov3d * T.transpose();
    s.cov2d(0, 0) += options.dilation;
    s.cov2d(1, 1) += options.dilation;
    s.cov2d(0, 1) = s.cov2d(1, 0) = 0.5 * (s.cov2d(0, 1) + s.cov2d(1, 0));

    const double det = s.cov2d.determinant();
    if (!(det >= kSingularDet)) {
        s.singular = true;
        return s;
    }
    s.conic[0] = s.cov2d(1, 1) / det;
    s.conic[1] = -s.cov2d(0, 1) / det;
    s.conic[2] = s.cov2d(0, 0) / det;

    // Cull when the 3-sigma ellipse misses every pixel center.
    const double hx3 = 3.0 * std::sqrt(s.cov2d(0, 0));
    const double hy3 = 3.0 * std::sqrt(s.cov2d(1, 1));
    if (s.mean2d.x() + hx3 < 0.0 || s.mean2d.x() - hx3 > K.width - 1 || s.mean2d.y() + hy3 < 0.0 ||
        s.mean2d.y() - hy3 > K.height - 1) {
        return s;
    }

    // Conservative pixel bounds of the support ellipse.
    const double q_max = max_mahalanobis(options);
    const double hx = std::sqrt(q_max * s.cov2d(0, 0)) + 1.0;
    const double hy = std::sqrt(q_max * s.cov2d(1, 1)) + 1.0;
    s.bbox[0] = std::max(0, static_cast<int>(std::floor(s.mean2d.x() - hx)));
    s.bbox[1] = std::min(K.width - 1, static_cast<int>(std::ceil(s.mean2d.x() + hx)));
    s.bbox[2] = std::max(0, static_cast<int>(std::floor(s.mean2d.y() - hy)));
    s.bbox[3] = std::min(K.height - 1, static_cast<int>(std::ceil(s.mean2d.y() + hy)));

    const Eigen::Vector3d dir = view_direction(g.mean, camera.pose.center(), nullptr);
    const auto basis = sh_basis(dir, sh_degree);
    s.color_raw = Eigen::Vector3d::Constant(0.5);
    for (std::size_t k = 0; k < basis.size(); ++k)
        for (int c = 0; c < 3; ++c) s.color_raw[c] += g.sh[3 * k + c] * basis[k];
    s.color = s.color_raw.cwiseMax(0.0).cwiseMin(1.0);
    s.culled = false;
    return s;
}

RasterContext prepare_raster(const GaussianCloud &cloud, const Camera &camera, const RasterOptions &options) {
    require(options.tile_size >= 1, ErrorCode::InvalidArgument, "tile size must be positive");
    require(options.support_cutoff > 0.0 && options.support_cutoff < 1.0, ErrorCode::InvalidArgument,
            "support cutoff must lie in (0, 1)");
    const std::size_t sh_count = 3 * sh_basis_count(cloud.sh_degree);
    for (const Gaussian &g : cloud.gaussians) {
        require(g.sh.size() == sh_count && g.feature.size() == static_cast<std::size_t>(cloud.feature_channels),
                ErrorCode::ShapeMismatch, "gaussian payload does not match the cloud layout");
    }

    RasterContext ctx;
    ctx.width = camera.intrinsics.width;
    ctx.height = camera.intrinsics.height;
    ctx.tiles_x = (ctx.width + options.tile_size - 1) / options.tile_size;
    ctx.tiles_y = (ctx.height + options.tile_size - 1) / options.tile_size;
    ctx.splats.resize(cloud.size());
    parallel_for(cloud.size(), options.threads, [&](std::size_t i) {
        ctx.splats[i] = project_gaussian(cloud.gaussians[i], cloud.sh_degree, camera, options);
    });

    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const SplatProjection &s = ctx.splats[i];
        if (s.singular) {
            ++ctx.diagnostics.singular;
        } else if (s.culled) {
            ++ctx.diagnostics.culled;
        } else {
            ctx.order.push_back(static_cast<int>(i));
        }
    }
    ctx.diagnostics.visible = static_cast<int>(ctx.order.size());
    std::stable_sort(ctx.order.begin(), ctx.order.end(),
                     [&](int a, int b) { return ctx.splats[a].depth < ctx.splats[b].depth; });

    ctx.tile_lists.assign(static_cast<std::size_t>(ctx.tiles_x) * ctx.tiles_y, {});
    for (int gi : ctx.order) {
        const SplatProjection &s = ctx.splats[gi];
        if (s.bbox[0] > s.bbox[1] || s.bbox[2] > s.bbox[3]) continue;
        const int tx0 = s.bbox[0] / options.tile_size, tx1 = s.bbox[1] / options.tile_size;
        const int ty0 = s.bbox[2] / options.tile_size, ty1 = s.bbox[3] / options.tile_size;
        for (int ty = ty0; ty <= ty1; ++ty)
            for (int tx = tx0; tx <= tx1; ++tx) ctx.tile_lists[static_cast<std::size_t>(ty) * ctx.tiles_x + tx].push_back(gi);
    }
    return ctx;
}

RenderOutput rasterize(const GaussianCloud &cloud, const Camera &camera, const RasterOptions &options) {
    RasterContext ctx;
    return rasterize(cloud, camera, options, ctx);
}

RenderOutput rasterize(const GaussianCloud &cloud, const Camera &camera, const RasterOptions &options,
                       RasterContext &context) {
    context = prepare_raster(cloud, camera, options);
    RenderOutput out = blank_output(cloud, camera);
    out.diagnostics = context.diagnostics;
    const double q_max = max_mahalanobis(options);
    const int ts = options.tile_size;

    parallel_for(context.tile_lists.size(), options.threads, [&](std::size_t t) {
        const auto &list = context.tile_lists[t];
        const int tx = static_cast<int>(t % context.tiles_x), ty = static_cast<int>(t / context.tiles_x);
        PixelAccumulator acc;
        for (int y = ty * ts; y < std::min(context.height, (ty + 1) * ts); ++y) {
            for (int x = tx * ts; x < std::min(context.width, (tx + 1) * ts); ++x) {
                acc.transmittance = 1.0;
                acc.rgb[0] = acc.rgb[1] = acc.rgb[2] = 0.0;
                acc.depth = 0.0;
                acc.feat.assign(cloud.feature_channels, 0.0);
                for (int gi : list) {
                    if (!composite(cloud, context.splats[gi], gi, x, y, q_max, options, acc)) continue;
                    if (acc.transmittance < options.transmittance_floor) break;
                }
                store_pixel(out, x, y, acc);
            }
        }
    });
    return out;
}

RenderOutput reference_rasterize(const GaussianCloud &cloud, const Camera &camera, const RasterOptions &options) {
    const RasterContext ctx = prepare_raster(cloud, camera, options);
    RenderOutput out = blank_output(cloud, camera);
    out.diagnostics = ctx.diagnostics;
    const double q_max = max_mahalanobis(options);
    PixelAccumulator acc;
    for (int y = 0; y < ctx.height; ++y) {
        for (int x = 0; x < ctx.width; ++x) {
            acc.transmittance = 1.0;
            acc.rgb[0] = acc.rgb[1] = acc.rgb[2] = 0.0;
            acc.depth = 0.0;
            acc.feat.assign(cloud.feature_channels, 0.0);
            bool saturated = false;
            for (int gi : ctx.order) {
                // Splats past the transmittance floor are visited but contribute nothing.
                if (saturated) continue;
                if (composite(cloud, ctx.splats[gi], gi, x, y, q_max, options, acc))
                    saturated = acc.transmittance < options.transmittance_floor;
            }
            store_pixel(out, x, y, acc);
        }
    }
    return out;
}

void RenderGradients::resize(const GaussianCloud &cloud) {
    const std::size_t n = cloud.size();
    mean.assign(n, Eigen::Vector3d::Zero());
    opacity.assign(n, 0.0);
    scale.assign(n, Eigen::Vector3d::Zero());
    rotation.assign(n, Eigen::Vector4d::Zero());
    sh.assign(n, std::vector<double>(3 * sh_basis_count(cloud.sh_degree), 0.0));
    feature.assign(n, std::vector<double>(cloud.feature_channels, 0.0));
}

namespace {

// Screen-space partials of one splat.
struct SplatGrad2D {
    Eigen::Vector2d mean2d = Eigen::Vector2d::Zero();
    double conic[3] = {0, 0, 0};
    double opacity = 0.0;
    Eigen::Vector3d color = Eigen::Vector3d::Zero();
    std::vector<double> feature;

    void add(const SplatGrad2D &o) {
        mean2d += o.mean2d;
        for (int k = 0; k < 3; ++k) conic[k] += o.conic[k];
        opacity += o.opacity;
        color += o.color;
        for (std::size_t c = 0; c < feature.size(); ++c) feature[c] += o.feature[c];
    }
};

struct Contributor {
    int slot;  // position in the tile list
    int gi;
    double w, transmittance, gauss, dx, dy;
    bool clipped;
};

// Backpropagates screen-space partials of one Gaussian to its parameters.
void backward_gaussian(const Gaussian &g, int sh_degree, const SplatProjection &s, const SplatGrad2D &d2,
                       const Camera &camera, RenderGradients &out, std::size_t i) {
    const Intrinsics &K = camera.intrinsics;
    const Eigen::Matrix3d &W = camera.pose.rotation;

    out.opacity[i] = d2.opacity;
    out.feature[i] = d2.feature;

    // Color: raw = 0.5 + sum_k sh_k Y_k(dir), clamped to [0, 1].
    Eigen::Vector3d dmean = Eigen::Vector3d::Zero();
    {
        double dist = 0.0;
        const Eigen::Vector3d dir = view_direction(g.mean, camera.pose.center(), &dist);
        std::vector<double> Y;
        std::vector<Eigen::Vector3d> dY;
        sh_basis_with_gradient(dir, sh_degree, Y, dY);
        Eigen::Vector3d dcolor_raw;
        for (int c = 0; c < 3; ++c) {
            const bool clamped = s.color_raw[c] < 0.0 || s.color_raw[c] > 1.0;
            dcolor_raw[c] = clamped ? 0.0 : d2.color[c];
        }
        Eigen::Vector3d ddir = Eigen::Vector3d::Zero();
        for (std::size_t k = 0; k < Y.size(); ++k) {
            for (int c = 0; c < 3; ++c) {
                out.sh[i][3 * k + c] = dcolor_raw[c] * Y[k];
                ddir += dcolor_raw[c] * g.sh[3 * k + c] * dY[k];
            }
        }
        if (sh_degree > 0 && dist > 1e-12) {
            dmean += (ddir - dir * dir.dot(ddir)) / dist;
        }
    }

    // Conic -> cov2d: d(M^-1) = -M^-1 dM M^-1 with symmetric gradients.
    Eigen::Matrix2d conic;
    conic << s.conic[0], s.conic[1], s.conic[1], s.conic[2];
    Eigen::Matrix2d dconic;
    dconic << d2.conic[0], 0.5 * d2.conic[1], 0.5 * d2.conic[1], d2.conic[2];
    const Eigen::Matrix2d dcov2d = -conic * dconic * conic;

    // cov2d = T Sigma T^T + dilation, T = J W.
    const Eigen::Matrix<double, 2, 3> T = s.jacobian * W;
    const Eigen::Matrix3d dcov3d = T.transpose() * dcov2d * T;
    const Eigen::Matrix<double, 2, 3> dT = 2.0 * dcov2d * T * s.cov3d;
    const Eigen::Matrix<double, 2, 3> dJ = dT * W.transpose();

    const double x = s.cam_point.x(), y = s.cam_point.y(), z = s.cam_point.z();
    const double z2 = z * z, z3 = z2 * z;
    Eigen::Vector3d dcam = s.jacobian.transpose() * d2.mean2d;
    dcam.x() += dJ(0, 2) * (-K.fx / z2);
    dcam.y() += dJ(1, 2) * (-K.fy / z2);
    dcam.z() += dJ(0, 0) * (-K.fx / z2) + dJ(0, 2) * (2.0 * K.fx * x / z3) + dJ(1, 1) * (-K.fy / z2) +
                dJ(1, 2) * (2.0 * K.fy * y / z3);
    dmean += W.transpose() * dcam;
    out.mean[i] = dmean;

    // Sigma = M M^T, M = R diag(s).
    const Eigen::Vector4d qn = g.rotation.normalized();
    const Eigen::Matrix3d R = rotation_from_quaternion(g.rotation);
    const Eigen::Matrix3d M = R * g.scale.asDiagonal();
    const Eigen::Matrix3d dM = 2.0 * dcov3d * M;
    for (int k = 0; k < 3; ++k) out.scale[i][k] = dM.col(k).dot(R.col(k));
    const Eigen::Matrix3d G = dM * g.scale.asDiagonal();

    const double qw = qn[0], qx = qn[1], qy = qn[2], qz = qn[3];
    Eigen::Vector4d dq;
    dq[0] = 2.0 * (-qz * G(0, 1) + qy * G(0, 2) + qz * G(1, 0) - qx * G(1, 2) - qy * G(2, 0) + qx * G(2, 1));
    dq[1] = 2.0 * (qy * G(0, 1) + qz * G(0, 2) + qy * G(1, 0) - 2.0 * qx * G(1, 1) - qw * G(1, 2) +
                   qz * G(2, 0) + qw * G(2, 1) - 2.0 * qx * G(2, 2));
    dq[2] = 2.0 * (-2.0 * qy * G(0, 0) + qx * G(0, 1) + qw * G(0, 2) + qx * G(1, 0) + qz * G(1, 2) -
                   qw * G(2, 0) + qz * G(2, 1) - 2.0 * qy * G(2, 2));
    dq[3] = 2.0 * (-2.0 * qz * G(0, 0) - qw * G(0, 1) + qx * G(0, 2) + qw * G(1, 0) - 2.0 * qz * G(1, 1) +
                   qy * G(1, 2) + qx * G(2, 0) + qy * G(2, 1));
    out.rotation[i] = (dq - qn * qn.dot(dq)) / g.rotation.norm();
}

}  // namespace

RenderGradients rasterize_backward(const GaussianCloud &cloud, const Camera &camera, const RasterContext &context,
                                   const RenderUpstream &upstream, bool grad_stop, const RasterOptions &options) {
    const int Wd = context.width, Hd = context.height;
    const int cf = cloud.feature_channels;
    require(context.splats.size() == cloud.size(), ErrorCode::ShapeMismatch,
            "raster context does not belong to this cloud");
    const bool has_rgb = !upstream.rgb.data.empty();
    const bool has_feat = !upstream.feat.data.empty();
    if (has_rgb) {
        require(upstream.rgb.width == Wd && upstream.rgb.height == Hd && upstream.rgb.channels == 3,
                ErrorCode::ShapeMismatch, "upstream rgb gradient has the wrong shape");
    }
    if (has_feat) {
        require(upstream.feat.width == Wd && upstream.feat.height == Hd && upstream.feat.channels == cf,
                ErrorCode::ShapeMismatch, "upstream feature gradient has the wrong shape");
    }

    const double q_max = max_mahalanobis(options);
    const int ts = options.tile_size;
    require(context.tiles_x == (Wd + ts - 1) / ts, ErrorCode::InvalidArgument,
            "tile size differs from the forward pass");

    // Per-tile partials indexed like the tile list, reduced in tile order afterwards.
    std::vector<std::vector<SplatGrad2D>> tile_grads(context.tile_lists.size());
    parallel_for(context.tile_lists.size(), options.threads, [&](std::size_t t) {
        const auto &list = context.tile_lists[t];
        auto &grads = tile_grads[t];
        grads.assign(list.size(), SplatGrad2D{});
        for (auto &g : grads) g.feature.assign(cf, 0.0);
        const int tx = static_cast<int>(t % context.tiles_x), ty = static_cast<int>(t / context.tiles_x);
        std::vector<Contributor> contrib;
        std::vector<double> suffix_feat(cf);
        for (int y = ty * ts; y < std::min(Hd, (ty + 1) * ts); ++y) {
            for (int x = tx * ts; x < std::min(Wd, (tx + 1) * ts); ++x) {
                // Replay the forward pass for this pixel.
                contrib.clear();
                double T = 1.0;
                for (std::size_t slot = 0; slot < list.size(); ++slot) {
                    const int gi = list[slot];
                    const SplatProjection &s = context.splats[gi];
                    const double dx = s.mean2d.x() - x, dy = s.mean2d.y() - y;
                    const double q = s.conic[0] * dx * dx + 2.0 * s.conic[1] * dx * dy + s.conic[2] * dy * dy;
                    if (q > q_max) continue;
                    const double gauss = std::exp(-0.5 * q);
                    const double raw = cloud.gaussians[gi].opacity * gauss;
                    const bool clipped = raw > options.weight_clip;
                    const double w = clipped ? options.weight_clip : raw;
                    contrib.push_back({static_cast<int>(slot), gi, w, T, gauss, dx, dy, clipped});
                    T *= 1.0 - w;
                    if (T < options.transmittance_floor) break;
                }
                if (contrib.empty()) continue;

                double g_rgb[3] = {0, 0, 0};
                if (has_rgb)
                    for (int c = 0; c < 3; ++c) g_rgb[c] = upstream.rgb.at(x, y, c);
                std::vector<double> g_feat(cf, 0.0);
                if (has_feat)
                    for (int c = 0; c < cf; ++c) g_feat[c] = upstream.feat.at(x, y, c);

                double suffix_rgb[3] = {0, 0, 0};
                std::fill(suffix_feat.begin(), suffix_feat.end(), 0.0);
                for (auto it = contrib.rbegin(); it != contrib.rend(); ++it) {
                    const SplatProjection &s = context.splats[it->gi];
                    const auto &feat = cloud.gaussians[it->gi].feature;
                    SplatGrad2D &gd = grads[it->slot];
                    const double wt = it->w * it->transmittance;
                    const double inv_keep = 1.0 / (1.0 - it->w);

                    double dw_rgb = 0.0;
                    for (int c = 0; c < 3; ++c) {
                        dw_rgb += g_rgb[c] * (s.color[c] * it->transmittance - suffix_rgb[c] * inv_keep);
                        gd.color[c] += g_rgb[c] * wt;
                        suffix_rgb[c] += s.color[c] * wt;
                    }
                    double dw_feat = 0.0;
                    for (int c = 0; c < cf; ++c) {
                        dw_feat += g_feat[c] * (feat[c] * it->transmittance - suffix_feat[c] * inv_keep);
                        gd.feature[c] += g_feat[c] * wt;
                        suffix_feat[c] += feat[c] * wt;
                    }
                    const double dw = grad_stop ? dw_rgb : dw_rgb + dw_feat;
                    if (it->clipped || dw == 0.0) continue;

                    const double opacity = cloud.gaussians[it->gi].opacity;
                    gd.opacity += dw * it->gauss;
                    const double dq = -0.5 * it->gauss * opacity * dw;
                    const double dx = it->dx, dy = it->dy;
                    gd.mean2d.x() += dq * 2.0 * (s.conic[0] * dx + s.conic[1] * dy);
                    gd.mean2d.y() += dq * 2.0 * (s.conic[1] * dx + s.conic[2] * dy);
                    gd.conic[0] += dq * dx * dx;
                    gd.conic[1] += dq * 2.0 * dx * dy;
                    gd.conic[2] += dq * dy * dy;
                }
            }
        }
    });

    std::vector<SplatGrad2D> per_splat(cloud.size());
    for (auto &g : per_splat) g.feature.assign(cf, 0.0);
    for (std::size_t t = 0; t < context.tile_lists.size(); ++t) {
        const auto &list = context.tile_lists[t];
        for (std::size_t slot = 0; slot < list.size(); ++slot) per_splat[list[slot]].add(tile_grads[t][slot]);
    }

    RenderGradients out;
    out.resize(cloud);
    parallel_for(context.order.size(), options.threads, [&](std::size_t k) {
        const int gi = context.order[k];
        backward_gaussian(cloud.gaussians[gi], cloud.sh_degree, context.splats[gi], per_splat[gi], camera, out,
                          static_cast<std::size_t>(gi));
    });
    return out;
}

}  // namespace sparseview
