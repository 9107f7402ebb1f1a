#include "sparseview/costvolume.hpp"

#include <algorithm>
#include <cmath>

#include "sparseview/error.hpp"
#include "sparseview/image.hpp"

namespace sparseview {

CorrelationSlice correlate(const FeatureMap &warped, const FeatureMap &reference,
                           const std::vector<std::uint8_t> *warped_valid) {
    require(warped.same_shape(reference), ErrorCode::ShapeMismatch,
            "correlation needs feature maps of identical shape");
    require(reference.channels >= 1, ErrorCode::ShapeMismatch, "feature maps have no channels");
    const std::size_t n = reference.plane_size();
    if (warped_valid) {
        require(warped_valid->size() == n, ErrorCode::ShapeMismatch, "validity mask size mismatch");
    }
    CorrelationSlice slice{reference.height, reference.width, std::vector<double>(n, 0.0),
                           std::vector<std::uint8_t>(n, 1)};
    const double inv_sqrt_c = 1.0 / std::sqrt(static_cast<double>(reference.channels));
    for (std::size_t p = 0; p < n; ++p) {
        if (warped_valid && !(*warped_valid)[p]) {
            slice.valid[p] = 0;
            continue;
        }
        double dot = 0.0;
        for (int c = 0; c < reference.channels; ++c) dot += warped.data[c * n + p] * reference.data[c * n + p];
        slice.values[p] = dot * inv_sqrt_c;
    }
    return slice;
}

CostVolume build_cost_volume(int view, const std::vector<FeatureMap> &features,
                             const LocalGroup &group, const DepthPlanes &planes,
                             const std::vector<Camera> &cameras) {
    const int n_views = static_cast<int>(features.size());
    require(view >= 0 && view < n_views, ErrorCode::InvalidArgument, "reference view out of range");
    require(cameras.size() == features.size(), ErrorCode::ShapeMismatch,
            "one camera per feature map is required");
    require(static_cast<int>(group.neighbors.size()) == n_views, ErrorCode::ShapeMismatch,
            "local group does not cover every view");
    require(planes.count() >= 2, ErrorCode::InvalidArgument, "cost volume needs at least two planes");
    const auto &neighbors = group.neighbors[view];
    require(!neighbors.empty(), ErrorCode::InvalidArgument, "reference view has no neighbours");

    const FeatureMap &ref = features[view];
    CostVolume vol;
    vol.view_index = view;
    vol.planes = planes;
    vol.height = ref.height;
    vol.width = ref.width;
    const std::size_t n = ref.plane_size();
    vol.data.assign(n * planes.count(), 0.0);
    vol.validity.assign(n * planes.count(), 0.0);

    std::vector<double> sum(n), hits(n);
    for (int m = 0; m < planes.count(); ++m) {
        std::fill(sum.begin(), sum.end(), 0.0);
        std::fill(hits.begin(), hits.end(), 0.0);
        for (int j : neighbors) {
            require(j >= 0 && j < n_views && j != view, ErrorCode::InvalidArgument,
                    "invalid neighbour index");
            const WarpResult warp = plane_sweep_warp(features[j], cameras[view], cameras[j], planes.values[m]);
            const CorrelationSlice slice = correlate(warp.features, ref, &warp.valid);
            for (std::size_t p = 0; p < n; ++p) {
                if (!slice.valid[p]) continue;
                sum[p] += slice.values[p];
                hits[p] += 1.0;
            }
        }
        for (std::size_t p = 0; p < n; ++p) {
            vol.data[m * n + p] = hits[p] > 0.0 ? sum[p] / hits[p] : 0.0;
            vol.validity[m * n + p] = hits[p] / neighbors.size();
        }
    }
    return vol;
}

DepthMap depth_from_volume(const CostVolume &volume) {
    const int L = volume.planes.count();
    require(L >= 1 && volume.data.size() == static_cast<std::size_t>(L) * volume.height * volume.width,
            ErrorCode::ShapeMismatch, "cost volume shape is inconsistent with its planes");
    DepthMap out;
    out.height = volume.height;
    out.width = volume.width;
    out.near = volume.planes.near;
    out.far = volume.planes.far;
    const std::size_t n = static_cast<std::size_t>(volume.height) * volume.width;
    out.depth.resize(n);
    out.confidence.resize(n);
    std::vector<double> weights(L);
    for (std::size_t p = 0; p < n; ++p) {
        double peak = -INFINITY;
        for (int m = 0; m < L; ++m) peak = std::max(peak, volume.data[m * n + p]);
        double total = 0.0;
        for (int m = 0; m < L; ++m) {
            weights[m] = std::exp(volume.data[m * n + p] - peak);
            total += weights[m];
        }
        double depth = 0.0, best = 0.0;
        for (int m = 0; m < L; ++m) {
            const double w = weights[m] / total;
            depth += w * volume.planes.values[m];
            best = std::max(best, w);
        }
        out.depth[p] = std::clamp(depth, volume.planes.near, volume.planes.far);
        out.confidence[p] = best;
    }
    return out;
}

DepthMap upsample_depth(const DepthMap &depth, int width, int height) {
    Image packed(depth.width, depth.height, 2);
    for (std::size_t p = 0; p < depth.depth.size(); ++p) {
        packed.data[2 * p] = depth.depth[p];
        packed.data[2 * p + 1] = depth.confidence[p];
    }
    const Image up = resize_bilinear(packed, width, height);
    DepthMap out;
    out.width = width;
    out.height = height;
    out.near = depth.near;
    out.far = depth.far;
    out.depth.resize(up.pixel_count());
    out.confidence.resize(up.pixel_count());
    for (std::size_t p = 0; p < up.pixel_count(); ++p) {
        out.depth[p] = up.data[2 * p];
        out.confidence[p] = up.data[2 * p + 1];
    }
    return out;
}

}  // namespace sparseview
