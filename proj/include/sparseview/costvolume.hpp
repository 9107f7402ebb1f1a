#pragma once

#include <cstdint>
#include <vector>

#include "sparseview/feature_map.hpp"
#include "sparseview/features.hpp"
#include "sparseview/geometry.hpp"

namespace sparseview {

/// One depth slice of correlations plus the per-pixel validity of the warp.
struct CorrelationSlice {
    int height = 0, width = 0;
    std::vector<double> values;
    std::vector<std::uint8_t> valid;
};

/// Per-pixel channel dot product scaled by 1/sqrt(C). Pixels flagged invalid in
/// `warped_valid` (if given) contribute zero.
CorrelationSlice correlate(const FeatureMap &warped, const FeatureMap &reference,
                           const std::vector<std::uint8_t> *warped_valid = nullptr);

/// L×H×W plane-sweep correlation volume for one reference view.
struct CostVolume {
    int view_index = -1;
    DepthPlanes planes;
    int height = 0, width = 0;
    std::vector<double> data;      // plane-major
    std::vector<double> validity;  // fraction of neighbours with a valid warp

    std::size_t index(int m, int y, int x) const {
        return (static_cast<std::size_t>(m) * height + y) * width + x;
    }
    double at(int m, int y, int x) const { return data[index(m, y, x)]; }
};

/// `features` and `cameras` are indexed by view; cameras must describe the
/// feature grids. Each slice is the validity-weighted mean over neighbours.
CostVolume build_cost_volume(int view, const std::vector<FeatureMap> &features,
                             const LocalGroup &group, const DepthPlanes &planes,
                             const std::vector<Camera> &cameras);

struct DepthMap {
    int height = 0, width = 0;
    double near = 0.0, far = 0.0;
    std::vector<double> depth;
    std::vector<double> confidence;

    double depth_at(int x, int y) const { return depth[static_cast<std::size_t>(y) * width + x]; }
    double confidence_at(int x, int y) const {
        return confidence[static_cast<std::size_t>(y) * width + x];
    }
};

/// Soft-argmax over planes: depth is the softmax-weighted plane depth and
/// confidence is the largest softmax weight.
DepthMap depth_from_volume(const CostVolume &volume);

/// Bilinear (half-pixel) upsampling of depth and confidence to an image grid.
DepthMap upsample_depth(const DepthMap &depth, int width, int height);

}  // namespace sparseview
