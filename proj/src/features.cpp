#include "sparseview/features.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>

#include "sparseview/error.hpp"

namespace sparseview {

FeatureMap BlockStatsExtractor::extract(const Image &image, int scale) const {
    require(image.channels == 3, ErrorCode::ShapeMismatch, "feature extraction needs an RGB image");
    require(scale >= 1 && image.width % scale == 0 && image.height % scale == 0,
            ErrorCode::InvalidArgument, "scale must divide the image size");
    const int W = image.width / scale;
    const int H = image.height / scale;
    const Image luma = to_luma(image);
    auto L = [&](int x, int y) {
        x = std::clamp(x, 0, image.width - 1);
        y = std::clamp(y, 0, image.height - 1);
        return luma.data[static_cast<std::size_t>(y) * image.width + x];
    };

    FeatureMap out(8, H, W);
    const double inv_n = 1.0 / (scale * scale);
    for (int by = 0; by < H; ++by) {
        for (int bx = 0; bx < W; ++bx) {
            double sum[3] = {0, 0, 0}, sum_sq[3] = {0, 0, 0};
            double gx = 0.0, gy = 0.0;
            for (int dy = 0; dy < scale; ++dy) {
                for (int dx = 0; dx < scale; ++dx) {
                    const int x = bx * scale + dx, y = by * scale + dy;
                    for (int c = 0; c < 3; ++c) {
                        const double v = image.at(x, y, c);
                        sum[c] += v;
                        sum_sq[c] += v * v;
                    }
                    gx += std::abs(L(x + 1, y) - L(x - 1, y)) * 0.5;
                    gy += std::abs(L(x, y + 1) - L(x, y - 1)) * 0.5;
                }
            }
            for (int c = 0; c < 3; ++c) {
                const double mean = sum[c] * inv_n;
                out.at(c, by, bx) = mean;
                out.at(5 + c, by, bx) = std::max(0.0, sum_sq[c] * inv_n - mean * mean);
            }
            out.at(3, by, bx) = gx * inv_n;
            out.at(4, by, bx) = gy * inv_n;
        }
    }
    return out;
}

namespace {

struct Registry {
    std::mutex mutex;
    std::map<std::string, ExtractorFactory> factories{
        {"block-stats", [] { return std::make_unique<BlockStatsExtractor>(); }}};
};

Registry &registry() {
    static Registry r;
    return r;
}

}  // namespace

void register_extractor(const std::string &name, ExtractorFactory factory) {
    auto &r = registry();
    std::lock_guard<std::mutex> lock(r.mutex);
    r.factories[name] = std::move(factory);
}

std::unique_ptr<FeatureExtractor> make_extractor(const std::string &name) {
    auto &r = registry();
    std::lock_guard<std::mutex> lock(r.mutex);
    auto it = r.factories.find(name);
    require(it != r.factories.end(), ErrorCode::InvalidArgument, "unknown feature extractor: " + name);
    return it->second();
}

std::vector<std::string> registered_extractors() {
    auto &r = registry();
    std::lock_guard<std::mutex> lock(r.mutex);
    std::vector<std::string> names;
    for (const auto &[name, _] : r.factories) names.push_back(name);
    return names;
}

FeatureMap extract_features(const Image &image, int scale) {
    return BlockStatsExtractor{}.extract(image, scale);
}

FeatureMap normalize_descriptors(const FeatureMap &features, double gain) {
    FeatureMap out = features;
    const std::size_t n = features.plane_size();
    for (int c = 0; c < features.channels; ++c) {
        double *plane = out.data.data() + static_cast<std::size_t>(c) * n;
        const double mean = std::accumulate(plane, plane + n, 0.0) / n;
        double var = 0.0;
        for (std::size_t p = 0; p < n; ++p) var += (plane[p] - mean) * (plane[p] - mean);
        const double sd = std::sqrt(var / n);
        for (std::size_t p = 0; p < n; ++p) plane[p] = sd > 1e-12 ? (plane[p] - mean) / sd : 0.0;
    }
    for (std::size_t p = 0; p < n; ++p) {
        double norm2 = 0.0;
        for (int c = 0; c < features.channels; ++c) norm2 += out.data[c * n + p] * out.data[c * n + p];
        if (norm2 <= 1e-24) {
            for (int c = 0; c < features.channels; ++c) out.data[c * n + p] = 0.0;
            continue;
        }
        const double s = gain / std::sqrt(norm2);
        for (int c = 0; c < features.channels; ++c) out.data[c * n + p] *= s;
    }
    return out;
}

LocalGroup local_group(const std::vector<Eigen::Vector3d> &camera_positions, int k) {
    const int n = static_cast<int>(camera_positions.size());
    require(n >= 2, ErrorCode::InvalidArgument, "local grouping needs at least two views");
    require(k >= 1, ErrorCode::InvalidArgument, "group size must be positive");
    const int take = std::min(k, n - 1);
    LocalGroup group;
    group.neighbors.resize(n);
    for (int i = 0; i < n; ++i) {
        std::vector<std::pair<double, int>> others;
        for (int j = 0; j < n; ++j) {
            if (j != i) others.emplace_back((camera_positions[i] - camera_positions[j]).squaredNorm(), j);
        }
        std::sort(others.begin(), others.end());
        for (int m = 0; m < take; ++m) group.neighbors[i].push_back(others[m].second);
    }
    return group;
}

}  // namespace sparseview
