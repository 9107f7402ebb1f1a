#pragma once

#include <cstddef>
#include <vector>

namespace sparseview {

/// Planar C×H×W grid of per-pixel feature vectors for one view.
struct FeatureMap {
    int channels = 0;
    int height = 0;
    int width = 0;
    int view_index = -1;
    std::vector<double> data;

    FeatureMap() = default;
    FeatureMap(int c, int h, int w, double fill = 0.0, int view = -1)
        : channels(c), height(h), width(w), view_index(view),
          data(static_cast<std::size_t>(c) * h * w, fill) {}

    std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }
    std::size_t index(int c, int y, int x) const {
        return static_cast<std::size_t>(c) * plane_size() + static_cast<std::size_t>(y) * width + x;
    }
    double &at(int c, int y, int x) { return data[index(c, y, x)]; }
    double at(int c, int y, int x) const { return data[index(c, y, x)]; }

    bool same_shape(const FeatureMap &o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }
};

}  // namespace sparseview
