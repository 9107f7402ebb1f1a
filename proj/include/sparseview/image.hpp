#pragma once

#include <cstddef>
#include <vector>

namespace sparseview {

/// Dense row-major image with interleaved channels (H×W×C).
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h, int c, double fill = 0.0);

    std::size_t index(int x, int y, int c) const {
        return (static_cast<std::size_t>(y) * width + x) * channels + c;
    }
    double &at(int x, int y, int c) { return data[index(x, y, c)]; }
    double at(int x, int y, int c) const { return data[index(x, y, c)]; }

    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
    bool same_shape(const Image &other) const {
        return width == other.width && height == other.height && channels == other.channels;
    }
};

/// Bilinear resize with half-pixel centers (align_corners = false). Returns an
/// exact copy when the size is unchanged.
Image resize_bilinear(const Image &src, int width, int height);

/// Adjoint of resize_bilinear: scatters gradients of the resized image back to
/// the source grid.
Image resize_bilinear_adjoint(const Image &grad_dst, int src_width, int src_height);

/// Rec.601 luma of a 3-channel image; single-channel inputs are copied.
Image to_luma(const Image &src);

Image mirror_horizontal(const Image &src);

bool all_finite(const Image &img);

}  // namespace sparseview
